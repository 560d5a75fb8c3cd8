//! Study configuration and the seeded replication studies.
//!
//! Records are independent: each `(n, replicate)` pair gets its own seed
//! from `record_seed`, so running them serially or on a worker pool gives
//! the same report.

use std::path::PathBuf;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    kernel_l4_distance, max_gn_gap, restrict_trajectory, satisfies_apriori_bound, spacetime_l2_error,
    ErrorRecord, ErrorReport,
};
use crate::dynamics::{
    cell_average_ic, continuum_reference, integrate, InitialCondition, Model, ModelConfig, Reaction,
    ReferenceSpec, Trajectory, DEFAULT_SNAPSHOTS,
};
use crate::error::{Error, Result};
use crate::graphon::{DensitySchedule, GraphonSpec};
use crate::operators::{
    averaged_kernel_matrix, averaged_matrix_variant, galerkin_matrix, Coupling, CouplingMatrix, KernelChoice,
    Scaling,
};
use crate::sampler::{build_grid, degree_statistics, expected_degrees_variant, sample_graph, EdgeVariant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    ContinuumConvergence,
    Averaging,
    GalerkinVsAveraged,
    KernelDistance,
    DegreeLaw,
}

impl StudyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StudyKind::ContinuumConvergence => "continuum_convergence",
            StudyKind::Averaging => "averaging",
            StudyKind::GalerkinVsAveraged => "galerkin_vs_averaged",
            StudyKind::KernelDistance => "kernel_distance",
            StudyKind::DegreeLaw => "degree_law",
        }
    }
}

/// Graphon object of a config: `{"kind": …, params…, "gamma"|"rho": …}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphonConfig {
    #[serde(flatten)]
    pub spec: GraphonSpec,
    #[serde(flatten)]
    pub schedule: DensitySchedule,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    #[serde(default = "default_seed_count")]
    pub count: usize,
    #[serde(default)]
    pub master: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { count: default_seed_count(), master: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSettings {
    #[serde(default)]
    pub coupling: Coupling,
    #[serde(default)]
    pub reaction: Reaction,
    #[serde(default)]
    pub scaling: Scaling,
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Defaults to a stride giving 100 snapshots.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_stride: Option<usize>,
    #[serde(default = "default_initial")]
    pub initial: InitialCondition,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            coupling: Coupling::Identity,
            reaction: Reaction::Zero,
            scaling: Scaling::ExpectedDegree,
            horizon: default_horizon(),
            dt: default_dt(),
            output_stride: None,
            initial: default_initial(),
        }
    }
}

impl ModelSettings {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }

    pub fn stride(&self) -> usize {
        self.output_stride.unwrap_or_else(|| (self.steps() / DEFAULT_SNAPSHOTS).max(1))
    }

    pub fn lipschitz(&self) -> f64 {
        self.reaction.lipschitz().max(self.coupling.lipschitz())
    }

    /// Kernel of the continuum limit matching the scaling.
    pub fn kernel(&self) -> KernelChoice {
        match self.scaling {
            Scaling::ExpectedDegree => KernelChoice::U,
            Scaling::EdgeDensity => KernelChoice::W,
        }
    }

    pub fn config(&self, model: Model) -> ModelConfig {
        ModelConfig::new(model, self.coupling.clone(), self.reaction, self.horizon, self.dt)
            .with_scaling(self.scaling)
            .with_stride(self.stride())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub graphon: GraphonConfig,
    pub study: StudyKind,
    #[serde(default = "default_n_list")]
    pub n_list: Vec<usize>,
    #[serde(rename = "M", default = "default_reference_resolution")]
    pub reference_resolution: usize,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub variant: EdgeVariant,
    /// 1-based probe nodes for the degree-law study; default first and last.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_seed_count() -> usize {
    10
}

fn default_horizon() -> f64 {
    1.0
}

fn default_dt() -> f64 {
    1e-3
}

fn default_initial() -> InitialCondition {
    InitialCondition::SineWave { k: 1.0 }
}

fn default_n_list() -> Vec<usize> {
    vec![128, 512, 2048]
}

fn default_reference_resolution() -> usize {
    8192
}

impl StudyConfig {
    pub fn new(spec: GraphonSpec, schedule: DensitySchedule, study: StudyKind) -> Self {
        StudyConfig {
            graphon: GraphonConfig { spec, schedule },
            study,
            n_list: default_n_list(),
            reference_resolution: default_reference_resolution(),
            seeds: Seeds::default(),
            model: ModelSettings::default(),
            variant: EdgeVariant::Pointwise,
            probes: None,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn spec(&self) -> &GraphonSpec {
        &self.graphon.spec
    }

    pub fn schedule(&self) -> &DensitySchedule {
        &self.graphon.schedule
    }

    pub fn validate(&self) -> Result<()> {
        self.graphon.spec.validate()?;
        self.graphon.schedule.validate()?;
        if self.n_list.is_empty() {
            return Err(Error::Config("n_list is empty".into()));
        }
        for w in self.n_list.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config(format!("n_list must be increasing, got {:?}", self.n_list)));
            }
        }
        for &n in &self.n_list {
            if n < 2 || !n.is_power_of_two() {
                return Err(Error::Config(format!("n = {n} is not a power of two >= 2")));
            }
        }
        if self.seeds.count == 0 {
            return Err(Error::Config("seeds.count must be at least 1".into()));
        }
        let m = &self.model;
        if !(m.dt > 0.0 && m.horizon > 0.0 && m.dt <= m.horizon) {
            return Err(Error::Config(format!("need 0 < dt <= T, got dt={} T={}", m.dt, m.horizon)));
        }
        let ratio = m.horizon / m.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(Error::Config(format!("T={} is not a multiple of dt={}", m.horizon, m.dt)));
        }
        let stride = m.stride();
        if stride == 0 || !m.steps().is_multiple_of(stride) {
            return Err(Error::Config(format!("output stride {stride} does not divide {} steps", m.steps())));
        }
        match self.study {
            StudyKind::ContinuumConvergence => {
                let big = *self.n_list.last().unwrap();
                let res = self.reference_resolution;
                if !res.is_power_of_two() {
                    return Err(Error::Config(format!("M = {res} is not a power of two")));
                }
                if let Some(&n) = self.n_list.iter().find(|&&n| !res.is_multiple_of(n)) {
                    return Err(Error::Divisibility { fine: res, coarse: n });
                }
                if res < 4 * big {
                    return Err(Error::Config(format!("M = {res} must be at least 4 x largest n = {big}")));
                }
            }
            StudyKind::KernelDistance if !self.graphon.spec.integrability().l4 => {
                return Err(Error::Integrability { p: 4 });
            }
            StudyKind::DegreeLaw => {
                for &p in self.probes.iter().flatten() {
                    if p == 0 || self.n_list.iter().any(|&n| p > n) {
                        return Err(Error::Config(format!("probe {p} outside 1..=n")));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Probe nodes (1-based) for resolution `n`.
    pub fn probes_for(&self, n: usize) -> Vec<usize> {
        self.probes.clone().unwrap_or_else(|| vec![1, n])
    }
}

/// Seed of replicate `replicate` at resolution `n`.
///
/// First output word of ChaCha8 keyed by the master seed, on stream `n`,
/// starting at word `2·replicate`.
pub fn record_seed(master: u64, n: usize, replicate: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(n as u64);
    rng.set_word_pos(2 * replicate as u128);
    rng.next_u64()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

fn map_records<T, F>(items: Vec<T>, exec: Execution, f: F) -> Vec<ErrorRecord>
where
    T: Send,
    F: Fn(T) -> ErrorRecord + Sync + Send,
{
    match exec {
        Execution::Serial => items.into_iter().map(f).collect(),
        Execution::Parallel => items.into_par_iter().map(f).collect(),
    }
}

fn record_jobs(cfg: &StudyConfig) -> Vec<(usize, u64)> {
    cfg.n_list
        .iter()
        .flat_map(|&n| (0..cfg.seeds.count).map(move |r| (n, record_seed(cfg.seeds.master, n, r))))
        .collect()
}

fn report(cfg: &StudyConfig, records: Vec<ErrorRecord>) -> ErrorReport {
    ErrorReport::new(
        cfg.study.name(),
        cfg.graphon.spec.clone(),
        cfg.graphon.schedule.gamma(),
        cfg.model.horizon,
        cfg.reference_resolution,
        records,
    )
}

fn initial_state(cfg: &StudyConfig, n: usize) -> Result<Vec<f64>> {
    Ok(cell_average_ic(&cfg.model.initial, &build_grid(n)?))
}

/// Integrates and flags a trajectory that breaks the a priori sup bound.
fn integrate_checked(cfg: &StudyConfig, model: Model, u0: &[f64]) -> Result<Trajectory> {
    let traj = integrate(&cfg.model.config(model), u0)?;
    let g_sup = cfg.model.initial.sup_norm();
    if !satisfies_apriori_bound(&traj, cfg.model.lipschitz(), cfg.model.horizon, g_sup) {
        return Err(Error::AssumptionViolation(format!(
            "sup norm {} exceeds the a priori bound",
            traj.max_sup_norm()
        )));
    }
    Ok(traj)
}

fn sampled_trajectory(cfg: &StudyConfig, n: usize, seed: u64) -> Result<Trajectory> {
    let graph = sample_graph(cfg.spec(), cfg.schedule(), n, seed, cfg.variant)?;
    integrate_checked(cfg, Model::Sampled(Arc::new(graph)), &initial_state(cfg, n)?)
}

/// The deterministic operator the sampled model averages to.
fn averaged_operator(cfg: &StudyConfig, n: usize) -> Result<CouplingMatrix> {
    match cfg.model.scaling {
        Scaling::ExpectedDegree => averaged_matrix_variant(cfg.spec(), cfg.schedule(), n, cfg.variant),
        Scaling::EdgeDensity => averaged_kernel_matrix(cfg.spec(), cfg.schedule(), n, cfg.variant),
    }
}

fn record_from(n: usize, seed: u64, r: Result<ErrorRecord>) -> ErrorRecord {
    r.unwrap_or_else(|e| ErrorRecord::failure(n, seed, e.to_string()))
}

/// The reference trajectory at resolution M.
pub fn reference_trajectory(cfg: &StudyConfig) -> Result<Trajectory> {
    continuum_reference(&ReferenceSpec {
        graphon: cfg.spec().clone(),
        kernel: cfg.model.kernel(),
        initial: cfg.model.initial,
        reaction: cfg.model.reaction,
        coupling: cfg.model.coupling.clone(),
        resolution: cfg.reference_resolution,
        horizon: cfg.model.horizon,
        dt: cfg.model.dt,
        output_stride: cfg.model.stride(),
    })
}

/// Sampled model vs the fine Galerkin reference restricted to each n.
pub fn run_continuum_convergence(cfg: &StudyConfig, exec: Execution) -> Result<ErrorReport> {
    cfg.validate()?;
    let reference = reference_trajectory(cfg)?;
    let mut restricted = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        restricted.push((n, restrict_trajectory(&reference, n)?));
    }
    let records = map_records(record_jobs(cfg), exec, |(n, seed)| {
        let coarse = &restricted.iter().find(|(m, _)| *m == n).unwrap().1;
        record_from(
            n,
            seed,
            sampled_trajectory(cfg, n, seed).and_then(|traj| {
                let mut r = ErrorRecord::new(n, seed);
                r.spacetime_l2 = Some(spacetime_l2_error(&traj, coarse)?);
                Ok(r)
            }),
        )
    });
    Ok(report(cfg, records))
}

/// Sampled vs averaged model, `max_t ‖u − v‖_G`.
pub fn run_averaging(cfg: &StudyConfig, exec: Execution) -> Result<ErrorReport> {
    cfg.validate()?;
    let mut averaged = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let m = Arc::new(averaged_operator(cfg, n)?);
        let traj = integrate_checked(cfg, Model::Averaged(m.clone()), &initial_state(cfg, n)?)?;
        averaged.push((n, m, traj));
    }
    let records = map_records(record_jobs(cfg), exec, |(n, seed)| {
        let (_, m, avg) = averaged.iter().find(|(k, _, _)| *k == n).unwrap();
        record_from(
            n,
            seed,
            sampled_trajectory(cfg, n, seed).and_then(|traj| {
                let mut r = ErrorRecord::new(n, seed);
                r.sup_gn_gap = Some(max_gn_gap(&traj, avg, &m.node_weights)?);
                Ok(r)
            }),
        )
    });
    Ok(report(cfg, records))
}

/// Averaged vs Galerkin model; deterministic, one record per n with seed 0.
pub fn run_galerkin_vs_averaged(cfg: &StudyConfig, exec: Execution) -> Result<ErrorReport> {
    cfg.validate()?;
    let records = map_records(cfg.n_list.clone(), exec, |n| {
        record_from(
            n,
            0,
            (|| {
                let u0 = initial_state(cfg, n)?;
                let avg = Arc::new(averaged_operator(cfg, n)?);
                let gal = Arc::new(galerkin_matrix(cfg.spec(), n, cfg.model.kernel())?);
                let a = integrate_checked(cfg, Model::Averaged(avg.clone()), &u0)?;
                let g = integrate_checked(cfg, Model::Galerkin(gal), &u0)?;
                let mut r = ErrorRecord::new(n, 0);
                r.sup_gn_gap = Some(max_gn_gap(&a, &g, &avg.node_weights)?);
                Ok(r)
            })(),
        )
    });
    Ok(report(cfg, records))
}

/// `‖Uₙ − Vₙ‖_{L⁴}` per n.
pub fn run_kernel_distance(cfg: &StudyConfig, exec: Execution) -> Result<ErrorReport> {
    cfg.validate()?;
    let records = map_records(cfg.n_list.clone(), exec, |n| {
        record_from(
            n,
            0,
            kernel_l4_distance(cfg.spec(), cfg.schedule(), n).map(|d| {
                let mut r = ErrorRecord::new(n, 0);
                r.kernel_l4 = Some(d);
                r
            }),
        )
    });
    Ok(report(cfg, records))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeDegree {
    /// 1-based node index.
    pub node: usize,
    pub mean_degree: f64,
    /// `(1-α) n^{1+α-γ} i^{-α}` for power-law kernels.
    pub predicted: Option<f64>,
    /// Exact `dᵢ` from the truncated kernel.
    pub expected: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeLawEntry {
    pub n: usize,
    pub seeds: usize,
    pub probes: Vec<ProbeDegree>,
    pub mean_density: f64,
    /// `n^{-γ} · ∫∫W`.
    pub predicted_density: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeLawReport {
    pub study: String,
    pub graphon: GraphonSpec,
    pub gamma: Option<f64>,
    pub entries: Vec<DegreeLawEntry>,
}

impl DegreeLawReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Monte-Carlo degrees at probe nodes and the empirical edge density.
pub fn run_degree_law(cfg: &StudyConfig, exec: Execution) -> Result<DegreeLawReport> {
    cfg.validate()?;
    let spec = cfg.spec();
    let mut entries = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let probes = cfg.probes_for(n);
        let seeds: Vec<u64> = (0..cfg.seeds.count).map(|r| record_seed(cfg.seeds.master, n, r)).collect();
        let one = |seed: u64| -> Result<(Vec<usize>, f64)> {
            let g = sample_graph(spec, cfg.schedule(), n, seed, cfg.variant)?;
            let stats = degree_statistics(&g);
            Ok((probes.iter().map(|&p| stats.degrees[p - 1]).collect(), stats.density))
        };
        let samples: Vec<(Vec<usize>, f64)> = match exec {
            Execution::Serial => seeds.into_iter().map(one).collect::<Result<_>>()?,
            Execution::Parallel => seeds.into_par_iter().map(one).collect::<Result<_>>()?,
        };
        let count = samples.len() as f64;
        let expected = expected_degrees_variant(spec, cfg.schedule(), n, cfg.variant)?;
        let rho = cfg.schedule().rho(n);
        let nf = n as f64;
        let probe_stats = probes
            .iter()
            .enumerate()
            .map(|(k, &node)| {
                let total: usize = samples.iter().map(|(d, _)| d[k]).sum();
                let predicted = match (spec, cfg.schedule().gamma()) {
                    (GraphonSpec::PowerLaw { alpha }, Some(gamma)) => {
                        Some((1.0 - alpha) * nf.powf(1.0 + alpha - gamma) * (node as f64).powf(-alpha))
                    }
                    _ => None,
                };
                ProbeDegree { node, mean_degree: total as f64 / count, predicted, expected: expected[node - 1] }
            })
            .collect();
        entries.push(DegreeLawEntry {
            n,
            seeds: samples.len(),
            probes: probe_stats,
            mean_density: samples.iter().map(|(_, d)| d).sum::<f64>() / count,
            predicted_density: rho * spec.total_mass(),
        });
    }
    Ok(DegreeLawReport {
        study: cfg.study.name().to_string(),
        graphon: spec.clone(),
        gamma: cfg.schedule().gamma(),
        entries,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StudyOutput {
    Errors(ErrorReport),
    DegreeLaw(DegreeLawReport),
}

impl StudyOutput {
    pub fn to_json(&self) -> Result<String> {
        match self {
            StudyOutput::Errors(r) => r.to_json(),
            StudyOutput::DegreeLaw(r) => r.to_json(),
        }
    }

    pub fn error_report(&self) -> Option<&ErrorReport> {
        match self {
            StudyOutput::Errors(r) => Some(r),
            StudyOutput::DegreeLaw(_) => None,
        }
    }
}

pub fn run_study(cfg: &StudyConfig, exec: Execution) -> Result<StudyOutput> {
    Ok(match cfg.study {
        StudyKind::ContinuumConvergence => StudyOutput::Errors(run_continuum_convergence(cfg, exec)?),
        StudyKind::Averaging => StudyOutput::Errors(run_averaging(cfg, exec)?),
        StudyKind::GalerkinVsAveraged => StudyOutput::Errors(run_galerkin_vs_averaged(cfg, exec)?),
        StudyKind::KernelDistance => StudyOutput::Errors(run_kernel_distance(cfg, exec)?),
        StudyKind::DegreeLaw => StudyOutput::DegreeLaw(run_degree_law(cfg, exec)?),
    })
}
