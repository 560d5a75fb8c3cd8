//! Fixed-step RK4 integration of the sampled, averaged and Galerkin models.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphon::GraphonSpec;
use crate::operators::{
    apply_coupling_into, apply_sampled_scaled_into, galerkin_matrix, sampled_scale, Coupling,
    CouplingMatrix, KernelChoice, Scaling,
};
use crate::sampler::{build_grid, Grid, SampledGraph};

/// States larger than this abort the integration.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

pub const DEFAULT_SNAPSHOTS: usize = 100;

/// Pointwise reaction term `f`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reaction {
    #[default]
    Zero,
    /// `a + b·u`.
    Affine { a: f64, b: f64 },
    /// `κ·sin u`.
    SineScaled { kappa: f64 },
}

impl Reaction {
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Reaction::Zero => 0.0,
            Reaction::Affine { a, b } => a + b * u,
            Reaction::SineScaled { kappa } => kappa * u.sin(),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            Reaction::Zero => 0.0,
            Reaction::Affine { b, .. } => b.abs(),
            Reaction::SineScaled { kappa } => kappa.abs(),
        }
    }
}

/// Bounded initial profile `g` on (0,1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Constant { c: f64 },
    /// `g(x) = x`.
    Linear,
    /// `g(x) = sin(2πkx)`.
    SineWave { k: f64 },
    /// Indicator of `[a, b)`.
    Indicator { a: f64, b: f64 },
}

impl InitialCondition {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            InitialCondition::Constant { c } => c,
            InitialCondition::Linear => x,
            InitialCondition::SineWave { k } => (2.0 * PI * k * x).sin(),
            InitialCondition::Indicator { a, b } => {
                if x >= a && x < b {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match *self {
            InitialCondition::Constant { c } => c.abs(),
            InitialCondition::Linear => 1.0,
            InitialCondition::SineWave { k } => {
                if k == 0.0 {
                    0.0
                } else if k.abs() >= 0.25 {
                    1.0
                } else {
                    (2.0 * PI * k.abs()).sin()
                }
            }
            InitialCondition::Indicator { a, b } => {
                if b.min(1.0) > a.max(0.0) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `∫_{x0}^{x1} g`.
    fn integral(&self, x0: f64, x1: f64) -> f64 {
        match *self {
            InitialCondition::Constant { c } => c * (x1 - x0),
            InitialCondition::Linear => 0.5 * (x1 * x1 - x0 * x0),
            InitialCondition::SineWave { k } => {
                if k == 0.0 {
                    0.0
                } else {
                    let w = 2.0 * PI * k;
                    ((w * x0).cos() - (w * x1).cos()) / w
                }
            }
            InitialCondition::Indicator { a, b } => (x1.min(b) - x0.max(a)).max(0.0),
        }
    }
}

/// Exact cell averages `n ∫_{Iᵢ} g`.
pub fn cell_average_ic(g: &InitialCondition, grid: &Grid) -> Vec<f64> {
    let nf = grid.n() as f64;
    (0..grid.n())
        .map(|i| {
            let (x0, x1) = grid.cell(i);
            nf * g.integral(x0, x1)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub enum Model {
    Sampled(Arc<SampledGraph>),
    Averaged(Arc<CouplingMatrix>),
    Galerkin(Arc<CouplingMatrix>),
}

impl Model {
    pub fn n(&self) -> usize {
        match self {
            Model::Sampled(g) => g.n,
            Model::Averaged(m) | Model::Galerkin(m) => m.n,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Sampled(_) => "sampled",
            Model::Averaged(_) => "averaged",
            Model::Galerkin(_) => "galerkin",
        }
    }

    pub fn node_weights(&self) -> &[f64] {
        match self {
            Model::Sampled(g) => &g.node_weights,
            Model::Averaged(m) | Model::Galerkin(m) => &m.node_weights,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModelConfig {
    pub model: Model,
    pub coupling: Coupling,
    pub reaction: Reaction,
    /// Only read by the sampled model.
    pub scaling: Scaling,
    pub horizon: f64,
    pub dt: f64,
    pub output_stride: usize,
}

impl ModelConfig {
    /// Config with `DEFAULT_SNAPSHOTS` snapshots over `[0, horizon]`.
    pub fn new(model: Model, coupling: Coupling, reaction: Reaction, horizon: f64, dt: f64) -> Self {
        let steps = (horizon / dt).round().max(1.0) as usize;
        let output_stride = (steps / DEFAULT_SNAPSHOTS).max(1);
        ModelConfig {
            model,
            coupling,
            reaction,
            scaling: Scaling::ExpectedDegree,
            horizon,
            dt,
            output_stride,
        }
    }

    pub fn with_scaling(mut self, scaling: Scaling) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.output_stride = stride;
        self
    }

    /// `max(L_f, L_D)`.
    pub fn lipschitz(&self) -> f64 {
        self.reaction.lipschitz().max(self.coupling.lipschitz())
    }

    pub fn fingerprint(&self) -> String {
        format!(
            "model={} n={} coupling={} reaction={:?} scaling={:?} T={} dt={} stride={}",
            self.model.kind(),
            self.model.n(),
            self.coupling.name(),
            self.reaction,
            self.scaling,
            self.horizon,
            self.dt,
            self.output_stride
        )
    }

    fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.horizon > 0.0 && self.dt <= self.horizon) {
            return Err(Error::Config(format!(
                "need 0 < dt <= T, got dt={} T={}",
                self.dt, self.horizon
            )));
        }
        let ratio = self.horizon / self.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Config(format!("T={} is not a multiple of dt={}", self.horizon, self.dt)));
        }
        let steps = steps as usize;
        if self.output_stride == 0 || !steps.is_multiple_of(self.output_stride) {
            return Err(Error::Config(format!(
                "output stride {} does not divide {} steps",
                self.output_stride, steps
            )));
        }
        Ok(steps)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub n: usize,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub fingerprint: String,
    pub sup_norms: Vec<f64>,
    /// `‖u‖_{G}` with the model's node weights.
    pub weighted_norms: Vec<f64>,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one snapshot")
    }

    pub fn max_sup_norm(&self) -> f64 {
        self.sup_norms.iter().copied().fold(0.0, f64::max)
    }
}

/// Right-hand side evaluator with preallocated scratch.
struct Rhs<'a> {
    config: &'a ModelConfig,
    scale: Option<Vec<f64>>,
}

impl<'a> Rhs<'a> {
    fn new(config: &'a ModelConfig) -> Result<Self> {
        let scale = match &config.model {
            Model::Sampled(g) => Some(sampled_scale(g, config.scaling)?),
            _ => None,
        };
        Ok(Rhs { config, scale })
    }

    fn eval(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        let c = self.config;
        match &c.model {
            Model::Sampled(g) => {
                apply_sampled_scaled_into(g, self.scale.as_deref().unwrap(), u, &c.coupling, out)?
            }
            Model::Averaged(m) | Model::Galerkin(m) => apply_coupling_into(m, u, &c.coupling, out)?,
        }
        if !matches!(c.reaction, Reaction::Zero) {
            for (o, &x) in out.iter_mut().zip(u) {
                *o += c.reaction.eval(x);
            }
        }
        Ok(())
    }
}

/// Coupling term plus reaction.
pub fn rhs(config: &ModelConfig, u: &[f64]) -> Result<Vec<f64>> {
    let n = config.model.n();
    if u.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: u.len() });
    }
    let mut out = vec![0.0; n];
    Rhs::new(config)?.eval(u, &mut out)?;
    Ok(out)
}

fn weighted_norm(u: &[f64], weights: &[f64]) -> f64 {
    let s: f64 = u.iter().zip(weights).map(|(x, g)| g * x * x).sum();
    (s / u.len() as f64).sqrt()
}

fn sup(u: &[f64]) -> f64 {
    u.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Classical RK4 with fixed step; snapshots every `output_stride` steps.
pub fn integrate(config: &ModelConfig, u0: &[f64]) -> Result<Trajectory> {
    let n = config.model.n();
    if u0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: u0.len() });
    }
    if let Some(i) = u0.iter().position(|x| !x.is_finite()) {
        return Err(Error::Config(format!("initial state {i} is not finite")));
    }
    let steps = config.steps()?;
    let rhs = Rhs::new(config)?;
    let weights = config.model.node_weights();
    let h = config.dt;
    let snapshots = steps / config.output_stride + 1;

    let mut traj = Trajectory {
        n,
        times: Vec::with_capacity(snapshots),
        states: Vec::with_capacity(snapshots),
        fingerprint: config.fingerprint(),
        sup_norms: Vec::with_capacity(snapshots),
        weighted_norms: Vec::with_capacity(snapshots),
    };
    let record = |traj: &mut Trajectory, step: usize, u: &[f64]| {
        traj.times.push((step as f64) * h);
        traj.sup_norms.push(sup(u));
        traj.weighted_norms.push(weighted_norm(u, weights));
        traj.states.push(u.to_vec());
    };

    let mut u = u0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    record(&mut traj, 0, &u);
    for step in 1..=steps {
        rhs.eval(&u, &mut k1)?;
        for i in 0..n {
            tmp[i] = u[i] + 0.5 * h * k1[i];
        }
        rhs.eval(&tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = u[i] + 0.5 * h * k2[i];
        }
        rhs.eval(&tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = u[i] + h * k3[i];
        }
        rhs.eval(&tmp, &mut k4)?;
        let mut worst = 0.0f64;
        for i in 0..n {
            u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            let a = u[i].abs();
            // NaN compares false, so test it explicitly
            if !(a <= BLOW_UP_THRESHOLD) {
                worst = if a.is_nan() { f64::INFINITY } else { worst.max(a) };
            }
        }
        if worst > 0.0 {
            return Err(Error::BlowUp { t: step as f64 * h, magnitude: worst });
        }
        if step % config.output_stride == 0 {
            record(&mut traj, step, &u);
        }
    }
    Ok(traj)
}

/// Parameters of a fine-grid Galerkin run standing in for the continuum limit.
#[derive(Clone, Debug)]
pub struct ReferenceSpec {
    pub graphon: GraphonSpec,
    pub kernel: KernelChoice,
    pub initial: InitialCondition,
    pub reaction: Reaction,
    pub coupling: Coupling,
    pub resolution: usize,
    pub horizon: f64,
    pub dt: f64,
    pub output_stride: usize,
}

pub fn continuum_reference(spec: &ReferenceSpec) -> Result<Trajectory> {
    let m = spec.resolution;
    if !m.is_power_of_two() || m < 2 {
        return Err(Error::Config(format!("reference resolution {m} must be a power of two")));
    }
    let grid = build_grid(m)?;
    let matrix = galerkin_matrix(&spec.graphon, m, spec.kernel)?;
    let u0 = cell_average_ic(&spec.initial, &grid);
    let config = ModelConfig {
        model: Model::Galerkin(Arc::new(matrix)),
        coupling: spec.coupling.clone(),
        reaction: spec.reaction,
        scaling: Scaling::ExpectedDegree,
        horizon: spec.horizon,
        dt: spec.dt,
        output_stride: spec.output_stride,
    };
    integrate(&config, &u0)
}
