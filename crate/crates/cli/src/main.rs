use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use graphdyn_core::analysis::{apriori_sup_bound, kernel_l4_distance};
use graphdyn_core::dynamics::{cell_average_ic, integrate};
use graphdyn_core::io::{load_graph, save_graph, write_trajectory};
use graphdyn_core::operators::{averaged_kernel_matrix, averaged_matrix_variant, galerkin_matrix};
use graphdyn_core::sampler::{build_grid, degree_statistics, sample_graph};
use graphdyn_core::study::{run_study, Execution};
use graphdyn_core::{
    Coupling, DensitySchedule, EdgeVariant, Error, Model, Scaling, StudyConfig, StudyKind, StudyOutput,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "graphdyn", version, about = "Dynamics on sparse W-random graphs and their continuum limits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one graph and write it in the text graph format.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Output graph file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrate one model and write its trajectory CSVs.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        model: ModelKind,
        /// Reuse a saved graph for the sampled model.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured study and write report.json.
    Study {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Compute records one after another instead of on the worker pool.
        #[arg(long)]
        serial: bool,
    },
    /// Print the assumption report for every n in the config.
    Check {
        #[command(flatten)]
        common: Common,
    },
    /// Print the L4 distance between the Galerkin and averaged kernels.
    KernelDist {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Sampled,
    Averaged,
    Galerkin,
}

/// Config file plus overrides of individual keys.
#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    study: Option<StudyArg>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// Comma-separated resolutions.
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    /// Single resolution for `sample` and `run`; defaults to the largest of n_list.
    #[arg(long)]
    n: Option<usize>,
    /// Reference resolution.
    #[arg(long = "m")]
    reference_resolution: Option<usize>,
    /// Number of seeds.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    /// Graph seed for `sample` and `run`; defaults to the master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "horizon", visible_alias = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    output_stride: Option<usize>,
    #[arg(long, value_enum)]
    coupling: Option<CouplingArg>,
    #[arg(long, value_enum)]
    scaling: Option<ScalingArg>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyArg {
    ContinuumConvergence,
    Averaging,
    GalerkinVsAveraged,
    KernelDistance,
    DegreeLaw,
}

#[derive(Clone, Copy, ValueEnum)]
enum CouplingArg {
    Identity,
    Sine,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScalingArg {
    ExpectedDegree,
    EdgeDensity,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Pointwise,
    CellAveraged,
}

impl Common {
    fn load(&self) -> Result<StudyConfig, Error> {
        let text = fs::read_to_string(&self.config)?;
        let mut cfg = StudyConfig::from_json(&text)?;
        if let Some(s) = self.study {
            cfg.study = match s {
                StudyArg::ContinuumConvergence => StudyKind::ContinuumConvergence,
                StudyArg::Averaging => StudyKind::Averaging,
                StudyArg::GalerkinVsAveraged => StudyKind::GalerkinVsAveraged,
                StudyArg::KernelDistance => StudyKind::KernelDistance,
                StudyArg::DegreeLaw => StudyKind::DegreeLaw,
            };
        }
        match (self.gamma, self.rho) {
            (Some(_), Some(_)) => return Err(Error::Config("give at most one of --gamma and --rho".into())),
            (Some(gamma), None) => cfg.graphon.schedule = DensitySchedule::power(gamma),
            (None, Some(rho)) => cfg.graphon.schedule = DensitySchedule::fixed(rho),
            (None, None) => {}
        }
        if let Some(v) = &self.n_list {
            cfg.n_list = v.clone();
        }
        if let Some(m) = self.reference_resolution {
            cfg.reference_resolution = m;
        }
        if let Some(c) = self.seeds {
            cfg.seeds.count = c;
        }
        if let Some(s) = self.master_seed {
            cfg.seeds.master = s;
        }
        if let Some(t) = self.horizon {
            cfg.model.horizon = t;
        }
        if let Some(dt) = self.dt {
            cfg.model.dt = dt;
        }
        if let Some(s) = self.output_stride {
            cfg.model.output_stride = Some(s);
        }
        if let Some(c) = self.coupling {
            cfg.model.coupling = match c {
                CouplingArg::Identity => Coupling::Identity,
                CouplingArg::Sine => Coupling::Sine,
            };
        }
        if let Some(s) = self.scaling {
            cfg.model.scaling = match s {
                ScalingArg::ExpectedDegree => Scaling::ExpectedDegree,
                ScalingArg::EdgeDensity => Scaling::EdgeDensity,
            };
        }
        if let Some(v) = self.variant {
            cfg.variant = match v {
                VariantArg::Pointwise => EdgeVariant::Pointwise,
                VariantArg::CellAveraged => EdgeVariant::CellAveraged,
            };
        }
        Ok(cfg)
    }

    fn single_n(&self, cfg: &StudyConfig) -> Result<usize, Error> {
        let n = self
            .n
            .or_else(|| cfg.n_list.last().copied())
            .ok_or_else(|| Error::Config("no resolution given".into()))?;
        build_grid(n)?;
        Ok(n)
    }

    fn single_seed(&self, cfg: &StudyConfig) -> u64 {
        self.seed.unwrap_or(cfg.seeds.master)
    }
}

fn out_dir(out: Option<PathBuf>, cfg: &StudyConfig) -> Result<PathBuf, Error> {
    out.or_else(|| cfg.output.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set \"output\"".into()))
}

fn print_json(v: &serde_json::Value) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn sample(common: &Common, out: &Path) -> Result<(), Error> {
    let cfg = common.load()?;
    let n = common.single_n(&cfg)?;
    let seed = common.single_seed(&cfg);
    let g = sample_graph(cfg.spec(), cfg.schedule(), n, seed, cfg.variant)?;
    save_graph(&g, out)?;
    let stats = degree_statistics(&g);
    print_json(&json!({
        "n": n,
        "seed": seed,
        "rho": g.rho,
        "edges": stats.edge_count,
        "loops": g.loop_count(),
        "mean_degree": stats.mean_degree,
        "density": stats.density,
    }))
}

fn run(common: &Common, kind: ModelKind, graph: Option<&Path>, out: Option<PathBuf>) -> Result<(), Error> {
    let cfg = common.load()?;
    let dir = out_dir(out, &cfg)?;
    cfg.spec().validate()?;
    cfg.schedule().validate()?;
    let model = match kind {
        ModelKind::Sampled => {
            let g = match graph {
                Some(p) => load_graph(p, cfg.spec())?,
                None => {
                    let n = common.single_n(&cfg)?;
                    sample_graph(cfg.spec(), cfg.schedule(), n, common.single_seed(&cfg), cfg.variant)?
                }
            };
            Model::Sampled(Arc::new(g))
        }
        ModelKind::Averaged => {
            let n = common.single_n(&cfg)?;
            let m = match cfg.model.scaling {
                Scaling::ExpectedDegree => averaged_matrix_variant(cfg.spec(), cfg.schedule(), n, cfg.variant)?,
                Scaling::EdgeDensity => averaged_kernel_matrix(cfg.spec(), cfg.schedule(), n, cfg.variant)?,
            };
            Model::Averaged(Arc::new(m))
        }
        ModelKind::Galerkin => {
            let n = common.single_n(&cfg)?;
            Model::Galerkin(Arc::new(galerkin_matrix(cfg.spec(), n, cfg.model.kernel())?))
        }
    };
    let n = model.n();
    let u0 = cell_average_ic(&cfg.model.initial, &build_grid(n)?);
    let mc = cfg.model.config(model);
    let traj = integrate(&mc, &u0)?;
    let paths = write_trajectory(&traj, mc.model.node_weights(), &dir)?;
    let bound = apriori_sup_bound(cfg.model.lipschitz(), cfg.model.horizon, cfg.model.initial.sup_norm());
    let summary = json!({
        "fingerprint": traj.fingerprint,
        "n": n,
        "snapshots": traj.times.len(),
        "max_sup_norm": traj.max_sup_norm(),
        "apriori_bound": bound,
        "files": paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    print_json(&summary)?;
    if !graphdyn_core::analysis::satisfies_apriori_bound(
        &traj,
        cfg.model.lipschitz(),
        cfg.model.horizon,
        cfg.model.initial.sup_norm(),
    ) {
        return Err(Error::AssumptionViolation(format!(
            "sup norm {} exceeds the a priori bound {bound}",
            traj.max_sup_norm()
        )));
    }
    Ok(())
}

fn study(common: &Common, out: Option<PathBuf>, serial: bool) -> Result<(), Error> {
    let cfg = common.load()?;
    let dir = out_dir(out, &cfg)?;
    let exec = if serial { Execution::Serial } else { Execution::Parallel };
    let report = run_study(&cfg, exec)?;
    fs::create_dir_all(&dir)?;
    let path = dir.join("report.json");
    fs::write(&path, report.to_json()? + "\n")?;
    if let StudyOutput::Errors(r) = &report {
        for a in &r.aggregates {
            eprintln!("n = {:>6}  median = {:.6e}  iqr = {:.3e}", a.n, a.median, a.iqr);
        }
        let failed = r.failed_records().count();
        if failed > 0 {
            eprintln!("warning: {failed} record(s) failed; see report");
        }
    }
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn check(common: &Common) -> Result<(), Error> {
    let cfg = common.load()?;
    cfg.spec().validate()?;
    cfg.schedule().validate()?;
    let reports: Vec<_> = cfg.n_list.iter().map(|&n| cfg.spec().check_assumptions(cfg.schedule(), n)).collect();
    print_json(&serde_json::to_value(&reports)?)
}

fn kernel_dist(common: &Common) -> Result<(), Error> {
    let cfg = common.load()?;
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        rows.push(json!({ "n": n, "kernel_l4": kernel_l4_distance(cfg.spec(), cfg.schedule(), n)? }));
    }
    print_json(&serde_json::Value::Array(rows))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Sample { common, out } => sample(common, out),
        Command::Run { common, model, graph, out } => run(common, *model, graph.as_deref(), out.clone()),
        Command::Study { common, out, serial } => study(common, out.clone(), *serial),
        Command::Check { common } => check(common),
        Command::KernelDist { common } => kernel_dist(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
