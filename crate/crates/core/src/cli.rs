//! Command-line front end: argument schema, experiment dispatch and the
//! CSV/JSON artifact writers.
//!
//! CSV files have one header row; floating-point values use Rust's shortest
//! round-trip formatting, so identical runs give byte-identical files. Every
//! experiment except `oracle` also writes a JSON summary next to the CSV,
//! with the extension replaced by `.json`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::analysis::{
    convergence_experiment, default_test_functions, initial_positions, qsd_estimate, tv_distance,
    uniform_in_time_experiment, AnalysisError, ConvergenceSetup, InitMode, UniformSetup, DEFAULT_BURN_IN,
};
use crate::engine::{empirical_counts, run_trajectory, EngineError, Observer, ParticleEnsemble, StepReport};
use crate::kernel::{AbsorbedKernel, Binning};
use crate::models::{Model, ModelError};
use crate::oracle::{
    conditional_distribution_exact, estimate_mixing_rate, qsd_exact, survival_probability_exact, Distribution,
    OracleError, DEFAULT_QSD_MAX_ITER, DEFAULT_QSD_TOL,
};
use crate::replicas::{ReplicaPlan, StreamRng};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Slope window for the `N^(-1/2)` scaling check.
pub const SLOPE_WINDOW: (f64, f64) = (-0.65, -0.35);

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or model document (exit code 2).
    #[error("configuration error: {0}")]
    Config(String),
    /// The model or an experiment failed while running (exit code 3).
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::InvalidDistribution(_) | OracleError::LengthMismatch { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Usage(msg) => CliError::Config(msg),
            AnalysisError::Oracle(e) => e.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn config<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Config(msg.into()))
}

/// Parses a comma-separated list of particle counts, e.g. `100,400,1600`.
pub fn parse_particle_counts(text: &str) -> Result<ParticleCounts, String> {
    let counts = text
        .split(',')
        .map(|part| {
            let part = part.trim();
            part.parse::<usize>().map_err(|e| format!("bad particle count {part:?}: {e}"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if counts.iter().any(|&n| n < 2) {
        return Err("every particle count must be at least 2".into());
    }
    if counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err("particle counts must be strictly increasing".into());
    }
    Ok(ParticleCounts(counts))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParticleCounts(pub Vec<usize>);

#[derive(Debug, Parser)]
#[command(name = "qsd-particle", version, about = "Particle approximation of absorbed Markov chains conditioned on survival")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one trajectory and record the binned empirical measure at every step.
    Simulate(SimulateArgs),
    /// Exact conditional law, survival probability and QSD of a finite model.
    Oracle(OracleArgs),
    /// Time-averaged QSD estimate from one trajectory.
    Qsd(QsdArgs),
    /// Error at a fixed step against the oracle, for several particle counts.
    Convergence(ConvergenceArgs),
    /// Error at every step up to a horizon against the oracle.
    Uniform(UniformArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Iid,
    Proportional,
}

impl From<InitArg> for InitMode {
    fn from(a: InitArg) -> Self {
        match a {
            InitArg::Iid => InitMode::Iid,
            InitArg::Proportional => InitMode::Proportional,
        }
    }
}

#[derive(Debug, Args)]
pub struct StochasticArgs {
    /// Model document (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Master seed; every run is a pure function of the arguments.
    #[arg(long)]
    pub seed: u64,
    /// Worker threads for replicas.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// CSV output path; the JSON summary goes next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Initial placement for finite models.
    #[arg(long, value_enum, default_value_t = InitArg::Iid)]
    pub init: InitArg,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: StochasticArgs,
    #[arg(long = "N")]
    pub particles: usize,
    #[arg(long)]
    pub horizon: usize,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Step of the conditional law.
    #[arg(long = "n", default_value_t = 0)]
    pub steps: usize,
    #[arg(long, default_value_t = DEFAULT_QSD_TOL)]
    pub tol: f64,
    #[arg(long = "max-iter", default_value_t = DEFAULT_QSD_MAX_ITER)]
    pub max_iter: usize,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QsdArgs {
    #[command(flatten)]
    pub common: StochasticArgs,
    #[arg(long = "N")]
    pub particles: usize,
    #[arg(long)]
    pub horizon: usize,
    /// Fraction of the horizon discarded before averaging.
    #[arg(long = "burn-in", default_value_t = DEFAULT_BURN_IN)]
    pub burn_in: f64,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub common: StochasticArgs,
    /// Comma-separated, strictly increasing particle counts.
    #[arg(long = "N", value_parser = parse_particle_counts)]
    pub particles: ParticleCounts,
    #[arg(long = "n")]
    pub steps: usize,
    #[arg(long, default_value_t = 50)]
    pub replicas: usize,
}

#[derive(Debug, Args)]
pub struct UniformArgs {
    #[command(flatten)]
    pub common: StochasticArgs,
    #[arg(long = "N")]
    pub particles: usize,
    #[arg(long)]
    pub horizon: usize,
    #[arg(long, default_value_t = 50)]
    pub replicas: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    Simulate { particles: usize, horizon: usize },
    Oracle { steps: usize, tol: f64, max_iter: usize },
    Qsd { particles: usize, horizon: usize, burn_in: f64 },
    Convergence { particle_counts: Vec<usize>, steps: usize, replicas: usize },
    Uniform { particles: usize, horizon: usize, replicas: usize },
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Simulate { .. } => "simulate",
            Experiment::Oracle { .. } => "oracle",
            Experiment::Qsd { .. } => "qsd",
            Experiment::Convergence { .. } => "convergence",
            Experiment::Uniform { .. } => "uniform",
        }
    }
}

/// A validated experiment: the loaded model plus everything needed to run it.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: Model,
    pub model_path: PathBuf,
    pub experiment: Experiment,
    /// Absent only for the deterministic `oracle` experiment.
    pub seed: Option<u64>,
    pub workers: usize,
    pub init: InitMode,
    pub out: Option<PathBuf>,
}

pub fn load_model(path: &Path) -> Result<Model, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read model file {}: {e}", path.display())))?;
    Model::from_json_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

impl ExperimentConfig {
    pub fn from_command(command: Command) -> Result<Self, CliError> {
        let stochastic = |common: StochasticArgs, experiment: Experiment| -> Result<Self, CliError> {
            if common.workers == 0 {
                return config("--workers must be positive");
            }
            Ok(ExperimentConfig {
                model: load_model(&common.model)?,
                model_path: common.model,
                experiment,
                seed: Some(common.seed),
                workers: common.workers,
                init: common.init.into(),
                out: common.out,
            })
        };
        let cfg = match command {
            Command::Simulate(a) => {
                stochastic(a.common, Experiment::Simulate { particles: a.particles, horizon: a.horizon })?
            }
            Command::Qsd(a) => stochastic(
                a.common,
                Experiment::Qsd { particles: a.particles, horizon: a.horizon, burn_in: a.burn_in },
            )?,
            Command::Convergence(a) => stochastic(
                a.common,
                Experiment::Convergence { particle_counts: a.particles.0, steps: a.steps, replicas: a.replicas },
            )?,
            Command::Uniform(a) => stochastic(
                a.common,
                Experiment::Uniform { particles: a.particles, horizon: a.horizon, replicas: a.replicas },
            )?,
            Command::Oracle(a) => ExperimentConfig {
                model: load_model(&a.model)?,
                model_path: a.model,
                experiment: Experiment::Oracle { steps: a.steps, tol: a.tol, max_iter: a.max_iter },
                seed: None,
                workers: 1,
                init: InitMode::Iid,
                out: a.out,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let particles = |n: usize| if n < 2 { config(format!("--N must be at least 2, got {n}")) } else { Ok(()) };
        let replicas = |r: usize| if r == 0 { config("--replicas must be positive") } else { Ok(()) };
        match &self.experiment {
            Experiment::Simulate { particles: n, .. } => particles(*n)?,
            Experiment::Qsd { particles: n, horizon, burn_in } => {
                particles(*n)?;
                if !(0.0..1.0).contains(burn_in) {
                    return config(format!("--burn-in must lie in [0, 1), got {burn_in}"));
                }
                if (*horizon as f64 * (1.0 - burn_in)) < 1.0 {
                    return config("--horizon leaves no steps after the burn-in");
                }
            }
            Experiment::Convergence { particle_counts, replicas: r, .. } => {
                if particle_counts.is_empty() {
                    return config("--N needs at least one particle count");
                }
                for &n in particle_counts {
                    particles(n)?;
                }
                replicas(*r)?;
            }
            Experiment::Uniform { particles: n, replicas: r, .. } => {
                particles(*n)?;
                replicas(*r)?;
            }
            Experiment::Oracle { tol, max_iter, .. } => {
                if tol.is_nan() || *tol <= 0.0 {
                    return config("--tol must be positive");
                }
                if *max_iter == 0 {
                    return config("--max-iter must be positive");
                }
            }
        }
        let needs_finite = matches!(
            self.experiment,
            Experiment::Oracle { .. } | Experiment::Convergence { .. } | Experiment::Uniform { .. }
        );
        if needs_finite && !matches!(self.model, Model::Finite { .. }) {
            return config(format!(
                "{} needs a finite model with an exact oracle, but {} is a {} model",
                self.experiment.name(),
                self.model_path.display(),
                self.model.kind()
            ));
        }
        Ok(())
    }

    fn plan(&self) -> ReplicaPlan {
        ReplicaPlan::new(self.seed.unwrap_or(0), self.workers)
    }

    fn csv_path(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.csv", self.experiment.name())))
    }
}

/// What a run leaves behind besides files.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// One-line summary for the terminal.
    pub summary: String,
    /// Extra document for standard output (the oracle report).
    pub stdout: Option<String>,
    pub files: Vec<PathBuf>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    match &cfg.experiment {
        Experiment::Oracle { steps, tol, max_iter } => run_oracle(cfg, *steps, *tol, *max_iter),
        Experiment::Simulate { particles, horizon } => run_simulate(cfg, *particles, *horizon),
        Experiment::Qsd { particles, horizon, burn_in } => run_qsd(cfg, *particles, *horizon, *burn_in),
        Experiment::Convergence { particle_counts, steps, replicas } => {
            run_convergence(cfg, particle_counts, *steps, *replicas)
        }
        Experiment::Uniform { particles, horizon, replicas } => run_uniform(cfg, *particles, *horizon, *replicas),
    }
}

fn finite(cfg: &ExperimentConfig) -> (&crate::kernel::SubstochasticMatrix, &Distribution) {
    match &cfg.model {
        Model::Finite { matrix, mu0 } => (matrix, mu0),
        _ => unreachable!("validated as finite"),
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("cannot write {}: {e}", path.display()))
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
    w.write_record(header).map_err(|e| io_error(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("summaries serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn run_oracle(cfg: &ExperimentConfig, steps: usize, tol: f64, max_iter: usize) -> Result<RunOutcome, CliError> {
    let (matrix, mu0) = finite(cfg);
    let conditional = conditional_distribution_exact(matrix, mu0, steps)?;
    let survival = survival_probability_exact(matrix, mu0, steps)?;
    let qsd = match qsd_exact(matrix, tol, max_iter) {
        Ok(q) => json!(q),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let mixing = estimate_mixing_rate(matrix, crate::analysis::MIXING_HORIZON);
    let report = json!({
        "experiment": "oracle",
        "model": cfg.model_path.display().to_string(),
        "n": steps,
        "conditional": conditional,
        "survival_probability": survival,
        "qsd": qsd,
        "mixing": {"gamma": finite_or_null(mixing.gamma), "non_mixing": mixing.non_mixing, "degenerate": mixing.degenerate},
    });
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    let mut files = Vec::new();
    if let Some(path) = &cfg.out {
        fs::write(path, &text).map_err(|e| io_error(path, e))?;
        files.push(path.clone());
    }
    Ok(RunOutcome {
        summary: format!("oracle: n={steps} survival={survival:.6}"),
        stdout: Some(text),
        files,
    })
}

fn finite_or_null(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        serde_json::Value::Null
    }
}

/// Per-step rows of a simulation: rebirths, loop iterations, bin fractions.
struct Recorder<B> {
    binning: B,
    rows: Vec<Vec<String>>,
    error: Option<EngineError>,
}

impl<B> Recorder<B> {
    fn record<S: Clone + std::fmt::Debug>(&mut self, ensemble: &ParticleEnsemble<S>, report: &StepReport)
    where
        B: Binning<S>,
    {
        if self.error.is_some() {
            return;
        }
        match empirical_counts(ensemble.positions(), &self.binning) {
            Ok(counts) => {
                let n = ensemble.len() as f64;
                let mut row = vec![
                    ensemble.step_index().to_string(),
                    report.rebirths.to_string(),
                    report.loop_iterations.to_string(),
                ];
                row.extend(counts.iter().map(|&c| (c as f64 / n).to_string()));
                self.rows.push(row);
            }
            Err(e) => self.error = Some(e),
        }
    }
}

impl<S: Clone + std::fmt::Debug, B: Binning<S>> Observer<S> for Recorder<B> {
    fn on_start(&mut self, ensemble: &ParticleEnsemble<S>) {
        self.record(ensemble, &StepReport { rebirths: 0, loop_iterations: 0 });
    }

    fn on_step(&mut self, ensemble: &ParticleEnsemble<S>, report: &StepReport) {
        self.record(ensemble, report);
    }
}

fn simulate_kernel<K: AbsorbedKernel>(
    kernel: &K,
    positions: Vec<K::State>,
    horizon: usize,
    rng: &mut StreamRng,
) -> Result<(Vec<Vec<String>>, u64, usize), CliError> {
    let binning = kernel.binning();
    let bins = binning.num_bins();
    let mut recorder = Recorder { binning, rows: Vec::new(), error: None };
    let record = run_trajectory(kernel, positions, horizon, rng, &mut recorder)?;
    if let Some(e) = recorder.error {
        return Err(e.into());
    }
    Ok((recorder.rows, record.final_ensemble.total_rebirths(), bins))
}

fn run_simulate(cfg: &ExperimentConfig, particles: usize, horizon: usize) -> Result<RunOutcome, CliError> {
    let mut rng = cfg.plan().stream(0, 0);
    let (rows, rebirths, bins) = match &cfg.model {
        Model::Finite { matrix, mu0 } => {
            let positions = initial_positions(mu0, particles, cfg.init, &mut rng);
            simulate_kernel(matrix, positions, horizon, &mut rng)?
        }
        Model::Neutron { kernel, start } => {
            let positions = start.positions(particles, &mut rng);
            simulate_kernel(kernel, positions, horizon, &mut rng)?
        }
        Model::Diffusion { kernel, x0 } => simulate_kernel(kernel, vec![*x0; particles], horizon, &mut rng)?,
    };
    let mut header: Vec<String> = ["step", "rebirths", "loop_iterations"].map(String::from).to_vec();
    header.extend((0..bins).map(|b| format!("bin_{b}")));
    let csv = cfg.csv_path();
    write_csv(&csv, &header, &rows)?;
    let json_path = csv.with_extension("json");
    write_json(
        &json_path,
        &json!({
            "experiment": "simulate",
            "model": cfg.model_path.display().to_string(),
            "seed": cfg.seed,
            "particles": particles,
            "horizon": horizon,
            "total_rebirths": rebirths,
            "mean_rebirths_per_step": if horizon > 0 { rebirths as f64 / horizon as f64 } else { 0.0 },
        }),
    )?;
    Ok(RunOutcome {
        summary: format!("simulate: {horizon} steps, {rebirths} rebirths -> {}", csv.display()),
        stdout: None,
        files: vec![csv, json_path],
    })
}

/// Column headers and per-bin geometry for QSD tables.
fn bin_geometry(model: &Model) -> (Vec<String>, Vec<Vec<String>>) {
    match model {
        Model::Finite { matrix, .. } => (vec!["state".into()], (0..matrix.size()).map(|x| vec![x.to_string()]).collect()),
        Model::Neutron { kernel, .. } => {
            let b = kernel.binning();
            let octants = b.velocity_octants();
            let rows = (0..b.num_bins())
                .map(|bin| {
                    let (cell, octant) = if octants { (bin / 8, Some(bin % 8)) } else { (bin, None) };
                    let (lo, hi) = b.cell_bounds(cell);
                    vec![
                        bin.to_string(),
                        octant.map_or_else(String::new, |o| o.to_string()),
                        lo[0].to_string(),
                        lo[1].to_string(),
                        hi[0].to_string(),
                        hi[1].to_string(),
                    ]
                })
                .collect();
            (["bin", "octant", "x_min", "y_min", "x_max", "y_max"].map(String::from).to_vec(), rows)
        }
        Model::Diffusion { kernel, .. } => {
            let rows = (0..kernel.binning.bins)
                .map(|bin| {
                    let (lo, hi) = kernel.binning.cell_bounds(bin);
                    vec![bin.to_string(), lo.to_string(), hi.to_string()]
                })
                .collect();
            (["bin", "x_min", "x_max"].map(String::from).to_vec(), rows)
        }
    }
}

fn run_qsd(cfg: &ExperimentConfig, particles: usize, horizon: usize, burn_in: f64) -> Result<RunOutcome, CliError> {
    let mut rng = cfg.plan().stream(0, 0);
    let estimate = match &cfg.model {
        Model::Finite { matrix, mu0 } => {
            let positions = initial_positions(mu0, particles, cfg.init, &mut rng);
            qsd_estimate(matrix, positions, horizon, burn_in, &mut rng)?
        }
        Model::Neutron { kernel, start } => {
            let positions = start.positions(particles, &mut rng);
            qsd_estimate(kernel, positions, horizon, burn_in, &mut rng)?
        }
        Model::Diffusion { kernel, x0 } => qsd_estimate(kernel, vec![*x0; particles], horizon, burn_in, &mut rng)?,
    };
    let (mut header, geometry) = bin_geometry(&cfg.model);
    header.push("mass".into());
    let rows: Vec<Vec<String>> = geometry
        .into_iter()
        .zip(estimate.weights())
        .map(|(mut row, w)| {
            row.push(w.to_string());
            row
        })
        .collect();
    let csv = cfg.csv_path();
    write_csv(&csv, &header, &rows)?;

    let mut exact = serde_json::Value::Null;
    let mut tv = None;
    if let Model::Finite { matrix, .. } = &cfg.model {
        if let Ok(q) = qsd_exact(matrix, DEFAULT_QSD_TOL, DEFAULT_QSD_MAX_ITER) {
            tv = Some(tv_distance(&estimate, &q.qsd)?);
            exact = json!(q);
        }
    }
    let json_path = csv.with_extension("json");
    write_json(
        &json_path,
        &json!({
            "experiment": "qsd",
            "model": cfg.model_path.display().to_string(),
            "seed": cfg.seed,
            "particles": particles,
            "horizon": horizon,
            "burn_in": burn_in,
            "estimate": estimate,
            "exact": exact,
            "tv_to_exact": tv,
        }),
    )?;
    let stat = tv.map_or_else(|| format!("{} bins", estimate.len()), |t| format!("TV to exact QSD {t:.4}"));
    Ok(RunOutcome { summary: format!("qsd: {stat} -> {}", csv.display()), stdout: None, files: vec![csv, json_path] })
}

fn run_convergence(
    cfg: &ExperimentConfig,
    counts: &[usize],
    steps: usize,
    replicas: usize,
) -> Result<RunOutcome, CliError> {
    let (matrix, mu0) = finite(cfg);
    let fs = default_test_functions(matrix.size());
    let curve = convergence_experiment(
        &ConvergenceSetup {
            matrix,
            mu0,
            steps,
            particle_counts: counts,
            replicas,
            test_functions: &fs,
            init: cfg.init,
        },
        &cfg.plan(),
    )?;
    let header = ["n_particles", "mean_abs_error", "std_error", "bound", "exceeds_bound"].map(String::from);
    let rows: Vec<Vec<String>> = curve
        .points
        .iter()
        .map(|p| {
            vec![
                p.n_particles.to_string(),
                p.mean_abs_error.to_string(),
                p.std_error.to_string(),
                p.bound.to_string(),
                p.exceeds_bound.to_string(),
            ]
        })
        .collect();
    let csv = cfg.csv_path();
    write_csv(&csv, &header, &rows)?;
    let slope_in_window = curve
        .slope_ci
        .is_some_and(|(lo, hi)| lo >= SLOPE_WINDOW.0 && hi <= SLOPE_WINDOW.1);
    let json_path = csv.with_extension("json");
    write_json(
        &json_path,
        &json!({
            "experiment": "convergence",
            "model": cfg.model_path.display().to_string(),
            "seed": cfg.seed,
            "n": steps,
            "replicas": replicas,
            "points": curve.points,
            "fitted_slope": curve.fitted_slope,
            "slope_ci": curve.slope_ci,
            "within_bound": curve.within_bound(),
            "slope_in_window": slope_in_window,
        }),
    )?;
    Ok(RunOutcome {
        summary: format!(
            "convergence: slope {} (CI {}) within bound: {} -> {}",
            fmt_opt(curve.fitted_slope),
            curve.slope_ci.map_or_else(|| "n/a".into(), |(a, b)| format!("[{a:.4}, {b:.4}]")),
            curve.within_bound(),
            csv.display()
        ),
        stdout: None,
        files: vec![csv, json_path],
    })
}

fn run_uniform(cfg: &ExperimentConfig, particles: usize, horizon: usize, replicas: usize) -> Result<RunOutcome, CliError> {
    let (matrix, mu0) = finite(cfg);
    let fs = default_test_functions(matrix.size());
    let sweep = uniform_in_time_experiment(
        &UniformSetup { matrix, mu0, horizon, particles, replicas, test_functions: &fs, init: cfg.init },
        &cfg.plan(),
    )?;
    let header = ["step", "mean_abs_error", "std_error"].map(String::from);
    let rows: Vec<Vec<String>> = sweep
        .per_step_error
        .iter()
        .zip(&sweep.per_step_std_error)
        .enumerate()
        .map(|(n, (e, se))| vec![n.to_string(), e.to_string(), se.to_string()])
        .collect();
    let csv = cfg.csv_path();
    write_csv(&csv, &header, &rows)?;
    let json_path = csv.with_extension("json");
    write_json(
        &json_path,
        &json!({
            "experiment": "uniform",
            "model": cfg.model_path.display().to_string(),
            "seed": cfg.seed,
            "particles": particles,
            "horizon": horizon,
            "replicas": replicas,
            "sup_error": sweep.sup_error,
            "reference_error": sweep.reference_error,
            "drift_slope": sweep.drift_slope,
            "drift_ci": sweep.drift_ci,
            "drift_ci_contains_zero": sweep.drift_ci_contains_zero,
            "sup_within_twice_reference": sweep.sup_within_twice_reference,
            "gamma": finite_or_null(sweep.gamma),
            "lambda0": sweep.lambda0,
            "alpha": sweep.alpha,
        }),
    )?;
    Ok(RunOutcome {
        summary: format!(
            "uniform: sup error {:.5}, drift slope {:.3e} -> {}",
            sweep.sup_error,
            sweep.drift_slope,
            csv.display()
        ),
        stdout: None,
        files: vec![csv, json_path],
    })
}
