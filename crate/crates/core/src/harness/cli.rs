//! `dynofit` command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or usage.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use super::config::{invalid, locate, parse_json, ConfigError, ExperimentConfig, MethodConfig, ObservationConfig};
use super::experiments::{random_linear_map, run_experiment};
use crate::dynamics::{integrate_substeps, SystemSpec, Trajectory, DEFAULT_GRAVITY};
use crate::estimator::{grid_search, multistart_estimate, ParameterBox, SearchGrid};
use crate::kernelscore::{EpsPolicy, FeatureMap, KernelScorer, LinearScorer, LinearVariant, ModelProblem};
use crate::observation::{
    observe_linear, observe_lorenz_full, observe_lorenz_noisy, observe_lorenz_partial, render_pendulum_video, Canvas,
    NoiseSpec, ObservationSeries,
};
use crate::ParameterVector;

pub const THREADS_ENV: &str = "DYNOFIT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "dynofit", version, about = "Kernel-score parameter estimation for ODE models")]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (DYNOFIT_THREADS takes precedence).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Multiplies instance count, sample count and grid sizes.
    #[arg(long, global = true)]
    scale: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate a system and write `trajectory.csv`.
    Simulate,
    /// Map a trajectory CSV through an observation function.
    Observe {
        #[arg(long)]
        input: PathBuf,
    },
    /// Estimate parameters from an observation file; writes `estimate.json`.
    Estimate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Run a configured experiment; writes `report.json`, `instances.csv`, `summary.csv`.
    Experiment,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn config(path: &Path, e: ConfigError) -> Self {
        CliError::Config(format!("{}: {e}", path.display()))
    }
}

fn runtime<E: std::fmt::Display>(context: &str) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SystemName {
    Lorenz63,
    DoublePendulum,
}

fn system_spec(name: SystemName, gravity: f64) -> SystemSpec {
    match name {
        SystemName::Lorenz63 => SystemSpec::lorenz63(),
        SystemName::DoublePendulum => SystemSpec::double_pendulum(gravity),
    }
}

fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}

fn one() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    system: SystemName,
    parameters: BTreeMap<String, f64>,
    /// Drawn from `--seed` when absent.
    x0: Option<Vec<f64>>,
    n: usize,
    dt: f64,
    #[serde(default = "one")]
    substeps: usize,
    #[serde(default = "default_gravity")]
    gravity: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum FileFormat {
    #[default]
    Csv,
    Binary,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObserveConfig {
    observation: ObservationConfig,
    /// Rod lengths, required for pendulum observations.
    lengths: Option<[f64; 2]>,
    #[serde(default)]
    format: FileFormat,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateConfig {
    system: SystemName,
    #[serde(default = "default_gravity")]
    gravity: f64,
    /// Values of parameters that are not estimated.
    #[serde(default)]
    parameters: BTreeMap<String, f64>,
    free: Vec<String>,
    #[serde(rename = "box")]
    bounds: ParameterBox,
    x0: Vec<f64>,
    /// Defaults to the sample spacing stored in the observation file.
    dt: Option<f64>,
    #[serde(default = "one")]
    substeps: usize,
    #[serde(default)]
    features: FeatureMap,
    method: MethodConfig,
    omega_star: Option<Vec<f64>>,
}

fn read_config(path: Option<&Path>) -> Result<(PathBuf, String), CliError> {
    let path = path.ok_or_else(|| CliError::Config("missing --config".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: cannot read: {e}", path.display())))?;
    Ok((path.to_path_buf(), text))
}

fn check_positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, "must be positive"))
    }
}

fn ordered_parameters(
    system: &SystemSpec,
    given: &BTreeMap<String, f64>,
    fallback: impl Fn(&str) -> Option<f64>,
) -> Result<ParameterVector, ConfigError> {
    if let Some(k) = given.keys().find(|k| !system.parameter_names.contains(k)) {
        return Err(invalid("parameters", format!("unknown parameter `{k}`; expected {:?}", system.parameter_names)));
    }
    let mut values = Vec::new();
    for name in &system.parameter_names {
        match given.get(name).copied().or_else(|| fallback(name)) {
            Some(v) => values.push(v),
            None => return Err(invalid("parameters", format!("missing value for `{name}`"))),
        }
    }
    ParameterVector::new(system.parameter_names.clone(), values).map_err(|e| invalid("parameters", e.to_string()))
}

fn create_out(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(runtime("creating output directory"))
}

fn write_file(path: PathBuf, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = File::create(&path).map_err(runtime("creating output file"))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn cmd_simulate(cli: &Cli) -> Result<(), CliError> {
    let (path, text) = read_config(cli.config.as_deref())?;
    let cfg: SimulateConfig = parse_json(&text).map_err(|e| CliError::config(&path, e))?;
    let system = system_spec(cfg.system, cfg.gravity);
    let check = || -> Result<ParameterVector, ConfigError> {
        check_positive("dt", cfg.dt)?;
        check_positive("gravity", cfg.gravity)?;
        if cfg.n < 2 {
            return Err(invalid("n", "need at least 2 samples"));
        }
        if cfg.substeps == 0 {
            return Err(invalid("substeps", "must be positive"));
        }
        if let Some(x0) = &cfg.x0 {
            if x0.len() != system.state_dim {
                return Err(invalid("x0", format!("expected {} components", system.state_dim)));
            }
        }
        ordered_parameters(&system, &cfg.parameters, |_| None)
    };
    let params = check().map_err(|e| CliError::config(&path, locate(&text, e)))?;
    let x0 = cfg.x0.clone().unwrap_or_else(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(cli.seed.unwrap_or(0));
        match cfg.system {
            SystemName::Lorenz63 => (0..3).map(|_| rng.gen_range(0.0..=1.0)).collect(),
            SystemName::DoublePendulum => {
                let normal = Normal::new(0.0, 0.5f64.sqrt()).expect("positive std");
                (0..4).map(|_| normal.sample(&mut rng)).collect()
            }
        }
    });
    let traj = integrate_substeps(&system, &params.values, &x0, cfg.n, cfg.dt, cfg.substeps)
        .map_err(runtime("integration"))?;
    create_out(&cli.out)?;
    write_file(cli.out.join("trajectory.csv"), |w| traj.write_csv(w))?;
    println!("wrote {} samples of {} to {}", traj.len(), params, cli.out.join("trajectory.csv").display());
    Ok(())
}

fn read_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    let file = File::open(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Trajectory::read_csv(BufReader::new(file)).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn read_observations(path: &Path) -> Result<ObservationSeries, CliError> {
    let file = File::open(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let r = BufReader::new(file);
    let series = if path.extension().is_some_and(|e| e == "bin") {
        ObservationSeries::read_binary(r)
    } else {
        ObservationSeries::read_csv(r)
    };
    series.map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn cmd_observe(cli: &Cli, input: &Path) -> Result<(), CliError> {
    let (path, text) = read_config(cli.config.as_deref())?;
    let cfg: ObserveConfig = parse_json(&text).map_err(|e| CliError::config(&path, e))?;
    let needs_lengths = matches!(
        cfg.observation,
        ObservationConfig::LinearMap { .. } | ObservationConfig::Cartesian | ObservationConfig::Video
    );
    let lengths = match (needs_lengths, cfg.lengths) {
        (true, None) => {
            return Err(CliError::config(&path, locate(&text, invalid("observation", "pendulum observations need `lengths`"))))
        }
        (true, Some([l1, l2])) if !(l1 > 0.0 && l2 > 0.0) => {
            return Err(CliError::config(&path, locate(&text, invalid("lengths", "must be positive"))))
        }
        (_, l) => l.unwrap_or([1.0, 1.0]),
    };
    let traj = read_trajectory(input)?;
    let seed = cli.seed.unwrap_or(0);
    let cart = || FeatureMap::PendulumCartesian { l1_index: 0, l2_index: 1 }.apply(&traj, &lengths);
    let need_dim = |d: usize| {
        if traj.dim() == d {
            Ok(())
        } else {
            Err(CliError::Runtime(format!("observation expects a {d}-dimensional trajectory, got {}", traj.dim())))
        }
    };
    let series = match &cfg.observation {
        ObservationConfig::Identity => ObservationSeries::new(traj.dt, traj.states.clone()),
        ObservationConfig::Cartesian => {
            need_dim(4)?;
            ObservationSeries::new(traj.dt, cart().states)
        }
        ObservationConfig::LinearMap { dim } => {
            need_dim(4)?;
            observe_linear(&cart(), &random_linear_map(*dim, 4, seed), 0.0, 0)
        }
        ObservationConfig::Video => {
            need_dim(4)?;
            let video = render_pendulum_video(&cart(), &Canvas::for_lengths(lengths[0], lengths[1]))
                .map_err(runtime("rendering"))?;
            if video.clipped() {
                eprintln!("warning: {} frames have a bob outside the canvas", video.clipped_frames.len());
            }
            Ok(video.series)
        }
        ObservationConfig::LorenzFull => observe_lorenz_full(&traj),
        ObservationConfig::LorenzNoisy { sigma } => observe_lorenz_noisy(&traj, &NoiseSpec::gaussian(*sigma, seed)),
        ObservationConfig::LorenzPartial { coefficients } => observe_lorenz_partial(&traj, *coefficients),
    }
    .map_err(runtime("observation"))?;
    create_out(&cli.out)?;
    let target = match cfg.format {
        FileFormat::Csv => cli.out.join("observations.csv"),
        FileFormat::Binary => cli.out.join("observations.bin"),
    };
    write_file(target.clone(), |w| match cfg.format {
        FileFormat::Csv => series.write_csv(w),
        FileFormat::Binary => series.write_binary(w),
    })?;
    println!("wrote {}×{} observations to {}", series.len(), series.dim(), target.display());
    Ok(())
}

fn cmd_estimate(cli: &Cli, input: &Path) -> Result<(), CliError> {
    let (path, text) = read_config(cli.config.as_deref())?;
    let cfg: EstimateConfig = parse_json(&text).map_err(|e| CliError::config(&path, e))?;
    let system = system_spec(cfg.system, cfg.gravity);
    let check = || -> Result<(ParameterVector, Vec<usize>), ConfigError> {
        check_positive("gravity", cfg.gravity)?;
        cfg.bounds.validate().map_err(|e| invalid("box", e.to_string()))?;
        if cfg.bounds.names != cfg.free {
            return Err(invalid("box", "box names must match `free`, in order"));
        }
        let mut free = Vec::new();
        for name in &cfg.free {
            match system.parameter_names.iter().position(|n| n == name) {
                Some(i) if !free.contains(&i) => free.push(i),
                _ => return Err(invalid("free", format!("`{name}` is not a distinct parameter of the system"))),
            }
        }
        let base = ordered_parameters(&system, &cfg.parameters, |name| {
            cfg.free.iter().position(|f| f == name).map(|i| cfg.bounds.lower[i])
        })?;
        if cfg.x0.len() != system.state_dim {
            return Err(invalid("x0", format!("expected {} components", system.state_dim)));
        }
        if let Some(dt) = cfg.dt {
            check_positive("dt", dt)?;
        }
        if cfg.substeps == 0 {
            return Err(invalid("substeps", "must be positive"));
        }
        match &cfg.method {
            MethodConfig::Oracle { .. } => return Err(invalid("method", "the oracle is only available in experiments")),
            MethodConfig::Multistart { optimizer } => optimizer.validate().map_err(|e| invalid("method", e.to_string()))?,
            m => SearchGrid::new(&cfg.bounds, m.points().expect("grid method"))
                .map(|_| ())
                .map_err(|e| invalid("method", e.to_string()))?,
        }
        if let Some(s) = &cfg.omega_star {
            if s.len() != cfg.free.len() {
                return Err(invalid("omega_star", "one value per free parameter"));
            }
        }
        Ok((base, free))
    };
    let (base_params, free) = check().map_err(|e| CliError::config(&path, locate(&text, e)))?;
    let obs = read_observations(input)?;
    let problem = ModelProblem {
        system,
        base_params,
        free,
        x0: cfg.x0.clone(),
        n: obs.len(),
        dt: cfg.dt.unwrap_or(obs.dt),
        substeps: cfg.substeps,
        features: cfg.features.clone(),
    };
    let result = match &cfg.method {
        MethodConfig::Grid { points_per_dim } => {
            let scorer = KernelScorer::new(problem, obs.samples.view(), EpsPolicy::MaxMin).map_err(runtime("scoring"))?;
            let grid = SearchGrid::new(&cfg.bounds, points_per_dim).map_err(runtime("grid"))?;
            grid_search(&scorer, &cfg.bounds, &grid)
        }
        MethodConfig::Multistart { optimizer } => {
            let scorer = KernelScorer::new(problem, obs.samples.view(), EpsPolicy::MaxMin).map_err(runtime("scoring"))?;
            let mut opt = optimizer.clone();
            if let Some(seed) = cli.seed {
                opt.seed = seed;
            }
            multistart_estimate(&scorer, &cfg.bounds, &opt)
        }
        MethodConfig::Linear1 { points_per_dim } | MethodConfig::Linear2 { points_per_dim } => {
            let variant = if matches!(cfg.method, MethodConfig::Linear1 { .. }) {
                LinearVariant::CrossCovariance
            } else {
                LinearVariant::LinearGram
            };
            let scorer = LinearScorer::new(problem, obs.samples.view(), variant).map_err(runtime("scoring"))?;
            let grid = SearchGrid::new(&cfg.bounds, points_per_dim).map_err(runtime("grid"))?;
            grid_search(&scorer, &cfg.bounds, &grid)
        }
        MethodConfig::Oracle { .. } => unreachable!("rejected during validation"),
    }
    .map_err(runtime("estimation"))?;
    let json = result.to_json(cfg.omega_star.as_deref());
    let text = serde_json::to_string_pretty(&json).expect("json");
    create_out(&cli.out)?;
    write_file(cli.out.join("estimate.json"), |w| writeln!(w, "{text}"))?;
    println!("{text}");
    Ok(())
}

fn cmd_experiment(cli: &Cli) -> Result<(), CliError> {
    let (path, text) = read_config(cli.config.as_deref())?;
    let mut config = ExperimentConfig::from_json(&text).map_err(|e| CliError::config(&path, e))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(scale) = cli.scale {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(CliError::Config(format!("--scale must be positive, got {scale}")));
        }
        config = config.scaled(scale);
        config.validate().map_err(|e| CliError::Config(format!("after --scale {scale}: {e}")))?;
    }
    let report = run_experiment(&config);
    report.write_all(&cli.out).map_err(runtime("writing report"))?;
    for row in report.summary.iter().filter(|r| r.quantity == "overall") {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
        println!(
            "{:<12} {:<11} n={:<3} median={} q1={} q3={}",
            row.group,
            row.method,
            row.count,
            fmt(row.median),
            fmt(row.q1),
            fmt(row.q3)
        );
    }
    let failures = report.records.iter().flat_map(|r| &r.methods).filter(|m| m.failure.is_some()).count();
    if failures > 0 {
        eprintln!("{failures} estimator runs failed; see report.json");
    }
    println!("report written to {}", cli.out.join("report.json").display());
    Ok(())
}

/// Thread count: `DYNOFIT_THREADS` if set, else `--threads`.
fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    let n = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| CliError::Config(format!("{THREADS_ENV}={v:?} is not a count")))?),
        Err(_) => flag,
    };
    if n == Some(0) {
        return Err(CliError::Config("thread count must be positive".into()));
    }
    Ok(n)
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let threads = resolve_threads(cli.threads)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(runtime("thread pool"))?;
    pool.install(|| match &cli.command {
        Command::Simulate => cmd_simulate(cli),
        Command::Observe { input } => cmd_observe(cli, input),
        Command::Estimate { input } => cmd_estimate(cli, input),
        Command::Experiment => cmd_experiment(cli),
    })
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(CliError::Config(m)) => {
            eprintln!("config error: {m}");
            2
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            1
        }
    }
}
