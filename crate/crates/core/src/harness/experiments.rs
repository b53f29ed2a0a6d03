//! Experiment runner. Every instance draws its randomness from a generator seeded by
//! `(master seed, instance number)`, so results do not depend on scheduling.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind, IcComponents, MethodConfig, ObservationConfig};
use super::report::{median_ratios, summarize, ExperimentReport, InstanceRecord, MethodRecord};
use crate::dynamics::{integrate_substeps, SystemSpec, Trajectory};
use crate::estimator::{
    estimation_error, grid_search, multistart_estimate, prediction_error, EstimationResult, Objective,
    SearchGrid,
};
use crate::kernelscore::{
    EpsPolicy, FeatureMap, KernelScorer, LinearScorer, LinearVariant, ModelProblem, ObservationMap,
    OracleObjective,
};
use crate::observation::{
    legendre_basis, lorenz_embedding, lorenz_partial_embedding, observe_linear, observe_lorenz_full,
    observe_lorenz_noisy, observe_lorenz_partial, render_pendulum_video, Canvas, NoiseSpec,
};
use crate::ParameterVector;

/// Seed of instance `instance` under `master`; independent ChaCha stream per instance.
pub fn instance_seed(master: u64, instance: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(instance as u64 + 1);
    rng.next_u64()
}

/// Random `dim × d` matrix with `N(0, 1/dim)` entries, so `‖Ax‖ ≈ ‖x‖`.
pub fn random_linear_map(dim: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (dim as f64).sqrt();
    Array2::from_shape_fn((dim, d), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * scale
    })
}

/// The observation matrix shared by all instances of an experiment.
fn shared_map(config: &ExperimentConfig) -> Option<Array2<f64>> {
    match config.observation {
        ObservationConfig::LinearMap { dim } => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(0);
            Some(random_linear_map(dim, 4, rng.next_u64()))
        }
        _ => None,
    }
}

struct Task {
    index: usize,
    instance: usize,
    group: String,
    n: usize,
    grid_override: Option<usize>,
}

fn tasks(config: &ExperimentConfig) -> Vec<Task> {
    let mut out = Vec::new();
    let mut push = |group: String, n: usize, grid_override: Option<usize>| {
        for instance in 0..config.n_instances {
            out.push(Task { index: out.len(), instance, group: group.clone(), n, grid_override });
        }
    };
    match config.experiment {
        ExperimentKind::SignalLength => {
            for &t in &config.t_f {
                push(format!("t_f={t}"), (t / config.dt).round() as usize, None);
            }
        }
        ExperimentKind::GridRefinement => {
            for &g in &config.grid_sizes {
                push(format!("grid={g}"), config.n, Some(g));
            }
        }
        _ => push("all".to_string(), config.n, None),
    }
    out
}

/// The true system of one instance.
struct Truth {
    system: SystemSpec,
    params: ParameterVector,
    free: Vec<usize>,
    x0: Vec<f64>,
}

fn draw_truth(config: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Truth {
    let b = &config.bounds;
    let draw_free = |rng: &mut ChaCha8Rng, i: usize| match &config.parameter_set {
        Some(set) => set[rng.gen_range(0..set.len())],
        None => rng.gen_range(b.lower[i]..=b.upper[i]),
    };
    if config.experiment.is_pendulum() {
        let system = SystemSpec::double_pendulum(config.gravity);
        let values: Vec<f64> = (0..3).map(|i| draw_free(rng, i)).collect();
        let normal = Normal::new(0.0, config.ic_std).expect("validated ic_std");
        let mut x0: Vec<f64> = (0..4).map(|_| normal.sample(rng)).collect();
        if config.ic_components == IcComponents::Angles {
            x0[2] = 0.0;
            x0[3] = 0.0;
        }
        let params = ParameterVector::new(system.parameter_names.clone(), values).expect("finite draws");
        return Truth { system, params, free: vec![0, 1, 2], x0 };
    }
    let system = SystemSpec::lorenz63();
    let mut values = Vec::with_capacity(3);
    let mut free = Vec::new();
    for (k, name) in system.parameter_names.iter().enumerate() {
        let v = match b.names.iter().position(|n| n == name) {
            Some(i) => {
                free.push(k);
                draw_free(rng, i)
            }
            None if name == "rho" => rng.gen_range(40.0..=80.0),
            None if name == "beta" => config.beta,
            None => 10.0,
        };
        values.push(v);
    }
    let x0: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..=1.0)).collect();
    let params = ParameterVector::new(system.parameter_names.clone(), values).expect("finite draws");
    Truth { system, params, free, x0 }
}

fn cartesian_features() -> FeatureMap {
    FeatureMap::PendulumCartesian { l1_index: 0, l2_index: 1 }
}

/// Coordinates the kernel score is computed on for a given observation.
fn kernel_features(observation: &ObservationConfig, pendulum: bool) -> FeatureMap {
    match observation {
        ObservationConfig::Identity => FeatureMap::Identity,
        ObservationConfig::LorenzPartial { .. } => FeatureMap::Coordinates { indices: vec![0, 1] },
        _ if pendulum => cartesian_features(),
        _ => FeatureMap::Identity,
    }
}

/// Features plus closed-form map used by the oracle misfit.
fn oracle_map(observation: &ObservationConfig, a: Option<&Array2<f64>>) -> Option<(FeatureMap, ObservationMap)> {
    let copy: ObservationMap = Arc::new(|x, out| out.copy_from_slice(x));
    match observation {
        ObservationConfig::Identity => Some((FeatureMap::Identity, copy)),
        ObservationConfig::Cartesian => Some((cartesian_features(), copy)),
        ObservationConfig::LinearMap { .. } => {
            let a = a?.clone();
            Some((
                cartesian_features(),
                Arc::new(move |x, out| {
                    for (o, row) in out.iter_mut().zip(a.rows()) {
                        *o = row.iter().zip(x).map(|(p, q)| p * q).sum();
                    }
                }),
            ))
        }
        ObservationConfig::LorenzFull | ObservationConfig::LorenzNoisy { .. } => {
            let basis = legendre_basis();
            Some((FeatureMap::Identity, Arc::new(move |x, out| lorenz_embedding(&basis, x, out))))
        }
        ObservationConfig::LorenzPartial { coefficients } => {
            let basis = legendre_basis();
            let c = *coefficients;
            Some((FeatureMap::Identity, Arc::new(move |x, out| lorenz_partial_embedding(&basis, c, x, out))))
        }
        ObservationConfig::Video => None,
    }
}

/// Observed series for one instance, plus the number of clipped video frames.
fn observe(
    config: &ExperimentConfig,
    truth: &Truth,
    traj: &Trajectory,
    a: Option<&Array2<f64>>,
    rng: &mut ChaCha8Rng,
) -> Result<(Array2<f64>, Option<usize>), String> {
    let cart = || cartesian_features().apply(traj, &truth.params.values);
    let series = match &config.observation {
        ObservationConfig::Identity => return Ok((traj.states.clone(), None)),
        ObservationConfig::Cartesian => return Ok((cart().states, None)),
        ObservationConfig::LinearMap { .. } => observe_linear(&cart(), a.expect("shared map"), 0.0, 0),
        ObservationConfig::Video => {
            let p = &truth.params.values;
            let video = render_pendulum_video(&cart(), &Canvas::for_lengths(p[0], p[1])).map_err(|e| e.to_string())?;
            return Ok((video.series.samples, Some(video.clipped_frames.len())));
        }
        ObservationConfig::LorenzFull => observe_lorenz_full(traj),
        ObservationConfig::LorenzNoisy { sigma } => {
            observe_lorenz_noisy(traj, &NoiseSpec::gaussian(*sigma, rng.next_u64()))
        }
        ObservationConfig::LorenzPartial { coefficients } => observe_lorenz_partial(traj, *coefficients),
    };
    series.map(|s| (s.samples, None)).map_err(|e| e.to_string())
}

fn grid_for(config: &ExperimentConfig, method: &MethodConfig, grid_override: Option<usize>) -> Result<SearchGrid, String> {
    let bounds = &config.bounds;
    if let (true, Some(set)) = (config.grid_on_parameter_set, &config.parameter_set) {
        let mut axis = set.clone();
        axis.sort_by(f64::total_cmp);
        axis.dedup();
        return Ok(SearchGrid::from_axes(vec![axis; bounds.dim()]));
    }
    let points: Vec<usize> = match grid_override {
        Some(g) => vec![g; bounds.dim()],
        None => method.points().expect("grid method").to_vec(),
    };
    SearchGrid::new(bounds, &points).map_err(|e| e.to_string())
}

fn run_grid<O: Objective + ?Sized>(
    objective: &O,
    config: &ExperimentConfig,
    method: &MethodConfig,
    grid_override: Option<usize>,
) -> Result<EstimationResult, String> {
    let grid = grid_for(config, method, grid_override)?;
    grid_search(objective, &config.bounds, &grid).map_err(|e| e.to_string())
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    problem: ModelProblem,
    observations: &'a Array2<f64>,
    truth_states: &'a Trajectory,
    omega_star: Vec<f64>,
    a: Option<&'a Array2<f64>>,
    seed: u64,
    grid_override: Option<usize>,
}

fn run_method(ctx: &Context, method_index: usize, method: &MethodConfig) -> MethodRecord {
    let label = method.label();
    let bounds = &ctx.config.bounds;
    let obs = ctx.observations.view();
    let started = Instant::now();
    let outcome: Result<EstimationResult, String> = match method {
        MethodConfig::Grid { .. } => KernelScorer::new(ctx.problem.clone(), obs, EpsPolicy::MaxMin)
            .map_err(|e| e.to_string())
            .and_then(|s| run_grid(&s, ctx.config, method, ctx.grid_override)),
        MethodConfig::Multistart { optimizer } => {
            KernelScorer::new(ctx.problem.clone(), obs, EpsPolicy::MaxMin).map_err(|e| e.to_string()).and_then(|s| {
                let mut opt = optimizer.clone();
                opt.seed = instance_seed(ctx.seed ^ optimizer.seed, method_index);
                multistart_estimate(&s, bounds, &opt).map_err(|e| e.to_string())
            })
        }
        MethodConfig::Linear1 { .. } | MethodConfig::Linear2 { .. } => {
            let variant = if matches!(method, MethodConfig::Linear1 { .. }) {
                LinearVariant::CrossCovariance
            } else {
                LinearVariant::LinearGram
            };
            LinearScorer::new(ctx.problem.clone(), obs, variant)
                .map_err(|e| e.to_string())
                .and_then(|s| run_grid(&s, ctx.config, method, ctx.grid_override))
        }
        MethodConfig::Oracle { .. } => match oracle_map(&ctx.config.observation, ctx.a) {
            Some((features, observation_map)) => {
                let oracle = OracleObjective {
                    problem: ModelProblem { features, ..ctx.problem.clone() },
                    observation_map,
                    observations: ctx.observations.clone(),
                };
                run_grid(&oracle, ctx.config, method, ctx.grid_override)
            }
            None => Err("no closed-form observation map".into()),
        },
    };
    let result = match outcome {
        Ok(r) => r,
        Err(e) => return MethodRecord { wall_time: started.elapsed().as_secs_f64(), ..MethodRecord::failed(label, e) },
    };
    let hat = result.omega_hat.values.clone();
    let errors = estimation_error(&hat, &ctx.omega_star).ok();
    let prediction = ctx
        .problem
        .simulate(&hat)
        .ok()
        .and_then(|t| prediction_error(&t, ctx.truth_states).ok());
    MethodRecord {
        method: label.to_string(),
        omega_hat: Some(hat),
        errors,
        prediction_error: prediction.filter(|p| p.is_finite()),
        score: Some(result.score).filter(|s| s.is_finite()),
        n_ode_solves: result.n_ode_solves,
        failure: None,
        wall_time: started.elapsed().as_secs_f64(),
        traces: result.traces,
    }
}

fn run_task(config: &ExperimentConfig, a: Option<&Array2<f64>>, task: &Task) -> InstanceRecord {
    let seed = instance_seed(config.seed, task.instance);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = draw_truth(config, &mut rng);
    let omega_star: Vec<f64> = truth.free.iter().map(|&i| truth.params.values[i]).collect();
    let known: BTreeMap<String, f64> = (0..truth.params.len())
        .filter(|i| !truth.free.contains(i))
        .map(|i| (truth.params.names[i].clone(), truth.params.values[i]))
        .collect();
    let mut record = InstanceRecord {
        index: task.index,
        instance: task.instance,
        group: task.group.clone(),
        seed,
        omega_star: omega_star.clone(),
        known,
        x0: truth.x0.clone(),
        n: task.n,
        clipped_frames: None,
        failure: None,
        methods: Vec::new(),
    };
    let fail = |mut record: InstanceRecord, reason: String| {
        record.methods = config.methods.iter().map(|m| MethodRecord::failed(m.label(), reason.clone())).collect();
        record.failure = Some(reason);
        record
    };
    let traj = match integrate_substeps(&truth.system, &truth.params.values, &truth.x0, task.n, config.dt, config.substeps) {
        Ok(t) => t,
        Err(e) => return fail(record, format!("true trajectory: {e}")),
    };
    let (observations, clipped) = match observe(config, &truth, &traj, a, &mut rng) {
        Ok(o) => o,
        Err(e) => return fail(record, format!("observation: {e}")),
    };
    record.clipped_frames = clipped;
    let problem = ModelProblem {
        system: truth.system.clone(),
        base_params: truth.params.clone(),
        free: truth.free.clone(),
        x0: truth.x0.clone(),
        n: task.n,
        dt: config.dt,
        substeps: config.substeps,
        features: kernel_features(&config.observation, config.experiment.is_pendulum()),
    };
    let ctx = Context {
        config,
        problem,
        observations: &observations,
        truth_states: &traj,
        omega_star,
        a,
        seed,
        grid_override: task.grid_override,
    };
    record.methods = config.methods.iter().enumerate().map(|(i, m)| run_method(&ctx, i, m)).collect();
    record
}

/// Runs every instance of `config` and assembles the report.
pub fn run_experiment(config: &ExperimentConfig) -> ExperimentReport {
    let a = shared_map(config);
    let records: Vec<InstanceRecord> = tasks(config).par_iter().map(|t| run_task(config, a.as_ref(), t)).collect();
    let parameter_names = config.bounds.names.clone();
    let summary = summarize(&records, &parameter_names);
    let ratios = median_ratios(&summary, "grid");
    ExperimentReport { config: config.clone(), parameter_names, records, summary, ratios }
}
