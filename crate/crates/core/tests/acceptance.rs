//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use dynofit::dynamics::{integrate_substeps, pendulum_energy, rk4_step};
use dynofit::estimator::{grid_search, SearchGrid};
use dynofit::harness::report::{mean, median};
use dynofit::harness::{cli_main, run_experiment, ExperimentConfig, ExperimentKind, ExperimentReport, ObservationConfig};
use dynofit::kernelscore::{centered_score, CenteringContext, CenteredKernel};
use dynofit::{gaussian_gram, maxmin_bandwidth, EpsPolicy, KernelError, KernelScorer, ModelProblem, ParameterBox, SystemSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(limit_s: u64, started: Instant) -> (bool, String) {
    let t = started.elapsed();
    (t < Duration::from_secs(limit_s), format!("{:.1}s/{limit_s}s", t.as_secs_f64()))
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let bounds = ParameterBox::new(["sigma", "rho"], vec![15.0, 40.0], vec![25.0, 80.0]).unwrap();
    let grid = SearchGrid::new(&bounds, &[20, 20]).unwrap();
    let mut notes = Vec::new();
    let mut pass = true;
    for (k, &star_index) in [0usize, 137, 252, 399].iter().enumerate() {
        let star = grid.points[star_index].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        let x0: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
        let params = dynofit::ParameterVector::new(["sigma", "rho", "beta"], vec![star[0], star[1], 8.0 / 3.0]).unwrap();
        let mut problem = ModelProblem::all_free(SystemSpec::lorenz63(), params, x0, 200, 0.01);
        problem.free = vec![0, 1];
        let truth = problem.simulate(&star).unwrap();
        let scorer = KernelScorer::new(problem, truth.states.view(), EpsPolicy::MaxMin).unwrap();
        let r = grid_search(&scorer, &bounds, &grid).unwrap();
        let runner_up = r
            .evaluations
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != star_index)
            .map(|(_, e)| e.score)
            .fold(f64::NEG_INFINITY, f64::max);
        let ok = r.omega_hat.values == star && r.score >= 1.0 - 1e-9 && runner_up < r.score;
        pass &= ok;
        notes.push(format!("s*={:.12} next={:.6}", r.score, runner_up));
    }
    let (fast, t) = within(30, started);
    outcome(pass && fast, format!("exact recovery at 4 grid points ({}) in {t}", notes.join(", ")))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = gaussian(&mut rng, 50, 2);
    let phi = Array2::from_shape_fn((50, 5), |(i, j)| {
        let (a, b) = (x[[i, 0]], x[[i, 1]]);
        [a, b, a * a, a * b, b * b][j]
    });
    let ky = phi.dot(&phi.t());
    let h = CenteringContext::new(50).unwrap().matrix();
    let trace: f64 = ky.dot(&h).diag().sum();
    let centered = CenteringContext::new(50).unwrap().center_rows(phi.view());
    let frob: f64 = centered.iter().map(|v| v * v).sum();
    let gap = (trace - frob).abs();
    outcome(gap < 1e-10, format!("|Tr(KH) - |Phi_c|^2| = {gap:.3e}"))
}

fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Array2<f64> {
    let m = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = m.qr().q();
    Array2::from_shape_fn((d, d), |(i, j)| q[(i, j)])
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let s = gaussian(&mut rng, 80, 4);
        let base = gaussian_gram(s.view(), maxmin_bandwidth(s.view()).unwrap()).unwrap().k;
        let mut variants = vec![s.mapv(|v| 0.01 * v), s.mapv(|v| 100.0 * v)];
        let q = random_orthogonal(&mut rng, 4);
        let shift = Array1::from_shape_fn(4, |_| rng.gen_range(-50.0..50.0));
        variants.push(s.dot(&q.t()) + &shift);
        for v in variants {
            let k = gaussian_gram(v.view(), maxmin_bandwidth(v.view()).unwrap()).unwrap().k;
            worst = worst.max(max_abs_diff(&base, &k));
        }
    }
    outcome(worst < 1e-12, format!("max entrywise change {worst:.3e} under scaling and rigid motion"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..200 {
        let n = rng.gen_range(3..40);
        let (dx, dy) = (rng.gen_range(1..5), rng.gen_range(1..30));
        let scale: f64 = rng.gen_range(0.1..10.0);
        let x = gaussian(&mut rng, n, dx);
        let y = gaussian(&mut rng, n, dy).mapv(|v| v * scale);
        let kx = gaussian_gram(x.view(), maxmin_bandwidth(x.view()).unwrap()).unwrap();
        let ky = gaussian_gram(y.view(), maxmin_bandwidth(y.view()).unwrap()).unwrap();
        let s = centered_score(&kx, &ky).unwrap().value();
        lo = lo.min(s);
        hi = hi.max(s);
    }
    let bounded = lo >= -1e-12 && hi <= 1.0;
    let mut pairs_ok = true;
    for _ in 0..50 {
        let x = gaussian(&mut rng, 2, 3);
        let y = gaussian(&mut rng, 2, 7);
        let kx = gaussian_gram(x.view(), maxmin_bandwidth(x.view()).unwrap()).unwrap();
        let ky = gaussian_gram(y.view(), maxmin_bandwidth(y.view()).unwrap()).unwrap();
        pairs_ok &= (centered_score(&kx, &ky).unwrap().value() - 1.0).abs() < 1e-12;
    }
    let ones = Array2::<f64>::ones((6, 6));
    let degenerate = matches!(CenteredKernel::new(ones.view()), Err(KernelError::DegenerateKernel(_)));
    outcome(
        bounded && pairs_ok && degenerate,
        format!("s in [{lo:.3e}, {hi:.6}]; N=2 gives 1: {pairs_ok}; all-ones degenerate: {degenerate}"),
    )
}

fn criterion_5() -> Outcome {
    let growth = SystemSpec::custom(1, &["a"], |x, p, out| out[0] = p[0] * x[0]);
    let err = |dt: f64| {
        let steps = (1.0 / dt).round() as usize;
        let t = integrate_substeps(&growth, &[1.0], &[1.0], 2, 1.0, steps).unwrap();
        (t.states[[1, 0]] - std::f64::consts::E).abs()
    };
    let ratios: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&dt| err(dt) / err(dt / 2.0)).collect();
    let order_ok = ratios.iter().all(|r| (r - 16.0).abs() <= 2.0);

    let (l1, l2, m2, g) = (1.5, 1.0, 2.0, 9.8);
    let system = SystemSpec::double_pendulum(g);
    let theta0 = [0.9, -0.4, 0.3, -0.7];
    let traj = integrate_substeps(&system, &[l1, l2, m2], &theta0, 10_001, 0.001, 1).unwrap();
    let e0 = pendulum_energy(theta0, l1, l2, 1.0, m2, g);
    let drift = traj
        .states
        .axis_iter(Axis(0))
        .map(|s| (pendulum_energy([s[0], s[1], s[2], s[3]], l1, l2, 1.0, m2, g) - e0).abs())
        .fold(0.0, f64::max);
    // One step of dt = 0.1 reproduces the quartic Taylor polynomial of e^0.1.
    let one = rk4_step(|x, out| out[0] = x[0], &[1.0], 0.1).unwrap()[0];
    let step_ok = (one - 1.105_170_833_333_333_3).abs() < 1e-15;
    outcome(
        order_ok && drift < 1e-5 && step_ok,
        format!("error ratios {:?}; energy drift {drift:.3e} over T=10", ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>()),
    )
}

fn overall_median(report: &ExperimentReport, group: &str, method: &str) -> f64 {
    report.summary_row(group, method, "overall").and_then(|r| r.median).unwrap_or(f64::INFINITY)
}

fn param_median(report: &ExperimentReport, method: &str, param: &str) -> f64 {
    report.summary_row("all", method, param).and_then(|r| r.median).unwrap_or(f64::INFINITY)
}

fn criterion_6() -> Outcome {
    let started = Instant::now();
    let config = ExperimentConfig::defaults(ExperimentKind::PendulumEstimate);
    let report = run_experiment(&config);
    let spacing = 9.0 / 7.0;
    let mut notes = Vec::new();
    let mut bound_ok = true;
    for (j, name) in report.parameter_names.iter().enumerate() {
        let typical = median(&report.records.iter().map(|r| r.omega_star[j]).collect::<Vec<_>>()).unwrap();
        let bound = 2.0 * spacing / typical;
        let (g, m) = (param_median(&report, "grid", name), param_median(&report, "multistart", name));
        bound_ok &= g <= bound;
        notes.push(format!("{name}: grid {g:.3} multistart {m:.3} bound {bound:.3}"));
    }
    let (g, m) = (overall_median(&report, "all", "grid"), overall_median(&report, "all", "multistart"));
    let ordered = m <= g;

    let mut video = ExperimentConfig::defaults(ExperimentKind::PendulumEstimate);
    video.n_instances = 1;
    video.observation = ObservationConfig::Video;
    video.methods.truncate(1);
    let vr = run_experiment(&video);
    let rec = &vr.records[0];
    let vm = &rec.methods[0];
    let video_ok = vm.failure.is_none() && vm.score.is_some_and(f64::is_finite) && rec.clipped_frames == Some(0);
    let (fast, t) = within(600, started);
    outcome(
        bound_ok && ordered && video_ok && fast,
        format!(
            "{}; overall grid {g:.3} >= multistart {m:.3}: {ordered}; video errors {:?}; {t}",
            notes.join("; "),
            vm.errors.as_ref().map(|e| e.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>())
        ),
    )
}

fn criterion_7() -> Outcome {
    let started = Instant::now();
    let report = run_experiment(&ExperimentConfig::defaults(ExperimentKind::LorenzEstimate));
    let (s, r) = (param_median(&report, "grid", "sigma"), param_median(&report, "grid", "rho"));
    let noisy = run_experiment(&ExperimentConfig::defaults(ExperimentKind::LorenzNoisy));
    let finite = noisy
        .records
        .iter()
        .flat_map(|r| &r.methods)
        .all(|m| m.failure.is_none() && m.score.is_some_and(f64::is_finite));
    let (fast, t) = within(300, started);
    outcome(
        r <= 0.05 && s <= 0.25 && finite && fast,
        format!("median sigma {s:.4} (<=0.25), rho {r:.4} (<=0.05); noisy scores finite: {finite}; {t}"),
    )
}

fn criterion_8() -> Outcome {
    let report = run_experiment(&ExperimentConfig::defaults(ExperimentKind::Baselines));
    let k = overall_median(&report, "all", "grid");
    let l1 = overall_median(&report, "all", "linear1");
    let l2 = overall_median(&report, "all", "linear2");
    outcome(l1 > k && l2 > k, format!("medians kernel {k:.4}, linear1 {l1:.4}, linear2 {l2:.4}"))
}

fn criterion_9() -> Outcome {
    let started = Instant::now();
    let config = ExperimentConfig::defaults(ExperimentKind::GridRefinement);
    let report = run_experiment(&config);
    let medians: Vec<f64> = config
        .grid_sizes
        .iter()
        .map(|g| overall_median(&report, &format!("grid={g}"), "grid"))
        .collect();
    let coarse = medians[0];
    let fine = *medians.last().unwrap();
    let (fast, t) = within(300, started);
    outcome(
        fine * 3.0 <= coarse && config.n_instances == 20 && fast,
        format!("median error by grid size {:?}: {:?}; {t}", config.grid_sizes, medians.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>()),
    )
}

fn criterion_10() -> Outcome {
    let config = ExperimentConfig::defaults(ExperimentKind::SignalLength);
    let report = run_experiment(&config);
    let means: Vec<f64> = report
        .groups()
        .iter()
        .map(|g| {
            let errs: Vec<f64> = report
                .records
                .iter()
                .filter(|r| &r.group == g)
                .flat_map(|r| r.methods[0].errors.clone().unwrap_or_default())
                .collect();
            mean(&errs).unwrap_or(f64::INFINITY)
        })
        .collect();
    outcome(
        means.last().unwrap() < &means[0],
        format!("mean error by T_f {:?}: {:?}", config.t_f, means.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>()),
    )
}

fn criterion_11() -> Outcome {
    std::env::remove_var("DYNOFIT_THREADS");
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        r#"{"experiment": "pendulum_estimate", "n_instances": 3, "n": 80,
            "methods": [{"kind": "grid", "points_per_dim": [4, 4, 4]},
                        {"kind": "multistart", "optimizer": {"n_starts": 3, "max_iters_per_start": 5}}]}"#,
        r#"{"experiment": "lorenz_noisy", "n_instances": 3, "n": 100}"#,
    ];
    let mut identical = true;
    for (k, text) in configs.iter().enumerate() {
        let path = dir.path().join(format!("c{k}.json"));
        std::fs::write(&path, text).unwrap();
        let mut bytes = Vec::new();
        for threads in ["1", "8"] {
            let out = dir.path().join(format!("out{k}_{threads}"));
            let code = cli_main([
                "dynofit",
                "experiment",
                "--config",
                path.to_str().unwrap(),
                "--seed",
                "7",
                "--threads",
                threads,
                "--out",
                out.to_str().unwrap(),
            ]);
            assert_eq!(code, 0);
            bytes.push(std::fs::read(out.join("report.json")).unwrap());
        }
        identical &= bytes[0] == bytes[1];
    }
    outcome(identical, "report.json byte-identical for --threads 1 and 8 (2 experiments)")
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("exact recovery under isometric observation", criterion_1),
        ("centered trace identity", criterion_2),
        ("kernel invariances", criterion_3),
        ("score bounds and degeneracy", criterion_4),
        ("RK4 order and energy drift", criterion_5),
        ("desk-scale pendulum estimation", criterion_6),
        ("desk-scale Lorenz estimation", criterion_7),
        ("baseline ordering", criterion_8),
        ("grid refinement trend", criterion_9),
        ("signal-length trend", criterion_10),
        ("determinism across thread counts", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("criterion {:>2} {tag} {name} [{:.1}s]: {}", i + 1, started.elapsed().as_secs_f64(), o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
