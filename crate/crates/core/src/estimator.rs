//! Exhaustive grid search and multi-start box-constrained local ascent.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{ParameterVector, Trajectory};
use crate::kernelscore::{KernelScorer, LinearScorer, OracleObjective};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("every evaluated parameter diverged or was unscorable")]
    AllDiverged,
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("true parameter {index} is zero; relative error undefined")]
    ZeroTrueParameter { index: usize },
    #[error("trajectory mismatch: {0}")]
    TrajectoryMismatch(String),
    #[error("predicted trajectory is identically zero")]
    ZeroPrediction,
}

/// Anything that assigns a score to free parameter values. Larger is better;
/// `−∞` marks an unscorable candidate.
pub trait Objective: Sync {
    fn evaluate(&self, omega: &[f64]) -> f64;
}

impl<F> Objective for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn evaluate(&self, omega: &[f64]) -> f64 {
        self(omega)
    }
}

impl Objective for KernelScorer {
    fn evaluate(&self, omega: &[f64]) -> f64 {
        self.score(omega)
    }
}

impl Objective for LinearScorer {
    fn evaluate(&self, omega: &[f64]) -> f64 {
        self.score(omega)
    }
}

/// The oracle minimizes its misfit, so it is maximized as `−misfit`.
impl Objective for OracleObjective {
    fn evaluate(&self, omega: &[f64]) -> f64 {
        -self.misfit(omega)
    }
}

fn sanitize(s: f64) -> f64 {
    if s.is_nan() {
        f64::NEG_INFINITY
    } else {
        s
    }
}

/// Axis-aligned search set `∏ [lowerᵢ, upperᵢ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParameterBox {
    pub fn new<S: Into<String>>(
        names: impl IntoIterator<Item = S>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self, EstimatorError> {
        let b = Self { names: names.into_iter().map(Into::into).collect(), lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        let m = self.names.len();
        if m == 0 || self.lower.len() != m || self.upper.len() != m {
            return Err(EstimatorError::InvalidBox(format!(
                "{} names, {} lower, {} upper bounds",
                m,
                self.lower.len(),
                self.upper.len()
            )));
        }
        for i in 0..m {
            let (a, b) = (self.lower[i], self.upper[i]);
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(EstimatorError::InvalidBox(format!(
                    "{}: need finite lower < upper, got [{a}, {b}]",
                    self.names[i]
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn contains(&self, omega: &[f64]) -> bool {
        omega.len() == self.dim()
            && omega
                .iter()
                .enumerate()
                .all(|(i, &v)| v >= self.lower[i] && v <= self.upper[i])
    }

    pub fn project(&self, omega: &mut [f64]) {
        for (i, v) in omega.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    pub fn sample_uniform<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim()).map(|i| rng.gen_range(self.lower[i]..=self.upper[i])).collect()
    }

    pub fn vector(&self, values: Vec<f64>) -> ParameterVector {
        ParameterVector { names: self.names.clone(), values }
    }
}

/// Cartesian grid with `points_per_dim[i]` evenly spaced values spanning each box side.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchGrid {
    pub points_per_dim: Vec<usize>,
    /// Lexicographically sorted grid points (first coordinate varies slowest).
    pub points: Vec<Vec<f64>>,
    pub axes: Vec<Vec<f64>>,
}

impl SearchGrid {
    pub fn new(bounds: &ParameterBox, points_per_dim: &[usize]) -> Result<Self, EstimatorError> {
        if points_per_dim.len() != bounds.dim() {
            return Err(EstimatorError::InvalidGrid(format!(
                "{} grid sizes for a {}-dimensional box",
                points_per_dim.len(),
                bounds.dim()
            )));
        }
        if let Some(&p) = points_per_dim.iter().find(|&&p| p < 2) {
            return Err(EstimatorError::InvalidGrid(format!("need >= 2 points per axis, got {p}")));
        }
        let axes: Vec<Vec<f64>> = points_per_dim
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                (0..p)
                    .map(|k| {
                        if k + 1 == p {
                            bounds.upper[i]
                        } else {
                            bounds.lower[i] + bounds.width(i) * k as f64 / (p - 1) as f64
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self::from_axes(axes))
    }

    /// Grid from explicit, strictly increasing axis values.
    pub fn from_axes(axes: Vec<Vec<f64>>) -> Self {
        let mut points: Vec<Vec<f64>> = vec![Vec::new()];
        for axis in &axes {
            points = points
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        Self { points_per_dim: axes.iter().map(Vec::len).collect(), points, axes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Smallest gap between neighbouring values along each axis.
    pub fn spacing(&self) -> Vec<f64> {
        self.axes
            .iter()
            .map(|a| a.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub omega: Vec<f64>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub omega: Vec<f64>,
    pub score: f64,
}

/// Outcome of an estimator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub omega_hat: ParameterVector,
    pub score: f64,
    /// Grid points for the exhaustive search; one final point per start for multi-start.
    pub evaluations: Vec<Evaluation>,
    /// Per-start ascent traces (empty for grid search).
    pub traces: Vec<Vec<TraceRecord>>,
    pub n_ode_solves: usize,
    pub wall_time: f64,
}

impl EstimationResult {
    /// JSON document `{omega_hat, score, errors, n_ode_solves, wall_time, trace}`.
    pub fn to_json(&self, omega_star: Option<&[f64]>) -> serde_json::Value {
        let errors = omega_star.and_then(|s| estimation_error(&self.omega_hat.values, s).ok());
        let omega_hat: serde_json::Map<String, serde_json::Value> = self
            .omega_hat
            .names
            .iter()
            .zip(&self.omega_hat.values)
            .map(|(n, v)| (n.clone(), serde_json::json!(v)))
            .collect();
        serde_json::json!({
            "omega_hat": omega_hat,
            "score": finite_or_null(self.score),
            "errors": errors,
            "n_ode_solves": self.n_ode_solves,
            "wall_time": self.wall_time,
            "trace": self.traces.iter().enumerate().map(|(start, t)| {
                serde_json::json!({
                    "start": start,
                    "records": t.iter().map(|r| serde_json::json!({
                        "iter": r.iter,
                        "omega": r.omega,
                        "score": finite_or_null(r.score),
                    })).collect::<Vec<_>>(),
                })
            }).collect::<Vec<_>>(),
        })
    }
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::Value::Null
    }
}

/// Index of the first maximal score; scores are in grid (lexicographic) order, so
/// ties resolve to the lexicographically smallest point.
fn argmax_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s == f64::NEG_INFINITY {
            continue;
        }
        match best {
            Some(b) if scores[b] >= s => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Scores every grid point and returns the best one.
pub fn grid_search<O: Objective + ?Sized>(
    objective: &O,
    bounds: &ParameterBox,
    grid: &SearchGrid,
) -> Result<EstimationResult, EstimatorError> {
    if grid.is_empty() {
        return Err(EstimatorError::InvalidGrid("empty grid".into()));
    }
    let started = Instant::now();
    let scores: Vec<f64> = grid.points.par_iter().map(|p| sanitize(objective.evaluate(p))).collect();
    let best = argmax_first(&scores).ok_or(EstimatorError::AllDiverged)?;
    let evaluations = grid
        .points
        .iter()
        .zip(&scores)
        .map(|(p, &s)| Evaluation { omega: p.clone(), score: s })
        .collect();
    Ok(EstimationResult {
        omega_hat: bounds.vector(grid.points[best].clone()),
        score: scores[best],
        evaluations,
        traces: Vec::new(),
        n_ode_solves: grid.len(),
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// How multi-start initial points are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StartSampling {
    /// Uniform over the whole box.
    #[default]
    Uniform,
    /// Uniform in `[1 − w, 1 + w] · center`, clipped to the box.
    RelativeWindow { center: Vec<f64>, half_width: f64 },
}

/// Settings for the projected finite-difference ascent and its multi-start driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub n_starts: usize,
    pub max_iters_per_start: usize,
    /// Relative central-difference step.
    pub fd_step: f64,
    /// Initial step, as a fraction of each box side.
    pub initial_step: f64,
    /// Backtracking contraction factor.
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Stop when a (box-scaled) step is shorter than this.
    pub step_tol: f64,
    /// Stop when the score improves by less than this.
    pub score_tol: f64,
    pub seed: u64,
    pub start_sampling: StartSampling,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            n_starts: 10,
            max_iters_per_start: 30,
            fd_step: 1e-3,
            initial_step: 0.1,
            shrink: 0.5,
            max_backtracks: 8,
            step_tol: 1e-8,
            score_tol: 1e-12,
            seed: 0,
            start_sampling: StartSampling::Uniform,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        let bad = |m: &str| Err(EstimatorError::InvalidConfig(m.to_string()));
        if self.n_starts == 0 {
            return bad("n_starts must be >= 1");
        }
        if self.max_iters_per_start == 0 {
            return bad("max_iters_per_start must be >= 1");
        }
        if !(self.fd_step > 0.0 && self.fd_step < 1.0) {
            return bad("fd_step must lie in (0, 1)");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink must lie in (0, 1)");
        }
        if !(self.initial_step > 0.0) {
            return bad("initial_step must be positive");
        }
        Ok(())
    }
}

/// End point, final score and trace of one local ascent.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalResult {
    pub omega: Vec<f64>,
    pub score: f64,
    pub trace: Vec<TraceRecord>,
    pub n_evaluations: usize,
}

struct Counted<'a, O: ?Sized> {
    objective: &'a O,
    calls: usize,
}

impl<O: Objective + ?Sized> Counted<'_, O> {
    fn eval(&mut self, omega: &[f64]) -> f64 {
        self.calls += 1;
        sanitize(self.objective.evaluate(omega))
    }
}

/// Box-projected gradient ascent with central finite differences and backtracking.
/// Only strict improvements are accepted, so trace scores never decrease.
pub fn local_optimize<O: Objective + ?Sized>(
    start: &[f64],
    bounds: &ParameterBox,
    objective: &O,
    config: &OptimizerConfig,
) -> Result<LocalResult, EstimatorError> {
    config.validate()?;
    if start.len() != bounds.dim() {
        return Err(EstimatorError::InvalidConfig(format!(
            "start has {} coordinates, box has {}",
            start.len(),
            bounds.dim()
        )));
    }
    let m = bounds.dim();
    let mut f = Counted { objective, calls: 0 };
    let mut x = start.to_vec();
    bounds.project(&mut x);
    let mut fx = f.eval(&x);
    let mut trace = vec![TraceRecord { iter: 0, omega: x.clone(), score: fx }];
    if fx == f64::NEG_INFINITY {
        return Ok(LocalResult { omega: x, score: fx, trace, n_evaluations: f.calls });
    }
    let widths: Vec<f64> = (0..m).map(|i| bounds.width(i)).collect();
    let mut step = config.initial_step;

    for iter in 1..=config.max_iters_per_start {
        // Gradient in box-normalized coordinates u = (ω − lower) / width.
        let mut grad = vec![0.0; m];
        for i in 0..m {
            let h = config.fd_step * x[i].abs().max(config.fd_step * widths[i]);
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[i] = (x[i] + h).min(bounds.upper[i]);
            minus[i] = (x[i] - h).max(bounds.lower[i]);
            let fp = if plus[i] > x[i] { f.eval(&plus) } else { fx };
            let fm = if minus[i] < x[i] { f.eval(&minus) } else { fx };
            let span = plus[i] - minus[i];
            grad[i] = match (fp.is_finite(), fm.is_finite()) {
                (true, true) if span > 0.0 => (fp - fm) / span,
                (true, false) if plus[i] > x[i] => (fp - fx) / (plus[i] - x[i]),
                (false, true) if minus[i] < x[i] => (fx - fm) / (x[i] - minus[i]),
                _ => 0.0,
            } * widths[i];
        }
        // Drop components that push against an active bound.
        for i in 0..m {
            if (x[i] >= bounds.upper[i] && grad[i] > 0.0) || (x[i] <= bounds.lower[i] && grad[i] < 0.0) {
                grad[i] = 0.0;
            }
        }
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !(gnorm > 0.0) || !gnorm.is_finite() {
            break;
        }

        let mut accepted = None;
        let mut alpha = step;
        for _ in 0..=config.max_backtracks {
            let mut cand: Vec<f64> = (0..m).map(|i| x[i] + alpha * widths[i] * grad[i] / gnorm).collect();
            bounds.project(&mut cand);
            let moved = (0..m).map(|i| ((cand[i] - x[i]) / widths[i]).powi(2)).sum::<f64>().sqrt();
            if cand == x {
                break;
            }
            let fc = f.eval(&cand);
            if fc > fx {
                accepted = Some((cand, fc, moved));
                break;
            }
            alpha *= config.shrink;
        }
        let Some((cand, fc, moved)) = accepted else {
            break;
        };
        let gain = fc - fx;
        x = cand;
        fx = fc;
        trace.push(TraceRecord { iter, omega: x.clone(), score: fx });
        step = (alpha / config.shrink).min(config.initial_step);
        if gain < config.score_tol || moved < config.step_tol {
            break;
        }
    }
    Ok(LocalResult { omega: x, score: fx, trace, n_evaluations: f.calls })
}

/// Draws start points according to `config.start_sampling`.
pub fn draw_starts(bounds: &ParameterBox, config: &OptimizerConfig) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.n_starts)
        .map(|_| match &config.start_sampling {
            StartSampling::Uniform => bounds.sample_uniform(&mut rng),
            StartSampling::RelativeWindow { center, half_width } => {
                let mut p: Vec<f64> = center
                    .iter()
                    .map(|&c| c * rng.gen_range(1.0 - half_width..=1.0 + half_width))
                    .collect();
                bounds.project(&mut p);
                p
            }
        })
        .collect()
}

/// Runs [`local_optimize`] from seeded random starts and keeps the best end point.
pub fn multistart_estimate<O: Objective + ?Sized>(
    objective: &O,
    bounds: &ParameterBox,
    config: &OptimizerConfig,
) -> Result<EstimationResult, EstimatorError> {
    config.validate()?;
    if let StartSampling::RelativeWindow { center, .. } = &config.start_sampling {
        if center.len() != bounds.dim() {
            return Err(EstimatorError::InvalidConfig("window center dimension".into()));
        }
    }
    let started = Instant::now();
    let starts = draw_starts(bounds, config);
    let runs: Vec<LocalResult> = starts
        .par_iter()
        .map(|s| local_optimize(s, bounds, objective, config))
        .collect::<Result<_, _>>()?;
    let finals: Vec<f64> = runs.iter().map(|r| r.score).collect();
    let best = argmax_first(&finals).ok_or(EstimatorError::AllDiverged)?;
    Ok(EstimationResult {
        omega_hat: bounds.vector(runs[best].omega.clone()),
        score: runs[best].score,
        evaluations: runs.iter().map(|r| Evaluation { omega: r.omega.clone(), score: r.score }).collect(),
        n_ode_solves: runs.iter().map(|r| r.n_evaluations).sum(),
        traces: runs.into_iter().map(|r| r.trace).collect(),
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// Componentwise relative error `|ω̂ⱼ − ω*ⱼ| / |ω*ⱼ|`.
pub fn estimation_error(omega_hat: &[f64], omega_star: &[f64]) -> Result<Vec<f64>, EstimatorError> {
    if omega_hat.len() != omega_star.len() {
        return Err(EstimatorError::InvalidConfig("parameter length mismatch".into()));
    }
    omega_hat
        .iter()
        .zip(omega_star)
        .enumerate()
        .map(|(i, (h, s))| {
            if *s == 0.0 {
                Err(EstimatorError::ZeroTrueParameter { index: i })
            } else {
                Ok((h - s).abs() / s.abs())
            }
        })
        .collect()
}

/// Normalized squared misfit `Σ‖x̂ − x*‖² / Σ‖x̂‖²` between two sampled trajectories.
pub fn prediction_error(traj_hat: &Trajectory, traj_star: &Trajectory) -> Result<f64, EstimatorError> {
    if traj_hat.states.dim() != traj_star.states.dim() {
        return Err(EstimatorError::TrajectoryMismatch(format!(
            "{:?} vs {:?}",
            traj_hat.states.dim(),
            traj_star.states.dim()
        )));
    }
    if (traj_hat.dt - traj_star.dt).abs() > 1e-12 * traj_hat.dt.abs().max(1.0) {
        return Err(EstimatorError::TrajectoryMismatch(format!(
            "dt {} vs {}",
            traj_hat.dt, traj_star.dt
        )));
    }
    let num: f64 = traj_hat
        .states
        .iter()
        .zip(traj_star.states.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let den: f64 = traj_hat.states.iter().map(|a| a * a).sum();
    if den == 0.0 {
        return Err(EstimatorError::ZeroPrediction);
    }
    Ok(num / den)
}
