//! Gaussian Gram matrices and the normalized cross-dependence score.
//!
//! The score compares the doubly-centered model kernel `H Kˣ(ω) H` with the
//! doubly-centered observation kernel `H Kʸ H` through their normalized
//! Frobenius inner product. Bandwidths follow the max-min rule, which makes
//! each Gram matrix invariant to rescaling, rotating or translating the
//! samples it is built from.

use std::io::Write;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Axis, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{integrate_substeps, pendulum_cartesian, DynamicsError, ParameterVector, SystemSpec, Trajectory};

/// Centered kernels whose Frobenius norm falls below this are rejected.
pub const DEGENERATE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("degenerate kernel: centered Frobenius norm {0:e} is below tolerance")]
    DegenerateKernel(f64),
    #[error("size mismatch: {0} vs {1} samples")]
    SizeMismatch(usize, usize),
    #[error("invalid bandwidth {0}")]
    InvalidBandwidth(f64),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Symmetric Gaussian kernel matrix with its bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub k: Array2<f64>,
    pub epsilon: f64,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for row in self.k.rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// The centering projector `H = I − 11ᵀ/N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CenteringContext {
    pub n: usize,
}

impl CenteringContext {
    pub fn new(n: usize) -> Result<Self, KernelError> {
        if n < 2 {
            return Err(KernelError::DegenerateData(format!("need N >= 2, got {n}")));
        }
        Ok(Self { n })
    }

    pub fn matrix(&self) -> Array2<f64> {
        let inv = 1.0 / self.n as f64;
        Array2::from_shape_fn((self.n, self.n), |(i, j)| if i == j { 1.0 - inv } else { -inv })
    }

    /// `H K H` computed from row/column means.
    pub fn double_center(&self, k: ArrayView2<f64>) -> Array2<f64> {
        let row_means = k.mean_axis(Axis(1)).expect("non-empty");
        let col_means = k.mean_axis(Axis(0)).expect("non-empty");
        let grand = row_means.mean().expect("non-empty");
        let mut out = k.to_owned();
        Zip::indexed(&mut out).for_each(|(i, j), v| {
            *v = *v - row_means[i] - col_means[j] + grand;
        });
        out
    }

    /// Subtracts the column means of a row-per-sample array.
    pub fn center_rows(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        &x - &mean
    }
}

/// A normalized dependence score in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ScoreValue(f64);

impl ScoreValue {
    pub fn new(s: f64) -> Result<Self, KernelError> {
        if s.is_nan() {
            return Err(KernelError::DegenerateData("NaN score".into()));
        }
        Ok(Self(s.clamp(-1.0, 1.0)))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Pairwise squared Euclidean distances between the rows of `samples`.
pub fn pairwise_sq_distances(samples: ArrayView2<f64>) -> Array2<f64> {
    let n = samples.nrows();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = samples.row(i);
            (i + 1..n)
                .map(|j| a.iter().zip(samples.row(j)).map(|(u, v)| (u - v) * (u - v)).sum())
                .collect()
        })
        .collect();
    let mut out = Array2::zeros((n, n));
    for (i, row) in upper.into_iter().enumerate() {
        for (offset, v) in row.into_iter().enumerate() {
            let j = i + 1 + offset;
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

fn maxmin_from_sq_distances(d2: &Array2<f64>) -> Result<f64, KernelError> {
    let n = d2.nrows();
    if n < 2 {
        return Err(KernelError::DegenerateData(format!("need N >= 2, got {n}")));
    }
    let eps = (0..n)
        .map(|j| {
            (0..n)
                .filter(|&i| i != j)
                .map(|i| d2[[i, j]])
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(KernelError::DegenerateData(
            "all samples coincide; max-min bandwidth is zero".into(),
        ));
    }
    Ok(eps)
}

/// Max-min bandwidth: the largest nearest-neighbour squared distance.
pub fn maxmin_bandwidth(samples: ArrayView2<f64>) -> Result<f64, KernelError> {
    maxmin_from_sq_distances(&pairwise_sq_distances(samples))
}

fn gram_from_sq_distances(d2: Array2<f64>, epsilon: f64) -> Result<GramMatrix, KernelError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(KernelError::InvalidBandwidth(epsilon));
    }
    let k = d2.mapv_into(|v| (-v / epsilon).exp());
    Ok(GramMatrix { k, epsilon })
}

/// `K_ij = exp(−‖s_i − s_j‖² / ε)`.
pub fn gaussian_gram(samples: ArrayView2<f64>, epsilon: f64) -> Result<GramMatrix, KernelError> {
    gram_from_sq_distances(pairwise_sq_distances(samples), epsilon)
}

/// Bandwidth selection for a Gaussian kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum EpsPolicy {
    #[default]
    MaxMin,
    Fixed(f64),
}

/// Gram matrix with the bandwidth chosen by `policy`.
pub fn gram_with_policy(samples: ArrayView2<f64>, policy: EpsPolicy) -> Result<GramMatrix, KernelError> {
    let d2 = pairwise_sq_distances(samples);
    let eps = match policy {
        EpsPolicy::MaxMin => maxmin_from_sq_distances(&d2)?,
        EpsPolicy::Fixed(e) => e,
    };
    gram_from_sq_distances(d2, eps)
}

const FUSED_BLOCK: usize = 32;

/// A doubly-centered kernel together with its Frobenius norm.
#[derive(Debug, Clone)]
pub struct CenteredKernel {
    pub hkh: Array2<f64>,
    pub norm: f64,
}

impl CenteredKernel {
    pub fn new(k: ArrayView2<f64>) -> Result<Self, KernelError> {
        let ctx = CenteringContext::new(k.nrows())?;
        let hkh = ctx.double_center(k);
        let norm = frobenius_inner(&hkh, &hkh).sqrt();
        if !(norm >= DEGENERATE_TOLERANCE) {
            return Err(KernelError::DegenerateKernel(norm));
        }
        Ok(Self { hkh, norm })
    }

    pub fn n(&self) -> usize {
        self.hkh.nrows()
    }

    /// Alignment of the Gaussian kernel of `samples` with `self`, without forming the
    /// model kernel. Uses `⟨HKH, C⟩ = ⟨K, C⟩` for centered `C` and
    /// `‖HKH‖² = ‖K‖² − 2‖K1‖²/N + (1ᵀK1)²/N²`; falls back to explicit centering
    /// when that difference loses too many digits.
    pub fn gaussian_alignment(&self, samples: ArrayView2<f64>, policy: EpsPolicy) -> Result<ScoreValue, KernelError> {
        let n = samples.nrows();
        if n != self.n() {
            return Err(KernelError::SizeMismatch(self.n(), n));
        }
        CenteringContext::new(n)?;
        let x = samples.as_standard_layout();
        let d = x.ncols();
        let data = x.as_slice().expect("standard layout");
        let sq = |i: usize, j: usize| -> f64 {
            data[i * d..(i + 1) * d].iter().zip(&data[j * d..(j + 1) * d]).map(|(u, v)| (u - v) * (u - v)).sum()
        };
        let blocks: Vec<std::ops::Range<usize>> =
            (0..n).step_by(FUSED_BLOCK).map(|b| b..(b + FUSED_BLOCK).min(n)).collect();
        let eps = match policy {
            EpsPolicy::Fixed(e) => e,
            EpsPolicy::MaxMin => {
                // Nearest-neighbour distances; min is exact, so merge order is irrelevant.
                let nearest = blocks
                    .par_iter()
                    .fold(
                        || vec![f64::INFINITY; n],
                        |mut m, rows| {
                            for i in rows.clone() {
                                for j in i + 1..n {
                                    let v = sq(i, j);
                                    m[i] = m[i].min(v);
                                    m[j] = m[j].min(v);
                                }
                            }
                            m
                        },
                    )
                    .reduce(|| vec![f64::INFINITY; n], |a, b| a.iter().zip(&b).map(|(x, y)| x.min(*y)).collect());
                let eps = nearest.into_iter().fold(0.0, f64::max);
                if !(eps > 0.0) || !eps.is_finite() {
                    return Err(KernelError::DegenerateData(
                        "all samples coincide; max-min bandwidth is zero".into(),
                    ));
                }
                eps
            }
        };
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(KernelError::InvalidBandwidth(eps));
        }
        let c = &self.hkh;
        // Per block: row sums, ⟨K, C⟩ and ‖K‖² over the block's upper-triangle rows.
        let parts: Vec<(Vec<f64>, f64, f64)> = blocks
            .par_iter()
            .map(|rows| {
                let mut r = vec![0.0; n];
                let (mut kc, mut kk) = (0.0, 0.0);
                for i in rows.clone() {
                    r[i] += 1.0;
                    kc += c[[i, i]];
                    kk += 1.0;
                    let mut ri = 0.0;
                    for j in i + 1..n {
                        let k = (-sq(i, j) / eps).exp();
                        ri += k;
                        r[j] += k;
                        kc += 2.0 * k * c[[i, j]];
                        kk += 2.0 * k * k;
                    }
                    r[i] += ri;
                }
                (r, kc, kk)
            })
            .collect();
        let mut r = vec![0.0; n];
        let (mut kc, mut kk) = (0.0, 0.0);
        for (pr, pkc, pkk) in &parts {
            r.iter_mut().zip(pr).for_each(|(a, b)| *a += b);
            kc += pkc;
            kk += pkk;
        }
        let nf = n as f64;
        let total: f64 = r.iter().sum();
        let rr: f64 = r.iter().map(|v| v * v).sum();
        let norm2 = kk - 2.0 * rr / nf + (total / nf) * (total / nf);
        if !(norm2 > 1e-6 * kk) {
            let k = gaussian_gram(samples, eps)?;
            return CenteredKernel::new(k.k.view())?.alignment(self);
        }
        ScoreValue::new(kc / (norm2.sqrt() * self.norm))
    }

    /// Normalized inner product with another centered kernel.
    pub fn alignment(&self, other: &CenteredKernel) -> Result<ScoreValue, KernelError> {
        if self.n() != other.n() {
            return Err(KernelError::SizeMismatch(self.n(), other.n()));
        }
        ScoreValue::new(frobenius_inner(&self.hkh, &other.hkh) / (self.norm * other.norm))
    }
}

fn frobenius_inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `Tr(H Kˣ H · H Kʸ H) / (‖H Kˣ H‖_F ‖H Kʸ H‖_F)`.
pub fn centered_score(kx: &GramMatrix, ky: &GramMatrix) -> Result<ScoreValue, KernelError> {
    if kx.n() != ky.n() {
        return Err(KernelError::SizeMismatch(kx.n(), ky.n()));
    }
    let cx = CenteredKernel::new(kx.k.view())?;
    let cy = CenteredKernel::new(ky.k.view())?;
    cx.alignment(&cy)
}

fn check_same_n(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<(), KernelError> {
    if x.nrows() != y.nrows() {
        return Err(KernelError::SizeMismatch(x.nrows(), y.nrows()));
    }
    if x.nrows() < 2 {
        return Err(KernelError::DegenerateData("need N >= 2".into()));
    }
    Ok(())
}

/// Linear baseline `‖X̄ᵀȲ‖_F / (‖X̄‖_F ‖Ȳ‖_F)` on row-per-sample arrays.
pub fn linear_score_1(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64, KernelError> {
    check_same_n(x, y)?;
    let ctx = CenteringContext::new(x.nrows())?;
    let xc = ctx.center_rows(x);
    let yc = ctx.center_rows(y);
    linear_score_1_centered(&xc, &yc, frobenius_inner(&yc, &yc).sqrt())
}

fn linear_score_1_centered(xc: &Array2<f64>, yc: &Array2<f64>, y_norm: f64) -> Result<f64, KernelError> {
    let x_norm = frobenius_inner(xc, xc).sqrt();
    if !(x_norm >= DEGENERATE_TOLERANCE) || !(y_norm >= DEGENERATE_TOLERANCE) {
        return Err(KernelError::DegenerateData("zero variance after centering".into()));
    }
    let cross = xc.t().dot(yc);
    Ok(frobenius_inner(&cross, &cross).sqrt() / (x_norm * y_norm))
}

/// Linear-Gram baseline: the centered score with `Gˣ = XXᵀ`, `Gʸ = YYᵀ` (rows are samples).
pub fn linear_score_2(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64, KernelError> {
    check_same_n(x, y)?;
    let cx = CenteredKernel::new(x.dot(&x.t()).view())?;
    let cy = CenteredKernel::new(y.dot(&y.t()).view())?;
    Ok(cx.alignment(&cy)?.value())
}

/// How model states are turned into the coordinates a kernel is built on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FeatureMap {
    #[default]
    Identity,
    /// Keep only the listed state coordinates.
    Coordinates { indices: Vec<usize> },
    /// Double-pendulum bob positions; lengths are read from the parameter vector.
    PendulumCartesian { l1_index: usize, l2_index: usize },
}

impl FeatureMap {
    pub fn apply(&self, traj: &Trajectory, params: &[f64]) -> Trajectory {
        match self {
            FeatureMap::Identity => traj.clone(),
            FeatureMap::Coordinates { indices } => traj.map_states(indices.len(), |x, out| {
                for (o, &i) in out.iter_mut().zip(indices) {
                    *o = x[i];
                }
            }),
            FeatureMap::PendulumCartesian { l1_index, l2_index } => {
                let (l1, l2) = (params[*l1_index], params[*l2_index]);
                traj.map_states(4, |x, out| {
                    out.copy_from_slice(&pendulum_cartesian(x[0], x[1], l1, l2));
                })
            }
        }
    }
}

/// A forward model: which parameters are free, how to simulate, and what coordinates to keep.
#[derive(Debug, Clone)]
pub struct ModelProblem {
    pub system: SystemSpec,
    /// Full parameter vector; entries listed in `free` are overwritten per candidate.
    pub base_params: ParameterVector,
    pub free: Vec<usize>,
    pub x0: Vec<f64>,
    pub n: usize,
    pub dt: f64,
    pub substeps: usize,
    pub features: FeatureMap,
}

impl ModelProblem {
    /// A problem where every system parameter is free.
    pub fn all_free(system: SystemSpec, base_params: ParameterVector, x0: Vec<f64>, n: usize, dt: f64) -> Self {
        let free = (0..base_params.len()).collect();
        Self { system, base_params, free, x0, n, dt, substeps: 1, features: FeatureMap::Identity }
    }

    pub fn free_names(&self) -> Vec<String> {
        self.free.iter().map(|&i| self.base_params.names[i].clone()).collect()
    }

    pub fn full_params(&self, free_values: &[f64]) -> Vec<f64> {
        let mut p = self.base_params.values.clone();
        for (&i, &v) in self.free.iter().zip(free_values) {
            p[i] = v;
        }
        p
    }

    pub fn simulate(&self, free_values: &[f64]) -> Result<Trajectory, DynamicsError> {
        let params = self.full_params(free_values);
        integrate_substeps(&self.system, &params, &self.x0, self.n, self.dt, self.substeps)
    }

    /// Trajectory in kernel coordinates.
    pub fn model_coordinates(&self, free_values: &[f64]) -> Result<Trajectory, DynamicsError> {
        let traj = self.simulate(free_values)?;
        Ok(self.features.apply(&traj, &self.full_params(free_values)))
    }
}

/// The observation side of the score, computed once per data set.
#[derive(Debug, Clone)]
pub struct KernelScorer {
    pub problem: ModelProblem,
    pub observation_kernel: CenteredKernel,
    pub eps_policy: EpsPolicy,
}

impl KernelScorer {
    pub fn new(problem: ModelProblem, observations: ArrayView2<f64>, eps_policy: EpsPolicy) -> Result<Self, KernelError> {
        if observations.nrows() != problem.n {
            return Err(KernelError::SizeMismatch(problem.n, observations.nrows()));
        }
        if problem.n < 3 {
            return Err(KernelError::DegenerateData(format!(
                "the score is constant for N < 3 (got N = {})",
                problem.n
            )));
        }
        let ky = gram_with_policy(observations, EpsPolicy::MaxMin)?;
        Ok(Self::from_observation_gram(problem, &ky, eps_policy)?)
    }

    pub fn from_observation_gram(problem: ModelProblem, ky: &GramMatrix, eps_policy: EpsPolicy) -> Result<Self, KernelError> {
        if ky.n() != problem.n {
            return Err(KernelError::SizeMismatch(problem.n, ky.n()));
        }
        Ok(Self { observation_kernel: CenteredKernel::new(ky.k.view())?, problem, eps_policy })
    }

    /// The score at free parameter values, or `−∞` when the model cannot be scored
    /// (divergent trajectory or a degenerate model kernel).
    pub fn score(&self, free_values: &[f64]) -> f64 {
        match self.try_score(free_values) {
            Ok(s) => s.value(),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    pub fn try_score(&self, free_values: &[f64]) -> Result<ScoreValue, KernelError> {
        let x = self.problem.model_coordinates(free_values)?;
        self.observation_kernel.gaussian_alignment(x.states.view(), self.eps_policy)
    }
}

/// Score of a named parameter vector against a precomputed observation kernel.
pub fn score_of_parameter(omega: &ParameterVector, scorer: &KernelScorer) -> f64 {
    scorer.score(&omega.values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearVariant {
    /// Normalized cross-covariance norm.
    CrossCovariance,
    /// Centered alignment of linear Gram matrices.
    LinearGram,
}

/// Grid-search objective for the linear baselines.
#[derive(Debug, Clone)]
pub struct LinearScorer {
    pub problem: ModelProblem,
    pub variant: LinearVariant,
    centered_y: Array2<f64>,
    y_norm: f64,
    gram_y: Option<CenteredKernel>,
}

impl LinearScorer {
    pub fn new(problem: ModelProblem, observations: ArrayView2<f64>, variant: LinearVariant) -> Result<Self, KernelError> {
        if observations.nrows() != problem.n {
            return Err(KernelError::SizeMismatch(problem.n, observations.nrows()));
        }
        let ctx = CenteringContext::new(problem.n)?;
        let centered_y = ctx.center_rows(observations);
        let y_norm = frobenius_inner(&centered_y, &centered_y).sqrt();
        let gram_y = match variant {
            LinearVariant::CrossCovariance => None,
            LinearVariant::LinearGram => Some(CenteredKernel::new(observations.dot(&observations.t()).view())?),
        };
        Ok(Self { problem, variant, centered_y, y_norm, gram_y })
    }

    pub fn score(&self, free_values: &[f64]) -> f64 {
        let Ok(x) = self.problem.model_coordinates(free_values) else {
            return f64::NEG_INFINITY;
        };
        let result = match (&self.variant, &self.gram_y) {
            (LinearVariant::LinearGram, Some(gy)) => {
                let g = x.states.dot(&x.states.t());
                CenteredKernel::new(g.view()).and_then(|gx| gx.alignment(gy)).map(|s| s.value())
            }
            _ => {
                let xc = CenteringContext { n: x.len() }.center_rows(x.states.view());
                linear_score_1_centered(&xc, &self.centered_y, self.y_norm)
            }
        };
        result.unwrap_or(f64::NEG_INFINITY)
    }
}

/// Known observation map, used only by the oracle estimator.
pub type ObservationMap = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Least-squares misfit `Σₙ ‖y(tₙ) − G(x(tₙ; ω))‖²` with the true observation map.
#[derive(Clone)]
pub struct OracleObjective {
    pub problem: ModelProblem,
    pub observation_map: ObservationMap,
    pub observations: Array2<f64>,
}

impl std::fmt::Debug for OracleObjective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OracleObjective").field("problem", &self.problem).finish()
    }
}

impl OracleObjective {
    /// Misfit at the given free parameters; `+∞` on divergence.
    pub fn misfit(&self, free_values: &[f64]) -> f64 {
        let Ok(traj) = self.problem.model_coordinates(free_values) else {
            return f64::INFINITY;
        };
        let d = self.observations.ncols();
        let mut buf = vec![0.0; d];
        let mut total = 0.0;
        for (x, y) in traj.states.rows().into_iter().zip(self.observations.rows()) {
            let x = x.to_vec();
            (self.observation_map)(&x, &mut buf);
            total += buf.iter().zip(y.iter()).map(|(g, o)| (o - g) * (o - g)).sum::<f64>();
        }
        if total.is_finite() {
            total
        } else {
            f64::INFINITY
        }
    }
}

/// `Σₙ ‖y(tₙ) − G(x(tₙ; ω))‖²` for a named parameter vector.
pub fn oracle_objective(omega: &ParameterVector, oracle: &OracleObjective) -> f64 {
    oracle.misfit(&omega.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn maxmin_examples() {
        let two = array![[0.0], [3.0]];
        assert_eq!(maxmin_bandwidth(two.view()).unwrap(), 9.0);
        let three = array![[0.0], [1.0], [3.0]];
        assert_eq!(maxmin_bandwidth(three.view()).unwrap(), 4.0);
        let scaled = three.mapv(|v| 5.0 * v);
        assert_eq!(maxmin_bandwidth(scaled.view()).unwrap(), 100.0);
    }

    #[test]
    fn maxmin_rejects_identical_rows() {
        let same = array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]];
        assert!(matches!(maxmin_bandwidth(same.view()), Err(KernelError::DegenerateData(_))));
    }

    #[test]
    fn gram_examples() {
        let same = array![[1.0, 2.0], [1.0, 2.0]];
        let g = gaussian_gram(same.view(), 0.7).unwrap();
        assert!(g.k.iter().all(|&v| v == 1.0));
        let pair = array![[0.0, 0.0], [1.0, 1.0]];
        let g = gaussian_gram(pair.view(), 2.0).unwrap();
        assert!((g.k[[0, 1]] - (-1f64).exp()).abs() < 1e-15);
        assert!((g.k[[0, 1]] - 0.367879).abs() < 1e-6);
        assert!(gaussian_gram(pair.view(), 0.0).is_err());
    }

    #[test]
    fn centering_projector_properties() {
        for n in [2, 3, 17, 64] {
            let h = CenteringContext::new(n).unwrap().matrix();
            let hh = h.dot(&h);
            let dev = (&hh - &h).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(dev < 1e-14, "n={n} dev={dev}");
            let ones = ndarray::Array1::<f64>::ones(n);
            assert!(h.dot(&ones).iter().all(|v| v.abs() < 1e-14));
        }
        assert!(CenteringContext::new(1).is_err());
    }

    #[test]
    fn double_center_matches_projector_product() {
        let k = array![[1.0, 0.3, 0.1], [0.3, 1.0, 0.5], [0.1, 0.5, 1.0]];
        let ctx = CenteringContext::new(3).unwrap();
        let h = ctx.matrix();
        let direct = h.dot(&k).dot(&h);
        let fast = ctx.double_center(k.view());
        assert!((&direct - &fast).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn identical_kernels_score_one() {
        let s = array![[0.0, 1.0], [2.0, 0.5], [1.0, -1.0], [0.3, 0.3]];
        let k = gram_with_policy(s.view(), EpsPolicy::MaxMin).unwrap();
        let v = centered_score(&k, &k).unwrap().value();
        assert!((v - 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn two_samples_always_align() {
        for (a, b) in [(0.1, 0.9), (0.5, 0.5), (0.99, 0.01)] {
            let kx = GramMatrix { k: array![[1.0, a], [a, 1.0]], epsilon: 1.0 };
            let ky = GramMatrix { k: array![[1.0, b], [b, 1.0]], epsilon: 1.0 };
            assert!((centered_score(&kx, &ky).unwrap().value() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn all_ones_kernel_is_degenerate() {
        let ones = GramMatrix { k: Array2::ones((4, 4)), epsilon: 1.0 };
        let other = gaussian_gram(array![[0.0], [1.0], [2.0], [4.0]].view(), 1.0).unwrap();
        assert!(matches!(centered_score(&ones, &other), Err(KernelError::DegenerateKernel(_))));
        assert!(matches!(centered_score(&other, &ones), Err(KernelError::DegenerateKernel(_))));
    }

    #[test]
    fn score_rejects_size_mismatch() {
        let a = gaussian_gram(array![[0.0], [1.0], [2.0]].view(), 1.0).unwrap();
        let b = gaussian_gram(array![[0.0], [1.0]].view(), 1.0).unwrap();
        assert!(matches!(centered_score(&a, &b), Err(KernelError::SizeMismatch(3, 2))));
    }

    #[test]
    fn linear_score_1_examples() {
        // Rank-one centered data scored against itself.
        let x = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        assert!((linear_score_1(x.view(), x.view()).unwrap() - 1.0).abs() < 1e-14);
        // Centered columns orthogonal in sample space.
        let x = array![[1.0], [-1.0], [0.0]];
        let y = array![[1.0], [1.0], [-2.0]];
        assert!(linear_score_1(x.view(), y.view()).unwrap().abs() < 1e-15);
        let flat = array![[1.0], [1.0], [1.0]];
        assert!(linear_score_1(flat.view(), y.view()).is_err());
    }

    #[test]
    fn linear_score_2_invariances() {
        let x = array![[0.3, 1.0], [2.0, -0.4], [1.1, 0.2], [-0.5, 0.7]];
        let (c, s) = (0.28f64, 0.96f64);
        let q = array![[c, -s], [s, c]];
        let y = x.dot(&q.t());
        assert!((linear_score_2(x.view(), y.view()).unwrap() - 1.0).abs() < 1e-12);
        let scaled = x.mapv(|v| -3.5 * v);
        assert!((linear_score_2(x.view(), scaled.view()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn feature_maps() {
        let traj = Trajectory::new(0.0, 0.1, array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let sub = FeatureMap::Coordinates { indices: vec![2, 0] }.apply(&traj, &[]);
        assert_eq!(sub.states, array![[3.0, 1.0], [6.0, 4.0]]);
        let pend = Trajectory::new(0.0, 0.1, array![[0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]]).unwrap();
        let cart = FeatureMap::PendulumCartesian { l1_index: 0, l2_index: 1 }.apply(&pend, &[2.0, 3.0, 1.0]);
        assert_eq!(cart.states.row(0).to_vec(), vec![0.0, -2.0, 0.0, -5.0]);
    }

    #[test]
    fn fused_alignment_matches_explicit_centering() {
        let x = Array2::from_shape_fn((40, 3), |(i, j)| ((i * 7 + j * 3) as f64 * 0.37).sin() + 0.1 * j as f64);
        let y = Array2::from_shape_fn((40, 5), |(i, j)| ((i * 5 + j) as f64 * 0.21).cos());
        let ky = gaussian_gram(y.view(), maxmin_bandwidth(y.view()).unwrap()).unwrap();
        let cy = CenteredKernel::new(ky.k.view()).unwrap();
        for policy in [EpsPolicy::MaxMin, EpsPolicy::Fixed(0.7)] {
            let kx = gram_with_policy(x.view(), policy).unwrap();
            let slow = centered_score(&kx, &ky).unwrap().value();
            let fast = cy.gaussian_alignment(x.view(), policy).unwrap().value();
            assert!((slow - fast).abs() < 1e-12, "{slow} vs {fast}");
        }
    }

    #[test]
    fn fused_alignment_detects_flat_kernels() {
        let y = Array2::from_shape_fn((10, 2), |(i, j)| (i + j * i) as f64);
        let ky = gaussian_gram(y.view(), 3.0).unwrap();
        let cy = CenteredKernel::new(ky.k.view()).unwrap();
        // A huge fixed bandwidth makes every entry round to one.
        let x = Array2::from_shape_fn((10, 1), |(i, _)| i as f64);
        let r = cy.gaussian_alignment(x.view(), EpsPolicy::Fixed(1e300));
        assert!(matches!(r, Err(KernelError::DegenerateKernel(_))), "{r:?}");
        assert!(cy.gaussian_alignment(x.view(), EpsPolicy::Fixed(-1.0)).is_err());
        assert!(cy.gaussian_alignment(x.slice(ndarray::s![..9, ..]), EpsPolicy::MaxMin).is_err());
    }
}
