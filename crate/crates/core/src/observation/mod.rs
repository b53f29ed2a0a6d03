//! Observation functions mapping model trajectories to high-dimensional series.

mod video;

pub use video::{render_pendulum_video, Canvas, RenderedVideo};

use std::io::{BufRead, Read, Write};

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::Trajectory;

/// Number of grid points the Legendre embedding is evaluated on.
pub const LEGENDRE_POINTS: usize = 128;
/// Highest Legendre order used by the Lorenz embedding.
pub const LEGENDRE_ORDER: usize = 6;

const OBS_MAGIC: &[u8; 4] = b"OBS1";

#[derive(Debug, Error)]
pub enum ObservationError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid observation: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(String),
}

/// Observed samples `y(t_j)`, one row per time sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    pub dt: f64,
    pub samples: Array2<f64>,
}

impl ObservationSeries {
    pub fn new(dt: f64, samples: Array2<f64>) -> Result<Self, ObservationError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ObservationError::Invalid(format!("dt must be positive, got {dt}")));
        }
        if samples.nrows() < 2 || samples.ncols() < 1 {
            return Err(ObservationError::Invalid(format!(
                "need N >= 2 and D >= 1, got {}x{}",
                samples.nrows(),
                samples.ncols()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(ObservationError::Invalid("non-finite sample".into()));
        }
        Ok(Self { dt, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    /// Dense CSV: header `t,y1,...,yD`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=self.dim()).map(|i| format!("y{i}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (j, row) in self.samples.rows().into_iter().enumerate() {
            write!(w, "{}", j as f64 * self.dt)?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, ObservationError> {
        let mut times = Vec::new();
        let mut data = Vec::new();
        let mut width = None;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            let w = *width.get_or_insert(fields.len());
            if fields.len() != w || w < 2 {
                return Err(ObservationError::Format(format!(
                    "line {}: ragged row",
                    lineno + 1
                )));
            }
            for (k, f) in fields.iter().enumerate() {
                let v: f64 = f.parse().map_err(|_| {
                    ObservationError::Format(format!("line {}: bad number `{f}`", lineno + 1))
                })?;
                if k == 0 {
                    times.push(v);
                } else {
                    data.push(v);
                }
            }
        }
        let d = width.unwrap_or(1).saturating_sub(1);
        if times.len() < 2 {
            return Err(ObservationError::Format("need at least two rows".into()));
        }
        let samples = Array2::from_shape_vec((times.len(), d), data)
            .map_err(|e| ObservationError::Format(e.to_string()))?;
        Self::new(times[1] - times[0], samples)
    }

    /// Binary container: `OBS1`, u64 N, u64 D, f64 dt, then N·D f64, all little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(OBS_MAGIC)?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&(self.dim() as u64).to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.dim() * 8);
        for row in self.samples.rows() {
            buf.clear();
            for v in row {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, ObservationError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != OBS_MAGIC {
            return Err(ObservationError::Format(format!("bad magic {magic:?}")));
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let d = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let dt = f64::from_le_bytes(word);
        let total = n
            .checked_mul(d)
            .ok_or_else(|| ObservationError::Format("N*D overflows".into()))?;
        let mut bytes = vec![0u8; total * 8];
        r.read_exact(&mut bytes)?;
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let samples =
            Array2::from_shape_vec((n, d), data).map_err(|e| ObservationError::Format(e.to_string()))?;
        Self::new(dt, samples)
    }
}

/// Legendre polynomials `P₁..P₆` sampled on 128 uniform points of `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct LegendreBasis {
    pub points: Array1<f64>,
    /// Row `j` holds `P_{j+1}` at `points`.
    pub u: Array2<f64>,
}

impl LegendreBasis {
    /// Basis vector `u_order`, `order` in `1..=6`.
    pub fn u(&self, order: usize) -> ndarray::ArrayView1<'_, f64> {
        self.u.row(order - 1)
    }
}

pub fn legendre_basis() -> LegendreBasis {
    let n = LEGENDRE_POINTS;
    let points = Array1::from_iter((0..n).map(|k| -1.0 + 2.0 * k as f64 / (n - 1) as f64));
    let mut u = Array2::zeros((LEGENDRE_ORDER, n));
    for (k, &x) in points.iter().enumerate() {
        // (n+1) P_{n+1} = (2n+1) x P_n - n P_{n-1}
        let (mut prev, mut cur) = (1.0, x);
        u[[0, k]] = cur;
        for order in 1..LEGENDRE_ORDER {
            let m = order as f64;
            let next = ((2.0 * m + 1.0) * x * cur - m * prev) / (m + 1.0);
            prev = cur;
            cur = next;
            u[[order, k]] = cur;
        }
    }
    LegendreBasis { points, u }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    StateGaussian,
}

/// State-space Gaussian perturbation `ζ ~ N(0, σ² I)` applied before the observation map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self { kind: NoiseKind::None, sigma: 0.0, seed: 0 }
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self { kind: NoiseKind::StateGaussian, sigma, seed }
    }

    fn is_active(&self) -> bool {
        self.kind == NoiseKind::StateGaussian && self.sigma > 0.0
    }
}

/// Which quadratic coefficients the partial Lorenz embedding uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartialCoefficients {
    /// `u₁x₁ + u₂x₂ + u₃x₁² + u₄x₂²`
    #[default]
    Distinct,
    /// `u₁x₁ + u₂x₂ + u₄x₁² + u₄x₂²`, the duplicated-coefficient reading.
    Literal,
}

fn check_dim(traj: &Trajectory, expected: usize) -> Result<(), ObservationError> {
    if traj.dim() != expected {
        return Err(ObservationError::DimensionMismatch { expected, got: traj.dim() });
    }
    Ok(())
}

/// Evaluates the full Lorenz embedding at a single state.
pub fn lorenz_embedding(basis: &LegendreBasis, x: &[f64], out: &mut [f64]) {
    let coeffs = [x[0], x[1], x[2], x[0] * x[0], x[1] * x[1], x[2] * x[2]];
    out.fill(0.0);
    for (order, c) in coeffs.iter().enumerate() {
        for (o, u) in out.iter_mut().zip(basis.u.row(order)) {
            *o += c * u;
        }
    }
}

/// Evaluates the partial Lorenz embedding, which reads only `x₁` and `x₂`.
pub fn lorenz_partial_embedding(
    basis: &LegendreBasis,
    coefficients: PartialCoefficients,
    x: &[f64],
    out: &mut [f64],
) {
    let quad_x1 = match coefficients {
        PartialCoefficients::Distinct => 2,
        PartialCoefficients::Literal => 3,
    };
    let terms = [(0, x[0]), (1, x[1]), (quad_x1, x[0] * x[0]), (3, x[1] * x[1])];
    out.fill(0.0);
    for (row, c) in terms {
        for (o, u) in out.iter_mut().zip(basis.u.row(row)) {
            *o += c * u;
        }
    }
}

fn embed<F>(traj: &Trajectory, dim: usize, f: F) -> Result<ObservationSeries, ObservationError>
where
    F: Fn(usize, &[f64], &mut [f64]),
{
    let mut samples = Array2::zeros((traj.len(), dim));
    for (j, (row, mut out)) in traj.states.rows().into_iter().zip(samples.rows_mut()).enumerate() {
        let x = row.to_vec();
        f(j, &x, out.as_slice_mut().expect("row-major"));
    }
    ObservationSeries::new(traj.dt, samples)
}

/// `y = u₁x₁ + u₂x₂ + u₃x₃ + u₄x₁² + u₅x₂² + u₆x₃²`, D = 128.
pub fn observe_lorenz_full(traj: &Trajectory) -> Result<ObservationSeries, ObservationError> {
    check_dim(traj, 3)?;
    let basis = legendre_basis();
    embed(traj, LEGENDRE_POINTS, |_, x, out| lorenz_embedding(&basis, x, out))
}

/// Full Lorenz embedding of the perturbed state `x + ζ`.
pub fn observe_lorenz_noisy(
    traj: &Trajectory,
    noise: &NoiseSpec,
) -> Result<ObservationSeries, ObservationError> {
    check_dim(traj, 3)?;
    if !noise.is_active() {
        return observe_lorenz_full(traj);
    }
    let basis = legendre_basis();
    let normal = Normal::new(0.0, noise.sigma)
        .map_err(|e| ObservationError::Invalid(format!("noise sigma: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let perturbed = traj.map_states(3, |x, out| {
        for (o, v) in out.iter_mut().zip(x) {
            *o = v + normal.sample(&mut rng);
        }
    });
    embed(&perturbed, LEGENDRE_POINTS, |_, x, out| lorenz_embedding(&basis, x, out))
}

/// Embedding that sees only `x₁` and `x₂`.
pub fn observe_lorenz_partial(
    traj: &Trajectory,
    coefficients: PartialCoefficients,
) -> Result<ObservationSeries, ObservationError> {
    check_dim(traj, 3)?;
    let basis = legendre_basis();
    embed(traj, LEGENDRE_POINTS, |_, x, out| {
        lorenz_partial_embedding(&basis, coefficients, x, out)
    })
}

/// `y = A x + ζ` with `ζ ~ N(0, σ² I_D)`.
pub fn observe_linear(
    traj: &Trajectory,
    a: &Array2<f64>,
    noise_sigma: f64,
    seed: u64,
) -> Result<ObservationSeries, ObservationError> {
    check_dim(traj, a.ncols())?;
    if a.iter().any(|v| !v.is_finite()) {
        return Err(ObservationError::Invalid("non-finite observation matrix".into()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(ObservationError::Invalid(format!("bad noise sigma {noise_sigma}")));
    }
    let mut samples = traj.states.dot(&a.t());
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("validated sigma");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        samples.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    }
    ObservationSeries::new(traj.dt, samples)
}
