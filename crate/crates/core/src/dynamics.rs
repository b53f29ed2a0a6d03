//! Parametric ODE models and a fixed-step RK4 integrator.
//!
//! A [`SystemSpec`] bundles a right-hand side `f(x; ω)` with its state
//! dimension and parameter names. [`integrate`] samples the solution on a
//! uniform grid and reports a typed [`DynamicsError::Divergence`] as soon as a
//! non-finite state appears, so callers can score ill-posed parameters
//! instead of crashing.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Standard gravity used by the pendulum model unless configured otherwise.
pub const DEFAULT_GRAVITY: f64 = 9.8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("trajectory diverged at sample {step} (non-finite state)")]
    Divergence { step: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// Ordered, named parameter values `ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl ParameterVector {
    pub fn new<S: Into<String>>(
        names: impl IntoIterator<Item = S>,
        values: Vec<f64>,
    ) -> Result<Self, DynamicsError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if values.is_empty() {
            return Err(DynamicsError::InvalidArgument("empty parameter vector".into()));
        }
        if names.len() != values.len() {
            return Err(DynamicsError::DimensionMismatch {
                expected: names.len(),
                got: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(DynamicsError::InvalidArgument(format!(
                "non-finite parameter value {v}"
            )));
        }
        Ok(Self { names, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }
}

impl fmt::Display for ParameterVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .names
            .iter()
            .zip(&self.values)
            .map(|(n, v)| format!("{n}={v}"))
            .collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// Uniformly sampled model trajectory; row `j` is the state at `t0 + j·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub states: Array2<f64>,
}

impl Trajectory {
    pub fn new(t0: f64, dt: f64, states: Array2<f64>) -> Result<Self, DynamicsError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(DynamicsError::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if states.nrows() < 2 || states.ncols() < 1 {
            return Err(DynamicsError::InvalidArgument(format!(
                "trajectory needs N >= 2 and d >= 1, got {}x{}",
                states.nrows(),
                states.ncols()
            )));
        }
        if let Some(step) = states
            .rows()
            .into_iter()
            .position(|r| r.iter().any(|v| !v.is_finite()))
        {
            return Err(DynamicsError::Divergence { step });
        }
        Ok(Self { t0, dt, states })
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    /// Applies `map` to every state row, producing a trajectory on the same time grid.
    pub fn map_states<F>(&self, out_dim: usize, mut map: F) -> Trajectory
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        let mut out = Array2::zeros((self.len(), out_dim));
        for (row, mut dst) in self.states.rows().into_iter().zip(out.rows_mut()) {
            let src = row.to_vec();
            map(&src, dst.as_slice_mut().expect("row-major"));
        }
        Trajectory {
            t0: self.t0,
            dt: self.dt,
            states: out,
        }
    }

    /// Writes `t,x1,...,xd` CSV with round-trip float formatting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=self.dim()).map(|i| format!("x{i}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (j, row) in self.states.rows().into_iter().enumerate() {
            write!(w, "{}", self.time(j))?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, DynamicsError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| DynamicsError::Csv("empty file".into()))?
            .map_err(|e| DynamicsError::Csv(e.to_string()))?;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.first() != Some(&"t") || cols.len() < 2 {
            return Err(DynamicsError::Csv(format!("bad header `{header}`")));
        }
        let d = cols.len() - 1;
        let mut times = Vec::new();
        let mut data = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| DynamicsError::Csv(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != d + 1 {
                return Err(DynamicsError::Csv(format!(
                    "line {}: expected {} fields, got {}",
                    lineno + 2,
                    d + 1,
                    fields.len()
                )));
            }
            for (k, f) in fields.iter().enumerate() {
                let v: f64 = f.parse().map_err(|_| {
                    DynamicsError::Csv(format!("line {}: bad number `{f}`", lineno + 2))
                })?;
                if k == 0 {
                    times.push(v);
                } else {
                    data.push(v);
                }
            }
        }
        if times.len() < 2 {
            return Err(DynamicsError::Csv("need at least two rows".into()));
        }
        let dt = times[1] - times[0];
        let states = Array2::from_shape_vec((times.len(), d), data)
            .map_err(|e| DynamicsError::Csv(e.to_string()))?;
        Trajectory::new(times[0], dt, states)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SystemKind {
    Lorenz63,
    DoublePendulum,
    Custom,
}

/// Right-hand side `(state, parameters, out)`.
pub type RhsFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;

/// An ODE model `ẋ = f(x; ω)`.
#[derive(Clone)]
pub struct SystemSpec {
    pub kind: SystemKind,
    pub state_dim: usize,
    pub parameter_names: Vec<String>,
    rhs: Arc<RhsFn>,
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("kind", &self.kind)
            .field("state_dim", &self.state_dim)
            .field("parameter_names", &self.parameter_names)
            .finish()
    }
}

impl SystemSpec {
    pub fn custom<F>(state_dim: usize, parameter_names: &[&str], rhs: F) -> Self
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            kind: SystemKind::Custom,
            state_dim,
            parameter_names: parameter_names.iter().map(|s| s.to_string()).collect(),
            rhs: Arc::new(rhs),
        }
    }

    /// Lorenz '63 with parameters `(sigma, rho, beta)`.
    pub fn lorenz63() -> Self {
        Self {
            kind: SystemKind::Lorenz63,
            state_dim: 3,
            parameter_names: vec!["sigma".into(), "rho".into(), "beta".into()],
            rhs: Arc::new(|x, p, out| {
                let dx = lorenz_rhs([x[0], x[1], x[2]], p[0], p[1], p[2]);
                out.copy_from_slice(&dx);
            }),
        }
    }

    /// Double pendulum with parameters `(l1, l2, m2)`, `m1 = 1`, and the given gravity.
    /// State is `(θ₁, θ₂, θ̇₁, θ̇₂)`.
    pub fn double_pendulum(gravity: f64) -> Self {
        Self {
            kind: SystemKind::DoublePendulum,
            state_dim: 4,
            parameter_names: vec!["l1".into(), "l2".into(), "m2".into()],
            rhs: Arc::new(move |x, p, out| {
                let dx = pendulum_rhs([x[0], x[1], x[2], x[3]], p[0], p[1], p[2], gravity);
                out.copy_from_slice(&dx);
            }),
        }
    }

    pub fn eval(&self, x: &[f64], params: &[f64], out: &mut [f64]) {
        (self.rhs)(x, params, out)
    }
}

pub fn lorenz_rhs(x: [f64; 3], sigma: f64, rho: f64, beta: f64) -> [f64; 3] {
    [
        sigma * (x[1] - x[0]),
        x[0] * (rho - x[2]) - x[1],
        x[0] * x[1] - beta * x[2],
    ]
}

/// Double-pendulum vector field with the upper mass fixed to 1.
pub fn pendulum_rhs(theta: [f64; 4], l1: f64, l2: f64, m2: f64, g: f64) -> [f64; 4] {
    pendulum_rhs_masses(theta, l1, l2, 1.0, m2, g)
}

/// Double-pendulum vector field for arbitrary masses; depends on them only via
/// `μ = 1 + m1/m2`.
pub fn pendulum_rhs_masses(theta: [f64; 4], l1: f64, l2: f64, m1: f64, m2: f64, g: f64) -> [f64; 4] {
    let [t1, t2, w1, w2] = theta;
    let mu = 1.0 + m1 / m2;
    let delta = t1 - t2;
    let (sd, cd) = delta.sin_cos();
    let denom = mu - cd * cd;
    let g1 = (g * (t2.sin() * cd - mu * t1.sin()) - (l2 * w2 * w2 + l1 * w1 * w1 * cd) * sd)
        / (l1 * denom);
    let g2 = (g * mu * (t1.sin() * cd - t2.sin()) + (mu * l1 * w1 * w1 + l2 * w2 * w2 * cd) * sd)
        / (l2 * denom);
    [w1, w2, g1, g2]
}

/// Total mechanical energy of the double pendulum (pivot at the origin, y up).
pub fn pendulum_energy(theta: [f64; 4], l1: f64, l2: f64, m1: f64, m2: f64, g: f64) -> f64 {
    let [t1, t2, w1, w2] = theta;
    let kinetic = 0.5 * (m1 + m2) * l1 * l1 * w1 * w1
        + 0.5 * m2 * l2 * l2 * w2 * w2
        + m2 * l1 * l2 * w1 * w2 * (t1 - t2).cos();
    let potential = -(m1 + m2) * g * l1 * t1.cos() - m2 * g * l2 * t2.cos();
    kinetic + potential
}

/// Bob positions `(x₁, y₁, x₂, y₂)`; angles measured from the downward vertical.
pub fn pendulum_cartesian(theta1: f64, theta2: f64, l1: f64, l2: f64) -> [f64; 4] {
    let (s1, c1) = theta1.sin_cos();
    let (s2, c2) = theta2.sin_cos();
    let x1 = l1 * s1;
    let y1 = -l1 * c1;
    [x1, y1, x1 + l2 * s2, y1 - l2 * c2]
}

/// Reusable stage buffers for [`Rk4::step`].
struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    fn step<F: Fn(&[f64], &mut [f64])>(&mut self, rhs: &F, x: &mut [f64], dt: f64) {
        let n = x.len();
        rhs(x, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * self.k1[i];
        }
        rhs(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * self.k2[i];
        }
        rhs(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + dt * self.k3[i];
        }
        rhs(&self.tmp, &mut self.k4);
        for i in 0..n {
            x[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// One classical RK4 step of `ẋ = rhs(x)`.
pub fn rk4_step<F>(rhs: F, x: &[f64], dt: f64) -> Result<Vec<f64>, DynamicsError>
where
    F: Fn(&[f64], &mut [f64]),
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let mut out = x.to_vec();
    Rk4::new(x.len()).step(&rhs, &mut out, dt);
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(DynamicsError::Divergence { step: 1 })
    }
}

/// Integrates `system` from `x0` and returns `n` samples spaced `dt` apart.
pub fn integrate(
    system: &SystemSpec,
    omega: &ParameterVector,
    x0: &[f64],
    n: usize,
    dt: f64,
) -> Result<Trajectory, DynamicsError> {
    integrate_substeps(system, &omega.values, x0, n, dt, 1)
}

/// Like [`integrate`], taking `substeps` RK4 steps of `dt / substeps` per sample.
pub fn integrate_substeps(
    system: &SystemSpec,
    params: &[f64],
    x0: &[f64],
    n: usize,
    dt: f64,
    substeps: usize,
) -> Result<Trajectory, DynamicsError> {
    let d = system.state_dim;
    if x0.len() != d {
        return Err(DynamicsError::DimensionMismatch { expected: d, got: x0.len() });
    }
    if params.len() != system.parameter_names.len() {
        return Err(DynamicsError::DimensionMismatch {
            expected: system.parameter_names.len(),
            got: params.len(),
        });
    }
    if n < 2 {
        return Err(DynamicsError::InvalidArgument(format!("need N >= 2 samples, got {n}")));
    }
    if !(dt > 0.0 && dt.is_finite()) || substeps == 0 {
        return Err(DynamicsError::InvalidArgument(format!(
            "need dt > 0 and substeps >= 1, got dt={dt}, substeps={substeps}"
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(DynamicsError::Divergence { step: 0 });
    }
    let rhs = |x: &[f64], out: &mut [f64]| system.eval(x, params, out);
    let h = dt / substeps as f64;
    let mut stepper = Rk4::new(d);
    let mut state = x0.to_vec();
    let mut data = Vec::with_capacity(n * d);
    data.extend_from_slice(&state);
    for j in 1..n {
        for _ in 0..substeps {
            stepper.step(&rhs, &mut state, h);
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::Divergence { step: j });
        }
        data.extend_from_slice(&state);
    }
    let states = Array2::from_shape_vec((n, d), data).expect("n*d buffer");
    Ok(Trajectory { t0: 0.0, dt, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn lorenz_fixed_points() {
        assert_eq!(lorenz_rhs([0.0; 3], 3.0, 5.0, 7.0), [0.0; 3]);
        let c = 72f64.sqrt();
        let v = lorenz_rhs([c, c, 27.0], 10.0, 28.0, 8.0 / 3.0);
        assert!(close(&v, &[0.0; 3], 1e-12), "{v:?}");
        let v = lorenz_rhs([-c, -c, 27.0], 10.0, 28.0, 8.0 / 3.0);
        assert!(close(&v, &[0.0; 3], 1e-12), "{v:?}");
    }

    #[test]
    fn lorenz_hand_arithmetic() {
        let v = lorenz_rhs([1.0, 2.0, 3.0], 10.0, 28.0, 8.0 / 3.0);
        assert!(close(&v, &[10.0, 23.0, -6.0], 1e-12), "{v:?}");
    }

    #[test]
    fn pendulum_rest_and_horizontal() {
        assert_eq!(pendulum_rhs([0.0; 4], 2.0, 3.0, 4.0, 9.8), [0.0; 4]);
        let v = pendulum_rhs([FRAC_PI_2, 0.0, 0.0, 0.0], 1.0, 1.0, 1.0, 9.8);
        assert!(close(&v, &[0.0, 0.0, -9.8, 0.0], 1e-12), "{v:?}");
    }

    #[test]
    fn pendulum_matches_lagrangian_oracle() {
        // Angular accelerations obtained by solving the Euler-Lagrange equations
        // of the double-pendulum Lagrangian symbolically (sympy), m1 = 1.
        let v = pendulum_rhs([0.3, -0.2, 0.5, -0.1], 2.0, 1.5, 3.0, 9.8);
        let expected = [0.5, -0.1, -5.138338018534454, 7.470202596948024];
        assert!(close(&v, &expected, 1e-12), "{v:?}");
    }

    #[test]
    fn pendulum_depends_on_mass_ratio_only() {
        let th = [0.7, -1.1, 0.4, 2.0];
        let base = pendulum_rhs_masses(th, 1.3, 2.1, 1.0, 2.5, 9.8);
        for c in [0.1, 3.0, 17.0] {
            let scaled = pendulum_rhs_masses(th, 1.3, 2.1, c, 2.5 * c, 9.8);
            assert!(close(&base, &scaled, 1e-12));
        }
    }

    #[test]
    fn cartesian_positions() {
        assert!(close(&pendulum_cartesian(0.0, 0.0, 1.0, 1.0), &[0.0, -1.0, 0.0, -2.0], 1e-15));
        assert!(close(
            &pendulum_cartesian(FRAC_PI_2, FRAC_PI_2, 1.0, 1.0),
            &[1.0, 0.0, 2.0, 0.0],
            1e-15
        ));
        assert!(close(&pendulum_cartesian(PI, 0.0, 2.0, 3.0), &[0.0, 2.0, 0.0, -1.0], 1e-15));
    }

    #[test]
    fn rk4_simple_cases() {
        let zero = |_: &[f64], o: &mut [f64]| o[0] = 0.0;
        assert_eq!(rk4_step(zero, &[5.0], 0.1).unwrap(), vec![5.0]);
        let one = |_: &[f64], o: &mut [f64]| o[0] = 1.0;
        assert!((rk4_step(one, &[0.0], 0.1).unwrap()[0] - 0.1).abs() < 1e-15);
        let lin = |x: &[f64], o: &mut [f64]| o[0] = x[0];
        let h: f64 = 0.1;
        let expected = 1.0 + h + h * h / 2.0 + h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert!((rk4_step(lin, &[1.0], h).unwrap()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn rk4_rejects_non_finite() {
        let blow = |_: &[f64], o: &mut [f64]| o[0] = f64::INFINITY;
        assert!(matches!(
            rk4_step(blow, &[0.0], 0.1),
            Err(DynamicsError::Divergence { .. })
        ));
        assert!(rk4_step(|_: &[f64], o: &mut [f64]| o[0] = 0.0, &[0.0], 0.0).is_err());
    }

    #[test]
    fn integrate_constant_system() {
        let sys = SystemSpec::custom(2, &["a"], |_, _, o| o.fill(0.0));
        let omega = ParameterVector::new(["a"], vec![0.0]).unwrap();
        let traj = integrate(&sys, &omega, &[1.0, 2.0], 3, 0.5).unwrap();
        assert_eq!(traj.len(), 3);
        for row in traj.states.rows() {
            assert_eq!(row.to_vec(), vec![1.0, 2.0]);
        }
    }

    #[test]
    fn integrate_exponential() {
        let sys = SystemSpec::custom(1, &["k"], |x, p, o| o[0] = p[0] * x[0]);
        let omega = ParameterVector::new(["k"], vec![1.0]).unwrap();
        let traj = integrate(&sys, &omega, &[1.0], 11, 0.1).unwrap();
        assert!((traj.states[[10, 0]] - 1f64.exp()).abs() < 1e-5);
    }

    #[test]
    fn integrate_reports_divergence_index() {
        // ẋ = x², x(0) = 1 blows up at t = 1.
        let sys = SystemSpec::custom(1, &["k"], |x, _, o| o[0] = x[0] * x[0]);
        let omega = ParameterVector::new(["k"], vec![0.0]).unwrap();
        match integrate(&sys, &omega, &[1.0], 400, 0.01) {
            Err(DynamicsError::Divergence { step }) => assert!(step > 90 && step < 400, "{step}"),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn integrate_validates_inputs() {
        let sys = SystemSpec::lorenz63();
        let omega = ParameterVector::new(["sigma", "rho", "beta"], vec![10.0, 28.0, 8.0 / 3.0]).unwrap();
        assert!(matches!(
            integrate(&sys, &omega, &[1.0, 1.0], 10, 0.01),
            Err(DynamicsError::DimensionMismatch { .. })
        ));
        assert!(integrate(&sys, &omega, &[1.0; 3], 1, 0.01).is_err());
        assert!(integrate(&sys, &omega, &[1.0; 3], 10, -0.01).is_err());
    }

    #[test]
    fn lorenz_strong_forcing_stays_finite() {
        let sys = SystemSpec::lorenz63();
        let omega = ParameterVector::new(["sigma", "rho", "beta"], vec![20.0, 60.0, 8.0 / 3.0]).unwrap();
        let traj = integrate(&sys, &omega, &[0.5, 0.5, 0.5], 1000, 0.01).unwrap();
        assert!(traj.states.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn substeps_refine_the_solution() {
        let sys = SystemSpec::custom(1, &["k"], |x, p, o| o[0] = p[0] * x[0]);
        let coarse = integrate_substeps(&sys, &[1.0], &[1.0], 3, 0.5, 1).unwrap();
        let fine = integrate_substeps(&sys, &[1.0], &[1.0], 3, 0.5, 8).unwrap();
        let exact = 1f64.exp();
        assert!((fine.states[[2, 0]] - exact).abs() < (coarse.states[[2, 0]] - exact).abs());
    }

    #[test]
    fn parameter_vector_validation() {
        assert!(ParameterVector::new(Vec::<String>::new(), vec![]).is_err());
        assert!(ParameterVector::new(["a"], vec![f64::NAN]).is_err());
        assert!(ParameterVector::new(["a", "b"], vec![1.0]).is_err());
        let p = ParameterVector::new(["a", "b"], vec![1.0, 2.0]).unwrap();
        assert_eq!(p.get("b"), Some(2.0));
        assert_eq!(p.to_string(), "(a=1, b=2)");
    }

    #[test]
    fn csv_round_trip() {
        let sys = SystemSpec::lorenz63();
        let omega = ParameterVector::new(["sigma", "rho", "beta"], vec![10.0, 28.0, 8.0 / 3.0]).unwrap();
        let traj = integrate(&sys, &omega, &[1.0, 0.3, 0.1], 20, 0.01).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x1,x2,x3\n"));
        let back = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.states, traj.states);
    }
}
