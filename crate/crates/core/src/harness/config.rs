//! Experiment configuration: a JSON document with per-experiment defaults.

use serde::{Deserialize, Serialize};

use crate::estimator::{OptimizerConfig, ParameterBox};
use crate::observation::PartialCoefficients;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PendulumEstimate,
    LorenzEstimate,
    LorenzNoisy,
    LorenzPartial,
    SignalLength,
    GridRefinement,
    Baselines,
}

impl ExperimentKind {
    pub fn is_pendulum(self) -> bool {
        matches!(self, Self::PendulumEstimate | Self::SignalLength | Self::Baselines)
    }
}

/// One estimator applied to every instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum MethodConfig {
    /// Kernel score, exhaustive grid.
    Grid { points_per_dim: Vec<usize> },
    /// Kernel score, multi-start local ascent.
    Multistart { optimizer: OptimizerConfig },
    /// Cross-covariance baseline on the grid.
    Linear1 { points_per_dim: Vec<usize> },
    /// Linear-Gram baseline on the grid.
    Linear2 { points_per_dim: Vec<usize> },
    /// Least squares with the true observation map, on the grid.
    Oracle { points_per_dim: Vec<usize> },
}

impl MethodConfig {
    pub fn label(&self) -> &'static str {
        match self {
            MethodConfig::Grid { .. } => "grid",
            MethodConfig::Multistart { .. } => "multistart",
            MethodConfig::Linear1 { .. } => "linear1",
            MethodConfig::Linear2 { .. } => "linear2",
            MethodConfig::Oracle { .. } => "oracle",
        }
    }

    fn points_mut(&mut self) -> Option<&mut Vec<usize>> {
        match self {
            MethodConfig::Grid { points_per_dim }
            | MethodConfig::Linear1 { points_per_dim }
            | MethodConfig::Linear2 { points_per_dim }
            | MethodConfig::Oracle { points_per_dim } => Some(points_per_dim),
            MethodConfig::Multistart { .. } => None,
        }
    }

    pub fn points(&self) -> Option<&[usize]> {
        match self {
            MethodConfig::Grid { points_per_dim }
            | MethodConfig::Linear1 { points_per_dim }
            | MethodConfig::Linear2 { points_per_dim }
            | MethodConfig::Oracle { points_per_dim } => Some(points_per_dim),
            MethodConfig::Multistart { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ObservationConfig {
    /// The model state itself.
    Identity,
    /// Bob positions through a fixed random `dim × 4` matrix.
    LinearMap { dim: usize },
    /// Bob positions observed directly.
    Cartesian,
    /// 217×171 grayscale video frames.
    Video,
    LorenzFull,
    LorenzNoisy { sigma: f64 },
    LorenzPartial { coefficients: PartialCoefficients },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcComponents {
    /// Angles and angular velocities.
    All,
    /// Angles only; velocities start at zero.
    Angles,
}

/// Fully resolved experiment settings, as embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub n_instances: usize,
    pub n: usize,
    pub dt: f64,
    pub substeps: usize,
    pub methods: Vec<MethodConfig>,
    #[serde(rename = "box")]
    pub bounds: ParameterBox,
    pub observation: ObservationConfig,
    /// Pendulum gravity.
    pub gravity: f64,
    /// Standard deviation of the Gaussian pendulum initial conditions.
    pub ic_std: f64,
    pub ic_components: IcComponents,
    /// Draw true parameters from this finite set instead of the box.
    pub parameter_set: Option<Vec<f64>>,
    /// Grid methods search the product of `parameter_set` instead of an even grid.
    pub grid_on_parameter_set: bool,
    /// Lorenz β when it is not estimated.
    pub beta: f64,
    pub estimate_beta: bool,
    /// Signal-length sweep, in time units.
    pub t_f: Vec<f64>,
    /// Grid-refinement sweep, total grid sizes.
    pub grid_sizes: Vec<usize>,
}

/// The user-facing document: every field optional, defaults depend on `experiment`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub experiment: Option<ExperimentKind>,
    pub seed: Option<u64>,
    pub n_instances: Option<usize>,
    pub n: Option<usize>,
    pub dt: Option<f64>,
    pub substeps: Option<usize>,
    pub methods: Option<Vec<MethodConfig>>,
    #[serde(rename = "box")]
    pub bounds: Option<ParameterBox>,
    pub observation: Option<ObservationConfig>,
    pub gravity: Option<f64>,
    pub ic_std: Option<f64>,
    pub ic_components: Option<IcComponents>,
    pub parameter_set: Option<Vec<f64>>,
    pub grid_on_parameter_set: Option<bool>,
    pub beta: Option<f64>,
    pub estimate_beta: Option<bool>,
    pub t_f: Option<Vec<f64>>,
    pub grid_sizes: Option<Vec<usize>>,
}

/// A configuration problem, with the offending line when it can be located.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (&self.line, &self.field) {
            (Some(l), Some(k)) => write!(f, "line {l}: `{k}`: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "`{k}`: {}", self.message),
            (None, None) => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Deserializes a JSON document, reporting the line of any syntax or schema error.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError { line: Some(e.line()), field: None, message: e.to_string() })
}

/// Fills in the line of the first occurrence of the error's field key.
pub fn locate(text: &str, mut e: ConfigError) -> ConfigError {
    if let (None, Some(field)) = (e.line, &e.field) {
        let key = format!("\"{field}\"");
        e.line = text.lines().position(|l| l.contains(&key)).map(|i| i + 1);
    }
    e
}

pub fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { line: None, field: Some(field.to_string()), message: message.into() }
}

const PENDULUM_NAMES: [&str; 3] = ["l1", "l2", "m2"];

fn lorenz_box(estimate_beta: bool) -> ParameterBox {
    if estimate_beta {
        ParameterBox {
            names: vec!["sigma".into(), "rho".into(), "beta".into()],
            lower: vec![15.0, 40.0, 2.0],
            upper: vec![25.0, 80.0, 3.0],
        }
    } else {
        ParameterBox {
            names: vec!["sigma".into(), "rho".into()],
            lower: vec![15.0, 40.0],
            upper: vec![25.0, 80.0],
        }
    }
}

fn pendulum_box(lo: f64, hi: f64) -> ParameterBox {
    ParameterBox {
        names: PENDULUM_NAMES.iter().map(|s| s.to_string()).collect(),
        lower: vec![lo; 3],
        upper: vec![hi; 3],
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults for `kind`.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let multistart = MethodConfig::Multistart { optimizer: OptimizerConfig::default() };
        let base = Self {
            experiment: kind,
            seed: 0,
            n_instances: 5,
            n: 200,
            dt: 0.01,
            substeps: 1,
            methods: vec![MethodConfig::Grid { points_per_dim: vec![8, 8, 8] }],
            bounds: pendulum_box(1.0, 10.0),
            observation: ObservationConfig::LinearMap { dim: 40 },
            gravity: crate::dynamics::DEFAULT_GRAVITY,
            ic_std: 0.5f64.sqrt(),
            ic_components: IcComponents::All,
            parameter_set: None,
            grid_on_parameter_set: false,
            beta: 8.0 / 3.0,
            estimate_beta: false,
            t_f: Vec::new(),
            grid_sizes: Vec::new(),
        };
        match kind {
            ExperimentKind::PendulumEstimate => Self {
                methods: vec![MethodConfig::Grid { points_per_dim: vec![8, 8, 8] }, multistart],
                ..base
            },
            ExperimentKind::Baselines => Self {
                methods: vec![
                    MethodConfig::Grid { points_per_dim: vec![8, 8, 8] },
                    MethodConfig::Linear1 { points_per_dim: vec![8, 8, 8] },
                    MethodConfig::Linear2 { points_per_dim: vec![8, 8, 8] },
                ],
                ..base
            },
            ExperimentKind::SignalLength => Self {
                n_instances: 10,
                bounds: pendulum_box(1.5, 7.0),
                parameter_set: Some((0..12).map(|k| 1.5 + 0.5 * k as f64).collect()),
                grid_on_parameter_set: true,
                methods: vec![MethodConfig::Grid { points_per_dim: vec![12, 12, 12] }],
                t_f: vec![1.0, 5.0, 10.0],
                ..base
            },
            ExperimentKind::LorenzEstimate | ExperimentKind::LorenzNoisy | ExperimentKind::LorenzPartial => Self {
                bounds: lorenz_box(false),
                methods: vec![MethodConfig::Grid { points_per_dim: vec![20, 20] }],
                observation: match kind {
                    ExperimentKind::LorenzNoisy => ObservationConfig::LorenzNoisy { sigma: 15.0 },
                    ExperimentKind::LorenzPartial => ObservationConfig::LorenzPartial {
                        coefficients: PartialCoefficients::Distinct,
                    },
                    _ => ObservationConfig::LorenzFull,
                },
                ..base
            },
            ExperimentKind::GridRefinement => Self {
                n_instances: 20,
                bounds: ParameterBox { names: vec!["sigma".into()], lower: vec![15.0], upper: vec![25.0] },
                methods: vec![MethodConfig::Grid { points_per_dim: vec![10] }],
                n: 500,
                observation: ObservationConfig::LorenzFull,
                grid_sizes: vec![10, 100, 1000],
                ..base
            },
        }
    }

    /// Fills unspecified fields from the defaults of the chosen experiment.
    pub fn resolve(raw: RawConfig) -> Result<Self, ConfigError> {
        let kind = raw.experiment.ok_or_else(|| invalid("experiment", "missing experiment kind"))?;
        let mut c = Self::defaults(kind);
        if let Some(b) = raw.estimate_beta {
            c.estimate_beta = b;
            if matches!(kind, ExperimentKind::LorenzEstimate | ExperimentKind::LorenzNoisy | ExperimentKind::LorenzPartial) {
                c.bounds = lorenz_box(b);
                let m = c.bounds.dim();
                for method in &mut c.methods {
                    if let Some(p) = method.points_mut() {
                        *p = vec![p[0]; m];
                    }
                }
            }
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = raw.$f { c.$f = v; } )* };
        }
        take!(seed, n_instances, n, dt, substeps, methods, bounds, observation, gravity, ic_std, ic_components, grid_on_parameter_set, beta, t_f, grid_sizes);
        if raw.parameter_set.is_some() {
            c.parameter_set = raw.parameter_set;
        }
        c.validate()?;
        Ok(c)
    }

    /// Parses and resolves a JSON document; errors carry the source line.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = parse_json(text)?;
        Self::resolve(raw).map_err(|e| locate(text, e))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_instances == 0 {
            return Err(invalid("n_instances", "must be positive"));
        }
        if self.n < 3 {
            return Err(invalid("n", "need at least 3 samples; the score is constant for N = 2"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", "must be positive"));
        }
        if self.substeps == 0 {
            return Err(invalid("substeps", "must be positive"));
        }
        if self.methods.is_empty() {
            return Err(invalid("methods", "at least one method is required"));
        }
        self.bounds.validate().map_err(|e| invalid("box", e.to_string()))?;
        let m = self.bounds.dim();
        for method in &self.methods {
            if let Some(p) = method.points() {
                if p.len() != m {
                    return Err(invalid(
                        "methods",
                        format!("{} grid sizes for {} parameters", p.len(), m),
                    ));
                }
                if p.iter().any(|&k| k < 2) {
                    return Err(invalid("methods", "grid needs >= 2 points per axis"));
                }
            }
            if let MethodConfig::Multistart { optimizer } = method {
                optimizer.validate().map_err(|e| invalid("methods", e.to_string()))?;
            }
        }
        let expected_names: Vec<String> = match self.experiment {
            k if k.is_pendulum() => PENDULUM_NAMES.iter().map(|s| s.to_string()).collect(),
            ExperimentKind::GridRefinement => vec!["sigma".into()],
            _ => lorenz_box(self.estimate_beta).names,
        };
        if self.bounds.names != expected_names {
            return Err(invalid("box", format!("parameter names must be {expected_names:?}")));
        }
        if self.bounds.lower.iter().any(|&l| !(l > 0.0)) {
            return Err(invalid("box", "lower bounds must be positive; errors are relative"));
        }
        let pendulum_obs = matches!(
            self.observation,
            ObservationConfig::LinearMap { .. } | ObservationConfig::Cartesian | ObservationConfig::Video
        );
        if self.observation != ObservationConfig::Identity && self.experiment.is_pendulum() != pendulum_obs {
            return Err(invalid("observation", "observation does not match the experiment's system"));
        }
        match &self.observation {
            ObservationConfig::LinearMap { dim } if *dim == 0 => {
                return Err(invalid("observation", "dim must be positive"))
            }
            ObservationConfig::LorenzNoisy { sigma } if !(*sigma >= 0.0 && sigma.is_finite()) => {
                return Err(invalid("observation", "noise sigma must be non-negative"))
            }
            _ => {}
        }
        if !(self.gravity > 0.0) {
            return Err(invalid("gravity", "must be positive"));
        }
        if !(self.ic_std >= 0.0) {
            return Err(invalid("ic_std", "must be non-negative"));
        }
        if let Some(set) = &self.parameter_set {
            if set.is_empty() || set.iter().any(|v| !(*v > 0.0)) {
                return Err(invalid("parameter_set", "must be a non-empty list of positive values"));
            }
        }
        if self.grid_on_parameter_set && self.parameter_set.is_none() {
            return Err(invalid("grid_on_parameter_set", "requires `parameter_set`"));
        }
        if self.experiment == ExperimentKind::SignalLength
            && (self.t_f.is_empty() || self.t_f.iter().any(|t| (t / self.dt).round() < 3.0))
        {
            return Err(invalid("t_f", "need a non-empty list of durations spanning >= 3 samples"));
        }
        if self.experiment == ExperimentKind::GridRefinement && (self.grid_sizes.is_empty() || self.grid_sizes.iter().any(|&g| g < 2)) {
            return Err(invalid("grid_sizes", "need a non-empty list of sizes >= 2"));
        }
        if self.observation == ObservationConfig::Video
            && self.methods.iter().any(|m| matches!(m, MethodConfig::Oracle { .. }))
        {
            return Err(invalid("methods", "the oracle needs a closed-form observation map; not available for video"));
        }
        if self.experiment == ExperimentKind::GridRefinement
            && !self.methods.iter().all(|m| matches!(m, MethodConfig::Grid { .. }))
        {
            return Err(invalid("methods", "grid refinement sweeps the kernel grid method only"));
        }
        if self.experiment == ExperimentKind::Baselines
            && !self.methods.iter().any(|m| matches!(m, MethodConfig::Grid { .. }))
        {
            return Err(invalid("methods", "baselines need a kernel grid method as reference"));
        }
        Ok(())
    }

    /// Shrinks (or grows) instance count, sample count and grid sizes by `factor`.
    /// `factor == 1` returns the configuration unchanged.
    pub fn scaled(&self, factor: f64) -> Self {
        if factor == 1.0 {
            return self.clone();
        }
        let scale = |v: usize, min: usize| ((v as f64 * factor).round() as usize).max(min);
        let mut c = self.clone();
        c.n_instances = scale(c.n_instances, 1);
        c.n = scale(c.n, 3);
        for method in &mut c.methods {
            if let Some(p) = method.points_mut() {
                p.iter_mut().for_each(|k| *k = scale(*k, 2));
            }
        }
        c.grid_sizes.iter_mut().for_each(|k| *k = scale(*k, 2));
        c
    }
}
