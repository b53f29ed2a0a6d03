//! Parameter estimation for ODE models observed through an unknown, possibly
//! high-dimensional observation function.
//!
//! The estimators compare the time-sample Gram matrix of a simulated model
//! trajectory with that of the observed series and pick the parameters whose
//! centered kernels align best. Modules:
//!
//! - [`dynamics`]: Lorenz '63 and double-pendulum vector fields, RK4 integration.
//! - [`observation`]: Legendre embeddings, linear maps and a pendulum video renderer.
//! - [`kernelscore`]: Gaussian Gram matrices, max-min bandwidths, the alignment score
//!   and the linear/oracle baselines.
//! - [`estimator`]: exhaustive grid search and multi-start local ascent.
//! - [`harness`]: experiment runner and CLI.

pub mod dynamics;
pub mod estimator;
pub mod harness;
pub mod kernelscore;
pub mod observation;

pub use dynamics::{integrate, DynamicsError, ParameterVector, SystemKind, SystemSpec, Trajectory};
pub use estimator::{
    grid_search, local_optimize, multistart_estimate, EstimationResult, EstimatorError, Objective, OptimizerConfig,
    ParameterBox, SearchGrid,
};
pub use kernelscore::{
    centered_score, gaussian_gram, maxmin_bandwidth, EpsPolicy, FeatureMap, GramMatrix, KernelError, KernelScorer,
    ModelProblem, ScoreValue,
};
pub use observation::{ObservationError, ObservationSeries};
