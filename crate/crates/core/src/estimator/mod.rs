//! The estimator recursion, its closed-form error dynamics and Monte Carlo
//! simulation.

mod design;
mod dynamics;
mod simulate;

pub use design::{Design, DesignKind, Provenance};
pub use dynamics::{contraction_matrix, error_dynamics, exact_steady_covariance, step_estimates, ErrorDynamics};
pub(crate) use dynamics::contraction_from;
pub use simulate::{simulate, SimulationOptions, SimulationResult, DIVERGENCE_THRESHOLD};
