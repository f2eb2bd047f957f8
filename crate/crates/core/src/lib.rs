//! Design and analysis of single time-scale networked estimators.
//!
//! A network of `N` agents tracks the state of a linear system
//! `x_{k+1} = A x_k + v_k`, each agent observing `y^i_k = H_i x_k + r^i_k` and
//! exchanging estimates with its graph neighbours exactly once per step:
//!
//! ```text
//! x̂ⁱ_{k+1} = A ( Σ_{j∈N_i} w_ij x̂ʲ_k + B_i Σ_{j∈N_i} H_jᵀ (yʲ_k − H_j x̂ⁱ_k) )
//! ```
//!
//! The crate answers three questions about such a network:
//!
//! * how unstable a system (in the `‖A‖₂` sense) it can track with bounded
//!   error, the *network tracking capacity* ([`norm_design`], [`scalar_design`],
//!   [`local_design`]);
//! * which weights `W` and gains `B` achieve it ([`norm_design`],
//!   [`scalar_design`], [`lmi_design`]);
//! * what steady-state error results ([`estimator`]), both exactly through the
//!   discrete Lyapunov equation and empirically by Monte Carlo simulation.

pub mod cli;
pub mod error;
pub mod estimator;
pub mod graph;
pub mod linalg;
pub mod lmi_design;
pub mod local_design;
pub mod model;
pub mod norm_design;
pub mod scalar_design;

pub use error::{Error, Result};
pub use estimator::{Design, DesignKind, ErrorDynamics, Provenance, SimulationResult};
pub use graph::Graph;
pub use linalg::Matrix;
pub use model::Plant;
