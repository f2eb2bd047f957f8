//! Minimal dense linear algebra.
//!
//! Everything here operates on [`Matrix`], a row-major `f64` matrix. Sizes are
//! desk scale (a few hundred rows at most), so all routines are plain O(n³)
//! dense algorithms with no external backend.

mod eigen;
mod general;
mod lyapunov;
mod matrix;
mod simplex;

pub use eigen::{
    ensure_psd, min_eigenvalue, numerical_rank, singular_values, spectral_norm, sym_eigen,
    sym_eigenvalues, top_singular_pair, Spectrum,
};
pub use general::{eigenvalues, spectral_radius};
pub use lyapunov::{dlyap, dlyap_residual};
pub use matrix::{dot, kron, norm2, Matrix};
pub use simplex::{project_row_stochastic, project_simplex};
