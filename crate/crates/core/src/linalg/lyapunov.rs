use super::eigen::spectral_norm;
use super::general::spectral_radius;
use super::matrix::Matrix;
use crate::error::{Error, Result};

const MAX_DOUBLINGS: usize = 200;

/// Solves `S = P S Pᵀ + Σ` for stable `P` by the doubling iteration
/// `S ← S + Pₖ S Pₖᵀ`, `Pₖ ← Pₖ²`.
///
/// Stops once the increment drops below `tol · ‖S‖₂`.
pub fn dlyap(p: &Matrix, sigma: &Matrix, tol: f64) -> Result<Matrix> {
    p.ensure_square()?;
    if sigma.shape() != p.shape() {
        return Err(Error::DimensionMismatch(format!(
            "P is {:?}, Sigma is {:?}",
            p.shape(),
            sigma.shape()
        )));
    }
    let rho = spectral_radius(p)?;
    if rho >= 1.0 - 1e-9 {
        return Err(Error::Unstable { rho });
    }
    let mut s = sigma.symmetrize();
    let mut pk = p.clone();
    for _ in 0..MAX_DOUBLINGS {
        let inc = pk.matmul(&s).matmul(&pk.transpose());
        s = &s + &inc;
        let inc_norm = inc.max_abs();
        if inc_norm <= tol * s.max_abs() || inc_norm == 0.0 {
            break;
        }
        pk = pk.matmul(&pk);
    }
    Ok(s.symmetrize())
}

/// `‖S − P S Pᵀ − Σ‖₂`.
pub fn dlyap_residual(p: &Matrix, sigma: &Matrix, s: &Matrix) -> f64 {
    let r = &(s - &p.matmul(s).matmul(&p.transpose())) - sigma;
    spectral_norm(&r)
}
