//! Symmetric eigendecomposition by cyclic Jacobi rotations, plus the
//! singular-value helpers built on it.

use serde::Serialize;

use super::matrix::{dot, norm2, Matrix};
use crate::error::{Error, Result};

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues in ascending order, with optional orthonormal eigenvectors
/// stored as the columns of `vectors`.
#[derive(Clone, Debug, Serialize)]
pub struct Spectrum {
    pub values: Vec<f64>,
    #[serde(skip)]
    pub vectors: Option<Matrix>,
}

impl Spectrum {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Eigenvector `k` (ascending order), if vectors were computed.
    pub fn vector(&self, k: usize) -> Option<Vec<f64>> {
        let v = self.vectors.as_ref()?;
        Some((0..v.rows()).map(|i| v[(i, k)]).collect())
    }
}

fn check_symmetric(m: &Matrix) -> Result<()> {
    m.ensure_square()?;
    let asym = m.asymmetry();
    if asym > SYMMETRY_TOL * m.max_abs() {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix.
pub fn sym_eigen(m: &Matrix) -> Result<Spectrum> {
    check_symmetric(m)?;
    Ok(jacobi(m.symmetrize(), true))
}

/// Eigenvalues only; skips the eigenvector accumulation.
pub fn sym_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    check_symmetric(m)?;
    Ok(jacobi(m.symmetrize(), false).values)
}

fn jacobi(mut a: Matrix, want_vectors: bool) -> Spectrum {
    let n = a.rows();
    let mut v = want_vectors.then(|| Matrix::identity(n));
    let scale = a.frobenius_norm();
    let threshold = JACOBI_TOL * scale.max(f64::MIN_POSITIVE);

    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    let new_kp = c * akp - s * akq;
                    let new_kq = s * akp + c * akq;
                    a[(k, p)] = new_kp;
                    a[(p, k)] = new_kp;
                    a[(k, q)] = new_kq;
                    a[(q, k)] = new_kq;
                }
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = v.map(|v| {
        let mut sorted = Matrix::zeros(n, n);
        for (col, &src) in order.iter().enumerate() {
            for k in 0..n {
                sorted[(k, col)] = v[(k, src)];
            }
        }
        sorted
    });
    Spectrum { values, vectors }
}

/// Induced two-norm: `√λ_max(MᵀM)`.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.rows() == 0 || m.cols() == 0 {
        return 0.0;
    }
    let gram = if m.rows() < m.cols() {
        m.matmul(&m.transpose())
    } else {
        m.transpose().matmul(m)
    };
    let top = jacobi(gram.symmetrize(), false).max();
    top.max(0.0).sqrt()
}

/// Singular values in ascending order.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    let gram = m.transpose().matmul(m);
    jacobi(gram.symmetrize(), false)
        .values
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect()
}

/// Numerical rank: singular values above `rel_tol · σ_max`.
pub fn numerical_rank(m: &Matrix, rel_tol: f64) -> usize {
    let sv = singular_values(m);
    let top = sv.last().copied().unwrap_or(0.0);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// Minimum eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Matrix) -> Result<f64> {
    Ok(sym_eigenvalues(m)?.first().copied().unwrap_or(0.0))
}

/// Checks symmetry and `λ_min ≥ -tol · max(1, λ_max)`.
pub fn ensure_psd(m: &Matrix, tol: f64) -> Result<()> {
    let ev = sym_eigenvalues(m)?;
    let lo = ev.first().copied().unwrap_or(0.0);
    let hi = ev.last().copied().unwrap_or(0.0).abs();
    if lo < -tol * hi.max(1.0) {
        return Err(Error::NotPsd { min_eigenvalue: lo });
    }
    Ok(())
}

/// Top singular triple `(σ, u, v)` of `m` by power iteration on `MᵀM`,
/// optionally warm-started from a previous right vector.
pub fn top_singular_pair(m: &Matrix, warm: Option<&[f64]>, max_iter: usize) -> (f64, Vec<f64>, Vec<f64>) {
    let n = m.cols();
    let mut v: Vec<f64> = match warm {
        Some(w) if w.len() == n && norm2(w) > 0.0 => w.to_vec(),
        _ => (0..n).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect(),
    };
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut sigma = 0.0;
    for _ in 0..max_iter {
        let mv = m.mul_vec(&v);
        let mut w = m.tr_mul_vec(&mv);
        let lambda = dot(&v, &w);
        let nw = norm2(&w);
        if nw == 0.0 {
            sigma = 0.0;
            break;
        }
        w.iter_mut().for_each(|x| *x /= nw);
        let new_sigma = lambda.max(0.0).sqrt();
        let done = (new_sigma - sigma).abs() <= 1e-13 * new_sigma.max(1e-300);
        sigma = new_sigma;
        v = w;
        if done {
            break;
        }
    }
    let mut u = m.mul_vec(&v);
    let nu = norm2(&u);
    if nu > 0.0 {
        u.iter_mut().for_each(|x| *x /= nu);
        sigma = nu;
    } else {
        u = vec![0.0; m.rows()];
        if let Some(x) = u.first_mut() {
            *x = 1.0;
        }
    }
    (sigma, u, v)
}
