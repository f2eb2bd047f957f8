use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Euclidean projection of `v` onto the probability simplex (sort-and-threshold).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Projects each row of `w`, restricted to its `support` mask, onto the simplex.
/// Entries outside the support are set to zero.
pub fn project_row_stochastic(w: &Matrix, support: &[Vec<bool>]) -> Result<Matrix> {
    if support.len() != w.rows() || support.iter().any(|s| s.len() != w.cols()) {
        return Err(Error::DimensionMismatch("support mask shape differs from W".into()));
    }
    let mut out = Matrix::zeros(w.rows(), w.cols());
    for (i, mask) in support.iter().enumerate() {
        let idx: Vec<usize> = (0..w.cols()).filter(|&j| mask[j]).collect();
        if idx.is_empty() {
            return Err(Error::EmptySupport { row: i });
        }
        let vals: Vec<f64> = idx.iter().map(|&j| w[(i, j)]).collect();
        for (&j, p) in idx.iter().zip(project_simplex(&vals)) {
            out[(i, j)] = p;
        }
    }
    Ok(out)
}
