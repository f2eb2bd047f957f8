//! Scalar-gain estimators: `W = I − αL`, `B = αI`.
//!
//! Everything follows from the extreme eigenvalues of `Q = L⊗I_n + D_H`,
//! since `P = (I_N⊗A)(I − αQ)` and `‖I − αQ‖₂ = max(|1−αλ₁|, |1−αλ_max|)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{Design, Provenance};
use crate::linalg::{spectral_norm, sym_eigenvalues, Matrix};
use crate::model::Plant;

/// An open interval `(lo, hi)`; `hi` may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    /// `(lo, hi) ⊆ other`.
    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    /// `n` evenly spaced interior points; the upper end is capped when infinite.
    pub fn interior_points(&self, n: usize) -> Vec<f64> {
        let hi = if self.hi.is_finite() { self.hi } else { self.lo + 1.0 };
        (1..=n).map(|k| self.lo + (hi - self.lo) * k as f64 / (n + 1) as f64).collect()
    }
}

/// Eigenvalues of `Q` below this fraction of `λ_max` count as zero.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct ScalarGainReport {
    #[serde(skip)]
    pub q: Option<Matrix>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `null` in JSON when infinite.
    pub c_alpha: f64,
    pub c_alpha_infinite: bool,
    pub alpha_opt: f64,
    pub min_norm: f64,
    /// `None` when no α stabilizes for this `a`.
    pub interval: Option<Interval>,
    pub a: f64,
}

impl ScalarGainReport {
    pub fn from_extremes(lambda_min: f64, lambda_max: f64, a: f64) -> Self {
        let lambda_max = lambda_max.max(0.0);
        // round-off around a true zero eigenvalue
        let lambda_min = if lambda_min <= ZERO_EIGENVALUE_TOL * lambda_max { 0.0 } else { lambda_min };
        let sum = lambda_max + lambda_min;
        let (c_alpha, alpha_opt, min_norm) = if lambda_max == 0.0 {
            (1.0, 0.0, 1.0)
        } else if lambda_max == lambda_min {
            (f64::INFINITY, 1.0 / lambda_max, 0.0)
        } else {
            let gap = lambda_max - lambda_min;
            (sum / gap, 2.0 / sum, gap / sum)
        };
        Self {
            q: None,
            lambda_min,
            lambda_max,
            c_alpha,
            c_alpha_infinite: c_alpha.is_infinite(),
            alpha_opt,
            min_norm,
            interval: interval_from(lambda_min, lambda_max, c_alpha, a),
            a,
        }
    }

    /// `‖I − αQ‖₂` from the extreme eigenvalues.
    pub fn norm_at(&self, alpha: f64) -> f64 {
        (1.0 - alpha * self.lambda_min).abs().max((1.0 - alpha * self.lambda_max).abs())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub(crate) fn interval_from(lambda_min: f64, lambda_max: f64, c_alpha: f64, a: f64) -> Option<Interval> {
    if !(a > 0.0) || a >= c_alpha {
        return None;
    }
    let lo = if lambda_min > 0.0 { (a - 1.0) / (a * lambda_min) } else { f64::NEG_INFINITY };
    let hi = if lambda_max > 0.0 { (a + 1.0) / (a * lambda_max) } else { f64::INFINITY };
    let lo = lo.max(0.0);
    (lo < hi).then_some(Interval { lo, hi })
}

/// `Q = L⊗I_n + D_H`.
pub fn build_q(plant: &Plant) -> Matrix {
    &plant.laplacian_kron() + &plant.build_dh()
}

/// Spectrum of `Q`, ascending. When every `D_H` block is diagonal, `Q`
/// splits into `n` independent N×N problems `L + diag(d_{·,k})`.
pub fn q_spectrum(plant: &Plant) -> Result<Vec<f64>> {
    let blocks = plant.dh_blocks();
    let n = plant.n();
    let diagonal = blocks
        .iter()
        .all(|b| (0..n).all(|r| (0..n).all(|c| r == c || b[(r, c)] == 0.0)));
    if !diagonal {
        return sym_eigenvalues(&build_q(plant));
    }
    let lap = plant.graph().laplacian();
    let mut values = Vec::with_capacity(plant.dim());
    for k in 0..n {
        let mut slice = lap.clone();
        for (i, b) in blocks.iter().enumerate() {
            slice[(i, i)] += b[(k, k)];
        }
        values.extend(sym_eigenvalues(&slice)?);
    }
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Closed-form scalar capacity report against the plant's own `a = ‖A‖₂`.
pub fn scalar_capacity(plant: &Plant) -> Result<ScalarGainReport> {
    scalar_report(plant, plant.instability())
}

/// Scalar capacity report for an arbitrary instability `a`.
pub fn scalar_report(plant: &Plant, a: f64) -> Result<ScalarGainReport> {
    let spec = q_spectrum(plant)?;
    let mut report = ScalarGainReport::from_extremes(spec[0], spec[spec.len() - 1], a);
    if plant.dim() <= 256 {
        report.q = Some(build_q(plant));
    }
    Ok(report)
}

/// `(α₀, α₁)`, clamped at zero, or `None` when `a ≥ C_α`.
pub fn alpha_interval(plant: &Plant, a: f64) -> Result<Option<Interval>> {
    if !(a > 0.0) {
        return Err(Error::BadParams(format!("a must be positive, got {a}")));
    }
    Ok(scalar_report(plant, a)?.interval)
}

/// `(1/λ₁ − 1/λ_max)(C_α/a − 1)`, the length of the unclamped interval.
pub fn interval_length(plant: &Plant, a: f64) -> Result<f64> {
    let r = scalar_report(plant, a)?;
    if !(a > 0.0) || a >= r.c_alpha {
        return Err(Error::CapacityExceeded { a, capacity: r.c_alpha });
    }
    if r.c_alpha_infinite {
        return Ok(2.0 / (a * r.lambda_max));
    }
    Ok((1.0 / r.lambda_min - 1.0 / r.lambda_max) * (r.c_alpha / a - 1.0))
}

/// Per-agent bound `(‖V‖ + α²a²N‖R̄‖)/(1 − a²‖I−αQ‖²)`.
pub fn scalar_performance_bound(plant: &Plant, alpha: f64) -> Result<f64> {
    let a = plant.instability();
    let r = scalar_report(plant, a)?;
    let rho = a * r.norm_at(alpha);
    if rho >= 1.0 {
        return Err(Error::Unstable { rho });
    }
    let n_agents = plant.agents() as f64;
    let num = spectral_norm(plant.v()) + alpha * alpha * a * a * n_agents * spectral_norm(&plant.rbar());
    Ok(num / (1.0 - rho * rho))
}

/// The same bound at `α = α_opt`, written through `C_α`:
/// `(C²/a²‖V‖ + 4C²/(λ_max+λ₁)²·N‖R̄‖)/(C²/a² − 1)`.
pub fn scalar_bound_at_optimum(plant: &Plant) -> Result<f64> {
    let a = plant.instability();
    let r = scalar_report(plant, a)?;
    if a >= r.c_alpha {
        return Err(Error::CapacityExceeded { a, capacity: r.c_alpha });
    }
    let n_agents = plant.agents() as f64;
    let v = spectral_norm(plant.v());
    let rbar = spectral_norm(&plant.rbar());
    let sum = r.lambda_max + r.lambda_min;
    if r.c_alpha_infinite || a == 0.0 {
        // ‖I − α_opt Q‖ = 0: the denominator is one
        return Ok(v + r.alpha_opt * r.alpha_opt * a * a * n_agents * rbar);
    }
    let k = (r.c_alpha / a).powi(2);
    let c2 = r.c_alpha * r.c_alpha;
    Ok((k * v + 4.0 * c2 / (sum * sum) * n_agents * rbar) / (k - 1.0))
}

/// The scalar design at `α_opt`.
pub fn optimal_design(plant: &Plant) -> Result<Design> {
    let r = scalar_report(plant, plant.instability())?;
    Design::scalar(plant, r.alpha_opt, Provenance::ScalarClosedForm)
}
