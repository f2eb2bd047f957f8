//! α intervals computable from local quantities: `N`, `λ₂(L)`, `λ_max(L)`
//! (closed form for structured graphs) and `λ_max(D_H)` (from one-hop data).
//!
//! Both methods bound the spectrum of `Q` as
//! `τ(λ₂, e₁) ≤ λ₁(Q) ≤ λ_max(Q) ≤ λ_max(D_H) + λ_max(L)` and substitute the
//! bounds into the scalar-gain interval.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{
    circulant_laplacian_spectrum, cycle_decompose, find_circulant_structure, hamiltonian_cycle,
    verify_circulant_isomorphism, Graph, CYCLE_SEARCH_LIMIT, ISOMORPHISM_SEARCH_LIMIT,
};
use crate::linalg::{ensure_psd, sym_eigenvalues, Matrix};
use crate::model::Plant;
use crate::scalar_design::{interval_from, Interval};

const SPECTRUM_TOL: f64 = 1e-8;
const PSD_TOL: f64 = 1e-10;

/// `½(λ₂ + ‖z‖² − √((λ₂ + ‖z‖²)² − 4λ₂ z₁²))`, a lower bound on
/// `λ₁(L + zzᵀ)` where `z₁` is the component of `z` along `1/√N`.
pub fn ipsen_bound(lambda2: f64, z_norm_sq: f64, z1: f64) -> f64 {
    if lambda2 <= 0.0 {
        return 0.0;
    }
    let s = lambda2 + z_norm_sq;
    let disc = (s * s - 4.0 * lambda2 * z1 * z1).max(0.0);
    (0.5 * (s - disc.sqrt())).max(0.0)
}

/// [`ipsen_bound`] for an explicit vector `z` of length `N`.
pub fn ipsen_lower_bound(lambda2: f64, z: &[f64]) -> f64 {
    let n = z.len() as f64;
    let z1 = z.iter().sum::<f64>() / n.sqrt();
    ipsen_bound(lambda2, z.iter().map(|x| x * x).sum(), z1)
}

/// `τ(λ₂, e₁)` on `N` vertices.
pub fn tau(lambda2: f64, n: usize) -> f64 {
    ipsen_bound(lambda2, 1.0, 1.0 / (n as f64).sqrt())
}

/// `(λ₁(A₁), λ_max(A₁) + λ_max(B₁))`, which bracket the spectrum of `A₁ + B₁`.
pub fn weyl_bounds(a1: &Matrix, b1: &Matrix) -> Result<(f64, f64)> {
    ensure_psd(a1, PSD_TOL)?;
    ensure_psd(b1, PSD_TOL)?;
    let ea = sym_eigenvalues(a1)?;
    let eb = sym_eigenvalues(b1)?;
    Ok((ea[0], ea[ea.len() - 1] + eb[eb.len() - 1]))
}

/// For the canonical model (`n = N`, each `H_i` a single unit row), the
/// coordinate observed by each agent.
fn canonical_coordinates(plant: &Plant) -> Option<Vec<usize>> {
    let n = plant.n();
    if n != plant.agents() {
        return None;
    }
    let mut seen = vec![false; n];
    let mut coords = Vec::with_capacity(n);
    for h in plant.h() {
        if h.rows() != 1 {
            return None;
        }
        let row = h.row(0);
        let ones: Vec<usize> = (0..n).filter(|&k| row[k] == 1.0).collect();
        if ones.len() != 1 || row.iter().filter(|&&x| x != 0.0).count() != 1 || seen[ones[0]] {
            return None;
        }
        seen[ones[0]] = true;
        coords.push(ones[0]);
    }
    Some(coords)
}

/// `(m, relabeling)` with `g ≅ circulant(N, m)`. Beyond the exhaustive
/// search limit only the identity relabeling is tried.
fn circulant_structure(g: &Graph, hint: Option<(usize, &[usize])>) -> Result<Option<(usize, Vec<usize>)>> {
    if let Some((m, perm)) = hint {
        return Ok(verify_circulant_isomorphism(g, m, perm)?.then(|| (m, perm.to_vec())));
    }
    if g.n() <= ISOMORPHISM_SEARCH_LIMIT {
        return find_circulant_structure(g);
    }
    let identity: Vec<usize> = (0..g.n()).collect();
    for m in 1..g.n() {
        if verify_circulant_isomorphism(g, m, &identity)? {
            return Ok(Some((m, identity)));
        }
    }
    Ok(None)
}

/// Checks that `L⊗I_n + D̄_H` and `I_n⊗(L + H_iᵀH_i)` have the same spectrum
/// for every agent `i`, on circulant-isomorphic graphs with the canonical
/// observation model.
pub fn circulant_spectrum_equivalence(plant: &Plant) -> Result<bool> {
    circulant_spectrum_equivalence_with(plant, None)
}

pub fn circulant_spectrum_equivalence_with(plant: &Plant, relabeling: Option<(usize, &[usize])>) -> Result<bool> {
    if canonical_coordinates(plant).is_none() {
        return Err(Error::ModelMismatch("observations are not one distinct unit coordinate per agent with n = N".into()));
    }
    if circulant_structure(plant.graph(), relabeling)?.is_none() {
        return Err(Error::ModelMismatch("graph is not isomorphic to a circulant graph".into()));
    }
    let lhs = sym_eigenvalues(&(&plant.laplacian_kron() + &plant.dh_own()))?;
    let lap = plant.graph().laplacian();
    let n = plant.n();
    for g in &plant.local_grams() {
        let base = sym_eigenvalues(&(&lap + g))?;
        let mut rhs: Vec<f64> = (0..n).flat_map(|_| base.iter().copied()).collect();
        rhs.sort_by(f64::total_cmp);
        if lhs.iter().zip(&rhs).any(|(x, y)| (x - y).abs() > SPECTRUM_TOL) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalMethod {
    CirculantIsomorphic,
    CycleSubgraph,
}

/// Where `λ_max(L)` comes from in the cycle-subgraph method.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaMaxSource {
    Exact,
    /// `λ_max(L) ≤ 2·max degree`.
    DegreeBound,
    /// A value the caller knows to upper-bound `λ_max(L)`.
    Supplied(f64),
}

#[derive(Clone, Debug)]
pub struct LocalOptions {
    /// Restrict to one method; otherwise the circulant path is tried first.
    pub method: Option<LocalMethod>,
    /// `(m, relabeling)` carrying the graph onto `circulant(N, m)`.
    pub relabeling: Option<(usize, Vec<usize>)>,
    /// Vertex order of a Hamiltonian cycle; searched for when absent.
    pub cycle: Option<Vec<usize>>,
    pub lambda_max: LambdaMaxSource,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self { method: None, relabeling: None, cycle: None, lambda_max: LambdaMaxSource::Exact }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalBoundReport {
    pub method: LocalMethod,
    pub tau: f64,
    /// `λ₂` fed into `τ`.
    pub lambda2: f64,
    pub lambda_max_laplacian: f64,
    pub lambda_max_dh: f64,
    /// `λ_max(D_H) + λ_max(L)`, an upper bound on `λ_max(Q)`.
    pub lambda_max_bound: f64,
    /// `None` when `a ≥ C_loc`.
    pub interval: Option<Interval>,
    /// `null` in JSON when infinite.
    pub c_loc: f64,
    pub a: f64,
}

impl LocalBoundReport {
    fn new(method: LocalMethod, lambda2: f64, n: usize, lmax_l: f64, lmax_dh: f64, a: f64) -> Self {
        let tau = tau(lambda2, n);
        let upper = lmax_dh + lmax_l;
        let c_loc = if tau <= 0.0 {
            1.0
        } else if upper <= tau {
            f64::INFINITY
        } else {
            (upper + tau) / (upper - tau)
        };
        Self {
            method,
            tau,
            lambda2,
            lambda_max_laplacian: lmax_l,
            lambda_max_dh: lmax_dh,
            lambda_max_bound: upper,
            interval: interval_from(tau, upper, c_loc, a),
            c_loc,
            a,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn lambda_max_dh(plant: &Plant) -> Result<f64> {
    let mut best = 0.0f64;
    for b in plant.dh_blocks() {
        best = best.max(*sym_eigenvalues(&b)?.last().expect("nonempty block"));
    }
    Ok(best)
}

fn circulant_method(plant: &Plant, a: f64, opts: &LocalOptions) -> Result<LocalBoundReport> {
    if canonical_coordinates(plant).is_none() {
        return Err(Error::NotApplicable("circulant method needs n = N with one distinct unit coordinate per agent".into()));
    }
    let hint = opts.relabeling.as_ref().map(|(m, p)| (*m, p.as_slice()));
    let (m, _) = circulant_structure(plant.graph(), hint)?
        .ok_or_else(|| Error::NotApplicable("graph is not isomorphic to a circulant graph".into()))?;
    let n = plant.agents();
    let spec = circulant_laplacian_spectrum(n, m);
    // D_H is diagonal with 0/1 entries, so λ_max(D_H) = 1
    Ok(LocalBoundReport::new(LocalMethod::CirculantIsomorphic, spec[1], n, spec[n - 1], 1.0, a))
}

fn cycle_method(plant: &Plant, a: f64, opts: &LocalOptions) -> Result<LocalBoundReport> {
    let n = plant.agents();
    if plant.n() != n || n < 3 {
        return Err(Error::NotApplicable("cycle method needs n = N ≥ 3".into()));
    }
    let g = plant.graph();
    let order = match &opts.cycle {
        Some(c) => c.clone(),
        None => {
            if n > CYCLE_SEARCH_LIMIT {
                return Err(Error::NotApplicable(format!("no cycle supplied and N = {n} exceeds the search limit")));
            }
            hamiltonian_cycle(g)?.ok_or_else(|| Error::NotApplicable("graph has no Hamiltonian cycle".into()))?
        }
    };
    let decomposition = cycle_decompose(g, &order).map_err(|e| Error::NotApplicable(e.to_string()))?;
    ensure_psd(&decomposition.l1, PSD_TOL)?;

    // D_H minus the canonical own-observation part must stay PSD
    let canonical: Vec<Matrix> = (0..n)
        .map(|i| {
            let mut d = vec![0.0; n];
            d[i] = 1.0;
            Matrix::from_diag(&d)
        })
        .collect();
    for (i, (b, c)) in plant.dh_blocks().iter().zip(&canonical).enumerate() {
        if ensure_psd(&(b - c), PSD_TOL).is_err() {
            return Err(Error::NotApplicable(format!("D_H block {i} does not dominate e_{i}e_{i}ᵀ")));
        }
    }

    let lambda2 = 2.0 - 2.0 * (2.0 * std::f64::consts::PI / n as f64).cos();
    let lmax_l = match opts.lambda_max {
        LambdaMaxSource::Exact => g.laplacian_spectrum()[n - 1],
        LambdaMaxSource::DegreeBound => 2.0 * g.max_degree() as f64,
        LambdaMaxSource::Supplied(v) => v,
    };
    Ok(LocalBoundReport::new(LocalMethod::CycleSubgraph, lambda2, n, lmax_l, lambda_max_dh(plant)?, a))
}

/// Local α interval for instability `a`.
pub fn local_alpha_interval(plant: &Plant, a: f64, opts: &LocalOptions) -> Result<LocalBoundReport> {
    if !(a > 0.0) {
        return Err(Error::BadParams(format!("a must be positive, got {a}")));
    }
    match opts.method {
        Some(LocalMethod::CirculantIsomorphic) => circulant_method(plant, a, opts),
        Some(LocalMethod::CycleSubgraph) => cycle_method(plant, a, opts),
        None => match circulant_method(plant, a, opts) {
            Ok(r) => Ok(r),
            Err(Error::NotApplicable(first)) => cycle_method(plant, a, opts)
                .map_err(|e| Error::NotApplicable(format!("{first}; {e}"))),
            Err(e) => Err(e),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar_design::scalar_report;

    #[test]
    fn ipsen_examples() {
        assert_eq!(ipsen_lower_bound(0.0, &[1.0, 0.0, 0.0]), 0.0);
        let t = ipsen_lower_bound(2.0, &[1.0, 0.0, 0.0, 0.0]);
        assert!((t - 0.5 * (3.0 - 7f64.sqrt())).abs() < 1e-15);
        assert!((t - 0.17712).abs() < 1e-5);
        assert_eq!(t, tau(2.0, 4));
    }

    #[test]
    fn weyl_examples() {
        let a = Matrix::from_diag(&[1.0, 3.0]);
        assert_eq!(weyl_bounds(&a, &Matrix::zeros(2, 2)).unwrap(), (1.0, 3.0));
        assert_eq!(weyl_bounds(&Matrix::identity(3), &Matrix::identity(3)).unwrap(), (1.0, 2.0));
        assert!(matches!(weyl_bounds(&Matrix::from_diag(&[-1.0]), &Matrix::identity(1)), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn spectrum_equivalence() {
        let p = Plant::canonical_scalar(Graph::cycle(4).unwrap(), 1.0).unwrap();
        assert!(circulant_spectrum_equivalence(&p).unwrap());
        let p = Plant::canonical_scalar(Graph::circulant(6, 2).unwrap(), 1.0).unwrap();
        assert!(circulant_spectrum_equivalence(&p).unwrap());
        let mut h = p.h().to_vec();
        h[0] = Matrix::row_vector(&[1.0, 0.5, 0.0, 0.0, 0.0, 0.0]);
        let off = Plant::new(p.a().clone(), h, p.v().clone(), p.r().to_vec(), p.graph().clone()).unwrap();
        assert!(matches!(circulant_spectrum_equivalence(&off), Err(Error::ModelMismatch(_))));
    }

    #[test]
    fn four_cycle_local_inside_global() {
        let p = Plant::canonical_scalar(Graph::cycle(4).unwrap(), 1.0).unwrap();
        let probe = local_alpha_interval(&p, 1.0, &LocalOptions::default()).unwrap();
        let a = 1.0 + 0.5 * (probe.c_loc - 1.0);
        let r = local_alpha_interval(&p, a, &LocalOptions::default()).unwrap();
        assert_eq!(r.method, LocalMethod::CirculantIsomorphic);
        let global = scalar_report(&p, a).unwrap();
        assert!(r.c_loc <= global.c_alpha);
        let (li, gi) = (r.interval.unwrap(), global.interval.unwrap());
        assert!(gi.lo < li.lo && li.hi < gi.hi);
        assert!(local_alpha_interval(&p, r.c_loc, &LocalOptions::default()).unwrap().interval.is_none());
    }

    #[test]
    fn pure_cycle_methods_agree() {
        let p = Plant::canonical_scalar(Graph::cycle(6).unwrap(), 1.05).unwrap();
        let one = local_alpha_interval(&p, 1.05, &LocalOptions { method: Some(LocalMethod::CirculantIsomorphic), ..Default::default() })
            .unwrap();
        let opts = LocalOptions {
            method: Some(LocalMethod::CycleSubgraph),
            cycle: Some((0..6).collect()),
            ..Default::default()
        };
        let two = local_alpha_interval(&p, 1.05, &opts).unwrap();
        assert_eq!(two.lambda_max_dh, 1.0);
        assert!((one.tau - two.tau).abs() < 1e-12);
        assert!((one.lambda_max_bound - two.lambda_max_bound).abs() < 1e-12);
        assert!((one.c_loc - two.c_loc).abs() < 1e-9);
    }

    #[test]
    fn not_applicable_without_structure() {
        let p = Plant::unobserved(Graph::cycle(4).unwrap(), 2, 1.0).unwrap();
        assert!(matches!(local_alpha_interval(&p, 1.0, &LocalOptions::default()), Err(Error::NotApplicable(_))));
        // a path has no Hamiltonian cycle
        let path = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let p = Plant::canonical_scalar(path, 1.0).unwrap();
        assert!(matches!(local_alpha_interval(&p, 1.0, &LocalOptions::default()), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn cycle_subgraph_sandwich() {
        // K4 minus one chord still contains a 4-cycle
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]).unwrap();
        let p = Plant::canonical_scalar(g, 1.0).unwrap();
        let r = local_alpha_interval(&p, 1.0, &LocalOptions::default()).unwrap();
        assert_eq!(r.method, LocalMethod::CycleSubgraph);
        let global = scalar_report(&p, 1.0).unwrap();
        assert!(r.tau <= global.lambda_min + 1e-12);
        assert!(global.lambda_max <= r.lambda_max_bound + 1e-12);
        let loose = local_alpha_interval(&p, 1.0, &LocalOptions { lambda_max: LambdaMaxSource::DegreeBound, ..Default::default() })
            .unwrap();
        assert!(loose.lambda_max_bound >= r.lambda_max_bound);
        assert!(loose.c_loc <= r.c_loc);
    }
}
