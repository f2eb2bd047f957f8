//! Spectral-radius design by cone complementarity linearization (CCL).
//!
//! `ρ(Â) < 1` holds iff some `X ≻ 0` gives `X − ÂᵀXÂ ≻ 0`. With `Y = X⁻¹`
//! this is the LMI `[[X, Âᵀ], [Â, Y]] ≻ 0`, linear in `(X, Y, W, B)` apart
//! from the coupling `XY = I`. CCL relaxes the coupling to
//! `[[X, I], [I, Y]] ⪰ 0` and drives `tr(XY)` down to `nN` by repeatedly
//! minimizing the linearization `tr(Y_t X + X_t Y)`.
//!
//! The linearized subproblem is solved approximately: a gradient step on
//! `(X, Y)` followed by alternating projections onto the two PSD cones and the
//! structure set of `(W, B)`. This is a central design tool for desk-scale
//! instances; optimality of the subproblem is not certified.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{Design, Provenance};
use crate::linalg::{dlyap, kron, project_row_stochastic, spectral_norm, spectral_radius, sym_eigen, sym_eigenvalues, Matrix};
use crate::model::Plant;
use crate::norm_design::{compute_ntc, NtcOptions};
use crate::scalar_design::optimal_design;

const STABLE_MARGIN: f64 = 1e-9;
const LINE_SEARCH_HALVINGS: usize = 10;
const MAX_REL_STEP: f64 = 1.0;
const INNER_MARGIN: f64 = 1e-4;

/// `Â = W⊗A − (I_N⊗A)·B·D_H`.
pub fn assemble_ahat(plant: &Plant, w: &Matrix, b: &Matrix) -> Result<Matrix> {
    let agents = plant.agents();
    let dim = plant.dim();
    if w.shape() != (agents, agents) || b.shape() != (dim, dim) {
        return Err(Error::DimensionMismatch(format!(
            "W is {:?} and B is {:?}, expected {agents}x{agents} and {dim}x{dim}",
            w.shape(),
            b.shape()
        )));
    }
    let ia = kron(&Matrix::identity(agents), plant.a());
    Ok(&kron(w, plant.a()) - &ia.matmul(b).matmul(&plant.build_dh()))
}

/// `tr(Y_t·X + X_t·Y)`.
pub fn trace_objective(x: &Matrix, y: &Matrix, x_t: &Matrix, y_t: &Matrix) -> f64 {
    frobenius_inner(y_t, x) + frobenius_inner(x_t, y)
}

/// `tr(PᵀQ)`, which equals `tr(PQ)` for symmetric `P`.
fn frobenius_inner(p: &Matrix, q: &Matrix) -> f64 {
    p.data().iter().zip(q.data()).map(|(a, b)| a * b).sum()
}

fn block2(tl: &Matrix, bl: &Matrix, br: &Matrix) -> Matrix {
    let m = tl.rows();
    let mut out = Matrix::zeros(2 * m, 2 * m);
    out.set_block(0, 0, tl);
    out.set_block(m, 0, bl);
    out.set_block(0, m, &bl.transpose());
    out.set_block(m, m, br);
    out
}

/// Smallest eigenvalues of `[[X, Âᵀ], [Â, Y]]` and `[[X, I], [I, Y]]`.
fn lmi_margins(x: &Matrix, y: &Matrix, ahat: &Matrix) -> Result<(f64, f64)> {
    let m = x.rows();
    let main = sym_eigenvalues(&block2(x, ahat, y))?[0];
    let coupling = sym_eigenvalues(&block2(x, &Matrix::identity(m), y))?[0];
    Ok((main, coupling))
}

fn structure_ok(plant: &Plant, w: &Matrix, b: &Matrix) -> bool {
    Design::full(plant, w.clone(), b.clone(), Provenance::User).is_ok()
}

/// Whether `(X, Y, W, B)` satisfies both LMIs at tolerance `tol` and the
/// structural constraints on `W` and `B` exactly.
pub fn lmi_feasible(plant: &Plant, x: &Matrix, y: &Matrix, w: &Matrix, b: &Matrix, tol: f64) -> bool {
    let dim = plant.dim();
    if x.shape() != (dim, dim) || y.shape() != (dim, dim) || !structure_ok(plant, w, b) {
        return false;
    }
    let Ok(ahat) = assemble_ahat(plant, w, b) else {
        return false;
    };
    let (Ok(ex), Ok(ey)) = (sym_eigenvalues(x), sym_eigenvalues(y)) else {
        return false;
    };
    if ex[0] <= tol || ey[0] <= tol {
        return false;
    }
    match lmi_margins(x, y, &ahat) {
        Ok((main, coupling)) => main > tol && coupling >= -tol,
        Err(_) => false,
    }
}

#[derive(Clone, Debug)]
pub struct CclOptions {
    pub seed: u64,
    pub lmi_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Stop when `s_t` improves by less than this over `stall_window` iterations.
    pub stall_tol: f64,
    pub stall_window: usize,
    /// Also stop once `s_t ≤ 2nN + ε`.
    pub trace_target: Option<f64>,
    pub random_draws: usize,
    /// Gradient step on `(X, Y)`, relative to `‖X‖_F / ‖Y_t‖_F`.
    pub step: f64,
}

impl Default for CclOptions {
    fn default() -> Self {
        Self {
            seed: 42,
            lmi_tol: 1e-8,
            max_outer: 500,
            max_inner: 50,
            stall_tol: 1e-6,
            stall_window: 10,
            trace_target: None,
            random_draws: 20,
            step: 0.1,
        }
    }
}

impl CclOptions {
    /// Enables the `2nN + ε` stopping rule with `ε = 1e-3`.
    pub fn with_trace_target(mut self) -> Self {
        self.trace_target = Some(1e-3);
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CclState {
    #[serde(skip)]
    pub x: Matrix,
    #[serde(skip)]
    pub y: Matrix,
    pub w: Matrix,
    pub b: Matrix,
    pub trace_sequence: Vec<f64>,
    pub iteration: usize,
}

impl CclState {
    pub fn ahat(&self, plant: &Plant) -> Result<Matrix> {
        assemble_ahat(plant, &self.w, &self.b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CclStatus {
    Success,
    Infeasible,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Stable,
    TraceTarget,
    Stalled,
    MaxIterations,
}

/// Where the starting `(W, B)` came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartSource {
    ScalarOptimum,
    NormDesign,
    RandomDraw,
}

#[derive(Clone, Debug, Serialize)]
pub struct CclReport {
    pub status: CclStatus,
    pub stop: StopReason,
    pub start: StartSource,
    /// `ρ(Â)` of the returned iterate.
    pub rho: f64,
    /// `λ₁([[X, Âᵀ], [Â, Y]])` of the returned iterate.
    pub lmi_margin: f64,
    /// `λ₁([[X, I], [I, Y]])` of the returned iterate.
    pub coupling_margin: f64,
    /// `s_t − 2nN` at the end.
    pub trace_gap: f64,
    #[serde(skip)]
    pub design: Option<Design>,
    pub state: CclState,
}

impl CclReport {
    pub fn iterations(&self) -> usize {
        self.state.iteration
    }

    /// Diagnostics as JSON: trace sequence, final `ρ` and feasibility residuals.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct Candidate {
    w: Matrix,
    b: Matrix,
    rho: f64,
    source: StartSource,
    design: Option<Design>,
}

fn random_draw(plant: &Plant, rng: &mut ChaCha8Rng) -> (Matrix, Matrix) {
    let agents = plant.agents();
    let n = plant.n();
    let mask = plant.graph().support_mask();
    let mut w = Matrix::zeros(agents, agents);
    for (i, row) in mask.iter().enumerate() {
        let vals: Vec<f64> = row.iter().map(|&s| if s { rng.random::<f64>() } else { 0.0 }).collect();
        let total: f64 = vals.iter().sum();
        for (j, v) in vals.into_iter().enumerate() {
            w[(i, j)] = v / total;
        }
    }
    let blocks: Vec<Matrix> = plant
        .dh_blocks()
        .iter()
        .map(|d| {
            let top = spectral_norm(d);
            if top <= 1e-12 {
                return Matrix::zeros(n, n);
            }
            let scale = 1.0 / (top * (n as f64).sqrt());
            let data = (0..n * n).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect();
            Matrix::new(n, n, data).expect("square block")
        })
        .collect();
    (w, Matrix::block_diag(&blocks))
}

fn candidates(plant: &Plant, opts: &CclOptions) -> Result<Vec<Candidate>> {
    let mut out = Vec::new();
    let mut push = |w: Matrix, b: Matrix, source, design: Option<Design>| -> Result<()> {
        let rho = spectral_radius(&assemble_ahat(plant, &w, &b)?)?;
        out.push(Candidate { w, b, rho, source, design });
        Ok(())
    };
    let scalar = optimal_design(plant)?.with_provenance(Provenance::LmiCcl);
    push(scalar.w().clone(), scalar.b().clone(), StartSource::ScalarOptimum, Some(scalar))?;
    let ntc = compute_ntc(plant, &NtcOptions::default())?;
    push(ntc.w_star.clone(), ntc.b_star.clone(), StartSource::NormDesign, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.random_draws {
        let (w, b) = random_draw(plant, &mut rng);
        push(w, b, StartSource::RandomDraw, None)?;
    }
    Ok(out)
}

fn success_design(plant: &Plant, w: &Matrix, b: &Matrix) -> Result<Design> {
    Design::full(plant, w.clone(), b.clone(), Provenance::LmiCcl)
}

/// Runs CCL on `plant`.
///
/// Returns `Success` with a design whose `ρ(Â) < 1` (independently
/// recomputed), or `Infeasible` with the best iterate when the iteration
/// stalls or runs out of budget.
pub fn ccl_design(plant: &Plant, opts: &CclOptions) -> Result<CclReport> {
    let mut cands = candidates(plant, opts)?;
    let first_stable = cands.iter().position(|c| c.rho < 1.0 - STABLE_MARGIN);
    if let Some(k) = first_stable {
        let c = cands.swap_remove(k);
        let ahat = assemble_ahat(plant, &c.w, &c.b)?;
        let x = dlyap(&ahat.transpose(), &Matrix::identity(plant.dim()), 1e-15)?.symmetrize();
        let y = x.inverse()?.symmetrize();
        let s0 = trace_objective(&x, &y, &x, &y);
        let design = match c.design {
            Some(d) => d,
            None => success_design(plant, &c.w, &c.b)?,
        };
        let state = CclState { x, y, w: c.w, b: c.b, trace_sequence: vec![s0], iteration: 0 };
        return finish(plant, state, CclStatus::Success, StopReason::Stable, c.source, Some(design));
    }

    let best = cands
        .into_iter()
        .min_by(|a, b| a.rho.total_cmp(&b.rho))
        .expect("at least one candidate");
    let start = feasible_start(plant, best.w, best.b, opts)?;
    ccl_iterate(plant, start, best.source, opts)
}

/// `(W, B)` with `W` projected onto the supported simplex, and `X = Y = sI`
/// with `s` large enough for both LMIs.
pub fn feasible_start(plant: &Plant, w: Matrix, b: Matrix, opts: &CclOptions) -> Result<CclState> {
    let w = project_row_stochastic(&w, &plant.graph().support_mask())?;
    let ahat = assemble_ahat(plant, &w, &b)?;
    let s = 1.1 * spectral_norm(&ahat).max(1.0) + 10.0 * opts.lmi_tol;
    let x = Matrix::identity(plant.dim()).scale(s);
    let y = x.clone();
    if !lmi_feasible(plant, &x, &y, &w, &b, opts.lmi_tol) {
        return Err(Error::NoFeasibleStart);
    }
    let s0 = trace_objective(&x, &y, &x, &y);
    Ok(CclState { x, y, w, b, trace_sequence: vec![s0], iteration: 0 })
}

fn finish(
    plant: &Plant,
    state: CclState,
    status: CclStatus,
    stop: StopReason,
    start: StartSource,
    design: Option<Design>,
) -> Result<CclReport> {
    let ahat = state.ahat(plant)?;
    let rho = spectral_radius(&ahat)?;
    let (lmi_margin, coupling_margin) = lmi_margins(&state.x, &state.y, &ahat)?;
    let trace_gap = state.trace_sequence.last().copied().unwrap_or(f64::NAN) - 2.0 * plant.dim() as f64;
    Ok(CclReport { status, stop, start, rho, lmi_margin, coupling_margin, trace_gap, design, state })
}

/// Outer CCL loop from a feasible `start`.
pub fn ccl_iterate(plant: &Plant, start: CclState, source: StartSource, opts: &CclOptions) -> Result<CclReport> {
    if !lmi_feasible(plant, &start.x, &start.y, &start.w, &start.b, opts.lmi_tol) {
        return Err(Error::NoFeasibleStart);
    }
    let target = 2.0 * plant.dim() as f64;
    let inner = Inner::new(plant, opts);
    let mut cur = start;
    let mut prev = (cur.x.clone(), cur.y.clone(), cur.w.clone(), cur.b.clone());
    let mut stop = StopReason::MaxIterations;
    let mut rel_step = opts.step;

    for t in cur.iteration..opts.max_outer {
        if spectral_radius(&cur.ahat(plant)?)? < 1.0 - STABLE_MARGIN {
            stop = StopReason::Stable;
            break;
        }
        let s_t = *cur.trace_sequence.last().expect("nonempty trace sequence");
        if opts.trace_target.is_some_and(|eps| s_t <= target + eps) {
            stop = StopReason::TraceTarget;
            break;
        }
        let len = cur.trace_sequence.len();
        if len > opts.stall_window && cur.trace_sequence[len - 1 - opts.stall_window] - s_t < opts.stall_tol {
            stop = StopReason::Stalled;
            break;
        }

        // The previous iterate is feasible for this subproblem with value
        // exactly s_t, so falling back to it keeps the sequence monotone.
        let mut next = (prev.0.clone(), prev.1.clone(), prev.2.clone(), prev.3.clone());
        let mut s_next = trace_objective(&next.0, &next.1, &cur.x, &cur.y);
        let eta = rel_step * cur.x.frobenius_norm() / cur.y.frobenius_norm().max(f64::MIN_POSITIVE);
        for h in 0..LINE_SEARCH_HALVINGS {
            let scale = eta * 0.5f64.powi(h as i32);
            let mut x = cur.x.clone();
            x.add_scaled(&cur.y, -scale);
            let mut y = cur.y.clone();
            y.add_scaled(&cur.x, -scale);
            if let Some((x, y, w, b)) = inner.project(x, y, cur.w.clone(), cur.b.clone())? {
                let s = trace_objective(&x, &y, &cur.x, &cur.y);
                if s < s_next {
                    next = (x, y, w, b);
                    s_next = s;
                    // Grow the step again after a success.
                    rel_step = (rel_step * 0.5f64.powi(h as i32 - 1)).min(MAX_REL_STEP);
                    break;
                }
            }
        }
        prev = (cur.x, cur.y, cur.w, cur.b);
        cur = CclState {
            x: next.0,
            y: next.1,
            w: next.2,
            b: next.3,
            trace_sequence: {
                let mut seq = cur.trace_sequence;
                seq.push(s_next.min(s_t));
                seq
            },
            iteration: t + 1,
        };
    }
    if stop == StopReason::MaxIterations && spectral_radius(&cur.ahat(plant)?)? < 1.0 - STABLE_MARGIN {
        stop = StopReason::Stable;
    }
    if stop == StopReason::Stable {
        let design = success_design(plant, &cur.w, &cur.b)?;
        return finish(plant, cur, CclStatus::Success, stop, source, Some(design));
    }
    finish(plant, cur, CclStatus::Infeasible, stop, source, None)
}

/// Alternating projections for the linearized subproblem.
struct Inner<'a> {
    plant: &'a Plant,
    tol: f64,
    max_inner: usize,
    mask: Vec<Vec<bool>>,
    dh_blocks: Vec<Matrix>,
}

impl<'a> Inner<'a> {
    fn new(plant: &'a Plant, opts: &CclOptions) -> Self {
        Self {
            plant,
            tol: opts.lmi_tol,
            max_inner: opts.max_inner,
            mask: plant.graph().support_mask(),
            dh_blocks: plant.dh_blocks(),
        }
    }

    /// Pulls `(X, Y, W, B)` back into the feasible set; `None` if the budget
    /// runs out first.
    fn project(&self, mut x: Matrix, mut y: Matrix, mut w: Matrix, mut b: Matrix) -> Result<Option<(Matrix, Matrix, Matrix, Matrix)>> {
        let m = self.plant.dim();
        // Projecting onto slightly shrunken cones gives the intersection an
        // interior, so the alternation terminates in finitely many rounds.
        let floor = (INNER_MARGIN * x.trace().min(y.trace()) / m as f64).max(10.0 * self.tol);
        let mut ahat = assemble_ahat(self.plant, &w, &b)?;
        for _ in 0..self.max_inner {
            if lmi_feasible(self.plant, &x, &y, &w, &b, self.tol) {
                return Ok(Some((x, y, w, b)));
            }
            let main = clip(&block2(&x, &ahat, &y), floor)?;
            x = main.block(0, 0, m, m);
            y = main.block(m, m, m, m);
            let target = main.block(m, 0, m, m);
            (w, b) = self.fit_structure(&target, &w)?;
            ahat = assemble_ahat(self.plant, &w, &b)?;
            let coupling = clip(&block2(&x, &Matrix::identity(m), &y), floor)?;
            x = coupling.block(0, 0, m, m);
            y = coupling.block(m, m, m, m);
        }
        if lmi_feasible(self.plant, &x, &y, &w, &b, self.tol) {
            return Ok(Some((x, y, w, b)));
        }
        Ok(None)
    }

    /// Least-squares `(W, B)` whose `Â` is closest to `target` block by
    /// block, followed by projection of `W` onto the supported simplex.
    fn fit_structure(&self, target: &Matrix, w_prev: &Matrix) -> Result<(Matrix, Matrix)> {
        let n = self.plant.n();
        let agents = self.plant.agents();
        let a = self.plant.a();
        let a_sq = frobenius_inner(a, a);
        let mut w = w_prev.clone();
        let mut blocks = Vec::with_capacity(agents);
        for i in 0..agents {
            for j in 0..agents {
                if j != i && self.mask[i][j] {
                    w[(i, j)] = if a_sq > 0.0 { frobenius_inner(a, &target.block(i * n, j * n, n, n)) / a_sq } else { 0.0 };
                }
            }
            let (wii, bi) = self.fit_diagonal(&target.block(i * n, i * n, n, n), &self.dh_blocks[i], w_prev[(i, i)])?;
            w[(i, i)] = wii;
            blocks.push(bi);
        }
        let w = project_row_stochastic(&w, &self.mask)?;
        Ok((w, Matrix::block_diag(&blocks)))
    }

    /// `min ‖w·A − A·B_i·D_i − T‖_F` over the scalar `w` and the `n×n` gain `B_i`.
    fn fit_diagonal(&self, t: &Matrix, d: &Matrix, w_prev: f64) -> Result<(f64, Matrix)> {
        let n = self.plant.n();
        let a = self.plant.a();
        let k = n * n + 1;
        // Columns of the linear map: vec(A) for w, then A e_p e_qᵀ D_i.
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
        cols.push(a.data().to_vec());
        for p in 0..n {
            for q in 0..n {
                let mut c = vec![0.0; n * n];
                for r in 0..n {
                    for s in 0..n {
                        c[r * n + s] = -a[(r, p)] * d[(q, s)];
                    }
                }
                cols.push(c);
            }
        }
        let mut gram = Matrix::zeros(k, k);
        let mut rhs = Matrix::zeros(k, 1);
        for u in 0..k {
            for v in u..k {
                let g: f64 = cols[u].iter().zip(&cols[v]).map(|(x, y)| x * y).sum();
                gram[(u, v)] = g;
                gram[(v, u)] = g;
            }
            rhs[(u, 0)] = cols[u].iter().zip(t.data()).map(|(x, y)| x * y).sum();
        }
        // A small ridge picks the minimum-norm solution when D_i or A is singular.
        let ridge = 1e-10 * (gram.trace() / k as f64).max(1e-300);
        for u in 0..k {
            gram[(u, u)] += ridge;
        }
        rhs[(0, 0)] += ridge * w_prev;
        let sol = gram.inverse()?.matmul(&rhs);
        let mut bi = Matrix::zeros(n, n);
        for p in 0..n {
            for q in 0..n {
                bi[(p, q)] = sol[(1 + p * n + q, 0)];
            }
        }
        Ok((sol[(0, 0)], bi))
    }
}

/// Projection of a symmetric matrix onto `{M : M ⪰ floor·I}`.
fn clip(m: &Matrix, floor: f64) -> Result<Matrix> {
    let spec = sym_eigen(&m.symmetrize())?;
    let v = spec.vectors.as_ref().expect("eigenvectors requested");
    let k = m.rows();
    let mut out = Matrix::zeros(k, k);
    for (idx, &lam) in spec.values.iter().enumerate() {
        let lam = lam.max(floor);
        for r in 0..k {
            let vr = v[(r, idx)] * lam;
            for c in 0..k {
                out[(r, c)] += vr * v[(c, idx)];
            }
        }
    }
    Ok(out.symmetrize())
}
