//! Network tracking capacity by direct minimization of
//! `‖W⊗I_n − B·D_H‖₂` over nonnegative, row-stochastic, graph-sparse `W`
//! and block-diagonal `B`.
//!
//! When every `D_H` block is diagonal, flipping the sign of a state
//! coordinate leaves the objective unchanged, so by convexity the blocks
//! `B_i` may be taken diagonal. The matrix then splits into `n` N×N slices
//! `W − diag(β_k ⊙ d_k)` sharing `W`, and slices with identical `d_k` may
//! share `β_k`. The solver works on that reduced form when it applies.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{contraction_matrix, error_dynamics, exact_steady_covariance, Design, Provenance};
use crate::linalg::{project_row_stochastic, spectral_norm, sym_eigen, top_singular_pair, Matrix};
use crate::model::Plant;
use crate::scalar_design::scalar_report;

/// Achieved norms at or below this are reported as infinite capacity.
pub const EPS_INFINITE: f64 = 1e-9;

#[derive(Clone, Copy, Debug)]
pub struct NtcOptions {
    /// Cap on gradient iterations summed over all smoothing stages.
    pub max_iter: usize,
    /// A stage ends once its smoothed value improves by less than `tol·μ`
    /// over `window` iterations.
    pub window: usize,
    pub tol: f64,
    /// Smoothing parameters run from `mu_start` down to `mu_min`, each stage
    /// dividing by `mu_factor`.
    pub mu_start: f64,
    pub mu_min: f64,
    pub mu_factor: f64,
    /// Power iterations per norm estimate in [`performance_design`].
    pub power_iter: usize,
}

impl Default for NtcOptions {
    fn default() -> Self {
        Self { max_iter: 5000, window: 50, tol: 1e-2, mu_start: 0.05, mu_min: 1e-7, mu_factor: 5.0, power_iter: 300 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapacityMethod {
    /// Every neighbourhood is one-step observable; exact optimum.
    Analytic,
    /// Accelerated projected gradient on a smoothed norm.
    Smoothed,
}

#[derive(Clone, Debug, Serialize)]
pub struct CapacityReport {
    /// `1/achieved_norm`; `null` in JSON when infinite.
    pub capacity: f64,
    pub infinite: bool,
    pub achieved_norm: f64,
    pub w_star: Matrix,
    pub b_star: Matrix,
    pub iterations: usize,
    pub converged: bool,
    pub method: CapacityMethod,
    /// Best value after each iteration.
    #[serde(skip)]
    pub history: Vec<f64>,
}

impl CapacityReport {
    fn new(norm: f64, w: Matrix, b: Matrix, iterations: usize, converged: bool, method: CapacityMethod, history: Vec<f64>) -> Self {
        let infinite = norm <= EPS_INFINITE;
        Self {
            capacity: if infinite { f64::INFINITY } else { 1.0 / norm },
            infinite,
            achieved_norm: norm,
            w_star: w,
            b_star: b,
            iterations,
            converged,
            method,
            history,
        }
    }

    pub fn design(&self, plant: &Plant) -> Result<Design> {
        Design::full(plant, self.w_star.clone(), self.b_star.clone(), Provenance::NtcSolver)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Gains in the solver's parameterization.
#[derive(Clone, Debug)]
enum Gains {
    /// `beta[g][i]`: gain of agent `i` on every coordinate in group `g`.
    Diagonal(Vec<Vec<f64>>),
    /// Full `n×n` blocks.
    Dense(Vec<Matrix>),
}

#[derive(Clone, Debug)]
struct Point {
    w: Matrix,
    gains: Gains,
}

/// Smoothed norm `μ·log Σ exp(λ/μ)` over the eigenvalues `±σ` of the
/// symmetric dilations `[[0, M], [Mᵀ, 0]]` of every slice, its gradient
/// pulled back to `(W, B)`, and the largest singular value.
struct Smooth {
    value: f64,
    exact: f64,
    gw: Matrix,
    gains: Gains,
}

struct Eval {
    sigma: f64,
    gw: Matrix,
    gains: Gains,
}

enum Structure {
    Diagonal {
        /// `d[g][i]`: diagonal of `D_i` on group `g`'s coordinates.
        d: Vec<Vec<f64>>,
        group_of: Vec<usize>,
    },
    Dense {
        dh: Matrix,
        blocks: Vec<Matrix>,
    },
}

struct Problem {
    n: usize,
    agents: usize,
    support: Vec<Vec<bool>>,
    structure: Structure,
    power_iter: usize,
}

impl Problem {
    fn new(plant: &Plant, power_iter: usize) -> Self {
        let n = plant.n();
        let agents = plant.agents();
        let blocks = plant.dh_blocks();
        let diagonal = blocks
            .iter()
            .all(|b| (0..n).all(|r| (0..n).all(|c| r == c || b[(r, c)] == 0.0)));
        let structure = if diagonal {
            let mut d: Vec<Vec<f64>> = Vec::new();
            let mut group_of = Vec::with_capacity(n);
            for k in 0..n {
                let col: Vec<f64> = blocks.iter().map(|b| b[(k, k)]).collect();
                let g = match d.iter().position(|c| *c == col) {
                    Some(g) => g,
                    None => {
                        d.push(col);
                        d.len() - 1
                    }
                };
                group_of.push(g);
            }
            Structure::Diagonal { d, group_of }
        } else {
            Structure::Dense { dh: plant.build_dh(), blocks }
        };
        Self { n, agents, support: plant.graph().support_mask(), structure, power_iter }
    }

    fn zero_gains(&self) -> Gains {
        match &self.structure {
            Structure::Diagonal { d, .. } => Gains::Diagonal(vec![vec![0.0; self.agents]; d.len()]),
            Structure::Dense { .. } => Gains::Dense(vec![Matrix::zeros(self.n, self.n); self.agents]),
        }
    }

    fn from_blocks(&self, blocks: &[Matrix]) -> Gains {
        match &self.structure {
            Structure::Diagonal { d, group_of } => {
                let mut beta = vec![vec![0.0; self.agents]; d.len()];
                let mut count = vec![0usize; d.len()];
                for (k, &g) in group_of.iter().enumerate() {
                    count[g] += 1;
                    for (i, b) in blocks.iter().enumerate() {
                        beta[g][i] += b[(k, k)];
                    }
                }
                for (row, c) in beta.iter_mut().zip(count) {
                    row.iter_mut().for_each(|x| *x /= c as f64);
                }
                Gains::Diagonal(beta)
            }
            Structure::Dense { .. } => Gains::Dense(blocks.to_vec()),
        }
    }

    fn b_blocks(&self, gains: &Gains) -> Vec<Matrix> {
        match (gains, &self.structure) {
            (Gains::Diagonal(beta), Structure::Diagonal { group_of, .. }) => (0..self.agents)
                .map(|i| Matrix::from_diag(&group_of.iter().map(|&g| beta[g][i]).collect::<Vec<_>>()))
                .collect(),
            (Gains::Dense(blocks), _) => blocks.clone(),
            _ => unreachable!("gains match the structure"),
        }
    }

    fn b_matrix(&self, gains: &Gains) -> Matrix {
        Matrix::block_diag(&self.b_blocks(gains))
    }

    /// The N×N slice `W − diag(β ⊙ d)` for group `g`.
    fn slice(&self, w: &Matrix, beta: &[f64], d: &[f64]) -> Matrix {
        let mut m = w.clone();
        for i in 0..self.agents {
            m[(i, i)] -= beta[i] * d[i];
        }
        m
    }

    fn dense_m(&self, w: &Matrix, blocks: &[Matrix], dh: &Matrix) -> Matrix {
        crate::estimator::contraction_from(self.n, w, &Matrix::block_diag(blocks), dh)
    }

    /// Exact `‖W⊗I − B·D_H‖₂`.
    fn exact_norm(&self, p: &Point) -> f64 {
        match (&p.gains, &self.structure) {
            (Gains::Diagonal(beta), Structure::Diagonal { d, .. }) => beta
                .iter()
                .zip(d)
                .map(|(b, dg)| spectral_norm(&self.slice(&p.w, b, dg)))
                .fold(0.0, f64::max),
            (Gains::Dense(blocks), Structure::Dense { dh, .. }) => spectral_norm(&self.dense_m(&p.w, blocks, dh)),
            _ => unreachable!("gains match the structure"),
        }
    }

    /// Power-iteration estimate of the norm with a subgradient `u vᵀ`
    /// pulled back to `(W, B)`.
    fn eval(&self, p: &Point, warm: &mut Vec<Vec<f64>>) -> Eval {
        let mut gw = Matrix::zeros(self.agents, self.agents);
        match (&p.gains, &self.structure) {
            (Gains::Diagonal(beta), Structure::Diagonal { d, .. }) => {
                if warm.len() != d.len() {
                    *warm = vec![Vec::new(); d.len()];
                }
                let mut best = (f64::NEG_INFINITY, 0, Vec::new(), Vec::new());
                for (g, (b, dg)) in beta.iter().zip(d).enumerate() {
                    let m = self.slice(&p.w, b, dg);
                    let start = (!warm[g].is_empty()).then_some(warm[g].as_slice());
                    let (s, u, v) = top_singular_pair(&m, start, self.power_iter);
                    warm[g] = v.clone();
                    if s > best.0 {
                        best = (s, g, u, v);
                    }
                }
                let (sigma, g, u, v) = best;
                let mut gb = vec![vec![0.0; self.agents]; d.len()];
                for i in 0..self.agents {
                    for j in 0..self.agents {
                        gw[(i, j)] = u[i] * v[j];
                    }
                    gb[g][i] = -u[i] * v[i] * d[g][i];
                }
                Eval { sigma, gw, gains: Gains::Diagonal(gb) }
            }
            (Gains::Dense(blocks), Structure::Dense { dh, blocks: dblocks }) => {
                if warm.len() != 1 {
                    *warm = vec![Vec::new()];
                }
                let m = self.dense_m(&p.w, blocks, dh);
                let start = (!warm[0].is_empty()).then_some(warm[0].as_slice());
                let (sigma, u, v) = top_singular_pair(&m, start, self.power_iter);
                warm[0] = v.clone();
                let n = self.n;
                for i in 0..self.agents {
                    for j in 0..self.agents {
                        gw[(i, j)] = (0..n).map(|k| u[i * n + k] * v[j * n + k]).sum();
                    }
                }
                let gb = (0..self.agents)
                    .map(|i| {
                        let ui = &u[i * n..(i + 1) * n];
                        let dv = dblocks[i].mul_vec(&v[i * n..(i + 1) * n]);
                        let mut g = Matrix::zeros(n, n);
                        for r in 0..n {
                            for c in 0..n {
                                g[(r, c)] = -ui[r] * dv[c];
                            }
                        }
                        g
                    })
                    .collect();
                Eval { sigma, gw, gains: Gains::Dense(gb) }
            }
            _ => unreachable!("gains match the structure"),
        }
    }

    fn smooth(&self, p: &Point, mu: f64) -> Result<Smooth> {
        let slices: Vec<Matrix> = match (&p.gains, &self.structure) {
            (Gains::Diagonal(beta), Structure::Diagonal { d, .. }) => {
                beta.iter().zip(d).map(|(b, dg)| self.slice(&p.w, b, dg)).collect()
            }
            (Gains::Dense(blocks), Structure::Dense { dh, .. }) => vec![self.dense_m(&p.w, blocks, dh)],
            _ => unreachable!("gains match the structure"),
        };
        let svds = slices.iter().map(svd).collect::<Result<Vec<_>>>()?;
        let top = svds.iter().flat_map(|s| s.sigma.first().copied()).fold(0.0, f64::max);
        // Each σ enters the dilation spectrum as both +σ and −σ.
        let weight = |sg: f64| (((sg - top) / mu).exp(), ((-sg - top) / mu).exp());
        let z: f64 = svds
            .iter()
            .map(|s| {
                let zero_modes = (s.cols - s.sigma.len()) as f64 * (-top / mu).exp();
                s.sigma.iter().map(|&sg| weight(sg).0 + weight(sg).1).sum::<f64>() + zero_modes
            })
            .sum();
        let value = top + mu * z.ln();

        // Gradient with respect to each slice: Σ (w₊ − w₋)/Z · u vᵀ.
        let grads: Vec<Matrix> = slices
            .iter()
            .zip(&svds)
            .map(|(m, s)| {
                let (r, c) = m.shape();
                let mut g = Matrix::zeros(r, c);
                for (k, &sg) in s.sigma.iter().enumerate() {
                    let (wp, wm) = weight(sg);
                    let coef = (wp - wm) / z;
                    if coef.abs() < 1e-18 {
                        continue;
                    }
                    for a in 0..r {
                        let ua = coef * s.u[k][a];
                        for b in 0..c {
                            g[(a, b)] += ua * s.v[k][b];
                        }
                    }
                }
                g
            })
            .collect();

        let mut gw = Matrix::zeros(self.agents, self.agents);
        let gains = match (&self.structure, &p.gains) {
            (Structure::Diagonal { d, .. }, Gains::Diagonal(_)) => {
                let mut gb = vec![vec![0.0; self.agents]; d.len()];
                for (g, grad) in grads.iter().enumerate() {
                    gw.add_scaled(grad, 1.0);
                    for i in 0..self.agents {
                        gb[g][i] = -grad[(i, i)] * d[g][i];
                    }
                }
                Gains::Diagonal(gb)
            }
            (Structure::Dense { blocks: dblocks, .. }, Gains::Dense(_)) => {
                let n = self.n;
                let grad = &grads[0];
                for i in 0..self.agents {
                    for j in 0..self.agents {
                        gw[(i, j)] = (0..n).map(|k| grad[(i * n + k, j * n + k)]).sum();
                    }
                }
                Gains::Dense(
                    (0..self.agents)
                        .map(|i| grad.block(i * n, i * n, n, n).matmul(&dblocks[i].transpose()).scale(-1.0))
                        .collect(),
                )
            }
            _ => unreachable!("gains match the structure"),
        };
        self.mask(&mut gw);
        Ok(Smooth { value, exact: top, gw, gains })
    }

    fn mask(&self, gw: &mut Matrix) {
        for i in 0..self.agents {
            for j in 0..self.agents {
                if !self.support[i][j] {
                    gw[(i, j)] = 0.0;
                }
            }
        }
    }

    /// `‖B‖₂` and a subgradient.
    fn gain_norm(&self, gains: &Gains) -> (f64, Gains) {
        match gains {
            Gains::Diagonal(beta) => {
                let mut best = (0.0, 0, 0);
                for (g, row) in beta.iter().enumerate() {
                    for (i, b) in row.iter().enumerate() {
                        if b.abs() > best.0 {
                            best = (b.abs(), g, i);
                        }
                    }
                }
                let mut sub = vec![vec![0.0; self.agents]; beta.len()];
                if best.0 > 0.0 {
                    sub[best.1][best.2] = beta[best.1][best.2].signum();
                }
                (best.0, Gains::Diagonal(sub))
            }
            Gains::Dense(blocks) => {
                let mut best = (0.0, 0, Vec::new(), Vec::new());
                for (i, b) in blocks.iter().enumerate() {
                    let (s, u, v) = top_singular_pair(b, None, self.power_iter);
                    if s > best.0 {
                        best = (s, i, u, v);
                    }
                }
                let mut sub = vec![Matrix::zeros(self.n, self.n); self.agents];
                if best.0 > 0.0 {
                    for r in 0..self.n {
                        for c in 0..self.n {
                            sub[best.1][(r, c)] = best.2[r] * best.3[c];
                        }
                    }
                }
                (best.0, Gains::Dense(sub))
            }
        }
    }

    fn exact_gain_norm(&self, gains: &Gains) -> f64 {
        match gains {
            Gains::Diagonal(beta) => beta.iter().flatten().fold(0.0, |m, b| m.max(b.abs())),
            Gains::Dense(blocks) => blocks.iter().map(spectral_norm).fold(0.0, f64::max),
        }
    }

    /// Projected step `p ← Π(p − s·g)`, with `s` chosen so the step has length `len`.
    fn step(&self, p: &mut Point, gw: &Matrix, gg: &Gains, len: f64) -> Result<bool> {
        let norm_sq = gw.data().iter().map(|x| x * x).sum::<f64>() + gains_sq(gg);
        if norm_sq == 0.0 {
            return Ok(false);
        }
        let s = len / norm_sq.sqrt();
        let mut w = p.w.clone();
        w.add_scaled(gw, -s);
        p.w = project_row_stochastic(&w, &self.support)?;
        axpy_gains(&mut p.gains, gg, -s);
        Ok(true)
    }
}

/// Singular triplets with `σ` above a relative floor, in descending order.
struct Svd {
    sigma: Vec<f64>,
    u: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    cols: usize,
}

/// Thin SVD through the eigendecomposition of `MᵀM`. Singular values below
/// `1e-10·σ_max` are dropped; their left vectors are ill-determined and
/// they count only as zero modes in the smoothed norm.
fn svd(m: &Matrix) -> Result<Svd> {
    let gram = m.transpose().matmul(m).symmetrize();
    let spec = sym_eigen(&gram)?;
    let q = spec.vectors.as_ref().expect("eigenvectors requested");
    let cols = m.cols();
    let smax = spec.max().max(0.0).sqrt();
    let mut out = Svd { sigma: Vec::new(), u: Vec::new(), v: Vec::new(), cols };
    for k in (0..cols).rev() {
        let sg = spec.values[k].max(0.0).sqrt();
        if sg <= 1e-10 * smax || sg == 0.0 {
            break;
        }
        let v: Vec<f64> = (0..cols).map(|i| q[(i, k)]).collect();
        let u: Vec<f64> = m.mul_vec(&v).into_iter().map(|x| x / sg).collect();
        out.sigma.push(sg);
        out.u.push(u);
        out.v.push(v);
    }
    Ok(out)
}

fn frob(a: &Matrix, b: &Matrix) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn gains_dot(a: &Gains, b: &Gains) -> f64 {
    match (a, b) {
        (Gains::Diagonal(x), Gains::Diagonal(y)) => x.iter().flatten().zip(y.iter().flatten()).map(|(p, q)| p * q).sum(),
        (Gains::Dense(x), Gains::Dense(y)) => x.iter().zip(y).map(|(p, q)| frob(p, q)).sum(),
        _ => unreachable!("gains share a structure"),
    }
}

fn gains_sq(g: &Gains) -> f64 {
    match g {
        Gains::Diagonal(beta) => beta.iter().flatten().map(|x| x * x).sum(),
        Gains::Dense(blocks) => blocks.iter().flat_map(|b| b.data()).map(|x| x * x).sum(),
    }
}

fn axpy_gains(y: &mut Gains, x: &Gains, s: f64) {
    match (y, x) {
        (Gains::Diagonal(a), Gains::Diagonal(b)) => {
            for (ra, rb) in a.iter_mut().zip(b) {
                ra.iter_mut().zip(rb).for_each(|(p, q)| *p += s * q);
            }
        }
        (Gains::Dense(a), Gains::Dense(b)) => {
            for (ma, mb) in a.iter_mut().zip(b) {
                ma.add_scaled(mb, s);
            }
        }
        _ => unreachable!("gains share a structure"),
    }
}

fn add_gains(a: &Gains, b: &Gains) -> Gains {
    let mut out = a.clone();
    axpy_gains(&mut out, b, 1.0);
    out
}

/// Neighbourhood Gram inverses, when every neighbourhood is one-step observable.
fn analytic_optimum(plant: &Plant) -> Option<(Matrix, Vec<Matrix>)> {
    if !plant.neighborhood_one_step_observable() {
        return None;
    }
    let blocks = plant.dh_blocks().iter().map(Matrix::inverse).collect::<Result<Vec<_>>>().ok()?;
    Some((Matrix::identity(plant.agents()), blocks))
}

pub fn compute_ntc(plant: &Plant, opts: &NtcOptions) -> Result<CapacityReport> {
    if let Some((w, blocks)) = analytic_optimum(plant) {
        let b = Matrix::block_diag(&blocks);
        let norm = spectral_norm(&crate::estimator::contraction_from(plant.n(), &w, &b, &plant.build_dh()));
        return Ok(CapacityReport::new(norm, w, b, 0, true, CapacityMethod::Analytic, vec![norm]));
    }
    let prob = Problem::new(plant, opts.power_iter);

    let mut candidates = vec![Point { w: Matrix::identity(plant.agents()), gains: prob.zero_gains() }];
    let sr = scalar_report(plant, plant.instability())?;
    let scalar = Design::scalar(plant, sr.alpha_opt, Provenance::ScalarClosedForm)?;
    if scalar.w().data().iter().all(|&x| x >= 0.0) {
        let blocks = scalar.b_blocks(plant.n());
        candidates.push(Point { w: scalar.w().clone(), gains: prob.from_blocks(&blocks) });
    }
    let (best, best_val) = candidates
        .into_iter()
        .map(|p| {
            let v = prob.exact_norm(&p);
            (p, v)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one candidate");

    let (best, best_val, iterations, converged, history) = smoothed_descent(&prob, best, best_val, opts)?;
    let b = prob.b_matrix(&best.gains);
    Ok(CapacityReport::new(best_val, best.w, b, iterations, converged, CapacityMethod::Smoothed, history))
}

/// FISTA with backtracking and adaptive restart on the smoothed norm, with
/// the smoothing parameter decreased in stages. Returns the best point by
/// exact norm, the iteration count, whether the last stage met its stopping
/// rule, and the best-so-far history.
fn smoothed_descent(prob: &Problem, start: Point, start_val: f64, opts: &NtcOptions) -> Result<(Point, f64, usize, bool, Vec<f64>)> {
    let mut best = start.clone();
    let mut best_val = start_val;
    let mut history = Vec::new();
    let mut x = start;
    let mut mu = opts.mu_start * start_val.max(EPS_INFINITE);
    let mut lip = 1.0 / mu;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter && best_val > EPS_INFINITE {
        let mut y = x.clone();
        let mut t: f64 = 1.0;
        let mut fx = prob.smooth(&x, mu)?.value;
        let mut stage_values = vec![fx];
        let mut stage_done = false;
        let mut restarted = false;
        while iterations < opts.max_iter {
            iterations += 1;
            let sy = prob.smooth(&y, mu)?;
            let (x_new, s_new) = loop {
                let mut cand = y.clone();
                let mut w = cand.w.clone();
                w.add_scaled(&sy.gw, -1.0 / lip);
                cand.w = project_row_stochastic(&w, &prob.support)?;
                axpy_gains(&mut cand.gains, &sy.gains, -1.0 / lip);
                let sc = prob.smooth(&cand, mu)?;
                let dw = &cand.w - &y.w;
                let mut dg = cand.gains.clone();
                axpy_gains(&mut dg, &y.gains, -1.0);
                let lin = frob(&sy.gw, &dw) + gains_dot(&sy.gains, &dg);
                let dist = frob(&dw, &dw) + gains_sq(&dg);
                if sc.value <= sy.value + lin + 0.5 * lip * dist + 1e-15 * sy.value.abs() || dist == 0.0 {
                    break (cand, sc);
                }
                lip *= 2.0;
            };
            if s_new.exact < best_val {
                let exact = prob.exact_norm(&x_new);
                if exact < best_val {
                    best_val = exact;
                    best = x_new.clone();
                }
            }
            history.push(best_val);
            if s_new.value > fx {
                // Adaptive restart. A rejected step right after a restart
                // means x is stationary up to rounding.
                t = 1.0;
                y = x.clone();
                if !restarted {
                    restarted = true;
                    continue;
                }
            } else {
                let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let beta = (t - 1.0) / t_new;
                y = x_new.clone();
                let dw = (&x_new.w - &x.w).scale(beta);
                y.w.add_scaled(&dw, 1.0);
                y.w = project_row_stochastic(&y.w, &prob.support)?;
                let mut dg = x_new.gains.clone();
                axpy_gains(&mut dg, &x.gains, -1.0);
                axpy_gains(&mut y.gains, &dg, beta);
                x = x_new;
                fx = s_new.value;
                t = t_new;
                lip *= 0.95;
                restarted = false;
            }
            stage_values.push(fx);
            let k = stage_values.len();
            if k > opts.window && stage_values[k - 1 - opts.window] - fx < opts.tol * mu {
                stage_done = true;
                break;
            }
            if best_val <= EPS_INFINITE {
                stage_done = true;
                break;
            }
        }
        if mu <= opts.mu_min {
            converged = stage_done;
            break;
        }
        mu = (mu / opts.mu_factor).max(opts.mu_min);
        // Restart each stage from the best point seen so far.
        if prob.exact_norm(&x) > best_val {
            x = best.clone();
        }
    }
    if best_val <= EPS_INFINITE {
        converged = true;
    }
    Ok((best, best_val, iterations, converged, history))
}

/// NTC design for the plant's own `a`, verified to give `‖P‖₂ < 1`.
pub fn design_for_system(plant: &Plant, opts: &NtcOptions) -> Result<Design> {
    let report = compute_ntc(plant, opts)?;
    let a = plant.instability();
    if !report.infinite && a >= report.capacity {
        return Err(Error::CapacityExceeded { a, capacity: report.capacity });
    }
    let design = report.design(plant)?;
    let p_norm = error_dynamics(plant, &design)?.norm();
    if p_norm >= 1.0 {
        return Err(Error::CapacityExceeded { a, capacity: report.capacity });
    }
    Ok(design)
}

#[derive(Clone, Copy, Debug)]
pub struct PerformanceOptions {
    /// The constraint is `‖W⊗I − B·D_H‖₂ ≤ 1/a − margin`.
    pub margin: f64,
    pub max_iter: usize,
    pub step: f64,
    pub window: usize,
    pub tol: f64,
    pub ntc: NtcOptions,
}

impl Default for PerformanceOptions {
    fn default() -> Self {
        Self { margin: 1e-6, max_iter: 3000, step: 0.5, window: 300, tol: 1e-7, ntc: NtcOptions::default() }
    }
}

#[derive(Clone, Debug)]
pub struct PerformanceDesign {
    pub design: Design,
    /// `‖B‖₂ + ‖W⊗I − B·D_H‖₂` at the returned design.
    pub objective: f64,
    pub warm_start_objective: f64,
    pub contraction_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `‖B‖₂ + ‖W⊗I_n − B·D_H‖₂` subject to the contraction staying
/// below `1/a − margin`, starting from the capacity design.
pub fn performance_design(plant: &Plant, opts: &PerformanceOptions) -> Result<PerformanceDesign> {
    let a = plant.instability();
    let report = compute_ntc(plant, &opts.ntc)?;
    let bound = if a > 0.0 { 1.0 / a - opts.margin } else { f64::INFINITY };
    if report.achieved_norm > bound {
        return Err(Error::CapacityExceeded { a, capacity: report.capacity });
    }
    let prob = Problem::new(plant, opts.ntc.power_iter);
    let start = Point { w: report.w_star.clone(), gains: prob.from_blocks(&report.design(plant)?.b_blocks(plant.n())) };
    let objective = |p: &Point| prob.exact_gain_norm(&p.gains) + prob.exact_norm(p);
    let start_norm = prob.exact_norm(&start);
    let (mut best, mut best_obj) = if start_norm <= bound {
        let o = objective(&start);
        (start.clone(), o)
    } else {
        return Err(Error::CapacityExceeded { a, capacity: report.capacity });
    };
    let warm_obj = best_obj;

    let mut cur = start;
    let mut warm = Vec::new();
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for t in 1..=opts.max_iter {
        iterations = t;
        let mut ev = prob.eval(&cur, &mut warm);
        prob.mask(&mut ev.gw);
        let len = opts.step / (t as f64).sqrt();
        let moved = if ev.sigma > bound {
            prob.step(&mut cur, &ev.gw, &ev.gains, len)?
        } else {
            let (bn, gb) = prob.gain_norm(&cur.gains);
            if bn + ev.sigma < best_obj {
                let exact_m = prob.exact_norm(&cur);
                let o = prob.exact_gain_norm(&cur.gains) + exact_m;
                if exact_m <= bound && o < best_obj {
                    best_obj = o;
                    best = cur.clone();
                }
            }
            prob.step(&mut cur, &ev.gw, &add_gains(&ev.gains, &gb), len)?
        };
        history.push(best_obj);
        if t > opts.window && history[t - 1 - opts.window] - best_obj < opts.tol {
            converged = true;
            break;
        }
        if !moved {
            converged = true;
            break;
        }
    }
    let contraction_norm = prob.exact_norm(&best);
    let design = Design::full(plant, best.w.clone(), prob.b_matrix(&best.gains), Provenance::NtcSolver)?;
    Ok(PerformanceDesign { design, objective: best_obj, warm_start_objective: warm_obj, contraction_norm, iterations, converged })
}

/// Per-agent bound `(‖V‖ + a²N‖B‖²‖R̄‖)/(1 − a²‖W⊗I − B·D_H‖²)` on `(1/N)‖S_∞‖₂`.
pub fn steady_state_bound(plant: &Plant, design: &Design) -> Result<f64> {
    let a = plant.instability();
    let rho = a * spectral_norm(&contraction_matrix(plant, design)?);
    if rho >= 1.0 {
        return Err(Error::Unstable { rho });
    }
    let n_agents = plant.agents() as f64;
    let b = spectral_norm(design.b());
    let num = spectral_norm(plant.v()) + a * a * n_agents * b * b * spectral_norm(&plant.rbar());
    Ok(num / (1.0 - rho * rho))
}

/// The three links of `‖S_∞‖ ≤ ‖Σ‖/(1−p²) ≤ N·bound`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundChain {
    pub exact: f64,
    pub lyapunov: f64,
    pub expanded: f64,
    pub residual: f64,
}

impl BoundChain {
    pub fn holds(&self, rel_tol: f64) -> bool {
        self.exact <= self.lyapunov * (1.0 + rel_tol) && self.lyapunov <= self.expanded * (1.0 + rel_tol)
    }
}

pub fn bound_chain(plant: &Plant, design: &Design) -> Result<BoundChain> {
    let expanded = plant.agents() as f64 * steady_state_bound(plant, design)?;
    let ed = error_dynamics(plant, design)?;
    let p = ed.norm();
    let s = exact_steady_covariance(&ed)?;
    Ok(BoundChain {
        exact: spectral_norm(&s),
        lyapunov: spectral_norm(&ed.sigma) / (1.0 - p * p),
        expanded,
        residual: crate::linalg::dlyap_residual(&ed.p, &ed.sigma, &s),
    })
}
