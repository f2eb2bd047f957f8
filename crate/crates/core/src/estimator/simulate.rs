use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::cli::format_number;
use crate::error::{Error, Result};
use crate::linalg::{norm2, spectral_norm, sym_eigen, Matrix};
use crate::model::Plant;

use super::design::Design;
use super::dynamics::{contraction_matrix, Stepper};

/// Estimates whose error norm exceeds this are treated as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;
/// Trials per parallel work unit; fixed so results do not depend on the pool size.
const CHUNK: usize = 8;

#[derive(Clone, Copy, Debug)]
pub struct SimulationOptions {
    pub steps: usize,
    pub trials: usize,
    pub seed: u64,
    /// Permit `‖P‖₂ ≥ 1`; divergence is then reported in the result.
    pub allow_unstable: bool,
    /// Fraction of the final steps used for steady-state statistics.
    pub window_fraction: f64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self { steps: 2000, trials: 100, seed: 42, allow_unstable: false, window_fraction: 0.2 }
    }
}

/// Empirical error statistics over Monte Carlo trials. Errors are `x̂ − x`
/// stacked over agents.
#[derive(Clone, Debug, Serialize)]
pub struct SimulationResult {
    pub trials: usize,
    pub steps: usize,
    pub seed: u64,
    pub noise: &'static str,
    /// First step of the steady-state window.
    pub window_start: usize,
    /// `‖mean_t e_k‖` for `k = 0..=steps`.
    #[serde(skip)]
    pub empirical_mean_error: Vec<f64>,
    /// `‖E[e eᵀ]‖₂` pooled over trials and the window.
    pub empirical_cov_norm: f64,
    /// Monte Carlo standard error of `empirical_cov_norm`.
    pub cov_norm_std_error: f64,
    #[serde(skip)]
    pub empirical_cov: Matrix,
    /// Window mean of `‖eⁱ‖²` per agent.
    pub per_agent_mse: Vec<f64>,
    /// Norm of the mean error at the final step.
    pub final_mean_norm: f64,
    /// `√trace` of the sample covariance of the final-step error.
    pub final_std: f64,
    /// First step at which some trial exceeded the divergence threshold.
    pub diverged_at: Option<usize>,
}

impl SimulationResult {
    /// `‖mean‖ ≤ 4·std/√trials` at the final step.
    pub fn is_unbiased(&self) -> bool {
        self.diverged_at.is_none() && self.final_mean_norm <= 4.0 * self.final_std / (self.trials as f64).sqrt()
    }

    /// Per-step mean error norm as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,mean_error_norm\n");
        for (k, v) in self.empirical_mean_error.iter().enumerate() {
            out.push_str(&format!("{k},{}\n", format_number(*v)));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("simulation result serializes")
    }
}

/// Symmetric square root with negative eigenvalues floored at zero.
fn noise_factor(cov: &Matrix) -> Result<Matrix> {
    let s = sym_eigen(cov)?;
    let q = s.vectors.expect("vectors requested");
    let n = cov.rows();
    let mut scaled = q.clone();
    for j in 0..n {
        let r = s.values[j].max(0.0).sqrt();
        for i in 0..n {
            scaled[(i, j)] *= r;
        }
    }
    Ok(scaled.matmul(&q.transpose()))
}

fn sample(factor: &Matrix, rng: &mut ChaCha8Rng, buf: &mut [f64]) -> Vec<f64> {
    for z in buf.iter_mut() {
        *z = StandardNormal.sample(rng);
    }
    factor.mul_vec(buf)
}

struct TrialStats {
    /// Sum over trials of `e_k`, per step, flattened `(steps+1) × nN`.
    mean_sum: Vec<f64>,
    /// Per-trial window second moments.
    window_moments: Vec<Matrix>,
    /// Sum over trials of `e_K e_Kᵀ` at the final step.
    final_outer: Matrix,
    final_sum: Vec<f64>,
    agent_sq: Vec<f64>,
    diverged_at: Option<usize>,
}

pub fn simulate(plant: &Plant, design: &Design, opts: &SimulationOptions) -> Result<SimulationResult> {
    if opts.trials == 0 || opts.steps == 0 {
        return Err(Error::BadParams("steps and trials must be positive".into()));
    }
    if !(opts.window_fraction > 0.0 && opts.window_fraction <= 1.0) {
        return Err(Error::BadParams("window fraction must lie in (0, 1]".into()));
    }
    let m = contraction_matrix(plant, design)?;
    let growth = plant.instability() * spectral_norm(&m);
    if growth >= 1.0 && !opts.allow_unstable {
        return Err(Error::Unstable { rho: growth });
    }
    let window = ((opts.steps as f64 * opts.window_fraction).ceil() as usize).clamp(1, opts.steps);
    let window_start = opts.steps + 1 - window;

    let v_factor = noise_factor(plant.v())?;
    let r_factors = plant.r().iter().map(noise_factor).collect::<Result<Vec<_>>>()?;
    let stepper = Stepper::new(plant, design);

    let chunks: Vec<TrialStats> = (0..opts.trials.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let trials = (c * CHUNK)..((c + 1) * CHUNK).min(opts.trials);
            run_chunk(plant, &stepper, &v_factor, &r_factors, opts, window_start, trials)
        })
        .collect();

    let dim = plant.dim();
    let agents = plant.agents();
    let mut mean_sum = vec![0.0; (opts.steps + 1) * dim];
    let mut moments = Vec::with_capacity(opts.trials);
    let mut final_outer = Matrix::zeros(dim, dim);
    let mut final_sum = vec![0.0; dim];
    let mut agent_sq = vec![0.0; agents];
    let mut diverged_at: Option<usize> = None;
    for c in chunks {
        mean_sum.iter_mut().zip(&c.mean_sum).for_each(|(a, b)| *a += b);
        moments.extend(c.window_moments);
        final_outer.add_scaled(&c.final_outer, 1.0);
        final_sum.iter_mut().zip(&c.final_sum).for_each(|(a, b)| *a += b);
        agent_sq.iter_mut().zip(&c.agent_sq).for_each(|(a, b)| *a += b);
        if let Some(k) = c.diverged_at {
            diverged_at = Some(diverged_at.map_or(k, |d: usize| d.min(k)));
        }
    }

    let t = opts.trials as f64;
    let last_step = diverged_at.map_or(opts.steps, |k| k.saturating_sub(1));
    let empirical_mean_error: Vec<f64> = (0..=last_step)
        .map(|k| norm2(&mean_sum[k * dim..(k + 1) * dim]) / t)
        .collect();

    if let Some(step) = diverged_at {
        if !opts.allow_unstable {
            return Err(Error::Diverged { step });
        }
        return Ok(SimulationResult {
            trials: opts.trials,
            steps: opts.steps,
            seed: opts.seed,
            noise: "gaussian",
            window_start,
            empirical_mean_error,
            empirical_cov_norm: f64::INFINITY,
            cov_norm_std_error: f64::INFINITY,
            empirical_cov: Matrix::zeros(dim, dim),
            per_agent_mse: vec![f64::INFINITY; agents],
            final_mean_norm: f64::INFINITY,
            final_std: f64::INFINITY,
            diverged_at,
        });
    }

    let mut cov = Matrix::zeros(dim, dim);
    for mt in &moments {
        cov.add_scaled(mt, 1.0 / t);
    }
    let cov = cov.symmetrize();
    let spec = sym_eigen(&cov)?;
    let cov_norm = spec.max().max(0.0);
    let u = spec.vector(dim - 1).expect("vectors requested");
    let stats: Vec<f64> = moments
        .iter()
        .map(|mt| crate::linalg::dot(&u, &mt.mul_vec(&u)))
        .collect();
    let std_error = if opts.trials > 1 {
        let mean = stats.iter().sum::<f64>() / t;
        let var = stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (t - 1.0);
        (var / t).sqrt()
    } else {
        f64::INFINITY
    };

    let final_mean: Vec<f64> = final_sum.iter().map(|s| s / t).collect();
    let final_std = if opts.trials > 1 {
        let tr: f64 = (0..dim).map(|i| final_outer[(i, i)] - t * final_mean[i] * final_mean[i]).sum();
        (tr.max(0.0) / (t - 1.0)).sqrt()
    } else {
        0.0
    };
    let denom = t * window as f64;
    Ok(SimulationResult {
        trials: opts.trials,
        steps: opts.steps,
        seed: opts.seed,
        noise: "gaussian",
        window_start,
        empirical_mean_error,
        empirical_cov_norm: cov_norm,
        cov_norm_std_error: std_error,
        empirical_cov: cov,
        per_agent_mse: agent_sq.iter().map(|s| s / denom).collect(),
        final_mean_norm: norm2(&final_mean),
        final_std,
        diverged_at: None,
    })
}

fn run_chunk(
    plant: &Plant,
    stepper: &Stepper<'_>,
    v_factor: &Matrix,
    r_factors: &[Matrix],
    opts: &SimulationOptions,
    window_start: usize,
    trials: std::ops::Range<usize>,
) -> TrialStats {
    let n = plant.n();
    let agents = plant.agents();
    let dim = plant.dim();
    let window = (opts.steps + 1 - window_start) as f64;
    let mut stats = TrialStats {
        mean_sum: vec![0.0; (opts.steps + 1) * dim],
        window_moments: Vec::with_capacity(trials.len()),
        final_outer: Matrix::zeros(dim, dim),
        final_sum: vec![0.0; dim],
        agent_sq: vec![0.0; agents],
        diverged_at: None,
    };
    let mut zbuf_v = vec![0.0; n];
    let mut zbufs: Vec<Vec<f64>> = plant.h().iter().map(|h| vec![0.0; h.rows()]).collect();
    let mut e = vec![0.0; dim];

    for trial in trials {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(trial as u64);
        let mut x = vec![0.0; n];
        let mut xhat = vec![vec![0.0; n]; agents];
        let mut next = vec![vec![0.0; n]; agents];
        let mut moment = Matrix::zeros(dim, dim);
        for k in 0..=opts.steps {
            for i in 0..agents {
                for c in 0..n {
                    e[i * n + c] = xhat[i][c] - x[c];
                }
            }
            // Shifting every estimate and the true state by the same vector
            // commutes with the update (W is row-stochastic and innovations
            // see only differences), so re-centring on x keeps the recursion
            // exact while avoiding cancellation when A is unstable.
            for i in 0..agents {
                xhat[i].copy_from_slice(&e[i * n..(i + 1) * n]);
            }
            x.iter_mut().for_each(|v| *v = 0.0);
            let en = norm2(&e);
            if !(en <= DIVERGENCE_THRESHOLD) {
                stats.diverged_at = Some(stats.diverged_at.map_or(k, |d| d.min(k)));
                break;
            }
            stats.mean_sum[k * dim..(k + 1) * dim]
                .iter_mut()
                .zip(&e)
                .for_each(|(a, b)| *a += b);
            if k >= window_start {
                let md = moment.data_mut();
                for r in 0..dim {
                    let er = e[r];
                    for c in 0..dim {
                        md[r * dim + c] += er * e[c];
                    }
                }
                for i in 0..agents {
                    stats.agent_sq[i] += e[i * n..(i + 1) * n].iter().map(|v| v * v).sum::<f64>();
                }
            }
            if k == opts.steps {
                for r in 0..dim {
                    stats.final_sum[r] += e[r];
                    for c in 0..dim {
                        stats.final_outer[(r, c)] += e[r] * e[c];
                    }
                }
                break;
            }
            let y: Vec<Vec<f64>> = plant
                .h()
                .iter()
                .zip(r_factors)
                .zip(zbufs.iter_mut())
                .map(|((h, rf), buf)| {
                    let noise = sample(rf, &mut rng, buf);
                    let mut yj = h.mul_vec(&x);
                    yj.iter_mut().zip(&noise).for_each(|(a, b)| *a += b);
                    yj
                })
                .collect();
            stepper.step(&xhat, &y, &mut next);
            std::mem::swap(&mut xhat, &mut next);
            let v = sample(v_factor, &mut rng, &mut zbuf_v);
            let ax = plant.a().mul_vec(&x);
            for c in 0..n {
                x[c] = ax[c] + v[c];
            }
        }
        stats.window_moments.push(moment.scale(1.0 / window));
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{error_dynamics, exact_steady_covariance, Provenance};
    use crate::graph::Graph;

    fn k2(a: f64) -> Plant {
        Plant::new(
            Matrix::identity(1).scale(a),
            vec![Matrix::identity(1); 2],
            Matrix::identity(1),
            vec![Matrix::identity(1); 2],
            Graph::complete(2).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn noise_factor_squares_back() {
        let c = Matrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap();
        let f = noise_factor(&c).unwrap();
        assert!((&f.matmul(&f.transpose()) - &c).max_abs() < 1e-12);
        let singular = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let f = noise_factor(&singular).unwrap();
        assert!((&f.matmul(&f) - &singular).max_abs() < 1e-12);
    }

    #[test]
    fn zero_noise_error_stays_zero() {
        let plant = k2(2.0).with_noise(Matrix::zeros(1, 1), vec![Matrix::zeros(1, 1); 2]).unwrap();
        let d = Design::scalar(&plant, 1.0 / 3.0, Provenance::User).unwrap();
        let opts = SimulationOptions { steps: 50, trials: 3, ..Default::default() };
        let res = simulate(&plant, &d, &opts).unwrap();
        assert_eq!(res.empirical_cov_norm, 0.0);
        assert!(res.empirical_mean_error.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn matches_dlyap_on_k2() {
        let plant = k2(2.0);
        let d = Design::scalar(&plant, 1.0 / 3.0, Provenance::User).unwrap();
        let exact = exact_steady_covariance(&error_dynamics(&plant, &d).unwrap()).unwrap();
        let opts = SimulationOptions { steps: 4000, trials: 64, seed: 3, ..Default::default() };
        let res = simulate(&plant, &d, &opts).unwrap();
        let target = spectral_norm(&exact);
        assert!((res.empirical_cov_norm - target).abs() <= 4.0 * res.cov_norm_std_error, "{res:?} vs {target}");
        assert!(res.is_unbiased());
    }

    #[test]
    fn deterministic_across_pool_sizes() {
        let plant = k2(1.5);
        let d = Design::scalar(&plant, 0.3, Provenance::User).unwrap();
        let opts = SimulationOptions { steps: 200, trials: 21, seed: 9, ..Default::default() };
        let a = simulate(&plant, &d, &opts).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| simulate(&plant, &d, &opts).unwrap());
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn unstable_design_rejected_or_diverges() {
        let plant = k2(4.0);
        let d = Design::scalar(&plant, 1.0 / 3.0, Provenance::User).unwrap();
        let opts = SimulationOptions { steps: 400, trials: 2, ..Default::default() };
        assert!(matches!(simulate(&plant, &d, &opts), Err(Error::Unstable { .. })));
        let res = simulate(&plant, &d, &SimulationOptions { allow_unstable: true, ..opts }).unwrap();
        assert!(res.diverged_at.is_some());
        assert!(!res.is_unbiased());
    }
}
