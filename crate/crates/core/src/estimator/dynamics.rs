use crate::error::{Error, Result};
use crate::linalg::{dlyap, kron, spectral_norm, Matrix};
use crate::model::Plant;

use super::design::Design;

/// Closed-form error process `e_{k+1} = P e_k + (I_N⊗A) B u_k − 1⊗v_k`.
#[derive(Clone, Debug)]
pub struct ErrorDynamics {
    /// `P = (I_N⊗A)(W⊗I_n − B·D_H)`.
    pub p: Matrix,
    /// Noise covariance of the error process, `Φ + 11ᵀ⊗V`.
    pub sigma: Matrix,
    /// Covariance of the innovation noise term.
    pub phi: Matrix,
    /// `blockdiag[H_iᵀ R_i H_i]`.
    pub rbar: Matrix,
    /// `Adj + I_N`.
    pub acal: Matrix,
}

impl ErrorDynamics {
    pub fn norm(&self) -> f64 {
        spectral_norm(&self.p)
    }
}

/// `W⊗I_n − B·D_H`, the part of `P` that the design controls.
pub fn contraction_matrix(plant: &Plant, design: &Design) -> Result<Matrix> {
    design.validate(plant)?;
    Ok(contraction_from(plant.n(), design.w(), design.b(), &plant.build_dh()))
}

pub(crate) fn contraction_from(n: usize, w: &Matrix, b: &Matrix, dh: &Matrix) -> Matrix {
    &kron(w, &Matrix::identity(n)) - &b.matmul(dh)
}

pub fn error_dynamics(plant: &Plant, design: &Design) -> Result<ErrorDynamics> {
    let m = contraction_matrix(plant, design)?;
    let agents = plant.agents();
    let n = plant.n();
    let ia = kron(&Matrix::identity(agents), plant.a());
    let p = ia.matmul(&m);

    let acal = &plant.graph().adjacency() + &Matrix::identity(agents);
    let rbar = plant.rbar();
    let spread = kron(&acal, &Matrix::identity(n));
    let gain = ia.matmul(design.b()).matmul(&spread);
    let phi = gain.matmul(&rbar).matmul(&gain.transpose()).symmetrize();
    let ones = Matrix::new(agents, agents, vec![1.0; agents * agents])?;
    let sigma = &phi + &kron(&ones, plant.v());
    Ok(ErrorDynamics { p, sigma, phi, rbar, acal })
}

/// Steady-state error covariance `S_∞ = Σ_j Pʲ Σ (Pᵀ)ʲ`.
pub fn exact_steady_covariance(ed: &ErrorDynamics) -> Result<Matrix> {
    dlyap(&ed.p, &ed.sigma, 1e-15)
}

/// One estimator update. `xhat[i]` is agent `i`'s estimate, `y[j]` agent
/// `j`'s current observation. Each agent reads only its neighbourhood.
pub fn step_estimates(plant: &Plant, design: &Design, xhat: &[Vec<f64>], y: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let agents = plant.agents();
    let n = plant.n();
    if xhat.len() != agents || y.len() != agents {
        return Err(Error::DimensionMismatch("one estimate and one observation per agent required".into()));
    }
    for (j, (x, yj)) in xhat.iter().zip(y).enumerate() {
        if x.len() != n || yj.len() != plant.h()[j].rows() {
            return Err(Error::DimensionMismatch(format!("agent {j}: estimate or observation has the wrong length")));
        }
    }
    let stepper = Stepper::new(plant, design);
    let mut out = vec![vec![0.0; n]; agents];
    stepper.step(xhat, y, &mut out);
    Ok(out)
}

/// Precomputed per-agent pieces of the estimator update.
pub(crate) struct Stepper<'a> {
    plant: &'a Plant,
    neighborhoods: Vec<Vec<usize>>,
    weights: Vec<Vec<f64>>,
    gains: Vec<Matrix>,
    grams: Vec<Matrix>,
    ht: Vec<Matrix>,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(plant: &'a Plant, design: &Design) -> Self {
        let g = plant.graph();
        let neighborhoods: Vec<Vec<usize>> = (0..plant.agents()).map(|i| g.neighborhood(i)).collect();
        let weights = neighborhoods
            .iter()
            .enumerate()
            .map(|(i, nb)| nb.iter().map(|&j| design.w()[(i, j)]).collect())
            .collect();
        Self {
            plant,
            neighborhoods,
            weights,
            gains: design.b_blocks(plant.n()),
            grams: plant.dh_blocks(),
            ht: plant.h().iter().map(Matrix::transpose).collect(),
        }
    }

    pub(crate) fn step(&self, xhat: &[Vec<f64>], y: &[Vec<f64>], out: &mut [Vec<f64>]) {
        let n = self.plant.n();
        let hy: Vec<Vec<f64>> = self.ht.iter().zip(y).map(|(ht, yj)| ht.mul_vec(yj)).collect();
        let mut inner = vec![0.0; n];
        for (i, nb) in self.neighborhoods.iter().enumerate() {
            // innovation: Σ H_jᵀ y_j − D_i x̂ⁱ
            let mut innov = self.grams[i].mul_vec(&xhat[i]);
            innov.iter_mut().for_each(|v| *v = -*v);
            for &j in nb {
                for (acc, h) in innov.iter_mut().zip(&hy[j]) {
                    *acc += h;
                }
            }
            let correction = self.gains[i].mul_vec(&innov);
            inner.copy_from_slice(&correction);
            for (&j, &w) in nb.iter().zip(&self.weights[i]) {
                for (acc, x) in inner.iter_mut().zip(&xhat[j]) {
                    *acc += w * x;
                }
            }
            out[i] = self.plant.a().mul_vec(&inner);
        }
    }
}
