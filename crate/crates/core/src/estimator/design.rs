use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::Plant;

const ROW_SUM_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    Full,
    Scalar,
}

/// Which method produced a design.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    NtcSolver,
    ScalarClosedForm,
    LmiCcl,
    LocalInterval,
    User,
}

/// Estimator parameterization: consensus weights `W` (N×N) and innovation
/// gains `B` (nN×nN, block diagonal).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Design {
    kind: DesignKind,
    w: Matrix,
    b: Matrix,
    alpha: Option<f64>,
    provenance: Provenance,
}

impl Design {
    /// General design; `W` must be nonnegative, row-stochastic and supported
    /// on the neighbourhoods, `B` block diagonal.
    pub fn full(plant: &Plant, w: Matrix, b: Matrix, provenance: Provenance) -> Result<Self> {
        let d = Self { kind: DesignKind::Full, w, b, alpha: None, provenance };
        d.validate(plant)?;
        Ok(d)
    }

    /// Assembles `B` from its diagonal blocks `B_i`.
    pub fn from_blocks(plant: &Plant, w: Matrix, blocks: &[Matrix], provenance: Provenance) -> Result<Self> {
        if blocks.len() != plant.agents() || blocks.iter().any(|b| b.shape() != (plant.n(), plant.n())) {
            return Err(Error::InvalidDesign(format!("need {} gain blocks of size {1}x{1}", plant.agents(), plant.n())));
        }
        Self::full(plant, w, Matrix::block_diag(blocks), provenance)
    }

    /// `W = I_N − αL`, `B = αI_{nN}`.
    pub fn scalar(plant: &Plant, alpha: f64, provenance: Provenance) -> Result<Self> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::InvalidDesign(format!("alpha must be finite and nonnegative, got {alpha}")));
        }
        let n_agents = plant.agents();
        let mut w = Matrix::identity(n_agents);
        w.add_scaled(&plant.graph().laplacian(), -alpha);
        let b = Matrix::identity(plant.dim()).scale(alpha);
        Ok(Self { kind: DesignKind::Scalar, w, b, alpha: Some(alpha), provenance })
    }

    /// `W = I`, `B = 0`: every agent runs open loop.
    pub fn open_loop(plant: &Plant) -> Self {
        Self {
            kind: DesignKind::Full,
            w: Matrix::identity(plant.agents()),
            b: Matrix::zeros(plant.dim(), plant.dim()),
            alpha: None,
            provenance: Provenance::User,
        }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn kind(&self) -> DesignKind {
        self.kind
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Diagonal blocks `B_i`.
    pub fn b_blocks(&self, n: usize) -> Vec<Matrix> {
        (0..self.b.rows() / n).map(|i| self.b.block(i * n, i * n, n, n)).collect()
    }

    /// Checks shapes and structure against `plant`.
    pub fn validate(&self, plant: &Plant) -> Result<()> {
        let agents = plant.agents();
        let n = plant.n();
        if self.w.shape() != (agents, agents) {
            return Err(Error::DimensionMismatch(format!("W is {:?}, expected {agents}x{agents}", self.w.shape())));
        }
        if self.b.shape() != (n * agents, n * agents) {
            return Err(Error::DimensionMismatch(format!("B is {:?}, expected {1}x{1}", self.b.shape(), n * agents)));
        }
        let graph = plant.graph();
        for i in 0..agents {
            let row = self.w.row(i);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidDesign(format!("row {i} of W sums to {sum}")));
            }
            for (j, &wij) in row.iter().enumerate() {
                if i != j && !graph.has_edge(i, j) && wij != 0.0 {
                    return Err(Error::InvalidDesign(format!("W[{i},{j}] is nonzero but {j} is not a neighbour of {i}")));
                }
                if self.kind == DesignKind::Full && wij < 0.0 {
                    return Err(Error::InvalidDesign(format!("W[{i},{j}] = {wij} is negative")));
                }
            }
        }
        for r in 0..n * agents {
            for c in 0..n * agents {
                if r / n != c / n && self.b[(r, c)] != 0.0 {
                    return Err(Error::InvalidDesign(format!("B[{r},{c}] lies outside the diagonal blocks")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    #[test]
    fn scalar_design_structure() {
        let plant = Plant::canonical_scalar(Graph::cycle(4).unwrap(), 1.0).unwrap();
        let d = Design::scalar(&plant, 0.2, Provenance::User).unwrap();
        let mut want = Matrix::identity(4);
        want.add_scaled(&plant.graph().laplacian(), -0.2);
        assert_eq!(*d.w(), want);
        assert_eq!(*d.b(), Matrix::identity(16).scale(0.2));
        d.validate(&plant).unwrap();
    }

    #[test]
    fn rejects_bad_structure() {
        let plant = Plant::canonical_scalar(Graph::cycle(4).unwrap(), 1.0).unwrap();
        let mut w = Matrix::identity(4);
        w[(0, 0)] = 0.5;
        w[(0, 2)] = 0.5;
        let b = Matrix::zeros(16, 16);
        assert!(matches!(Design::full(&plant, w, b.clone(), Provenance::User), Err(Error::InvalidDesign(_))));

        let mut b2 = b;
        b2[(0, 5)] = 1.0;
        assert!(matches!(Design::full(&plant, Matrix::identity(4), b2, Provenance::User), Err(Error::InvalidDesign(_))));

        let mut w3 = Matrix::identity(4);
        w3[(0, 0)] = 0.9;
        assert!(Design::full(&plant, w3, Matrix::zeros(16, 16), Provenance::User).is_err());
    }

    #[test]
    fn blocks_roundtrip() {
        let plant = Plant::canonical_scalar(Graph::complete(3).unwrap(), 1.0).unwrap();
        let blocks: Vec<Matrix> = (0..3).map(|i| Matrix::identity(3).scale(i as f64)).collect();
        let d = Design::from_blocks(&plant, Matrix::identity(3), &blocks, Provenance::User).unwrap();
        assert_eq!(d.b_blocks(3), blocks);
    }
}
