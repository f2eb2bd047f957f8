//! The plant: dynamics, per-agent observation models, noise covariances and
//! the communication graph, with the observability predicates the design
//! methods depend on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{ensure_psd, kron, numerical_rank, spectral_norm, sym_eigenvalues, Matrix};

/// Relative tolerance for numerical rank and invertibility tests.
pub const RANK_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-10;

/// Validated plant. Inputs `V` and `R_i` are symmetrized on construction.
#[derive(Clone, Debug)]
pub struct Plant {
    a: Matrix,
    h: Vec<Matrix>,
    v: Matrix,
    r: Vec<Matrix>,
    graph: Graph,
}

/// Observation Gram matrices.
#[derive(Clone, Debug)]
pub struct ObsGram {
    /// `G = Σ_j H_jᵀ H_j`.
    pub total: Matrix,
    /// `Σ_{j∈N_i} H_jᵀ H_j`, one per agent.
    pub per_neighborhood: Vec<Matrix>,
}

impl Plant {
    pub fn new(a: Matrix, h: Vec<Matrix>, v: Matrix, r: Vec<Matrix>, graph: Graph) -> Result<Self> {
        a.ensure_square().map_err(|_| Error::InvalidPlant("A must be square".into()))?;
        let n = a.rows();
        if n == 0 {
            return Err(Error::InvalidPlant("state dimension must be positive".into()));
        }
        let agents = graph.n();
        if agents == 0 {
            return Err(Error::InvalidPlant("at least one agent is required".into()));
        }
        if h.len() != agents || r.len() != agents {
            return Err(Error::InvalidPlant(format!(
                "graph has {agents} agents but {} observation matrices and {} noise covariances",
                h.len(),
                r.len()
            )));
        }
        if v.shape() != (n, n) {
            return Err(Error::InvalidPlant(format!("V must be {n}x{n}")));
        }
        for (i, (hi, ri)) in h.iter().zip(&r).enumerate() {
            if hi.cols() != n || hi.rows() == 0 {
                return Err(Error::InvalidPlant(format!("H_{i} must have {n} columns and at least one row")));
            }
            if ri.shape() != (hi.rows(), hi.rows()) {
                return Err(Error::InvalidPlant(format!("R_{i} must be {0}x{0}", hi.rows())));
            }
        }
        let v = validated_covariance(&v, "V")?;
        let r = r
            .iter()
            .enumerate()
            .map(|(i, ri)| validated_covariance(ri, &format!("R_{i}")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { a, h, v, r, graph })
    }

    /// Each agent `i` observes state coordinate `i` (`H_i = e_iᵀ`, `n = N`),
    /// with `A = a·I`, unit process noise and unit observation noise.
    pub fn canonical_scalar(graph: Graph, a: f64) -> Result<Self> {
        let n = graph.n();
        let h = (0..n)
            .map(|i| {
                let mut row = Matrix::zeros(1, n);
                row[(0, i)] = 1.0;
                row
            })
            .collect();
        Self::new(
            Matrix::identity(n).scale(a),
            h,
            Matrix::identity(n),
            vec![Matrix::identity(1); n],
            graph,
        )
    }

    /// No observations at all (`H_i = 0`), `A = a·I_n`.
    pub fn unobserved(graph: Graph, n: usize, a: f64) -> Result<Self> {
        let agents = graph.n();
        Self::new(
            Matrix::identity(n).scale(a),
            vec![Matrix::zeros(1, n); agents],
            Matrix::identity(n),
            vec![Matrix::identity(1); agents],
            graph,
        )
    }

    /// Same plant with a different system matrix.
    pub fn with_a(&self, a: Matrix) -> Result<Self> {
        Self::new(a, self.h.clone(), self.v.clone(), self.r.clone(), self.graph.clone())
    }

    /// Same plant with the system matrix rescaled so that `‖A‖₂ = target`.
    pub fn with_instability(&self, target: f64) -> Result<Self> {
        let current = self.instability();
        if current == 0.0 {
            return self.with_a(Matrix::identity(self.n()).scale(target));
        }
        self.with_a(self.a.scale(target / current))
    }

    pub fn with_noise(&self, v: Matrix, r: Vec<Matrix>) -> Result<Self> {
        Self::new(self.a.clone(), self.h.clone(), v, r, self.graph.clone())
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn h(&self) -> &[Matrix] {
        &self.h
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn r(&self) -> &[Matrix] {
        &self.r
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// State dimension `n`.
    pub fn n(&self) -> usize {
        self.a.rows()
    }

    /// Number of agents `N`.
    pub fn agents(&self) -> usize {
        self.graph.n()
    }

    /// Network dimension `nN`.
    pub fn dim(&self) -> usize {
        self.n() * self.agents()
    }

    /// `a = ‖A‖₂`.
    pub fn instability(&self) -> f64 {
        spectral_norm(&self.a)
    }

    /// `H_iᵀ H_i` for every agent.
    pub fn local_grams(&self) -> Vec<Matrix> {
        self.h.iter().map(|h| h.transpose().matmul(h)).collect()
    }

    pub fn obs_gram(&self) -> ObsGram {
        let local = self.local_grams();
        let n = self.n();
        let mut total = Matrix::zeros(n, n);
        for g in &local {
            total.add_scaled(g, 1.0);
        }
        let per_neighborhood = (0..self.agents())
            .map(|i| {
                let mut s = Matrix::zeros(n, n);
                for j in self.graph.neighborhood(i) {
                    s.add_scaled(&local[j], 1.0);
                }
                s
            })
            .collect();
        ObsGram { total, per_neighborhood }
    }

    /// Blocks of `D_H`: block `i` is `Σ_{j∈N_i} H_jᵀ H_j`.
    pub fn dh_blocks(&self) -> Vec<Matrix> {
        self.obs_gram().per_neighborhood
    }

    /// `D_H = blockdiag[Σ_{j∈N_i} H_jᵀ H_j]`, `nN × nN`.
    pub fn build_dh(&self) -> Matrix {
        Matrix::block_diag(&self.dh_blocks())
    }

    /// `D̄_H = blockdiag[H_iᵀ H_i]`, the agents' own contribution to `D_H`.
    pub fn dh_own(&self) -> Matrix {
        Matrix::block_diag(&self.local_grams())
    }

    /// `R̄ = blockdiag[H_iᵀ R_i H_i]`.
    pub fn rbar(&self) -> Matrix {
        let blocks: Vec<Matrix> = self
            .h
            .iter()
            .zip(&self.r)
            .map(|(h, r)| h.transpose().matmul(r).matmul(h))
            .collect();
        Matrix::block_diag(&blocks)
    }

    /// `L ⊗ I_n`.
    pub fn laplacian_kron(&self) -> Matrix {
        kron(&self.graph.laplacian(), &Matrix::identity(self.n()))
    }

    /// Rank of `[H; HA; …; HA^{n−1}]` equals `n`.
    pub fn collectively_observable(&self) -> bool {
        let n = self.n();
        let stacked = Matrix::vstack(&self.h).expect("H blocks share n columns");
        let mut parts = Vec::with_capacity(n);
        let mut cur = stacked;
        for _ in 0..n {
            let next = cur.matmul(&self.a);
            parts.push(cur);
            cur = next;
        }
        let obs = Matrix::vstack(&parts).expect("equal column counts");
        numerical_rank(&obs, RANK_TOL) == n
    }

    /// `G = Σ H_jᵀ H_j` is invertible.
    pub fn one_step_observable(&self) -> bool {
        is_invertible_psd(&self.obs_gram().total)
    }

    /// Every neighbourhood Gram `Σ_{j∈N_i} H_jᵀ H_j` is invertible.
    pub fn neighborhood_one_step_observable(&self) -> bool {
        self.obs_gram().per_neighborhood.iter().all(is_invertible_psd)
    }

    pub fn to_spec(&self) -> PlantSpec {
        PlantSpec {
            a: self.a.to_rows(),
            h: self.h.iter().map(Matrix::to_rows).collect(),
            v: self.v.to_rows(),
            r: self.r.iter().map(Matrix::to_rows).collect(),
            graph: self.graph.to_grammar(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: PlantSpec = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        spec.build()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("plant serializes")
    }
}

fn is_invertible_psd(g: &Matrix) -> bool {
    let ev = sym_eigenvalues(g).expect("Gram matrices are symmetric");
    let hi = ev.last().copied().unwrap_or(0.0);
    hi > 0.0 && ev[0] > RANK_TOL * hi
}

fn validated_covariance(m: &Matrix, name: &str) -> Result<Matrix> {
    let s = m.symmetrize();
    if (&s - m).max_abs() > 1e-8 * m.max_abs().max(1.0) {
        return Err(Error::InvalidPlant(format!("{name} is not symmetric")));
    }
    ensure_psd(&s, PSD_TOL).map_err(|e| Error::InvalidPlant(format!("{name}: {e}")))?;
    Ok(s)
}

/// On-disk plant description: row-major nested arrays plus a graph grammar string.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlantSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    pub h: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "V")]
    pub v: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<Vec<f64>>>,
    pub graph: String,
}

impl PlantSpec {
    pub fn build(&self) -> Result<Plant> {
        let mat = |rows: &Vec<Vec<f64>>, name: &str| {
            Matrix::from_rows(rows).map_err(|e| Error::InvalidPlant(format!("{name}: {e}")))
        };
        let a = mat(&self.a, "A")?;
        let h = self
            .h
            .iter()
            .enumerate()
            .map(|(i, m)| mat(m, &format!("H_{i}")))
            .collect::<Result<Vec<_>>>()?;
        let v = mat(&self.v, "V")?;
        let r = self
            .r
            .iter()
            .enumerate()
            .map(|(i, m)| mat(m, &format!("R_{i}")))
            .collect::<Result<Vec<_>>>()?;
        let graph: Graph = self.graph.parse()?;
        Plant::new(a, h, v, r, graph)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> Matrix {
        Matrix::row_vector(v)
    }

    fn plant(a: Matrix, h: Vec<Matrix>, graph: Graph) -> Plant {
        let n = a.rows();
        let r = h.iter().map(|hi| Matrix::identity(hi.rows())).collect();
        Plant::new(a, h, Matrix::identity(n), r, graph).unwrap()
    }

    #[test]
    fn instability_examples() {
        let g = Graph::complete(1).unwrap();
        let p = plant(Matrix::identity(2), vec![row(&[1.0, 0.0])], g.clone());
        assert!((p.instability() - 1.0).abs() < 1e-14);
        let p = p.with_a(Matrix::identity(2).scale(1.2)).unwrap();
        assert!((p.instability() - 1.2).abs() < 1e-14);
        let jordan = Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap();
        let p = p.with_a(jordan).unwrap();
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((p.instability() - golden).abs() < 1e-12);
    }

    #[test]
    fn dh_examples() {
        let g = Graph::cycle(4).unwrap();
        let none = Plant::unobserved(g.clone(), 3, 1.0).unwrap();
        assert_eq!(none.build_dh(), Matrix::zeros(12, 12));

        let k2 = plant(Matrix::identity(1), vec![row(&[1.0]), row(&[1.0])], Graph::complete(2).unwrap());
        assert_eq!(k2.build_dh(), Matrix::from_diag(&[2.0, 2.0]));

        let canon = Plant::canonical_scalar(g, 1.0).unwrap();
        let blocks = canon.dh_blocks();
        for (i, b) in blocks.iter().enumerate() {
            let mut want = vec![0.0; 4];
            for j in [(i + 3) % 4, i, (i + 1) % 4] {
                want[j] = 1.0;
            }
            assert_eq!(*b, Matrix::from_diag(&want), "block {i}");
        }
    }

    #[test]
    fn dh_partition_reassembles() {
        let canon = Plant::canonical_scalar(Graph::circulant(6, 2).unwrap(), 1.0).unwrap();
        let own = canon.dh_own();
        let rest = &canon.build_dh() - &own;
        assert_eq!(&own + &rest, canon.build_dh());
        assert!(sym_eigenvalues(&rest).unwrap()[0] > -1e-12);
    }

    #[test]
    fn collective_observability_examples() {
        let one = Graph::complete(1).unwrap();
        let two = Graph::complete(2).unwrap();
        assert!(!plant(Matrix::identity(2), vec![row(&[1.0, 0.0])], one.clone()).collectively_observable());
        assert!(plant(Matrix::identity(2), vec![row(&[1.0, 0.0]), row(&[0.0, 1.0])], two).collectively_observable());
        let chain = Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap();
        assert!(plant(chain, vec![row(&[1.0, 0.0])], one).collectively_observable());
    }

    #[test]
    fn one_step_observability_examples() {
        let canon = Plant::canonical_scalar(Graph::cycle(4).unwrap(), 1.0).unwrap();
        assert!(canon.one_step_observable());
        assert!(!Plant::unobserved(Graph::cycle(4).unwrap(), 2, 1.0).unwrap().one_step_observable());
        let two = Graph::complete(2).unwrap();
        let same = plant(Matrix::identity(2), vec![row(&[1.0, 0.0]), row(&[1.0, 0.0])], two);
        assert!(!same.one_step_observable());
    }

    #[test]
    fn neighborhood_observability_examples() {
        let two = Graph::complete(2).unwrap();
        let split = plant(Matrix::identity(2), vec![row(&[1.0, 0.0]), row(&[0.0, 1.0])], two);
        assert!(split.neighborhood_one_step_observable());
        for g in split.dh_blocks() {
            assert_eq!(g, Matrix::identity(2));
        }
        let isolated = plant(Matrix::identity(2), vec![row(&[1.0, 0.0]), row(&[0.0, 1.0])], Graph::empty(2));
        assert!(!isolated.neighborhood_one_step_observable());
        let canon = Plant::canonical_scalar(Graph::cycle(4).unwrap(), 1.0).unwrap();
        assert!(!canon.neighborhood_one_step_observable());
    }

    #[test]
    fn validation_errors() {
        let g = Graph::complete(2).unwrap();
        let bad_v = Plant::new(
            Matrix::identity(1),
            vec![row(&[1.0]), row(&[1.0])],
            Matrix::from_diag(&[-1.0]),
            vec![Matrix::identity(1); 2],
            g.clone(),
        );
        assert!(matches!(bad_v, Err(Error::InvalidPlant(_))));
        let wrong_count = Plant::new(
            Matrix::identity(1),
            vec![row(&[1.0])],
            Matrix::identity(1),
            vec![Matrix::identity(1)],
            g,
        );
        assert!(matches!(wrong_count, Err(Error::InvalidPlant(_))));
    }

    #[test]
    fn symmetrizes_roundoff() {
        let v = Matrix::from_rows(&[[1.0, 0.5 + 1e-13], [0.5, 1.0]]).unwrap();
        let p = Plant::new(
            Matrix::identity(2),
            vec![row(&[1.0, 0.0])],
            v,
            vec![Matrix::identity(1)],
            Graph::complete(1).unwrap(),
        )
        .unwrap();
        assert_eq!(p.v().asymmetry(), 0.0);
    }

    #[test]
    fn json_roundtrip() {
        let text = r#"{ "A": [[2.0]], "H": [[[1.0]], [[1.0]]], "V": [[1.0]], "R": [[[1.0]], [[1.0]]], "graph": "complete:N=2" }"#;
        let p = Plant::from_json(text).unwrap();
        assert_eq!(p.agents(), 2);
        assert_eq!(p.n(), 1);
        let again = Plant::from_json(&p.to_json()).unwrap();
        assert_eq!(again.build_dh(), p.build_dh());
        assert_eq!(again.graph(), p.graph());
    }
}
