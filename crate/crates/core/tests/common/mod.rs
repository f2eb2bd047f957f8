#![allow(dead_code)]

use nettrack::{Graph, Matrix, Plant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// `G Gᵀ / cols + shift·I`.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Matrix {
    let g = gaussian(rng, n, n);
    let mut m = g.matmul(&g.transpose()).scale(1.0 / n as f64);
    m.add_scaled(&Matrix::identity(n), shift);
    m.symmetrize()
}

/// Random spanning tree plus each remaining edge with probability `p`.
pub fn random_connected_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Graph {
    let mut g = Graph::empty(n);
    for i in 1..n {
        let j = rng.random_range(0..i);
        g.add_edge(i, j).unwrap();
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if !g.has_edge(i, j) && rng.random::<f64>() < p {
                g.add_edge(i, j).unwrap();
            }
        }
    }
    g
}

/// Random graph that may be disconnected.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Graph {
    let mut g = Graph::empty(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                g.add_edge(i, j).unwrap();
            }
        }
    }
    g
}

/// Connected plant with `‖A‖₂ = a`, one random observation row per agent
/// and random positive definite noise covariances.
pub fn random_plant(rng: &mut ChaCha8Rng, agents: usize, n: usize, a: f64) -> Plant {
    let graph = random_connected_graph(rng, agents, 0.3);
    let h = (0..agents).map(|_| gaussian(rng, 1, n)).collect();
    let r = (0..agents).map(|_| random_psd(rng, 1, 0.2)).collect();
    let v = random_psd(rng, n, 0.1);
    let plant = Plant::new(gaussian(rng, n, n), h, v, r, graph).unwrap();
    plant.with_instability(a).unwrap()
}

/// [`random_plant`] redrawn until `G = Σ H_iᵀH_i` is invertible.
pub fn random_observable_plant(rng: &mut ChaCha8Rng, agents: usize, n: usize, a: f64) -> Plant {
    assert!(n <= agents, "one observation row per agent cannot make G invertible");
    loop {
        let p = random_plant(rng, agents, n, a);
        if p.one_step_observable() {
            return p;
        }
    }
}

/// Plant whose `D_H` blocks are all diagonal: each agent observes one
/// coordinate with a random nonzero gain.
pub fn random_coordinate_plant(rng: &mut ChaCha8Rng, agents: usize, n: usize, a: f64) -> Plant {
    let graph = random_connected_graph(rng, agents, 0.3);
    let h = (0..agents)
        .map(|i| {
            let mut row = Matrix::zeros(1, n);
            row[(0, i % n)] = 0.5 + rng.random::<f64>();
            row
        })
        .collect();
    let r = vec![Matrix::identity(1); agents];
    Plant::new(Matrix::identity(n).scale(a), h, Matrix::identity(n), r, graph).unwrap()
}

/// The two-agent scalar plant: complete graph, `h_1 = h_2 = 1`, unit noise.
pub fn k2(a: f64) -> Plant {
    Plant::new(
        Matrix::identity(1).scale(a),
        vec![Matrix::identity(1); 2],
        Matrix::identity(1),
        vec![Matrix::identity(1); 2],
        Graph::complete(2).unwrap(),
    )
    .unwrap()
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).max_abs()
}
