mod common;

use common::{gaussian, random_connected_graph, rng};
use nettrack::error::Error;
use nettrack::linalg::{spectral_norm, sym_eigenvalues, Matrix};
use nettrack::local_design::{
    ipsen_lower_bound, local_alpha_interval, tau, weyl_bounds, LambdaMaxSource, LocalMethod, LocalOptions,
};
use nettrack::scalar_design::{build_q, scalar_capacity, scalar_report};
use nettrack::{Graph, Plant};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ipsen_bound_is_a_lower_bound(seed in any::<u64>(), n in 2usize..12, p in 0.0f64..0.6) {
        let mut r = rng(seed);
        let g = random_connected_graph(&mut r, n, p);
        let z = gaussian(&mut r, n, 1);
        let mut m = g.laplacian();
        m.add_scaled(&z.matmul(&z.transpose()), 1.0);
        let l1 = sym_eigenvalues(&m).unwrap()[0];
        let t = ipsen_lower_bound(g.algebraic_connectivity(), z.data());
        prop_assert!(t >= 0.0);
        prop_assert!(l1 >= t - 1e-10 * (1.0 + l1));
    }

    #[test]
    fn tau_is_the_unit_vector_case(lambda2 in 0.0f64..10.0, n in 2usize..30) {
        let mut e = vec![0.0; n];
        e[0] = 1.0;
        prop_assert!((tau(lambda2, n) - ipsen_lower_bound(lambda2, &e)).abs() <= 1e-14);
        prop_assert!(tau(lambda2, n) <= lambda2.min(1.0) + 1e-12);
    }

    #[test]
    fn weyl_brackets_the_sum(seed in any::<u64>(), n in 1usize..8) {
        let mut r = rng(seed);
        let x = gaussian(&mut r, n, n);
        let y = gaussian(&mut r, n, n);
        let (a, b) = (x.matmul(&x.transpose()), y.matmul(&y.transpose()));
        let (lo, hi) = weyl_bounds(&a, &b).unwrap();
        let ev = sym_eigenvalues(&(&a + &b)).unwrap();
        prop_assert!(ev[0] >= lo - 1e-9 * (1.0 + hi));
        prop_assert!(ev[n - 1] <= hi + 1e-9 * (1.0 + hi));
    }

    #[test]
    fn cycle_method_on_hamiltonian_graphs(seed in any::<u64>(), n in 4usize..9, p in 0.0f64..0.5) {
        // a cycle plus random chords always has a Hamiltonian cycle
        let mut r = rng(seed);
        let extra = random_connected_graph(&mut r, n, p);
        let mut g = Graph::cycle(n).unwrap();
        for (i, j) in extra.edges() {
            if !g.has_edge(i, j) {
                g.add_edge(i, j).unwrap();
            }
        }
        let plant = Plant::canonical_scalar(g, 1.0).unwrap();
        let opts = LocalOptions { method: Some(LocalMethod::CycleSubgraph), ..LocalOptions::default() };
        let rep = local_alpha_interval(&plant, 1.0, &opts).unwrap();
        let q = sym_eigenvalues(&build_q(&plant)).unwrap();
        prop_assert!(rep.tau <= q[0] + 1e-10);
        prop_assert!(q[q.len() - 1] <= rep.lambda_max_bound + 1e-10);
        let c_alpha = scalar_capacity(&plant).unwrap().c_alpha;
        prop_assert!(rep.c_loc <= c_alpha * (1.0 + 1e-12));
        let a = 0.5 * (1.0 + rep.c_loc);
        let local = local_alpha_interval(&plant, a, &opts).unwrap().interval.unwrap();
        let global = scalar_report(&plant, a).unwrap().interval.unwrap();
        // equality is attained on complete graphs, up to eigensolver round-off
        prop_assert!(local.lo >= global.lo * (1.0 - 1e-12) && local.hi <= global.hi * (1.0 + 1e-12));
        // looser λ_max information only shrinks the interval
        let degree = LocalOptions { lambda_max: LambdaMaxSource::DegreeBound, ..opts.clone() };
        let loose = local_alpha_interval(&plant, a, &degree).unwrap();
        if let Some(iv) = loose.interval {
            prop_assert!(iv.lo >= local.lo * (1.0 - 1e-12) && iv.hi <= local.hi * (1.0 + 1e-12));
        }
    }
}

#[test]
fn circulant_local_intervals_are_stabilizing() {
    for (n, k) in [(4, 1), (5, 1), (6, 2), (7, 2), (8, 1), (9, 3)] {
        let p = Plant::canonical_scalar(Graph::circulant(n, k).unwrap(), 1.0).unwrap();
        let probe = local_alpha_interval(&p, 1.0, &LocalOptions::default()).unwrap();
        assert_eq!(probe.method, LocalMethod::CirculantIsomorphic);
        assert!(probe.c_loc > 1.0 && probe.c_loc <= scalar_capacity(&p).unwrap().c_alpha);
        let a = 0.5 * (1.0 + probe.c_loc);
        let rep = local_alpha_interval(&p, a, &LocalOptions::default()).unwrap();
        let q = build_q(&p);
        for alpha in rep.interval.unwrap().interior_points(9) {
            let mut m = Matrix::identity(q.rows());
            m.add_scaled(&q, -alpha);
            assert!(a * spectral_norm(&m) < 1.0, "circulant({n},{k}) alpha {alpha}");
        }
    }
}

#[test]
fn relabeled_circulant_is_recognised() {
    let g = Graph::circulant(6, 2).unwrap().relabel(&[2, 5, 0, 3, 1, 4]).unwrap();
    let p = Plant::canonical_scalar(g, 1.0).unwrap();
    let rep = local_alpha_interval(&p, 1.0, &LocalOptions::default()).unwrap();
    assert_eq!(rep.method, LocalMethod::CirculantIsomorphic);
    let direct = Plant::canonical_scalar(Graph::circulant(6, 2).unwrap(), 1.0).unwrap();
    let reference = local_alpha_interval(&direct, 1.0, &LocalOptions::default()).unwrap();
    assert!((rep.c_loc - reference.c_loc).abs() < 1e-12);
}

#[test]
fn inapplicable_methods() {
    // a path has no Hamiltonian cycle and is not circulant
    let p = Plant::canonical_scalar("edges:0-1,1-2,2-3".parse().unwrap(), 1.0).unwrap();
    assert!(matches!(local_alpha_interval(&p, 1.0, &LocalOptions::default()), Err(Error::NotApplicable(_))));
    // n ≠ N
    let p = Plant::unobserved(Graph::cycle(4).unwrap(), 2, 1.0).unwrap();
    assert!(matches!(local_alpha_interval(&p, 1.0, &LocalOptions::default()), Err(Error::NotApplicable(_))));
    let p = Plant::canonical_scalar(Graph::cycle(4).unwrap(), 1.0).unwrap();
    assert!(local_alpha_interval(&p, 0.0, &LocalOptions::default()).is_err());
    let wrong = LocalOptions { cycle: Some(vec![0, 2, 1, 3]), method: Some(LocalMethod::CycleSubgraph), ..LocalOptions::default() };
    assert!(local_alpha_interval(&p, 1.0, &wrong).is_err());
}
