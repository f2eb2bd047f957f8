mod common;

use common::{k2, random_coordinate_plant, random_observable_plant, rng};
use nettrack::estimator::contraction_matrix;
use nettrack::linalg::spectral_norm;
use nettrack::norm_design::{
    bound_chain, compute_ntc, design_for_system, performance_design, CapacityMethod, NtcOptions, PerformanceOptions,
};
use nettrack::scalar_design::scalar_capacity;
use nettrack::{Error, Graph, Plant};
use proptest::prelude::*;

fn check_report(p: &Plant, label: &str) {
    let c_alpha = scalar_capacity(p).unwrap().c_alpha;
    let r = compute_ntc(p, &NtcOptions::default()).unwrap();
    assert!(r.capacity >= 1.0, "{label}: capacity {}", r.capacity);
    assert!(r.capacity + 1e-3 >= c_alpha, "{label}: capacity {} below C_alpha {c_alpha}", r.capacity);
    let d = r.design(p).unwrap();
    // the reported norm is the true norm of the returned design
    let norm = spectral_norm(&contraction_matrix(p, &d).unwrap());
    assert!((norm - r.achieved_norm).abs() <= 1e-9 * norm.max(1e-9), "{label}: {norm} vs {}", r.achieved_norm);
    let w = &r.w_star;
    for i in 0..p.agents() {
        let sum: f64 = (0..p.agents()).map(|j| w[(i, j)]).sum();
        assert!((sum - 1.0).abs() <= 1e-9, "{label}: row {i} sums to {sum}");
        for j in 0..p.agents() {
            assert!(w[(i, j)] >= -1e-12);
            if i != j && !p.graph().has_edge(i, j) {
                assert_eq!(w[(i, j)], 0.0);
            }
        }
    }
    assert!(r.history.windows(2).all(|h| h[1] <= h[0]), "{label}: best-so-far history increases");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn capacity_dominates_scalar_capacity(seed in any::<u64>(), agents in 3usize..6, n in 1usize..3) {
        let p = random_observable_plant(&mut rng(seed), agents, n, 1.0);
        check_report(&p, &format!("seed {seed}"));
    }

    #[test]
    fn decoupled_plants(seed in any::<u64>(), agents in 3usize..7, n in 1usize..3) {
        let p = random_coordinate_plant(&mut rng(seed), agents, n, 1.0);
        check_report(&p, &format!("seed {seed}"));
    }
}

#[test]
fn circulant_canonical_plants() {
    for (n, m) in [(5, 1), (6, 2), (8, 1), (9, 2)] {
        let p = Plant::canonical_scalar(Graph::circulant(n, m).unwrap(), 1.0).unwrap();
        check_report(&p, &format!("circulant({n},{m})"));
    }
}

#[test]
fn unit_capacity_without_observations() {
    let p = Plant::unobserved(Graph::circulant(8, 1).unwrap(), 1, 1.0).unwrap();
    let r = compute_ntc(&p, &NtcOptions::default()).unwrap();
    assert!(r.capacity >= 1.0 && r.capacity <= 1.0 + 1e-3);
    assert!(r.converged);
}

#[test]
fn complete_graphs_are_infinite() {
    for n in 2..=6 {
        let p = Plant::canonical_scalar(Graph::complete(n).unwrap(), 1.0).unwrap();
        let r = compute_ntc(&p, &NtcOptions::default()).unwrap();
        assert!(r.infinite && r.capacity.is_infinite());
        assert_eq!(r.method, CapacityMethod::Analytic);
        assert!(r.to_json().contains("\"capacity\": null"));
    }
    let r = compute_ntc(&k2(1.0), &NtcOptions::default()).unwrap();
    assert!(r.infinite);
}

#[test]
fn system_design_respects_capacity() {
    let p = Plant::canonical_scalar(Graph::cycle(6).unwrap(), 1.0).unwrap();
    let c = compute_ntc(&p, &NtcOptions::default()).unwrap().capacity;
    let inside = p.with_instability(0.5 * (1.0 + c)).unwrap();
    let d = design_for_system(&inside, &NtcOptions::default()).unwrap();
    assert!(inside.instability() * spectral_norm(&contraction_matrix(&inside, &d).unwrap()) < 1.0);
    let outside = p.with_instability(1.05 * c).unwrap();
    assert!(matches!(design_for_system(&outside, &NtcOptions::default()), Err(Error::CapacityExceeded { .. })));
}

#[test]
fn performance_design_does_not_worsen_the_bound() {
    let p = Plant::canonical_scalar(Graph::cycle(5).unwrap(), 1.0).unwrap();
    let c = compute_ntc(&p, &NtcOptions::default()).unwrap().capacity;
    let p = p.with_instability(0.5 * (1.0 + c)).unwrap();
    let r = performance_design(&p, &PerformanceOptions::default()).unwrap();
    assert!(r.objective <= r.warm_start_objective * (1.0 + 1e-12));
    assert!(p.instability() * r.contraction_norm < 1.0);
    let chain = bound_chain(&p, &r.design).unwrap();
    assert!(chain.holds(1e-9), "{chain:?}");
    assert!(chain.residual <= 1e-8 * chain.exact.max(1.0));
}
