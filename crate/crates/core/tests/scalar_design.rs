mod common;

use common::{k2, random_coordinate_plant, random_observable_plant, rng};
use nettrack::linalg::{spectral_norm, sym_eigenvalues, Matrix};
use nettrack::scalar_design::{
    alpha_interval, build_q, interval_length, optimal_design, q_spectrum, scalar_bound_at_optimum, scalar_capacity,
    scalar_performance_bound, scalar_report,
};
use nettrack::{Error, Graph, Plant};
use proptest::prelude::*;

fn norm_i_minus(q: &Matrix, alpha: f64) -> f64 {
    let mut m = Matrix::identity(q.rows());
    m.add_scaled(q, -alpha);
    spectral_norm(&m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn closed_form_matches_dense_eigenvalues(seed in any::<u64>(), agents in 2usize..7, n in 1usize..3) {
        let p = random_observable_plant(&mut rng(seed), agents, n, 1.0);
        let ev = sym_eigenvalues(&build_q(&p)).unwrap();
        let r = scalar_capacity(&p).unwrap();
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        prop_assert!((r.lambda_min - lo).abs() <= 1e-10 * hi);
        prop_assert!((r.lambda_max - hi).abs() <= 1e-10 * hi);
        prop_assert!((r.c_alpha - (hi + lo) / (hi - lo)).abs() <= 1e-8 * r.c_alpha);
        prop_assert!(r.c_alpha > 1.0);
        prop_assert!((r.alpha_opt - 2.0 / (hi + lo)).abs() <= 1e-10 * r.alpha_opt);
        prop_assert!((norm_i_minus(&build_q(&p), r.alpha_opt) - r.min_norm).abs() <= 1e-9);
    }

    #[test]
    fn decoupled_spectrum_matches_dense(seed in any::<u64>(), agents in 2usize..8, n in 1usize..4) {
        let p = random_coordinate_plant(&mut rng(seed), agents, n, 1.0);
        let fast = q_spectrum(&p).unwrap();
        let dense = sym_eigenvalues(&build_q(&p)).unwrap();
        prop_assert!(fast.iter().zip(&dense).all(|(a, b)| (a - b).abs() <= 1e-10 * (1.0 + b.abs())));
    }

    #[test]
    fn interval_endpoints_hit_the_threshold(seed in any::<u64>(), agents in 2usize..7, frac in 0.05f64..0.95) {
        let p = random_observable_plant(&mut rng(seed), agents, 1, 1.0);
        let c = scalar_capacity(&p).unwrap().c_alpha;
        let a = 1.0 + frac * (c - 1.0);
        let q = build_q(&p);
        let iv = alpha_interval(&p, a).unwrap().unwrap();
        prop_assert!(iv.contains(scalar_capacity(&p).unwrap().alpha_opt));
        prop_assert!((a * norm_i_minus(&q, iv.hi) - 1.0).abs() <= 1e-9);
        if iv.lo > 0.0 {
            prop_assert!((a * norm_i_minus(&q, iv.lo) - 1.0).abs() <= 1e-9);
        }
        for alpha in iv.interior_points(7) {
            prop_assert!(a * norm_i_minus(&q, alpha) < 1.0);
        }
        prop_assert!((interval_length(&p, a).unwrap() - iv.length()).abs() <= 1e-12 * iv.length().max(1.0));
    }

    #[test]
    fn interval_shrinks_with_instability(seed in any::<u64>(), agents in 2usize..6) {
        let p = random_observable_plant(&mut rng(seed), agents, 1, 1.0);
        let c = scalar_capacity(&p).unwrap().c_alpha;
        let mut prev = f64::INFINITY;
        for k in 1..10 {
            let a = 1.0 + (c - 1.0) * k as f64 / 10.0;
            let len = interval_length(&p, a).unwrap();
            prop_assert!(len < prev);
            prev = len;
        }
        prop_assert!(alpha_interval(&p, c * 1.0001).unwrap().is_none());
    }

    #[test]
    fn performance_bound_forms_agree(seed in any::<u64>(), agents in 2usize..6, frac in 0.1f64..0.9) {
        let p = random_observable_plant(&mut rng(seed), agents, 1, 1.0);
        let c = scalar_capacity(&p).unwrap().c_alpha;
        let p = p.with_instability(1.0 + frac * (c - 1.0)).unwrap();
        let alpha = scalar_report(&p, p.instability()).unwrap().alpha_opt;
        let direct = scalar_performance_bound(&p, alpha).unwrap();
        let closed = scalar_bound_at_optimum(&p).unwrap();
        prop_assert!((direct - closed).abs() <= 1e-9 * direct);
    }
}

#[test]
fn k2_values() {
    let p = k2(2.0);
    assert_eq!(build_q(&p), Matrix::from_rows(&[[3.0, -1.0], [-1.0, 3.0]]).unwrap());
    let r = scalar_report(&p, 2.0).unwrap();
    assert!((r.c_alpha - 3.0).abs() < 1e-12);
    assert!((r.alpha_opt - 1.0 / 3.0).abs() < 1e-12);
    let iv = r.interval.unwrap();
    assert!((iv.lo - 0.25).abs() < 1e-12 && (iv.hi - 0.375).abs() < 1e-12);
    // a = 2, α = 1/3: ‖V‖ = 1, N = 2, ‖R̄‖ = 1, ‖I−αQ‖ = 1/3
    let expect = (1.0 + 4.0 / 9.0 * 2.0) / (1.0 - 4.0 / 9.0);
    assert!((scalar_performance_bound(&p, 1.0 / 3.0).unwrap() - expect).abs() < 1e-12);
    let d = optimal_design(&p).unwrap();
    assert!((d.alpha().unwrap() - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn degenerate_cases() {
    // no observations: λ_min = 0 and C_α = 1
    let p = Plant::unobserved(Graph::cycle(5).unwrap(), 2, 1.0).unwrap();
    let r = scalar_capacity(&p).unwrap();
    assert_eq!(r.c_alpha, 1.0);
    assert!(r.interval.is_none());
    // a at or above C_α
    let p = k2(3.0);
    assert!(matches!(interval_length(&p, 3.0), Err(Error::CapacityExceeded { .. })));
    assert!(matches!(scalar_bound_at_optimum(&p), Err(Error::CapacityExceeded { .. })));
    assert!(matches!(scalar_performance_bound(&p, 0.1), Err(Error::Unstable { .. })));
    // a < 1 leaves the lower end at zero
    let iv = alpha_interval(&k2(0.5), 0.5).unwrap().unwrap();
    assert_eq!(iv.lo, 0.0);
}
