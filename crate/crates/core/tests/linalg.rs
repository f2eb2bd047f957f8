mod common;

use common::{gaussian, random_psd, rng};
use nettrack::linalg::{
    dlyap, dlyap_residual, eigenvalues, kron, project_row_stochastic, project_simplex, singular_values, spectral_norm,
    spectral_radius, sym_eigen, sym_eigenvalues, top_singular_pair, Matrix,
};
use proptest::prelude::*;

fn symmetric(seed: u64, n: usize) -> Matrix {
    let g = gaussian(&mut rng(seed), n, n);
    (&g + &g.transpose()).scale(0.5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigendecomposition_reconstructs(seed in any::<u64>(), n in 1usize..12) {
        let m = symmetric(seed, n);
        let s = sym_eigen(&m).unwrap();
        let q = s.vectors.clone().unwrap();
        let rebuilt = q.matmul(&Matrix::from_diag(&s.values)).matmul(&q.transpose());
        let scale = m.max_abs().max(1.0);
        prop_assert!((&rebuilt - &m).max_abs() <= 1e-10 * scale);
        prop_assert!((&q.transpose().matmul(&q) - &Matrix::identity(n)).max_abs() <= 1e-10);
        prop_assert!(s.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn trace_equals_eigenvalue_sum(seed in any::<u64>(), n in 1usize..12) {
        let m = symmetric(seed, n);
        let sum: f64 = sym_eigenvalues(&m).unwrap().iter().sum();
        prop_assert!((sum - m.trace()).abs() <= 1e-10 * m.max_abs().max(1.0) * n as f64);
    }

    #[test]
    fn spectral_norm_matches_gram_eigenvalue(seed in any::<u64>(), rows in 1usize..8, cols in 1usize..8) {
        let m = gaussian(&mut rng(seed), rows, cols);
        let gram = m.transpose().matmul(&m);
        let top = *sym_eigenvalues(&gram).unwrap().last().unwrap();
        let s = spectral_norm(&m);
        prop_assert!((s - top.max(0.0).sqrt()).abs() <= 1e-9 * s.max(1.0));
        prop_assert!(s <= m.frobenius_norm() * (1.0 + 1e-12));
        let sv = singular_values(&m);
        prop_assert!((sv.iter().cloned().fold(0.0, f64::max) - s).abs() <= 1e-9 * s.max(1.0));
        let (sigma, _, _) = top_singular_pair(&m, None, 2000);
        prop_assert!(sigma <= s * (1.0 + 1e-9));
    }

    #[test]
    fn spectral_radius_below_norm(seed in any::<u64>(), n in 1usize..9) {
        let m = gaussian(&mut rng(seed), n, n);
        let rho = spectral_radius(&m).unwrap();
        prop_assert!(rho <= spectral_norm(&m) * (1.0 + 1e-9));
        let ev = eigenvalues(&m).unwrap();
        prop_assert_eq!(ev.len(), n);
        let tr: f64 = ev.iter().map(|z| z.re).sum();
        prop_assert!((tr - m.trace()).abs() <= 1e-8 * m.max_abs().max(1.0) * n as f64);
    }

    #[test]
    fn symmetric_radius_is_largest_magnitude(seed in any::<u64>(), n in 1usize..9) {
        let m = symmetric(seed, n);
        let ev = sym_eigenvalues(&m).unwrap();
        let expect = ev.iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert!((spectral_radius(&m).unwrap() - expect).abs() <= 1e-9 * expect.max(1.0));
    }

    #[test]
    fn simplex_projection_is_nearest_point(v in prop::collection::vec(-5.0f64..5.0, 1..10), seed in any::<u64>()) {
        let p = project_simplex(&v);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let dist = |u: &[f64]| v.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let d = dist(&p);
        let mut r = rng(seed);
        for _ in 0..20 {
            let raw: Vec<f64> = gaussian(&mut r, v.len(), 1).data().iter().map(|x| x.abs()).collect();
            let total: f64 = raw.iter().sum();
            let u: Vec<f64> = raw.iter().map(|x| x / total).collect();
            prop_assert!(d <= dist(&u) + 1e-12);
        }
        let again = project_simplex(&p);
        prop_assert!(again.iter().zip(&p).all(|(a, b)| (a - b).abs() <= 1e-12));
    }

    #[test]
    fn dlyap_solves_the_equation(seed in any::<u64>(), n in 1usize..8, target in 0.1f64..0.95) {
        let mut r = rng(seed);
        let g = gaussian(&mut r, n, n);
        let p = g.scale(target / spectral_norm(&g).max(1e-12));
        let sigma = random_psd(&mut r, n, 0.1);
        let s = dlyap(&p, &sigma, 1e-15).unwrap();
        prop_assert!(dlyap_residual(&p, &sigma, &s) <= 1e-10 * spectral_norm(&s).max(1.0));
        prop_assert!(sym_eigenvalues(&s).unwrap()[0] >= -1e-10);
        // S dominates Σ
        prop_assert!(sym_eigenvalues(&(&s - &sigma)).unwrap()[0] >= -1e-10 * spectral_norm(&s));
    }

    #[test]
    fn kron_mixed_product(seed in any::<u64>(), a in 1usize..4, b in 1usize..4, c in 1usize..4) {
        let mut r = rng(seed);
        let (x, y) = (gaussian(&mut r, a, b), gaussian(&mut r, c, a));
        let (u, v) = (gaussian(&mut r, b, c), gaussian(&mut r, a, b));
        let lhs = kron(&x, &y).matmul(&kron(&u, &v));
        let rhs = kron(&x.matmul(&u), &y.matmul(&v));
        prop_assert!((&lhs - &rhs).max_abs() <= 1e-10 * rhs.max_abs().max(1.0));
        prop_assert!((spectral_norm(&kron(&x, &y)) - spectral_norm(&x) * spectral_norm(&y)).abs() <= 1e-8 * (1.0 + spectral_norm(&x) * spectral_norm(&y)));
    }

    #[test]
    fn inverse_of_well_conditioned(seed in any::<u64>(), n in 1usize..8) {
        let m = random_psd(&mut rng(seed), n, 1.0);
        let inv = m.inverse().unwrap();
        prop_assert!((&m.matmul(&inv) - &Matrix::identity(n)).max_abs() <= 1e-10);
    }
}

#[test]
fn row_stochastic_projection_respects_support() {
    let w = gaussian(&mut rng(1), 4, 4);
    let support: Vec<Vec<bool>> = (0..4).map(|i| (0..4).map(|j| (i + j) % 2 == 0).collect()).collect();
    let p = project_row_stochastic(&w, &support).unwrap();
    for i in 0..4 {
        let sum: f64 = (0..4).map(|j| p[(i, j)]).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for j in 0..4 {
            assert!(p[(i, j)] >= 0.0);
            if !support[i][j] {
                assert_eq!(p[(i, j)], 0.0);
            }
        }
    }
    let empty = vec![vec![false; 4]; 4];
    assert!(project_row_stochastic(&w, &empty).is_err());
}

#[test]
fn known_spectra() {
    let m = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
    let ev = sym_eigenvalues(&m).unwrap();
    assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
    // rotation by 90 degrees: eigenvalues ±i
    let r = Matrix::from_rows(&[[0.0, -1.0], [1.0, 0.0]]).unwrap();
    let ev = eigenvalues(&r).unwrap();
    assert!(ev.iter().all(|z| z.re.abs() < 1e-14 && (z.im.abs() - 1.0).abs() < 1e-14));
    assert!((spectral_radius(&r).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn dlyap_rejects_unstable() {
    let p = Matrix::from_diag(&[1.2, 0.1]);
    assert!(dlyap(&p, &Matrix::identity(2), 1e-15).is_err());
}
