use magspec::counting::{bracketing_counts, count_below};
use magspec::eigencore::{dense_sym_eigen, lanczos, sturm_count, tridiag_eigenvalues, LanczosOptions, Tridiag};
use magspec::semiclassics::{fit_points, quantized_hessian_levels};
use magspec::specialfn::{delta_spectrum, lambert_w0, lambert_wm1};
use proptest::prelude::*;

fn tridiag() -> impl Strategy<Value = Tridiag> {
    (2usize..=100).prop_flat_map(|n| {
        (prop::collection::vec(-3.0..3.0f64, n), prop::collection::vec(-1.5..1.5f64, n - 1))
            .prop_map(|(d, e)| Tridiag::new(d, e).unwrap())
    })
}

fn weighted_tridiag() -> impl Strategy<Value = Tridiag> {
    (2usize..=60).prop_flat_map(|n| {
        (
            prop::collection::vec(-3.0..3.0f64, n),
            prop::collection::vec(-1.5..1.5f64, n - 1),
            prop::collection::vec(0.25..2.0f64, n),
        )
            .prop_map(|(d, e, w)| Tridiag::weighted(d, e, Some(w)).unwrap())
    })
}

fn dense_count(t: &Tridiag, e: f64) -> usize {
    let s = dense_sym_eigen(&t.to_dense_reduced()).unwrap();
    s.eigenvalues.iter().zip(&s.multiplicities).filter(|(v, _)| **v < e).map(|(_, m)| m).sum()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn sturm_count_matches_dense(t in tridiag(), e in -4.0..4.0f64) {
        prop_assert_eq!(sturm_count(&t, e).unwrap(), dense_count(&t, e));
    }

    #[test]
    fn weighted_sturm_count_matches_dense(t in weighted_tridiag(), e in -4.0..4.0f64) {
        prop_assert_eq!(sturm_count(&t, e).unwrap(), dense_count(&t, e));
    }

    #[test]
    fn count_below_is_monotone(t in tridiag(), a in -4.0..4.0f64, b in -4.0..4.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(count_below(&t, lo).unwrap() <= count_below(&t, hi).unwrap());
    }

    #[test]
    fn bisection_values_are_dense_values(t in tridiag()) {
        let k = t.len().min(5);
        let bis = tridiag_eigenvalues(&t, k, 1e-13).unwrap();
        let dense = dense_sym_eigen(&t.to_dense_reduced()).unwrap();
        let mut all: Vec<f64> = dense.eigenvalues.iter().zip(&dense.multiplicities)
            .flat_map(|(v, m)| std::iter::repeat(*v).take(*m)).collect();
        all.truncate(k);
        let mut merged: Vec<f64> = Vec::new();
        for v in all {
            if merged.last().is_none_or(|l| (v - l).abs() > 1e-8 * v.abs().max(1.0)) {
                merged.push(v);
            }
        }
        for (a, b) in bis.eigenvalues.iter().zip(&merged) {
            prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn lambert_round_trip(y in -0.3678794411714423..1e6f64) {
        let w = lambert_w0(y).unwrap();
        prop_assert!((w * w.exp() - y).abs() <= 1e-14 * y.abs().max(1.0));
    }

    #[test]
    fn lambert_lower_branch_round_trip(y in -0.3678794411714423..-1e-300f64) {
        let w = lambert_wm1(y).unwrap();
        prop_assert!(w <= -1.0);
        prop_assert!((w * w.exp() - y).abs() <= 1e-14 * y.abs().max(1.0));
    }

    #[test]
    fn delta_levels_stay_in_their_bands(x in 0.0..30.0f64) {
        let p = delta_spectrum(x).unwrap();
        prop_assert!(p.mu1 >= -1.0 && p.mu1 < -0.25);
        if x > 1.0 {
            prop_assert!(p.mu2 > -0.25);
        } else {
            prop_assert_eq!(p.mu2, 0.0);
        }
    }

    #[test]
    fn fit_recovers_planted_coefficients(c in prop::array::uniform3(-2.0..2.0f64)) {
        let hs: [f64; 5] = [0.04, 0.02, 0.01, 0.005, 0.0025];
        let e = [0.0, 2.0 / 3.0, 4.0 / 3.0];
        let vals: Vec<f64> = hs.iter().map(|h| c[0] + c[1] * h.powf(e[1]) + c[2] * h.powf(e[2])).collect();
        let f = fit_points(&hs, &vals, &e).unwrap();
        for (got, want) in f.coefficients.iter().zip(c) {
            prop_assert!((got - want).abs() <= 1e-9, "{} vs {}", got, want);
        }
    }

    #[test]
    fn quantized_levels_invariant_under_swap(a in 0.1..3.0f64, d in 0.1..3.0f64, t in -0.9..0.9f64) {
        let b = t * (a * d).sqrt();
        let h = [[a, b], [b, d]];
        let swapped = [[d, b], [b, a]];
        let l = quantized_hessian_levels(h, 1).unwrap();
        prop_assert!((l - quantized_hessian_levels(swapped, 1).unwrap()).abs() <= 1e-15);
        prop_assert!((quantized_hessian_levels(h, 3).unwrap() - 5.0 * l).abs() <= 1e-14);
    }

    #[test]
    fn bracketing_is_ordered(amp in 0.0..0.5f64, freq in 0.5..4.0f64, e in 0.1..0.9f64, cells in 2usize..12) {
        let v = move |x: f64| x * x / (1.0 + x * x) + amp * (freq * x).sin().powi(2);
        let cuts: Vec<f64> = (0..=cells).map(|i| -4.0 + 8.0 * i as f64 / cells as f64).collect();
        let b = bracketing_counts(&v, 0.02, e, &cuts, 0.005).unwrap();
        prop_assert!(b.lower <= b.exact && b.exact <= b.upper, "{:?}", b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn lanczos_agrees_with_bisection(seed in 0u64..1000, n in 150usize..400) {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        use rand::Rng;
        let d = (0..n).map(|i| (i as f64 * 0.05).sin() + rng.gen_range(0.0..2.0)).collect();
        let e = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = Tridiag::new(d, e).unwrap();
        let s = lanczos(&t, &LanczosOptions { k: 3, tol: 1e-9, max_matvecs: 300_000, seed, ..Default::default() }).unwrap();
        prop_assert!(s.meta.converged);
        let exact = tridiag_eigenvalues(&t, 3, 1e-14).unwrap();
        for (i, (a, b)) in s.eigenvalues.iter().zip(&exact.eigenvalues).enumerate() {
            prop_assert!((a - b).abs() <= 1e-9f64.max(s.residuals[i]), "{} vs {}", a, b);
        }
    }
}
