use proptest::prelude::*;
use randrb::{chi2_fail_bound, chi2_fail_exact, draw_sketch, select_sample_count, sketch_norm, CovarianceSpec};

fn two_digits(x: f64, t: f64) -> bool {
    (x - t).abs() < 10f64.powf(t.log10().floor() - 1.0)
}

#[test]
fn tabulated_failure_probabilities() {
    assert!(two_digits(chi2_fail_bound(2.0, 10).unwrap(), 1.4e-1));
    assert!(two_digits(chi2_fail_bound(5.0, 3).unwrap(), 3.5e-2));
    assert!(two_digits(chi2_fail_exact(2.0, 10).unwrap(), 9.1e-3));
    assert!(two_digits(chi2_fail_exact(10.0, 3).unwrap(), 1.3e-3));
    assert!(two_digits(chi2_fail_exact(50.0, 10).unwrap(), 2.6e-16));
    assert!(two_digits(chi2_fail_bound(50.0, 10).unwrap(), 1.5e-15));
    assert!(two_digits(chi2_fail_exact(1.1, 3).unwrap(), 8.2e-1));
    assert!(chi2_fail_bound(1.1, 3).is_err());
}

#[test]
fn bound_at_e_is_a_power_of_e() {
    for m in 2..8 {
        let b = chi2_fail_bound(std::f64::consts::E, 2 * m).unwrap();
        assert!((b - (-(m as f64)).exp()).abs() < 1e-14);
    }
}

#[test]
fn degenerate_interval_always_fails() {
    for k in [1, 3, 17] {
        assert_eq!(chi2_fail_exact(1.0, k).unwrap(), 1.0);
    }
}

#[test]
fn tabulated_sample_counts() {
    assert_eq!(select_sample_count(1_000, 1e-2, 2.0).unwrap(), 60);
    assert_eq!(select_sample_count(1, 1e-2, 10.0).unwrap(), 3);
    assert_eq!(select_sample_count(1_000_000_000, 1e-4, 10.0).unwrap(), 17);
    assert_eq!(select_sample_count(1_000_000, 1e-2, 4.0).unwrap(), 21);
    assert_eq!(select_sample_count(1, 1e-4, 2.0).unwrap(), 48);
    assert_eq!(select_sample_count(1_000_000_000, 1e-2, 2.0).unwrap(), 132);
}

#[test]
fn selected_count_meets_the_union_bound() {
    for &m in &[1u64, 10, 1000, 1_000_000] {
        for &delta in &[1e-1, 1e-2, 1e-4] {
            for &w in &[2.0, 4.0, 10.0] {
                let k = select_sample_count(m, delta, w).unwrap();
                assert!(m as f64 * chi2_fail_bound(w, k).unwrap() <= delta * (1.0 + 1e-12));
                if k > 3 {
                    assert!(m as f64 * chi2_fail_bound(w, k - 1).unwrap() > delta);
                }
            }
        }
    }
}

#[test]
fn empirical_failure_rate_matches_exact() {
    let (w, k, draws) = (2.0, 3u32, 4000u64);
    let v = [1.0, -2.0, 0.5];
    let cov = CovarianceSpec::<f64>::identity(3);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let fails = (0..draws)
        .filter(|&s| {
            let sk = draw_sketch(&cov, k, s).unwrap();
            let r = sketch_norm(&sk, &v).unwrap() / norm;
            !(r >= 1.0 / w && r <= w)
        })
        .count();
    let p = chi2_fail_exact(w, k).unwrap();
    let sd = (p * (1.0 - p) / draws as f64).sqrt();
    assert!((fails as f64 / draws as f64 - p).abs() < 4.0 * sd, "{fails} vs {p}");
}

proptest! {
    #[test]
    fn bound_dominates_exact(w in 1.7f64..60.0, k in 3u32..40) {
        let exact = chi2_fail_exact(w, k).unwrap();
        let bound = chi2_fail_bound(w, k).unwrap();
        prop_assert!(exact <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn exact_decreases_in_w(w in 1.0f64..30.0, dw in 0.01f64..5.0, k in 1u32..30) {
        prop_assert!(chi2_fail_exact(w + dw, k).unwrap() <= chi2_fail_exact(w, k).unwrap() + 1e-15);
    }

    #[test]
    fn sample_count_grows_with_demand(m in 1u64..1_000_000_000, e in 1.0f64..6.0, w in 1.8f64..20.0) {
        let delta = 10f64.powf(-e);
        let k = select_sample_count(m, delta, w).unwrap();
        prop_assert!(k >= 3);
        prop_assert!(select_sample_count(m.saturating_mul(10), delta, w).unwrap() >= k);
        prop_assert!(select_sample_count(m, delta / 10.0, w).unwrap() >= k);
        prop_assert!(select_sample_count(m, delta, w * 1.5).unwrap() <= k);
    }
}
