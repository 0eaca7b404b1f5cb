use gisbo::acquisition::{beta_for_quantile, expected_improvement, ucb_quantile, ucb_sampling};
use gisbo::PosteriorBatch;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// Standard normal CDF by composite Simpson integration of the density.
fn phi_cdf(x: f64) -> f64 {
    let n = 20_000;
    let h = x / n as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(0.0) + pdf(x);
    for k in 1..n {
        s += pdf(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    0.5 + s * h / 3.0
}

fn inverse_by_bisection(q: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if phi_cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn post(mean: Vec<f64>, var: Vec<f64>) -> PosteriorBatch {
    PosteriorBatch::new(mean, var, None).unwrap()
}

#[test]
fn default_beta_is_the_99_percent_quantile() {
    let oracle = inverse_by_bisection(0.99);
    let b = beta_for_quantile(0.99).unwrap();
    assert!((b - oracle).abs() < 1e-6);
    assert!((oracle - 2.3263).abs() < 1e-3);
    // 2.33 is the two-decimal rounding of this quantile.
    assert!((2.33 - oracle).abs() < 5e-3);
}

#[test]
fn sampling_ucb_matches_monte_carlo_expected_max() {
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let reps = 10_000;
    let oracle: f64 = (0..reps)
        .map(|_| (0..512).map(|_| rng.sample::<f64, _>(StandardNormal)).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / reps as f64;
    let p = post(vec![0.0; reps], vec![1.0; reps]);
    let scores = ucb_sampling(&p, 512, 5);
    let mean = scores.iter().sum::<f64>() / reps as f64;
    assert!((mean - oracle).abs() < 0.02, "{mean} vs {oracle}");
    assert_eq!(scores, ucb_sampling(&p, 512, 5));
}

#[test]
fn single_draw_is_a_posterior_sample() {
    let p = post(vec![3.0; 20_000], vec![4.0; 20_000]);
    let s = ucb_sampling(&p, 1, 8);
    let m = s.iter().sum::<f64>() / s.len() as f64;
    let v = s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (s.len() - 1) as f64;
    assert!((m - 3.0).abs() < 0.05 && (v - 4.0).abs() < 0.15, "{m} {v}");
}

proptest! {
    #[test]
    fn ei_lower_bounds(mean in prop::collection::vec(-5.0f64..5.0, 1..30), seed in 0u64..1000, best in -3.0f64..3.0) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let var: Vec<f64> = mean.iter().map(|_| rng.random::<f64>() * 4.0).collect();
        let e = expected_improvement(&post(mean.clone(), var), best);
        for (ei, m) in e.iter().zip(&mean) {
            prop_assert!(*ei >= 0.0);
            prop_assert!(*ei >= m - best - 1e-12);
        }
    }

    #[test]
    fn scores_are_monotone_in_the_mean(mu in -5.0f64..5.0, bump in 0.0f64..3.0, var in 0.0f64..4.0, best in -3.0f64..3.0) {
        let lo = post(vec![mu], vec![var]);
        let hi = post(vec![mu + bump], vec![var]);
        prop_assert!(ucb_quantile(&hi, 2.33)[0] >= ucb_quantile(&lo, 2.33)[0]);
        prop_assert!(expected_improvement(&hi, best)[0] >= expected_improvement(&lo, best)[0]);
        prop_assert!(ucb_sampling(&hi, 16, 3)[0] >= ucb_sampling(&lo, 16, 3)[0]);
    }

    #[test]
    fn ucb_translation_equivariance(mean in prop::collection::vec(-5.0f64..5.0, 1..20), c in -10.0f64..10.0) {
        let var: Vec<f64> = mean.iter().map(|m| m.abs()).collect();
        let base = ucb_quantile(&post(mean.clone(), var.clone()), 1.7);
        let shifted = ucb_quantile(&post(mean.iter().map(|m| m + c).collect(), var), 1.7);
        for (a, b) in base.iter().zip(&shifted) {
            prop_assert!((b - a - c).abs() < 1e-12);
        }
    }
}
