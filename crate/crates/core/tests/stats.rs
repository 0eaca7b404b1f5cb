use gisbo::stats::{friedman_test, holm_correct, rank_report, rank_table, wilcoxon_signed_rank, Alternative, RunSummary};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// 3 algorithms × 4 problems of medians with a tie in the last problem.
fn toy() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 4, &[
        0.9, 0.2, 5.0, 1.0, //
        0.5, 0.7, 4.0, 1.0, //
        0.1, 0.4, 6.0, 0.0,
    ])
}

#[test]
fn toy_table_hand_ranks() {
    let want = DMatrix::from_row_slice(3, 4, &[
        1.0, 3.0, 2.0, 1.5, //
        2.0, 1.0, 3.0, 1.5, //
        3.0, 2.0, 1.0, 3.0,
    ]);
    assert_eq!(rank_table(&toy()), want);
}

#[test]
fn friedman_matches_direct_formula() {
    let r = rank_table(&toy());
    let (a, p) = (3.0, 4.0);
    let mean_ranks = [7.5 / 4.0, 7.5 / 4.0, 9.0 / 4.0];
    let raw: f64 = 12.0 * p / (a * (a + 1.0)) * mean_ranks.iter().map(|m| (m - 2.0f64).powi(2)).sum::<f64>();
    // One tie of size 2 in the last column.
    let c = 1.0 - (8.0 - 2.0) / (p * a * (a * a - 1.0));
    let stat = raw / c;
    let f = friedman_test(&r).unwrap();
    assert!((f.statistic - stat).abs() < 1e-10);
    let p_want = ChiSquared::new(2.0).unwrap().sf(stat);
    assert!((f.p_value - p_want).abs() < 1e-12);
}

#[test]
fn friedman_p_decreases_with_statistic() {
    let weak = rank_table(&DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]));
    let strong = rank_table(&DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]));
    let (w, s) = (friedman_test(&weak).unwrap(), friedman_test(&strong).unwrap());
    assert!(s.statistic > w.statistic);
    assert!(s.p_value < w.p_value);
}

fn enumerate_p(d: &[f64], alt: Alternative) -> f64 {
    let nz: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
    let n = nz.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| nz[a].abs().total_cmp(&nz[b].abs()));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nz[idx[j + 1]].abs() == nz[idx[i]].abs() {
            j += 1;
        }
        for &k in &idx[i..=j] {
            ranks[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    let w: f64 = (0..n).filter(|&k| nz[k] > 0.0).map(|k| ranks[k]).sum();
    let (mut ge, mut le) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        let s: f64 = (0..n).filter(|&k| mask >> k & 1 == 1).map(|k| ranks[k]).sum();
        if s >= w - 1e-9 {
            ge += 1;
        }
        if s <= w + 1e-9 {
            le += 1;
        }
    }
    let total = (1u64 << n) as f64;
    match alt {
        Alternative::Greater => ge as f64 / total,
        Alternative::Less => le as f64 / total,
        Alternative::TwoSided => (2.0 * (ge.min(le) as f64) / total).min(1.0),
    }
}

#[test]
fn exact_wilcoxon_agrees_with_enumeration() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for trial in 0..200 {
        let n = rng.random_range(1..=10);
        // Rounded values produce ties and occasional zero differences.
        let a: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 8.0).round()).collect();
        let b: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 8.0).round()).collect();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        if d.iter().all(|v| *v == 0.0) {
            continue;
        }
        for alt in [Alternative::TwoSided, Alternative::Greater, Alternative::Less] {
            let got = wilcoxon_signed_rank(&a, &b, alt).unwrap();
            assert!(got.exact);
            assert!((got.p_value - enumerate_p(&d, alt)).abs() < 1e-12, "trial {trial} {alt:?}");
        }
    }
}

#[test]
fn exact_and_normal_approximation_agree_at_twenty() {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    for _ in 0..20 {
        let a: Vec<f64> = (0..20).map(|_| rng.random::<f64>() + 0.1).collect();
        let b: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
        let exact = wilcoxon_signed_rank(&a, &b, Alternative::TwoSided).unwrap();
        assert!(exact.exact);
        // Continuity-corrected normal approximation computed by hand.
        let n = 20.0f64;
        let mean = n * (n + 1.0) / 4.0;
        let sd = (n * (n + 1.0) * (2.0 * n + 1.0) / 24.0).sqrt();
        let z = ((exact.statistic - mean).abs() - 0.5).max(0.0) / sd;
        let approx = 2.0 * statrs::distribution::Normal::new(0.0, 1.0).unwrap().sf(z);
        assert!((exact.p_value - approx.min(1.0)).abs() < 0.02, "{} vs {approx}", exact.p_value);
    }
}

#[test]
fn large_samples_use_approximation() {
    let a: Vec<f64> = (0..30).map(|i| i as f64 + 0.5).collect();
    let b: Vec<f64> = (0..30).map(|i| i as f64).collect();
    let w = wilcoxon_signed_rank(&a, &b, Alternative::TwoSided).unwrap();
    assert!(!w.exact);
    assert_eq!(w.n, 30);
    assert!(w.p_value < 1e-5);
}

#[test]
fn report_single_algorithm_skips_friedman() {
    let runs: Vec<RunSummary> = (0..3)
        .flat_map(|s| {
            ["p1:2", "p2:2"].map(|p| RunSummary {
                algorithm: "only".into(),
                problem: p.into(),
                seed: s,
                best_y: vec![s as f64],
            })
        })
        .collect();
    let r = rank_report(&runs, 0.05, Alternative::TwoSided).unwrap();
    assert!(r.friedman.is_none());
    assert!(r.ranks.iter().all(|v| *v == 1.0));
    assert!(r.pairwise.is_empty());
    assert!(!r.notes.is_empty());
}

proptest! {
    #[test]
    fn rank_columns_sum_to_triangular(vals in prop::collection::vec(0i32..5, 12)) {
        let m = DMatrix::from_fn(4, 3, |i, j| vals[i * 3 + j] as f64);
        let r = rank_table(&m);
        for col in r.column_iter() {
            prop_assert_eq!(col.sum(), 10.0);
        }
    }

    #[test]
    fn friedman_invariant_under_monotone_maps(vals in prop::collection::vec(-3.0f64..3.0, 12)) {
        let m = DMatrix::from_fn(3, 4, |i, j| vals[i * 4 + j]);
        let t = m.map(|v| v.exp() * 7.0 + 1.0);
        let (a, b) = (friedman_test(&rank_table(&m)).unwrap(), friedman_test(&rank_table(&t)).unwrap());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn holm_is_monotone_in_alpha(ps in prop::collection::vec(0.0f64..1.0, 0..10), a1 in 0.0f64..0.5, a2 in 0.0f64..0.5) {
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let (rl, rh) = (holm_correct(&ps, lo), holm_correct(&ps, hi));
        for (l, h) in rl.iter().zip(&rh) {
            prop_assert!(!l || *h);
        }
    }
}
