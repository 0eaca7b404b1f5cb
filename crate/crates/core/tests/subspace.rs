use gisbo::subspace::{fisher_matrix, project_candidates, select_r, top_eigvecs, FisherMatrix, GiSubspace, RSelectionPolicy};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn orthogonal(d: usize, seed: u64) -> DMatrix<f64> {
    gaussian(d, d, seed).qr().q()
}

#[test]
fn fisher_matches_triple_loop() {
    let g = gaussian(100, 10, 1);
    let h = fisher_matrix(&g).unwrap();
    for a in 0..10 {
        for b in 0..10 {
            let mut s = 0.0;
            for j in 0..100 {
                s += g[(j, a)] * g[(j, b)];
            }
            assert!((h.h[(a, b)] - s / 100.0).abs() < 1e-12);
        }
    }
    assert_eq!(h.h, h.h.transpose());
}

#[test]
fn identity_eigvecs_satisfy_eigen_equation() {
    let h = FisherMatrix {
        h: DMatrix::identity(3, 3),
        sample_count: 1,
    };
    let (vals, vecs) = top_eigvecs(&h).unwrap();
    assert!(vals.iter().all(|v| (v - 1.0).abs() < 1e-12));
    let lhs = &h.h * &vecs;
    let rhs = &vecs * DMatrix::from_diagonal(&vals);
    assert!((lhs - rhs).norm() < 1e-12);
}

#[test]
fn spd_reconstruction_and_sign_rule() {
    for seed in 0..20 {
        let a = gaussian(5, 5, seed);
        let h = FisherMatrix {
            h: &a * a.transpose() + DMatrix::identity(5, 5) * 0.1,
            sample_count: 5,
        };
        let (vals, vecs) = top_eigvecs(&h).unwrap();
        assert!(vals.as_slice().windows(2).all(|w| w[0] >= w[1]));
        let rec = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert!((rec - &h.h).norm() <= 1e-10 * h.h.norm());
        assert!((vecs.transpose() * &vecs - DMatrix::identity(5, 5)).norm() < 1e-10);
        for col in vecs.column_iter() {
            let top = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(top > 0.0);
        }
    }
}

#[test]
fn rotation_equivariance() {
    let g = gaussian(200, 6, 3);
    let q = orthogonal(6, 4);
    let h = fisher_matrix(&g).unwrap().h;
    let hq = fisher_matrix(&(&g * q.transpose())).unwrap().h;
    assert!((&hq - &q * &h * q.transpose()).amax() < 1e-10);
    let (v1, _) = top_eigvecs(&FisherMatrix { h, sample_count: 200 }).unwrap();
    let (v2, _) = top_eigvecs(&FisherMatrix { h: hq, sample_count: 200 }).unwrap();
    assert!((v1 - v2).amax() < 1e-10);
}

#[test]
fn candidates_stay_in_affine_slab() {
    let g = gaussian(300, 8, 9);
    let x_ref = DVector::from_element(8, 0.5);
    let s = GiSubspace::from_gradients(&g, RSelectionPolicy::Fixed { r: 3 }, x_ref.clone()).unwrap();
    assert!((s.v_r.transpose() * &s.v_r - DMatrix::identity(3, 3)).amax() < 1e-8);
    let z = gaussian(50, 3, 10).map(|v| v.clamp(-1.0, 1.0));
    let x = s.project(&z, false).unwrap();
    let proj = DMatrix::identity(8, 8) - &s.v_r * s.v_r.transpose();
    for row in x.row_iter() {
        let diff = row.transpose() - &x_ref;
        assert!((&proj * diff).norm() <= 1e-10);
    }
}

#[test]
fn full_rank_subspace_spans_everything() {
    let g = gaussian(400, 5, 12);
    let s = GiSubspace::from_gradients(&g, RSelectionPolicy::Fixed { r: 5 }, DVector::from_element(5, 0.5)).unwrap();
    let p = &s.v_r * s.v_r.transpose();
    assert!((p - DMatrix::identity(5, 5)).amax() <= 1e-10);
}

#[test]
fn projection_shape_errors() {
    let x_ref = DVector::from_element(3, 0.5);
    assert!(project_candidates(&x_ref, &DMatrix::zeros(2, 1), &DMatrix::zeros(1, 1), true).is_err());
}

proptest! {
    #[test]
    fn select_r_is_monotone_in_threshold(
        mut ev in prop::collection::vec(0.0f64..10.0, 1..20),
        t1 in 0.01f64..0.99,
        t2 in 0.01f64..0.99,
    ) {
        ev.sort_by(|a, b| b.total_cmp(a));
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let r_lo = select_r(&ev, RSelectionPolicy::VarianceExplained { threshold: lo });
        let r_hi = select_r(&ev, RSelectionPolicy::VarianceExplained { threshold: hi });
        prop_assert!(r_lo <= r_hi);
        prop_assert!(r_hi >= 1 && r_hi <= ev.len());
    }
}
