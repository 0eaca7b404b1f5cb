use gisbo::sampling::{self, sobol, CubeScheme};
use gisbo::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Star discrepancy restricted to anchored boxes with corners on a g×g grid.
fn grid_star_discrepancy(pts: &[(f64, f64)], g: usize) -> f64 {
    let n = pts.len() as f64;
    let mut worst: f64 = 0.0;
    for i in 1..=g {
        for j in 1..=g {
            let (a, b) = (i as f64 / g as f64, j as f64 / g as f64);
            let inside = pts.iter().filter(|(x, y)| *x < a && *y < b).count() as f64;
            worst = worst.max((inside / n - a * b).abs());
        }
    }
    worst
}

#[test]
fn lhs_stratification_exhaustive() {
    for n in 1..=64 {
        for d in 1..=16 {
            let b = sampling::lhs(n, d, (n * 131 + d) as u64).unwrap();
            for j in 0..d {
                let mut hit = vec![false; n];
                for i in 0..n {
                    let v = b.points[(i, j)];
                    assert!((0.0..1.0).contains(&v));
                    hit[(v * n as f64).floor() as usize] = true;
                }
                assert!(hit.iter().all(|h| *h), "n={n} d={d} column {j}");
            }
        }
    }
}

#[test]
fn lhs_edge_cases() {
    assert!(matches!(sampling::lhs(0, 2, 0), Err(Error::InvalidArgument(_))));
    let one = sampling::lhs(1, 3, 5).unwrap();
    assert_eq!(one.points.shape(), (1, 3));
    assert_eq!(sampling::lhs(7, 3, 9).unwrap(), sampling::lhs(7, 3, 9).unwrap());
}

#[test]
fn sobol_beats_pseudo_random_discrepancy() {
    let s = sampling::sobol(256, 2, 17).unwrap();
    let pts: Vec<(f64, f64)> = (0..256).map(|i| (s.points[(i, 0)], s.points[(i, 1)])).collect();
    let d_sobol = grid_star_discrepancy(&pts, 64);

    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let mut total = 0.0;
    for _ in 0..100 {
        let pts: Vec<(f64, f64)> = (0..256).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
        total += grid_star_discrepancy(&pts, 64);
    }
    let d_random = total / 100.0;
    assert!(d_sobol < d_random, "sobol {d_sobol} vs random {d_random}");
}

#[test]
fn sobol_range_empty_and_limits() {
    assert_eq!(sampling::sobol(0, 4, 1).unwrap().len(), 0);
    let b = sampling::sobol(512, 30, 3).unwrap();
    assert!(b.points.iter().all(|v| (0.0..1.0).contains(v)));
    assert!(matches!(
        sampling::sobol(4, sobol::MAX_DIM + 1, 0),
        Err(Error::UnsupportedDimension { .. })
    ));
    assert_eq!(sampling::sobol(64, 5, 8).unwrap(), sampling::sobol(64, 5, 8).unwrap());
}

#[test]
fn cube_mean_and_range() {
    for scheme in [CubeScheme::Uniform, CubeScheme::Random, CubeScheme::Sobol] {
        let b = sampling::uniform_cube(100_000, 1, 77, scheme).unwrap();
        let mean = b.points.iter().sum::<f64>() / 1e5;
        assert!(mean.abs() < 0.02, "{scheme:?} mean {mean}");
        let b = sampling::uniform_cube(1000, 6, 5, scheme).unwrap();
        assert!(b.points.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

#[test]
fn cube_sobol_is_affine_image() {
    let z = sampling::uniform_cube(128, 4, 21, CubeScheme::Sobol).unwrap();
    let s = sampling::sobol(128, 4, 21).unwrap();
    for (a, b) in z.points.iter().zip(s.points.iter()) {
        assert_eq!(*a, 2.0 * b - 1.0);
    }
}

#[test]
fn uniform_and_random_are_distinct_streams() {
    let a = sampling::uniform_cube(16, 2, 1, CubeScheme::Uniform).unwrap();
    let b = sampling::uniform_cube(16, 2, 1, CubeScheme::Random).unwrap();
    assert_ne!(a.points, b.points);
    assert!(sampling::uniform_cube(4, 0, 1, CubeScheme::Uniform).is_err());
}
