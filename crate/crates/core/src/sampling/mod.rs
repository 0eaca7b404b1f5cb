//! Initialization designs and candidate generators.
//!
//! Every generator is a pure function of its arguments: the same
//! `(n, dim, seed, scheme)` always yields a bit-identical batch.

pub mod sobol;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleScheme {
    Lhs,
    Sobol,
    Uniform,
    Random,
}

/// How subspace coefficients `z` are drawn from `[-1, 1]^r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CubeScheme {
    #[default]
    Uniform,
    Random,
    Sobol,
}

impl CubeScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            CubeScheme::Uniform => "uniform",
            CubeScheme::Random => "random",
            CubeScheme::Sobol => "sobol",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    /// `n x k` matrix, one point per row.
    pub points: DMatrix<f64>,
    pub scheme: SampleScheme,
    pub seed: u64,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.points
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

/// Deterministic generator for an independent stream derived from `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes several integers into one seed (splitmix64 finalizer per word).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

const LHS_STREAM: u64 = 1;
const UNIFORM_STREAM: u64 = 2;
const RANDOM_STREAM: u64 = 3;

/// Latin hypercube design: in every coordinate each stratum `[k/n, (k+1)/n)`
/// holds exactly one point.
pub fn lhs(n: usize, dim: usize, seed: u64) -> Result<SampleBatch> {
    if n == 0 || dim == 0 {
        return Err(invalid("lhs requires n >= 1 and dim >= 1"));
    }
    let mut rng = stream_rng(seed, LHS_STREAM);
    let mut points = DMatrix::zeros(n, dim);
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..dim {
        // Fisher-Yates
        for i in (1..n).rev() {
            let k = rng.random_range(0..=i);
            perm.swap(i, k);
        }
        for (i, &stratum) in perm.iter().enumerate() {
            let u: f64 = rng.random();
            let hi = ((stratum + 1) as f64 / n as f64).next_down();
            points[(i, j)] = ((stratum as f64 + u) / n as f64).min(hi);
        }
    }
    Ok(SampleBatch {
        points,
        scheme: SampleScheme::Lhs,
        seed,
    })
}

/// Owen-scrambled Sobol points in `[0, 1)^dim`.
pub fn sobol(n: usize, dim: usize, seed: u64) -> Result<SampleBatch> {
    let rows = sobol::scrambled(n, dim, seed)?;
    Ok(SampleBatch {
        points: DMatrix::from_fn(n, dim, |i, j| rows[i][j]),
        scheme: SampleScheme::Sobol,
        seed,
    })
}

/// I.i.d. uniform points in `[0, 1)^dim`.
pub fn uniform_unit(n: usize, dim: usize, seed: u64) -> Result<SampleBatch> {
    if dim == 0 {
        return Err(invalid("uniform sampling requires dim >= 1"));
    }
    let mut rng = stream_rng(seed, UNIFORM_STREAM);
    let points = DMatrix::from_fn(n, dim, |_, _| rng.random::<f64>());
    Ok(SampleBatch {
        points,
        scheme: SampleScheme::Uniform,
        seed,
    })
}

/// Coefficients in `[-1, 1]^r` for subspace candidates.
///
/// `Uniform` and `Random` are both i.i.d. uniform; they draw from different
/// streams so that callers can key `Uniform` to the trial seed and `Random`
/// to a fresh per-iteration seed. `Sobol` is `2 * sobol - 1` on the same seed.
pub fn uniform_cube(n: usize, r: usize, seed: u64, scheme: CubeScheme) -> Result<SampleBatch> {
    if r == 0 {
        return Err(invalid("subspace dimension must be >= 1"));
    }
    let (points, tag) = match scheme {
        CubeScheme::Uniform | CubeScheme::Random => {
            let stream = if scheme == CubeScheme::Uniform {
                UNIFORM_STREAM
            } else {
                RANDOM_STREAM
            };
            let mut rng = stream_rng(seed, stream);
            let pts = DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..=1.0));
            let tag = if scheme == CubeScheme::Uniform {
                SampleScheme::Uniform
            } else {
                SampleScheme::Random
            };
            (pts, tag)
        }
        CubeScheme::Sobol => {
            let base = sobol(n, r, seed)?;
            (base.points.map(|v| 2.0 * v - 1.0), SampleScheme::Sobol)
        }
    };
    Ok(SampleBatch {
        points,
        scheme: tag,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strata_ok(batch: &SampleBatch) -> bool {
        let n = batch.len();
        (0..batch.points.ncols()).all(|j| {
            let mut seen = vec![false; n];
            for i in 0..n {
                let v = batch.points[(i, j)];
                let k = (v * n as f64).floor() as usize;
                if k >= n || seen[k] || v < k as f64 / n as f64 {
                    return false;
                }
                seen[k] = true;
            }
            true
        })
    }

    #[test]
    fn lhs_quartiles() {
        let b = lhs(4, 1, 7).unwrap();
        assert!(strata_ok(&b));
    }

    #[test]
    fn lhs_single_point() {
        let b = lhs(1, 3, 7).unwrap();
        assert_eq!(b.len(), 1);
        assert!(b.points.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn lhs_stratification_exhaustive() {
        for n in 1..=64 {
            for d in 1..=16 {
                let b = lhs(n, d, (n * 31 + d) as u64).unwrap();
                assert!(strata_ok(&b), "n={n} d={d}");
            }
        }
    }

    #[test]
    fn lhs_rejects_empty() {
        assert!(lhs(0, 2, 0).is_err());
    }

    #[test]
    fn generators_replay() {
        assert_eq!(lhs(5, 3, 9).unwrap(), lhs(5, 3, 9).unwrap());
        assert_eq!(sobol(5, 3, 9).unwrap(), sobol(5, 3, 9).unwrap());
        for s in [CubeScheme::Uniform, CubeScheme::Random, CubeScheme::Sobol] {
            assert_eq!(
                uniform_cube(7, 2, 3, s).unwrap(),
                uniform_cube(7, 2, 3, s).unwrap()
            );
        }
    }

    #[test]
    fn sobol_empty_and_range() {
        assert!(sobol(0, 3, 1).unwrap().is_empty());
        let b = sobol(512, 5, 1).unwrap();
        assert!(b.points.iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn sobol_cube_is_affine_image() {
        let base = sobol(64, 3, 11).unwrap();
        let cube = uniform_cube(64, 3, 11, CubeScheme::Sobol).unwrap();
        for (a, b) in base.points.iter().zip(cube.points.iter()) {
            assert_eq!(*b, 2.0 * a - 1.0);
        }
    }

    #[test]
    fn cube_range() {
        for s in [CubeScheme::Uniform, CubeScheme::Random, CubeScheme::Sobol] {
            let b = uniform_cube(1000, 4, 5, s).unwrap();
            assert!(b.points.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        assert!(uniform_cube(3, 0, 1, CubeScheme::Uniform).is_err());
    }

    #[test]
    fn uniform_cube_mean_near_zero() {
        // sd of the mean is 1/sqrt(3e5) ~ 0.0018, so 0.02 is > 10 sigma.
        for s in [CubeScheme::Uniform, CubeScheme::Random] {
            let b = uniform_cube(100_000, 1, 17, s).unwrap();
            let mean = b.points.iter().sum::<f64>() / 100_000.0;
            assert!(mean.abs() < 0.02, "{s:?} mean {mean}");
        }
    }

    #[test]
    fn uniform_and_random_streams_differ() {
        let a = uniform_cube(8, 2, 5, CubeScheme::Uniform).unwrap();
        let b = uniform_cube(8, 2, 5, CubeScheme::Random).unwrap();
        assert_ne!(a.points, b.points);
    }
}
