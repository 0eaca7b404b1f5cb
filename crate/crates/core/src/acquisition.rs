//! Acquisition scores over a candidate posterior and argmax selection.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::domain::PosteriorBatch;
use crate::error::{Error, Result};
use crate::sampling::stream_rng;

/// Lower bound on the predictive standard deviation inside EI.
pub const EI_SIGMA_FLOOR: f64 = 1e-12;

const SAMPLING_STREAM: u64 = 0xac9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    #[default]
    UcbQuantile,
    UcbSampling,
    Ei,
}

impl AcquisitionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AcquisitionKind::UcbQuantile => "ucb_quantile",
            AcquisitionKind::UcbSampling => "ucb_sampling",
            AcquisitionKind::Ei => "ei",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionSpec {
    pub kind: AcquisitionKind,
    pub beta: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for AcquisitionSpec {
    fn default() -> Self {
        Self {
            kind: AcquisitionKind::UcbQuantile,
            beta: 2.33,
            samples: 512,
            seed: 0,
        }
    }
}

impl AcquisitionSpec {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            AcquisitionKind::UcbQuantile if !(self.beta > 0.0 && self.beta.is_finite()) => {
                Err(Error::InvalidConfig(format!("beta must be positive, got {}", self.beta)))
            }
            AcquisitionKind::UcbSampling if self.samples == 0 => {
                Err(Error::InvalidConfig("sampling UCB needs at least one draw".into()))
            }
            _ => Ok(()),
        }
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid parameters")
}

/// `Φ⁻¹(q)`, the UCB multiplier matching a one-sided Gaussian quantile.
pub fn beta_for_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile {q} not in (0, 1)")));
    }
    Ok(std_normal().inverse_cdf(q))
}

pub fn ucb_quantile(post: &PosteriorBatch, beta: f64) -> Vec<f64> {
    post.mean
        .iter()
        .zip(&post.var)
        .map(|(m, v)| m + beta * v.max(0.0).sqrt())
        .collect()
}

/// Maximum of `samples` independent posterior draws per candidate.
pub fn ucb_sampling(post: &PosteriorBatch, samples: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, SAMPLING_STREAM);
    post.mean
        .iter()
        .zip(&post.var)
        .map(|(m, v)| {
            let s = v.max(0.0).sqrt();
            (0..samples.max(1))
                .map(|_| m + s * rng.sample::<f64, _>(StandardNormal))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

pub fn expected_improvement(post: &PosteriorBatch, best_y: f64) -> Vec<f64> {
    let n = std_normal();
    post.mean
        .iter()
        .zip(&post.var)
        .map(|(m, v)| {
            let imp = m - best_y;
            let s = v.max(0.0).sqrt();
            if s == 0.0 {
                return imp.max(0.0);
            }
            let s = s.max(EI_SIGMA_FLOOR);
            let u = imp / s;
            (imp * n.cdf(u) + s * n.pdf(u)).max(0.0)
        })
        .collect()
}

/// Scores `post` under `spec`; `best_y` is only used by EI.
pub fn score(spec: &AcquisitionSpec, post: &PosteriorBatch, best_y: f64) -> Vec<f64> {
    match spec.kind {
        AcquisitionKind::UcbQuantile => ucb_quantile(post, spec.beta),
        AcquisitionKind::UcbSampling => ucb_sampling(post, spec.samples, spec.seed),
        AcquisitionKind::Ei => expected_improvement(post, best_y),
    }
}

/// Index of the first maximal score and the matching candidate row.
pub fn select_next(scores: &[f64], x_cand: &DMatrix<f64>) -> Result<(Vec<f64>, usize)> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("no candidates to select from".into()));
    }
    if scores.len() != x_cand.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x_cand.nrows(),
            got: scores.len(),
        });
    }
    if let Some(index) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::InvalidScore { index });
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok((x_cand.row(best).iter().copied().collect(), best))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(mean: Vec<f64>, var: Vec<f64>) -> PosteriorBatch {
        PosteriorBatch::new(mean, var, None).unwrap()
    }

    #[test]
    fn ucb_quantile_examples() {
        assert_eq!(ucb_quantile(&post(vec![0.0], vec![1.0]), 2.33), vec![2.33]);
        let s = ucb_quantile(&post(vec![1.0, 2.0], vec![9.0, 0.0]), 2.33);
        assert!((s[0] - 7.99).abs() < 1e-12);
        assert_eq!(s[1], 2.0);
    }

    #[test]
    fn sampling_degenerate_and_replay() {
        let p = post(vec![1.5, -2.0], vec![0.0, 0.0]);
        assert_eq!(ucb_sampling(&p, 64, 3), vec![1.5, -2.0]);
        let p = post(vec![0.0; 5], vec![1.0; 5]);
        assert_eq!(ucb_sampling(&p, 8, 11), ucb_sampling(&p, 8, 11));
        assert_ne!(ucb_sampling(&p, 8, 11), ucb_sampling(&p, 8, 12));
    }

    #[test]
    fn ei_examples() {
        let e = expected_improvement(&post(vec![0.0], vec![1.0]), 0.0);
        assert!((e[0] - 0.398_942_280_401_432_7).abs() < 1e-12);
        assert_eq!(expected_improvement(&post(vec![2.0], vec![0.0]), 1.0), vec![1.0]);
    }

    #[test]
    fn select_next_examples() {
        let x = DMatrix::from_row_slice(3, 1, &[0.1, 0.2, 0.3]);
        assert_eq!(select_next(&[1.0, 3.0, 2.0], &x).unwrap().1, 1);
        let x2 = DMatrix::from_row_slice(2, 1, &[0.1, 0.2]);
        assert_eq!(select_next(&[2.0, 2.0], &x2).unwrap(), (vec![0.1], 0));
        assert_eq!(select_next(&[5.0], &DMatrix::zeros(1, 2)).unwrap().1, 0);
        assert!(matches!(select_next(&[], &DMatrix::zeros(0, 1)), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            select_next(&[1.0, f64::NAN, 0.0], &x),
            Err(Error::InvalidScore { index: 1 })
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(AcquisitionSpec::default().validate().is_ok());
        let bad = AcquisitionSpec {
            beta: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = AcquisitionSpec {
            kind: AcquisitionKind::UcbSampling,
            samples: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
