//! Synthetic test functions, shifted variants, and low-dimensional functions
//! embedded in a larger space.
//!
//! Functions are written in their usual minimization form over raw bounds;
//! [`Problem::evaluate`] takes unit-cube input and returns the negated value
//! so the optimizer always maximizes.

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::domain::SearchDomain;
use crate::error::{Error, Result};
use crate::sampling::stream_rng;

const SHIFT_STREAM: u64 = 0x5a1f7;
const EMBED_STREAM: u64 = 0xe3bed;

/// Minimizer of the one-dimensional Styblinski-Tang term.
pub const STYBLINSKI_TANG_ARGMIN: f64 = -2.903_534_027_771_177_6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Ackley,
    Rosenbrock,
    DixonPrice,
    Levy,
    Powell,
    Griewank,
    Rastrigin,
    StyblinskiTang,
    Michalewicz,
    Branin,
}

impl Family {
    /// The nine scalable families of the main benchmark suite.
    pub const SCALABLE: [Family; 9] = [
        Family::Ackley,
        Family::Rosenbrock,
        Family::DixonPrice,
        Family::Levy,
        Family::Powell,
        Family::Griewank,
        Family::Rastrigin,
        Family::StyblinskiTang,
        Family::Michalewicz,
    ];

    pub const SHIFTABLE: [Family; 5] = [
        Family::Ackley,
        Family::Griewank,
        Family::Powell,
        Family::Rastrigin,
        Family::Rosenbrock,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Ackley => "ackley",
            Family::Rosenbrock => "rosenbrock",
            Family::DixonPrice => "dixon_price",
            Family::Levy => "levy",
            Family::Powell => "powell",
            Family::Griewank => "griewank",
            Family::Rastrigin => "rastrigin",
            Family::StyblinskiTang => "styblinski_tang",
            Family::Michalewicz => "michalewicz",
            Family::Branin => "branin",
        }
    }

    /// Raw box, identical in every coordinate except for Branin.
    pub fn bounds(&self, dim: usize) -> Result<SearchDomain> {
        let (lo, hi) = match self {
            Family::Ackley => (-32.768, 32.768),
            Family::Rosenbrock => (-5.0, 10.0),
            Family::DixonPrice | Family::Levy => (-10.0, 10.0),
            Family::Powell => (-4.0, 5.0),
            Family::Griewank => (-600.0, 600.0),
            Family::Rastrigin => (-5.12, 5.12),
            Family::StyblinskiTang => (-5.0, 5.0),
            Family::Michalewicz => (0.0, PI),
            Family::Branin => return SearchDomain::new(vec![-5.0, 0.0], vec![10.0, 15.0]),
        };
        SearchDomain::uniform(dim, lo, hi)
    }

    pub fn min_dim(&self) -> usize {
        match self {
            Family::Rosenbrock | Family::Branin => 2,
            Family::Powell => 4,
            _ => 1,
        }
    }

    pub fn max_dim(&self) -> Option<usize> {
        matches!(self, Family::Branin).then_some(2)
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim < self.min_dim() || self.max_dim().is_some_and(|m| dim > m) {
            return Err(Error::InvalidArgument(format!(
                "{} is not defined for dimension {dim}",
                self.as_str()
            )));
        }
        Ok(())
    }

    /// Minimization-form value at a raw point.
    pub fn raw_value(&self, x: &[f64]) -> f64 {
        let d = x.len() as f64;
        match self {
            Family::Ackley => {
                let (a, b, c) = (20.0, 0.2, 2.0 * PI);
                let sq = x.iter().map(|v| v * v).sum::<f64>() / d;
                let cs = x.iter().map(|v| (c * v).cos()).sum::<f64>() / d;
                -a * (-b * sq.sqrt()).exp() - cs.exp() + a + E
            }
            Family::Rosenbrock => x
                .windows(2)
                .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (w[0] - 1.0).powi(2))
                .sum(),
            Family::DixonPrice => {
                let head = (x[0] - 1.0).powi(2);
                head + x
                    .windows(2)
                    .enumerate()
                    .map(|(k, w)| (k + 2) as f64 * (2.0 * w[1] * w[1] - w[0]).powi(2))
                    .sum::<f64>()
            }
            Family::Levy => {
                let w: Vec<f64> = x.iter().map(|v| 1.0 + (v - 1.0) / 4.0).collect();
                let last = w[w.len() - 1];
                let mid: f64 = w[..w.len() - 1]
                    .iter()
                    .map(|wi| (wi - 1.0).powi(2) * (1.0 + 10.0 * (PI * wi + 1.0).sin().powi(2)))
                    .sum();
                (PI * w[0]).sin().powi(2) + mid + (last - 1.0).powi(2) * (1.0 + (2.0 * PI * last).sin().powi(2))
            }
            Family::Powell => x
                .chunks(4)
                .map(|c| {
                    let g = |i: usize| c.get(i).copied().unwrap_or(0.0);
                    let (a, b, cc, dd) = (g(0), g(1), g(2), g(3));
                    (a + 10.0 * b).powi(2)
                        + 5.0 * (cc - dd).powi(2)
                        + (b - 2.0 * cc).powi(4)
                        + 10.0 * (a - dd).powi(4)
                })
                .sum(),
            Family::Griewank => {
                let s = x.iter().map(|v| v * v).sum::<f64>() / 4000.0;
                let p: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos())
                    .product();
                s - p + 1.0
            }
            Family::Rastrigin => {
                10.0 * d + x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>()
            }
            Family::StyblinskiTang => {
                0.5 * x.iter().map(|v| v.powi(4) - 16.0 * v * v + 5.0 * v).sum::<f64>()
            }
            Family::Michalewicz => -x
                .iter()
                .enumerate()
                .map(|(i, v)| v.sin() * ((i + 1) as f64 * v * v / PI).sin().powi(20))
                .sum::<f64>(),
            Family::Branin => {
                let (x1, x2) = (x[0], x[1]);
                let b = 5.1 / (4.0 * PI * PI);
                let c = 5.0 / PI;
                let t = 1.0 / (8.0 * PI);
                (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0
            }
        }
    }

    /// Known global minimizer and minimum, when published for this dimension.
    pub fn raw_optimum(&self, dim: usize) -> (Option<Vec<f64>>, Option<f64>) {
        let point = match self {
            Family::Ackley | Family::Powell | Family::Griewank | Family::Rastrigin => Some(vec![0.0; dim]),
            Family::Rosenbrock | Family::Levy => Some(vec![1.0; dim]),
            Family::DixonPrice => Some(
                (1..=dim)
                    .map(|i| {
                        let p = 2f64.powi(i as i32);
                        2f64.powf(-(p - 2.0) / p)
                    })
                    .collect(),
            ),
            Family::StyblinskiTang => Some(vec![STYBLINSKI_TANG_ARGMIN; dim]),
            Family::Michalewicz if dim == 2 => Some(vec![2.202_905_520_146_18, PI / 2.0]),
            Family::Branin => Some(vec![PI, 2.275]),
            Family::Michalewicz => None,
        };
        let value = match (self, dim) {
            (Family::Michalewicz, 5) => Some(-4.687_658),
            (Family::Michalewicz, 10) => Some(-9.660_15),
            (Family::Michalewicz, 2) | (Family::StyblinskiTang, _) => point.as_ref().map(|p| self.raw_value(p)),
            (Family::Branin, _) => Some(5.0 / (4.0 * PI)),
            (Family::Michalewicz, _) => None,
            _ => Some(0.0),
        };
        (point, value)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace(['-', ' '], "_");
        let all = Family::SCALABLE.iter().chain([Family::Branin].iter());
        for f in all {
            if f.as_str() == norm || (norm == "styblinskitang" && *f == Family::StyblinskiTang) || (norm == "dixonprice" && *f == Family::DixonPrice) {
                return Ok(*f);
            }
        }
        Err(Error::InvalidArgument(format!("unknown problem family `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub enum Variant {
    Plain,
    Shifted {
        delta: Vec<f64>,
    },
    Embedded {
        inner: Family,
        inner_domain: SearchDomain,
        active: Vec<usize>,
        /// Rows of an orthonormal `d × D` map used instead of `active`.
        rotation: Option<DMatrix<f64>>,
    },
}

/// A benchmark instance evaluated on the unit cube.
#[derive(Debug, Clone)]
pub struct Problem {
    name: String,
    family: Family,
    dim: usize,
    domain: SearchDomain,
    variant: Variant,
    optimum_value: Option<f64>,
    optimum_point: Option<Vec<f64>>,
}

/// A plain benchmark function.
pub fn make(family: Family, dim: usize) -> Result<Problem> {
    family.check_dim(dim)?;
    let (point, value) = family.raw_optimum(dim);
    Ok(Problem {
        name: family.as_str().to_string(),
        family,
        dim,
        domain: family.bounds(dim)?,
        variant: Variant::Plain,
        optimum_value: value.map(|v| -v),
        optimum_point: point.filter(|_| value.is_some()),
    })
}

/// `f(clamp(x + δ))` with `δ_i ~ U(lo_i, hi_i)` drawn from `seed`.
pub fn make_shifted(family: Family, dim: usize, seed: u64) -> Result<Problem> {
    let domain = family.bounds(dim)?;
    let mut rng = stream_rng(seed, SHIFT_STREAM);
    let delta = domain
        .lower()
        .iter()
        .zip(domain.upper())
        .map(|(lo, hi)| rng.random_range(*lo..*hi))
        .collect();
    make_shifted_by(family, dim, delta)
}

/// Shifted problem with an explicit offset.
pub fn make_shifted_by(family: Family, dim: usize, delta: Vec<f64>) -> Result<Problem> {
    if !Family::SHIFTABLE.contains(&family) {
        return Err(Error::InvalidArgument(format!("no shifted variant of {family}")));
    }
    let base = make(family, dim)?;
    if delta.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: delta.len(),
        });
    }
    let moved = base.optimum_point.as_ref().and_then(|p| {
        let q: Vec<f64> = p.iter().zip(&delta).map(|(a, b)| a - b).collect();
        let inside = q
            .iter()
            .zip(base.domain.lower().iter().zip(base.domain.upper()))
            .all(|(v, (lo, hi))| v >= lo && v <= hi);
        inside.then_some(q)
    });
    Ok(Problem {
        name: format!("shifted:{family}"),
        optimum_value: moved.as_ref().and(base.optimum_value),
        optimum_point: moved,
        variant: Variant::Shifted { delta },
        ..base
    })
}

/// A `d`-dimensional function reading a seed-chosen subset of the
/// coordinates of `[0, 1]^dim`. With `rotate`, the inner input is instead a
/// random orthonormal projection of `x − 0.5`, recentred and clamped.
pub fn make_embedded(inner: Family, d: usize, dim: usize, seed: u64, rotate: bool) -> Result<Problem> {
    if d > dim {
        return Err(Error::InvalidArgument(format!(
            "intrinsic dimension {d} exceeds ambient dimension {dim}"
        )));
    }
    if !matches!(inner, Family::Branin | Family::Ackley | Family::Levy) {
        return Err(Error::InvalidArgument(format!("no embedded variant of {inner}")));
    }
    inner.check_dim(d)?;
    let inner_domain = inner.bounds(d)?;
    let mut rng = stream_rng(seed, EMBED_STREAM);
    let active = rand::seq::index::sample(&mut rng, dim, d).into_vec();
    let (raw_point, raw_value) = inner.raw_optimum(d);
    let u_star = raw_point
        .as_ref()
        .map(|p| inner_domain.normalize(p))
        .transpose()?;

    let (rotation, point) = if rotate {
        let g = DMatrix::from_fn(dim, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = g.qr().q();
        let a = q.transpose();
        let point = u_star.map(|u| {
            let c: Vec<f64> = u.iter().map(|v| v - 0.5).collect();
            (0..dim)
                .map(|j| 0.5 + (0..d).map(|k| a[(k, j)] * c[k]).sum::<f64>())
                .collect::<Vec<f64>>()
        });
        (Some(a), point.filter(|p| p.iter().all(|v| (0.0..=1.0).contains(v))))
    } else {
        let point = u_star.map(|u| {
            let mut p = vec![0.5; dim];
            for (k, &j) in active.iter().enumerate() {
                p[j] = u[k];
            }
            p
        });
        (None, point)
    };
    Ok(Problem {
        name: format!("embedded:{inner}:{d}"),
        family: inner,
        dim,
        domain: SearchDomain::unit(dim)?,
        variant: Variant::Embedded {
            inner,
            inner_domain,
            active,
            rotation,
        },
        optimum_value: raw_value.map(|v| -v),
        optimum_point: point,
    })
}

impl Problem {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &SearchDomain {
        &self.domain
    }

    pub fn variant(&self) -> &Variant {
        &self.variant
    }

    /// Maximum of [`Problem::evaluate`], when known.
    pub fn optimum_value(&self) -> Option<f64> {
        self.optimum_value
    }

    /// A maximizer in raw coordinates, when known.
    pub fn optimum_point(&self) -> Option<&[f64]> {
        self.optimum_point.as_deref()
    }

    /// Indices of the coordinates that influence the value, for axis-aligned
    /// embeddings.
    pub fn active_coordinates(&self) -> Option<&[usize]> {
        match &self.variant {
            Variant::Embedded {
                active,
                rotation: None,
                ..
            } => Some(active),
            _ => None,
        }
    }

    /// Objective (maximization sign) at a raw point.
    pub fn evaluate_raw(&self, x: &[f64]) -> f64 {
        match &self.variant {
            Variant::Plain => -self.family.raw_value(x),
            Variant::Shifted { delta } => {
                let z: Vec<f64> = x
                    .iter()
                    .zip(delta)
                    .zip(self.domain.lower().iter().zip(self.domain.upper()))
                    .map(|((v, s), (lo, hi))| (v + s).clamp(*lo, *hi))
                    .collect();
                -self.family.raw_value(&z)
            }
            Variant::Embedded {
                inner,
                inner_domain,
                active,
                rotation,
            } => {
                let u: Vec<f64> = match rotation {
                    None => active.iter().map(|&j| x[j]).collect(),
                    Some(a) => (0..a.nrows())
                        .map(|k| {
                            let s: f64 = x.iter().enumerate().map(|(j, v)| a[(k, j)] * (v - 0.5)).sum();
                            (0.5 + s).clamp(0.0, 1.0)
                        })
                        .collect(),
                };
                let raw = inner_domain.denormalize(&u).expect("inner point has inner dimension");
                -inner.raw_value(&raw)
            }
        }
    }

    /// Objective (maximization sign) at a unit-cube point.
    pub fn evaluate(&self, x_unit: &[f64]) -> Result<f64> {
        let raw = self.domain.denormalize(x_unit)?;
        Ok(self.evaluate_raw(&raw))
    }

    pub fn info(&self) -> ProblemInfo {
        ProblemInfo {
            name: self.name.clone(),
            dim: self.dim,
            lower: self.domain.lower().to_vec(),
            upper: self.domain.upper().to_vec(),
            optimum_value: self.optimum_value,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemInfo {
    pub name: String,
    pub dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub optimum_value: Option<f64>,
}

/// Catalog entry for listing.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyInfo {
    pub name: &'static str,
    pub lower: f64,
    pub upper: f64,
    pub min_dim: usize,
    pub max_dim: Option<usize>,
    pub shiftable: bool,
    pub embeddable: bool,
    pub optimum_value: Option<f64>,
}

pub fn catalog() -> Vec<FamilyInfo> {
    Family::SCALABLE
        .iter()
        .chain([Family::Branin].iter())
        .map(|f| {
            let b = f.bounds(f.min_dim()).expect("valid dimension");
            let probe = if *f == Family::Michalewicz { 2 } else { f.min_dim() };
            FamilyInfo {
                name: f.as_str(),
                lower: b.lower()[0],
                upper: b.upper()[0],
                min_dim: f.min_dim(),
                max_dim: f.max_dim(),
                shiftable: Family::SHIFTABLE.contains(f),
                embeddable: matches!(f, Family::Branin | Family::Ackley | Family::Levy),
                optimum_value: match f {
                    Family::StyblinskiTang | Family::Michalewicz => None,
                    _ => f.raw_optimum(probe).1.map(|v| -v),
                },
            }
        })
        .collect()
}

/// Parses `family:D`, `shifted:family:D` or `embedded:family:d:D`
/// (optionally with a trailing `:rot`). `seed` fixes the shift or the
/// embedding.
pub fn parse_problem(spec: &str, seed: u64) -> Result<Problem> {
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let num = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::InvalidArgument(format!("bad dimension `{s}` in problem `{spec}`")))
    };
    match parts.as_slice() {
        [f, d] => make(f.parse()?, num(d)?),
        ["shifted", f, d] => make_shifted(f.parse()?, num(d)?, seed),
        ["embedded", f, d, big] => make_embedded(f.parse()?, num(d)?, num(big)?, seed, false),
        ["embedded", f, d, big, "rot"] => make_embedded(f.parse()?, num(d)?, num(big)?, seed, true),
        _ => Err(Error::InvalidArgument(format!(
            "problem `{spec}` is not of the form family:D, shifted:family:D or embedded:family:d:D"
        ))),
    }
}
