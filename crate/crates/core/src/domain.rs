//! Shared domain types.
//!
//! Every optimizer, surrogate and acquisition routine works in the normalized
//! unit cube `[0, 1]^D` and maximizes. Raw units appear only at the objective
//! boundary, via [`SearchDomain::normalize`] and [`SearchDomain::denormalize`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Box bounds of a problem in raw units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SearchDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(invalid("domain must have at least one dimension"));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(invalid(format!(
                    "bounds for coordinate {i} must satisfy lower < upper (got [{lo}, {hi}])"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The same `[lo, hi]` interval on every coordinate.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn unit(dim: usize) -> Result<Self> {
        Self::uniform(dim, 0.0, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Maps a raw point into the unit cube. Out-of-box coordinates are clamped;
    /// the returned flag is `true` when any clamping happened.
    pub fn normalize_flagged(&self, x_raw: &[f64]) -> Result<(Vec<f64>, bool)> {
        self.check_len(x_raw.len())?;
        let mut clamped = false;
        let out = x_raw
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&x, (&lo, &hi))| {
                let t = (x - lo) / (hi - lo);
                if !(0.0..=1.0).contains(&t) {
                    clamped = true;
                }
                t.clamp(0.0, 1.0)
            })
            .collect();
        Ok((out, clamped))
    }

    pub fn normalize(&self, x_raw: &[f64]) -> Result<Vec<f64>> {
        self.normalize_flagged(x_raw).map(|(x, _)| x)
    }

    pub fn denormalize(&self, x_unit: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x_unit.len())?;
        Ok(x_unit
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&t, (&lo, &hi))| lo + t * (hi - lo))
            .collect())
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }
}

/// The in-context dataset: `n` unit-cube points with their (maximization) values.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    x: DMatrix<f64>,
    y: Vec<f64>,
}

impl ObservationSet {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if x.ncols() == 0 {
            return Err(invalid("observations need at least one input dimension"));
        }
        if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(format!("observation entry {v} outside [0, 1]")));
        }
        if let Some(v) = y.iter().find(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite observation value {v}")));
        }
        Ok(Self { x, y })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        let x = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
        Self::new(x, y)
    }

    /// An empty set in `dim` dimensions.
    pub fn empty(dim: usize) -> Self {
        Self {
            x: DMatrix::zeros(0, dim),
            y: Vec::new(),
        }
    }

    pub fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) || !y.is_finite() {
            return Err(invalid("appended observation outside [0,1] or non-finite"));
        }
        let n = self.len();
        let x_old = std::mem::replace(&mut self.x, DMatrix::zeros(0, 0));
        let mut grown = x_old.insert_row(n, 0.0);
        grown.row_mut(n).iter_mut().zip(x).for_each(|(dst, &v)| *dst = v);
        self.x = grown;
        self.y.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    /// Index of the best (largest) observed value; ties go to the first.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &v) in self.y.iter().enumerate() {
            if best.is_none_or(|b| v > self.y[b]) {
                best = Some(i);
            }
        }
        best
    }
}

/// Per-candidate predictive moments, optionally with mean gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorBatch {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// `m x D`, row `j` is the gradient of the predictive mean at candidate `j`.
    pub grad: Option<DMatrix<f64>>,
}

impl PosteriorBatch {
    pub fn new(mean: Vec<f64>, var: Vec<f64>, grad: Option<DMatrix<f64>>) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: var.len(),
            });
        }
        if let Some(j) = var.iter().position(|v| v.is_nan() || *v < 0.0) {
            return Err(invalid(format!("negative or NaN variance at candidate {j}")));
        }
        if let Some(g) = &grad {
            if g.nrows() != mean.len() {
                return Err(Error::DimensionMismatch {
                    expected: mean.len(),
                    got: g.nrows(),
                });
            }
        }
        Ok(Self { mean, var, grad })
    }

    pub fn empty() -> Self {
        Self {
            mean: Vec::new(),
            var: Vec::new(),
            grad: None,
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn std(&self) -> impl Iterator<Item = f64> + '_ {
        self.var.iter().map(|v| v.sqrt())
    }
}

/// One objective evaluation inside a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    /// 1-based, counting every evaluation including initialization.
    pub iteration: usize,
    pub x: Vec<f64>,
    pub y: f64,
    pub best_y: f64,
    /// Subspace dimension used to propose `x`; 0 when no subspace was involved.
    pub r_selected: usize,
    /// Cumulative algorithm time, objective evaluation excluded.
    pub elapsed_alg_s: f64,
    /// Cumulative wall time including objective evaluation.
    pub elapsed_total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub algorithm: String,
    pub problem: String,
    pub dim: usize,
    pub seed: u64,
    pub n_init: usize,
    pub f_star: Option<f64>,
    pub records: Vec<IterRecord>,
    /// Set when the run stopped early (e.g. the surrogate failed).
    pub error: Option<String>,
}

impl RunTrace {
    pub fn new(algorithm: &str, problem: &str, dim: usize, seed: u64, n_init: usize) -> Self {
        Self {
            algorithm: algorithm.to_string(),
            problem: problem.to_string(),
            dim,
            seed,
            n_init,
            f_star: None,
            records: Vec::new(),
            error: None,
        }
    }

    /// Appends an evaluation, maintaining the running maximum.
    pub fn record(&mut self, x: Vec<f64>, y: f64, r_selected: usize, alg_s: f64, total_s: f64) {
        let best_y = self.records.last().map_or(y, |r| r.best_y.max(y));
        self.records.push(IterRecord {
            iteration: self.records.len() + 1,
            x,
            y,
            best_y,
            r_selected,
            elapsed_alg_s: alg_s,
            elapsed_total_s: total_s,
        });
    }

    pub fn best_y(&self) -> Option<f64> {
        self.records.last().map(|r| r.best_y)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records produced by the search loop (after initialization).
    pub fn search_records(&self) -> &[IterRecord] {
        &self.records[self.n_init.min(self.records.len())..]
    }

    /// Checks the trace invariants: consecutive 1-based indices and a
    /// running-maximum `best_y` that matches the observed values exactly.
    pub fn validate(&self) -> Result<()> {
        let mut best = f64::NEG_INFINITY;
        for (k, rec) in self.records.iter().enumerate() {
            if rec.iteration != k + 1 {
                return Err(invalid(format!(
                    "trace index {} at position {k}",
                    rec.iteration
                )));
            }
            best = best.max(rec.y);
            if rec.best_y != best {
                return Err(invalid(format!("best_y mismatch at iteration {}", k + 1)));
            }
        }
        Ok(())
    }
}
