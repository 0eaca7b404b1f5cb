//! The surrogate contract and its implementations.
//!
//! A surrogate is conditioned on the current [`ObservationSet`] and then
//! queried on candidate batches. Surrogates without analytic input gradients
//! are served by [`finite_difference_grad`].

pub mod gp;
mod lbfgs;

use nalgebra::DMatrix;

use crate::domain::{ObservationSet, PosteriorBatch};
use crate::error::{Error, Result};

pub use gp::{FitOptions, GpHyper, GpState};

/// Step of the central-difference gradient fallback, in unit-cube coordinates.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub analytic_grad: bool,
    /// Bound on context size plus candidate count, when the surrogate has one.
    pub max_context_size: Option<usize>,
}

pub trait Surrogate {
    fn identity(&self) -> String;

    fn capabilities(&self) -> Capabilities;

    /// Conditions the surrogate on `obs`. `seed` drives any internal
    /// randomness (hyperparameter restarts).
    fn fit(&mut self, obs: &ObservationSet, seed: u64) -> Result<()>;

    /// Number of observations the surrogate is currently conditioned on.
    fn context_len(&self) -> usize;

    /// Posterior at the rows of `x`; `grad` is filled only when requested and
    /// the surrogate has analytic gradients.
    fn predict(&mut self, x: &DMatrix<f64>, need_grad: bool) -> Result<PosteriorBatch>;
}

/// Rows per query that fit next to the current context, if capped.
fn room(s: &dyn Surrogate, per_row: usize) -> Result<Option<usize>> {
    match s.capabilities().max_context_size {
        Some(cap) => {
            let room = cap.saturating_sub(s.context_len()) / per_row;
            if room == 0 {
                return Err(Error::InvalidArgument(
                    "no room left in surrogate context for queries".into(),
                ));
            }
            Ok(Some(room))
        }
        None => Ok(None),
    }
}

/// [`Surrogate::predict`] split into batches that respect the context cap.
pub fn predict_chunked(s: &mut dyn Surrogate, x: &DMatrix<f64>, need_grad: bool) -> Result<PosteriorBatch> {
    let m = x.nrows();
    let chunk = match room(s, 1)? {
        Some(r) if r < m => r,
        _ => return s.predict(x, need_grad),
    };
    let (mut mean, mut var) = (Vec::with_capacity(m), Vec::with_capacity(m));
    let mut grad = need_grad.then(|| DMatrix::zeros(m, x.ncols()));
    let mut start = 0;
    while start < m {
        let len = chunk.min(m - start);
        let part = s.predict(&x.rows(start, len).into_owned(), need_grad)?;
        mean.extend_from_slice(&part.mean);
        var.extend_from_slice(&part.var);
        match (&mut grad, part.grad) {
            (Some(g), Some(pg)) => g.rows_mut(start, len).copy_from(&pg),
            (g @ Some(_), None) => *g = None,
            _ => {}
        }
        start += len;
    }
    PosteriorBatch::new(mean, var, grad)
}

/// Posterior with mean gradients, using the analytic path when available and
/// central differences otherwise.
pub fn predict_with_grad(s: &mut dyn Surrogate, x: &DMatrix<f64>) -> Result<PosteriorBatch> {
    if s.capabilities().analytic_grad {
        let post = predict_chunked(s, x, true)?;
        if post.grad.is_some() {
            return Ok(post);
        }
    }
    let mut post = predict_chunked(s, x, false)?;
    post.grad = Some(finite_difference_grad(s, x, FD_STEP)?);
    Ok(post)
}

/// Central-difference gradient of the predictive mean, batched per input
/// dimension and chunked so that context plus batch fits the surrogate's cap.
pub fn finite_difference_grad(s: &mut dyn Surrogate, x: &DMatrix<f64>, h: f64) -> Result<DMatrix<f64>> {
    let (m, d) = (x.nrows(), x.ncols());
    let mut grad = DMatrix::zeros(m, d);
    if m == 0 {
        return Ok(grad);
    }
    let chunk = room(s, 2)?.unwrap_or(m);
    for i in 0..d {
        let mut start = 0;
        while start < m {
            let len = chunk.min(m - start);
            let mut probe = DMatrix::zeros(2 * len, d);
            for k in 0..len {
                let row = x.row(start + k);
                probe.row_mut(k).copy_from(&row);
                probe.row_mut(len + k).copy_from(&row);
                probe[(k, i)] += h;
                probe[(len + k, i)] -= h;
            }
            let post = s.predict(&probe, false)?;
            for k in 0..len {
                grad[(start + k, i)] = (post.mean[k] - post.mean[len + k]) / (2.0 * h);
            }
            start += len;
        }
    }
    Ok(grad)
}

/// The built-in exact GP surrogate. Each refit warm-starts from the previous
/// hyperparameters with `warm_restarts` restarts; every `full_refit_every`-th
/// fit runs the full multi-start set instead.
#[derive(Debug, Clone)]
pub struct GpSurrogate {
    state: Option<GpState>,
    options: FitOptions,
    pub warm_restarts: usize,
    pub full_refit_every: usize,
    fits: usize,
}

impl Default for GpSurrogate {
    fn default() -> Self {
        Self::new(FitOptions::default())
    }
}

impl GpSurrogate {
    pub fn new(options: FitOptions) -> Self {
        Self {
            state: None,
            options,
            warm_restarts: 1,
            full_refit_every: 10,
            fits: 0,
        }
    }

    pub fn state(&self) -> Option<&GpState> {
        self.state.as_ref()
    }

    /// Drops the warm start so the next fit is independent of history.
    pub fn reset(&mut self) {
        self.state = None;
        self.fits = 0;
    }
}

impl Surrogate for GpSurrogate {
    fn identity(&self) -> String {
        "gp-matern52-ard".to_string()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            analytic_grad: true,
            max_context_size: None,
        }
    }

    fn fit(&mut self, obs: &ObservationSet, seed: u64) -> Result<()> {
        let warm_start = self
            .state
            .as_ref()
            .filter(|s| !s.is_constant())
            .map(|s| s.theta().clone());
        let full = warm_start.is_none() || self.fits % self.full_refit_every.max(1) == 0;
        let opts = FitOptions {
            seed,
            restarts: if full { self.options.restarts } else { self.warm_restarts },
            warm_start,
            ..self.options.clone()
        };
        self.fits += 1;
        self.state = Some(gp::fit(obs, &opts)?);
        Ok(())
    }

    fn context_len(&self) -> usize {
        self.state.as_ref().map_or(0, GpState::n_train)
    }

    fn predict(&mut self, x: &DMatrix<f64>, need_grad: bool) -> Result<PosteriorBatch> {
        let state = self
            .state
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("surrogate used before fit".into()))?;
        if need_grad {
            state.predict_with_grad(x)
        } else {
            state.predict(x)
        }
    }
}
