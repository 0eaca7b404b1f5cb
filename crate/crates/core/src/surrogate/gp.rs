//! Exact Gaussian-process regression with an ARD Matérn-5/2 kernel.
//!
//! Hyperparameters are fitted by maximizing the log marginal likelihood of the
//! standardized targets plus log-normal priors (lengthscale prior centred on
//! `sqrt(2) + log(sqrt(D))`, i.e. it scales with the input dimension). The
//! fitted [`GpState`] stores its variances in the original `y` units, so
//! `predict` and `mean_grad` need no unit bookkeeping.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, Normal};

use super::lbfgs;
use crate::domain::{ObservationSet, PosteriorBatch};
use crate::error::{invalid, Error, Result};
use crate::sampling::stream_rng;

const SQRT5: f64 = 2.236_067_977_499_79;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Noise floor (original units) used by the constant-model fallback.
pub const NOISE_FLOOR: f64 = 1e-6;

const JITTER_LADDER: [f64; 6] = [0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

const LOG_LS_BOUNDS: (f64, f64) = (-5.298_317_366_548_036, 9.210_340_371_976_184); // [5e-3, 1e4]
const LOG_SF_BOUNDS: (f64, f64) = (-6.907_755_278_982_137, 6.907_755_278_982_137); // [1e-3, 1e3]
const LOG_SN_BOUNDS: (f64, f64) = (-13.815_510_557_964_274, 2.302_585_092_994_046); // [1e-6, 10]

const NOISE_PRIOR: (f64, f64) = (-4.0, 1.0);
const SIGNAL_PRIOR: (f64, f64) = (0.0, 1.0);
const LS_PRIOR_SCALE: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, PartialEq)]
pub struct GpHyper {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl GpHyper {
    pub fn new(lengthscales: Vec<f64>, signal_variance: f64, noise_variance: f64) -> Result<Self> {
        let all_pos = lengthscales
            .iter()
            .chain([&signal_variance, &noise_variance])
            .all(|v| v.is_finite() && *v > 0.0);
        if !all_pos || lengthscales.is_empty() {
            return Err(invalid("GP hyperparameters must be finite and strictly positive"));
        }
        Ok(Self {
            lengthscales,
            signal_variance,
            noise_variance,
        })
    }

    pub fn isotropic(dim: usize, lengthscale: f64, signal_variance: f64, noise_variance: f64) -> Result<Self> {
        Self::new(vec![lengthscale; dim], signal_variance, noise_variance)
    }

    fn to_log(&self) -> Vec<f64> {
        let mut u: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        u.push(self.signal_variance.ln());
        u.push(self.noise_variance.ln());
        u
    }

    fn from_log(u: &[f64]) -> Self {
        let d = u.len() - 2;
        Self {
            lengthscales: u[..d].iter().map(|v| v.exp()).collect(),
            signal_variance: u[d].exp(),
            noise_variance: u[d + 1].exp(),
        }
    }

    fn scaled(&self, y_var: f64) -> Self {
        Self {
            lengthscales: self.lengthscales.clone(),
            signal_variance: self.signal_variance * y_var,
            noise_variance: self.noise_variance * y_var,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub restarts: usize,
    pub max_evals: usize,
    pub seed: u64,
    /// Replaces the prior-centre starting point of the first restart.
    /// Given in original `y` units (as stored in a previous [`GpState`]).
    pub warm_start: Option<GpHyper>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 3,
            max_evals: 200,
            seed: 0,
            warm_start: None,
        }
    }
}

/// Matérn-5/2 correlation and the factor `(5/3)(1 + sqrt5 r) exp(-sqrt5 r)`
/// shared by its derivatives, both as functions of the scaled distance `r`.
#[inline]
fn matern52(r: f64) -> (f64, f64) {
    let sr = SQRT5 * r;
    let e = (-sr).exp();
    ((1.0 + sr + sr * sr / 3.0) * e, (5.0 / 3.0) * (1.0 + sr) * e)
}

#[inline]
fn scaled_sqdist(a: &[f64], b: &[f64], inv_l2: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(inv_l2)
        .map(|((x, y), w)| {
            let d = x - y;
            d * d * w
        })
        .sum()
}

fn rows_of(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Clone)]
pub struct GpState {
    theta: GpHyper,
    x_train: Vec<Vec<f64>>,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    mean_const: f64,
    jitter: f64,
}

impl GpState {
    /// Conditions a GP with fixed hyperparameters (original `y` units) on `obs`.
    /// `mean_const` is the sample mean of `y`.
    pub fn condition(obs: &ObservationSet, theta: GpHyper) -> Result<Self> {
        if obs.is_empty() {
            return Err(Error::InsufficientData { need: 1, have: 0 });
        }
        let mean_const = obs.y().iter().sum::<f64>() / obs.len() as f64;
        Self::condition_with_mean(obs, theta, mean_const)
    }

    /// As [`GpState::condition`] with an explicit constant prior mean.
    pub fn condition_with_mean(obs: &ObservationSet, theta: GpHyper, mean_const: f64) -> Result<Self> {
        if obs.is_empty() {
            return Err(Error::InsufficientData { need: 1, have: 0 });
        }
        if theta.lengthscales.len() != obs.dim() {
            return Err(Error::DimensionMismatch {
                expected: obs.dim(),
                got: theta.lengthscales.len(),
            });
        }
        let x_train = rows_of(obs.x());
        let n = obs.len();
        let resid = DVector::from_iterator(n, obs.y().iter().map(|v| v - mean_const));
        let inv_l2: Vec<f64> = theta.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        let mut k = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..a {
                let r = scaled_sqdist(&x_train[a], &x_train[b], &inv_l2).sqrt();
                let v = theta.signal_variance * matern52(r).0;
                k[(a, b)] = v;
                k[(b, a)] = v;
            }
        }
        for &jit in &JITTER_LADDER {
            let mut kj = k.clone();
            let diag = theta.signal_variance + theta.noise_variance + jit * theta.signal_variance;
            kj.fill_diagonal(diag);
            if let Some(chol) = Cholesky::new(kj) {
                let alpha = chol.solve(&resid);
                return Ok(Self {
                    theta,
                    x_train,
                    chol: Some(chol),
                    alpha,
                    mean_const,
                    jitter: jit,
                });
            }
        }
        Err(Error::FitFailed(format!(
            "Cholesky failed after jitter {:e}",
            JITTER_LADDER[JITTER_LADDER.len() - 1]
        )))
    }

    /// The degenerate model used when all targets are equal.
    pub fn constant(obs: &ObservationSet) -> Self {
        let dim = obs.dim();
        Self {
            theta: GpHyper {
                lengthscales: vec![1.0; dim],
                signal_variance: NOISE_FLOOR,
                noise_variance: NOISE_FLOOR,
            },
            x_train: Vec::new(),
            chol: None,
            alpha: DVector::zeros(0),
            mean_const: obs.y().first().copied().unwrap_or(0.0),
            jitter: 0.0,
        }
    }

    pub fn theta(&self) -> &GpHyper {
        &self.theta
    }

    pub fn mean_const(&self) -> f64 {
        self.mean_const
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn is_constant(&self) -> bool {
        self.chol.is_none()
    }

    pub fn dim(&self) -> usize {
        self.theta.lengthscales.len()
    }

    pub fn n_train(&self) -> usize {
        self.x_train.len()
    }

    fn inv_l2(&self) -> Vec<f64> {
        self.theta
            .lengthscales
            .iter()
            .map(|l| 1.0 / (l * l))
            .collect()
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// Posterior mean and variance (noise included) at each row of `x`.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<PosteriorBatch> {
        self.check_input(x)?;
        let m = x.nrows();
        let Some(chol) = &self.chol else {
            return PosteriorBatch::new(vec![self.mean_const; m], vec![self.theta.noise_variance; m], None);
        };
        let n = self.n_train();
        let inv_l2 = self.inv_l2();
        let sf = self.theta.signal_variance;
        let mut kstar = DMatrix::zeros(n, m);
        let mut mean = Vec::with_capacity(m);
        for j in 0..m {
            let xj: Vec<f64> = x.row(j).iter().copied().collect();
            let mut mu = self.mean_const;
            for (a, xa) in self.x_train.iter().enumerate() {
                let kv = sf * matern52(scaled_sqdist(&xj, xa, &inv_l2).sqrt()).0;
                kstar[(a, j)] = kv;
                mu += kv * self.alpha[a];
            }
            mean.push(mu);
        }
        let v = chol.l_dirty().solve_lower_triangular(&kstar).ok_or_else(|| {
            Error::Numeric("triangular solve failed in GP predict".into())
        })?;
        let var = (0..m)
            .map(|j| {
                let q = v.column(j).norm_squared();
                (sf - q + self.theta.noise_variance).max(0.0)
            })
            .collect();
        PosteriorBatch::new(mean, var, None)
    }

    /// Gradient of the posterior mean at each row of `x` (`m x D`).
    pub fn mean_grad(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        let (m, d) = (x.nrows(), self.dim());
        let mut grad = DMatrix::zeros(m, d);
        if self.is_constant() {
            return Ok(grad);
        }
        let inv_l2 = self.inv_l2();
        let sf = self.theta.signal_variance;
        let mut row = vec![0.0; d];
        for j in 0..m {
            let xj: Vec<f64> = x.row(j).iter().copied().collect();
            row.iter_mut().for_each(|v| *v = 0.0);
            for (a, xa) in self.x_train.iter().enumerate() {
                let r = scaled_sqdist(&xj, xa, &inv_l2).sqrt();
                // d k / d x_i = -sf * (5/3)(1 + sqrt5 r) e^{-sqrt5 r} (x_i - xa_i) / l_i^2
                let c = -sf * matern52(r).1 * self.alpha[a];
                for i in 0..d {
                    row[i] += c * (xj[i] - xa[i]) * inv_l2[i];
                }
            }
            grad.row_mut(j).iter_mut().zip(&row).for_each(|(g, v)| *g = *v);
        }
        Ok(grad)
    }

    pub fn predict_with_grad(&self, x: &DMatrix<f64>) -> Result<PosteriorBatch> {
        let mut post = self.predict(x)?;
        post.grad = Some(self.mean_grad(x)?);
        Ok(post)
    }
}

/// Standardized targets: `(y - mean) / sd`, with the sample standard deviation.
/// Returns `None` for the standard deviation when `y` is (numerically) constant.
fn standardize(y: &[f64]) -> (Vec<f64>, f64, Option<f64>) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let ss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = if y.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
    if sd <= 1e-12 * mean.abs().max(1.0) || !sd.is_finite() {
        return (y.iter().map(|v| v - mean).collect(), mean, None);
    }
    (y.iter().map(|v| (v - mean) / sd).collect(), mean, Some(sd))
}

/// Squared coordinate differences of every training pair `b < a`, stored
/// row-major by pair so each lengthscale evaluation is a dot product.
struct PairDiffs {
    n: usize,
    d: usize,
    sq: Vec<f64>,
}

impl PairDiffs {
    fn new(x: &[Vec<f64>]) -> Self {
        let n = x.len();
        let d = x.first().map_or(0, Vec::len);
        let mut sq = Vec::with_capacity(n * n.saturating_sub(1) / 2 * d);
        for a in 0..n {
            for b in 0..a {
                sq.extend(x[a].iter().zip(&x[b]).map(|(p, q)| (p - q) * (p - q)));
            }
        }
        Self { n, d, sq }
    }

    fn pair(&self, idx: usize) -> &[f64] {
        &self.sq[idx * self.d..(idx + 1) * self.d]
    }
}

/// Log marginal likelihood and its gradient with respect to the log
/// hyperparameters `[log l_1.. log l_D, log sf2, log sn2]`, on standardized
/// targets `ys`. Returns `-inf` when the covariance is not positive definite.
fn lml_and_grad(pairs: &PairDiffs, ys: &[f64], theta: &GpHyper) -> (f64, Vec<f64>) {
    let (n, d) = (pairs.n, pairs.d);
    let inv_l2: Vec<f64> = theta.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
    let sf = theta.signal_variance;
    let sn = theta.noise_variance;

    let mut k = DMatrix::zeros(n, n);
    let mut dfac = vec![0.0; n * n.saturating_sub(1) / 2];
    let mut idx = 0;
    for a in 0..n {
        for b in 0..a {
            let r = pairs.pair(idx).iter().zip(&inv_l2).map(|(q, w)| q * w).sum::<f64>().sqrt();
            let (c, g) = matern52(r);
            k[(a, b)] = sf * c;
            k[(b, a)] = sf * c;
            dfac[idx] = sf * g;
            idx += 1;
        }
        k[(a, a)] = sf + sn;
    }
    let Some(chol) = Cholesky::new(k.clone()) else {
        return (f64::NEG_INFINITY, vec![0.0; d + 2]);
    };
    let yv = DVector::from_column_slice(ys);
    let alpha = chol.solve(&yv);
    let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let value = -0.5 * yv.dot(&alpha) - log_det_half - 0.5 * n as f64 * LN_2PI;

    // W = alpha alpha^T - K^{-1}; dL/dtheta = 0.5 tr(W dK/dtheta)
    let kinv = chol.inverse();
    let mut grad = vec![0.0; d + 2];
    let mut g_sf = 0.0;
    let mut g_sn = 0.0;
    let mut idx = 0;
    for a in 0..n {
        let waa = alpha[a] * alpha[a] - kinv[(a, a)];
        g_sf += 0.5 * waa * sf;
        g_sn += 0.5 * waa * sn;
        for b in 0..a {
            let w = alpha[a] * alpha[b] - kinv[(a, b)];
            // off-diagonal pairs appear twice in the trace
            g_sf += w * k[(a, b)];
            let c = w * dfac[idx];
            for (g, q) in grad[..d].iter_mut().zip(pairs.pair(idx)) {
                *g += c * q;
            }
            idx += 1;
        }
    }
    for (g, w) in grad[..d].iter_mut().zip(&inv_l2) {
        *g *= w;
    }
    grad[d] = g_sf;
    grad[d + 1] = g_sn;
    (value, grad)
}

/// Log marginal likelihood of `obs` under `theta`, with `y` standardized
/// first and `theta` read in standardized units.
/// A non-positive-definite covariance gives `-inf`.
pub fn log_marginal_likelihood(theta: &GpHyper, obs: &ObservationSet) -> Result<f64> {
    if theta.lengthscales.len() != obs.dim() {
        return Err(Error::DimensionMismatch {
            expected: obs.dim(),
            got: theta.lengthscales.len(),
        });
    }
    if obs.is_empty() {
        return Err(Error::InsufficientData { need: 1, have: 0 });
    }
    let (ys, _, _) = standardize(obs.y());
    Ok(lml_and_grad(&PairDiffs::new(&rows_of(obs.x())), &ys, theta).0)
}

fn ls_prior_loc(dim: usize) -> f64 {
    std::f64::consts::SQRT_2 + 0.5 * (dim as f64).ln()
}

/// Negative log posterior (up to a constant) and its gradient.
fn neg_objective(pairs: &PairDiffs, ys: &[f64], u: &[f64]) -> (f64, Vec<f64>) {
    let d = u.len() - 2;
    let theta = GpHyper::from_log(u);
    let (lml, mut g) = lml_and_grad(pairs, ys, &theta);
    if !lml.is_finite() {
        return (f64::INFINITY, vec![0.0; u.len()]);
    }
    let mut value = lml;
    let loc = ls_prior_loc(d);
    let s2 = LS_PRIOR_SCALE * LS_PRIOR_SCALE;
    for i in 0..d {
        value -= 0.5 * (u[i] - loc).powi(2) / s2;
        g[i] -= (u[i] - loc) / s2;
    }
    for (idx, (mu, s)) in [(d, SIGNAL_PRIOR), (d + 1, NOISE_PRIOR)] {
        value -= 0.5 * (u[idx] - mu).powi(2) / (s * s);
        g[idx] -= (u[idx] - mu) / (s * s);
    }
    (-value, g.into_iter().map(|v| -v).collect())
}

fn bounds(dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![LOG_LS_BOUNDS.0; dim];
    let mut hi = vec![LOG_LS_BOUNDS.1; dim];
    lo.extend([LOG_SF_BOUNDS.0, LOG_SN_BOUNDS.0]);
    hi.extend([LOG_SF_BOUNDS.1, LOG_SN_BOUNDS.1]);
    (lo, hi)
}

fn prior_draw(dim: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    let ls = Normal::new(ls_prior_loc(dim), LS_PRIOR_SCALE).expect("valid prior");
    let sf = Normal::new(SIGNAL_PRIOR.0, SIGNAL_PRIOR.1).expect("valid prior");
    let sn = Normal::new(NOISE_PRIOR.0, NOISE_PRIOR.1).expect("valid prior");
    let mut u: Vec<f64> = (0..dim).map(|_| ls.sample(rng)).collect();
    u.push(sf.sample(rng));
    u.push(sn.sample(rng));
    u
}

fn prior_centre(dim: usize) -> Vec<f64> {
    let mut u = vec![ls_prior_loc(dim); dim];
    u.extend([SIGNAL_PRIOR.0, NOISE_PRIOR.0]);
    u
}

/// Fits hyperparameters by multi-start MAP and conditions on `obs`.
///
/// Restart 0 starts at `warm_start` (or the prior centre); the others start at
/// draws from the hyperparameter prior. The best optimum wins, ties going to
/// the lower noise variance.
pub fn fit(obs: &ObservationSet, opts: &FitOptions) -> Result<GpState> {
    if obs.len() < 2 {
        return Err(Error::InsufficientData {
            need: 2,
            have: obs.len(),
        });
    }
    let dim = obs.dim();
    let (ys, _, sd) = standardize(obs.y());
    let Some(sd) = sd else {
        return Ok(GpState::constant(obs));
    };
    let y_var = sd * sd;
    let pairs = PairDiffs::new(&rows_of(obs.x()));
    let (lo, hi) = bounds(dim);
    let mut rng = stream_rng(opts.seed, 0x6770);

    let mut best: Option<(f64, Vec<f64>)> = None;
    for restart in 0..opts.restarts.max(1) {
        let start = match (restart, &opts.warm_start) {
            (0, Some(w)) if w.lengthscales.len() == dim => w.scaled(1.0 / y_var).to_log(),
            (0, _) => prior_centre(dim),
            _ => prior_draw(dim, &mut rng),
        };
        let res = lbfgs::minimize(|u| neg_objective(&pairs, &ys, u), &start, &lo, &hi, opts.max_evals);
        log::trace!("restart {restart}: objective {} after {} evaluations", res.value, res.evals);
        if !res.value.is_finite() {
            continue;
        }
        let better = match &best {
            None => true,
            Some((v, u)) => {
                res.value < *v || (res.value == *v && res.x[dim + 1] < u[dim + 1])
            }
        };
        if better {
            best = Some((res.value, res.x));
        }
    }
    let Some((_, u)) = best else {
        return Err(Error::FitFailed(
            "no restart reached a positive-definite covariance".into(),
        ));
    };
    GpState::condition(obs, GpHyper::from_log(&u).scaled(y_var))
}
