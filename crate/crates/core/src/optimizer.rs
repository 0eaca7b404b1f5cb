//! The gradient-informed search loop and its baselines.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::acquisition::{self, AcquisitionKind, AcquisitionSpec};
use crate::benchmarks::Problem;
use crate::domain::{ObservationSet, PosteriorBatch, RunTrace};
use crate::error::{Error, Result};
use crate::sampling::{self, derive_seed, CubeScheme};
use crate::subspace::{reference_point, GiSubspace, RSelectionPolicy, XRefMode};
use crate::surrogate::{predict_chunked, predict_with_grad, Surrogate};

const INIT_STREAM: u64 = 1;
const CAND_STREAM: u64 = 2;
const COEF_STREAM: u64 = 3;
const FIT_STREAM: u64 = 4;
const RETRY_STREAM: u64 = 5;
const ACQ_STREAM: u64 = 6;
const RANDOM_STREAM: u64 = 7;

/// Something to maximize over the unit cube.
pub trait Objective {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn evaluate(&self, x_unit: &[f64]) -> Result<f64>;
    /// Known maximum, for regret.
    fn optimum(&self) -> Option<f64> {
        None
    }
}

impl Objective for Problem {
    fn name(&self) -> String {
        Problem::name(self).to_string()
    }

    fn dim(&self) -> usize {
        Problem::dim(self)
    }

    fn evaluate(&self, x_unit: &[f64]) -> Result<f64> {
        Problem::evaluate(self, x_unit)
    }

    fn optimum(&self) -> Option<f64> {
        self.optimum_value()
    }
}

/// Wraps a closure over the unit cube.
pub struct FnObjective<F> {
    pub name: String,
    pub dim: usize,
    pub optimum: Option<f64>,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64> Objective for FnObjective<F> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x_unit: &[f64]) -> Result<f64> {
        Ok((self.f)(x_unit))
    }

    fn optimum(&self) -> Option<f64> {
        self.optimum
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    #[default]
    Wall,
    /// Record zero elapsed times so traces are byte-reproducible.
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub n_init: usize,
    pub iters: usize,
    pub m_cand: usize,
    pub r_policy: RSelectionPolicy,
    pub acq: AcquisitionSpec,
    pub subspace_scheme: CubeScheme,
    pub x_ref_mode: XRefMode,
    /// Clamp subspace candidates to the unit cube.
    pub clip: bool,
    pub seed: u64,
    pub timing: Timing,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_init: 200,
            iters: 500,
            m_cand: 4096,
            r_policy: RSelectionPolicy::default(),
            acq: AcquisitionSpec::default(),
            subspace_scheme: CubeScheme::default(),
            x_ref_mode: XRefMode::default(),
            clip: true,
            seed: 0,
            timing: Timing::default(),
        }
    }
}

impl RunConfig {
    /// Checks the static invariants and, when given, the surrogate's context cap.
    pub fn validate(&self, max_context: Option<usize>) -> Result<()> {
        if self.n_init < 2 {
            return Err(Error::InvalidConfig(format!("n_init must be at least 2, got {}", self.n_init)));
        }
        if self.iters == 0 {
            return Err(Error::InvalidConfig("iters must be at least 1".into()));
        }
        if self.m_cand == 0 {
            return Err(Error::InvalidConfig("m_cand must be at least 1".into()));
        }
        self.r_policy.validate()?;
        self.acq.validate()?;
        if let Some(cap) = max_context {
            let need = self.n_init + self.iters + self.m_cand;
            if need > cap {
                return Err(Error::InvalidConfig(format!(
                    "n_init + iters + m_cand = {need} exceeds the surrogate context cap {cap}"
                )));
            }
        }
        Ok(())
    }
}

struct Clock {
    start: Instant,
    alg: f64,
    timing: Timing,
}

impl Clock {
    fn new(timing: Timing) -> Self {
        Self {
            start: Instant::now(),
            alg: 0.0,
            timing,
        }
    }

    fn add_alg(&mut self, since: Instant) {
        self.alg += since.elapsed().as_secs_f64();
    }

    fn stamps(&self) -> (f64, f64) {
        match self.timing {
            Timing::Wall => (self.alg, self.start.elapsed().as_secs_f64()),
            Timing::Off => (0.0, 0.0),
        }
    }
}

fn evaluate_checked(obj: &dyn Objective, x: &[f64], evaluation: usize) -> Result<f64> {
    let y = obj.evaluate(x)?;
    if !y.is_finite() {
        return Err(Error::NonFiniteObjective { evaluation, value: y });
    }
    Ok(y)
}

fn initialize(cfg: &RunConfig, obj: &dyn Objective, trace: &mut RunTrace, clock: &mut Clock) -> Result<ObservationSet> {
    let d = obj.dim();
    let t0 = Instant::now();
    let init = sampling::lhs(cfg.n_init, d, derive_seed(&[cfg.seed, INIT_STREAM]))?;
    clock.add_alg(t0);
    let mut obs = ObservationSet::empty(d);
    for x in init.rows() {
        let y = evaluate_checked(obj, &x, trace.len() + 1)?;
        obs.push(&x, y)?;
        let (a, t) = clock.stamps();
        trace.record(x, y, 0, a, t);
    }
    Ok(obs)
}

fn new_trace(algorithm: &str, cfg: &RunConfig, obj: &dyn Objective) -> RunTrace {
    let mut trace = RunTrace::new(algorithm, &obj.name(), obj.dim(), cfg.seed, cfg.n_init);
    trace.f_star = obj.optimum();
    trace
}

/// Acquisition scores, with EI evaluated on standardized outputs.
fn acquisition_scores(spec: &AcquisitionSpec, post: &PosteriorBatch, obs: &ObservationSet, seed: u64) -> Vec<f64> {
    let spec = AcquisitionSpec { seed, ..*spec };
    let y = obs.y();
    let best = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if spec.kind != AcquisitionKind::Ei {
        return acquisition::score(&spec, post, best);
    }
    let n = y.len() as f64;
    let mu = y.iter().sum::<f64>() / n;
    let sd = if y.len() > 1 {
        (y.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let sd = if sd > 0.0 { sd } else { 1.0 };
    let scaled = PosteriorBatch {
        mean: post.mean.iter().map(|m| (m - mu) / sd).collect(),
        var: post.var.iter().map(|v| v / (sd * sd)).collect(),
        grad: None,
    };
    acquisition::expected_improvement(&scaled, (best - mu) / sd)
}

/// Result of one gradient-informed candidate-generation step.
#[derive(Debug, Clone)]
pub struct GiProposal {
    pub subspace: GiSubspace,
    pub candidates: DMatrix<f64>,
    pub scores: Vec<f64>,
    pub index: usize,
    pub x_next: Vec<f64>,
}

/// One proposal: full-space Sobol candidates, mean gradients there, the
/// Fisher subspace, subspace candidates around the reference point, and the
/// acquisition argmax over them. Assumes the surrogate is already fitted.
pub fn propose_gitbo(
    cfg: &RunConfig,
    surrogate: &mut dyn Surrogate,
    obs: &ObservationSet,
    iteration: u64,
) -> Result<GiProposal> {
    let d = obs.dim();
    let full = sampling::sobol(cfg.m_cand, d, derive_seed(&[cfg.seed, CAND_STREAM, iteration]))?;
    let post = predict_with_grad(surrogate, &full.points)?;
    let grads = post
        .grad
        .ok_or_else(|| Error::Numeric("surrogate returned no gradients".into()))?;
    let x_ref = reference_point(obs, cfg.x_ref_mode)?;
    let subspace = GiSubspace::from_gradients(&grads, cfg.r_policy, x_ref)?;
    if subspace.degenerate {
        log::debug!("iteration {iteration}: empty gradient spectrum, using first axis");
    }
    let z = sampling::uniform_cube(
        cfg.m_cand,
        subspace.r,
        derive_seed(&[cfg.seed, COEF_STREAM, iteration]),
        cfg.subspace_scheme,
    )?;
    let candidates = subspace.project(&z.points, cfg.clip)?;
    let post = predict_chunked(surrogate, &candidates, false)?;
    let scores = acquisition_scores(&cfg.acq, &post, obs, derive_seed(&[cfg.seed, ACQ_STREAM, iteration]));
    let (x_next, index) = acquisition::select_next(&scores, &candidates)?;
    Ok(GiProposal {
        subspace,
        candidates,
        scores,
        index,
        x_next,
    })
}

fn propose_plain(
    cfg: &RunConfig,
    surrogate: &mut dyn Surrogate,
    obs: &ObservationSet,
    iteration: u64,
) -> Result<Vec<f64>> {
    let full = sampling::sobol(cfg.m_cand, obs.dim(), derive_seed(&[cfg.seed, CAND_STREAM, iteration]))?;
    let post = predict_chunked(surrogate, &full.points, false)?;
    let scores = acquisition_scores(&cfg.acq, &post, obs, derive_seed(&[cfg.seed, ACQ_STREAM, iteration]));
    Ok(acquisition::select_next(&scores, &full.points)?.0)
}

fn surrogate_loop<P>(algorithm: &str, cfg: &RunConfig, obj: &dyn Objective, surrogate: &mut dyn Surrogate, mut propose: P) -> Result<RunTrace>
where
    P: FnMut(&RunConfig, &mut dyn Surrogate, &ObservationSet, u64) -> Result<(Vec<f64>, usize)>,
{
    cfg.validate(surrogate.capabilities().max_context_size)?;
    let mut trace = new_trace(algorithm, cfg, obj);
    let mut clock = Clock::new(cfg.timing);
    let mut obs = initialize(cfg, obj, &mut trace, &mut clock)?;
    for t in 1..=cfg.iters as u64 {
        let t0 = Instant::now();
        let mut step = |fit_seed: u64| -> Result<(Vec<f64>, usize)> {
            surrogate.fit(&obs, fit_seed)?;
            propose(cfg, surrogate, &obs, t)
        };
        let proposal = step(derive_seed(&[cfg.seed, FIT_STREAM, t])).or_else(|e| {
            log::warn!("iteration {t}: surrogate step failed ({e}); retrying with fresh restarts");
            step(derive_seed(&[cfg.seed, RETRY_STREAM, t]))
        });
        clock.add_alg(t0);
        let (x, r) = match proposal {
            Ok(p) => p,
            Err(e @ Error::Bridge(_)) | Err(e @ Error::FitFailed(_)) | Err(e @ Error::Numeric(_)) | Err(e @ Error::InvalidScore { .. }) | Err(e @ Error::InvalidGradient { .. }) | Err(e @ Error::InsufficientData { .. }) => {
                trace.error = Some(format!("surrogate failure at iteration {t}: {e}"));
                return Ok(trace);
            }
            Err(e) => return Err(e),
        };
        let y = evaluate_checked(obj, &x, trace.len() + 1)?;
        obs.push(&x, y)?;
        let (a, tt) = clock.stamps();
        trace.record(x, y, r, a, tt);
    }
    Ok(trace)
}

/// The gradient-informed loop. `r_selected` is logged for every search
/// iteration.
pub fn run_gitbo(cfg: &RunConfig, obj: &dyn Objective, surrogate: &mut dyn Surrogate) -> Result<RunTrace> {
    surrogate_loop("gitbo", cfg, obj, surrogate, |cfg, s, obs, t| {
        let p = propose_gitbo(cfg, s, obs, t)?;
        Ok((p.x_next, p.subspace.r))
    })
}

/// The same loop with the acquisition taken directly over full-space Sobol
/// candidates.
pub fn run_plain_bo(cfg: &RunConfig, obj: &dyn Objective, surrogate: &mut dyn Surrogate) -> Result<RunTrace> {
    surrogate_loop("plain_bo", cfg, obj, surrogate, |cfg, s, obs, t| {
        Ok((propose_plain(cfg, s, obs, t)?, 0))
    })
}

/// Latin-hypercube initialization followed by uniform random queries.
pub fn run_random_search(cfg: &RunConfig, obj: &dyn Objective) -> Result<RunTrace> {
    cfg.validate(None)?;
    let mut trace = new_trace("random", cfg, obj);
    let mut clock = Clock::new(cfg.timing);
    initialize(cfg, obj, &mut trace, &mut clock)?;
    let t0 = Instant::now();
    let pts = sampling::uniform_unit(cfg.iters, obj.dim(), derive_seed(&[cfg.seed, RANDOM_STREAM]))?;
    clock.add_alg(t0);
    for x in pts.rows() {
        let y = evaluate_checked(obj, &x, trace.len() + 1)?;
        let (a, t) = clock.stamps();
        trace.record(x, y, 0, a, t);
    }
    Ok(trace)
}
