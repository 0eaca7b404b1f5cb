use gisbo::benchmarks::{make_embedded, Family};
use gisbo::optimizer::{run_gitbo, run_plain_bo, run_random_search, FnObjective, RunConfig, Timing};
use gisbo::subspace::RSelectionPolicy;
use gisbo::surrogate::{Capabilities, GpSurrogate, Surrogate};
use gisbo::{Error, ObservationSet, PosteriorBatch, Result};
use nalgebra::DMatrix;

fn quadratic() -> FnObjective<impl Fn(&[f64]) -> f64> {
    FnObjective {
        name: "quad".into(),
        dim: 1,
        optimum: Some(0.0),
        f: |x: &[f64]| -(x[0] - 0.6).powi(2),
    }
}

fn cfg(n_init: usize, iters: usize, seed: u64) -> RunConfig {
    RunConfig {
        n_init,
        iters,
        m_cand: 256,
        seed,
        timing: Timing::Off,
        ..Default::default()
    }
}

#[test]
fn finds_one_dimensional_maximum() {
    let obj = quadratic();
    let hits = (0..10)
        .filter(|&s| {
            let t = run_gitbo(&cfg(8, 30, s), &obj, &mut GpSurrogate::default()).unwrap();
            let best = t.records.iter().max_by(|a, b| a.y.total_cmp(&b.y)).unwrap();
            (best.x[0] - 0.6).abs() < 0.05
        })
        .count();
    assert!(hits >= 9, "{hits}/10");
}

#[test]
fn runs_are_deterministic_and_seed_sensitive() {
    let obj = FnObjective {
        name: "bowl".into(),
        dim: 4,
        optimum: Some(0.0),
        f: |x: &[f64]| -x.iter().map(|v| (v - 0.25).powi(2)).sum::<f64>(),
    };
    let c = cfg(6, 6, 11);
    let a = run_gitbo(&c, &obj, &mut GpSurrogate::default()).unwrap();
    let b = run_gitbo(&c, &obj, &mut GpSurrogate::default()).unwrap();
    assert_eq!(a, b);
    let other = run_gitbo(&cfg(6, 6, 12), &obj, &mut GpSurrogate::default()).unwrap();
    assert_ne!(a.records, other.records);
    assert!(a.records.iter().flat_map(|r| &r.x).all(|v| (0.0..=1.0).contains(v)));
    assert!(a.records.iter().all(|r| r.elapsed_alg_s == 0.0 && r.elapsed_total_s == 0.0));
}

/// Wraps the GP and records how many observations each fit saw.
struct Recording {
    inner: GpSurrogate,
    fits: Vec<usize>,
}

impl Surrogate for Recording {
    fn identity(&self) -> String {
        "recording".into()
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn fit(&mut self, obs: &ObservationSet, seed: u64) -> Result<()> {
        self.fits.push(obs.len());
        self.inner.fit(obs, seed)
    }

    fn context_len(&self) -> usize {
        self.inner.context_len()
    }

    fn predict(&mut self, x: &DMatrix<f64>, need_grad: bool) -> Result<PosteriorBatch> {
        self.inner.predict(x, need_grad)
    }
}

#[test]
fn context_grows_by_one_per_iteration() {
    let obj = quadratic();
    let mut s = Recording {
        inner: GpSurrogate::default(),
        fits: Vec::new(),
    };
    let t = run_gitbo(&cfg(5, 7, 0), &obj, &mut s).unwrap();
    assert_eq!(t.len(), 12);
    assert_eq!(s.fits, (5..12).collect::<Vec<_>>());
}

#[test]
fn fixed_policy_keeps_r_constant() {
    let p = make_embedded(Family::Branin, 2, 12, 3, false).unwrap();
    let c = RunConfig {
        r_policy: RSelectionPolicy::Fixed { r: 3 },
        ..cfg(10, 5, 2)
    };
    let t = run_gitbo(&c, &p, &mut GpSurrogate::default()).unwrap();
    assert!(t.search_records().iter().all(|r| r.r_selected == 3));
    assert!(t.records[..10].iter().all(|r| r.r_selected == 0));
    assert_eq!(t.f_star, p.optimum_value());

    let plain = run_plain_bo(&c, &p, &mut GpSurrogate::default()).unwrap();
    assert_eq!(plain.algorithm, "plain_bo");
    assert_eq!(plain.len(), 15);
}

#[test]
fn random_search_on_linear_objective() {
    let obj = FnObjective {
        name: "x1".into(),
        dim: 3,
        optimum: Some(1.0),
        f: |x: &[f64]| x[0],
    };
    let hits = (0..10)
        .filter(|&s| {
            let t = run_random_search(&cfg(10, 490, s), &obj).unwrap();
            assert_eq!(t.len(), 500);
            t.records.last().unwrap().best_y >= 0.99
        })
        .count();
    assert!(hits >= 9, "{hits}/10");
}

/// Fails every fit after the first `ok` calls.
struct Flaky {
    inner: GpSurrogate,
    ok: usize,
    calls: usize,
}

impl Surrogate for Flaky {
    fn identity(&self) -> String {
        "flaky".into()
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn fit(&mut self, obs: &ObservationSet, seed: u64) -> Result<()> {
        self.calls += 1;
        if self.calls > self.ok {
            return Err(Error::FitFailed("injected".into()));
        }
        self.inner.fit(obs, seed)
    }

    fn context_len(&self) -> usize {
        self.inner.context_len()
    }

    fn predict(&mut self, x: &DMatrix<f64>, need_grad: bool) -> Result<PosteriorBatch> {
        self.inner.predict(x, need_grad)
    }
}

#[test]
fn persistent_surrogate_failure_truncates_the_trace() {
    let obj = quadratic();
    let mut s = Flaky {
        inner: GpSurrogate::default(),
        ok: 2,
        calls: 0,
    };
    let t = run_gitbo(&cfg(4, 6, 0), &obj, &mut s).unwrap();
    assert_eq!(t.len(), 6);
    assert!(t.error.as_deref().unwrap().contains("injected"));
    // One retry before giving up.
    assert_eq!(s.calls, 4);
}
