//! Experiment configuration: one JSON object with flat, dot-grouped keys.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use gisbo::acquisition::{AcquisitionKind, AcquisitionSpec};
use gisbo::optimizer::{RunConfig, Timing};
use gisbo::sampling::CubeScheme;
use gisbo::subspace::{RSelectionPolicy, XRefMode};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable that replaces `surrogate.command`.
pub const BRIDGE_ENV: &str = "GISBO_BRIDGE_CMD";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Gitbo,
    PlainBo,
    Random,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Gitbo => "gitbo",
            Algorithm::PlainBo => "plain_bo",
            Algorithm::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    #[default]
    Gp,
    Bridge,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RKind {
    #[default]
    Fixed,
    VarianceExplained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum AblateKind {
    R,
    Beta,
    SubspaceSampler,
    XRef,
    NInit,
}

impl AblateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AblateKind::R => "r",
            AblateKind::Beta => "beta",
            AblateKind::SubspaceSampler => "subspace_sampler",
            AblateKind::XRef => "x_ref",
            AblateKind::NInit => "n_init",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    pub problems: Vec<String>,
    #[serde(rename = "problem.seed")]
    pub problem_seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,

    pub surrogate: SurrogateKind,
    #[serde(rename = "surrogate.command")]
    pub bridge_command: Vec<String>,

    pub n_init: usize,
    pub iters: usize,
    pub m_cand: usize,
    #[serde(rename = "r_policy.kind")]
    pub r_kind: RKind,
    #[serde(rename = "r_policy.r")]
    pub r: usize,
    #[serde(rename = "r_policy.threshold")]
    pub threshold: f64,
    #[serde(rename = "acq.kind")]
    pub acq_kind: AcquisitionKind,
    #[serde(rename = "acq.beta")]
    pub beta: f64,
    #[serde(rename = "acq.samples")]
    pub samples: usize,
    pub subspace_scheme: CubeScheme,
    pub x_ref_mode: XRefMode,
    pub clip: bool,
    pub timing: Timing,

    #[serde(rename = "stats.alpha")]
    pub alpha: f64,

    /// Set by `ablate`; a frozen ablation config replays the whole sweep.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ablate: Option<AblateKind>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let run = RunConfig::default();
        let acq = AcquisitionSpec::default();
        Self {
            problem: None,
            problems: Vec::new(),
            problem_seed: 0,
            algorithms: vec![Algorithm::Gitbo],
            seeds: Vec::new(),
            output_dir: PathBuf::new(),
            surrogate: SurrogateKind::Gp,
            bridge_command: Vec::new(),
            n_init: 20,
            iters: 150,
            m_cand: 1024,
            r_kind: RKind::Fixed,
            r: 10,
            threshold: 0.95,
            acq_kind: acq.kind,
            beta: acq.beta,
            samples: acq.samples,
            subspace_scheme: run.subspace_scheme,
            x_ref_mode: run.x_ref_mode,
            clip: run.clip,
            timing: run.timing,
            alpha: 0.05,
            ablate: None,
        }
    }
}

fn field_error(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("field `{field}`: {msg}"))
}

impl ExperimentConfig {
    /// Parses `text`, reporting the offending field path with line and column.
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.inner();
            CliError::Config(format!(
                "{origin}:{}:{}: field `{path}`: {inner}",
                inner.line(),
                inner.column()
            ))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Folds `problem` into `problems`, applies the seed offset and the
    /// bridge override, then validates.
    pub fn resolve(mut self, seed_offset: u64) -> Result<Self, CliError> {
        if let Some(p) = self.problem.take() {
            self.problems.insert(0, p);
        }
        for s in &mut self.seeds {
            *s = s
                .checked_add(seed_offset)
                .ok_or_else(|| field_error("seeds", "seed offset overflows"))?;
        }
        if let Ok(cmd) = std::env::var(BRIDGE_ENV) {
            let parts: Vec<String> = cmd.split_whitespace().map(String::from).collect();
            if !parts.is_empty() {
                self.bridge_command = parts;
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.problems.is_empty() {
            return Err(field_error("problems", "at least one problem is required"));
        }
        for p in &self.problems {
            gisbo::benchmarks::parse_problem(p, self.problem_seed).map_err(|e| field_error("problems", e))?;
        }
        if self.seeds.is_empty() {
            return Err(field_error("seeds", "at least one seed is required"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(field_error("seeds", "seeds must be distinct"));
        }
        if self.algorithms.is_empty() {
            return Err(field_error("algorithms", "at least one algorithm is required"));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(field_error("output_dir", "an output directory is required"));
        }
        if self.surrogate == SurrogateKind::Bridge && self.bridge_command.is_empty() {
            return Err(field_error(
                "surrogate.command",
                format!("bridge surrogate needs a command (or set {BRIDGE_ENV})"),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(field_error("stats.alpha", "must lie in (0, 1)"));
        }
        self.run_config(0).validate(None).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn r_policy(&self) -> RSelectionPolicy {
        match self.r_kind {
            RKind::Fixed => RSelectionPolicy::Fixed { r: self.r },
            RKind::VarianceExplained => RSelectionPolicy::VarianceExplained {
                threshold: self.threshold,
            },
        }
    }

    pub fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig {
            n_init: self.n_init,
            iters: self.iters,
            m_cand: self.m_cand,
            r_policy: self.r_policy(),
            acq: AcquisitionSpec {
                kind: self.acq_kind,
                beta: self.beta,
                samples: self.samples,
                seed,
            },
            subspace_scheme: self.subspace_scheme,
            x_ref_mode: self.x_ref_mode,
            clip: self.clip,
            seed,
            timing: self.timing,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// One arm of an ablation sweep: a label and the config it runs with.
#[derive(Debug, Clone)]
pub struct Arm {
    pub label: String,
    pub config: ExperimentConfig,
}

/// The sweep grid for `kind` applied to `base`. Every arm runs the
/// gradient-informed loop.
pub fn ablation_arms(kind: AblateKind, base: &ExperimentConfig) -> Vec<Arm> {
    let arm = |label: String, f: &dyn Fn(&mut ExperimentConfig)| {
        let mut config = base.clone();
        f(&mut config);
        Arm {
            label: format!("gitbo[{label}]"),
            config,
        }
    };
    match kind {
        AblateKind::R => {
            let mut arms: Vec<Arm> = [5, 10, 15, 20, 40]
                .into_iter()
                .map(|r| {
                    arm(format!("r={r}"), &|c| {
                        c.r_kind = RKind::Fixed;
                        c.r = r;
                    })
                })
                .collect();
            arms.extend([0.925, 0.95, 0.975].into_iter().map(|t| {
                arm(format!("var={t}"), &|c| {
                    c.r_kind = RKind::VarianceExplained;
                    c.threshold = t;
                })
            }));
            arms
        }
        AblateKind::Beta => {
            let mut arms: Vec<Arm> = [(1.65, "q=0.95"), (1.96, "q=0.975")]
                .into_iter()
                .map(|(b, q)| {
                    arm(format!("beta={b},{q}"), &|c| {
                        c.acq_kind = AcquisitionKind::UcbQuantile;
                        c.beta = b;
                    })
                })
                .collect();
            arms.extend([256, 512, 1024].into_iter().map(|s| {
                arm(format!("S={s}"), &|c| {
                    c.acq_kind = AcquisitionKind::UcbSampling;
                    c.samples = s;
                })
            }));
            arms
        }
        AblateKind::SubspaceSampler => [CubeScheme::Uniform, CubeScheme::Random, CubeScheme::Sobol]
            .into_iter()
            .map(|s| arm(format!("z={}", s.as_str()), &|c| c.subspace_scheme = s))
            .collect(),
        AblateKind::XRef => [XRefMode::Centroid, XRefMode::Incumbent]
            .into_iter()
            .map(|m| arm(format!("x_ref={}", m.as_str()), &|c| c.x_ref_mode = m))
            .collect(),
        AblateKind::NInit => [20, 50, 200, 1000]
            .into_iter()
            .map(|n| arm(format!("n_init={n}"), &|c| c.n_init = n))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        ExperimentConfig {
            problems: vec!["ackley:5".into()],
            seeds: vec![0, 1],
            output_dir: "out".into(),
            ..Default::default()
        }
    }

    #[test]
    fn arm_counts() {
        let b = base();
        assert_eq!(ablation_arms(AblateKind::R, &b).len(), 8);
        assert_eq!(ablation_arms(AblateKind::Beta, &b).len(), 5);
        assert_eq!(ablation_arms(AblateKind::SubspaceSampler, &b).len(), 3);
        assert_eq!(ablation_arms(AblateKind::XRef, &b).len(), 2);
        let n: Vec<usize> = ablation_arms(AblateKind::NInit, &b).iter().map(|a| a.config.n_init).collect();
        assert_eq!(n, vec![20, 50, 200, 1000]);
    }

    #[test]
    fn parse_reports_field_and_position() {
        let text = "{\n  \"problems\": [\"ackley:5\"],\n  \"acq.kind\": \"ucb_magic\"\n}";
        let CliError::Config(msg) = ExperimentConfig::parse(text, "cfg.json").unwrap_err() else {
            panic!("expected a config error");
        };
        assert!(msg.contains("acq.kind"), "{msg}");
        assert!(msg.starts_with("cfg.json:3:"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::parse("{\"iterations\": 3}", "x").is_err());
    }

    #[test]
    fn resolve_merges_problem_and_offsets_seeds() {
        let c = ExperimentConfig {
            problem: Some("levy:3".into()),
            ..base()
        }
        .resolve(10)
        .unwrap();
        assert_eq!(c.problems, vec!["levy:3".to_string(), "ackley:5".into()]);
        assert_eq!(c.seeds, vec![10, 11]);
        let dup = ExperimentConfig {
            seeds: vec![1, 1],
            ..base()
        };
        assert!(dup.resolve(0).is_err());
    }

    #[test]
    fn frozen_copy_round_trips() {
        let c = base().resolve(0).unwrap();
        assert_eq!(ExperimentConfig::parse(&c.to_json(), "frozen").unwrap(), c);
    }
}
