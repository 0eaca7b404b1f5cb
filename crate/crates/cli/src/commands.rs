use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use gisbo::benchmarks::{catalog, parse_problem};
use gisbo::bridge::BridgeSurrogate;
use gisbo::optimizer::{run_gitbo, run_plain_bo, run_random_search};
use gisbo::stats::{rank_over_iterations, rank_report, Alternative, RankReport, RunSummary};
use gisbo::surrogate::{GpSurrogate, Surrogate};
use gisbo::trace_io::{read_trace_file, write_trace_file, TraceRow};
use rayon::prelude::*;

use crate::config::{ablation_arms, AblateKind, Algorithm, ExperimentConfig, SurrogateKind};
use crate::plot::{mean_band, Chart, Series};
use crate::CliError;

pub const FROZEN_CONFIG: &str = "config.json";
pub const TRACE_DIR: &str = "traces";

#[derive(Debug, Clone, Copy, Default)]
pub struct GlobalOpts {
    /// Worker threads; 0 lets the pool pick.
    pub jobs: usize,
    pub overwrite: bool,
    pub seed_offset: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum PlotMode {
    RegretVsIter,
    RegretVsTime,
    RankVsIter,
}

impl PlotMode {
    fn as_str(self) -> &'static str {
        match self {
            PlotMode::RegretVsIter => "regret_vs_iter",
            PlotMode::RegretVsTime => "regret_vs_time",
            PlotMode::RankVsIter => "rank_vs_iter",
        }
    }
}

struct Trial<'a> {
    label: String,
    algorithm: Algorithm,
    config: &'a ExperimentConfig,
    problem: &'a str,
    seed: u64,
}

/// File-system safe version of an identifier.
pub fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-=".contains(c) { c } else { '_' })
        .collect()
}

fn prepare_output(dir: &Path, overwrite: bool) -> Result<(), CliError> {
    let traces = dir.join(TRACE_DIR);
    let occupied = dir.join(FROZEN_CONFIG).exists()
        || fs::read_dir(&traces).map(|mut d| d.next().is_some()).unwrap_or(false);
    if occupied {
        if !overwrite {
            return Err(CliError::Failed(format!(
                "{} already holds results; pass --overwrite to replace them",
                dir.display()
            )));
        }
        if traces.exists() {
            fs::remove_dir_all(&traces)?;
        }
    }
    fs::create_dir_all(&traces)?;
    Ok(())
}

fn make_surrogate(cfg: &ExperimentConfig) -> Result<Box<dyn Surrogate>, CliError> {
    Ok(match cfg.surrogate {
        SurrogateKind::Gp => Box::new(GpSurrogate::default()),
        SurrogateKind::Bridge => Box::new(
            BridgeSurrogate::spawn(&cfg.bridge_command)
                .map_err(|e| CliError::Failed(format!("bridge: {e}")))?,
        ),
    })
}

/// Runs one trial and writes its CSV. Returns the run id.
fn run_trial(trial: &Trial, out: &Path) -> Result<String, CliError> {
    let cfg = trial.config;
    let problem = parse_problem(trial.problem, cfg.problem_seed)?;
    let run_cfg = cfg.run_config(trial.seed);
    let mut trace = match trial.algorithm {
        Algorithm::Random => run_random_search(&run_cfg, &problem)?,
        alg => {
            let mut s = make_surrogate(cfg)?;
            run_cfg.validate(s.capabilities().max_context_size)?;
            match alg {
                Algorithm::Gitbo => run_gitbo(&run_cfg, &problem, s.as_mut())?,
                _ => run_plain_bo(&run_cfg, &problem, s.as_mut())?,
            }
        }
    };
    trace.algorithm = trial.label.clone();
    let run_id = format!("{}:{}:{}:{}", trial.label, problem.name(), problem.dim(), trial.seed);
    let file = out.join(TRACE_DIR).join(format!("{}.csv", sanitize(&run_id)));
    write_trace_file(&file, &run_id, &trace)?;
    match &trace.error {
        Some(e) => Err(CliError::Failed(format!("{run_id} stopped after {} evaluations: {e}", trace.len()))),
        None => {
            log::info!("{run_id}: best {:.6} after {} evaluations", trace.best_y().unwrap_or(f64::NAN), trace.len());
            Ok(run_id)
        }
    }
}

fn trials(cfg: &ExperimentConfig, arms: &[(String, Algorithm, ExperimentConfig)]) -> Vec<(String, Algorithm, usize, String, u64)> {
    let mut out = Vec::new();
    for (i, (label, alg, c)) in arms.iter().enumerate() {
        for p in &cfg.problems {
            for &s in &c.seeds {
                out.push((label.clone(), *alg, i, p.clone(), s));
            }
        }
    }
    out
}

/// Runs every trial of a resolved config (plain or ablation) into its
/// output directory.
pub fn execute(cfg: &ExperimentConfig, opts: GlobalOpts) -> Result<Vec<String>, CliError> {
    let out = &cfg.output_dir;
    prepare_output(out, opts.overwrite)?;
    fs::write(out.join(FROZEN_CONFIG), cfg.to_json())?;

    let arms: Vec<(String, Algorithm, ExperimentConfig)> = match cfg.ablate {
        Some(kind) => {
            if cfg.algorithms != [Algorithm::Gitbo] {
                log::warn!("ablation runs the gradient-informed loop only; `algorithms` is ignored");
            }
            ablation_arms(kind, cfg)
                .into_iter()
                .map(|a| (a.label, Algorithm::Gitbo, a.config))
                .collect()
        }
        None => cfg.algorithms.iter().map(|a| (a.as_str().to_string(), *a, cfg.clone())).collect(),
    };
    for (label, _, c) in &arms {
        c.run_config(0)
            .validate(None)
            .map_err(|e| CliError::Config(format!("arm {label}: {e}")))?;
    }
    let list = trials(cfg, &arms);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| CliError::Failed(e.to_string()))?;
    let results: Vec<Result<String, CliError>> = pool.install(|| {
        list.par_iter()
            .map(|(label, alg, arm, problem, seed)| {
                let trial = Trial {
                    label: label.clone(),
                    algorithm: *alg,
                    config: &arms[*arm].2,
                    problem,
                    seed: *seed,
                };
                run_trial(&trial, out)
            })
            .collect()
    });
    let mut ids = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(id) => ids.push(id),
            Err(CliError::Config(m)) => return Err(CliError::Config(m)),
            Err(e) => failures.push(e.to_string()),
        }
    }
    if !failures.is_empty() {
        for f in &failures {
            log::error!("{f}");
        }
        return Err(CliError::Failed(format!("{} of {} trials failed", failures.len(), list.len())));
    }
    if cfg.ablate.is_some() {
        let report = cmd_rank(out, cfg.alpha, Alternative::TwoSided)?;
        log::info!("ablation mean ranks: {:?}", report.mean_ranks);
    }
    Ok(ids)
}

pub fn cmd_run(config: &Path, opts: GlobalOpts) -> Result<Vec<String>, CliError> {
    let cfg = ExperimentConfig::load(config)?.resolve(opts.seed_offset)?;
    execute(&cfg, opts)
}

pub fn cmd_ablate(kind: AblateKind, config: &Path, opts: GlobalOpts) -> Result<Vec<String>, CliError> {
    let mut cfg = ExperimentConfig::load(config)?.resolve(opts.seed_offset)?;
    cfg.ablate = Some(kind);
    execute(&cfg, opts)
}

/// Every trace CSV below `dir`.
pub fn read_results(dir: &Path) -> Result<Vec<TraceRow>, CliError> {
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(dir)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "csv"))
        .map(|e| e.into_path())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Failed(format!("no trace CSVs under {}", dir.display())));
    }
    let mut rows = Vec::new();
    for f in files {
        rows.extend(read_trace_file(&f).map_err(|e| CliError::Failed(format!("{}: {e}", f.display())))?);
    }
    Ok(rows)
}

/// Ranks all runs under `dir`, writing `rank.json` and `rank.md` there.
pub fn cmd_rank(dir: &Path, alpha: f64, alternative: Alternative) -> Result<RankReport, CliError> {
    let runs = RunSummary::from_rows(&read_results(dir)?);
    let report = rank_report(&runs, alpha, alternative).map_err(CliError::Missing)?;
    fs::write(
        dir.join("rank.json"),
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Failed(e.to_string()))?,
    )?;
    fs::write(dir.join("rank.md"), report.to_markdown())?;
    Ok(report)
}

#[derive(Debug, Default)]
pub struct PlotOutput {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

type Runs<'a> = BTreeMap<String, BTreeMap<String, BTreeMap<u64, Vec<&'a TraceRow>>>>;

fn group(rows: &[TraceRow]) -> Runs<'_> {
    let mut g: Runs = BTreeMap::new();
    for r in rows {
        g.entry(format!("{}:{}", r.problem, r.dim))
            .or_default()
            .entry(r.algorithm.clone())
            .or_default()
            .entry(r.seed)
            .or_default()
            .push(r);
    }
    for algs in g.values_mut() {
        for seeds in algs.values_mut() {
            for rs in seeds.values_mut() {
                rs.sort_by_key(|r| r.iteration);
            }
        }
    }
    g
}

/// Writes SVG charts for the runs under `dir` into `dir/plots`.
pub fn cmd_plot(dir: &Path, mode: PlotMode) -> Result<PlotOutput, CliError> {
    let rows = read_results(dir)?;
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    let mut out = PlotOutput::default();

    if mode == PlotMode::RankVsIter {
        let runs = RunSummary::from_rows(&rows);
        let (algs, ranks) = rank_over_iterations(&runs).map_err(CliError::Missing)?;
        let series = algs
            .into_iter()
            .zip(ranks)
            .map(|(label, r)| Series {
                label,
                x: (1..=r.len()).map(|i| i as f64).collect(),
                band: mean_band(&[r]),
            })
            .collect();
        let chart = Chart {
            title: "Average rank over iterations".into(),
            x_label: "evaluation".into(),
            y_label: "average rank".into(),
            log_x: false,
            log_y: false,
            series,
        };
        let file = plots.join("rank_vs_iter.svg");
        fs::write(&file, chart.to_svg())?;
        out.files.push(file);
        return Ok(out);
    }

    for (problem, algs) in group(&rows) {
        let has_regret = algs.values().flat_map(|s| s.values().flatten()).all(|r| r.regret.is_some());
        if !has_regret {
            out.warnings
                .push(format!("{problem}: optimum unknown, plotting best_y instead of regret"));
        }
        let mut series = Vec::new();
        for (alg, seeds) in &algs {
            if seeds.len() < 2 {
                out.warnings
                    .push(format!("{problem} / {alg}: single seed, plotting without a confidence band"));
            }
            let len = seeds.values().map(Vec::len).min().unwrap_or(0);
            let ys: Vec<Vec<f64>> = seeds
                .values()
                .map(|rs| {
                    rs[..len]
                        .iter()
                        .map(|r| if has_regret { r.regret.unwrap_or(f64::NAN) } else { r.best_y })
                        .collect()
                })
                .collect();
            let x: Vec<f64> = match mode {
                PlotMode::RegretVsIter => (1..=len).map(|i| i as f64).collect(),
                _ => (0..len)
                    .map(|k| seeds.values().map(|rs| rs[k].elapsed_alg_s).sum::<f64>() / seeds.len() as f64)
                    .collect(),
            };
            if mode == PlotMode::RegretVsTime && x.iter().all(|v| *v <= 0.0) {
                out.warnings
                    .push(format!("{problem} / {alg}: no timing data recorded (timing off?)"));
            }
            series.push(Series {
                label: alg.clone(),
                x,
                band: mean_band(&ys),
            });
        }
        let chart = Chart {
            title: problem.clone(),
            x_label: match mode {
                PlotMode::RegretVsIter => "evaluation".into(),
                _ => "algorithm time (s)".into(),
            },
            y_label: if has_regret { "regret".into() } else { "best y".into() },
            log_x: mode == PlotMode::RegretVsTime,
            log_y: has_regret,
            series,
        };
        let file = plots.join(format!("{}_{}.svg", mode.as_str(), sanitize(&problem)));
        fs::write(&file, chart.to_svg())?;
        out.files.push(file);
    }
    Ok(out)
}

pub fn cmd_list_problems() -> String {
    serde_json::to_string_pretty(&catalog()).expect("catalog serializes")
}

