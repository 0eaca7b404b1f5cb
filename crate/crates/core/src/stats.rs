//! Regret and the ranking protocol: per-problem median ranks, the Friedman
//! test, pairwise Wilcoxon signed-rank tests and Holm's step-down correction.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::domain::RunTrace;
use crate::error::{Error, Result};
use crate::trace_io::TraceRow;

/// Gap beyond which a best value above the optimum is reported.
pub const REGRET_SLACK: f64 = 1e-9;

/// Largest sample size handled by the exact Wilcoxon distribution.
pub const WILCOXON_EXACT_MAX: usize = 20;

pub(crate) fn clamp_regret(f_star: f64, best_y: f64) -> f64 {
    let r = f_star - best_y;
    if r < -REGRET_SLACK {
        log::warn!("best value {best_y} exceeds the stated optimum {f_star}; check optimum metadata");
    }
    r.max(0.0)
}

/// `f* − best_y` per evaluation, clamped at zero.
pub fn regret_trace(trace: &RunTrace, f_star: Option<f64>) -> Option<Vec<f64>> {
    let f = f_star.or(trace.f_star)?;
    Some(trace.records.iter().map(|r| clamp_regret(f, r.best_y)).collect())
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ranks with ties averaged; the largest value gets rank 1.
pub fn rank_descending(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultTable {
    pub algorithms: Vec<String>,
    pub problems: Vec<String>,
    /// `A × P` medians of the final best value over seeds.
    #[serde(serialize_with = "ser_matrix")]
    pub medians: DMatrix<f64>,
    pub seeds_per_cell: usize,
}

fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

/// A missing `(algorithm, problem, seed)` combination.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct MissingCell {
    pub algorithm: String,
    pub problem: String,
    pub seed: u64,
}

/// Final outcome of one run, keyed for tabulation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub algorithm: String,
    pub problem: String,
    pub seed: u64,
    /// `best_y` after each evaluation.
    pub best_y: Vec<f64>,
}

impl RunSummary {
    pub fn from_trace(trace: &RunTrace) -> Self {
        Self {
            algorithm: trace.algorithm.clone(),
            problem: format!("{}:{}", trace.problem, trace.dim),
            seed: trace.seed,
            best_y: trace.records.iter().map(|r| r.best_y).collect(),
        }
    }

    /// Groups trace rows (from any number of files) into runs.
    pub fn from_rows(rows: &[TraceRow]) -> Vec<Self> {
        let mut runs: BTreeMap<(String, String, u64), Vec<(usize, f64)>> = BTreeMap::new();
        for r in rows {
            runs.entry((r.algorithm.clone(), format!("{}:{}", r.problem, r.dim), r.seed))
                .or_default()
                .push((r.iteration, r.best_y));
        }
        runs.into_iter()
            .map(|((algorithm, problem, seed), mut pts)| {
                pts.sort_by_key(|p| p.0);
                Self {
                    algorithm,
                    problem,
                    seed,
                    best_y: pts.into_iter().map(|p| p.1).collect(),
                }
            })
            .collect()
    }

    pub fn final_best(&self) -> f64 {
        self.best_y.last().copied().unwrap_or(f64::NAN)
    }
}

struct Grid<'a> {
    algorithms: Vec<String>,
    problems: Vec<String>,
    seeds: Vec<u64>,
    cells: BTreeMap<(&'a str, &'a str, u64), &'a RunSummary>,
}

fn grid(runs: &[RunSummary]) -> std::result::Result<Grid<'_>, Vec<MissingCell>> {
    let algorithms: BTreeSet<&str> = runs.iter().map(|r| r.algorithm.as_str()).collect();
    let problems: BTreeSet<&str> = runs.iter().map(|r| r.problem.as_str()).collect();
    let seeds: BTreeSet<u64> = runs.iter().map(|r| r.seed).collect();
    let cells: BTreeMap<_, _> = runs
        .iter()
        .map(|r| ((r.algorithm.as_str(), r.problem.as_str(), r.seed), r))
        .collect();
    let mut missing = Vec::new();
    for a in &algorithms {
        for p in &problems {
            for s in &seeds {
                if !cells.contains_key(&(*a, *p, *s)) {
                    missing.push(MissingCell {
                        algorithm: a.to_string(),
                        problem: p.to_string(),
                        seed: *s,
                    });
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(missing);
    }
    Ok(Grid {
        algorithms: algorithms.iter().map(|s| s.to_string()).collect(),
        problems: problems.iter().map(|s| s.to_string()).collect(),
        seeds: seeds.into_iter().collect(),
        cells,
    })
}

impl ResultTable {
    /// Medians over seeds of the final best value. Fails with the list of
    /// missing cells when the algorithm × problem × seed grid is incomplete.
    pub fn from_runs(runs: &[RunSummary]) -> std::result::Result<Self, Vec<MissingCell>> {
        let g = grid(runs)?;
        let medians = DMatrix::from_fn(g.algorithms.len(), g.problems.len(), |i, j| {
            let vals: Vec<f64> = g
                .seeds
                .iter()
                .map(|s| g.cells[&(g.algorithms[i].as_str(), g.problems[j].as_str(), *s)].final_best())
                .collect();
            median(&vals)
        });
        Ok(Self {
            algorithms: g.algorithms,
            problems: g.problems,
            medians,
            seeds_per_cell: g.seeds.len(),
        })
    }
}

/// Per-problem ranks of the medians (rank 1 = best, ties averaged).
pub fn rank_table(medians: &DMatrix<f64>) -> DMatrix<f64> {
    let mut ranks = DMatrix::zeros(medians.nrows(), medians.ncols());
    for j in 0..medians.ncols() {
        let col: Vec<f64> = medians.column(j).iter().copied().collect();
        for (i, r) in rank_descending(&col).into_iter().enumerate() {
            ranks[(i, j)] = r;
        }
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Friedman test on an `A × P` rank matrix (algorithms × problems), with
/// the tie correction.
pub fn friedman_test(ranks: &DMatrix<f64>) -> Result<TestResult> {
    let (a, p) = (ranks.nrows(), ranks.ncols());
    if a < 2 || p < 2 {
        return Err(Error::InsufficientData {
            need: 2,
            have: a.min(p),
        });
    }
    let (af, pf) = (a as f64, p as f64);
    let mut ties = 0.0;
    for col in ranks.column_iter() {
        let mut v: Vec<f64> = col.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < v.len() {
            let mut j = i;
            while j + 1 < v.len() && v[j + 1] == v[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            ties += t * t * t - t;
            i = j + 1;
        }
    }
    let correction = 1.0 - ties / (pf * af * (af * af - 1.0));
    let centre = (af + 1.0) / 2.0;
    let ss: f64 = ranks
        .row_iter()
        .map(|r| (r.sum() / pf - centre).powi(2))
        .sum();
    let raw = 12.0 * pf / (af * (af + 1.0)) * ss;
    if correction <= 0.0 || raw <= 0.0 {
        return Ok(TestResult {
            statistic: 0.0,
            p_value: 1.0,
        });
    }
    let statistic = raw / correction;
    let chi = ChiSquared::new(af - 1.0).expect("positive degrees of freedom");
    Ok(TestResult {
        statistic,
        p_value: chi.sf(statistic),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    TwoSided,
    /// First sample tends to be larger.
    Greater,
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences `a − b`.
    pub statistic: f64,
    pub p_value: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub exact: bool,
    /// Every difference was zero; `p_value` is 1 by convention.
    pub all_zero: bool,
}

/// Null distribution of the doubled signed-rank statistic: `counts[k]` is
/// the number of sign patterns whose positive doubled ranks sum to `k`.
fn exact_counts(doubled: &[usize]) -> Vec<f64> {
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in doubled {
        for k in (0..=reach).rev() {
            if counts[k] != 0.0 {
                counts[k + r] += counts[k];
            }
        }
        reach += r;
    }
    counts
}

/// Paired Wilcoxon signed-rank test of `a` against `b`. Zero differences
/// are dropped; the exact null distribution (ties included) is used for up to
/// [`WILCOXON_EXACT_MAX`] pairs, the tie- and continuity-corrected normal
/// approximation above.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], alternative: Alternative) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            p_value: 1.0,
            n: 0,
            exact: true,
            all_zero: true,
        });
    }
    let abs: Vec<f64> = d.iter().map(|v| -v.abs()).collect();
    // rank_descending on negated magnitudes gives rank 1 to the smallest |d|.
    let ranks = rank_descending(&abs);
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();

    if n <= WILCOXON_EXACT_MAX {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let counts = exact_counts(&doubled);
        let total: f64 = counts.iter().sum();
        let w2 = (2.0 * w_plus).round() as usize;
        let upper = counts[w2..].iter().sum::<f64>() / total;
        let lower = counts[..=w2].iter().sum::<f64>() / total;
        let p = match alternative {
            Alternative::Greater => upper,
            Alternative::Less => lower,
            Alternative::TwoSided => (2.0 * upper.min(lower)).min(1.0),
        };
        return Ok(WilcoxonResult {
            statistic: w_plus,
            p_value: p,
            n,
            exact: true,
            all_zero: false,
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = ranks.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let sd = var.sqrt();
    let norm = Normal::new(0.0, 1.0).expect("valid parameters");
    let diff = w_plus - mean;
    let p = match alternative {
        Alternative::Greater => norm.sf((diff - 0.5) / sd),
        Alternative::Less => norm.cdf((diff + 0.5) / sd),
        Alternative::TwoSided => {
            let z = (diff.abs() - 0.5).max(0.0) / sd;
            (2.0 * norm.sf(z)).min(1.0)
        }
    };
    Ok(WilcoxonResult {
        statistic: w_plus,
        p_value: p,
        n,
        exact: false,
        all_zero: false,
    })
}

/// Holm step-down: `true` marks a rejected hypothesis, in input order.
pub fn holm_correct(p_values: &[f64], alpha: f64) -> Vec<bool> {
    let k = p_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut reject = vec![false; k];
    for (i, &idx) in order.iter().enumerate() {
        if p_values[idx] <= alpha / (k - i) as f64 {
            reject[idx] = true;
        } else {
            break;
        }
    }
    reject
}

#[derive(Debug, Clone, Serialize)]
pub struct PairwiseComparison {
    pub first: String,
    pub second: String,
    pub wilcoxon: WilcoxonResult,
    pub reject: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankReport {
    pub table: ResultTable,
    #[serde(serialize_with = "ser_matrix")]
    pub ranks: DMatrix<f64>,
    pub mean_ranks: Vec<f64>,
    /// Absent with fewer than two algorithms or problems.
    pub friedman: Option<TestResult>,
    pub pairwise: Vec<PairwiseComparison>,
    pub alpha: f64,
    pub notes: Vec<String>,
}

/// Full ranking protocol. Pairwise tests pair the final best values of two
/// algorithms over every (problem, seed) cell.
pub fn rank_report(runs: &[RunSummary], alpha: f64, alternative: Alternative) -> std::result::Result<RankReport, Vec<MissingCell>> {
    let table = ResultTable::from_runs(runs)?;
    let g = grid(runs)?;
    let ranks = rank_table(&table.medians);
    let mean_ranks = ranks.row_iter().map(|r| r.mean()).collect();
    let mut notes = Vec::new();
    let friedman = match friedman_test(&ranks) {
        Ok(t) => Some(t),
        Err(_) => {
            notes.push(format!(
                "Friedman test skipped: needs at least two algorithms and two problems (have {} and {})",
                table.algorithms.len(),
                table.problems.len()
            ));
            None
        }
    };
    let paired = |alg: &str| -> Vec<f64> {
        let mut v = Vec::new();
        for p in &g.problems {
            for s in &g.seeds {
                v.push(g.cells[&(alg, p.as_str(), *s)].final_best());
            }
        }
        v
    };
    let mut pairwise = Vec::new();
    for i in 0..table.algorithms.len() {
        for j in i + 1..table.algorithms.len() {
            let (a, b) = (&table.algorithms[i], &table.algorithms[j]);
            let w = wilcoxon_signed_rank(&paired(a), &paired(b), alternative).expect("equal lengths");
            pairwise.push(PairwiseComparison {
                first: a.clone(),
                second: b.clone(),
                wilcoxon: w,
                reject: false,
            });
        }
    }
    let ps: Vec<f64> = pairwise.iter().map(|c| c.wilcoxon.p_value).collect();
    for (c, r) in pairwise.iter_mut().zip(holm_correct(&ps, alpha)) {
        c.reject = r;
    }
    Ok(RankReport {
        table,
        ranks,
        mean_ranks,
        friedman,
        pairwise,
        alpha,
        notes,
    })
}

impl RankReport {
    pub fn to_markdown(&self) -> String {
        let t = &self.table;
        let mut s = String::new();
        s.push_str(&format!("| algorithm | {} | mean rank |\n", t.problems.join(" | ")));
        s.push_str(&format!("|---|{}---|\n", "---|".repeat(t.problems.len())));
        for (i, a) in t.algorithms.iter().enumerate() {
            let cells: Vec<String> = (0..t.problems.len())
                .map(|j| format!("{:.4} ({})", t.medians[(i, j)], self.ranks[(i, j)]))
                .collect();
            s.push_str(&format!("| {a} | {} | {:.3} |\n", cells.join(" | "), self.mean_ranks[i]));
        }
        s.push_str(&format!("\nSeeds per cell: {}\n", t.seeds_per_cell));
        if let Some(f) = self.friedman {
            s.push_str(&format!("\nFriedman: chi2 = {:.4}, p = {:.4e}\n", f.statistic, f.p_value));
        }
        if !self.pairwise.is_empty() {
            s.push_str(&format!("\nPairwise Wilcoxon (Holm, alpha = {}):\n\n", self.alpha));
            s.push_str("| first | second | W+ | n | p | reject |\n|---|---|---|---|---|---|\n");
            for c in &self.pairwise {
                s.push_str(&format!(
                    "| {} | {} | {} | {} | {:.4e} | {} |\n",
                    c.first, c.second, c.wilcoxon.statistic, c.wilcoxon.n, c.wilcoxon.p_value, c.reject
                ));
            }
        }
        for n in &self.notes {
            s.push_str(&format!("\n{n}\n"));
        }
        s
    }
}

/// Average rank per algorithm at each evaluation index, re-ranking the
/// per-problem medians of `best_y` at every index. Runs are truncated to the
/// shortest one.
pub fn rank_over_iterations(runs: &[RunSummary]) -> std::result::Result<(Vec<String>, Vec<Vec<f64>>), Vec<MissingCell>> {
    let g = grid(runs)?;
    let len = runs.iter().map(|r| r.best_y.len()).min().unwrap_or(0);
    let mut out = vec![Vec::with_capacity(len); g.algorithms.len()];
    for k in 0..len {
        let medians = DMatrix::from_fn(g.algorithms.len(), g.problems.len(), |i, j| {
            let vals: Vec<f64> = g
                .seeds
                .iter()
                .map(|s| g.cells[&(g.algorithms[i].as_str(), g.problems[j].as_str(), *s)].best_y[k])
                .collect();
            median(&vals)
        });
        for (i, r) in rank_table(&medians).row_iter().enumerate() {
            out[i].push(r.mean());
        }
    }
    Ok((g.algorithms, out))
}
