//! Trace CSV files: one row per objective evaluation.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::RunTrace;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str =
    "run_id,algorithm,problem,dim,seed,iteration,y,best_y,regret,r_selected,elapsed_alg_s,elapsed_total_s";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub run_id: String,
    pub algorithm: String,
    pub problem: String,
    pub dim: usize,
    pub seed: u64,
    pub iteration: usize,
    pub y: f64,
    pub best_y: f64,
    /// Empty when the optimum is unknown.
    pub regret: Option<f64>,
    pub r_selected: usize,
    pub elapsed_alg_s: f64,
    pub elapsed_total_s: f64,
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("trace CSV: {other:?}")),
    }
}

/// Flattens a trace into rows. Regret is clamped at zero; a best value above
/// the stated optimum is logged since it points to wrong optimum metadata.
pub fn trace_rows(run_id: &str, trace: &RunTrace) -> Vec<TraceRow> {
    trace
        .records
        .iter()
        .map(|r| TraceRow {
            run_id: run_id.to_string(),
            algorithm: trace.algorithm.clone(),
            problem: trace.problem.clone(),
            dim: trace.dim,
            seed: trace.seed,
            iteration: r.iteration,
            y: r.y,
            best_y: r.best_y,
            regret: trace.f_star.map(|f| crate::stats::clamp_regret(f, r.best_y)),
            r_selected: r.r_selected,
            elapsed_alg_s: r.elapsed_alg_s,
            elapsed_total_s: r.elapsed_total_s,
        })
        .collect()
}

pub fn write_rows<W: Write>(out: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(',')).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace<W: Write>(out: W, run_id: &str, trace: &RunTrace) -> Result<()> {
    write_rows(out, &trace_rows(run_id, trace))
}

pub fn write_trace_file(path: &Path, run_id: &str, trace: &RunTrace) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_trace(std::io::BufWriter::new(file), run_id, trace)
}

/// Reads rows, rejecting files whose header differs from [`CSV_HEADER`].
pub fn read_rows<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(Error::InvalidArgument(format!(
            "unexpected trace header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

pub fn read_trace_file(path: &Path) -> Result<Vec<TraceRow>> {
    read_rows(std::fs::File::open(path)?)
}
