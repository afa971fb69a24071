//! CSV reports: error summaries and per-step series, c3 sweeps, step logs and
//! total-heat tracking.
//!
//! Numbers use the shortest decimal form that reads back to the same `f64`,
//! so identical runs produce identical files.

use std::path::Path;

use crate::error::{Error, Result};
use crate::inverse::{ErrorReport, StepDiagnostics, StepError};
use crate::multichoice::{HeatErrorSummary, HeatRecord};

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const SUMMARY_HEADER: [&str; 6] = [
    "run",
    "avg_rel_pct",
    "max_rel_pct",
    "avg_abs_C",
    "max_abs_C",
    "excluded_from_relative",
];
pub const ERROR_SERIES_HEADER: [&str; 5] = ["time_s", "avg_rel_pct", "max_rel_pct", "avg_abs_C", "max_abs_C"];
pub const STEP_LOG_HEADER: [&str; 5] = ["step", "time_s", "initial_loss", "final_loss", "gradient_norm"];
pub const HEAT_HEADER: [&str; 6] = ["step", "time", "total_heat", "goal", "abs_err", "rel_err"];
pub const SWEEP_HEADER: [&str; 6] = ["c3", "status", "avg_rel_pct", "max_rel_pct", "avg_abs_C", "max_abs_C"];
pub const GENERATION_HEADER: [&str; 8] = [
    "option",
    "c4",
    "seed",
    "status",
    "avg_rel_pct",
    "max_rel_pct",
    "avg_abs_W",
    "max_abs_W",
];

/// One labelled row per run with the averaged and maximum errors.
pub fn write_error_summary(path: impl AsRef<Path>, runs: &[(&str, &ErrorReport)]) -> Result<()> {
    write_table(
        path.as_ref(),
        &SUMMARY_HEADER,
        runs.iter().map(|(label, r)| {
            vec![
                label.to_string(),
                num(r.avg_rel_pct),
                num(r.max_rel_pct),
                num(r.avg_abs),
                num(r.max_abs),
                r.excluded_from_relative.to_string(),
            ]
        }),
    )
}

/// Errors at each compared time (averaged over nodes).
pub fn write_error_series(path: impl AsRef<Path>, steps: &[StepError]) -> Result<()> {
    write_table(
        path.as_ref(),
        &ERROR_SERIES_HEADER,
        steps.iter().map(|e| {
            vec![
                num(e.time),
                num(e.avg_rel_pct),
                num(e.max_rel_pct),
                num(e.avg_abs),
                num(e.max_abs),
            ]
        }),
    )
}

/// Optimizer outcome per step. Wall times are left out so reruns compare equal.
pub fn write_step_log(path: impl AsRef<Path>, diagnostics: &[StepDiagnostics]) -> Result<()> {
    write_table(
        path.as_ref(),
        &STEP_LOG_HEADER,
        diagnostics.iter().map(|d| {
            vec![
                d.step.to_string(),
                num(d.time),
                num(d.trace.losses[0]),
                num(d.loss()),
                num(d.trace.gradient_norm),
            ]
        }),
    )
}

/// Total heat against its goal; `rel_err` is in percent.
pub fn write_heat_report(path: impl AsRef<Path>, records: &[HeatRecord]) -> Result<()> {
    write_table(
        path.as_ref(),
        &HEAT_HEADER,
        records.iter().map(|h| {
            vec![
                h.step.to_string(),
                num(h.time),
                num(h.total_heat),
                num(h.goal),
                num(h.abs_err),
                num(h.rel_err_pct),
            ]
        }),
    )
}

/// Outcome of one run in a c3 sweep: its summary, or why it failed.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub c3: f64,
    pub outcome: std::result::Result<ErrorReport, String>,
}

impl SweepRow {
    /// `ok`, `failed: <reason>` or `diverged` when the field is not finite.
    pub fn status(&self) -> String {
        match &self.outcome {
            Ok(r)
                if [r.avg_rel_pct, r.max_rel_pct, r.avg_abs, r.max_abs]
                    .iter()
                    .all(|v| v.is_finite()) =>
            {
                "ok".into()
            }
            Ok(_) => "diverged".into(),
            Err(e) => format!("failed: {e}"),
        }
    }
}

pub fn write_sweep_table(path: impl AsRef<Path>, rows: &[SweepRow]) -> Result<()> {
    write_table(
        path.as_ref(),
        &SWEEP_HEADER,
        rows.iter().map(|r| {
            let mut v = vec![num(r.c3), r.status()];
            match &r.outcome {
                Ok(e) => v.extend([num(e.avg_rel_pct), num(e.max_rel_pct), num(e.avg_abs), num(e.max_abs)]),
                Err(_) => v.extend(std::iter::repeat_n(String::new(), 4)),
            }
            v
        }),
    )
}

/// Heat-error summary of one generated option.
#[derive(Clone, Debug)]
pub struct GenerationRow {
    pub option: usize,
    pub c4: f64,
    pub seed: u64,
    pub outcome: std::result::Result<HeatErrorSummary, String>,
}

pub fn write_generation_summary(path: impl AsRef<Path>, rows: &[GenerationRow]) -> Result<()> {
    write_table(
        path.as_ref(),
        &GENERATION_HEADER,
        rows.iter().map(|r| {
            let mut v = vec![r.option.to_string(), num(r.c4), r.seed.to_string()];
            match &r.outcome {
                Ok(s) => v.extend([
                    "ok".to_string(),
                    num(s.avg_rel_pct),
                    num(s.max_rel_pct),
                    num(s.avg_abs),
                    num(s.max_abs),
                ]),
                Err(e) => {
                    v.push(format!("failed: {e}"));
                    v.extend(std::iter::repeat_n(String::new(), 4));
                }
            }
            v
        }),
    )
}
