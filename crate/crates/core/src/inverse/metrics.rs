//! Pointwise error statistics between a reconstructed and a reference history.

use crate::error::{Error, Result};
use crate::forward::TransientSolution;

/// Reference temperatures below this magnitude (°C) are left out of relative errors.
pub const RELATIVE_FLOOR: f64 = 0.1;

/// Errors at one compared time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepError {
    pub time: f64,
    pub avg_rel_pct: f64,
    pub max_rel_pct: f64,
    pub avg_abs: f64,
    pub max_abs: f64,
}

/// Summary over a whole run. Averages are taken over nodes first, then over
/// time; maxima over every node and time.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub avg_rel_pct: f64,
    pub max_rel_pct: f64,
    pub avg_abs: f64,
    pub max_abs: f64,
    /// Node-time pairs excluded from the relative metrics.
    pub excluded_from_relative: usize,
    pub per_step: Vec<StepError>,
}

/// `abs = |T_rec − T_ref|` and `rel = abs / |T_ref| · 100`, both in °C.
pub fn error_metrics(reconstructed: &TransientSolution, reference: &TransientSolution) -> Result<ErrorReport> {
    let mut per_step = Vec::with_capacity(reconstructed.len());
    let mut excluded = 0;
    for (s, &time) in reconstructed.times.iter().enumerate() {
        let r = reference
            .index_of(time)
            .ok_or_else(|| Error::Misaligned(format!("reference has no field at t = {time} s")))?;
        let rec = &reconstructed.fields[s];
        let refr = &reference.fields[r];
        if rec.len() != refr.len() {
            return Err(Error::InvalidArgument(
                "reconstructed and reference fields differ in size".into(),
            ));
        }
        let (mut sum_abs, mut max_abs, mut sum_rel, mut max_rel, mut n_rel) = (0.0, 0.0_f64, 0.0, 0.0_f64, 0usize);
        for (a, b) in rec.iter().zip(refr) {
            let abs = (a - b).abs();
            sum_abs += abs;
            max_abs = max_abs.max(abs);
            if b.abs() < RELATIVE_FLOOR {
                excluded += 1;
                continue;
            }
            let rel = abs / b.abs() * 100.0;
            sum_rel += rel;
            max_rel = max_rel.max(rel);
            n_rel += 1;
        }
        per_step.push(StepError {
            time,
            avg_rel_pct: if n_rel > 0 { sum_rel / n_rel as f64 } else { f64::NAN },
            max_rel_pct: max_rel,
            avg_abs: if rec.is_empty() {
                0.0
            } else {
                sum_abs / rec.len() as f64
            },
            max_abs,
        });
    }
    let mean = |f: &dyn Fn(&StepError) -> f64| {
        let vals: Vec<f64> = per_step.iter().map(f).filter(|v| !v.is_nan()).collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    Ok(ErrorReport {
        avg_rel_pct: mean(&|e| e.avg_rel_pct),
        max_rel_pct: per_step.iter().map(|e| e.max_rel_pct).fold(0.0, f64::max),
        avg_abs: mean(&|e| e.avg_abs),
        max_abs: per_step.iter().map(|e| e.max_abs).fold(0.0, f64::max),
        excluded_from_relative: excluded,
        per_step,
    })
}
