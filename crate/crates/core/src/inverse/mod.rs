//! Field reconstruction from sparse point measurements.
//!
//! Each time step minimizes `‖r(T)‖²` over the nodal temperatures, where `r`
//! stacks the FE-equation residual off Γq, the measurement misfit and the
//! boundary-load smoothing rows. The load on Γq is never an unknown: it is
//! recovered from `T` through the Γq rows of the global system.

mod metrics;
mod optimize;
mod stack;

use std::time::Instant;

pub use metrics::{error_metrics, ErrorReport, StepError};
pub use optimize::{gn_iterate, minimize, ncg_iterate, GnWorkspace, NcgState, StageTrace};
pub use stack::{
    build_generation_stack, build_reconstruction_stack, fq_to_nodal, loss_and_gradient, recover_fq,
    regularization_rows, LossWeights, ResidualStack, RowKind, StackMode,
};

pub(crate) use stack::heat_row;

use crate::assembly::AssembledSystem;
use crate::error::{Error, Result};
use crate::forward::{MeasurementSeries, TransientSolution};

/// Per-run optimizer settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReconstructionConfig {
    pub dt_rec: f64,
    pub s_ncg: usize,
    pub s_gn: usize,
    pub weights: LossWeights,
}

impl ReconstructionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_rec > 0.0) || !self.dt_rec.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "dt_rec must be positive, got {}",
                self.dt_rec
            )));
        }
        if self.s_ncg + self.s_gn == 0 {
            return Err(Error::InvalidArgument(
                "at least one optimizer iteration is required".into(),
            ));
        }
        self.weights.validate_reconstruction()
    }
}

/// What happened while solving one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub time: f64,
    pub trace: StageTrace,
    pub wall_time_s: f64,
}

impl StepDiagnostics {
    pub fn loss(&self) -> f64 {
        self.trace.final_loss()
    }
}

/// Result of one reconstructed step: field, recovered nodal load (zero off Γq)
/// and diagnostics.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub field: Vec<f64>,
    pub fq: Vec<f64>,
    pub diagnostics: StepDiagnostics,
}

/// Reconstructs one step. `dt = ∞` solves the steady problem.
///
/// The optimizer starts from a uniform field at the mean of the step's
/// measurements.
pub fn reconstruct_step(
    system: &AssembledSystem,
    config: &ReconstructionConfig,
    measurements: &[(usize, f64)],
    t_prev: &[f64],
    dt: f64,
    workspace: &mut GnWorkspace,
) -> Result<StepResult> {
    if measurements.is_empty() {
        return Err(Error::InvalidArgument("at least one measurement is required".into()));
    }
    let start = Instant::now();
    let stack = build_reconstruction_stack(system, measurements, t_prev, dt, &config.weights)?;
    let mean = measurements.iter().map(|m| m.1).sum::<f64>() / measurements.len() as f64;
    let (field, trace) = minimize(&stack, vec![mean; system.n_nodes], config.s_ncg, config.s_gn, workspace)?;
    let fq = fq_to_nodal(&system.boundary, &recover_fq(system, &field, t_prev, dt)?);
    Ok(StepResult {
        field,
        fq,
        diagnostics: StepDiagnostics {
            step: 0,
            time: 0.0,
            trace,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    })
}

/// A reconstructed history with per-step diagnostics (index 0 is the steady
/// reconstruction at `t = 0`).
#[derive(Clone, Debug)]
pub struct ReconstructionRun {
    pub solution: TransientSolution,
    pub diagnostics: Vec<StepDiagnostics>,
}

/// Steady reconstruction at `t = 0`, then one step every `dt_rec` up to the last
/// measurement time.
pub fn reconstruct_series(
    system: &AssembledSystem,
    config: &ReconstructionConfig,
    measurements: &MeasurementSeries,
) -> Result<ReconstructionRun> {
    reconstruct_series_with(system, config, measurements, |_| {})
}

/// [`reconstruct_series`] with a callback after every step.
pub fn reconstruct_series_with<F>(
    system: &AssembledSystem,
    config: &ReconstructionConfig,
    measurements: &MeasurementSeries,
    mut on_step: F,
) -> Result<ReconstructionRun>
where
    F: FnMut(&StepDiagnostics),
{
    config.validate()?;
    let last = *measurements
        .times
        .last()
        .ok_or_else(|| Error::InvalidArgument("measurement series is empty".into()))?;
    let steps = ((last / config.dt_rec) + 1e-9).floor() as usize;
    let mut workspace = GnWorkspace::new();

    let mut times = Vec::with_capacity(steps + 1);
    let mut fields: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let mut loads = Vec::with_capacity(steps + 1);
    let mut diagnostics = Vec::with_capacity(steps + 1);
    for s in 0..=steps {
        let time = s as f64 * config.dt_rec;
        let column = measurements.at_time(time).ok_or(Error::MissingMeasurement { time })?;
        let (dt, prev) = match fields.last() {
            None => (f64::INFINITY, vec![0.0; system.n_nodes]),
            Some(p) => (config.dt_rec, p.clone()),
        };
        let mut res = reconstruct_step(system, config, &column, &prev, dt, &mut workspace)?;
        res.diagnostics.step = s;
        res.diagnostics.time = time;
        on_step(&res.diagnostics);
        times.push(time);
        fields.push(res.field);
        loads.push(res.fq);
        diagnostics.push(res.diagnostics);
    }
    Ok(ReconstructionRun {
        solution: TransientSolution {
            times,
            fields,
            recovered_fq: Some(loads),
        },
        diagnostics,
    })
}
