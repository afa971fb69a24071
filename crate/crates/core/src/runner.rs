//! End-to-end commands on a case file: forward reference generation,
//! reconstruction, c3 sweeps and multiple-option generation. Every command
//! writes its results into an output directory.

use std::path::{Path, PathBuf};

use crate::assembly::assemble_flux_load;
use crate::error::{Error, Result};
use crate::forward::{run_forward, sample_measurements, TransientSolution};
use crate::inverse::{
    error_metrics, reconstruct_series_with, ErrorReport, ReconstructionConfig, ReconstructionRun, StepDiagnostics,
};
use crate::io::{
    read_measurements, read_reference, write_error_series, write_error_summary, write_generation_summary,
    write_heat_report, write_measurements, write_reference, write_step_log, write_sweep_table, write_vtk, CaseConfig,
    CaseModel, GenerationRow, SweepRow,
};
use crate::mesh::Mesh;
use crate::multichoice::{generate_options_with, GenerationConfig, GenerationRun, HeatGoal};

/// Name of the reference file written by [`forward`].
pub const REFERENCE_FILE: &str = "reference.csv";

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_snapshots(
    out: &Path,
    prefix: &str,
    mesh: &Mesh,
    solution: &TransientSolution,
    every: Option<usize>,
) -> Result<Vec<PathBuf>> {
    let Some(every) = every.filter(|&e| e > 0) else {
        return Ok(Vec::new());
    };
    let last = solution.len().saturating_sub(1);
    let mut written = Vec::new();
    for s in (0..solution.len()).filter(|&s| s % every == 0 || s == last) {
        let path = out.join(format!("{prefix}_{s:05}.vtk"));
        let title = format!("{prefix} t = {} s", solution.times[s]);
        let mut fields: Vec<(&str, &[f64])> = vec![("temperature", &solution.fields[s])];
        if let Some(fq) = &solution.recovered_fq {
            fields.push(("flux_load", &fq[s]));
        }
        write_vtk(&path, mesh, &title, &fields)?;
        written.push(path);
    }
    Ok(written)
}

/// Overrides and output settings of [`forward`].
#[derive(Clone, Debug, Default)]
pub struct ForwardOptions {
    pub dt_ref: Option<f64>,
    pub snapshot_every: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct ForwardSummary {
    pub steps: usize,
    pub dt_ref: f64,
    pub max_temperature: f64,
    pub files: Vec<PathBuf>,
}

/// Computes the reference solution from the ambient steady state, then writes
/// `reference.csv`, one `<layout>.csv` per configured layout and optional VTK
/// snapshots.
pub fn forward(
    case: &CaseConfig,
    model: &CaseModel,
    options: &ForwardOptions,
    out: &Path,
    mut on_step: impl FnMut(usize, f64),
) -> Result<ForwardSummary> {
    let dt = options.dt_ref.unwrap_or(case.forward.dt_ref);
    let stride = crate::forward::step_count(case.forward.reference_interval, dt, "reference interval")?;
    create_dir(out)?;
    let unit = assemble_flux_load(&model.mesh, &model.sets, 1.0)?;
    let n = model.mesh.n_nodes();
    let mut step = 0;
    let solution = run_forward(
        &model.system,
        &vec![case.material.t_ambient; n],
        dt,
        case.forward.t_end,
        |t| {
            step += 1;
            on_step(step, t);
            let q = case.forward.flux.q_inward(t);
            unit.iter().map(|u| u * q).collect()
        },
    )?;

    let mut files = Vec::new();
    let reference = out.join(REFERENCE_FILE);
    write_reference(&reference, &solution, stride)?;
    files.push(reference);
    for layout in &case.reconstruction.layouts {
        let ids = layout_nodes(&model.mesh, &layout.points)?;
        let series = sample_measurements(&solution, &ids, dt, case.forward.noise_stddev, case.forward.noise_seed)?;
        let path = out.join(format!("{}.csv", layout.name));
        write_measurements(&path, &series)?;
        files.push(path);
    }
    files.extend(write_snapshots(
        out,
        "forward",
        &model.mesh,
        &solution,
        options.snapshot_every,
    )?);
    let max_temperature = solution
        .fields
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ForwardSummary {
        steps: solution.len() - 1,
        dt_ref: dt,
        max_temperature,
        files,
    })
}

/// Snaps sensor positions to mesh nodes; two sensors on one node are an error.
pub fn layout_nodes(mesh: &Mesh, points: &[[f64; 3]]) -> Result<Vec<usize>> {
    let ids: Vec<usize> = points.iter().map(|&p| mesh.nearest_node(p)).collect();
    for (i, a) in ids.iter().enumerate() {
        if let Some(j) = ids[..i].iter().position(|b| b == a) {
            return Err(Error::InvalidArgument(format!(
                "sensors {j} and {i} snap to the same node {a}; refine the mesh or move a sensor"
            )));
        }
    }
    Ok(ids)
}

/// Overrides and inputs of [`reconstruct`].
#[derive(Clone, Debug, Default)]
pub struct ReconstructOptions {
    pub dt_rec: Option<f64>,
    pub c3: Option<f64>,
    pub snapshot_every: Option<usize>,
    pub reference: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct ReconstructSummary {
    pub run: ReconstructionRun,
    pub errors: Option<ErrorReport>,
    pub files: Vec<PathBuf>,
}

fn effective_config(case: &CaseConfig, dt_rec: Option<f64>, c3: Option<f64>) -> ReconstructionConfig {
    let mut cfg = case.reconstruction_config();
    if let Some(dt) = dt_rec {
        cfg.dt_rec = dt;
    }
    if let Some(c3) = c3 {
        cfg.weights.c3 = c3;
    }
    cfg
}

fn check_nodes(model: &CaseModel, ids: &[usize]) -> Result<()> {
    let n_nodes = model.mesh.n_nodes();
    match ids.iter().find(|&&i| i >= n_nodes) {
        Some(&node) => Err(Error::UnknownNode { node, n_nodes }),
        None => Ok(()),
    }
}

/// Reconstructs the field history from a measurement file. Writes
/// `reconstruction_steps.csv`, and with a reference also
/// `errors_summary.csv` and `errors_per_step.csv`.
pub fn reconstruct(
    case: &CaseConfig,
    model: &CaseModel,
    measurements: &Path,
    options: &ReconstructOptions,
    out: &Path,
    on_step: impl FnMut(&StepDiagnostics),
) -> Result<ReconstructSummary> {
    let series = read_measurements(measurements)?;
    check_nodes(model, &series.node_ids)?;
    let reference = options
        .reference
        .as_ref()
        .map(|p| read_reference(p, model.mesh.n_nodes()))
        .transpose()?;
    let cfg = effective_config(case, options.dt_rec, options.c3);
    create_dir(out)?;
    let run = reconstruct_series_with(&model.system, &cfg, &series, on_step)?;

    let mut files = Vec::new();
    let log = out.join("reconstruction_steps.csv");
    write_step_log(&log, &run.diagnostics)?;
    files.push(log);
    let errors = match &reference {
        Some(r) => {
            let report = error_metrics(&run.solution, r)?;
            let summary = out.join("errors_summary.csv");
            write_error_summary(&summary, &[("reconstruction", &report)])?;
            let series_path = out.join("errors_per_step.csv");
            write_error_series(&series_path, &report.per_step)?;
            files.extend([summary, series_path]);
            Some(report)
        }
        None => None,
    };
    files.extend(write_snapshots(
        out,
        "reconstruction",
        &model.mesh,
        &run.solution,
        options.snapshot_every,
    )?);
    Ok(ReconstructSummary { run, errors, files })
}

/// Inputs of [`sweep_c3`].
#[derive(Clone, Debug)]
pub struct SweepInputs {
    pub measurements: PathBuf,
    pub reference: PathBuf,
    pub grid: Vec<f64>,
    pub dt_rec: Option<f64>,
}

/// Reconstructs once per c3 value and writes `c3_sweep.csv`. Runs that fail
/// (for example a rank-deficient c3 = 0 problem) are recorded, not raised.
pub fn sweep_c3(
    case: &CaseConfig,
    model: &CaseModel,
    inputs: &SweepInputs,
    out: &Path,
    mut on_step: impl FnMut(f64, &StepDiagnostics),
) -> Result<Vec<SweepRow>> {
    let grid = &inputs.grid;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("the c3 grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
        return Err(Error::InvalidArgument(format!("c3 values must be >= 0, got {bad}")));
    }
    let series = read_measurements(&inputs.measurements)?;
    check_nodes(model, &series.node_ids)?;
    let reference = read_reference(&inputs.reference, model.mesh.n_nodes())?;
    create_dir(out)?;
    let mut rows = Vec::with_capacity(grid.len());
    for &c3 in grid {
        let cfg = effective_config(case, inputs.dt_rec, Some(c3));
        let outcome = reconstruct_series_with(&model.system, &cfg, &series, |d| on_step(c3, d))
            .and_then(|run| error_metrics(&run.solution, &reference));
        let outcome = match outcome {
            Ok(r) => Ok(r),
            Err(e) if e.is_numerical() => Err(e.to_string()),
            Err(e) => return Err(e),
        };
        rows.push(SweepRow { c3, outcome });
    }
    write_sweep_table(out.join("c3_sweep.csv"), &rows)?;
    Ok(rows)
}

/// Overrides of [`generate`].
#[derive(Clone, Debug, Default)]
pub struct GenerateOptions {
    pub seeds: Option<Vec<u64>>,
    pub c4: Option<Vec<f64>>,
    pub jobs: Option<usize>,
    pub snapshot_every: Option<usize>,
}

#[derive(Debug)]
pub struct GenerateSummary {
    pub configs: Vec<GenerationConfig>,
    pub runs: Vec<Result<GenerationRun>>,
    pub rows: Vec<GenerationRow>,
    pub files: Vec<PathBuf>,
}

/// Generates every (c4, seed) option. Writes `option_NN_heat.csv` per option,
/// `generation_summary.csv`, the final field of each option as VTK, and
/// optional snapshots.
pub fn generate(
    case: &CaseConfig,
    model: &CaseModel,
    options: &GenerateOptions,
    out: &Path,
    on_step: impl Fn(usize, &StepDiagnostics) + Sync,
) -> Result<GenerateSummary> {
    let section = case
        .generation
        .as_ref()
        .ok_or_else(|| Error::config("generation", "section is required for generation"))?;
    let seeds = options.seeds.clone().unwrap_or_else(|| section.seeds.clone());
    let c4s = options.c4.clone().unwrap_or_else(|| section.c4.clone());
    if seeds.is_empty() || c4s.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one seed and one c4 value are required".into(),
        ));
    }
    let template = case.generation_configs()?[0];
    let configs: Vec<GenerationConfig> = c4s
        .iter()
        .flat_map(|&c4| seeds.iter().map(move |&seed| GenerationConfig { c4, seed, ..template }))
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let goal: &HeatGoal = &section.heat_goal;
    create_dir(out)?;
    let runs = generate_options_with(&model.system, &configs, goal, options.jobs, on_step)?;

    let mut files = Vec::new();
    let mut rows = Vec::with_capacity(runs.len());
    for (i, (cfg, run)) in configs.iter().zip(&runs).enumerate() {
        let option = i + 1;
        let outcome = match run {
            Ok(r) => {
                let heat = out.join(format!("option_{option:02}_heat.csv"));
                write_heat_report(&heat, &r.heat)?;
                files.push(heat);
                let last = r.solution.len() - 1;
                let snap = out.join(format!("option_{option:02}_final.vtk"));
                let fq = r
                    .solution
                    .recovered_fq
                    .as_ref()
                    .map(|f| f[last].as_slice())
                    .unwrap_or(&[]);
                let mut fields: Vec<(&str, &[f64])> = vec![("temperature", &r.solution.fields[last])];
                if !fq.is_empty() {
                    fields.push(("flux_load", fq));
                }
                write_vtk(
                    &snap,
                    &model.mesh,
                    &format!("option {option} t = {} s", r.solution.times[last]),
                    &fields,
                )?;
                files.push(snap);
                files.extend(write_snapshots(
                    out,
                    &format!("option_{option:02}"),
                    &model.mesh,
                    &r.solution,
                    options.snapshot_every,
                )?);
                Ok(r.heat_summary())
            }
            Err(e) => Err(e.to_string()),
        };
        rows.push(GenerationRow {
            option,
            c4: cfg.c4,
            seed: cfg.seed,
            outcome,
        });
    }
    let summary = out.join("generation_summary.csv");
    write_generation_summary(&summary, &rows)?;
    files.push(summary);
    Ok(GenerateSummary {
        configs,
        runs,
        rows,
        files,
    })
}
