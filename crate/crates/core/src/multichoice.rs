//! Generation of several distinct fields whose total boundary heat follows a
//! prescribed history.
//!
//! Without measurements the loss keeps the FE residual, the boundary-load
//! smoothing (plus an edge/corner link row) and a total-heat row. That loss
//! has a nontrivial set of minimizers, so each option starts every step from
//! its own random field and the optimizer settles on a different one.

use std::time::Instant;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::assembly::AssembledSystem;
use crate::error::{Error, Result};
use crate::forward::{step_count, TransientSolution};
use crate::inverse::{
    build_generation_stack, fq_to_nodal, heat_row, minimize, recover_fq, GnWorkspace, LossWeights, StepDiagnostics,
};

/// Target total boundary heat in W as a function of time.
#[derive(Clone, Debug, PartialEq)]
pub enum HeatGoal {
    /// `Q(t) = a t² + b t`
    Quadratic { a: f64, b: f64 },
    /// Explicit `(time, Q)` values; every generated step time must be listed.
    Samples(Vec<(f64, f64)>),
}

impl HeatGoal {
    pub fn value_at(&self, t: f64) -> Result<f64> {
        let v = match self {
            HeatGoal::Quadratic { a, b } => a * t * t + b * t,
            HeatGoal::Samples(s) => s
                .iter()
                .find(|(ts, _)| (ts - t).abs() <= 1e-9)
                .map(|p| p.1)
                .ok_or_else(|| Error::Misaligned(format!("heat goal has no value at t = {t} s")))?,
        };
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("heat goal is not finite at t = {t} s")));
        }
        Ok(v)
    }
}

/// Settings of one generated option.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenerationConfig {
    pub dt_rec: f64,
    pub t_end: f64,
    pub s_ncg: usize,
    pub s_gn: usize,
    pub c1: f64,
    pub c3: f64,
    pub c4: f64,
    /// Bounds of the uniform distribution the per-step initial guesses are drawn from.
    pub t_min: f64,
    pub t_max: f64,
    pub seed: u64,
}

impl GenerationConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            c1: self.c1,
            c2: 0.0,
            c3: self.c3,
            c4: self.c4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights().validate_generation()?;
        if !(self.t_min < self.t_max) || !self.t_min.is_finite() || !self.t_max.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "initial-guess interval [{}, {}) is empty",
                self.t_min, self.t_max
            )));
        }
        if self.s_ncg + self.s_gn == 0 {
            return Err(Error::InvalidArgument(
                "at least one optimizer iteration is required".into(),
            ));
        }
        step_count(self.t_end, self.dt_rec, "generation run").map(|_| ())
    }
}

/// `Σ_{i∈Γ} (C_i (T − T_prev)/dt + K_base,i T)`, in W.
pub fn total_heat(system: &AssembledSystem, t_next: &[f64], t_prev: &[f64], dt: f64) -> Result<f64> {
    if t_next.len() != system.n_nodes {
        return Err(Error::InvalidArgument("field length does not match the system".into()));
    }
    let (row, constant) = heat_row(system, t_prev, dt)?;
    Ok(row.iter().map(|&(c, v)| v * t_next[c]).sum::<f64>() + constant)
}

/// I.i.d. uniform values in `[t_min, t_max)`, determined by `(seed, step_index)`.
pub fn random_initial_field(n_nodes: usize, t_min: f64, t_max: f64, seed: u64, step_index: u64) -> Result<Vec<f64>> {
    let dist = Uniform::new(t_min, t_max)
        .map_err(|e| Error::InvalidArgument(format!("initial-guess interval [{t_min}, {t_max}): {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step_index);
    Ok((0..n_nodes).map(|_| dist.sample(&mut rng)).collect())
}

/// Total heat against its goal at one generated step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatRecord {
    pub step: usize,
    pub time: f64,
    pub total_heat: f64,
    pub goal: f64,
    pub abs_err: f64,
    /// Percent of `|goal|`; NaN when the goal is zero.
    pub rel_err_pct: f64,
}

/// One generated option.
#[derive(Clone, Debug)]
pub struct GenerationRun {
    pub config: GenerationConfig,
    pub solution: TransientSolution,
    pub heat: Vec<HeatRecord>,
    pub diagnostics: Vec<StepDiagnostics>,
}

/// Time averages of the heat error of one option.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatErrorSummary {
    pub avg_rel_pct: f64,
    pub max_rel_pct: f64,
    pub avg_abs: f64,
    pub max_abs: f64,
}

impl GenerationRun {
    pub fn heat_summary(&self) -> HeatErrorSummary {
        let rel: Vec<f64> = self
            .heat
            .iter()
            .map(|h| h.rel_err_pct)
            .filter(|v| !v.is_nan())
            .collect();
        let avg = |v: &[f64]| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let abs: Vec<f64> = self.heat.iter().map(|h| h.abs_err).collect();
        HeatErrorSummary {
            avg_rel_pct: avg(&rel),
            max_rel_pct: rel.iter().copied().fold(0.0, f64::max),
            avg_abs: avg(&abs),
            max_abs: abs.iter().copied().fold(0.0, f64::max),
        }
    }
}

/// Generates one option starting from the ambient steady state at `t = 0`.
pub fn generate_option(system: &AssembledSystem, config: &GenerationConfig, goal: &HeatGoal) -> Result<GenerationRun> {
    generate_option_with(system, config, goal, |_| {})
}

/// [`generate_option`] with a callback after every step.
pub fn generate_option_with<F>(
    system: &AssembledSystem,
    config: &GenerationConfig,
    goal: &HeatGoal,
    mut on_step: F,
) -> Result<GenerationRun>
where
    F: FnMut(&StepDiagnostics),
{
    config.validate()?;
    let steps = step_count(config.t_end, config.dt_rec, "generation run")?;
    let n = system.n_nodes;
    let weights = config.weights();
    let mut workspace = GnWorkspace::new();

    let mut times = vec![0.0];
    let mut fields = vec![vec![system.t_ambient; n]];
    let mut loads = vec![vec![0.0; n]];
    let mut heat = Vec::with_capacity(steps);
    let mut diagnostics = Vec::with_capacity(steps);
    for s in 1..=steps {
        let start = Instant::now();
        let time = s as f64 * config.dt_rec;
        let q_goal = goal.value_at(time)?;
        let prev = fields.last().expect("initial field present");
        let stack = build_generation_stack(system, q_goal, prev, config.dt_rec, &weights)?;
        let init = random_initial_field(n, config.t_min, config.t_max, config.seed, s as u64)?;
        let (field, trace) = minimize(&stack, init, config.s_ncg, config.s_gn, &mut workspace)?;
        let total = total_heat(system, &field, prev, config.dt_rec)?;
        let fq = fq_to_nodal(&system.boundary, &recover_fq(system, &field, prev, config.dt_rec)?);
        let abs_err = (total - q_goal).abs();
        heat.push(HeatRecord {
            step: s,
            time,
            total_heat: total,
            goal: q_goal,
            abs_err,
            rel_err_pct: if q_goal != 0.0 {
                abs_err / q_goal.abs() * 100.0
            } else {
                f64::NAN
            },
        });
        let diag = StepDiagnostics {
            step: s,
            time,
            trace,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        on_step(&diag);
        diagnostics.push(diag);
        times.push(time);
        fields.push(field);
        loads.push(fq);
    }
    Ok(GenerationRun {
        config: *config,
        solution: TransientSolution {
            times,
            fields,
            recovered_fq: Some(loads),
        },
        heat,
        diagnostics,
    })
}

/// Generates independent options, optionally in parallel on `jobs` threads.
///
/// Results keep the order of `configs`; a failing option does not stop the others.
pub fn generate_options(
    system: &AssembledSystem,
    configs: &[GenerationConfig],
    goal: &HeatGoal,
    jobs: Option<usize>,
) -> Result<Vec<Result<GenerationRun>>> {
    generate_options_with(system, configs, goal, jobs, |_, _| {})
}

/// [`generate_options`] with a callback receiving the option index after every step.
pub fn generate_options_with<F>(
    system: &AssembledSystem,
    configs: &[GenerationConfig],
    goal: &HeatGoal,
    jobs: Option<usize>,
    on_step: F,
) -> Result<Vec<Result<GenerationRun>>>
where
    F: Fn(usize, &StepDiagnostics) + Sync,
{
    if configs.is_empty() {
        return Err(Error::InvalidArgument("no generation options configured".into()));
    }
    let run = || -> Vec<Result<GenerationRun>> {
        configs
            .par_iter()
            .enumerate()
            .map(|(i, c)| generate_option_with(system, c, goal, |d| on_step(i, d)))
            .collect()
    };
    match jobs {
        None => Ok(run()),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("cannot start {j} worker threads: {e}")))?;
            Ok(pool.install(run))
        }
    }
}

/// Largest nodal difference between two histories over all common steps.
pub fn max_field_difference(a: &TransientSolution, b: &TransientSolution) -> f64 {
    a.fields
        .iter()
        .zip(&b.fields)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}
