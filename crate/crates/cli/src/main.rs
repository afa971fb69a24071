use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use heatrecon_core::io::format_g;
use heatrecon_core::runner::{self, ForwardOptions, GenerateOptions, ReconstructOptions, SweepInputs};
use heatrecon_core::{read_case_config, CaseConfig, CaseModel, Error};

/// Inverse heat conduction on a heated plate: reference solutions, field
/// reconstruction from sparse sensors and multiple-option generation.
#[derive(Parser)]
#[command(name = "heatrecon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the forward problem and write the reference field and sensor readings.
    Forward {
        case: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the forward time step.
        #[arg(long)]
        dt_ref: Option<f64>,
        /// Write a VTK snapshot every N steps (and at the last step).
        #[arg(long)]
        snapshot_every: Option<usize>,
    },
    /// Reconstruct the field history from a sensor file.
    Reconstruct {
        case: PathBuf,
        #[arg(long)]
        measurements: PathBuf,
        /// Reference solution to compute errors against.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dt_rec: Option<f64>,
        /// Override the regularization weight.
        #[arg(long)]
        c3: Option<f64>,
        #[arg(long)]
        snapshot_every: Option<usize>,
    },
    /// Repeat the reconstruction over a grid of regularization weights.
    #[command(name = "sweep-c3")]
    SweepC3 {
        case: PathBuf,
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Comma-separated grid, e.g. 0,0.1,0.5,1.0
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        c3: Vec<f64>,
        #[arg(long)]
        dt_rec: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate several fields that follow the configured total-heat goal.
    Generate {
        case: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seeds replacing the configured list.
        #[arg(long, value_delimiter = ',')]
        seed: Option<Vec<u64>>,
        /// Comma-separated heat-term weights replacing the configured list.
        #[arg(long, value_delimiter = ',')]
        c4: Option<Vec<f64>>,
        /// Worker threads for running options in parallel.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        snapshot_every: Option<usize>,
    },
}

fn load(case: &PathBuf) -> anyhow::Result<(CaseConfig, CaseModel)> {
    let config = read_case_config(case).with_context(|| format!("loading case {}", case.display()))?;
    let model = config.build_model()?;
    Ok((config, model))
}

fn fmt_pct(x: f64) -> String {
    format!("{}%", format_g(x, 6))
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Forward {
            case,
            out,
            dt_ref,
            snapshot_every,
        } => {
            let (config, model) = load(&case)?;
            let opts = ForwardOptions { dt_ref, snapshot_every };
            let summary = runner::forward(&config, &model, &opts, &out, |s, t| {
                eprintln!("forward step {s} t={t}");
            })?;
            println!(
                "forward: {} steps at dt_ref = {} s, max temperature {:.3} °C",
                summary.steps, summary.dt_ref, summary.max_temperature
            );
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Reconstruct {
            case,
            measurements,
            reference,
            out,
            dt_rec,
            c3,
            snapshot_every,
        } => {
            let (config, model) = load(&case)?;
            let opts = ReconstructOptions {
                dt_rec,
                c3,
                snapshot_every,
                reference,
            };
            let summary = runner::reconstruct(&config, &model, &measurements, &opts, &out, |d| {
                eprintln!(
                    "step {} t={} loss={:e} wall={:.3}s",
                    d.step,
                    d.time,
                    d.loss(),
                    d.wall_time_s
                );
            })?;
            println!("reconstructed {} steps", summary.run.solution.len());
            if let Some(e) = &summary.errors {
                println!(
                    "avg_rel {}  max_rel {}  avg_abs {:.4} °C  max_abs {:.4} °C",
                    fmt_pct(e.avg_rel_pct),
                    fmt_pct(e.max_rel_pct),
                    e.avg_abs,
                    e.max_abs
                );
            }
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
        }
        Command::SweepC3 {
            case,
            measurements,
            reference,
            c3,
            dt_rec,
            out,
        } => {
            let (config, model) = load(&case)?;
            let inputs = SweepInputs {
                measurements,
                reference,
                grid: c3,
                dt_rec,
            };
            let rows = runner::sweep_c3(&config, &model, &inputs, &out, |c3, d| {
                eprintln!(
                    "c3={c3} step {} t={} loss={:e} wall={:.3}s",
                    d.step,
                    d.time,
                    d.loss(),
                    d.wall_time_s
                );
            })?;
            println!(
                "{:>8}  {:>12}  {:>12}  {:>10}  {:>10}  status",
                "c3", "avg_rel", "max_rel", "avg_abs", "max_abs"
            );
            for r in &rows {
                match &r.outcome {
                    Ok(e) => println!(
                        "{:>8}  {:>12}  {:>12}  {:>10.4}  {:>10.4}  {}",
                        r.c3,
                        fmt_pct(e.avg_rel_pct),
                        fmt_pct(e.max_rel_pct),
                        e.avg_abs,
                        e.max_abs,
                        r.status()
                    ),
                    Err(_) => println!(
                        "{:>8}  {:>12}  {:>12}  {:>10}  {:>10}  {}",
                        r.c3,
                        "-",
                        "-",
                        "-",
                        "-",
                        r.status()
                    ),
                }
            }
            println!("wrote {}", out.join("c3_sweep.csv").display());
        }
        Command::Generate {
            case,
            out,
            seed,
            c4,
            jobs,
            snapshot_every,
        } => {
            let (config, model) = load(&case)?;
            let opts = GenerateOptions {
                seeds: seed,
                c4,
                jobs,
                snapshot_every,
            };
            let summary = runner::generate(&config, &model, &opts, &out, |i, d| {
                eprintln!(
                    "option {} step {} t={} loss={:e} wall={:.3}s",
                    i + 1,
                    d.step,
                    d.time,
                    d.loss(),
                    d.wall_time_s
                );
            })?;
            println!(
                "{:>6}  {:>6}  {:>6}  {:>12}  {:>12}  {:>10}  {:>10}",
                "option", "c4", "seed", "avg_rel", "max_rel", "avg_abs", "max_abs"
            );
            for r in &summary.rows {
                match &r.outcome {
                    Ok(s) => println!(
                        "{:>6}  {:>6}  {:>6}  {:>12}  {:>12}  {:>10.3e}  {:>10.3e}",
                        r.option,
                        r.c4,
                        r.seed,
                        fmt_pct(s.avg_rel_pct),
                        fmt_pct(s.max_rel_pct),
                        s.avg_abs,
                        s.max_abs
                    ),
                    Err(e) => println!("{:>6}  {:>6}  {:>6}  failed: {e}", r.option, r.c4, r.seed),
                }
            }
            println!("wrote {}", out.join("generation_summary.csv").display());
            if let Some(e) = summary.runs.iter().find_map(|r| r.as_ref().err()) {
                eprintln!("error: at least one option failed: {e}");
                return Ok(exit_code_for(e));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code_for(e: &Error) -> ExitCode {
    if e.is_numerical() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            // Core errors already spell out their cause, so the chain stops there.
            let mut parts = Vec::new();
            for cause in e.chain() {
                parts.push(cause.to_string());
                if cause.is::<Error>() {
                    break;
                }
            }
            eprintln!("error: {}", parts.join(": "));
            match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
                Some(core) => exit_code_for(core),
                None => ExitCode::from(2),
            }
        }
    }
}
