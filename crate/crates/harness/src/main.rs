//! `larslab` command line: train one experiment, sweep an axis, gradient-
//! check a configured model, or inspect a checkpoint's per-group norms.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 diverged run, 3 config error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lars_core::checkpoint::load_model;
use lars_core::gradcheck::{check_model, CheckSettings};
use lars_harness::config::load_config;
use lars_harness::error::HarnessError;
use lars_harness::runner::{gradcheck_batch, prepare, run_experiment};
use lars_harness::sweep::{format_table, run_sweep, SweepAxis, SweepSpec};

/// Environment variable consulted for the default output directory.
const OUT_DIR_ENV: &str = "LARSLAB_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "larslab",
    about = "Layer-wise adaptive rate scaling training experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment from a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: config's out_dir, then $LARSLAB_OUT_DIR, then ./runs).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the base config once per value of one axis.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Axis to vary: lr, batch, or epochs.
        #[arg(long)]
        axis: String,
        /// Comma-separated values along the axis.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of the configured model's gradients.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Batch size for the check (default 8, minimum 2).
        #[arg(long, default_value_t = 8)]
        batch: usize,
        /// Cap on coordinates probed per group; 0 checks every coordinate.
        #[arg(long, default_value_t = 200)]
        limit_coords: usize,
    },
    /// Print per-group weight norms of a model checkpoint.
    InspectNorms {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn resolve_out_dir(cli_out: Option<PathBuf>, cfg_out: Option<&Path>) -> PathBuf {
    cli_out
        .or_else(|| cfg_out.map(Path::to_path_buf))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.cmd {
        Cmd::Train { config, seed, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out_dir = resolve_out_dir(out, cfg.out_dir.as_deref());
            let result = run_experiment(&cfg, &out_dir)?;
            if result.diverged {
                println!(
                    "diverged after {} steps (batch {}, lr {}); partial metrics in {}",
                    result.steps_run,
                    cfg.batch_size,
                    result.applied_base_lr,
                    out_dir.display()
                );
                return Ok(ExitCode::from(2));
            }
            println!(
                "done: {} steps, train acc {:.4}, test acc {:.4}, wall {:.1}s; outputs in {}",
                result.steps_run,
                result.final_train_acc.unwrap_or(f64::NAN),
                result.final_test_acc.unwrap_or(f64::NAN),
                result.wall_seconds,
                out_dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Sweep {
            config,
            axis,
            values,
            seed,
            out,
        } => {
            let mut base = load_config(&config)?;
            if let Some(s) = seed {
                base.seed = s;
            }
            let axis = SweepAxis::parse(&axis)?;
            let out_root = resolve_out_dir(out, base.out_dir.as_deref());
            let spec = SweepSpec { base, axis, values };
            let summary = run_sweep(&spec, &out_root)?;
            print!("{}", format_table(&summary));
            println!("summary written to {}", summary.csv_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Gradcheck {
            config,
            seed,
            out,
            batch,
            limit_coords,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out_dir = resolve_out_dir(out, cfg.out_dir.as_deref());
            let mut prepared = prepare(&cfg)?;
            let batch = gradcheck_batch(&prepared, batch)?;
            let settings = CheckSettings {
                coord_limit: (limit_coords > 0).then_some(limit_coords),
                ..CheckSettings::default()
            };
            let reports = check_model(&mut prepared.model, &batch, &settings)?;

            println!(
                "{:<16} {:>14} {:>10} {:>8} {:>8} {:>6}",
                "group", "max_rel_err", "threshold", "checked", "skipped", "pass"
            );
            let mut all_pass = true;
            for r in &reports {
                all_pass &= r.pass;
                println!(
                    "{:<16} {:>14.3e} {:>10.0e} {:>8} {:>8} {:>6}",
                    r.group,
                    r.max_relative_error,
                    r.threshold,
                    r.checked,
                    r.skipped,
                    if r.pass { "yes" } else { "NO" }
                );
            }
            std::fs::create_dir_all(&out_dir).map_err(|e| HarnessError::io(&out_dir, e))?;
            let report_path = out_dir.join("gradcheck_report.json");
            std::fs::write(
                &report_path,
                serde_json::to_string_pretty(&reports).expect("reports serialize"),
            )
            .map_err(|e| HarnessError::io(&report_path, e))?;
            println!("report written to {}", report_path.display());
            Ok(if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Cmd::InspectNorms { checkpoint } => {
            let model = load_model(&checkpoint)?;
            println!(
                "{:<16} {:<10} {:>14} {:>14}",
                "group", "kind", "shape", "w_norm"
            );
            for g in model.param_groups() {
                let shape = format!("{:?}", g.value.shape());
                println!(
                    "{:<16} {:<10} {:>14} {:>14.6e}",
                    g.name,
                    format!("{:?}", g.kind).to_lowercase(),
                    shape,
                    g.value.l2_norm()?
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
