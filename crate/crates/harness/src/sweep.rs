//! Sweeps over one axis (base LR, batch size, or epoch budget) with a
//! shared base config, producing per-point runs and a sorted summary table.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::runner::{run_experiment, RunResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Lr,
    Batch,
    Epochs,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lr" => Ok(SweepAxis::Lr),
            "batch" => Ok(SweepAxis::Batch),
            "epochs" => Ok(SweepAxis::Epochs),
            other => Err(HarnessError::Config(format!(
                "unknown sweep axis '{other}' (expected lr, batch, or epochs)"
            ))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SweepAxis::Lr => "lr",
            SweepAxis::Batch => "batch",
            SweepAxis::Epochs => "epochs",
        };
        f.write_str(s)
    }
}

/// A shared base experiment with deltas along exactly one axis.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// One sweep point's outcome.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub batch_size: usize,
    pub base_lr: f64,
    pub epochs: usize,
    pub result: RunResult,
}

#[derive(Debug, Serialize)]
pub struct SweepSummary {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    /// Index into `rows` of the best non-diverged test accuracy.
    pub best: Option<usize>,
    pub csv_path: PathBuf,
}

fn apply_delta(base: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::Lr => {
            if !(value > 0.0) {
                return Err(HarnessError::Config(format!(
                    "lr sweep value must be positive, got {value}"
                )));
            }
            cfg.optimizer.base_lr = value;
        }
        SweepAxis::Batch => {
            let b = as_positive_int(value, "batch")?;
            cfg.batch_size = b;
            // A fixed chunk size must keep dividing; without one the batch
            // stays monolithic.
            if let Some(chunk) = cfg.chunk_size {
                if chunk > b {
                    cfg.chunk_size = Some(b);
                }
            }
        }
        SweepAxis::Epochs => {
            cfg.epochs = as_positive_int(value, "epochs")?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn as_positive_int(value: f64, axis: &str) -> Result<usize> {
    if value < 1.0 || value.fract() != 0.0 {
        return Err(HarnessError::Config(format!(
            "{axis} sweep values must be positive integers, got {value}"
        )));
    }
    Ok(value as usize)
}

/// Runs every sweep point (sorted ascending along the axis), one output
/// subdirectory per point. Diverged points are recorded and the sweep
/// continues; the summary lands in `sweep_summary.csv` and is returned with
/// the best point marked.
pub fn run_sweep(spec: &SweepSpec, out_root: &Path) -> Result<SweepSummary> {
    if spec.values.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one value".into()));
    }
    let mut values = spec.values.clone();
    values.sort_by(|a, b| a.partial_cmp(b).expect("sweep values must be ordered"));
    values.dedup();

    // Validate all points before running any: a bad value should fail the
    // sweep up front, not after hours of runs.
    let configs: Vec<ExperimentConfig> = values
        .iter()
        .map(|&v| apply_delta(&spec.base, spec.axis, v))
        .collect::<Result<_>>()?;

    std::fs::create_dir_all(out_root).map_err(|e| HarnessError::io(out_root, e))?;
    let mut rows = Vec::with_capacity(values.len());
    for (&value, cfg) in values.iter().zip(&configs) {
        let dir = out_root.join(format!("{}_{}", spec.axis, value));
        let result = run_experiment(cfg, &dir)?;
        rows.push(SweepRow {
            axis_value: value,
            batch_size: cfg.batch_size,
            base_lr: cfg.optimizer.base_lr,
            epochs: cfg.epochs,
            result,
        });
    }

    let best = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.result.final_test_acc.map(|a| (i, a)))
        .max_by(|a, b| a.1.partial_cmp(&b.1).expect("accuracies are finite"))
        .map(|(i, _)| i);

    let csv_path = out_root.join("sweep_summary.csv");
    let mut text =
        String::from("axis,value,batch,base_lr,applied_lr,epochs,train_acc,test_acc,diverged,best\n");
    for (i, row) in rows.iter().enumerate() {
        let fmt_acc = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            spec.axis,
            row.axis_value,
            row.batch_size,
            row.base_lr,
            row.result.applied_base_lr,
            row.epochs,
            fmt_acc(row.result.final_train_acc),
            fmt_acc(row.result.final_test_acc),
            row.result.diverged,
            if best == Some(i) { "*" } else { "" },
        ));
    }
    std::fs::write(&csv_path, text).map_err(|e| HarnessError::io(&csv_path, e))?;

    Ok(SweepSummary {
        axis: spec.axis,
        rows,
        best,
        csv_path,
    })
}

/// Renders the summary as an aligned text table (batch, LR, accuracy), with
/// the best row starred.
pub fn format_table(summary: &SweepSummary) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>3} {:>12} {:>8} {:>10} {:>10} {:>7} {:>10} {:>10}\n",
        "", summary.axis, "batch", "base_lr", "applied", "epochs", "test_acc", "status"
    ));
    for (i, row) in summary.rows.iter().enumerate() {
        let marker = if summary.best == Some(i) { "*" } else { "" };
        let acc = row
            .result
            .final_test_acc
            .map(|a| format!("{:.4}", a))
            .unwrap_or_else(|| "-".into());
        let status = if row.result.diverged { "diverged" } else { "ok" };
        out.push_str(&format!(
            "{:>3} {:>12} {:>8} {:>10.4} {:>10.4} {:>7} {:>10} {:>10}\n",
            marker, row.axis_value, row.batch_size, row.base_lr, row.result.applied_base_lr,
            row.epochs, acc, status
        ));
    }
    out
}
