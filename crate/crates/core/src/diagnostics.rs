//! Training diagnostics: per-group weight/gradient norm ratios, local-rate
//! trajectories, train/test loss gap, and the metric sinks that persist
//! them as plot-ready CSV or JSONL streams.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::nn::{Batch, Model, ParamGroup};
use crate::optim::{local_lr, OptimizerConfig};

/// One group's norms at one step.
///
/// `ratio` is `w_norm / g_norm`, omitted (null in JSONL, empty CSV field)
/// when the gradient norm is zero.
#[derive(Debug, Clone, Serialize)]
pub struct NormRatioRow {
    pub step: usize,
    pub group: String,
    pub w_norm: f64,
    pub g_norm: f64,
    pub ratio: Option<f64>,
    pub local_lr: f64,
}

/// Train/test losses and accuracies after one epoch.
#[derive(Debug, Clone, Serialize)]
pub struct LossGapRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    /// `test_loss - train_loss`.
    pub gap: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

/// Reads each group's weight and gradient norms without touching training
/// state. `local_lr` reproduces exactly what the optimizer would apply for
/// this configuration (1.0 for groups opted out of LARS).
pub fn capture_norms(
    groups: &[ParamGroup],
    step: usize,
    cfg: &OptimizerConfig,
) -> Result<Vec<NormRatioRow>> {
    let mut rows = Vec::with_capacity(groups.len());
    for g in groups {
        let w_norm = g.value.l2_norm()?;
        let g_norm = g.grad.l2_norm()?;
        let ratio = if g_norm == 0.0 {
            None
        } else {
            Some(w_norm / g_norm)
        };
        let beta_eff = if g.apply_weight_decay {
            cfg.weight_decay
        } else {
            0.0
        };
        let lr = if g.apply_lars {
            let raw = local_lr(w_norm, g_norm, cfg.trust_coeff, beta_eff)?;
            match cfg.max_trust_ratio {
                Some(max) => raw.min(max),
                None => raw,
            }
        } else {
            1.0
        };
        rows.push(NormRatioRow {
            step,
            group: g.name.clone(),
            w_norm,
            g_norm,
            ratio,
            local_lr: lr,
        });
    }
    Ok(rows)
}

/// Evaluates the model on fixed train and test subsets (inference mode) and
/// returns the loss gap for this epoch.
pub fn capture_loss_gap(
    model: &Model,
    train_eval: &Batch,
    test_eval: &Batch,
    epoch: usize,
) -> Result<LossGapRow> {
    if train_eval.is_empty() || test_eval.is_empty() {
        return Err(CoreError::InvalidArgument(
            "loss-gap evaluation sets must be non-empty".into(),
        ));
    }
    let (train_loss, train_acc) = model.evaluate(train_eval)?;
    let (test_loss, test_acc) = model.evaluate(test_eval)?;
    Ok(LossGapRow {
        epoch,
        train_loss,
        test_loss,
        gap: test_loss - train_loss,
        train_acc,
        test_acc,
    })
}

/// On-disk encoding for a metric stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricsFormat {
    Csv,
    Jsonl,
}

impl MetricsFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MetricsFormat::Csv => "csv",
            MetricsFormat::Jsonl => "jsonl",
        }
    }
}

/// A row type that knows its CSV encoding; JSONL comes from `Serialize`.
pub trait MetricRow: Serialize {
    fn csv_header() -> &'static str;
    fn csv_record(&self) -> String;
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricRow for NormRatioRow {
    fn csv_header() -> &'static str {
        "step,group,w_norm,g_norm,ratio,local_lr"
    }

    fn csv_record(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.step,
            self.group,
            self.w_norm,
            self.g_norm,
            fmt_opt(self.ratio),
            self.local_lr
        )
    }
}

impl MetricRow for LossGapRow {
    fn csv_header() -> &'static str {
        "epoch,train_loss,test_loss,gap,train_acc,test_acc"
    }

    fn csv_record(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.epoch, self.train_loss, self.test_loss, self.gap, self.train_acc, self.test_acc
        )
    }
}

/// Buffered single-writer sink for one metric stream. Rows appear in
/// emission order; callers flush at epoch boundaries.
#[derive(Debug)]
pub struct MetricsSink<R: MetricRow> {
    path: PathBuf,
    format: MetricsFormat,
    writer: BufWriter<File>,
    _rows: PhantomData<R>,
}

fn io_err(path: &Path, source: std::io::Error) -> CoreError {
    CoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl<R: MetricRow> MetricsSink<R> {
    /// Creates (truncating) the sink file; a CSV sink writes its header
    /// immediately so the file is valid from the start.
    pub fn create(path: impl Into<PathBuf>, format: MetricsFormat) -> Result<Self> {
        let path = path.into();
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut sink = MetricsSink {
            writer: BufWriter::new(file),
            path,
            format,
            _rows: PhantomData,
        };
        if format == MetricsFormat::Csv {
            let header = format!("{}\n", R::csv_header());
            sink.writer
                .write_all(header.as_bytes())
                .map_err(|e| io_err(&sink.path, e))?;
        }
        Ok(sink)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends rows in order. Content may sit in the buffer until
    /// [`MetricsSink::flush`].
    pub fn emit(&mut self, rows: &[R]) -> Result<()> {
        for row in rows {
            let line = match self.format {
                MetricsFormat::Csv => row.csv_record(),
                MetricsFormat::Jsonl => serde_json::to_string(row)
                    .map_err(|e| CoreError::Checkpoint(format!("metric row encoding: {e}")))?,
            };
            self.writer
                .write_all(line.as_bytes())
                .and_then(|_| self.writer.write_all(b"\n"))
                .map_err(|e| io_err(&self.path, e))?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.writer.flush().map_err(|e| io_err(&self.path, e))
    }
}
