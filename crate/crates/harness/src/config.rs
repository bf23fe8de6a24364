//! Experiment configuration: a strict JSON schema (unknown keys rejected)
//! that fully determines a run together with its seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lars_core::diagnostics::MetricsFormat;
use lars_core::optim::{Decay, OptimizerKind};

use crate::error::{HarnessError, Result};

/// Where the training and test sets come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "type", rename_all = "snake_case")]
pub enum DatasetConfig {
    /// Gaussian class blobs: per-class centers drawn with standard
    /// deviation `separation`, samples scattered around them with standard
    /// deviation `spread`. Train/test splits are disjoint draws.
    SyntheticBlobs {
        classes: usize,
        dim: usize,
        train_per_class: usize,
        test_per_class: usize,
        separation: f64,
        #[serde(default = "default_spread")]
        spread: f64,
    },
    /// Big-endian IDX image/label file pairs (the MNIST container format).
    IdxFiles {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default = "default_idx_classes")]
        num_classes: usize,
    },
}

fn default_spread() -> f64 {
    1.0
}

fn default_idx_classes() -> usize {
    10
}

/// MLP shape; input width and class count come from the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden layer widths; empty means a single dense layer (logistic
    /// regression).
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub batch_norm: bool,
}

/// Optimizer section. Warm-up is given in epochs (converted to steps once
/// the dataset size is known); `warmup_init_lr` defaults to
/// `min(1e-3, base_lr)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    pub kind: OptimizerKind,
    pub base_lr: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_trust_coeff")]
    pub trust_coeff: f64,
    #[serde(default)]
    pub max_trust_ratio: Option<f64>,
    #[serde(default)]
    pub warmup_epochs: f64,
    #[serde(default)]
    pub warmup_init_lr: Option<f64>,
    #[serde(default)]
    pub decay: Decay,
    /// Group names whose local LARS rate is pinned to 1.
    #[serde(default)]
    pub exclude_from_lars: Vec<String>,
    /// Group names exempted from weight decay.
    #[serde(default)]
    pub exclude_from_weight_decay: Vec<String>,
}

fn default_trust_coeff() -> f64 {
    lars_core::optim::DEFAULT_TRUST_COEFF
}

/// One fully specified experiment. With a seed, this determines every
/// number the run emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub optimizer: OptimizerSettings,
    pub batch_size: usize,
    /// Per-chunk size for gradient accumulation; defaults to `batch_size`
    /// (no accumulation). Must divide `batch_size`.
    #[serde(default)]
    pub chunk_size: Option<usize>,
    /// When set, `base_lr` is interpreted as the rate for this batch size
    /// and is linearly rescaled to the actual `batch_size`.
    #[serde(default)]
    pub baseline_batch: Option<usize>,
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_metrics_format")]
    pub metrics_format: MetricsFormat,
}

fn default_metrics_format() -> MetricsFormat {
    MetricsFormat::Csv
}

impl ExperimentConfig {
    /// Chunk size after applying the default.
    pub fn effective_chunk(&self) -> usize {
        self.chunk_size.unwrap_or(self.batch_size)
    }

    pub fn validate(&self) -> Result<()> {
        fn fail<T>(field: &str, detail: String) -> Result<T> {
            Err(HarnessError::Config(format!("{field}: {detail}")))
        }
        if self.epochs == 0 {
            return fail("epochs", "must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be at least 1".into());
        }
        let chunk = self.effective_chunk();
        if chunk == 0 || self.batch_size % chunk != 0 {
            return fail(
                "chunk_size",
                format!("{chunk} must divide batch_size {}", self.batch_size),
            );
        }
        if self.baseline_batch == Some(0) {
            return fail("baseline_batch", "must be positive".into());
        }
        if self.model.hidden.iter().any(|&w| w == 0) {
            return fail("model.hidden", "layer widths must be positive".into());
        }

        let opt = &self.optimizer;
        if !(opt.base_lr > 0.0) {
            return fail("optimizer.base_lr", format!("must be positive, got {}", opt.base_lr));
        }
        if !(0.0..1.0).contains(&opt.momentum) {
            return fail(
                "optimizer.momentum",
                format!("must be in [0, 1), got {}", opt.momentum),
            );
        }
        if opt.kind == OptimizerKind::Sgd && opt.momentum != 0.0 {
            return fail(
                "optimizer.momentum",
                "plain sgd takes no momentum; use kind sgd_momentum".into(),
            );
        }
        if !(opt.weight_decay >= 0.0) {
            return fail(
                "optimizer.weight_decay",
                format!("must be non-negative, got {}", opt.weight_decay),
            );
        }
        if !(opt.trust_coeff > 0.0) {
            return fail(
                "optimizer.trust_coeff",
                format!("must be positive, got {}", opt.trust_coeff),
            );
        }
        if !(opt.warmup_epochs >= 0.0) || opt.warmup_epochs >= self.epochs as f64 {
            return fail(
                "optimizer.warmup_epochs",
                format!(
                    "must be in [0, epochs = {}), got {}",
                    self.epochs, opt.warmup_epochs
                ),
            );
        }
        if let Some(init) = opt.warmup_init_lr {
            if !(init > 0.0) || init > opt.base_lr {
                return fail(
                    "optimizer.warmup_init_lr",
                    format!("must be in (0, base_lr = {}], got {init}", opt.base_lr),
                );
            }
        }
        if let Decay::Polynomial { power } = opt.decay {
            if !(power > 0.0) {
                return fail("optimizer.decay.power", format!("must be positive, got {power}"));
            }
        }

        match &self.dataset {
            DatasetConfig::SyntheticBlobs {
                classes,
                dim,
                train_per_class,
                test_per_class,
                separation,
                spread,
            } => {
                if *classes < 2 {
                    return fail("dataset.classes", format!("need at least 2, got {classes}"));
                }
                if *dim == 0 {
                    return fail("dataset.dim", "must be positive".into());
                }
                if *train_per_class == 0 || *test_per_class == 0 {
                    return fail(
                        "dataset.train_per_class/test_per_class",
                        "must be at least 1".into(),
                    );
                }
                if !(*separation >= 0.0) {
                    return fail("dataset.separation", format!("must be non-negative, got {separation}"));
                }
                if !(*spread > 0.0) {
                    return fail("dataset.spread", format!("must be positive, got {spread}"));
                }
                let train_total = classes * train_per_class;
                if self.batch_size > train_total {
                    return fail(
                        "batch_size",
                        format!("{} exceeds the {train_total} training samples", self.batch_size),
                    );
                }
            }
            DatasetConfig::IdxFiles { num_classes, .. } => {
                if *num_classes < 2 {
                    return fail("dataset.num_classes", format!("need at least 2, got {num_classes}"));
                }
            }
        }
        Ok(())
    }
}

/// Reads and validates a config file. Parse errors carry serde's line and
/// column; validation errors name the offending field.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}
