//! The training loop: builds the dataset, model, and optimizer from a
//! config, runs seeded epochs with gradient accumulation, captures
//! diagnostics, and writes metric streams plus checkpoints.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use lars_core::checkpoint::{save_model, save_optimizer_state};
use lars_core::diagnostics::{
    capture_loss_gap, capture_norms, LossGapRow, MetricsSink, NormRatioRow,
};
use lars_core::nn::{Batch, MlpTopology, Model};
use lars_core::optim::accum::{accumulate_gradients, split_batch};
use lars_core::optim::{
    linear_scaled_lr, Optimizer, OptimizerConfig, OptimizerKind, ScheduleSpec,
};
use lars_core::rng::Rng;
use lars_core::CoreError;

use crate::config::{DatasetConfig, ExperimentConfig};
use crate::data::{load_idx, make_synthetic, BlobParams, Dataset};
use crate::error::{HarnessError, Result};

/// Steps whose norms are captured unconditionally; afterwards capture
/// happens once per epoch (at its final step).
const DENSE_CAPTURE_STEPS: usize = 50;

/// Divergence trigger: training loss above this multiple of the initial
/// loss (or any non-finite value) aborts the run.
const DIVERGENCE_FACTOR: f64 = 1e4;

/// Evaluation subsets for the loss gap are capped at this many samples.
const EVAL_CAP: usize = 2000;

/// Outcome of one experiment. Accuracies and losses are absent when the run
/// diverged. `wall_seconds` is the only wall-clock-dependent field.
#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub diverged: bool,
    pub final_train_loss: Option<f64>,
    pub final_test_loss: Option<f64>,
    pub final_train_acc: Option<f64>,
    pub final_test_acc: Option<f64>,
    /// Optimizer steps actually performed.
    pub steps_run: usize,
    pub steps_per_epoch: usize,
    /// Schedule horizon for the run.
    pub total_steps: usize,
    /// Base learning rate after linear batch scaling (equals the config's
    /// `base_lr` when no `baseline_batch` is set).
    pub applied_base_lr: f64,
    pub wall_seconds: f64,
    pub metrics_paths: Vec<PathBuf>,
}

/// Model, data, and optimizer settings materialized from a config, before
/// any training step has run.
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub model: Model,
    pub optimizer_cfg: OptimizerConfig,
    pub steps_per_epoch: usize,
    shuffle_rng: Rng,
}

/// Resolves a config into data, a freshly initialized model, and a full
/// optimizer configuration. Seed handling: one root generator is split into
/// independent streams for data synthesis, weight init, and epoch shuffles.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let mut root = Rng::new(cfg.seed);
    let mut data_rng = root.split();
    let mut model_rng = root.split();
    let shuffle_rng = root.split();

    let (train, test) = match &cfg.dataset {
        DatasetConfig::SyntheticBlobs {
            classes,
            dim,
            train_per_class,
            test_per_class,
            separation,
            spread,
        } => make_synthetic(
            &BlobParams {
                classes: *classes,
                dim: *dim,
                train_per_class: *train_per_class,
                test_per_class: *test_per_class,
                separation: *separation,
                spread: *spread,
            },
            &mut data_rng,
        )?,
        DatasetConfig::IdxFiles {
            train_images,
            train_labels,
            test_images,
            test_labels,
            num_classes,
        } => {
            let train = load_idx(train_images, train_labels, *num_classes)?;
            let test = load_idx(test_images, test_labels, *num_classes)?;
            (train, test)
        }
    };
    if cfg.batch_size > train.len() {
        return Err(HarnessError::Config(format!(
            "batch_size {} exceeds the {} training samples",
            cfg.batch_size,
            train.len()
        )));
    }

    let topology = MlpTopology {
        input_dim: train.dim(),
        hidden: cfg.model.hidden.clone(),
        num_classes: train.num_classes,
        batch_norm: cfg.model.batch_norm,
    };
    let mut model = Model::mlp(&topology, &mut model_rng)?;

    for name in &cfg.optimizer.exclude_from_lars {
        let idx = model.group_index(name).ok_or_else(|| {
            HarnessError::Config(format!("exclude_from_lars: no parameter group '{name}'"))
        })?;
        model.param_groups_mut()[idx].apply_lars = false;
    }
    for name in &cfg.optimizer.exclude_from_weight_decay {
        let idx = model.group_index(name).ok_or_else(|| {
            HarnessError::Config(format!(
                "exclude_from_weight_decay: no parameter group '{name}'"
            ))
        })?;
        model.param_groups_mut()[idx].apply_weight_decay = false;
    }

    let steps_per_epoch = train.len() / cfg.batch_size;
    let total_steps = steps_per_epoch * cfg.epochs;
    let warmup_steps = ((cfg.optimizer.warmup_epochs * steps_per_epoch as f64).round() as usize)
        .min(total_steps.saturating_sub(1));

    let applied_base_lr = match cfg.baseline_batch {
        Some(base) => linear_scaled_lr(cfg.optimizer.base_lr, base, cfg.batch_size)?,
        None => cfg.optimizer.base_lr,
    };
    let warmup_init = cfg
        .optimizer
        .warmup_init_lr
        .unwrap_or_else(|| 1e-3f64.min(applied_base_lr));

    let optimizer_cfg = OptimizerConfig {
        kind: cfg.optimizer.kind,
        base_lr: applied_base_lr,
        momentum: cfg.optimizer.momentum,
        weight_decay: cfg.optimizer.weight_decay,
        trust_coeff: cfg.optimizer.trust_coeff,
        max_trust_ratio: cfg.optimizer.max_trust_ratio,
        schedule: ScheduleSpec {
            warmup_steps,
            warmup_init_lr: warmup_init,
            decay: cfg.optimizer.decay,
        },
        total_steps,
        accum_factor: cfg.batch_size / cfg.effective_chunk(),
    };

    Ok(Prepared {
        train,
        test,
        model,
        optimizer_cfg,
        steps_per_epoch,
        shuffle_rng,
    })
}

/// Runs one experiment end to end, writing metric streams, checkpoints, and
/// `run_summary.json` under `out_dir`. Divergence is a clean partial
/// result (`diverged == true`), not an error.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunResult> {
    let start = Instant::now();
    let mut prepared = prepare(cfg)?;
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;

    let ext = cfg.metrics_format.extension();
    let norms_path = out_dir.join(format!("norms.{ext}"));
    let gap_path = out_dir.join(format!("loss_gap.{ext}"));
    let mut norms_sink = MetricsSink::<NormRatioRow>::create(&norms_path, cfg.metrics_format)?;
    let mut gap_sink = MetricsSink::<LossGapRow>::create(&gap_path, cfg.metrics_format)?;

    let train_eval = prepared.train.head_batch(EVAL_CAP)?;
    let test_eval = prepared.test.head_batch(EVAL_CAP)?;

    let mut optimizer =
        Optimizer::new(prepared.optimizer_cfg.clone()).map_err(config_error_from_core)?;
    let spe = prepared.steps_per_epoch;
    let total_steps = prepared.optimizer_cfg.total_steps;
    let chunks_per_batch = prepared.optimizer_cfg.accum_factor;

    let mut indices: Vec<usize> = (0..prepared.train.len()).collect();
    let mut initial_loss: Option<f64> = None;
    let mut diverged = false;
    let mut steps_run = 0usize;
    let mut last_gap: Option<LossGapRow> = None;

    'training: for epoch in 0..cfg.epochs {
        prepared.shuffle_rng.shuffle(&mut indices);
        for s in 0..spe {
            let t = epoch * spe + s;
            let batch = prepared
                .train
                .batch(&indices[s * cfg.batch_size..(s + 1) * cfg.batch_size])?;
            let chunks = split_batch(&batch, chunks_per_batch)?;
            let (loss, _) = accumulate_gradients(&mut prepared.model, &chunks)?;

            let reference = *initial_loss.get_or_insert(loss);
            if !loss.is_finite() || loss > DIVERGENCE_FACTOR * reference.abs().max(1e-12) {
                diverged = true;
                break 'training;
            }

            if t < DENSE_CAPTURE_STEPS || s == spe - 1 {
                let rows =
                    capture_norms(prepared.model.param_groups(), t, optimizer.config())?;
                norms_sink.emit(&rows)?;
            }
            match optimizer.step(prepared.model.param_groups_mut()) {
                Ok(_) => {}
                Err(CoreError::Divergence { .. }) => {
                    diverged = true;
                    break 'training;
                }
                Err(e) => return Err(e.into()),
            }
            steps_run += 1;
        }

        prepared.model.set_training(false);
        let row = capture_loss_gap(&prepared.model, &train_eval, &test_eval, epoch)?;
        prepared.model.set_training(true);
        let finite = row.train_loss.is_finite() && row.test_loss.is_finite();
        gap_sink.emit(std::slice::from_ref(&row))?;
        norms_sink.flush()?;
        gap_sink.flush()?;
        last_gap = Some(row);
        if !finite {
            diverged = true;
            break 'training;
        }
    }
    norms_sink.flush()?;
    gap_sink.flush()?;

    let mut metrics_paths = vec![norms_path, gap_path];
    if !diverged {
        let model_path = out_dir.join("model.json");
        let opt_path = out_dir.join("optimizer.json");
        save_model(&model_path, &prepared.model)?;
        save_optimizer_state(
            &opt_path,
            optimizer.next_step(),
            prepared.model.param_groups(),
        )?;
        metrics_paths.push(model_path);
        metrics_paths.push(opt_path);
    }

    let finals = last_gap.filter(|_| !diverged);
    let result = RunResult {
        diverged,
        final_train_loss: finals.as_ref().map(|r| r.train_loss),
        final_test_loss: finals.as_ref().map(|r| r.test_loss),
        final_train_acc: finals.as_ref().map(|r| r.train_acc),
        final_test_acc: finals.as_ref().map(|r| r.test_acc),
        steps_run,
        steps_per_epoch: spe,
        total_steps,
        applied_base_lr: prepared.optimizer_cfg.base_lr,
        wall_seconds: start.elapsed().as_secs_f64(),
        metrics_paths,
    };

    let summary = serde_json::json!({
        "config": cfg,
        "result": result,
    });
    let summary_path = out_dir.join("run_summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary).unwrap())
        .map_err(|e| HarnessError::io(&summary_path, e))?;

    Ok(result)
}

fn config_error_from_core(e: CoreError) -> HarnessError {
    match e {
        CoreError::InvalidArgument(msg) => HarnessError::Config(msg),
        other => HarnessError::Core(other),
    }
}

/// A deterministic small batch from the training set, for gradient checks.
pub fn gradcheck_batch(prepared: &Prepared, size: usize) -> Result<Batch> {
    prepared.train.head_batch(size.max(2))
}
