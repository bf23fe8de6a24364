//! Versioned JSON checkpoints for models and optimizer state.
//!
//! A model checkpoint stores the topology, every named parameter group
//! (with its optimizer policy flags), and batch-norm running statistics.
//! An optimizer checkpoint stores the step counter and momentum buffers.
//! `serde_json` prints floats in shortest round-trip form, so values load
//! back bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::nn::{GroupKind, MlpTopology, Model, ParamGroup};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl NamedTensor {
    fn from_tensor(name: &str, t: &Tensor) -> Self {
        NamedTensor {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        }
    }

    fn into_tensor(self) -> Result<(String, Tensor)> {
        let t = Tensor::new(self.shape, self.data)
            .map_err(|e| CoreError::Checkpoint(format!("tensor '{}': {e}", self.name)))?;
        Ok((self.name, t))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GroupRecord {
    name: String,
    kind: GroupKind,
    apply_weight_decay: bool,
    apply_lars: bool,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelCheckpoint {
    format_version: u32,
    topology: MlpTopology,
    groups: Vec<GroupRecord>,
    running_stats: Vec<NamedTensor>,
}

#[derive(Debug, Serialize, Deserialize)]
struct OptimizerCheckpoint {
    format_version: u32,
    /// Index of the next optimizer step to run.
    next_step: usize,
    momentum_buffers: Vec<NamedTensor>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string(value)
        .map_err(|e| CoreError::Checkpoint(format!("encoding failed: {e}")))?;
    fs::write(path, text).map_err(|e| CoreError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CoreError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    serde_json::from_str(&text)
        .map_err(|e| CoreError::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    let groups = model
        .param_groups()
        .iter()
        .map(|g| GroupRecord {
            name: g.name.clone(),
            kind: g.kind,
            apply_weight_decay: g.apply_weight_decay,
            apply_lars: g.apply_lars,
            shape: g.value.shape().to_vec(),
            data: g.value.data().to_vec(),
        })
        .collect();
    let running_stats = model
        .running_stats()
        .into_iter()
        .map(|(name, t)| NamedTensor::from_tensor(&name, t))
        .collect();
    write_json(
        path,
        &ModelCheckpoint {
            format_version: CHECKPOINT_VERSION,
            topology: model.topology().clone(),
            groups,
            running_stats,
        },
    )
}

pub fn load_model(path: &Path) -> Result<Model> {
    let ckpt: ModelCheckpoint = read_json(path)?;
    if ckpt.format_version != CHECKPOINT_VERSION {
        return Err(CoreError::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            ckpt.format_version
        )));
    }
    // Rebuild the skeleton, then overwrite every tensor; the init rng is
    // irrelevant because all values are replaced.
    let mut model = Model::mlp(&ckpt.topology, &mut Rng::new(0))?;
    if ckpt.groups.len() != model.param_groups().len() {
        return Err(CoreError::Checkpoint(format!(
            "checkpoint has {} groups, topology implies {}",
            ckpt.groups.len(),
            model.param_groups().len()
        )));
    }
    for rec in ckpt.groups {
        let idx = model.group_index(&rec.name).ok_or_else(|| {
            CoreError::Checkpoint(format!("unknown parameter group '{}'", rec.name))
        })?;
        let value = Tensor::new(rec.shape, rec.data)
            .map_err(|e| CoreError::Checkpoint(format!("group '{}': {e}", rec.name)))?;
        let g = &mut model.param_groups_mut()[idx];
        if g.value.shape() != value.shape() {
            return Err(CoreError::Checkpoint(format!(
                "group '{}': checkpoint shape {:?} vs model shape {:?}",
                rec.name,
                value.shape(),
                g.value.shape()
            )));
        }
        if g.kind != rec.kind {
            return Err(CoreError::Checkpoint(format!(
                "group '{}': kind mismatch",
                rec.name
            )));
        }
        g.value = value;
        g.apply_weight_decay = rec.apply_weight_decay;
        g.apply_lars = rec.apply_lars;
    }
    for stat in ckpt.running_stats {
        let (name, tensor) = stat.into_tensor()?;
        model.set_running_stat(&name, tensor)?;
    }
    Ok(model)
}

/// Saves the optimizer side of a checkpoint: the next step index plus every
/// group's momentum buffer.
pub fn save_optimizer_state(path: &Path, next_step: usize, groups: &[ParamGroup]) -> Result<()> {
    let momentum_buffers = groups
        .iter()
        .map(|g| NamedTensor::from_tensor(&g.name, &g.momentum_buf))
        .collect();
    write_json(
        path,
        &OptimizerCheckpoint {
            format_version: CHECKPOINT_VERSION,
            next_step,
            momentum_buffers,
        },
    )
}

/// Restores momentum buffers by group name and returns the next step index.
pub fn load_optimizer_state(path: &Path, groups: &mut [ParamGroup]) -> Result<usize> {
    let ckpt: OptimizerCheckpoint = read_json(path)?;
    if ckpt.format_version != CHECKPOINT_VERSION {
        return Err(CoreError::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            ckpt.format_version
        )));
    }
    for nt in ckpt.momentum_buffers {
        let (name, tensor) = nt.into_tensor()?;
        let g = groups
            .iter_mut()
            .find(|g| g.name == name)
            .ok_or_else(|| CoreError::Checkpoint(format!("unknown group '{name}'")))?;
        if g.momentum_buf.shape() != tensor.shape() {
            return Err(CoreError::Checkpoint(format!(
                "group '{name}': buffer shape {:?} vs {:?}",
                tensor.shape(),
                g.momentum_buf.shape()
            )));
        }
        g.momentum_buf = tensor;
    }
    Ok(ckpt.next_step)
}
