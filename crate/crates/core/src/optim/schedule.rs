//! Global learning-rate schedules: linear warm-up into constant or
//! polynomial decay, plus the linear batch-size scaling rule.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::optim::OptimizerConfig;

/// Post-warm-up decay policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Decay {
    Constant,
    Polynomial {
        #[serde(default = "default_power")]
        power: f64,
    },
}

fn default_power() -> f64 {
    2.0
}

impl Default for Decay {
    fn default() -> Self {
        Decay::Constant
    }
}

/// Warm-up plus decay composition. For the first `warmup_steps` steps the
/// rate rises linearly from `warmup_init_lr` to the base rate; afterwards
/// the decay policy runs over the remaining horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub warmup_steps: usize,
    pub warmup_init_lr: f64,
    pub decay: Decay,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec {
            warmup_steps: 0,
            warmup_init_lr: 1e-3,
            decay: Decay::Constant,
        }
    }
}

/// Global learning rate at step `t`.
///
/// Accepts `0 <= t <= T` so the decay endpoint itself is observable;
/// polynomial decay reaches exactly 0 at `t = T`.
pub fn global_lr(cfg: &OptimizerConfig, t: usize) -> Result<f64> {
    let total = cfg.total_steps;
    let warmup = cfg.schedule.warmup_steps;
    if t > total {
        return Err(CoreError::InvalidArgument(format!(
            "step {t} out of range for a schedule over {total} steps"
        )));
    }
    if t < warmup {
        let frac = t as f64 / warmup as f64;
        return Ok(cfg.schedule.warmup_init_lr + (cfg.base_lr - cfg.schedule.warmup_init_lr) * frac);
    }
    match cfg.schedule.decay {
        Decay::Constant => Ok(cfg.base_lr),
        Decay::Polynomial { power } => {
            let remaining = 1.0 - (t - warmup) as f64 / (total - warmup) as f64;
            Ok(cfg.base_lr * remaining.powf(power))
        }
    }
}

/// Linear scaling rule: growing the batch by `k` grows the rate by `k`.
pub fn linear_scaled_lr(base_lr: f64, base_batch: usize, new_batch: usize) -> Result<f64> {
    if base_batch == 0 || new_batch == 0 {
        return Err(CoreError::InvalidArgument(
            "batch sizes must be positive for linear scaling".into(),
        ));
    }
    Ok(base_lr * new_batch as f64 / base_batch as f64)
}
