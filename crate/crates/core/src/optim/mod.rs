//! Optimizers: plain SGD, SGD with momentum, and layer-wise adaptive rate
//! scaling (LARS).
//!
//! LARS gives every parameter group its own local rate
//! `lambda = eta * ||w|| / (||g|| + beta * ||w||)`, so the magnitude of a
//! group's update is governed by its weight norm rather than its gradient
//! norm. The update itself is a momentum step on `gamma_t * lambda * (g +
//! beta * w)`. Groups that opt out (`apply_lars == false`) use `lambda = 1`,
//! which reduces the step to SGD with momentum and weight decay.

pub mod accum;
pub mod schedule;

pub use accum::{accumulate_gradients, linear_scaling_endpoints};
pub use schedule::{global_lr, linear_scaled_lr, Decay, ScheduleSpec};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::nn::ParamGroup;

/// Which update rule [`Optimizer::step`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    SgdMomentum,
    Lars,
}

/// Full optimizer configuration for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    /// Base global learning rate, `gamma_0`.
    pub base_lr: f64,
    /// Momentum `m` in `[0, 1)`.
    pub momentum: f64,
    /// Weight decay `beta`.
    pub weight_decay: f64,
    /// LARS trust coefficient `eta`.
    pub trust_coeff: f64,
    /// Optional cap on the local rate; `None` leaves it unbounded.
    pub max_trust_ratio: Option<f64>,
    pub schedule: ScheduleSpec,
    /// Schedule horizon `T`.
    pub total_steps: usize,
    /// Gradient-accumulation factor `k` (chunks per emulated batch).
    pub accum_factor: usize,
}

/// Default trust coefficient.
pub const DEFAULT_TRUST_COEFF: f64 = 1e-3;

impl OptimizerConfig {
    /// A constant-rate configuration; fields are public for adjustment.
    pub fn new(kind: OptimizerKind, base_lr: f64, total_steps: usize) -> Self {
        OptimizerConfig {
            kind,
            base_lr,
            momentum: 0.0,
            weight_decay: 0.0,
            trust_coeff: DEFAULT_TRUST_COEFF,
            max_trust_ratio: None,
            schedule: ScheduleSpec::default(),
            total_steps,
            accum_factor: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn fail(field: &str, detail: String) -> Result<()> {
            Err(CoreError::InvalidArgument(format!("{field}: {detail}")))
        }
        if !(self.base_lr > 0.0) {
            return fail("base_lr", format!("must be positive, got {}", self.base_lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail("momentum", format!("must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0) {
            return fail(
                "weight_decay",
                format!("must be non-negative, got {}", self.weight_decay),
            );
        }
        if !(self.trust_coeff > 0.0) {
            return fail(
                "trust_coeff",
                format!("must be positive, got {}", self.trust_coeff),
            );
        }
        if let Some(max) = self.max_trust_ratio {
            if !(max > 0.0) {
                return fail("max_trust_ratio", format!("must be positive, got {max}"));
            }
        }
        if self.total_steps == 0 {
            return fail("total_steps", "must be at least 1".into());
        }
        if self.accum_factor == 0 {
            return fail("accum_factor", "must be at least 1".into());
        }
        if self.schedule.warmup_steps >= self.total_steps && self.schedule.warmup_steps > 0 {
            return fail(
                "warmup_steps",
                format!(
                    "{} must be smaller than total_steps {}",
                    self.schedule.warmup_steps, self.total_steps
                ),
            );
        }
        if self.schedule.warmup_steps > 0 {
            if !(self.schedule.warmup_init_lr > 0.0) {
                return fail(
                    "warmup_init_lr",
                    format!("must be positive, got {}", self.schedule.warmup_init_lr),
                );
            }
            if self.schedule.warmup_init_lr > self.base_lr {
                return fail(
                    "warmup_init_lr",
                    format!(
                        "{} exceeds base_lr {}",
                        self.schedule.warmup_init_lr, self.base_lr
                    ),
                );
            }
        }
        if let Decay::Polynomial { power } = self.schedule.decay {
            if !(power > 0.0) {
                return fail("decay.power", format!("must be positive, got {power}"));
            }
        }
        Ok(())
    }
}

/// Per-group record of one optimizer step.
#[derive(Debug, Clone, Serialize)]
pub struct GroupStepRecord {
    pub name: String,
    /// Weight norm before the update.
    pub w_norm: f64,
    pub g_norm: f64,
    /// Local rate before clamping (1.0 for groups not under LARS, or on the
    /// degenerate-norm fallback).
    pub trust_ratio: f64,
    /// Local rate actually applied (after `max_trust_ratio`).
    pub local_lr: f64,
    /// Norm of the applied update `v`.
    pub update_norm: f64,
}

/// Everything observable about one optimizer step.
#[derive(Debug, Clone, Serialize)]
pub struct StepReport {
    pub step: usize,
    pub global_lr: f64,
    pub groups: Vec<GroupStepRecord>,
}

/// Local LARS rate `eta * w_norm / (g_norm + beta * w_norm)`.
///
/// Falls back to 1.0 when the weight norm is zero (fresh zero-initialized
/// biases) or the denominator is zero, so such groups update with the
/// unscaled global rate and can leave the origin.
pub fn local_lr(w_norm: f64, g_norm: f64, eta: f64, beta: f64) -> Result<f64> {
    if w_norm < 0.0 || g_norm < 0.0 || beta < 0.0 || !(eta > 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "local_lr needs non-negative norms and decay and positive eta; \
             got w_norm={w_norm}, g_norm={g_norm}, eta={eta}, beta={beta}"
        )));
    }
    let denom = g_norm + beta * w_norm;
    if w_norm == 0.0 || denom == 0.0 {
        return Ok(1.0);
    }
    Ok(eta * w_norm / denom)
}

/// One LARS step over all groups at step `t`. Gradients must be freshly
/// computed; weights and momentum buffers are updated in place.
pub fn lars_step(groups: &mut [ParamGroup], cfg: &OptimizerConfig, t: usize) -> Result<StepReport> {
    step_impl(groups, cfg, t, true)
}

/// One (momentum) SGD step: every group updates with local rate 1.
pub fn sgd_step(groups: &mut [ParamGroup], cfg: &OptimizerConfig, t: usize) -> Result<StepReport> {
    step_impl(groups, cfg, t, false)
}

fn step_impl(
    groups: &mut [ParamGroup],
    cfg: &OptimizerConfig,
    t: usize,
    use_lars: bool,
) -> Result<StepReport> {
    let gamma = global_lr(cfg, t)?;
    let mut records = Vec::with_capacity(groups.len());
    for group in groups.iter_mut() {
        let w_norm = group.value.l2_norm()?;
        let g_norm = group.grad.l2_norm()?;
        if !w_norm.is_finite() || !g_norm.is_finite() {
            return Err(CoreError::Divergence {
                group: group.name.clone(),
                detail: format!("non-finite norms at step {t}: ||w||={w_norm}, ||g||={g_norm}"),
            });
        }
        let beta_eff = if group.apply_weight_decay {
            cfg.weight_decay
        } else {
            0.0
        };
        let (trust_ratio, applied) = if use_lars && group.apply_lars {
            let raw = local_lr(w_norm, g_norm, cfg.trust_coeff, beta_eff)?;
            let clamped = match cfg.max_trust_ratio {
                Some(max) => raw.min(max),
                None => raw,
            };
            (raw, clamped)
        } else {
            (1.0, 1.0)
        };
        let update_norm = apply_update(group, gamma * applied, cfg.momentum, beta_eff);
        records.push(GroupStepRecord {
            name: group.name.clone(),
            w_norm,
            g_norm,
            trust_ratio,
            local_lr: applied,
            update_norm,
        });
    }
    Ok(StepReport {
        step: t,
        global_lr: gamma,
        groups: records,
    })
}

/// `v <- m*v + scale*(g + beta*w); w <- w - v`. Returns `||v||`.
fn apply_update(group: &mut ParamGroup, scale: f64, momentum: f64, beta_eff: f64) -> f64 {
    let ParamGroup {
        value,
        grad,
        momentum_buf,
        ..
    } = group;
    let mut norm_acc = 0.0;
    for ((w, &g), v) in value
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(momentum_buf.data_mut())
    {
        let step = momentum * *v + scale * (g + beta_eff * *w);
        *v = step;
        *w -= step;
        norm_acc += step * step;
    }
    norm_acc.sqrt()
}

/// Step-count-tracking wrapper around the raw step functions.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    next_step: usize,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Optimizer { cfg, next_step: 0 })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    /// Index of the step that will run next.
    pub fn next_step(&self) -> usize {
        self.next_step
    }

    /// Restores the step counter from a checkpoint.
    pub fn set_next_step(&mut self, t: usize) {
        self.next_step = t;
    }

    pub fn step(&mut self, groups: &mut [ParamGroup]) -> Result<StepReport> {
        let t = self.next_step;
        let report = match self.cfg.kind {
            OptimizerKind::Lars => lars_step(groups, &self.cfg, t)?,
            OptimizerKind::Sgd | OptimizerKind::SgdMomentum => sgd_step(groups, &self.cfg, t)?,
        };
        self.next_step += 1;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::GroupKind;
    use crate::tensor::Tensor;

    fn group(name: &str, value: &[f64], grad: &[f64]) -> ParamGroup {
        let mut g = ParamGroup::new(name, GroupKind::Weight, Tensor::from_slice(value));
        g.grad = Tensor::from_slice(grad);
        g
    }

    fn plain_cfg(kind: OptimizerKind, base_lr: f64) -> OptimizerConfig {
        OptimizerConfig::new(kind, base_lr, 1_000_000)
    }

    #[test]
    fn local_lr_matches_first_layer_measurements() {
        // ||w|| = 0.098, ||g|| = 0.017 gives a norm ratio of about 5.76,
        // times eta = 1e-3.
        let lr = local_lr(0.098, 0.017, 1e-3, 0.0).unwrap();
        assert!((lr - 1e-3 * 0.098 / 0.017).abs() < 1e-18);
        assert!((lr * 1e3 - 5.7647).abs() < 1e-3);
    }

    #[test]
    fn local_lr_unit_norms() {
        assert_eq!(local_lr(1.0, 1.0, 1e-3, 0.0).unwrap(), 1e-3);
    }

    #[test]
    fn local_lr_with_weight_decay_term() {
        // 1e-3 * 0.098 / (0.017 + 0.0005*0.098) = 5.7481377e-3 by direct
        // arithmetic.
        let lr = local_lr(0.098, 0.017, 1e-3, 5e-4).unwrap();
        assert!((lr - 5.7481377e-3).abs() < 1e-9);
    }

    #[test]
    fn local_lr_degenerate_fallbacks() {
        assert_eq!(local_lr(0.0, 0.3, 1e-3, 0.0).unwrap(), 1.0);
        assert_eq!(local_lr(2.0, 0.0, 1e-3, 0.0).unwrap(), 1.0);
        // Zero gradient with decay active still has a live denominator.
        let lr = local_lr(2.0, 0.0, 1e-3, 0.1).unwrap();
        assert!((lr - 1e-2).abs() < 1e-15);
    }

    #[test]
    fn local_lr_rejects_negative_inputs() {
        assert!(local_lr(-1.0, 0.0, 1e-3, 0.0).is_err());
        assert!(local_lr(1.0, -1.0, 1e-3, 0.0).is_err());
        assert!(local_lr(1.0, 1.0, 0.0, 0.0).is_err());
        assert!(local_lr(1.0, 1.0, 1e-3, -0.1).is_err());
    }

    #[test]
    fn lars_step_hand_example() {
        // ||w|| = 5, ||g|| = 10, eta = 1e-3, gamma = 1 => lambda = 5e-4 and
        // the second weight moves by 5e-4 * 10 = 5e-3.
        let mut groups = vec![group("w", &[3.0, 4.0], &[0.0, 10.0])];
        let cfg = plain_cfg(OptimizerKind::Lars, 1.0);
        let report = lars_step(&mut groups, &cfg, 0).unwrap();
        assert!((groups[0].value.data()[0] - 3.0).abs() < 1e-15);
        assert!((groups[0].value.data()[1] - 3.995).abs() < 1e-15);
        let rec = &report.groups[0];
        assert!((rec.local_lr - 5e-4).abs() < 1e-18);
        assert!((rec.update_norm - 5e-3).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_weights_alone() {
        let mut groups = vec![group("w", &[1.0, -2.0], &[0.0, 0.0])];
        let cfg = plain_cfg(OptimizerKind::Lars, 0.5);
        lars_step(&mut groups, &cfg, 0).unwrap();
        assert_eq!(groups[0].value.data(), &[1.0, -2.0]);
    }

    #[test]
    fn update_is_invariant_to_gradient_scale() {
        let cfg = plain_cfg(OptimizerKind::Lars, 0.7);
        let mut a = vec![group("w", &[0.3, -1.1, 2.0], &[0.02, 0.5, -0.3])];
        let mut b = vec![group("w", &[0.3, -1.1, 2.0], &[0.2, 5.0, -3.0])];
        lars_step(&mut a, &cfg, 0).unwrap();
        lars_step(&mut b, &cfg, 0).unwrap();
        for (x, y) in a[0].value.data().iter().zip(b[0].value.data()) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn sgd_basic_update() {
        let mut groups = vec![group("w", &[1.0], &[0.5])];
        let cfg = plain_cfg(OptimizerKind::Sgd, 0.1);
        sgd_step(&mut groups, &cfg, 0).unwrap();
        assert!((groups[0].value.data()[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn sgd_zero_rate_is_identity() {
        // The raw step function does not revalidate the config, so a zero
        // rate is usable for this degenerate check.
        let mut groups = vec![group("w", &[1.0, 2.0], &[3.0, -4.0])];
        let mut cfg = plain_cfg(OptimizerKind::Sgd, 1.0);
        cfg.base_lr = 0.0;
        sgd_step(&mut groups, &cfg, 0).unwrap();
        assert_eq!(groups[0].value.data(), &[1.0, 2.0]);
    }

    #[test]
    fn momentum_accumulates_geometric_series() {
        // Constant gradient, three steps from v=0: v3 = lr*g*(1 + m + m^2).
        let mut groups = vec![group("w", &[10.0], &[2.0])];
        let mut cfg = plain_cfg(OptimizerKind::SgdMomentum, 0.1);
        cfg.momentum = 0.9;
        for t in 0..3 {
            groups[0].grad = Tensor::from_slice(&[2.0]);
            sgd_step(&mut groups, &cfg, t).unwrap();
        }
        let expected = 0.1 * 2.0 * (1.0 + 0.9 + 0.81);
        assert!((groups[0].momentum_buf.data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn momentum_recurrence_matches_closed_form_unrolled() {
        // v_t = sum_i m^(t-i) * gamma_i * lambda_i * (g_i + beta * w_i),
        // hand-unrolled over three steps with LARS local rates live.
        let mut groups = vec![group("w", &[2.0], &[0.4])];
        let mut cfg = plain_cfg(OptimizerKind::Lars, 0.3);
        cfg.momentum = 0.5;
        cfg.weight_decay = 0.1;
        cfg.trust_coeff = 0.25;

        let grads = [0.4, -0.2, 0.7];
        let mut expected_v = 0.0;
        for (t, &g) in grads.iter().enumerate() {
            let w = groups[0].value.data()[0];
            groups[0].grad = Tensor::from_slice(&[g]);
            let lambda = local_lr(w.abs(), g.abs(), cfg.trust_coeff, cfg.weight_decay).unwrap();
            expected_v = cfg.momentum * expected_v + 0.3 * lambda * (g + cfg.weight_decay * w);
            lars_step(&mut groups, &cfg, t).unwrap();
        }
        assert!((groups[0].momentum_buf.data()[0] - expected_v).abs() < 1e-12);
    }

    #[test]
    fn lars_with_all_groups_opted_out_is_sgd_bitwise() {
        let make = || {
            let mut g = group("w", &[0.4, -0.9, 1.3], &[0.1, 0.02, -0.5]);
            g.apply_lars = false;
            let mut b = group("b", &[0.0, 0.0], &[0.3, -0.1]);
            b.apply_lars = false;
            b.apply_weight_decay = false;
            vec![g, b]
        };
        let mut cfg = plain_cfg(OptimizerKind::Lars, 0.05);
        cfg.momentum = 0.9;
        cfg.weight_decay = 5e-4;

        let mut via_lars = make();
        let mut via_sgd = make();
        for t in 0..4 {
            lars_step(&mut via_lars, &cfg, t).unwrap();
            sgd_step(&mut via_sgd, &cfg, t).unwrap();
        }
        for (a, b) in via_lars.iter().zip(&via_sgd) {
            for (x, y) in a.value.data().iter().zip(b.value.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn non_finite_gradient_reports_divergence_with_group_name() {
        let mut groups = vec![group("dense1.w", &[1.0], &[f64::NAN])];
        let cfg = plain_cfg(OptimizerKind::Lars, 0.1);
        match lars_step(&mut groups, &cfg, 0) {
            Err(CoreError::Divergence { group, .. }) => assert_eq!(group, "dense1.w"),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn max_trust_ratio_clamps_local_rate() {
        let mut groups = vec![group("w", &[100.0], &[0.001])];
        let mut cfg = plain_cfg(OptimizerKind::Lars, 1.0);
        cfg.max_trust_ratio = Some(2.0);
        let report = lars_step(&mut groups, &cfg, 0).unwrap();
        assert!(report.groups[0].trust_ratio > 2.0);
        assert_eq!(report.groups[0].local_lr, 2.0);
    }

    #[test]
    fn optimizer_validates_and_counts_steps() {
        let mut cfg = plain_cfg(OptimizerKind::Lars, 0.1);
        cfg.momentum = 1.0;
        assert!(Optimizer::new(cfg).is_err());

        let mut opt = Optimizer::new(plain_cfg(OptimizerKind::Sgd, 0.1)).unwrap();
        let mut groups = vec![group("w", &[1.0], &[1.0])];
        opt.step(&mut groups).unwrap();
        opt.step(&mut groups).unwrap();
        assert_eq!(opt.next_step(), 2);
    }
}
