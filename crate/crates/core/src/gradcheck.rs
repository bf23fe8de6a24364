//! Central finite-difference oracle for validating analytic gradients.
//!
//! The oracle is intentionally independent of the backward passes it checks:
//! it only ever calls forward loss evaluations. Model checks perturb one
//! parameter coordinate at a time and restore it bitwise afterwards.

use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::nn::{Batch, GroupKind, Model};
use crate::tensor::Tensor;

/// Central-difference gradient `(f(w + h e_i) - f(w - h e_i)) / 2h` for
/// every coordinate of `params`.
pub fn finite_diff_grad<F>(mut loss_fn: F, params: &Tensor, h: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut work = params.clone();
    let mut grad = Tensor::zeros(params.shape().to_vec());
    for i in 0..params.len() {
        let orig = work.data()[i];
        work.data_mut()[i] = orig + h;
        let plus = loss_fn(&work)?;
        work.data_mut()[i] = orig - h;
        let minus = loss_fn(&work)?;
        work.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(CoreError::InvalidArgument(format!(
                "finite-difference oracle saw a non-finite loss at coordinate {i}"
            )));
        }
        grad.data_mut()[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// Tuning for [`check_model`].
#[derive(Debug, Clone)]
pub struct CheckSettings {
    /// Perturbation step.
    pub step: f64,
    /// Pass threshold for dense, ReLU, and loss gradients.
    pub dense_threshold: f64,
    /// Pass threshold for batch-norm scale/shift gradients.
    pub bn_threshold: f64,
    /// Optional cap on coordinates probed per group (evenly spaced subset).
    /// `None` probes every coordinate.
    pub coord_limit: Option<usize>,
    /// Coordinates where both gradients are below this magnitude count as
    /// agreeing zeros. A parameter with no influence on the loss (e.g. a
    /// dense bias that a following batch norm cancels) leaves the oracle
    /// measuring rounding noise of order `eps * |loss| / h`, which no
    /// relative-error threshold can classify.
    pub zero_tolerance: f64,
}

impl Default for CheckSettings {
    fn default() -> Self {
        CheckSettings {
            step: 1e-5,
            dense_threshold: 1e-5,
            bn_threshold: 1e-4,
            coord_limit: None,
            zero_tolerance: 1e-9,
        }
    }
}

/// Outcome of checking one parameter group.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub group: String,
    pub max_relative_error: f64,
    /// Coordinate with the largest relative error.
    pub worst_index: usize,
    pub threshold: f64,
    pub pass: bool,
    /// Coordinates compared.
    pub checked: usize,
    /// Coordinates skipped because the perturbation crossed a ReLU kink.
    pub skipped: usize,
}

/// Relative error used throughout: `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares every parameter group's analytic gradient on `batch` against
/// the central-difference oracle. Failures are reported, not raised; the
/// model's parameter values are restored bitwise.
pub fn check_model(
    model: &mut Model,
    batch: &Batch,
    settings: &CheckSettings,
) -> Result<Vec<GradCheckReport>> {
    // Analytic gradients for the exact forward the oracle will probe
    // (training mode, running statistics left untouched).
    model.forward_backward_impl(batch, false)?;
    let analytic: Vec<Tensor> = model.param_groups().iter().map(|g| g.grad.clone()).collect();

    let mut reports = Vec::with_capacity(analytic.len());
    for gi in 0..analytic.len() {
        let (name, kind, len) = {
            let g = &model.param_groups()[gi];
            (g.name.clone(), g.kind, g.value.len())
        };
        let threshold = match kind {
            GroupKind::BnScale | GroupKind::BnShift => settings.bn_threshold,
            GroupKind::Weight | GroupKind::Bias => settings.dense_threshold,
        };

        let coords: Vec<usize> = match settings.coord_limit {
            Some(limit) if limit > 0 && limit < len => {
                // Evenly spaced deterministic subset.
                (0..limit).map(|i| i * len / limit).collect()
            }
            _ => (0..len).collect(),
        };

        let h = settings.step;
        let mut max_rel = 0.0;
        let mut worst = 0;
        let mut checked = 0;
        let mut skipped = 0;
        for &ci in &coords {
            let orig = model.param_groups()[gi].value.data()[ci];

            model.param_groups_mut()[gi].value.data_mut()[ci] = orig + h;
            let (plus, signs_plus) = model.training_loss_with_signs(batch)?;
            model.param_groups_mut()[gi].value.data_mut()[ci] = orig - h;
            let (minus, signs_minus) = model.training_loss_with_signs(batch)?;
            model.param_groups_mut()[gi].value.data_mut()[ci] = orig;

            if signs_plus != signs_minus {
                // The perturbation flipped a ReLU pre-activation sign, so the
                // loss is not differentiable across [w-h, w+h] here.
                skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[gi].data()[ci];
            checked += 1;
            if a.abs() < settings.zero_tolerance && numeric.abs() < settings.zero_tolerance {
                continue;
            }
            let rel = relative_error(a, numeric);
            if rel > max_rel {
                max_rel = rel;
                worst = ci;
            }
        }
        reports.push(GradCheckReport {
            group: name,
            max_relative_error: max_rel,
            worst_index: worst,
            threshold,
            pass: max_rel < threshold,
            checked,
            skipped,
        });
    }
    Ok(reports)
}
