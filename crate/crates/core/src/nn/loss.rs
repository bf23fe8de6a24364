//! Softmax cross-entropy loss with its gradient.

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

/// Mean negative log-likelihood of the labels under a softmax over the
/// logits, together with the gradient `(softmax - onehot) / B`.
///
/// Stabilized by subtracting each row's max before exponentiating.
pub fn softmax_ce_loss(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.shape().len() != 2 {
        return Err(CoreError::ShapeMismatch(format!(
            "logits must be [B, C], got {:?}",
            logits.shape()
        )));
    }
    let (b, c) = (logits.rows(), logits.cols());
    if labels.len() != b {
        return Err(CoreError::ShapeMismatch(format!(
            "{} labels for a batch of {b}",
            labels.len()
        )));
    }
    for (i, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(CoreError::InvalidArgument(format!(
                "label {label} at row {i} out of range for {c} classes"
            )));
        }
    }

    let bf = b as f64;
    let mut dlogits = Tensor::zeros(vec![b, c]);
    let mut loss = 0.0;
    for i in 0..b {
        let row = &logits.data()[i * c..(i + 1) * c];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum_exp = 0.0;
        for &v in row {
            sum_exp += (v - max).exp();
        }
        let log_sum = sum_exp.ln();
        loss += log_sum - (row[labels[i]] - max);
        for j in 0..c {
            let p = (row[j] - max).exp() / sum_exp;
            let onehot = if j == labels[i] { 1.0 } else { 0.0 };
            dlogits.data_mut()[i * c + j] = (p - onehot) / bf;
        }
    }
    Ok((loss / bf, dlogits))
}

/// Fraction of rows whose argmax (first maximum on ties) equals the label.
pub fn accuracy(logits: &Tensor, labels: &[usize]) -> f64 {
    let (b, c) = (logits.rows(), logits.cols());
    let mut correct = 0usize;
    for i in 0..b {
        let row = &logits.data()[i * c..(i + 1) * c];
        let mut best = 0usize;
        for j in 1..c {
            if row[j] > row[best] {
                best = j;
            }
        }
        if best == labels[i] {
            correct += 1;
        }
    }
    correct as f64 / b as f64
}
