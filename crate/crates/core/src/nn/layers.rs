//! Layer math: dense, ReLU, and batch normalization forward/backward passes.
//!
//! Each backward pass is the exact hand-derived gradient of its forward
//! transform; `gradcheck` validates every one against central finite
//! differences before anything downstream is trusted.

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

/// `x W + b` with the bias broadcast over rows. `x` is `[B, n]`, `w` is
/// `[n, m]`, `b` is `[m]`.
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut y = x.matmul(w)?;
    let m = y.cols();
    if b.len() != m {
        return Err(CoreError::ShapeMismatch(format!(
            "dense bias has {} elements, layer output width is {m}",
            b.len()
        )));
    }
    let bias = b.data();
    for row in y.data_mut().chunks_mut(m) {
        for (v, &bv) in row.iter_mut().zip(bias) {
            *v += bv;
        }
    }
    Ok(y)
}

/// Gradients of [`dense_forward`]: `dw = x^T dy`, `db` is the column sum of
/// `dy`, `dx = dy w^T`.
pub fn dense_backward(dy: &Tensor, x: &Tensor, w: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let dw = x.transpose()?.matmul(dy)?;
    let m = dy.cols();
    let mut db = vec![0.0; m];
    for row in dy.data().chunks(m) {
        for (acc, &v) in db.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let dx = dy.matmul(&w.transpose()?)?;
    Ok((dx, dw, Tensor::new(vec![m], db)?))
}

/// Elementwise `max(x, 0)`.
pub fn relu_forward(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
}

/// Passes `dy` through where `x > 0`; the subgradient at exactly 0 is 0.
pub fn relu_backward(dy: &Tensor, x: &Tensor) -> Result<Tensor> {
    if dy.shape() != x.shape() {
        return Err(CoreError::ShapeMismatch(format!(
            "relu backward: dy {:?} vs x {:?}",
            dy.shape(),
            x.shape()
        )));
    }
    let data = dy
        .data()
        .iter()
        .zip(x.data())
        .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Values the batch-norm backward pass needs from the forward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    /// Normalized activations before the gamma/beta affine.
    pub x_hat: Tensor,
    /// Per-feature `1 / sqrt(var + eps)`.
    pub inv_std: Vec<f64>,
    /// Per-feature batch mean, for the running-stat update.
    pub batch_mean: Vec<f64>,
    /// Per-feature population batch variance, for the running-stat update.
    pub batch_var: Vec<f64>,
}

/// Training-mode batch normalization over `[B, n]`: per-feature normalize by
/// the batch mean and population variance, then scale by `gamma` and shift
/// by `beta`. Requires `B >= 2`.
pub fn batchnorm_train_forward(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> Result<(Tensor, BnCache)> {
    let (b, n) = bn_dims(x, gamma, beta)?;
    if b < 2 {
        return Err(CoreError::InvalidArgument(format!(
            "batch normalization in training mode needs a batch of at least 2 samples, got {b}"
        )));
    }
    let mean = x.reduce_mean(0)?;
    let var = x.reduce_var(0)?;
    let inv_std: Vec<f64> = var.data().iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();

    let mut x_hat = Tensor::zeros(vec![b, n]);
    let mut y = Tensor::zeros(vec![b, n]);
    for i in 0..b {
        for j in 0..n {
            let xn = (x.at(i, j) - mean.data()[j]) * inv_std[j];
            x_hat.data_mut()[i * n + j] = xn;
            y.data_mut()[i * n + j] = gamma.data()[j] * xn + beta.data()[j];
        }
    }
    let cache = BnCache {
        x_hat,
        inv_std,
        batch_mean: mean.data().to_vec(),
        batch_var: var.data().to_vec(),
    };
    Ok((y, cache))
}

/// Inference-mode batch normalization: normalize by the running statistics.
pub fn batchnorm_infer_forward(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    eps: f64,
) -> Result<Tensor> {
    let (b, n) = bn_dims(x, gamma, beta)?;
    let mut y = Tensor::zeros(vec![b, n]);
    for i in 0..b {
        for j in 0..n {
            let inv = 1.0 / (running_var.data()[j] + eps).sqrt();
            let xn = (x.at(i, j) - running_mean.data()[j]) * inv;
            y.data_mut()[i * n + j] = gamma.data()[j] * xn + beta.data()[j];
        }
    }
    Ok(y)
}

/// Exact gradient of the training-mode forward, including the dependence of
/// the batch mean and variance on `x`.
pub fn batchnorm_backward(
    dy: &Tensor,
    cache: &BnCache,
    gamma: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let x_hat = &cache.x_hat;
    if dy.shape() != x_hat.shape() {
        return Err(CoreError::ShapeMismatch(format!(
            "batchnorm backward: dy {:?} vs cached x_hat {:?}",
            dy.shape(),
            x_hat.shape()
        )));
    }
    let (b, n) = (x_hat.rows(), x_hat.cols());
    let bf = b as f64;

    let mut dgamma = vec![0.0; n];
    let mut dbeta = vec![0.0; n];
    let mut sum_dxhat = vec![0.0; n];
    let mut sum_dxhat_xhat = vec![0.0; n];
    for i in 0..b {
        for j in 0..n {
            let g = dy.at(i, j);
            let xh = x_hat.at(i, j);
            dgamma[j] += g * xh;
            dbeta[j] += g;
            let dxh = g * gamma.data()[j];
            sum_dxhat[j] += dxh;
            sum_dxhat_xhat[j] += dxh * xh;
        }
    }

    let mut dx = Tensor::zeros(vec![b, n]);
    for i in 0..b {
        for j in 0..n {
            let dxh = dy.at(i, j) * gamma.data()[j];
            dx.data_mut()[i * n + j] = (cache.inv_std[j] / bf)
                * (bf * dxh - sum_dxhat[j] - x_hat.at(i, j) * sum_dxhat_xhat[j]);
        }
    }
    Ok((
        dx,
        Tensor::new(vec![n], dgamma)?,
        Tensor::new(vec![n], dbeta)?,
    ))
}

fn bn_dims(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<(usize, usize)> {
    if x.shape().len() != 2 {
        return Err(CoreError::ShapeMismatch(format!(
            "batch normalization expects [B, n] input, got {:?}",
            x.shape()
        )));
    }
    let (b, n) = (x.rows(), x.cols());
    if gamma.len() != n || beta.len() != n {
        return Err(CoreError::ShapeMismatch(format!(
            "batch normalization parameters have {} / {} elements for width {n}",
            gamma.len(),
            beta.len()
        )));
    }
    Ok((b, n))
}
