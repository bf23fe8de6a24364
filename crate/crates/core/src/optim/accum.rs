//! Large-batch emulation: compute a big batch's gradient as the exact mean
//! of several equally sized chunk gradients, then step once.

use crate::error::{CoreError, Result};
use crate::nn::{Batch, Model};
use crate::tensor::Tensor;

/// Runs forward/backward over each chunk in ascending index order and
/// leaves the mean-over-all-samples gradient in every parameter group, as
/// if one backward pass had covered the concatenated batch. Returns the
/// mean loss and accuracy over the chunks.
///
/// Chunks must be non-empty and equally sized, otherwise the simple mean of
/// chunk means would no longer equal the sample mean. Note that batch
/// normalization computes its statistics per chunk, so for models with
/// batch norm the chunked gradient equals the monolithic one only in the
/// trivial single-chunk case.
pub fn accumulate_gradients(model: &mut Model, chunks: &[Batch]) -> Result<(f64, f64)> {
    if chunks.is_empty() {
        return Err(CoreError::InvalidArgument(
            "gradient accumulation needs at least one chunk".into(),
        ));
    }
    let size = chunks[0].len();
    if let Some(bad) = chunks.iter().find(|c| c.len() != size) {
        return Err(CoreError::InvalidArgument(format!(
            "accumulation chunks must be equally sized: {} vs {}",
            size,
            bad.len()
        )));
    }

    let k = chunks.len() as f64;
    let mut acc: Vec<Tensor> = model
        .param_groups()
        .iter()
        .map(|g| Tensor::zeros(g.grad.shape().to_vec()))
        .collect();
    let mut loss_sum = 0.0;
    let mut acc_sum = 0.0;
    for chunk in chunks {
        let (loss, accu) = model.forward_backward(chunk)?;
        loss_sum += loss;
        acc_sum += accu;
        for (slot, g) in acc.iter_mut().zip(model.param_groups()) {
            for (a, &v) in slot.data_mut().iter_mut().zip(g.grad.data()) {
                *a += v;
            }
        }
    }
    for (g, slot) in model.param_groups_mut().iter_mut().zip(acc) {
        g.grad = slot.scale(1.0 / k);
    }
    Ok((loss_sum / k, acc_sum / k))
}

/// Splits one batch into `k` consecutive equally sized chunks.
pub fn split_batch(batch: &Batch, k: usize) -> Result<Vec<Batch>> {
    if k == 0 || batch.len() % k != 0 {
        return Err(CoreError::InvalidArgument(format!(
            "batch of {} samples cannot be split into {k} equal chunks",
            batch.len()
        )));
    }
    let chunk = batch.len() / k;
    let dim = batch.inputs.cols();
    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        let rows = &batch.inputs.data()[c * chunk * dim..(c + 1) * chunk * dim];
        out.push(Batch::new(
            Tensor::new(vec![chunk, dim], rows.to_vec())?,
            batch.labels[c * chunk..(c + 1) * chunk].to_vec(),
        )?);
    }
    Ok(out)
}

/// Endpoints of the linear-scaling comparison: from `w0`, two gradient
/// steps at rate `lr` versus one step at rate `2 * lr`, with gradients
/// supplied by `grad_fn`. On an objective with a constant gradient the two
/// endpoints coincide exactly; when the gradient varies they differ by
/// O(lr^2).
pub fn linear_scaling_endpoints<F>(w0: &Tensor, grad_fn: F, lr: f64) -> Result<(Tensor, Tensor)>
where
    F: Fn(&Tensor) -> Tensor,
{
    let g1 = grad_fn(w0);
    let w1 = Tensor::axpy(-lr, &g1, w0)?;
    let g2 = grad_fn(&w1);
    let two_small = Tensor::axpy(-lr, &g2, &w1)?;

    let g = grad_fn(w0);
    let one_big = Tensor::axpy(-2.0 * lr, &g, w0)?;
    Ok((two_small, one_big))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{MlpTopology, Model};
    use crate::rng::Rng;

    fn setup(bn: bool) -> (Model, Batch) {
        let mut rng = Rng::new(31);
        let topo = MlpTopology {
            input_dim: 5,
            hidden: vec![6],
            num_classes: 3,
            batch_norm: bn,
        };
        let model = Model::mlp(&topo, &mut rng).unwrap();
        let inputs = rng.gaussian(vec![8, 5], 0.0, 1.0).unwrap();
        let labels = (0..8).map(|i| i % 3).collect();
        (model, Batch::new(inputs, labels).unwrap())
    }

    #[test]
    fn single_chunk_equals_plain_backward() {
        let (mut model, batch) = setup(false);
        model.forward_backward(&batch).unwrap();
        let direct: Vec<Tensor> = model.param_groups().iter().map(|g| g.grad.clone()).collect();
        accumulate_gradients(&mut model, std::slice::from_ref(&batch)).unwrap();
        for (g, d) in model.param_groups().iter().zip(&direct) {
            for (a, b) in g.grad.data().iter().zip(d.data()) {
                assert!((a - b).abs() < 1e-15, "group {}", g.name);
            }
        }
    }

    #[test]
    fn chunkings_agree_with_each_other() {
        let (mut model, batch) = setup(false);
        let two = split_batch(&batch, 2).unwrap();
        let four = split_batch(&batch, 4).unwrap();
        accumulate_gradients(&mut model, &two).unwrap();
        let g2: Vec<Tensor> = model.param_groups().iter().map(|g| g.grad.clone()).collect();
        accumulate_gradients(&mut model, &four).unwrap();
        for (g, d) in model.param_groups().iter().zip(&g2) {
            for (a, b) in g.grad.data().iter().zip(d.data()) {
                assert!((a - b).abs() < 1e-12, "group {}", g.name);
            }
        }
    }

    #[test]
    fn identical_chunks_reproduce_single_chunk_gradient() {
        let (mut model, batch) = setup(false);
        let chunks = vec![batch.clone(), batch.clone(), batch.clone()];
        accumulate_gradients(&mut model, &chunks).unwrap();
        let repeated: Vec<Tensor> = model.param_groups().iter().map(|g| g.grad.clone()).collect();
        model.forward_backward(&batch).unwrap();
        for (g, r) in model.param_groups().iter().zip(&repeated) {
            for (a, b) in g.grad.data().iter().zip(r.data()) {
                assert!((a - b).abs() < 1e-15, "group {}", g.name);
            }
        }
    }

    #[test]
    fn unequal_chunks_rejected() {
        let (mut model, batch) = setup(false);
        let halves = split_batch(&batch, 2).unwrap();
        let quarters = split_batch(&batch, 4).unwrap();
        let mixed = vec![halves[0].clone(), quarters[0].clone()];
        assert!(accumulate_gradients(&mut model, &mixed).is_err());
        assert!(accumulate_gradients(&mut model, &[]).is_err());
    }

    #[test]
    fn constant_gradient_endpoints_coincide() {
        let w0 = Tensor::from_slice(&[1.0, -2.0, 0.5]);
        let g = Tensor::from_slice(&[0.3, 0.1, -0.2]);
        let (two, one) = linear_scaling_endpoints(&w0, |_| g.clone(), 0.05).unwrap();
        for ((a, b), (&w, &gv)) in two
            .data()
            .iter()
            .zip(one.data())
            .zip(w0.data().iter().zip(g.data()))
        {
            assert_eq!(a, b);
            assert!((a - (w - 2.0 * 0.05 * gv)).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_rate_returns_start_point() {
        let w0 = Tensor::from_slice(&[1.0, 2.0]);
        let (two, one) =
            linear_scaling_endpoints(&w0, |w| w.scale(3.0), 0.0).unwrap();
        assert_eq!(two, w0);
        assert_eq!(one, w0);
    }

    #[test]
    fn quadratic_gap_shrinks_quadratically_in_rate() {
        // f(w) = sum a_i w_i^2 / 2 has gradient a .* w; the two-endpoints
        // gap is exactly lr^2 * a^2 * w0, so each 10x rate reduction shrinks
        // it 100x.
        let w0 = Tensor::from_slice(&[1.0, -0.5, 2.0]);
        let a = Tensor::from_slice(&[0.7, 1.3, 0.4]);
        let gap = |lr: f64| {
            let (two, one) =
                linear_scaling_endpoints(&w0, |w| w.hadamard(&a).unwrap(), lr).unwrap();
            two.sub(&one).unwrap().l2_norm().unwrap()
        };
        let gaps: Vec<f64> = [1e-1, 1e-2, 1e-3].iter().map(|&lr| gap(lr)).collect();
        assert!((gaps[0] / gaps[1] - 100.0).abs() < 1.0, "{gaps:?}");
        assert!((gaps[1] / gaps[2] - 100.0).abs() < 1.0, "{gaps:?}");
    }
}
