//! Finite-difference validation of every analytic gradient in the layer
//! zoo, across randomized model configurations.

use lars_core::gradcheck::{check_model, finite_diff_grad, relative_error, CheckSettings};
use lars_core::nn::{Batch, MlpTopology, Model};
use lars_core::rng::Rng;
use lars_core::tensor::Tensor;

fn random_batch(rng: &mut Rng, b: usize, d: usize, classes: usize) -> Batch {
    let inputs = rng.gaussian(vec![b, d], 0.0, 1.0).unwrap();
    let labels = (0..b).map(|_| rng.below(classes)).collect();
    Batch::new(inputs, labels).unwrap()
}

fn check_config(seed: u64, batch_norm: bool) {
    let mut rng = Rng::new(seed);
    let d = 3 + rng.below(5);
    let hidden = match rng.below(3) {
        0 => vec![4 + rng.below(4)],
        1 => vec![4 + rng.below(4), 3 + rng.below(3)],
        _ => vec![6, 5, 4],
    };
    let classes = 2 + rng.below(4);
    let topo = MlpTopology {
        input_dim: d,
        hidden,
        num_classes: classes,
        batch_norm,
    };
    let mut model = Model::mlp(&topo, &mut rng).unwrap();
    // Check at a generic point: fresh zero biases leave dead samples'
    // pre-activations sitting exactly on the ReLU kink, where the central
    // difference is (correctly) skipped for every bias coordinate.
    for g in model.param_groups_mut() {
        if g.value.l2_norm().unwrap() == 0.0 {
            let shape = g.value.shape().to_vec();
            g.value = rng.gaussian(shape, 0.0, 0.1).unwrap();
        }
    }
    let b = 4 + rng.below(5);
    let batch = random_batch(&mut rng, b, d, classes);

    let reports = check_model(&mut model, &batch, &CheckSettings::default()).unwrap();
    for r in &reports {
        assert!(
            r.pass,
            "seed {seed} bn={batch_norm}: group {} rel err {} over threshold {}",
            r.group, r.max_relative_error, r.threshold
        );
        assert!(r.checked > 0, "group {} had no comparable coordinates", r.group);
    }
}

#[test]
fn dense_relu_loss_gradients_pass_across_random_configs() {
    for seed in 0..12 {
        check_config(seed, false);
    }
}

#[test]
fn batchnorm_gradients_pass_across_random_configs() {
    for seed in 100..112 {
        check_config(seed, true);
    }
}

#[test]
fn two_layer_mlp_seed_zero_against_direct_oracle() {
    // Drives finite_diff_grad directly (independently of check_model's
    // bookkeeping) on the first weight matrix of a 2-layer MLP.
    let mut rng = Rng::new(0);
    let topo = MlpTopology {
        input_dim: 5,
        hidden: vec![6],
        num_classes: 3,
        batch_norm: false,
    };
    let mut model = Model::mlp(&topo, &mut rng).unwrap();
    let batch = random_batch(&mut rng, 6, 5, 3);

    model.forward_backward(&batch).unwrap();
    let wi = model.group_index("dense1.w").unwrap();
    let analytic = model.param_groups()[wi].grad.clone();
    let w0 = model.param_groups()[wi].value.clone();

    let numeric = finite_diff_grad(
        |w| {
            model.param_groups_mut()[wi].value = w.clone();
            model.training_loss(&batch)
        },
        &w0,
        1e-5,
    )
    .unwrap();
    model.param_groups_mut()[wi].value = w0;

    let mut max_rel = 0.0f64;
    for (&a, &n) in analytic.data().iter().zip(numeric.data()) {
        max_rel = max_rel.max(relative_error(a, n));
    }
    assert!(max_rel < 1e-5, "max relative error {max_rel}");
}

#[test]
fn batch_gradient_is_mean_of_per_sample_gradients() {
    let mut rng = Rng::new(7);
    let topo = MlpTopology {
        input_dim: 4,
        hidden: vec![5],
        num_classes: 3,
        batch_norm: false,
    };
    let mut model = Model::mlp(&topo, &mut rng).unwrap();
    let batch = random_batch(&mut rng, 6, 4, 3);

    model.forward_backward(&batch).unwrap();
    let batch_grads: Vec<Tensor> = model
        .param_groups()
        .iter()
        .map(|g| g.grad.clone())
        .collect();

    let mut mean_grads: Vec<Tensor> = model
        .param_groups()
        .iter()
        .map(|g| Tensor::zeros(g.grad.shape().to_vec()))
        .collect();
    let b = batch.len();
    for i in 0..b {
        let row = Tensor::new(
            vec![1, 4],
            batch.inputs.data()[i * 4..(i + 1) * 4].to_vec(),
        )
        .unwrap();
        let single = Batch::new(row, vec![batch.labels[i]]).unwrap();
        model.forward_backward(&single).unwrap();
        for (acc, g) in mean_grads.iter_mut().zip(model.param_groups()) {
            for (a, &v) in acc.data_mut().iter_mut().zip(g.grad.data()) {
                *a += v / b as f64;
            }
        }
    }
    for (mean, full) in mean_grads.iter().zip(&batch_grads) {
        for (a, b) in mean.data().iter().zip(full.data()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn uniform_logit_stationary_point_has_tiny_errors() {
    // Zero output layer and class-balanced labels: the loss sits at a
    // stationary point in the output bias, and all reports stay clean.
    let mut rng = Rng::new(9);
    let topo = MlpTopology {
        input_dim: 4,
        hidden: vec![4],
        num_classes: 2,
        batch_norm: false,
    };
    let mut model = Model::mlp(&topo, &mut rng).unwrap();
    let wi = model.group_index("dense2.w").unwrap();
    let shape = model.param_groups()[wi].value.shape().to_vec();
    model.param_groups_mut()[wi].value = Tensor::zeros(shape);

    let inputs = rng.gaussian(vec![4, 4], 0.0, 1.0).unwrap();
    let batch = Batch::new(inputs, vec![0, 1, 0, 1]).unwrap();
    model.forward_backward(&batch).unwrap();
    let bi = model.group_index("dense2.b").unwrap();
    // (softmax - onehot) averages to zero under balanced labels.
    for &g in model.param_groups()[bi].grad.data() {
        assert!(g.abs() < 1e-12);
    }
    let reports = check_model(&mut model, &batch, &CheckSettings::default()).unwrap();
    for r in &reports {
        assert!(r.pass, "group {} rel err {}", r.group, r.max_relative_error);
    }
}
