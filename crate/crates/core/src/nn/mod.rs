//! A minimal multi-layer perceptron with per-tensor parameter groups.
//!
//! Every parameter tensor (a layer's weights, its biases, a batch-norm scale
//! or shift) is its own [`ParamGroup`] so the optimizer can adapt each one
//! independently. Backpropagation is hand-derived layer by layer; the
//! `gradcheck` module provides the finite-difference oracle that validates
//! it.

pub mod layers;
pub mod loss;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use layers::{
    batchnorm_backward, batchnorm_infer_forward, batchnorm_train_forward, dense_backward,
    dense_forward, relu_backward, relu_forward, BnCache,
};
use loss::{accuracy, softmax_ce_loss};

/// What a parameter tensor is, within its layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Weight,
    Bias,
    BnScale,
    BnShift,
}

/// One named parameter tensor with its gradient, momentum buffer, and
/// per-group optimizer policy. The unit of layer-wise adaptation.
#[derive(Debug, Clone)]
pub struct ParamGroup {
    pub name: String,
    pub kind: GroupKind,
    pub value: Tensor,
    pub grad: Tensor,
    pub momentum_buf: Tensor,
    pub apply_weight_decay: bool,
    pub apply_lars: bool,
}

impl ParamGroup {
    pub fn new(name: impl Into<String>, kind: GroupKind, value: Tensor) -> Self {
        let shape = value.shape().to_vec();
        ParamGroup {
            name: name.into(),
            kind,
            value,
            grad: Tensor::zeros(shape.clone()),
            momentum_buf: Tensor::zeros(shape),
            apply_weight_decay: true,
            apply_lars: true,
        }
    }
}

/// A mini-batch: inputs `[B, d]` plus one class label per row.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Tensor, labels: Vec<usize>) -> Result<Self> {
        if inputs.shape().len() != 2 {
            return Err(CoreError::ShapeMismatch(format!(
                "batch inputs must be [B, d], got {:?}",
                inputs.shape()
            )));
        }
        if inputs.rows() == 0 {
            return Err(CoreError::InvalidArgument("empty batch".into()));
        }
        if inputs.rows() != labels.len() {
            return Err(CoreError::ShapeMismatch(format!(
                "{} input rows vs {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        Ok(Batch { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Shape of an MLP: dense layers of the given hidden widths with ReLU
/// activations (optionally batch-normalized), then a dense output layer
/// producing one logit per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpTopology {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub num_classes: usize,
    pub batch_norm: bool,
}

impl Default for MlpTopology {
    fn default() -> Self {
        MlpTopology {
            input_dim: 784,
            hidden: vec![256, 128],
            num_classes: 10,
            batch_norm: false,
        }
    }
}

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone)]
enum Layer {
    Dense {
        w: usize,
        b: usize,
    },
    BatchNorm {
        label: String,
        gamma: usize,
        beta: usize,
        running_mean: Tensor,
        running_var: Tensor,
    },
    Relu,
}

enum Cache {
    Dense { x: Tensor },
    BatchNorm(BnCache),
    Relu { x: Tensor },
}

/// A feed-forward network over an ordered list of parameter groups.
///
/// In training mode batch norm uses batch statistics and
/// [`Model::forward_backward`] writes fresh gradients; in inference mode
/// [`Model::evaluate`] normalizes by running statistics and touches nothing.
#[derive(Debug, Clone)]
pub struct Model {
    topology: MlpTopology,
    layers: Vec<Layer>,
    groups: Vec<ParamGroup>,
    training: bool,
}

impl Model {
    /// Builds an MLP with Gaussian `std = 1/sqrt(fan_in)` weight init, zero
    /// biases, and unit-scale/zero-shift batch norm.
    pub fn mlp(topology: &MlpTopology, rng: &mut Rng) -> Result<Model> {
        if topology.input_dim == 0 {
            return Err(CoreError::InvalidArgument("input_dim must be positive".into()));
        }
        if topology.num_classes < 2 {
            return Err(CoreError::InvalidArgument(format!(
                "need at least 2 classes, got {}",
                topology.num_classes
            )));
        }
        if topology.hidden.iter().any(|&w| w == 0) {
            return Err(CoreError::InvalidArgument(
                "hidden layer widths must be positive".into(),
            ));
        }

        let mut layers = Vec::new();
        let mut groups: Vec<ParamGroup> = Vec::new();
        let push_dense = |groups: &mut Vec<ParamGroup>,
                              rng: &mut Rng,
                              idx: usize,
                              fan_in: usize,
                              fan_out: usize|
         -> Result<(usize, usize)> {
            let std = 1.0 / (fan_in as f64).sqrt();
            let w = rng.gaussian(vec![fan_in, fan_out], 0.0, std)?;
            let wi = groups.len();
            groups.push(ParamGroup::new(format!("dense{idx}.w"), GroupKind::Weight, w));
            let bi = groups.len();
            groups.push(ParamGroup::new(
                format!("dense{idx}.b"),
                GroupKind::Bias,
                Tensor::zeros(vec![fan_out]),
            ));
            Ok((wi, bi))
        };

        let mut prev = topology.input_dim;
        for (i, &width) in topology.hidden.iter().enumerate() {
            let (w, b) = push_dense(&mut groups, rng, i + 1, prev, width)?;
            layers.push(Layer::Dense { w, b });
            if topology.batch_norm {
                let label = format!("bn{}", i + 1);
                let gamma = groups.len();
                groups.push(ParamGroup::new(
                    format!("{label}.gamma"),
                    GroupKind::BnScale,
                    Tensor::filled(vec![width], 1.0),
                ));
                let beta = groups.len();
                groups.push(ParamGroup::new(
                    format!("{label}.beta"),
                    GroupKind::BnShift,
                    Tensor::zeros(vec![width]),
                ));
                layers.push(Layer::BatchNorm {
                    label,
                    gamma,
                    beta,
                    running_mean: Tensor::zeros(vec![width]),
                    running_var: Tensor::filled(vec![width], 1.0),
                });
            }
            layers.push(Layer::Relu);
            prev = width;
        }
        let (w, b) = push_dense(
            &mut groups,
            rng,
            topology.hidden.len() + 1,
            prev,
            topology.num_classes,
        )?;
        layers.push(Layer::Dense { w, b });

        Ok(Model {
            topology: topology.clone(),
            layers,
            groups,
            training: true,
        })
    }

    pub fn topology(&self) -> &MlpTopology {
        &self.topology
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    pub fn param_groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn param_groups_mut(&mut self) -> &mut [ParamGroup] {
        &mut self.groups
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == name)
    }

    /// Running batch-norm statistics as `(name, tensor)` pairs, e.g.
    /// `("bn1.running_mean", ...)`. Empty for models without batch norm.
    pub fn running_stats(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let Layer::BatchNorm {
                label,
                running_mean,
                running_var,
                ..
            } = layer
            {
                out.push((format!("{label}.running_mean"), running_mean));
                out.push((format!("{label}.running_var"), running_var));
            }
        }
        out
    }

    /// Overwrites a running statistic by name; used by checkpoint loading.
    pub fn set_running_stat(&mut self, name: &str, value: Tensor) -> Result<()> {
        for layer in &mut self.layers {
            if let Layer::BatchNorm {
                label,
                running_mean,
                running_var,
                ..
            } = layer
            {
                let target = if name == format!("{label}.running_mean") {
                    Some(running_mean)
                } else if name == format!("{label}.running_var") {
                    Some(running_var)
                } else {
                    None
                };
                if let Some(slot) = target {
                    if slot.shape() != value.shape() {
                        return Err(CoreError::ShapeMismatch(format!(
                            "running stat '{name}': {:?} vs {:?}",
                            slot.shape(),
                            value.shape()
                        )));
                    }
                    *slot = value;
                    return Ok(());
                }
            }
        }
        Err(CoreError::Checkpoint(format!(
            "no running statistic named '{name}' in this model"
        )))
    }

    /// Training-mode forward and backward over one batch. Writes the
    /// mean-over-batch gradient into every [`ParamGroup::grad`], updates
    /// batch-norm running statistics, and leaves parameter values untouched.
    /// Returns `(loss, accuracy)`.
    pub fn forward_backward(&mut self, batch: &Batch) -> Result<(f64, f64)> {
        self.forward_backward_impl(batch, true)
    }

    pub(crate) fn forward_backward_impl(
        &mut self,
        batch: &Batch,
        update_stats: bool,
    ) -> Result<(f64, f64)> {
        if !self.training {
            return Err(CoreError::InvalidArgument(
                "forward_backward requires training mode".into(),
            ));
        }
        let (logits, caches) = self.forward_train(&batch.inputs, update_stats)?;
        let (loss, dlogits) = softmax_ce_loss(&logits, &batch.labels)?;
        let acc = accuracy(&logits, &batch.labels);

        let mut grad = dlogits;
        for (layer, cache) in self.layers.iter().zip(caches.iter()).rev() {
            match (layer, cache) {
                (Layer::Dense { w, b }, Cache::Dense { x }) => {
                    let (dx, dw, db) = dense_backward(&grad, x, &self.groups[*w].value)?;
                    self.groups[*w].grad = dw;
                    self.groups[*b].grad = db;
                    grad = dx;
                }
                (Layer::Relu, Cache::Relu { x }) => {
                    grad = relu_backward(&grad, x)?;
                }
                (Layer::BatchNorm { gamma, beta, .. }, Cache::BatchNorm(bn)) => {
                    let (dx, dgamma, dbeta) =
                        batchnorm_backward(&grad, bn, &self.groups[*gamma].value)?;
                    self.groups[*gamma].grad = dgamma;
                    self.groups[*beta].grad = dbeta;
                    grad = dx;
                }
                _ => unreachable!("cache kind always matches its layer"),
            }
        }
        Ok((loss, acc))
    }

    /// Training-mode loss on a batch without touching gradients or running
    /// statistics. This is the scalar function the finite-difference oracle
    /// probes.
    pub fn training_loss(&mut self, batch: &Batch) -> Result<f64> {
        Ok(self.training_loss_with_signs(batch)?.0)
    }

    /// As [`Model::training_loss`], but also reports the sign pattern of
    /// every ReLU pre-activation so callers can detect kink crossings.
    pub fn training_loss_with_signs(&mut self, batch: &Batch) -> Result<(f64, Vec<bool>)> {
        if !self.training {
            return Err(CoreError::InvalidArgument(
                "training_loss requires training mode".into(),
            ));
        }
        let (logits, caches) = self.forward_train(&batch.inputs, false)?;
        let (loss, _) = softmax_ce_loss(&logits, &batch.labels)?;
        let mut signs = Vec::new();
        for cache in &caches {
            if let Cache::Relu { x } = cache {
                signs.extend(x.data().iter().map(|&v| v > 0.0));
            }
        }
        Ok((loss, signs))
    }

    /// Inference-mode loss and accuracy. Batch norm normalizes by running
    /// statistics; nothing in the model is mutated.
    pub fn evaluate(&self, batch: &Batch) -> Result<(f64, f64)> {
        if self.training {
            return Err(CoreError::InvalidArgument(
                "evaluate requires inference mode; call set_training(false) first".into(),
            ));
        }
        let logits = self.forward_infer(&batch.inputs)?;
        let (loss, _) = softmax_ce_loss(&logits, &batch.labels)?;
        Ok((loss, accuracy(&logits, &batch.labels)))
    }

    fn forward_train(
        &mut self,
        inputs: &Tensor,
        update_stats: bool,
    ) -> Result<(Tensor, Vec<Cache>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = inputs.clone();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense { w, b } => {
                    let y = dense_forward(&x, &self.groups[*w].value, &self.groups[*b].value)?;
                    caches.push(Cache::Dense { x });
                    x = y;
                }
                Layer::Relu => {
                    let y = relu_forward(&x);
                    caches.push(Cache::Relu { x });
                    x = y;
                }
                Layer::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                    ..
                } => {
                    let (y, cache) = batchnorm_train_forward(
                        &x,
                        &self.groups[*gamma].value,
                        &self.groups[*beta].value,
                        BN_EPS,
                    )?;
                    if update_stats {
                        for (j, slot) in running_mean.data_mut().iter_mut().enumerate() {
                            *slot = BN_MOMENTUM * *slot + (1.0 - BN_MOMENTUM) * cache.batch_mean[j];
                        }
                        for (j, slot) in running_var.data_mut().iter_mut().enumerate() {
                            *slot = BN_MOMENTUM * *slot + (1.0 - BN_MOMENTUM) * cache.batch_var[j];
                        }
                    }
                    caches.push(Cache::BatchNorm(cache));
                    x = y;
                }
            }
        }
        Ok((x, caches))
    }

    fn forward_infer(&self, inputs: &Tensor) -> Result<Tensor> {
        let mut x = inputs.clone();
        for layer in &self.layers {
            match layer {
                Layer::Dense { w, b } => {
                    x = dense_forward(&x, &self.groups[*w].value, &self.groups[*b].value)?;
                }
                Layer::Relu => {
                    x = relu_forward(&x);
                }
                Layer::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                    ..
                } => {
                    x = batchnorm_infer_forward(
                        &x,
                        &self.groups[*gamma].value,
                        &self.groups[*beta].value,
                        running_mean,
                        running_var,
                        BN_EPS,
                    )?;
                }
            }
        }
        Ok(x)
    }
}
