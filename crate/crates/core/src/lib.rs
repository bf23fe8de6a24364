//! Layer-wise adaptive rate scaling (LARS) and its supporting cast: a dense
//! `f64` tensor core, a small MLP layer zoo with hand-derived backprop, SGD
//! and LARS optimizers with warm-up/polynomial schedules and gradient
//! accumulation, a finite-difference gradient-check oracle, and training
//! diagnostics (norm ratios, loss gap) persisted as CSV/JSONL streams.
//!
//! Everything is deterministic given a seed: reductions run in fixed order
//! and all randomness flows through [`rng::Rng`].

pub mod checkpoint;
pub mod diagnostics;
pub mod error;
pub mod gradcheck;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use error::{CoreError, Result};
pub use nn::{Batch, GroupKind, MlpTopology, Model, ParamGroup};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use rng::Rng;
pub use tensor::Tensor;
