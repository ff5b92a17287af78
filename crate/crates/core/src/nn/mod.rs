//! Minimal neural-network engine: a fixed set of layers with explicit
//! forward/backward passes, losses, optimizers and a finite-difference
//! gradient checker.

mod gradcheck;
mod layer;
mod loss;
mod optim;
mod scalar;
mod tensor;

pub use gradcheck::{gradcheck, relative_error, GradcheckConfig, GradcheckEntry, GradcheckReport, LayerProbe, Parameterized};
pub use layer::{softmax_into, Layer, LayerSpec};
pub use loss::{argmax, cross_entropy, cross_entropy_logit_grad, huber, one_hot_argmax, LOG_FLOOR};
pub use optim::{OptimizerKind, OptimizerState};
pub use scalar::Scalar;
pub use tensor::Tensor;
