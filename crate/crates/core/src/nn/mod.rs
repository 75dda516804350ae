//! Dense neural-network engine: tensors, layers, losses, backprop and SGD.
//!
//! Everything runs in float64. Models are an explicit [`ModelSpec`] plus a
//! [`ParameterSet`]; passes are pure functions of both, so independent model
//! instances can be used from different threads.

mod gradcheck;
pub mod io;
mod loss;
mod network;
mod params;
mod spec;
mod tensor;

pub use gradcheck::{batch_loss, finite_difference_gradient, max_relative_error};
pub use loss::{class_rating, loss_and_grad, softmax_rows, LossKind};
pub use network::{backward, forward, update_running_stats, BatchStats, ForwardPass, Phase};
pub use params::{sgd_step, sgd_step_in_place, GradientSet, ParameterSet};
pub use spec::{Batch, IndexBags, InputField, InputSpec, LayerSpec, ModelSpec, BATCH_NORM_MOMENTUM, NORM_EPSILON};
pub use tensor::Tensor;
