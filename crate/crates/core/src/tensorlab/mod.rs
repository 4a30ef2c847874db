//! Dense tensors, reverse-mode autodiff, Adam, gradient checking and the
//! checkpoint container.

mod adam;
mod checkpoint;
mod gradcheck;
mod graph;
mod image_ops;
pub(crate) mod kernels;
mod tensor;

pub use adam::{adam_step, clip_global_norm, Adam, AdamConfig, AdamState};
pub use checkpoint::{sha256_hex, Checkpoint, Entry, Payload, Precision, MAGIC};
pub(crate) use checkpoint::write_atomic;
pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport};
pub use image_ops::{avgpool2, conv3x3, upsample2, upsample2_tensor};
pub use graph::{CustomOp, Gradients, Graph, Var, ACTIVATION_CLAMP};
pub use kernels::{binary_entropy, sigmoid, softplus};
pub use tensor::Tensor;
