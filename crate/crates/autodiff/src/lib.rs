//! Minimal reverse-mode automatic differentiation for small convolutional
//! encoder-decoder networks.
//!
//! Tensors are dense, row-major and carry an optional gradient slot. A
//! [`Graph`] records the forward computation as a tape of nodes and
//! replays it backwards. Only the operators an image-to-image U-Net needs
//! are provided: same-padded 2-D convolution, 2x2 max pooling, nearest
//! neighbour upsampling, ReLU, sigmoid, channel concatenation, broadcast
//! multiplication and the mean squared error loss.
//!
//! Everything is generic over [`Real`], implemented for `f64` (reference,
//! used by gradient checks) and `f32` (training).

mod adam;
mod error;
mod gradcheck;
mod graph;
pub mod kernels;
mod real;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use error::{AutodiffError, Result};
pub use gradcheck::{finite_diff_check, finite_diff_check_smooth, relative_error, GradCheckReport, InputReport};
pub use graph::{Graph, NodeId};
pub use real::Real;
pub use tensor::Tensor;
