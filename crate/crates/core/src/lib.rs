//! Vision transformer with an adaptive-average-pooling attention head
//! (AAViT), together with the pieces needed to train and evaluate it as a
//! face anti-spoofing classifier.
//!
//! - [`tensor`], [`autodiff`], [`gradcheck`]: dense tensors, a recorded
//!   reverse-mode graph, and finite-difference verification.
//! - [`model`]: patch embedding, encoder, the three classification heads and
//!   the checkpoint format.
//! - [`data`]: PPM frames, manifests, batching, and a synthetic corpus.
//! - [`metrics`]: FAR, MDR, EER, HTER and DET curves.
//! - [`train`]: cross-entropy, Adam, the training loop and scoring.

pub mod autodiff;
pub mod data;
mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use autodiff::{Graph, Var};
pub use error::{Error, Result};
pub use model::{HeadKind, Model, ModelConfig};
pub use scalar::{Scalar, ScalarMode};
pub use tensor::{Tensor, TensorError};
