//! The AAViT model family: configuration, parameters, forward pass and
//! checkpoints.

pub mod checkpoint;
mod config;
pub mod params;
mod vit;

pub use config::{HeadKind, ModelConfig};
pub use params::{BlockParams, HeadAttention, HeadParams, Params};
pub use vit::{embed, encoder_forward, head_aamlp, head_baseline, patchify, Forward, Model};
