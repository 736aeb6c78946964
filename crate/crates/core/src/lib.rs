//! Multimodal learner-emotion recognition: eye-movement, PPG and
//! video-semantic features fused by pairwise multi-head cross-attention
//! and classified from mean/std-pooled pair weights.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod report;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;
