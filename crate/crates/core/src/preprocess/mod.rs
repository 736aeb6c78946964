//! Feature scaling, semantic PCA and ADASYN oversampling. Everything here is
//! fit on a training split and then applied unchanged elsewhere.

mod adasyn;
pub mod linalg;
mod pca;
mod pipeline;
mod standardize;

pub use adasyn::{adasyn, AdasynConfig, ResampleReport, Resampled};
pub use pca::PcaModel;
pub use pipeline::{flatten, oversample, FittedPreprocessor, PreprocessConfig};
pub use standardize::{Standardizer, STD_FLOOR};
