//! Subclass supervised sparse autoencoder (S³A).
//!
//! Group-sparse (l2,1) autoencoder training over a class/subclass hierarchy,
//! optimised with IRLS reweighting, followed by a cost-sensitive linear SVM
//! and the evaluation protocols used to score retouching detectors.

pub mod autoencoder;
pub mod classifier;
pub mod datakit;
mod codec;
pub mod error;
pub mod numerics;
pub mod partition;
pub mod protocol;
pub mod sparsity;
pub mod trainer;

pub use error::{Error, Result};
pub use numerics::Matrix;
