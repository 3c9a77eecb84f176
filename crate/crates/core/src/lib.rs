//! Con2DA laboratory core.
//!
//! A self-contained semi-supervised domain adaptation (SSDA) testbed:
//! weak/strong stochastic augmentation, an L2-normalized prototype
//! classifier over a small MLP feature extractor, and the three-loss
//! objective (supervised, contrastive NT-Xent, thresholded self-supervised)
//! trained with Adam under cosine decay. Everything runs on a tape-based
//! f64 autodiff substrate small enough to finite-difference-check end to end.

pub mod augment;
pub mod data;
pub mod error;
pub mod experiments;
pub mod gradcheck;
pub mod losses;
pub mod model;
pub mod optim;
pub mod seeding;
pub mod tape;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
