//! DDoS flow detection with SMOTE rebalancing and an attention-augmented
//! residual network trained in two phases.

pub mod data;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod persist;
pub mod pipeline;
pub mod seeded;
pub mod smote;
pub mod synth;
pub mod train;

pub use error::{Error, ErrorClass, Result};
pub use matrix::Matrix;
