//! Kernel SVM classification with the RoBoSS loss, trained by mini-batch
//! Nesterov accelerated gradient, plus the experiment harness and
//! statistical tests used to compare it against classical losses.

pub mod data;
pub mod error;
pub mod harness;
pub mod cli;
pub mod kernel;
pub mod loss;
pub mod seed;
pub mod stats;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
