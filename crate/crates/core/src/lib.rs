//! LSTM sequence learning from first principles, applied to the
//! heart-failure clinical records cohort: death-event classification and
//! cumulative-event trend forecasting.

pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod lstm;
pub mod numerics;
pub mod parallel;
pub mod tasks;
pub mod tensors;
pub mod training;

pub use error::{Error, LoadError, Result};
pub use numerics::{Matrix, Rng, Vector};
pub use parallel::Parallelism;
pub use tensors::{TensorRef, TensorSet};
