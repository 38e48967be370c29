pub mod cli;
pub mod equivalence;
pub mod error;
pub mod experiments;
pub mod infer;
pub mod metrics;
pub mod model;
pub mod signal;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
