pub mod cli;
pub mod datasets;
pub mod ensemble;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod providers;
pub mod retrieval;
pub mod span;
pub mod vector;

pub use error::{Error, Result};
