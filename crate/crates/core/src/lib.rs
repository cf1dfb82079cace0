pub mod error;
pub mod experiment;
pub mod flow;
pub mod metrics;
pub mod topology;
pub mod traffic;
pub mod workload;

pub use error::{Error, Result};
