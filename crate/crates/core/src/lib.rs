pub mod error;
pub mod volume;

pub use error::{Error, Result};
pub mod augment;
pub mod features;
pub mod metrics;
pub mod model;
pub mod morphometry;
pub mod phantom;
pub mod selftrain;
pub mod stats;
pub mod cli;
