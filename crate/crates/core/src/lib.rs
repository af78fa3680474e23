//! Learning-to-rank models over candidate sets, a synthetic marketplace
//! simulator, and a reproducible experiment harness.

pub mod aggregation;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod model_io;
pub mod net;
pub mod optim;
pub mod pipeline;
pub mod rankers;
pub mod report;
pub mod seeds;
pub mod sim;
pub mod training;

pub use error::{Error, Result};
