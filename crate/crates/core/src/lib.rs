//! Measuring how much preprocessing choices change the ranking of
//! recommender algorithms on a dataset.

pub mod algos;
pub mod analysis;
pub mod error;
pub mod experiment;
pub mod ingest;
pub mod metrics;
pub mod protocol;
pub mod report;
pub mod seed;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
