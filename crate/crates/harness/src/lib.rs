//! Seeded Monte Carlo experiments, threshold sweeps, statistics, and the
//! CSV/SVG surface behind the `pooltest` CLI.
//!
//! Reproducibility contract: one 64-bit master seed; each (multiplier, trial)
//! pair gets its own counter-derived ChaCha stream, so results are
//! bit-identical across reruns and across any number of worker threads.

pub mod experiment;
pub mod fmt;
pub mod oracle_check;
pub mod stats;
pub mod svg;

use pooltest_core::channel::ChannelError;
use pooltest_core::population::PopulationError;
use pooltest_core::presto::PrestoError;
use pooltest_core::spog::SpogError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error(transparent)]
    Spog(#[from] SpogError),
    #[error(transparent)]
    Presto(#[from] PrestoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
