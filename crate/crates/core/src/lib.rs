//! Noisy group testing in the linear-prevalence regime.
//!
//! Every individual of a population of size `n` is infected independently
//! with constant probability `alpha`, and pooled tests are observed through
//! a binary channel that flips a should-be-negative result with probability
//! `p01` and a should-be-positive result with probability `p10`. This crate
//! provides:
//!
//! - [`channel`]: channel validation, Bernoulli KL divergence, the optimal
//!   classification threshold `C`, the error exponent `beta`, and noise
//!   application;
//! - [`thresholds`]: the sharp test-count constants `c_na` and `c_ad` such
//!   that `c * n * ln(n)` tests separate impossible from achievable exact
//!   recovery, non-adaptively and adaptively;
//! - [`population`]: ground-truth sampling, bipartite pooling designs, and
//!   good-test accounting;
//! - [`spog`]: the non-adaptive design generator and decoder built around a
//!   synthetic pseudo-genie;
//! - [`presto`]: the three-stage adaptive protocol over an abstract testing
//!   session;
//! - [`oracles`]: exact MAP and genie estimators with full success-probability
//!   enumeration for small instances.
//!
//! All logarithms are natural; KL divergences and threshold constants are in
//! nats. Randomness is always an explicit argument, so every computation is
//! reproducible given a seeded generator.

pub mod channel;
pub mod oracles;
pub mod population;
pub mod presto;
pub mod spog;
pub mod thresholds;

pub use channel::{kl_bernoulli, ChannelConstants, ChannelError, NoisyChannel};
pub use population::{
    good_test_counts, sample_ground_truth, true_results, GoodTestCounts, InfectionVector,
    ObservedResults, Pool, PoolRole, PopulationError, TestDesign,
};
