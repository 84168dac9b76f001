//! Exact small-instance estimators.
//!
//! These are reference implementations for verification, deliberately built
//! by total enumeration: the MAP estimate over all `2^n` infection vectors,
//! the genie estimate for a single coordinate given every other coordinate's
//! true status (both as a direct posterior comparison and as the equivalent
//! closed-form thresholding rule), and exact success probabilities obtained
//! by summing the joint law over all `(sigma, observed)` pairs.

use crate::channel::NoisyChannel;
use crate::population::{
    good_test_counts, InfectionVector, ObservedResults, PopulationError, TestDesign,
};
use thiserror::Error;

/// Enumeration bound for full MAP search.
pub const MAX_MAP_POPULATION: usize = 20;
/// Enumeration bounds for exact success probabilities (`2^n * 2^m` terms).
pub const MAX_SUCCESS_POPULATION: usize = 8;
pub const MAX_SUCCESS_TESTS: usize = 10;

/// Relative tolerance for detecting posterior ties between log-weights.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("instance too large for exact enumeration: {what} = {got} exceeds {limit}")]
    TooLarge {
        what: &'static str,
        got: usize,
        limit: usize,
    },
    #[error(transparent)]
    Population(#[from] PopulationError),
}

/// Which exact estimator to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Map,
    Genie,
}

/// Unnormalized log posterior weights for every infection vector, indexed by
/// bitmask (bit `i` set means individual `i` infected).
#[derive(Debug, Clone)]
pub struct PosteriorTable {
    n: usize,
    log_weights: Vec<f64>,
}

impl PosteriorTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn log_weight(&self, mask: usize) -> f64 {
        self.log_weights[mask]
    }

    /// The MAP mask: highest weight, ties broken toward more zeros, then
    /// toward the lexicographically smallest bit-vector (bit 0 first).
    pub fn map_mask(&self) -> usize {
        let best = self
            .log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let tolerance = TIE_TOLERANCE * best.abs().max(1.0);
        let mut winner: Option<usize> = None;
        for (mask, &weight) in self.log_weights.iter().enumerate() {
            if weight < best - tolerance {
                continue;
            }
            winner = Some(match winner {
                None => mask,
                Some(current) => pick_tie(current, mask, self.n),
            });
        }
        winner.expect("at least one candidate")
    }
}

/// Prefers fewer infected; among equal counts, the lexicographically smaller
/// bit-vector reading bit 0 first.
fn pick_tie(current: usize, challenger: usize, n: usize) -> usize {
    let cur_ones = current.count_ones();
    let ch_ones = challenger.count_ones();
    if ch_ones != cur_ones {
        return if ch_ones < cur_ones {
            challenger
        } else {
            current
        };
    }
    for i in 0..n {
        let cur_bit = current >> i & 1;
        let ch_bit = challenger >> i & 1;
        if cur_bit != ch_bit {
            return if ch_bit < cur_bit {
                challenger
            } else {
                current
            };
        }
    }
    current
}

fn log_noise_table(ch: &NoisyChannel) -> [[f64; 2]; 2] {
    [
        [ch.p00().ln(), ch.p01().ln()],
        [ch.p10().ln(), ch.p11().ln()],
    ]
}

fn member_masks(design: &TestDesign) -> Vec<usize> {
    design
        .pools()
        .iter()
        .map(|pool| pool.members().iter().fold(0usize, |m, &i| m | 1 << i))
        .collect()
}

/// Builds the full posterior table for a design with `n <= 20`.
pub fn posterior_table(
    design: &TestDesign,
    observed: &ObservedResults,
    alpha: f64,
    ch: &NoisyChannel,
) -> Result<PosteriorTable, OracleError> {
    let n = design.n();
    if n > MAX_MAP_POPULATION {
        return Err(OracleError::TooLarge {
            what: "population",
            got: n,
            limit: MAX_MAP_POPULATION,
        });
    }
    if observed.len() != design.num_tests() {
        return Err(OracleError::Population(
            PopulationError::ResultsLengthMismatch {
                expected: design.num_tests(),
                got: observed.len(),
            },
        ));
    }
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must be in (0, 1)");
    let log_noise = log_noise_table(ch);
    let masks = member_masks(design);
    let log_alpha = alpha.ln();
    let log_healthy = (1.0 - alpha).ln();
    let mut log_weights = Vec::with_capacity(1 << n);
    for sigma_mask in 0usize..1 << n {
        let infected = sigma_mask.count_ones() as f64;
        let mut weight = infected * log_alpha + (n as f64 - infected) * log_healthy;
        for (test, &pool_mask) in masks.iter().enumerate() {
            let ideal = usize::from(sigma_mask & pool_mask != 0);
            let shown = usize::from(observed.get(test));
            weight += log_noise[ideal][shown];
        }
        log_weights.push(weight);
    }
    Ok(PosteriorTable { n, log_weights })
}

/// The MAP infection vector by full enumeration (`n <= 20`).
pub fn map_estimate(
    design: &TestDesign,
    observed: &ObservedResults,
    alpha: f64,
    ch: &NoisyChannel,
) -> Result<InfectionVector, OracleError> {
    let table = posterior_table(design, observed, alpha, ch)?;
    let mask = table.map_mask();
    Ok(InfectionVector::from_bits(
        (0..design.n()).map(|i| mask >> i & 1 == 1).collect(),
    ))
}

/// The genie estimate for coordinate `i`: the status maximizing the
/// conditional probability given the observed results and every *other*
/// coordinate of `sigma_rest` (entry `i` itself is ignored). Ties go to
/// healthy.
pub fn genie_estimate_direct(
    design: &TestDesign,
    observed: &ObservedResults,
    sigma_rest: &InfectionVector,
    alpha: f64,
    ch: &NoisyChannel,
    i: usize,
) -> Result<bool, OracleError> {
    check_genie_inputs(design, observed, sigma_rest, alpha, i)?;
    let log_noise = log_noise_table(ch);
    // Tests whose ideal result does not depend on sigma(i) contribute the
    // same factor to both hypotheses, so only tests where every other member
    // is healthy matter.
    let mut log_odds = alpha.ln() - (1.0 - alpha).ln();
    for &test in design.tests_of(i) {
        let others_healthy = design
            .pool(test)
            .members()
            .iter()
            .all(|&j| j == i || !sigma_rest.get(j));
        if others_healthy {
            let shown = usize::from(observed.get(test));
            log_odds += log_noise[1][shown] - log_noise[0][shown];
        }
    }
    Ok(log_odds > 0.0)
}

/// The genie estimate for coordinate `i` via the closed-form rule: healthy
/// iff (`g = 0` and `alpha <= 1/2`) or `g+ <= C*g + kappa`.
pub fn genie_estimate_threshold(
    design: &TestDesign,
    observed: &ObservedResults,
    sigma_rest: &InfectionVector,
    alpha: f64,
    ch: &NoisyChannel,
    i: usize,
) -> Result<bool, OracleError> {
    check_genie_inputs(design, observed, sigma_rest, alpha, i)?;
    let counts = good_test_counts(design, sigma_rest, observed, i)?;
    let c = ch.threshold_c();
    let kappa = ch.kappa(alpha);
    let healthy = (counts.total == 0 && alpha <= 0.5)
        || counts.positive as f64 <= c * counts.total as f64 + kappa;
    Ok(!healthy)
}

fn check_genie_inputs(
    design: &TestDesign,
    observed: &ObservedResults,
    sigma_rest: &InfectionVector,
    alpha: f64,
    i: usize,
) -> Result<(), OracleError> {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must be in (0, 1)");
    if i >= design.n() {
        return Err(OracleError::Population(PopulationError::IndexOutOfRange {
            index: i,
            n: design.n(),
        }));
    }
    if sigma_rest.len() != design.n() {
        return Err(OracleError::Population(PopulationError::LengthMismatch {
            expected: design.n(),
            got: sigma_rest.len(),
        }));
    }
    if observed.len() != design.num_tests() {
        return Err(OracleError::Population(
            PopulationError::ResultsLengthMismatch {
                expected: design.num_tests(),
                got: observed.len(),
            },
        ));
    }
    Ok(())
}

/// `P[estimator output = ground truth]` by summing the joint law over every
/// `(sigma, observed)` pair. The genie is scored as a vector estimator:
/// success means every coordinate is simultaneously correct, each coordinate
/// receiving the true remainder of sigma.
pub fn exact_success_probability(
    design: &TestDesign,
    alpha: f64,
    ch: &NoisyChannel,
    estimator: EstimatorKind,
) -> Result<f64, OracleError> {
    let n = design.n();
    let m = design.num_tests();
    if n > MAX_SUCCESS_POPULATION {
        return Err(OracleError::TooLarge {
            what: "population",
            got: n,
            limit: MAX_SUCCESS_POPULATION,
        });
    }
    if m > MAX_SUCCESS_TESTS {
        return Err(OracleError::TooLarge {
            what: "tests",
            got: m,
            limit: MAX_SUCCESS_TESTS,
        });
    }
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must be in (0, 1)");

    let masks = member_masks(design);
    let noise = [[ch.p00(), ch.p01()], [ch.p10(), ch.p11()]];

    // MAP does not depend on sigma, so cache its output per observed mask.
    let map_by_observed: Vec<usize> = if estimator == EstimatorKind::Map {
        (0usize..1 << m)
            .map(|observed_mask| {
                let observed = observed_from_mask(observed_mask, m);
                posterior_table(design, &observed, alpha, ch).map(|t| t.map_mask())
            })
            .collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };

    let mut success = 0.0f64;
    for sigma_mask in 0usize..1 << n {
        let infected = sigma_mask.count_ones() as i32;
        let prior = alpha.powi(infected) * (1.0 - alpha).powi(n as i32 - infected);
        let sigma = InfectionVector::from_bits((0..n).map(|i| sigma_mask >> i & 1 == 1).collect());
        let ideal: Vec<usize> = masks
            .iter()
            .map(|&pool_mask| usize::from(sigma_mask & pool_mask != 0))
            .collect();
        for observed_mask in 0usize..1 << m {
            let mut likelihood = 1.0f64;
            for (test, &ideal_bit) in ideal.iter().enumerate() {
                likelihood *= noise[ideal_bit][observed_mask >> test & 1];
            }
            let correct = match estimator {
                EstimatorKind::Map => map_by_observed[observed_mask] == sigma_mask,
                EstimatorKind::Genie => {
                    let observed = observed_from_mask(observed_mask, m);
                    (0..n).all(|i| {
                        genie_estimate_threshold(design, &observed, &sigma, alpha, ch, i)
                            .expect("validated inputs")
                            == sigma.get(i)
                    })
                }
            };
            if correct {
                success += prior * likelihood;
            }
        }
    }
    Ok(success)
}

/// Total joint probability mass over all `(sigma, observed)` pairs; must be 1.
/// Exposed for normalization checks in tests and the oracle-check command.
pub fn total_joint_mass(
    design: &TestDesign,
    alpha: f64,
    ch: &NoisyChannel,
) -> Result<f64, OracleError> {
    let n = design.n();
    let m = design.num_tests();
    if n > MAX_SUCCESS_POPULATION || m > MAX_SUCCESS_TESTS {
        return Err(OracleError::TooLarge {
            what: "instance",
            got: n.max(m),
            limit: MAX_SUCCESS_POPULATION.max(MAX_SUCCESS_TESTS),
        });
    }
    let masks = member_masks(design);
    let noise = [[ch.p00(), ch.p01()], [ch.p10(), ch.p11()]];
    let mut mass = 0.0f64;
    for sigma_mask in 0usize..1 << n {
        let infected = sigma_mask.count_ones() as i32;
        let prior = alpha.powi(infected) * (1.0 - alpha).powi(n as i32 - infected);
        for observed_mask in 0usize..1 << m {
            let mut likelihood = 1.0f64;
            for (test, &pool_mask) in masks.iter().enumerate() {
                let ideal = usize::from(sigma_mask & pool_mask != 0);
                likelihood *= noise[ideal][observed_mask >> test & 1];
            }
            mass += prior * likelihood;
        }
    }
    Ok(mass)
}

fn observed_from_mask(mask: usize, m: usize) -> ObservedResults {
    ObservedResults::from_bits((0..m).map(|t| mask >> t & 1 == 1).collect())
}

/// The success probability of the estimator that always answers all-healthy:
/// `(1-alpha)^n`. Used as a floor that MAP must dominate.
pub fn all_healthy_success_probability(n: usize, alpha: f64) -> f64 {
    (1.0 - alpha).powi(n as i32)
}
