//! The three-stage adaptive protocol over an abstract testing session.
//!
//! Stage 1 gives every individual `ceil(eta*ln n)` individual tests and
//! splits the population at the `C` threshold into a mostly-infected set `S1`
//! and a mostly-healthy set `S0`. Stage 2 retests each member of `S1` with
//! `ceil((1+eps/4)*ln n / KL(p11||p01))` individual tests and accepts into
//! `U1` only those above the stricter threshold `p11 - delta1`, so that `U1`
//! contains no healthy individuals with high probability. Stage 3 cleans up
//! `S0` and `U0` with independent sublinear-prevalence runs of the
//! non-adaptive decoder, confined to each subpopulation.
//!
//! Sessions are the adaptivity boundary: a batch of pools goes in, observed
//! bits come out, and the running test count is tracked by the session. Only
//! the simulator backend ships, but the protocol is generic over the trait.

use crate::channel::{kl, NoisyChannel};
use crate::population::{InfectionVector, ObservedResults, PopulationError};
use crate::spog::{self, SpogError, SpogParams};
use rand::Rng;
use thiserror::Error;

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrestoError {
    #[error("no feasible parameters: {reason}")]
    Infeasible { reason: String },
    #[error("session rejected batch: {reason}")]
    SessionMismatch { reason: String },
    #[error(transparent)]
    Spog(#[from] SpogError),
    #[error(transparent)]
    Population(#[from] PopulationError),
}

/// Protocol parameters. `delta1` controls the stage-2 threshold
/// `p11 - delta1`; `eta` the stage-1 test rate; `theta_s` and `theta_u` the
/// prevalence exponents handed to the stage-3 cleanup runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrestoParams {
    pub eps: f64,
    pub delta1: f64,
    pub eta: f64,
    pub theta_s: f64,
    pub theta_u: f64,
}

impl PrestoParams {
    /// Validates `(eps, delta1, eta)` against the channel and derives the
    /// stage-3 exponents.
    ///
    /// Requires `0 < delta1 < p11 - p01`, the stage-2 separation constraint
    /// `(1+eps/4) * KL(p11-delta1||p01) / KL(p11||p01) > 1`, and the stage-1
    /// rate constraint
    /// `eta * KL(C||p01) < min{1, (1+eps/4) * KL(p11-delta1||p11) / KL(p11||p01)}`.
    pub fn new(eps: f64, delta1: f64, eta: f64, ch: &NoisyChannel) -> Result<Self, PrestoError> {
        if !positive(eps) {
            return Err(PrestoError::Infeasible {
                reason: format!("eps = {eps} must be positive"),
            });
        }
        let p01 = ch.p01();
        let p11 = ch.p11();
        let delta1_in_range = delta1 > 0.0 && delta1 < p11 - p01;
        if !delta1_in_range {
            return Err(PrestoError::Infeasible {
                reason: format!(
                    "delta1 = {delta1} must lie in (0, p11 - p01) = (0, {})",
                    p11 - p01
                ),
            });
        }
        if !positive(eta) {
            return Err(PrestoError::Infeasible {
                reason: format!("eta = {eta} must be positive"),
            });
        }
        let reference = kl(p11, p01);
        let separation = (1.0 + eps / 4.0) * kl(p11 - delta1, p01) / reference;
        if separation <= 1.0 {
            return Err(PrestoError::Infeasible {
                reason: format!(
                    "stage-2 separation constraint violated: (1+eps/4)*KL(p11-delta1||p01)/KL(p11||p01) = {separation} <= 1"
                ),
            });
        }
        let miss_term = (1.0 + eps / 4.0) * kl(p11 - delta1, p11) / reference;
        let c = ch.threshold_c();
        let stage1_load = eta * kl(c, p01);
        if stage1_load >= miss_term.min(1.0) {
            return Err(PrestoError::Infeasible {
                reason: format!(
                    "stage-1 rate constraint violated: eta*KL(C||p01) = {stage1_load} >= min(1, {miss_term})"
                ),
            });
        }
        let theta_s = eta / 2.0 * kl(c, p11);
        let theta_u = 0.5 * (miss_term - stage1_load);
        debug_assert!(theta_s > 0.0 && theta_u > 0.0);
        Ok(Self {
            eps,
            delta1,
            eta,
            theta_s,
            theta_u,
        })
    }
}

/// Deterministic parameter selection: pick the largest `delta1` in
/// `(0, min(p11-p01, p11-C)/2]` whose stage-2 separation clears 1 with a
/// small slack, then the largest `eta` leaving a 10% margin in the stage-1
/// rate constraint.
///
/// The slack is `min(0.01, eps/8)` so that selection stays feasible for
/// arbitrarily small `eps` (the separation tends to `1 + eps/4` as `delta1`
/// goes to 0).
pub fn choose_params(eps: f64, ch: &NoisyChannel) -> Result<PrestoParams, PrestoError> {
    if !positive(eps) {
        return Err(PrestoError::Infeasible {
            reason: format!("eps = {eps} must be positive"),
        });
    }
    let p01 = ch.p01();
    let p11 = ch.p11();
    let c = ch.threshold_c();
    let reference = kl(p11, p01);
    let slack = 0.01f64.min(eps / 8.0);
    let target = 1.0 + slack;
    let separation = |delta1: f64| (1.0 + eps / 4.0) * kl(p11 - delta1, p01) / reference;

    let delta_max = 0.5 * (p11 - p01).min(p11 - c);
    let delta1 = if separation(delta_max) >= target {
        delta_max
    } else {
        // separation is decreasing in delta1 with separation(0) = 1 + eps/4
        // >= target, so bisection on (0, delta_max) converges.
        let mut lo = 0.0f64;
        let mut hi = delta_max;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if separation(mid) >= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    if !positive(delta1) {
        return Err(PrestoError::Infeasible {
            reason: format!("no delta1 in (0, {delta_max}] satisfies the separation constraint"),
        });
    }
    let miss_term = (1.0 + eps / 4.0) * kl(p11 - delta1, p11) / reference;
    let eta = 0.9 * miss_term.min(1.0) / kl(c, p01);
    PrestoParams::new(eps, delta1, eta, ch)
}

/// An adaptive testing session: batches of pools go in, observed bits come
/// out, and the session tracks how many tests it has run. Implementations
/// must never reveal the hidden ground truth.
pub trait AdaptiveSession {
    fn population(&self) -> usize;

    /// Runs one batch of pools and returns their observed bits in order.
    fn submit(&mut self, pools: &[Vec<usize>]) -> Result<Vec<bool>, PrestoError>;

    /// Total tests run so far.
    fn tests_used(&self) -> usize;
}

/// Session backed by a hidden infection vector: each submitted pool is
/// evaluated ideally and then sent through the channel with fresh noise.
/// Submitting the same pool twice yields two independent draws.
#[derive(Debug)]
pub struct SimulatedSession<R: Rng> {
    sigma: InfectionVector,
    ch: NoisyChannel,
    rng: R,
    used: usize,
}

impl<R: Rng> SimulatedSession<R> {
    pub fn new(sigma: InfectionVector, ch: NoisyChannel, rng: R) -> Self {
        Self {
            sigma,
            ch,
            rng,
            used: 0,
        }
    }
}

impl<R: Rng> AdaptiveSession for SimulatedSession<R> {
    fn population(&self) -> usize {
        self.sigma.len()
    }

    fn submit(&mut self, pools: &[Vec<usize>]) -> Result<Vec<bool>, PrestoError> {
        let n = self.sigma.len();
        let mut results = Vec::with_capacity(pools.len());
        for pool in pools {
            if pool.is_empty() {
                return Err(PrestoError::SessionMismatch {
                    reason: "empty pool".into(),
                });
            }
            if let Some(&bad) = pool.iter().find(|&&i| i >= n) {
                return Err(PrestoError::SessionMismatch {
                    reason: format!("member {bad} out of range for population of {n}"),
                });
            }
            let truth = pool.iter().any(|&i| self.sigma.get(i));
            results.push(self.ch.observe(truth, &mut self.rng));
        }
        self.used += pools.len();
        Ok(results)
    }

    fn tests_used(&self) -> usize {
        self.used
    }
}

/// The per-stage partition of the population: `s0 ∪ s1 = [n]` and
/// `u0 ∪ u1 = s1`, all disjoint and sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub s0: Vec<usize>,
    pub s1: Vec<usize>,
    pub u0: Vec<usize>,
    pub u1: Vec<usize>,
}

/// The protocol's output.
#[derive(Debug, Clone)]
pub struct PrestoRun {
    pub estimate: InfectionVector,
    pub tests_used: usize,
    pub stages: StageOutcome,
}

/// Runs the full three-stage protocol against a session of `n` individuals.
///
/// The generator drives only the protocol's own design randomness (the
/// stage-3 pool sampling); observation noise lives inside the session.
pub fn run<S: AdaptiveSession, R: Rng + ?Sized>(
    session: &mut S,
    n: usize,
    ch: &NoisyChannel,
    params: &PrestoParams,
    rng: &mut R,
) -> Result<PrestoRun, PrestoError> {
    run_with_budget(session, n, ch, params, 1.0, rng)
}

/// Like [`run`] but with every stage's count formula scaled by `budget`,
/// for sensitivity ablations.
pub fn run_with_budget<S: AdaptiveSession, R: Rng + ?Sized>(
    session: &mut S,
    n: usize,
    ch: &NoisyChannel,
    params: &PrestoParams,
    budget: f64,
    rng: &mut R,
) -> Result<PrestoRun, PrestoError> {
    if session.population() != n {
        return Err(PrestoError::SessionMismatch {
            reason: format!(
                "session population {} does not match n = {n}",
                session.population()
            ),
        });
    }
    if n < 2 {
        return Err(PrestoError::Infeasible {
            reason: "population must have at least 2 individuals".into(),
        });
    }
    if !positive(budget) {
        return Err(PrestoError::Infeasible {
            reason: format!("budget = {budget} must be positive"),
        });
    }
    let c = ch.constants().c_threshold;
    let p11 = ch.p11();
    let log_n = (n as f64).ln();

    // Stage 1: individual tests for everyone, threshold C (strict).
    let stage1_count = (budget * params.eta * log_n).ceil() as usize;
    let stage1_positives =
        individual_test_counts(session, &(0..n).collect::<Vec<_>>(), stage1_count)?;
    let mut s1 = Vec::new();
    let mut s0 = Vec::new();
    for (i, &positives) in stage1_positives.iter().enumerate() {
        if positives as f64 > c * stage1_count as f64 {
            s1.push(i);
        } else {
            s0.push(i);
        }
    }

    // Stage 2: retest S1 at the stricter threshold p11 - delta1 (strict).
    let stage2_count =
        (budget * (1.0 + params.eps / 4.0) * log_n / kl(p11, ch.p01())).ceil() as usize;
    let stage2_positives = individual_test_counts(session, &s1, stage2_count)?;
    let mut u1 = Vec::new();
    let mut u0 = Vec::new();
    for (k, &i) in s1.iter().enumerate() {
        if stage2_positives[k] as f64 > (p11 - params.delta1) * stage2_count as f64 {
            u1.push(i);
        } else {
            u0.push(i);
        }
    }

    // Stage 3: sublinear cleanup of S0 and U0, independently.
    let s_infected = cleanup_subset(
        session,
        &s0,
        n,
        ch,
        params,
        params.theta_s,
        stage2_count,
        budget,
        rng,
    )?;
    let u_infected = cleanup_subset(
        session,
        &u0,
        n,
        ch,
        params,
        params.theta_u,
        stage2_count,
        budget,
        rng,
    )?;

    let mut bits = vec![false; n];
    for &i in u1.iter().chain(&s_infected).chain(&u_infected) {
        bits[i] = true;
    }
    Ok(PrestoRun {
        estimate: InfectionVector::from_bits(bits),
        tests_used: session.tests_used(),
        stages: StageOutcome { s0, s1, u0, u1 },
    })
}

/// Submits `count` individual tests per listed member as one batch and
/// returns per-member positive counts. The batch is fixed before any of its
/// results are seen, so the protocol is adaptive only between stages.
fn individual_test_counts<S: AdaptiveSession>(
    session: &mut S,
    members: &[usize],
    count: usize,
) -> Result<Vec<usize>, PrestoError> {
    let mut pools = Vec::with_capacity(members.len() * count);
    for &i in members {
        for _ in 0..count {
            pools.push(vec![i]);
        }
    }
    let results = session.submit(&pools)?;
    Ok(aggregate_positive_counts(members.len(), count, &results))
}

/// Folds a flat member-major result vector into per-member positive counts.
/// Pure, so reordering results within one member's block cannot change it.
pub fn aggregate_positive_counts(
    members: usize,
    per_member: usize,
    results: &[bool],
) -> Vec<usize> {
    assert_eq!(results.len(), members * per_member);
    (0..members)
        .map(|k| {
            results[k * per_member..(k + 1) * per_member]
                .iter()
                .filter(|&&b| b)
                .count()
        })
        .collect()
}

/// Runs the non-adaptive decoder on one subpopulation with the sublinear
/// parameterization: `alpha_hat = n_global^-theta_hat` while all count
/// formulas use the subpopulation size. Degenerate subpopulations (too small
/// for the parameterization, or with an infeasible pool-size bound at this
/// scale) fall back to plain individual testing at threshold `C`.
#[allow(clippy::too_many_arguments)]
fn cleanup_subset<S: AdaptiveSession, R: Rng + ?Sized>(
    session: &mut S,
    members: &[usize],
    n_global: usize,
    ch: &NoisyChannel,
    params: &PrestoParams,
    theta_hat: f64,
    fallback_count: usize,
    budget: f64,
    rng: &mut R,
) -> Result<Vec<usize>, PrestoError> {
    if members.is_empty() {
        return Ok(Vec::new());
    }
    let m = members.len();
    let alpha_hat = (n_global as f64).powf(-theta_hat);
    let gamma = (m as f64).ln().ceil().max(1.0) as usize;
    let gamma_bound = (1.0 / alpha_hat).ceil() as usize;
    let degenerate = m <= 2 || m <= gamma || gamma > gamma_bound || alpha_hat >= 1.0;
    if degenerate {
        let c = ch.constants().c_threshold;
        let positives = individual_test_counts(session, members, fallback_count)?;
        return Ok(members
            .iter()
            .zip(&positives)
            .filter(|&(_, &pos)| pos as f64 >= c * fallback_count as f64)
            .map(|(&i, _)| i)
            .collect());
    }

    let sub_params = SpogParams::new(alpha_hat, gamma, params.eps / 2.0, params.eps)?;
    let design = spog::build_design_with_budget(m, &sub_params, ch, budget, rng)?;
    let pools: Vec<Vec<usize>> = design
        .design()
        .pools()
        .iter()
        .map(|pool| pool.members().iter().map(|&local| members[local]).collect())
        .collect();
    let observed = ObservedResults::from_bits(session.submit(&pools)?);
    let decoded = design.decode(&observed, ch)?;
    Ok(decoded.infected().map(|local| members[local]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::sample_ground_truth;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sym(p: f64) -> NoisyChannel {
        NoisyChannel::symmetric(p).unwrap()
    }

    #[test]
    fn tiny_delta1_always_satisfies_separation() {
        // As delta1 -> 0 the separation tends to 1 + eps/4 > 1. The stage-1
        // rate cap shrinks with delta1, so eta must shrink along with it.
        let ch = sym(0.1);
        let eps = 0.5;
        let sep = (1.0 + eps / 4.0) * kl(ch.p11() - 1e-6, ch.p01()) / kl(ch.p11(), ch.p01());
        assert!(sep > 1.0);
        assert!(PrestoParams::new(eps, 1e-6, 1e-12, &ch).is_ok());
    }

    #[test]
    fn choose_params_satisfies_all_constraints() {
        for (eps, ch) in [
            (0.5, sym(0.1)),
            (0.5, sym(0.01)),
            (0.02, sym(0.2)),
            (1.0, NoisyChannel::new(0.05, 0.2).unwrap()),
            (0.5, NoisyChannel::new(1e-6, 1e-6).unwrap()),
        ] {
            let params = choose_params(eps, &ch).unwrap();
            // PrestoParams::new re-checks every constraint.
            let rebuilt = PrestoParams::new(eps, params.delta1, params.eta, &ch).unwrap();
            assert_eq!(params, rebuilt);
            assert!(params.theta_s > 0.0);
            assert!(params.theta_u > 0.0);
        }
    }

    #[test]
    fn choose_params_frozen_regression() {
        // Deterministic selection output for (eps = 0.5, symmetric 10%),
        // frozen from the first verified run.
        let params = choose_params(0.5, &sym(0.1)).unwrap();
        assert!(
            (params.delta1 - 0.04297849978253004).abs() < 1e-12,
            "delta1 = {}",
            params.delta1
        );
        assert!(
            (params.eta - 0.01035446799934242).abs() < 1e-12,
            "eta = {}",
            params.eta
        );
        assert!((params.theta_s - 0.00264466378726454).abs() < 1e-12);
        assert!((params.theta_u - 0.00029385153191828).abs() < 1e-12);
        let again = choose_params(0.5, &sym(0.1)).unwrap();
        assert_eq!(params, again);
    }

    #[test]
    fn params_reject_oversized_delta1() {
        let ch = sym(0.1);
        assert!(matches!(
            PrestoParams::new(0.5, 0.85, 0.01, &ch),
            Err(PrestoError::Infeasible { .. })
        ));
    }

    #[test]
    fn session_counts_and_draws_independently() {
        let sigma = InfectionVector::from_bits(vec![true, false]);
        let mut session = SimulatedSession::new(sigma, sym(0.4), ChaCha8Rng::seed_from_u64(5));
        let pool = vec![vec![0usize]];
        let mut outcomes = Vec::new();
        for _ in 0..64 {
            outcomes.push(session.submit(&pool).unwrap()[0]);
        }
        assert_eq!(session.tests_used(), 64);
        // With 40% flip probability both outcomes must occur across draws.
        assert!(outcomes.iter().any(|&b| b) && outcomes.iter().any(|&b| !b));
    }

    #[test]
    fn session_all_healthy_with_negligible_noise_shows_nothing() {
        let sigma = InfectionVector::all_healthy(20);
        let ch = NoisyChannel::new(1e-12, 1e-12).unwrap();
        let mut session = SimulatedSession::new(sigma, ch, ChaCha8Rng::seed_from_u64(9));
        let pools: Vec<Vec<usize>> = (0..20).map(|i| vec![i]).collect();
        assert!(session.submit(&pools).unwrap().iter().all(|&b| !b));
    }

    #[test]
    fn session_rejects_bad_pools() {
        let sigma = InfectionVector::all_healthy(4);
        let mut session = SimulatedSession::new(sigma, sym(0.1), ChaCha8Rng::seed_from_u64(1));
        assert!(matches!(
            session.submit(&[vec![]]),
            Err(PrestoError::SessionMismatch { .. })
        ));
        assert!(matches!(
            session.submit(&[vec![4]]),
            Err(PrestoError::SessionMismatch { .. })
        ));
    }

    #[test]
    fn aggregation_is_order_invariant_within_a_member_block() {
        let results = vec![true, false, true, false, false, true];
        let counts = aggregate_positive_counts(2, 3, &results);
        assert_eq!(counts, vec![2, 1]);
        let permuted = vec![false, true, true, true, false, false];
        assert_eq!(aggregate_positive_counts(2, 3, &permuted), counts);
    }

    #[test]
    fn near_noiseless_run_recovers_exactly() {
        let ch = NoisyChannel::new(1e-6, 1e-6).unwrap();
        let params = choose_params(0.5, &ch).unwrap();
        let mut protocol_rng = ChaCha8Rng::seed_from_u64(41);
        let sigma = sample_ground_truth(500, 0.1, &mut protocol_rng);
        let mut session = SimulatedSession::new(sigma.clone(), ch, ChaCha8Rng::seed_from_u64(42));
        let run = run(&mut session, 500, &ch, &params, &mut protocol_rng).unwrap();
        assert_eq!(run.estimate, sigma);
        // With negligible noise U1 is exactly the infected members of S1.
        let infected: Vec<usize> = sigma.infected().collect();
        let expected_u1: Vec<usize> = run
            .stages
            .s1
            .iter()
            .copied()
            .filter(|i| infected.contains(i))
            .collect();
        assert_eq!(run.stages.u1, expected_u1);
        assert_eq!(run.tests_used, session.tests_used());
    }

    #[test]
    fn stage_partitions_are_exact() {
        let ch = sym(0.1);
        let params = choose_params(0.5, &ch).unwrap();
        for seed in 0..5u64 {
            let mut protocol_rng = ChaCha8Rng::seed_from_u64(seed);
            let sigma = sample_ground_truth(300, 0.1, &mut protocol_rng);
            let mut session =
                SimulatedSession::new(sigma, ch, ChaCha8Rng::seed_from_u64(seed + 100));
            let run = run(&mut session, 300, &ch, &params, &mut protocol_rng).unwrap();
            let mut s_union: Vec<usize> = run
                .stages
                .s0
                .iter()
                .chain(&run.stages.s1)
                .copied()
                .collect();
            s_union.sort_unstable();
            assert_eq!(s_union, (0..300).collect::<Vec<_>>());
            let mut u_union: Vec<usize> = run
                .stages
                .u0
                .iter()
                .chain(&run.stages.u1)
                .copied()
                .collect();
            u_union.sort_unstable();
            assert_eq!(u_union, run.stages.s1);
        }
    }

    #[test]
    fn run_is_deterministic_given_seeds() {
        let ch = sym(0.1);
        let params = choose_params(0.5, &ch).unwrap();
        let execute = || {
            let mut protocol_rng = ChaCha8Rng::seed_from_u64(7);
            let sigma = sample_ground_truth(400, 0.1, &mut protocol_rng);
            let mut session = SimulatedSession::new(sigma, ch, ChaCha8Rng::seed_from_u64(8));
            let run = run(&mut session, 400, &ch, &params, &mut protocol_rng).unwrap();
            (run.estimate, run.tests_used, run.stages)
        };
        assert_eq!(execute(), execute());
    }

    #[test]
    fn run_rejects_population_mismatch() {
        let ch = sym(0.1);
        let params = choose_params(0.5, &ch).unwrap();
        let mut session = SimulatedSession::new(
            InfectionVector::all_healthy(10),
            ch,
            ChaCha8Rng::seed_from_u64(0),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            run(&mut session, 11, &ch, &params, &mut rng),
            Err(PrestoError::SessionMismatch { .. })
        ));
    }
}
