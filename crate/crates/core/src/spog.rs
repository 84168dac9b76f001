//! The non-adaptive design generator and decoder.
//!
//! The design splits its tests into a first block `F1` of `ceil(eta*ln n)`
//! individual tests per individual, a block of uniformly random size-`Gamma`
//! group tests, and a per-individual top-up of extra individual tests so that
//! everyone sits in at least `ceil((1+eps/6)*xi*ln n + 1)` second-block tests.
//!
//! Decoding runs in two conceptual stages over the fixed design. The `F1`
//! positives are thresholded at `C` to form a *pseudo-genie* classification.
//! For each individual the decoder then greedily selects a *distinctive* set
//! of second-block tests that pairwise share only that individual, keeps the
//! *pseudo-good* ones (every other member classified healthy by the
//! pseudo-genie), and thresholds their positive fraction at `C`.

use crate::channel::NoisyChannel;
use crate::population::{InfectionVector, ObservedResults, PoolRole, PopulationError, TestDesign};
use crate::thresholds;
use rand::Rng;
use thiserror::Error;

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpogError {
    #[error("invalid parameters: {reason}")]
    InvalidParams { reason: String },
    #[error(
        "population n = {n} too small for the sublinear parameterization: \
         gamma = {gamma} exceeds ceil(1/alpha_hat) = {bound}"
    )]
    TooSmallPopulation {
        n: usize,
        gamma: usize,
        bound: usize,
    },
    #[error(transparent)]
    Population(#[from] PopulationError),
}

/// Design parameters: prevalence bound `alpha_hat`, pool size `gamma`,
/// first-block rate `eta`, and slack `eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpogParams {
    pub alpha_hat: f64,
    pub gamma: usize,
    pub eta: f64,
    pub eps: f64,
}

impl SpogParams {
    pub fn new(alpha_hat: f64, gamma: usize, eta: f64, eps: f64) -> Result<Self, SpogError> {
        if !(alpha_hat > 0.0 && alpha_hat < 1.0) {
            return Err(SpogError::InvalidParams {
                reason: format!("alpha_hat = {alpha_hat} must be in (0, 1)"),
            });
        }
        if gamma == 0 {
            return Err(SpogError::InvalidParams {
                reason: "gamma must be a positive integer".into(),
            });
        }
        let bound = (1.0 / alpha_hat).ceil() as usize;
        if gamma > bound {
            return Err(SpogError::InvalidParams {
                reason: format!("gamma = {gamma} exceeds ceil(1/alpha_hat) = {bound}"),
            });
        }
        if !positive(eta) {
            return Err(SpogError::InvalidParams {
                reason: format!("eta = {eta} must be positive"),
            });
        }
        if !positive(eps) {
            return Err(SpogError::InvalidParams {
                reason: format!("eps = {eps} must be positive"),
            });
        }
        Ok(Self {
            alpha_hat,
            gamma,
            eta,
            eps,
        })
    }

    /// Default parameterization for constant prevalence: the optimal pool
    /// size for `alpha_hat` and `eta = (eps/3) * xi / gamma`.
    pub fn for_constant_prevalence(
        alpha_hat: f64,
        ch: &NoisyChannel,
        eps: f64,
    ) -> Result<Self, SpogError> {
        if !(alpha_hat > 0.0 && alpha_hat < 1.0) {
            return Err(SpogError::InvalidParams {
                reason: format!("alpha_hat = {alpha_hat} must be in (0, 1)"),
            });
        }
        if !positive(eps) {
            return Err(SpogError::InvalidParams {
                reason: format!("eps = {eps} must be positive"),
            });
        }
        let gamma = thresholds::gamma_star(alpha_hat, ch);
        let eta = eps / 3.0 * thresholds::xi(alpha_hat, ch, gamma) / gamma as f64;
        Self::new(alpha_hat, gamma, eta, eps)
    }

    /// Parameterization for prevalences bounded by `n^-theta_hat`:
    /// `alpha_hat = n^-theta_hat`, `gamma = ceil(ln n)`, `eta = eps/2`.
    /// Fails when `ceil(ln n)` exceeds `ceil(1/alpha_hat)`, which only
    /// happens for small `n`.
    pub fn sublinear(n: usize, theta_hat: f64, eps: f64) -> Result<Self, SpogError> {
        if n < 3 {
            return Err(SpogError::InvalidParams {
                reason: format!("n = {n} too small for the sublinear parameterization"),
            });
        }
        if !(theta_hat > 0.0 && theta_hat < 1.0) {
            return Err(SpogError::InvalidParams {
                reason: format!("theta_hat = {theta_hat} must be in (0, 1)"),
            });
        }
        if !positive(eps) {
            return Err(SpogError::InvalidParams {
                reason: format!("eps = {eps} must be positive"),
            });
        }
        let alpha_hat = (n as f64).powf(-theta_hat);
        let gamma = (n as f64).ln().ceil() as usize;
        let bound = (1.0 / alpha_hat).ceil() as usize;
        if gamma > bound {
            return Err(SpogError::TooSmallPopulation { n, gamma, bound });
        }
        Self::new(alpha_hat, gamma, eps / 2.0, eps)
    }
}

/// A built design plus the bookkeeping the decoder needs.
#[derive(Debug, Clone)]
pub struct SpogDesign {
    design: TestDesign,
    params: SpogParams,
    xi: f64,
    f1_per_individual: usize,
    f2_start: usize,
}

impl SpogDesign {
    pub fn design(&self) -> &TestDesign {
        &self.design
    }

    pub fn params(&self) -> &SpogParams {
        &self.params
    }

    /// `xi(alpha_hat, p, gamma)` as used in the test counts.
    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn total_tests(&self) -> usize {
        self.design.num_tests()
    }

    /// First-block individual tests per individual.
    pub fn f1_per_individual(&self) -> usize {
        self.f1_per_individual
    }

    /// Index of the first second-block test.
    pub fn f2_start(&self) -> usize {
        self.f2_start
    }

    fn f1_tests(&self, i: usize) -> std::ops::Range<usize> {
        i * self.f1_per_individual..(i + 1) * self.f1_per_individual
    }

    /// Second-block tests containing `i`, in design order.
    fn f2_tests_of(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let start = self.f2_start;
        self.design
            .tests_of(i)
            .iter()
            .copied()
            .filter(move |&a| a >= start)
    }

    fn check_observed(&self, observed: &ObservedResults) -> Result<(), SpogError> {
        if observed.len() != self.design.num_tests() {
            return Err(SpogError::Population(
                PopulationError::ResultsLengthMismatch {
                    expected: self.design.num_tests(),
                    got: observed.len(),
                },
            ));
        }
        Ok(())
    }

    /// First-stage classification: infected iff at least a `C` fraction of
    /// the individual's `F1` tests display positively (non-strict at the
    /// boundary).
    pub fn pseudo_genie(
        &self,
        observed: &ObservedResults,
        ch: &NoisyChannel,
    ) -> Result<Vec<bool>, SpogError> {
        self.check_observed(observed)?;
        let c = ch.constants().c_threshold;
        let k = self.f1_per_individual as f64;
        Ok((0..self.design.n())
            .map(|i| {
                let positives = self.f1_tests(i).filter(|&a| observed.get(a)).count();
                positives as f64 >= c * k
            })
            .collect())
    }

    /// For each individual, the greedily selected second-block tests whose
    /// member sets pairwise intersect only in that individual.
    pub fn distinctive_sets(&self) -> Vec<Vec<usize>> {
        let n = self.design.n();
        let mut stamp = vec![usize::MAX; n];
        (0..n)
            .map(|i| {
                let mut kept = Vec::new();
                self.scan_distinctive(i, &mut stamp, i, |test| kept.push(test));
                kept
            })
            .collect()
    }

    /// Walks `i`'s second-block tests in design order, keeping a test iff its
    /// other members are disjoint from all previously kept tests' members.
    /// `epoch` must be unique per call for the shared stamp buffer.
    fn scan_distinctive(
        &self,
        i: usize,
        stamp: &mut [usize],
        epoch: usize,
        mut keep: impl FnMut(usize),
    ) {
        for test in self.f2_tests_of(i) {
            let members = self.design.pool(test).members();
            let disjoint = members.iter().all(|&j| j == i || stamp[j] != epoch);
            if disjoint {
                for &j in members {
                    if j != i {
                        stamp[j] = epoch;
                    }
                }
                keep(test);
            }
        }
    }

    /// Full decode: pseudo-genie, distinctive sets, pseudo-good filter, and
    /// a final threshold at `C` over the pseudo-good positives. An individual
    /// with no pseudo-good tests falls back to its pseudo-genie bit.
    pub fn decode(
        &self,
        observed: &ObservedResults,
        ch: &NoisyChannel,
    ) -> Result<InfectionVector, SpogError> {
        self.check_observed(observed)?;
        let c = ch.constants().c_threshold;
        let genie = self.pseudo_genie(observed, ch)?;
        let n = self.design.n();
        let mut stamp = vec![usize::MAX; n];
        let mut bits = vec![false; n];
        for i in 0..n {
            let mut pseudo_good = 0usize;
            let mut positive = 0usize;
            self.scan_distinctive(i, &mut stamp, i, |test| {
                let members = self.design.pool(test).members();
                if members.iter().all(|&j| j == i || !genie[j]) {
                    pseudo_good += 1;
                    if observed.get(test) {
                        positive += 1;
                    }
                }
            });
            bits[i] = if pseudo_good == 0 {
                genie[i]
            } else {
                positive as f64 >= c * pseudo_good as f64
            };
        }
        Ok(InfectionVector::from_bits(bits))
    }
}

/// Builds the design with the counts exactly as prescribed.
pub fn build_design<R: Rng + ?Sized>(
    n: usize,
    params: &SpogParams,
    ch: &NoisyChannel,
    rng: &mut R,
) -> Result<SpogDesign, SpogError> {
    build_design_with_budget(n, params, ch, 1.0, rng)
}

/// Like [`build_design`] but with every count formula scaled by `budget`,
/// for sensitivity ablations. `budget = 1.0` is the prescribed design.
pub fn build_design_with_budget<R: Rng + ?Sized>(
    n: usize,
    params: &SpogParams,
    ch: &NoisyChannel,
    budget: f64,
    rng: &mut R,
) -> Result<SpogDesign, SpogError> {
    if params.gamma > n {
        return Err(SpogError::InvalidParams {
            reason: format!("gamma = {} exceeds population n = {n}", params.gamma),
        });
    }
    if n < 2 {
        return Err(SpogError::InvalidParams {
            reason: "population must have at least 2 individuals".into(),
        });
    }
    if !positive(budget) {
        return Err(SpogError::InvalidParams {
            reason: format!("budget = {budget} must be positive"),
        });
    }
    // Re-validate in case params was constructed literally.
    let params = SpogParams::new(params.alpha_hat, params.gamma, params.eta, params.eps)?;

    let log_n = (n as f64).ln();
    let xi = thresholds::xi(params.alpha_hat, ch, params.gamma);
    let f1_per_individual = (budget * params.eta * log_n).ceil() as usize;
    let group_count = (budget * (1.0 + params.eps / 3.0) * xi * n as f64 * log_n
        / params.gamma as f64)
        .ceil() as usize;
    let f2_floor = (budget * (1.0 + params.eps / 6.0) * xi * log_n + 1.0).ceil() as usize;

    let mut design = TestDesign::new(n);
    for i in 0..n {
        for _ in 0..f1_per_individual {
            design.add_pool(PoolRole::F1Individual, &[i])?;
        }
    }
    let f2_start = design.num_tests();
    let mut group_memberships = vec![0usize; n];
    for _ in 0..group_count {
        let members = rand::seq::index::sample(rng, n, params.gamma).into_vec();
        for &i in &members {
            group_memberships[i] += 1;
        }
        design.add_pool(PoolRole::F2Group, &members)?;
    }
    for (i, &in_groups) in group_memberships.iter().enumerate() {
        for _ in in_groups..f2_floor {
            design.add_pool(PoolRole::F2ExtraIndividual, &[i])?;
        }
    }
    Ok(SpogDesign {
        design,
        params,
        xi,
        f1_per_individual,
        f2_start,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{sample_ground_truth, true_results};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sym(p: f64) -> NoisyChannel {
        NoisyChannel::symmetric(p).unwrap()
    }

    #[test]
    fn params_reject_oversized_gamma() {
        assert!(matches!(
            SpogParams::new(0.1, 11, 0.1, 0.5),
            Err(SpogError::InvalidParams { .. })
        ));
        assert!(SpogParams::new(0.1, 10, 0.1, 0.5).is_ok());
        assert!(SpogParams::new(0.1, 1, 0.1, 0.5).is_ok());
    }

    #[test]
    fn params_reject_zero_eta() {
        assert!(SpogParams::new(0.1, 2, 0.0, 0.5).is_err());
    }

    #[test]
    fn sublinear_params_frozen_example() {
        let p = SpogParams::sublinear(10_000, 0.5, 0.5).unwrap();
        assert_eq!(p.alpha_hat, 0.01);
        assert_eq!(p.gamma, 10);
        assert_eq!(p.eta, 0.25);
        assert_eq!(p.eps, 0.5);
        assert!(p.gamma <= (1.0 / p.alpha_hat).ceil() as usize);
    }

    #[test]
    fn sublinear_params_rejects_tiny_population() {
        // theta_hat near zero makes alpha_hat near one, so the gamma bound fails.
        assert!(matches!(
            SpogParams::sublinear(1000, 0.01, 0.5),
            Err(SpogError::TooSmallPopulation { .. })
        ));
    }

    #[test]
    fn build_respects_counts_and_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let ch = sym(0.1);
        let params = SpogParams::for_constant_prevalence(0.1, &ch, 0.5).unwrap();
        let n = 400;
        let built = build_design(n, &params, &ch, &mut rng).unwrap();
        let log_n = (n as f64).ln();
        let f1_expected = (params.eta * log_n).ceil() as usize;
        assert_eq!(built.f1_per_individual(), f1_expected);
        let floor = ((1.0 + params.eps / 6.0) * built.xi() * log_n + 1.0).ceil() as usize;
        for i in 0..n {
            let f1 = built
                .design()
                .tests_of(i)
                .iter()
                .filter(|&&a| a < built.f2_start())
                .count();
            assert_eq!(f1, f1_expected);
            let f2 = built.design().tests_of(i).len() - f1;
            assert!(
                f2 >= floor,
                "individual {i} has only {f2} < {floor} F2 tests"
            );
        }
        for pool in built.design().pools() {
            match pool.role() {
                PoolRole::F2Group => assert_eq!(pool.len(), params.gamma),
                PoolRole::F1Individual | PoolRole::F2ExtraIndividual => assert_eq!(pool.len(), 1),
                other => panic!("unexpected role {other:?}"),
            }
        }
        // Adjacency stays the exact transpose of the pools relation.
        for i in 0..n {
            for &a in built.design().tests_of(i) {
                assert!(built.design().pool(a).contains(i));
            }
        }
        let membership_total: usize = (0..n).map(|i| built.design().tests_of(i).len()).sum();
        let pool_total: usize = built.design().pools().iter().map(|p| p.len()).sum();
        assert_eq!(membership_total, pool_total);
    }

    #[test]
    fn gamma_one_groups_are_individual_tests() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = sym(0.1);
        let params = SpogParams::new(0.45, 1, 0.3, 0.5).unwrap();
        let built = build_design(50, &params, &ch, &mut rng).unwrap();
        for pool in built.design().pools() {
            assert_eq!(pool.len(), 1);
        }
        // Singleton pools never overlap in a non-self member, so every
        // second-block test is distinctive.
        let sets = built.distinctive_sets();
        for (i, set) in sets.iter().enumerate() {
            assert_eq!(set.len(), built.f2_tests_of(i).count());
        }
    }

    #[test]
    fn pseudo_genie_boundary_is_infected() {
        // Symmetric channel has C = 0.5; exactly half the F1 tests positive
        // must classify as infected because the comparison is non-strict.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = sym(0.2);
        let params = SpogParams::new(0.5, 1, 0.5, 0.5).unwrap();
        let n = 10;
        let built = build_design(n, &params, &ch, &mut rng).unwrap();
        let k = built.f1_per_individual();
        assert!(k >= 2 && k % 2 == 0, "test needs an even F1 count, got {k}");
        let mut bits = vec![false; built.total_tests()];
        for a in built.f1_tests(0).take(k / 2) {
            bits[a] = true;
        }
        for a in built.f1_tests(1) {
            bits[a] = true;
        }
        let genie = built
            .pseudo_genie(&ObservedResults::from_bits(bits), &ch)
            .unwrap();
        assert!(genie[0], "boundary case must classify infected");
        assert!(genie[1]);
        assert!(!genie[2]);
    }

    #[test]
    fn duplicate_pools_keep_only_first() {
        let ch = sym(0.1);
        let params = SpogParams::new(0.3, 3, 0.5, 0.5).unwrap();
        let mut design = TestDesign::new(6);
        // Hand-build a design shaped like the generator's output.
        let f1 = ((params.eta * 6.0f64.ln()).ceil()) as usize;
        for i in 0..6 {
            for _ in 0..f1 {
                design.add_pool(PoolRole::F1Individual, &[i]).unwrap();
            }
        }
        let f2_start = design.num_tests();
        design.add_pool(PoolRole::F2Group, &[0, 1, 2]).unwrap();
        design.add_pool(PoolRole::F2Group, &[0, 1, 2]).unwrap();
        design.add_pool(PoolRole::F2Group, &[0, 4, 5]).unwrap();
        let built = SpogDesign {
            design,
            params,
            xi: thresholds::xi(0.3, &ch, 3),
            f1_per_individual: f1,
            f2_start,
        };
        let sets = built.distinctive_sets();
        assert_eq!(sets[0], vec![f2_start, f2_start + 2]);
        assert_eq!(sets[1], vec![f2_start]);
        // Distinctive sets pairwise intersect only in their owner.
        for (i, set) in sets.iter().enumerate() {
            for (idx, &a) in set.iter().enumerate() {
                for &b in &set[idx + 1..] {
                    let shared: Vec<usize> = built
                        .design()
                        .pool(a)
                        .members()
                        .iter()
                        .copied()
                        .filter(|&j| built.design().pool(b).contains(j))
                        .collect();
                    assert_eq!(shared, vec![i]);
                }
            }
        }
    }

    #[test]
    fn all_negative_observations_decode_to_all_healthy() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ch = sym(0.05);
        let params = SpogParams::for_constant_prevalence(0.2, &ch, 0.5).unwrap();
        let built = build_design(60, &params, &ch, &mut rng).unwrap();
        let observed = ObservedResults::from_bits(vec![false; built.total_tests()]);
        let decoded = built.decode(&observed, &ch).unwrap();
        assert_eq!(decoded.count_infected(), 0);
    }

    #[test]
    fn near_noiseless_decode_recovers_ground_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let ch = NoisyChannel::new(1e-6, 1e-6).unwrap();
        let params = SpogParams::for_constant_prevalence(0.1, &ch, 0.5).unwrap();
        let n = 500;
        let sigma = sample_ground_truth(n, 0.1, &mut rng);
        let built = build_design(n, &params, &ch, &mut rng).unwrap();
        let ideal = true_results(built.design(), &sigma).unwrap();
        let observed = ObservedResults::from_bits(ch.apply_noise(&ideal, &mut rng));
        let decoded = built.decode(&observed, &ch).unwrap();
        assert_eq!(decoded, sigma);
    }

    #[test]
    fn decode_is_deterministic() {
        let ch = sym(0.1);
        let params = SpogParams::for_constant_prevalence(0.1, &ch, 0.5).unwrap();
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sigma = sample_ground_truth(300, 0.1, &mut rng);
            let built = build_design(300, &params, &ch, &mut rng).unwrap();
            let ideal = true_results(built.design(), &sigma).unwrap();
            let observed = ObservedResults::from_bits(ch.apply_noise(&ideal, &mut rng));
            built.decode(&observed, &ch).unwrap()
        };
        assert_eq!(run(77), run(77));
    }

    #[test]
    fn pseudo_good_sets_are_subsets_of_distinctive_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ch = sym(0.1);
        let params = SpogParams::for_constant_prevalence(0.15, &ch, 0.5).unwrap();
        let n = 200;
        let sigma = sample_ground_truth(n, 0.15, &mut rng);
        let built = build_design(n, &params, &ch, &mut rng).unwrap();
        let ideal = true_results(built.design(), &sigma).unwrap();
        let observed = ObservedResults::from_bits(ch.apply_noise(&ideal, &mut rng));
        let genie = built.pseudo_genie(&observed, &ch).unwrap();
        let sets = built.distinctive_sets();
        for (i, set) in sets.iter().enumerate() {
            let f2: Vec<usize> = built.f2_tests_of(i).collect();
            for &a in set {
                assert!(f2.contains(&a));
            }
            let pseudo_good: Vec<usize> = set
                .iter()
                .copied()
                .filter(|&a| {
                    built
                        .design()
                        .pool(a)
                        .members()
                        .iter()
                        .all(|&j| j == i || !genie[j])
                })
                .collect();
            assert!(pseudo_good.len() <= set.len());
        }
    }
}
