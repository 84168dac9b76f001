//! Ground truth, pooling designs, and good-test accounting.
//!
//! A design is a bipartite structure between `n` individuals and an ordered
//! list of pools. Pool order is part of the reproducibility contract: the
//! decoders iterate an individual's pools in construction order, so two
//! designs with the same pools in a different order are different designs.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PopulationError {
    #[error("infection vector has {got} bits but the design covers {expected} individuals")]
    LengthMismatch { expected: usize, got: usize },
    #[error("observed results have {got} bits but the design has {expected} tests")]
    ResultsLengthMismatch { expected: usize, got: usize },
    #[error("individual index {index} out of range for population of {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("invalid pool: {reason}")]
    InvalidPool { reason: String },
}

/// Why a pool exists within its design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolRole {
    F1Individual,
    F2Group,
    F2ExtraIndividual,
    PrestoStage1,
    PrestoStage2,
    SpogSub,
}

impl PoolRole {
    pub fn tag(&self) -> &'static str {
        match self {
            PoolRole::F1Individual => "F1-individual",
            PoolRole::F2Group => "F2-group",
            PoolRole::F2ExtraIndividual => "F2-extra-individual",
            PoolRole::PrestoStage1 => "presto-stage1",
            PoolRole::PrestoStage2 => "presto-stage2",
            PoolRole::SpogSub => "spog-sub",
        }
    }
}

/// One test: a nonempty set of individuals plus its role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pool {
    role: PoolRole,
    members: Vec<usize>,
}

impl Pool {
    pub fn role(&self) -> PoolRole {
        self.role
    }

    /// Members in ascending index order, without duplicates.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }
}

/// The ground truth: bit `i` is 1 when individual `i` is infected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfectionVector(Vec<bool>);

impl InfectionVector {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn all_healthy(n: usize) -> Self {
        Self(vec![false; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn count_infected(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Indices of infected individuals, ascending.
    pub fn infected(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }
}

/// Displayed test outcomes, aligned with the design's test order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservedResults(Vec<bool>);

impl ObservedResults {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, test: usize) -> bool {
        self.0[test]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }
}

/// A bipartite test design over a population of `n` individuals.
#[derive(Debug, Clone)]
pub struct TestDesign {
    n: usize,
    pools: Vec<Pool>,
    adjacency: Vec<Vec<usize>>,
}

impl TestDesign {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "population must be nonempty");
        Self {
            n,
            pools: Vec::new(),
            adjacency: vec![Vec::new(); n],
        }
    }

    /// Appends a pool and returns its test index. Members are stored sorted;
    /// duplicates and out-of-range indices are rejected.
    pub fn add_pool(
        &mut self,
        role: PoolRole,
        members: &[usize],
    ) -> Result<usize, PopulationError> {
        if members.is_empty() {
            return Err(PopulationError::InvalidPool {
                reason: "pool has no members".into(),
            });
        }
        let mut sorted = members.to_vec();
        sorted.sort_unstable();
        if let Some(&bad) = sorted.iter().find(|&&i| i >= self.n) {
            return Err(PopulationError::InvalidPool {
                reason: format!("member {bad} out of range for population of {}", self.n),
            });
        }
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(PopulationError::InvalidPool {
                reason: "duplicate member".into(),
            });
        }
        let index = self.pools.len();
        for &i in &sorted {
            self.adjacency[i].push(index);
        }
        self.pools.push(Pool {
            role,
            members: sorted,
        });
        Ok(index)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_tests(&self) -> usize {
        self.pools.len()
    }

    pub fn pool(&self, test: usize) -> &Pool {
        &self.pools[test]
    }

    pub fn pools(&self) -> &[Pool] {
        &self.pools
    }

    /// Tests containing individual `i`, in construction order.
    pub fn tests_of(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// Line-oriented debug dump: one pool per line, role tag followed by
    /// space-separated member indices.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for pool in &self.pools {
            out.push_str(pool.role.tag());
            for &i in &pool.members {
                out.push(' ');
                out.push_str(&i.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Good-test counts for one individual: `total = positive + negative`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GoodTestCounts {
    pub total: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Samples each individual's status independently as Bernoulli(`alpha`).
pub fn sample_ground_truth<R: Rng + ?Sized>(n: usize, alpha: f64, rng: &mut R) -> InfectionVector {
    assert!(n >= 1, "population must be nonempty");
    assert!(
        alpha > 0.0 && alpha < 1.0,
        "alpha must be in (0, 1), got {alpha}"
    );
    InfectionVector((0..n).map(|_| rng.gen::<f64>() < alpha).collect())
}

/// Ideal (pre-noise) results: a pool is positive iff it contains an infected
/// individual.
pub fn true_results(
    design: &TestDesign,
    sigma: &InfectionVector,
) -> Result<Vec<bool>, PopulationError> {
    if sigma.len() != design.n() {
        return Err(PopulationError::LengthMismatch {
            expected: design.n(),
            got: sigma.len(),
        });
    }
    Ok(design
        .pools
        .iter()
        .map(|pool| pool.members.iter().any(|&i| sigma.get(i)))
        .collect())
}

/// Counts the tests of `i` that contain no other infected individual, split
/// by displayed outcome. Only these tests carry information about `i`; the
/// count ignores `i`'s own status.
pub fn good_test_counts(
    design: &TestDesign,
    sigma: &InfectionVector,
    observed: &ObservedResults,
    i: usize,
) -> Result<GoodTestCounts, PopulationError> {
    if i >= design.n() {
        return Err(PopulationError::IndexOutOfRange {
            index: i,
            n: design.n(),
        });
    }
    if sigma.len() != design.n() {
        return Err(PopulationError::LengthMismatch {
            expected: design.n(),
            got: sigma.len(),
        });
    }
    if observed.len() != design.num_tests() {
        return Err(PopulationError::ResultsLengthMismatch {
            expected: design.num_tests(),
            got: observed.len(),
        });
    }
    let mut total = 0usize;
    let mut positive = 0usize;
    for &test in design.tests_of(i) {
        let good = design
            .pool(test)
            .members()
            .iter()
            .all(|&j| j == i || !sigma.get(j));
        if good {
            total += 1;
            if observed.get(test) {
                positive += 1;
            }
        }
    }
    Ok(GoodTestCounts {
        total,
        positive,
        negative: total - positive,
    })
}
