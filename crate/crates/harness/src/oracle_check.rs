//! Exhaustive small-instance verification of the exact estimators.
//!
//! Enumerates every design with up to `max_n` individuals and up to
//! `max_tests` pools (pools range over all nonempty subsets, listed as
//! non-decreasing multisets so each design shape appears once), then checks
//! on each, for every parameter pair:
//!
//! - the genie's closed-form thresholding rule agrees with the direct
//!   posterior comparison on *every* (sigma, observed, coordinate) input;
//! - the genie's exact success probability is at least the MAP estimator's;
//! - MAP's success probability is at least the all-healthy baseline's;
//! - joint probability mass over all (sigma, observed) pairs sums to one.

use crate::HarnessError;
use pooltest_core::oracles::{
    all_healthy_success_probability, exact_success_probability, genie_estimate_direct,
    genie_estimate_threshold, total_joint_mass, EstimatorKind,
};
use pooltest_core::population::{InfectionVector, ObservedResults, PoolRole, TestDesign};
use pooltest_core::NoisyChannel;

#[derive(Debug, Clone)]
pub struct OracleCheckReport {
    pub designs_checked: usize,
    pub equivalence_checks: usize,
    pub ordering_checks: usize,
    pub violations: Vec<String>,
}

impl OracleCheckReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Five (alpha, channel) pairs mixing symmetric and asymmetric noise with
/// balanced and skewed priors.
pub fn default_parameter_pairs() -> Vec<(f64, NoisyChannel)> {
    vec![
        (0.3, NoisyChannel::new(0.1, 0.2).unwrap()),
        (0.5, NoisyChannel::new(0.1, 0.1).unwrap()),
        (0.1, NoisyChannel::new(0.01, 0.1).unwrap()),
        (0.25, NoisyChannel::new(0.3, 0.05).unwrap()),
        (0.45, NoisyChannel::new(0.2, 0.2).unwrap()),
    ]
}

/// Runs the full enumeration. Tolerance on the ordering and normalization
/// checks is 1e-12; the equivalence check is exact.
pub fn run_exhaustive(
    max_n: usize,
    max_tests: usize,
    pairs: &[(f64, NoisyChannel)],
) -> Result<OracleCheckReport, HarnessError> {
    if max_n == 0 || max_n > 3 || max_tests > 3 {
        return Err(HarnessError::Usage(
            "exhaustive check supports 1 <= max-n <= 3 and max-tests <= 3".into(),
        ));
    }
    let mut report = OracleCheckReport {
        designs_checked: 0,
        equivalence_checks: 0,
        ordering_checks: 0,
        violations: Vec::new(),
    };
    for n in 1..=max_n {
        let subsets: Vec<usize> = (1..1usize << n).collect();
        for pools in multisets(&subsets, max_tests) {
            let design = design_from_masks(n, &pools);
            report.designs_checked += 1;
            for &(alpha, ch) in pairs {
                check_design(&design, alpha, &ch, &mut report)?;
            }
        }
    }
    Ok(report)
}

fn check_design(
    design: &TestDesign,
    alpha: f64,
    ch: &NoisyChannel,
    report: &mut OracleCheckReport,
) -> Result<(), HarnessError> {
    let n = design.n();
    let m = design.num_tests();
    let label = || {
        format!(
            "design [{}] alpha={alpha} p01={} p10={}",
            design
                .pools()
                .iter()
                .map(|p| format!("{:?}", p.members()))
                .collect::<Vec<_>>()
                .join(" "),
            ch.p01(),
            ch.p10()
        )
    };

    for sigma_mask in 0usize..1 << n {
        let sigma = InfectionVector::from_bits((0..n).map(|i| sigma_mask >> i & 1 == 1).collect());
        for observed_mask in 0usize..1 << m {
            let observed =
                ObservedResults::from_bits((0..m).map(|t| observed_mask >> t & 1 == 1).collect());
            for i in 0..n {
                let direct = genie_estimate_direct(design, &observed, &sigma, alpha, ch, i)
                    .map_err(|e| HarnessError::Domain(e.to_string()))?;
                let threshold = genie_estimate_threshold(design, &observed, &sigma, alpha, ch, i)
                    .map_err(|e| HarnessError::Domain(e.to_string()))?;
                report.equivalence_checks += 1;
                if direct != threshold {
                    report.violations.push(format!(
                        "genie forms disagree at {} sigma={sigma_mask:b} observed={observed_mask:b} i={i}: direct={direct} threshold={threshold}",
                        label()
                    ));
                }
            }
        }
    }

    let p_map = exact_success_probability(design, alpha, ch, EstimatorKind::Map)
        .map_err(|e| HarnessError::Domain(e.to_string()))?;
    let p_genie = exact_success_probability(design, alpha, ch, EstimatorKind::Genie)
        .map_err(|e| HarnessError::Domain(e.to_string()))?;
    report.ordering_checks += 1;
    if p_genie < p_map - 1e-12 {
        report
            .violations
            .push(format!("genie {p_genie} < map {p_map} at {}", label()));
    }
    if p_map < all_healthy_success_probability(n, alpha) - 1e-12 {
        report.violations.push(format!(
            "map {p_map} below all-healthy baseline at {}",
            label()
        ));
    }
    let mass =
        total_joint_mass(design, alpha, ch).map_err(|e| HarnessError::Domain(e.to_string()))?;
    if (mass - 1.0).abs() > 1e-12 {
        report
            .violations
            .push(format!("joint mass {mass} != 1 at {}", label()));
    }
    Ok(())
}

fn design_from_masks(n: usize, pool_masks: &[usize]) -> TestDesign {
    let mut design = TestDesign::new(n);
    for &mask in pool_masks {
        let members: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        design
            .add_pool(PoolRole::F2Group, &members)
            .expect("enumerated pools are valid");
    }
    design
}

/// All non-decreasing sequences over `items` with length 0..=max_len.
fn multisets(items: &[usize], max_len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for prefix in &frontier {
            let start = prefix
                .last()
                .map_or(0, |&last| items.iter().position(|&v| v == last).unwrap());
            for &item in &items[start..] {
                let mut extended = prefix.clone();
                extended.push(item);
                next.push(extended);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiset_counts() {
        // C(k+len-1, len) summed over len = 0..=3.
        assert_eq!(multisets(&[1], 3).len(), 4);
        assert_eq!(multisets(&[1, 2, 3], 3).len(), 1 + 3 + 6 + 10);
        assert_eq!(
            multisets(&(1..8).collect::<Vec<_>>(), 3).len(),
            1 + 7 + 28 + 84
        );
    }

    #[test]
    fn full_family_has_no_violations() {
        let report = run_exhaustive(3, 3, &default_parameter_pairs()).unwrap();
        assert_eq!(report.designs_checked, 4 + 20 + 120);
        assert!(
            report.passed(),
            "violations: {:?}",
            &report.violations[..report.violations.len().min(5)]
        );
    }
}
