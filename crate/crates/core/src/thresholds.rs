//! Sharp test-count thresholds.
//!
//! Non-adaptively, `m_na = min over Gamma of xi(alpha, p, Gamma) / Gamma * n ln(n)`
//! tests separate impossible from achievable exact recovery, where
//! `xi(alpha, p, Gamma) = 1 / (-ln(1 - (1-alpha)^(Gamma-1) * (1 - e^-beta)))`
//! and the minimizing pool size `Gamma*` never exceeds `ceil(1/alpha)`.
//! Adaptively the threshold is `m_ad = alpha / KL(p11||p01) * n ln(n)`.
//! The per-individual constants `c_na = xi/Gamma*` and `c_ad` are what the
//! sweep plots against `alpha`.

use crate::channel::{kl, NoisyChannel};

/// Threshold quantities for one `(alpha, channel)` pair, with the test counts
/// `m_na` and `m_ad` evaluated at a concrete population size.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    pub alpha: f64,
    pub p01: f64,
    pub p10: f64,
    pub gamma_star: usize,
    pub xi_at_gamma_star: f64,
    pub c_na: f64,
    pub c_ad: f64,
    pub m_na: f64,
    pub m_ad: f64,
}

/// `xi(alpha, p, Gamma)`: an individual participating in `xi * ln(n)` pools
/// of size `Gamma` is misclassified by a genie with probability `O(1/n)`.
///
/// For `Gamma = 1` this is exactly `1/beta`.
pub fn xi(alpha: f64, ch: &NoisyChannel, gamma: usize) -> f64 {
    let beta = ch.constants().beta;
    xi_with_beta(alpha, beta, gamma)
}

fn xi_with_beta(alpha: f64, beta: f64, gamma: usize) -> f64 {
    assert!(
        alpha > 0.0 && alpha < 1.0,
        "alpha must be in (0, 1), got {alpha}"
    );
    assert!(gamma >= 1, "gamma must be a positive integer");
    if gamma == 1 {
        return beta.recip();
    }
    per_test_information(alpha, beta, gamma).recip()
}

/// `-ln(1 - (1-alpha)^(Gamma-1) * (1 - e^-beta))`, the reciprocal of `xi`.
fn per_test_information(alpha: f64, beta: f64, gamma: usize) -> f64 {
    if gamma == 1 {
        return beta;
    }
    assert!(gamma - 1 <= i32::MAX as usize, "gamma too large");
    let single_infected = (1.0 - alpha).powi((gamma - 1) as i32);
    -(1.0 - single_infected * (1.0 - (-beta).exp())).ln()
}

/// The pool size maximizing `Gamma * (-ln(1 - (1-alpha)^(Gamma-1) * (1-e^-beta)))`
/// over `Gamma in {1, ..., ceil(1/alpha)}`; ties break toward the smaller
/// pool. The optimum provably lies inside that range.
///
/// Runs in `O(1/alpha)` evaluations, so it is intended for constant
/// prevalence rather than vanishing `alpha`.
pub fn gamma_star(alpha: f64, ch: &NoisyChannel) -> usize {
    assert!(
        alpha > 0.0 && alpha < 1.0,
        "alpha must be in (0, 1), got {alpha}"
    );
    let beta = ch.constants().beta;
    let bound = (1.0 / alpha).ceil() as usize;
    let mut best = 1usize;
    let mut best_value = per_test_information(alpha, beta, 1);
    for gamma in 2..=bound {
        let value = gamma as f64 * per_test_information(alpha, beta, gamma);
        if value > best_value {
            best = gamma;
            best_value = value;
        }
    }
    best
}

/// The non-adaptive threshold `c_na * n * ln(n)` in tests.
pub fn m_na(n: usize, alpha: f64, ch: &NoisyChannel) -> f64 {
    assert!(n >= 2, "n must be at least 2, got {n}");
    c_na(alpha, ch) * n as f64 * (n as f64).ln()
}

/// The adaptive threshold `c_ad * n * ln(n)` in tests.
pub fn m_ad(n: usize, alpha: f64, ch: &NoisyChannel) -> f64 {
    assert!(n >= 2, "n must be at least 2, got {n}");
    c_ad(alpha, ch) * n as f64 * (n as f64).ln()
}

/// `xi(alpha, p, Gamma*) / Gamma*`.
pub fn c_na(alpha: f64, ch: &NoisyChannel) -> f64 {
    let beta = ch.constants().beta;
    let gamma = gamma_star(alpha, ch);
    xi_with_beta(alpha, beta, gamma) / gamma as f64
}

/// `alpha / KL(p11||p01)`.
pub fn c_ad(alpha: f64, ch: &NoisyChannel) -> f64 {
    assert!(
        alpha > 0.0 && alpha < 1.0,
        "alpha must be in (0, 1), got {alpha}"
    );
    alpha / kl(ch.p11(), ch.p01())
}

/// All threshold quantities for one pair, with `m_na`/`m_ad` at size `n`.
pub fn report(n: usize, alpha: f64, ch: &NoisyChannel) -> ThresholdReport {
    let beta = ch.constants().beta;
    let gamma = gamma_star(alpha, ch);
    let xi_star = xi_with_beta(alpha, beta, gamma);
    let c_na = xi_star / gamma as f64;
    let c_ad = c_ad(alpha, ch);
    let scale = n as f64 * (n as f64).ln();
    ThresholdReport {
        alpha,
        p01: ch.p01(),
        p10: ch.p10(),
        gamma_star: gamma,
        xi_at_gamma_star: xi_star,
        c_na,
        c_ad,
        m_na: c_na * scale,
        m_ad: c_ad * scale,
    }
}

/// One report per `(alpha, channel)` pair, ordered row-major (all channels
/// for the first alpha, then the next alpha, and so on).
pub fn sweep(n: usize, alphas: &[f64], channels: &[NoisyChannel]) -> Vec<ThresholdReport> {
    assert!(!alphas.is_empty(), "alpha list must be nonempty");
    assert!(!channels.is_empty(), "channel list must be nonempty");
    let mut reports = Vec::with_capacity(alphas.len() * channels.len());
    for &alpha in alphas {
        for ch in channels {
            reports.push(report(n, alpha, ch));
        }
    }
    reports
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute force over an extended range; the production bound should never
    /// be beaten by the three extra candidates.
    fn gamma_star_brute(alpha: f64, ch: &NoisyChannel, extra: usize) -> usize {
        let beta = ch.constants().beta;
        let bound = (1.0 / alpha).ceil() as usize + extra;
        (1..=bound)
            .map(|g| (g, g as f64 * per_test_information(alpha, beta, g)))
            .fold((1usize, f64::MIN), |best, cand| {
                if cand.1 > best.1 {
                    cand
                } else {
                    best
                }
            })
            .0
    }

    fn random_valid_channel<R: Rng>(rng: &mut R) -> NoisyChannel {
        loop {
            let p01 = rng.gen_range(0.001..0.95);
            let p10 = rng.gen_range(0.001..0.95);
            if p01 + p10 < 0.999 {
                return NoisyChannel::new(p01, p10).unwrap();
            }
        }
    }

    #[test]
    fn xi_at_gamma_one_is_inverse_beta() {
        let ch = NoisyChannel::new(0.07, 0.2).unwrap();
        assert_eq!(xi(0.3, &ch, 1), 1.0 / ch.beta());
    }

    #[test]
    fn xi_frozen_value() {
        let ch = NoisyChannel::symmetric(0.1).unwrap();
        // 1 / (-ln(1 - 0.9 * (1 - e^-beta))) at beta = KL(0.5||0.1).
        assert_abs_diff_eq!(xi(0.1, &ch, 2), 2.240710058862275, epsilon = 1e-12);
    }

    #[test]
    fn xi_increasing_in_alpha() {
        let ch = NoisyChannel::symmetric(0.05).unwrap();
        // Strictly increasing for gamma >= 2; constant 1/beta at gamma = 1.
        for gamma in [2, 3, 5, 8] {
            assert!(xi(0.2, &ch, gamma) > xi(0.1, &ch, gamma));
        }
        assert_eq!(xi(0.2, &ch, 1), xi(0.1, &ch, 1));
    }

    #[test]
    fn xi_bounds_inside_gamma_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let ch = random_valid_channel(&mut rng);
            let alpha: f64 = rng.gen_range(0.01..0.9);
            let beta = ch.beta();
            let bound = (1.0 / alpha).ceil() as usize;
            let upper = std::f64::consts::E / ((1.0 - alpha) * (1.0 - (-beta).exp()));
            for gamma in 1..=bound.min(64) {
                let value = xi(alpha, &ch, gamma);
                assert!(value >= 1.0 / beta - 1e-12);
                assert!(value <= upper + 1e-9);
            }
        }
    }

    #[test]
    fn gamma_star_matches_extended_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let ch = random_valid_channel(&mut rng);
            let alpha = rng.gen_range(0.02..0.9);
            assert_eq!(gamma_star(alpha, &ch), gamma_star_brute(alpha, &ch, 3));
        }
    }

    #[test]
    fn gamma_star_frozen_values() {
        assert_eq!(gamma_star(0.1, &NoisyChannel::symmetric(0.1).unwrap()), 9);
        assert_eq!(gamma_star(0.1, &NoisyChannel::symmetric(0.01).unwrap()), 7);
        // Large prevalence pushes the optimum down to individual testing.
        assert_eq!(
            gamma_star(0.45, &NoisyChannel::symmetric(0.01).unwrap()),
            gamma_star_brute(0.45, &NoisyChannel::symmetric(0.01).unwrap(), 3)
        );
        assert_eq!(gamma_star(0.45, &NoisyChannel::symmetric(0.01).unwrap()), 1);
    }

    #[test]
    fn gamma_star_takes_multiple_values_over_grid() {
        let ch = NoisyChannel::symmetric(0.01).unwrap();
        let distinct: std::collections::BTreeSet<usize> = (1..=45)
            .map(|k| gamma_star(k as f64 / 100.0, &ch))
            .collect();
        assert!(distinct.len() >= 2, "expected kinks, got {distinct:?}");
    }

    #[test]
    fn m_na_minimal_population() {
        let ch = NoisyChannel::symmetric(0.1).unwrap();
        let expected = 2.0 * 2.0f64.ln() * c_na(0.1, &ch);
        assert_abs_diff_eq!(m_na(2, 0.1, &ch), expected, epsilon = 1e-12);
    }

    #[test]
    fn m_na_frozen_value() {
        let ch = NoisyChannel::symmetric(0.1).unwrap();
        assert_abs_diff_eq!(m_na(10_000, 0.1, &ch), 54155.83250127334, epsilon = 1e-6);
        assert_abs_diff_eq!(c_na(0.1, &ch), 0.5879894804544948, epsilon = 1e-12);
    }

    #[test]
    fn m_na_swap_invariant() {
        let a = NoisyChannel::new(0.01, 0.1).unwrap();
        let b = NoisyChannel::new(0.1, 0.01).unwrap();
        for k in 1..=9 {
            let alpha = k as f64 / 10.0;
            assert_abs_diff_eq!(
                m_na(5000, alpha, &a),
                m_na(5000, alpha, &b),
                epsilon = 1e-12 * m_na(5000, alpha, &a)
            );
        }
    }

    #[test]
    fn c_ad_frozen_value() {
        let ch = NoisyChannel::symmetric(0.1).unwrap();
        assert_abs_diff_eq!(c_ad(0.1, &ch), 0.05688995166417734, epsilon = 1e-12);
    }

    #[test]
    fn c_ad_asymmetry_ordering() {
        // False positives are costlier than false negatives for the adaptive
        // threshold.
        let fp_heavy = NoisyChannel::new(0.1, 0.01).unwrap();
        let fn_heavy = NoisyChannel::new(0.01, 0.1).unwrap();
        for k in 1..=45 {
            let alpha = k as f64 / 100.0;
            assert!(c_ad(alpha, &fp_heavy) > c_ad(alpha, &fn_heavy));
        }
    }

    #[test]
    fn sweep_is_row_major_and_consistent() {
        let channels = [
            NoisyChannel::symmetric(0.01).unwrap(),
            NoisyChannel::symmetric(0.1).unwrap(),
        ];
        let alphas = [0.1, 0.2];
        let reports = sweep(1000, &alphas, &channels);
        assert_eq!(reports.len(), 4);
        assert_eq!(reports[0].alpha, 0.1);
        assert_eq!(reports[1].alpha, 0.1);
        assert_eq!(reports[1].p01, 0.1);
        assert_eq!(reports[3].alpha, 0.2);
        let scalar = report(1000, 0.2, &channels[1]);
        assert_eq!(reports[3], scalar);
    }

    proptest! {
        #[test]
        fn thresholds_increase_in_n(alpha in 0.02f64..0.9, p in 0.01f64..0.45, n in 2usize..100_000) {
            let ch = NoisyChannel::symmetric(p).unwrap();
            prop_assert!(m_na(n + 1, alpha, &ch) > m_na(n, alpha, &ch));
            prop_assert!(m_ad(n + 1, alpha, &ch) > m_ad(n, alpha, &ch));
        }

        #[test]
        fn c_na_never_exceeds_individual_testing_constant(alpha in 0.02f64..0.9, p in 0.01f64..0.45) {
            // Gamma = 1 is always a candidate, so the minimum is at most 1/beta.
            let ch = NoisyChannel::symmetric(p).unwrap();
            prop_assert!(c_na(alpha, &ch) <= 1.0 / ch.beta() + 1e-12);
        }

        #[test]
        fn report_internally_consistent(alpha in 0.02f64..0.9, p in 0.01f64..0.45) {
            let ch = NoisyChannel::symmetric(p).unwrap();
            let r = report(500, alpha, &ch);
            prop_assert!(r.gamma_star >= 1);
            prop_assert!(r.gamma_star <= (1.0 / alpha).ceil() as usize);
            prop_assert!((r.c_na - r.xi_at_gamma_star / r.gamma_star as f64).abs() <= 1e-15);
            prop_assert!((r.m_na - r.c_na * 500.0 * 500.0f64.ln()).abs() <= 1e-9);
        }
    }
}
