//! The noisy binary observation channel.
//!
//! A channel is described by its false-positive rate `p01` and false-negative
//! rate `p10`; the complementary rates `p00 = 1 - p01` (specificity) and
//! `p11 = 1 - p10` (sensitivity) are derived. A channel is *valid* when both
//! rates lie in (0, 1) and `p01 + p10 < 1`. At `p01 + p10 = 1` positive and
//! negative pools are indistinguishable, and for `p01 + p10 > 1` flipping all
//! observed results yields a valid channel, so neither is accepted.
//!
//! The derived constants are the classification threshold
//! `C = ln(p00/p10) / ln(p11*p00 / (p01*p10))`, which is the unique maximizer
//! of `c -> min{KL(c||p01), KL(c||p11)}` on `[p01, p11]`, and the exponent
//! `beta = KL(C||p01) = KL(C||p11)` governing how fast per-individual error
//! probabilities decay with the number of informative tests.

use rand::Rng;
use thiserror::Error;

/// Errors from channel validation and KL evaluation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("degenerate channel: p01 + p10 = 1 has zero capacity (p01={p01}, p10={p10})")]
    CapacityZero { p01: f64, p10: f64 },
    #[error(
        "degenerate channel: p01 + p10 > 1 (p01={p01}, p10={p10}); \
         flip all observed results and use the complementary channel"
    )]
    FlipRecommended { p01: f64, p10: f64 },
    #[error("degenerate channel: {name} = {value} is outside (0, 1)")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("KL divergence is undefined against reference probability q = {q}")]
    KlDomain { q: f64 },
}

/// A validated noisy binary channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyChannel {
    p01: f64,
    p10: f64,
}

impl NoisyChannel {
    /// Validates the flip probabilities and builds a channel.
    ///
    /// Rejects rates outside (0, 1) and rates with `p01 + p10 >= 1`, with the
    /// error distinguishing the capacity-zero boundary from channels that
    /// merely need their outputs flipped.
    pub fn new(p01: f64, p10: f64) -> Result<Self, ChannelError> {
        for (name, value) in [("p01", p01), ("p10", p10)] {
            if !value.is_finite() || value <= 0.0 || value >= 1.0 {
                return Err(ChannelError::OutOfRange { name, value });
            }
        }
        if p01 + p10 == 1.0 {
            return Err(ChannelError::CapacityZero { p01, p10 });
        }
        if p01 + p10 > 1.0 {
            return Err(ChannelError::FlipRecommended { p01, p10 });
        }
        Ok(Self { p01, p10 })
    }

    /// A channel with equal false-positive and false-negative rates.
    pub fn symmetric(p: f64) -> Result<Self, ChannelError> {
        Self::new(p, p)
    }

    pub fn p01(&self) -> f64 {
        self.p01
    }

    pub fn p10(&self) -> f64 {
        self.p10
    }

    /// Specificity, `1 - p01`.
    pub fn p00(&self) -> f64 {
        1.0 - self.p01
    }

    /// Sensitivity, `1 - p10`.
    pub fn p11(&self) -> f64 {
        1.0 - self.p10
    }

    /// The channel with `p01` and `p10` exchanged (valid whenever `self` is).
    pub fn swapped(&self) -> Self {
        Self {
            p01: self.p10,
            p10: self.p01,
        }
    }

    /// The unique maximizer of `c -> min{KL(c||p01), KL(c||p11)}`.
    ///
    /// Closed form `ln(p00/p10) / ln(p11*p00 / (p01*p10))`; always lies
    /// strictly between `p01` and `p11`.
    pub fn threshold_c(&self) -> f64 {
        (self.p00() / self.p10).ln() / (self.p11() * self.p00() / (self.p01 * self.p10)).ln()
    }

    /// The exponent `beta = KL(C||p01) = KL(C||p11)`, in nats.
    pub fn beta(&self) -> f64 {
        self.constants().beta
    }

    /// The prior offset of the genie's thresholding rule,
    /// `kappa = ln(alpha/(1-alpha)) / ln(p01*p10 / (p11*p00))`.
    ///
    /// The denominator is negative for valid channels, so the sign of `kappa`
    /// matches the sign of `ln((1-alpha)/alpha)`.
    pub fn kappa(&self, alpha: f64) -> f64 {
        assert!(
            alpha > 0.0 && alpha < 1.0,
            "alpha must be in (0, 1), got {alpha}"
        );
        (alpha / (1.0 - alpha)).ln() / (self.p01 * self.p10 / (self.p11() * self.p00())).ln()
    }

    /// Both derived constants at once.
    pub fn constants(&self) -> ChannelConstants {
        ChannelConstants::of(self)
    }

    /// Sends one ideal test result through the channel.
    pub fn observe<R: Rng + ?Sized>(&self, truth: bool, rng: &mut R) -> bool {
        let flip_probability = if truth { self.p10 } else { self.p01 };
        let flipped = rng.gen::<f64>() < flip_probability;
        truth != flipped
    }

    /// Sends a vector of ideal test results through the channel, flipping
    /// each bit independently. Deterministic given the generator state.
    pub fn apply_noise<R: Rng + ?Sized>(&self, truth: &[bool], rng: &mut R) -> Vec<bool> {
        truth.iter().map(|&bit| self.observe(bit, rng)).collect()
    }
}

/// The threshold `C` and exponent `beta` of a channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConstants {
    pub c_threshold: f64,
    pub beta: f64,
}

impl ChannelConstants {
    /// Computes both constants from the closed form for `C`.
    ///
    /// Panics if `KL(C||p01)` and `KL(C||p11)` disagree beyond 1e-9, which
    /// would mean the closed form is wrong.
    pub fn of(ch: &NoisyChannel) -> Self {
        let c = ch.threshold_c();
        let against_p01 = kl(c, ch.p01());
        let against_p11 = kl(c, ch.p11());
        assert!(
            (against_p01 - against_p11).abs() <= 1e-9,
            "threshold inconsistency: KL(C||p01) = {against_p01} but KL(C||p11) = {against_p11}"
        );
        Self {
            c_threshold: c,
            beta: against_p01,
        }
    }
}

/// Bernoulli Kullback-Leibler divergence `KL(p||q)` in nats.
///
/// Uses the convention `0 * ln(0) = 0`, so `p` may be 0 or 1 (empirical
/// frequencies from decoders hit both endpoints). `q` must lie strictly
/// inside (0, 1).
pub fn kl_bernoulli(p: f64, q: f64) -> Result<f64, ChannelError> {
    let q_interior = q > 0.0 && q < 1.0;
    if !q_interior {
        return Err(ChannelError::KlDomain { q });
    }
    assert!(
        p.is_finite() && (0.0..=1.0).contains(&p),
        "p must be in [0, 1], got {p}"
    );
    Ok(kl(p, q))
}

/// Unchecked KL for callers that already hold a valid channel.
pub(crate) fn kl(p: f64, q: f64) -> f64 {
    debug_assert!(q > 0.0 && q < 1.0);
    debug_assert!((0.0..=1.0).contains(&p));
    let positive_part = if p > 0.0 { p * (p / q).ln() } else { 0.0 };
    let negative_part = if p < 1.0 {
        (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
    } else {
        0.0
    };
    positive_part + negative_part
}
