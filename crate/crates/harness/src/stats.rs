//! Aggregation statistics for trial batches.

use crate::HarnessError;

/// Wilson score interval at 95% confidence (z = 1.96), clamped to [0, 1].
pub fn wilson_interval(successes: usize, trials: usize) -> Result<(f64, f64), HarnessError> {
    if trials == 0 {
        return Err(HarnessError::Domain(
            "wilson interval needs trials >= 1".into(),
        ));
    }
    if successes > trials {
        return Err(HarnessError::Domain(format!(
            "successes {successes} exceed trials {trials}"
        )));
    }
    let z = 1.96f64;
    let n = trials as f64;
    let p_hat = successes as f64 / n;
    let z2 = z * z;
    let denominator = 1.0 + z2 / n;
    let center = (p_hat + z2 / (2.0 * n)) / denominator;
    let half_width = z * (p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n)).sqrt() / denominator;
    Ok((
        (center - half_width).max(0.0),
        (center + half_width).min(1.0),
    ))
}

/// Nearest-rank percentile of an unsorted sample; `q` in (0, 1].
pub fn percentile(values: &[usize], q: f64) -> f64 {
    assert!(!values.is_empty());
    assert!(q > 0.0 && q <= 1.0);
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.saturating_sub(1)] as f64
}

pub fn mean(values: &[usize]) -> f64 {
    assert!(!values.is_empty());
    values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64
}
