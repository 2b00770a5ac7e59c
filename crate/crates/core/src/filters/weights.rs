use crate::error::{Error, Result};

/// Normalise log weights with the max-shift transform.
///
/// Returns the normalised weights and `log((1/N) Σ exp(logw))`, the log of the
/// mean unnormalised weight. When the incoming log weights are relative to a
/// uniform ensemble this is the log normalising-constant increment of the step.
/// `step` is only used to label a degeneracy error.
pub fn normalise_log_weights(logw: &[f64], step: usize) -> Result<(Vec<f64>, f64)> {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if logw.is_empty() || max == f64::NEG_INFINITY || max.is_nan() || logw.iter().any(|v| v.is_nan()) {
        return Err(Error::DegenerateWeights { step });
    }
    if max == f64::INFINITY {
        return Err(Error::Numerical {
            step,
            message: "infinite log weight".into(),
        });
    }
    let mut weights: Vec<f64> = logw.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = weights.iter().sum();
    let inv = 1.0 / sum;
    weights.iter_mut().for_each(|w| *w *= inv);
    let log_mean = max + sum.ln() - (logw.len() as f64).ln();
    Ok((weights, log_mean))
}

/// Kong–Liu effective sample size `1 / Σ w²` of normalised weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}
