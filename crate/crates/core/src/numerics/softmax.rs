//! Temperature softmax with exact log-probabilities and inverse-CDF sampling.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_finite, CoreError, Result};
use crate::rng::derive_rng;

fn check_inputs(logits: &[f64], temperature: f64) -> Result<()> {
    if logits.is_empty() {
        return Err(CoreError::InvalidArgument {
            context: "softmax",
            message: "empty logits".into(),
        });
    }
    ensure_finite(logits, "softmax")?;
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(CoreError::InvalidArgument {
            context: "softmax",
            message: format!("temperature must be positive and finite, got {temperature}"),
        });
    }
    Ok(())
}

/// `softmax(logits / temperature)` computed with max-shift stabilization.
pub fn softmax_probs(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    let lp = log_softmax(logits, temperature)?;
    Ok(lp.iter().map(|l| l.exp()).collect())
}

/// `log softmax(logits / temperature)`; exact log-probabilities.
pub fn log_softmax(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_inputs(logits, temperature)?;
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = logits.iter().map(|l| (l - max) / temperature).collect();
    let log_z = shifted.iter().map(|s| s.exp()).sum::<f64>().ln();
    Ok(shifted.iter().map(|s| s - log_z).collect())
}

/// Samples an index from the tempered categorical; returns the index and the
/// log of exactly that index's probability.
pub fn softmax_sample(
    logits: &[f64],
    temperature: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, f64)> {
    let log_probs = log_softmax(logits, temperature)?;
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut idx = log_probs.len() - 1;
    for (i, lp) in log_probs.iter().enumerate() {
        cum += lp.exp();
        if u < cum {
            idx = i;
            break;
        }
    }
    Ok((idx, log_probs[idx]))
}

/// [`softmax_sample`] on a stream derived from an explicit seed.
pub fn softmax_sample_seeded(logits: &[f64], temperature: f64, seed: u64) -> Result<(usize, f64)> {
    softmax_sample(logits, temperature, &mut derive_rng(seed, &[]))
}
