//! Central-difference gradient oracle.
//!
//! This is the independent reference every analytic gradient in the crate is
//! checked against: it only ever evaluates the objective as a black box, so
//! it shares no code path with backpropagation.

use crate::error::{CoreError, Result};
use crate::numerics::{MlpGrads, MlpParams};

/// Central difference `(f(x + h e_i) - f(x - h e_i)) / (2h)` per coordinate.
pub fn central_difference<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(CoreError::InvalidArgument {
            context: "central_difference",
            message: format!("step size must be positive and finite, got {h}"),
        });
    }
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe)?;
        probe[i] = x[i] - h;
        let fm = f(&probe)?;
        probe[i] = x[i];
        let g = (fp - fm) / (2.0 * h);
        if !g.is_finite() {
            return Err(CoreError::NonFinite {
                context: "central_difference",
                step: Some(i),
            });
        }
        grad[i] = g;
    }
    Ok(grad)
}

/// Central-difference gradient of a scalar objective over all parameters of
/// a network, returned in the network's own gradient shape.
pub fn finite_diff_gradient<F>(mut f: F, params: &MlpParams, h: f64) -> Result<MlpGrads>
where
    F: FnMut(&MlpParams) -> Result<f64>,
{
    let flat = params.flatten();
    let mut scratch = params.clone();
    let grad_flat = central_difference(
        |x| {
            scratch.assign_flat(x)?;
            f(&scratch)
        },
        &flat,
        h,
    )?;
    let mut grads = MlpGrads::zeros_like(params);
    // Reuse the flat layout by writing through a params-shaped carrier.
    let mut carrier = params.clone();
    carrier.assign_flat(&grad_flat)?;
    for (g, w) in grads.weights.iter_mut().zip(carrier.weights()) {
        *g = w.clone();
    }
    for (g, b) in grads.biases.iter_mut().zip(carrier.biases()) {
        g.copy_from_slice(b);
    }
    Ok(grads)
}

/// Worst relative disagreement between two gradient vectors, guarded against
/// near-zero denominators.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
