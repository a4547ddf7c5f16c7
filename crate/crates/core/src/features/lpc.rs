//! Autocorrelation-method linear prediction and inverse filtering.

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LpcConfig {
    pub order: usize,
    pub floor_epsilon: f64,
}

impl Default for LpcConfig {
    fn default() -> Self {
        Self {
            order: 16,
            floor_epsilon: 1e-10,
        }
    }
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum LpcError {
    #[error("lpc order {order} must be below frame length {frame_len}")]
    OrderTooHigh { order: usize, frame_len: usize },
    #[error("lpc floor epsilon must be a small positive number, got {0}")]
    BadFloor(f64),
}

impl LpcConfig {
    pub fn validate(&self, frame_len: usize) -> Result<(), LpcError> {
        if self.order >= frame_len {
            return Err(LpcError::OrderTooHigh {
                order: self.order,
                frame_len,
            });
        }
        if !(self.floor_epsilon > 0.0 && self.floor_epsilon < 1.0) {
            return Err(LpcError::BadFloor(self.floor_epsilon));
        }
        Ok(())
    }
}

/// Biased autocorrelation `r[0..=max_lag]`.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    (0..=max_lag)
        .map(|lag| {
            if lag >= x.len() {
                0.0
            } else {
                x[lag..].iter().zip(x).map(|(a, b)| a * b).sum()
            }
        })
        .collect()
}

/// Result of the Levinson-Durbin recursion.
#[derive(Clone, Debug, PartialEq)]
pub struct Levinson {
    /// Predictor `a[1..=p]` with `x[n] ~ sum_i a[i] x[n - i]`.
    pub coeffs: Vec<f64>,
    /// Prediction-error energy after each order, starting with `r[0]` at order 0.
    pub errors: Vec<f64>,
}

/// Solves the Toeplitz normal equations for `order` predictor taps.
///
/// The recursion stops at the first level whose error would not stay
/// positive; remaining taps are zero.
pub fn levinson_durbin(r: &[f64], order: usize) -> Levinson {
    let mut a = vec![0.0; order];
    let mut errors = Vec::with_capacity(order + 1);
    let r0 = r.first().copied().unwrap_or(0.0);
    errors.push(r0);
    if !(r0 > 0.0) {
        return Levinson { coeffs: a, errors };
    }
    let mut err = r0;
    let mut prev = vec![0.0; order];
    for i in 0..order.min(r.len().saturating_sub(1)) {
        let mut acc = r[i + 1];
        for j in 0..i {
            acc -= a[j] * r[i - j];
        }
        let k = acc / err;
        let next_err = err * (1.0 - k * k);
        if !(next_err > 0.0) || !k.is_finite() {
            break;
        }
        prev[..i].copy_from_slice(&a[..i]);
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        a[i] = k;
        err = next_err;
        errors.push(err);
    }
    Levinson { coeffs: a, errors }
}

/// Predictor coefficients `a[1..=order]` of one frame; an all-zero frame
/// yields all-zero coefficients.
pub fn lpc_coeffs(frame: &[f64], cfg: &LpcConfig) -> Vec<f64> {
    let r = autocorrelation(frame, cfg.order);
    levinson_durbin(&r, cfg.order).coeffs
}

/// Inverse (analysis) filter `e[n] = x[n] - sum_i a[i] x[n - i]`, zero history.
pub fn residual(frame: &[f64], coeffs: &[f64]) -> Vec<f64> {
    if coeffs.is_empty() {
        return frame.to_vec();
    }
    (0..frame.len())
        .map(|n| {
            let pred: f64 = coeffs
                .iter()
                .enumerate()
                .take_while(|(i, _)| *i < n)
                .map(|(i, a)| a * frame[n - 1 - i])
                .sum();
            frame[n] - pred
        })
        .collect()
}
