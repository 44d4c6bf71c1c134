use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `ln(1e-12)`: floor applied to log-probabilities in the cross-entropy.
pub const LOG_CLAMP: f64 = -27.631021115928547;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda1: 1.0, lambda2: 10.0 }
    }
}

impl LossWeights {
    /// Classification only.
    pub fn cnn(lambda2: f64) -> Self {
        Self { lambda1: 0.0, lambda2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    /// `lambda1 * mse + lambda2 * cce`.
    pub total: f64,
    pub mse: f64,
    pub cce: f64,
    /// Weight-decay term, not included in `total`.
    pub l2: f64,
}

impl LossBreakdown {
    /// The quantity the optimizer descends.
    pub fn objective(&self) -> f64 {
        self.total + self.l2
    }
}

/// Weighted loss from reconstructions and class probabilities.
///
/// MSE is the per-sample squared distance summed over dimensions and
/// averaged over the batch; pass an empty `z_tilde` to skip it.
pub fn loss(
    z_tilde: &[f64],
    z_hat: &[f64],
    y_hat: &[f64],
    labels: &[usize],
    n_classes: usize,
    w: LossWeights,
) -> Result<LossBreakdown> {
    let batch = labels.len();
    if batch == 0 || y_hat.len() != batch * n_classes {
        return Err(Error::ShapeMismatch(format!("{} probabilities for {} labels", y_hat.len(), batch)));
    }
    if z_tilde.len() != z_hat.len() && !z_tilde.is_empty() {
        return Err(Error::LengthMismatch { expected: z_hat.len(), actual: z_tilde.len() });
    }
    let b = batch as f64;
    let mse = z_tilde.iter().zip(z_hat).map(|(a, t)| (a - t).powi(2)).sum::<f64>() / b;
    let mut cce = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= n_classes {
            return Err(Error::ShapeMismatch(format!("label {y} with {n_classes} classes")));
        }
        cce -= y_hat[i * n_classes + y].ln().max(LOG_CLAMP);
    }
    cce /= b;
    Ok(LossBreakdown { total: w.lambda1 * mse + w.lambda2 * cce, mse, cce, l2: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_constant() {
        assert_eq!(LOG_CLAMP, 1e-12f64.ln());
    }

    #[test]
    fn clamped_probability() {
        let l = loss(&[], &[], &[1.0, 0.0], &[1], 2, LossWeights::default()).unwrap();
        assert!((l.cce - 27.631021115928547).abs() < 1e-12);
        assert_eq!(l.mse, 0.0);
    }

    #[test]
    fn mse_sums_dimensions() {
        let l = loss(&[0.5, 0.5, 0.0, 0.0], &[0.0; 4], &[0.5, 0.5, 0.5, 0.5], &[0, 1], 2, LossWeights::default()).unwrap();
        assert!((l.mse - 0.25).abs() < 1e-15);
        assert!((l.cce - 2f64.ln()).abs() < 1e-15);
        assert!((l.total - (0.25 + 10.0 * 2f64.ln())).abs() < 1e-12);
    }
}
