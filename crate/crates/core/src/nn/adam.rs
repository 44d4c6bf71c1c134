use serde::{Deserialize, Serialize};

use super::model::ParamTensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn zeros(params: &[ParamTensor]) -> Self {
        Self {
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.values.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.values.len()]).collect(),
        }
    }
}

/// One bias-corrected Adam update. Parameters are left untouched when any
/// gradient is non-finite.
pub fn adam_step(params: &mut [ParamTensor], grads: &[Vec<f64>], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::ShapeMismatch(format!("{} gradients for {} tensors", grads.len(), params.len())));
    }
    for (p, g) in params.iter().zip(grads) {
        if g.len() != p.values.len() {
            return Err(Error::LengthMismatch { expected: p.values.len(), actual: g.len() });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(p.name.clone()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, w) in p.values.iter_mut().enumerate() {
            let g = grads[i][j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::Group;

    fn scalar(v: f64) -> Vec<ParamTensor> {
        vec![ParamTensor { name: "w".into(), group: Group::Encoder, shape: vec![1], values: vec![v] }]
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar(1.0);
        let mut s = AdamState::zeros(&p);
        adam_step(&mut p, &[vec![0.5]], &mut s, &AdamConfig::default()).unwrap();
        // m_hat = 0.5, v_hat = 0.25
        let expected = 1.0 - 1e-3 * 0.5 / (0.5 + 1e-8);
        assert!((p[0].values[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn two_steps_by_hand() {
        let cfg = AdamConfig::default();
        let mut p = scalar(0.0);
        let mut s = AdamState::zeros(&p);
        adam_step(&mut p, &[vec![1.0]], &mut s, &cfg).unwrap();
        adam_step(&mut p, &[vec![-2.0]], &mut s, &cfg).unwrap();
        let m = 0.9 * 0.1 + 0.1 * -2.0;
        let v = 0.999 * 0.001 + 0.001 * 4.0;
        let step2 = 1e-3 * (m / (1.0 - 0.81)) / ((v / (1.0 - 0.998001f64)).sqrt() + 1e-8);
        let expected = -1e-3 / (1.0 + 1e-8) - step2;
        assert!((p[0].values[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_stationary() {
        let mut p = scalar(0.3);
        let mut s = AdamState::zeros(&p);
        for _ in 0..5 {
            adam_step(&mut p, &[vec![0.0]], &mut s, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p[0].values[0], 0.3);
    }

    #[test]
    fn rejects_nan() {
        let mut p = scalar(0.3);
        let mut s = AdamState::zeros(&p);
        let e = adam_step(&mut p, &[vec![f64::NAN]], &mut s, &AdamConfig::default());
        assert!(matches!(e, Err(Error::NonFiniteGradient(_))));
        assert_eq!(s.step, 0);
    }
}
