//! Central finite-difference comparison against [`ModelState::backward`].

use rand::Rng;

use super::loss::LossWeights;
use super::model::{Mode, ModelState};
use crate::{rng, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub coords: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn objective(state: &mut ModelState, z: &[f64], z_hat: &[f64], labels: &[usize], w: LossWeights) -> Result<f64> {
    let trace = state.forward(z, labels.len(), Mode::Eval)?;
    Ok(state.loss(&trace, z_hat, labels, w)?.objective())
}

/// Check `coords` random coordinates of every parameter tensor (all of them
/// when the tensor is smaller). Dropout must be disabled in `state.spec`.
#[allow(clippy::too_many_arguments)]
pub fn check(
    state: &mut ModelState,
    z: &[f64],
    z_hat: &[f64],
    labels: &[usize],
    w: LossWeights,
    coords: usize,
    step: f64,
    floor: f64,
    seed: u64,
) -> Result<Vec<TensorCheck>> {
    let trace = state.forward(z, labels.len(), Mode::Train)?;
    let (grads, _) = state.backward(&trace, z_hat, labels, w)?;
    let mut out = Vec::new();
    for t in 0..state.params.len() {
        let n = state.params[t].values.len();
        let mut g = rng::stream(seed, &[rng::tag(&state.params[t].name)]);
        let picks: Vec<usize> = if n <= coords { (0..n).collect() } else { (0..coords).map(|_| g.random_range(0..n)).collect() };
        let (mut rel, mut abs) = (0.0f64, 0.0f64);
        for &i in &picks {
            let orig = state.params[t].values[i];
            state.params[t].values[i] = orig + step;
            let up = objective(state, z, z_hat, labels, w)?;
            state.params[t].values[i] = orig - step;
            let down = objective(state, z, z_hat, labels, w)?;
            state.params[t].values[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            rel = rel.max(relative_error(grads[t][i], numeric, floor));
            abs = abs.max((grads[t][i] - numeric).abs());
        }
        out.push(TensorCheck { name: state.params[t].name.clone(), coords: picks.len(), max_rel_err: rel, max_abs_err: abs });
    }
    Ok(out)
}
