use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::PreparedInputs;
use super::split::Split;
use super::{ExperimentConfig, Variant};
use crate::nn::{Mode, ModelState};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Halts once validation accuracy has not improved for `patience`
/// consecutive epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    epochs: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None, best_epoch: 0, epochs: 0, since_best: 0 }
    }

    pub fn observe(&mut self, val_accuracy: f64) -> StopDecision {
        self.epochs += 1;
        if self.best.is_none_or(|b| val_accuracy > b) {
            self.best = Some(val_accuracy);
            self.best_epoch = self.epochs;
            self.since_best = 0;
            return StopDecision::Improved;
        }
        self.since_best += 1;
        if self.since_best >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    /// 1-based epoch of the best accuracy seen so far.
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_objective: f64,
    pub train_mse: f64,
    pub train_cce: f64,
    /// Percent.
    pub val_accuracy: f64,
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub model: ModelState,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub log: Vec<EpochLog>,
}

/// Arg-max predictions in eval mode, in chunks.
pub fn predict_classes(model: &ModelState, inputs: &PreparedInputs, indices: &[usize]) -> Result<Vec<usize>> {
    let nc = model.spec.n_classes;
    let mut out = Vec::with_capacity(indices.len());
    let mut buf = Vec::new();
    for chunk in indices.chunks(256) {
        buf.clear();
        for &i in chunk {
            buf.extend_from_slice(inputs.z_row(i));
        }
        let probs = model.predict(&buf, chunk.len())?;
        out.extend(probs.chunks_exact(nc).map(|p| {
            p.iter().enumerate().fold(0, |best, (k, &v)| if v > p[best] { k } else { best })
        }));
    }
    Ok(out)
}

/// Percent of `indices` classified correctly.
pub fn accuracy(model: &ModelState, inputs: &PreparedInputs, labels: &[u32], indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }
    let pred = predict_classes(model, inputs, indices)?;
    let correct = pred.iter().zip(indices).filter(|(&p, &i)| p == labels[i] as usize).count();
    Ok(100.0 * correct as f64 / indices.len() as f64)
}

/// Mini-batch Adam with early stopping on validation accuracy.
///
/// Initialization, batch order and dropout masks depend only on the
/// experiment seed and fold, so paired CNN/CDAE variants see identical
/// randomness.
pub fn train_model(
    cfg: &ExperimentConfig,
    variant: Variant,
    inputs: &PreparedInputs,
    labels: &[u32],
    split: &Split,
    fold: usize,
    mut observer: Option<&mut dyn FnMut(&EpochLog)>,
) -> Result<TrainOutcome> {
    let spec = cfg.network_spec(variant);
    if inputs.dims != spec.input_dims() {
        return Err(Error::ShapeMismatch(format!("{} inputs for a {}-dim network", inputs.dims, spec.input_dims())));
    }
    if split.train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let weights = variant.loss_weights(cfg.loss_weights);
    let mut model = ModelState::init(spec, rng::derive_seed(cfg.seed, &[rng::tag("model"), fold as u64]))?;
    let mut order_rng = rng::stream(cfg.seed, &[rng::tag("batches"), fold as u64]);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.clone();
    let mut log = Vec::new();
    let mut order = split.train.clone();
    let (mut z, mut z_hat, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut order_rng);
        let (mut obj, mut mse, mut cce) = (0.0, 0.0, 0.0);
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            z.clear();
            z_hat.clear();
            y.clear();
            for &i in chunk {
                z.extend_from_slice(inputs.z_row(i));
                if spec.decoder {
                    z_hat.extend_from_slice(inputs.z_hat_row(i));
                }
                y.push(labels[i] as usize);
            }
            let trace = model.forward(&z, chunk.len(), Mode::Train)?;
            let (grads, loss) = model.backward(&trace, &z_hat, &y, weights)?;
            if !loss.objective().is_finite() {
                return Err(Error::Diverged { epoch, batch: b });
            }
            model.apply_gradients(&grads, &cfg.adam).map_err(|e| match e {
                Error::NonFiniteGradient(_) => Error::Diverged { epoch, batch: b },
                e => e,
            })?;
            obj += loss.objective();
            mse += loss.mse;
            cce += loss.cce;
            batches += 1;
        }
        let val = accuracy(&model, inputs, labels, &split.validation)?;
        let decision = stopper.observe(val);
        let n = batches as f64;
        let entry = EpochLog {
            epoch,
            train_objective: obj / n,
            train_mse: mse / n,
            train_cce: cce / n,
            val_accuracy: val,
            improved: decision == StopDecision::Improved,
        };
        if let Some(f) = observer.as_mut() {
            f(&entry);
        }
        log.push(entry);
        if decision == StopDecision::Improved {
            best = model.clone();
        }
        if decision == StopDecision::Stop {
            break;
        }
    }
    Ok(TrainOutcome {
        model: best,
        best_epoch: stopper.best_epoch(),
        best_val_accuracy: stopper.best().unwrap_or(0.0),
        log,
    })
}
