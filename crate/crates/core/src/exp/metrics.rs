use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::dataset::PreparedInputs;
use super::train::{predict_classes, EpochLog};
use super::Variant;
use crate::nn::ModelState;
use crate::{Error, Result};

/// Percentages in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Accuracy plus macro precision and recall over the classes that occur in
/// either `truth` or `pred`. A class that is never predicted has
/// precision 0.
pub fn confusion_metrics(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<ClassMetrics> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch { expected: truth.len(), actual: pred.len() });
    }
    if truth.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    let mut tp = vec![0usize; n_classes];
    let mut predicted = vec![0usize; n_classes];
    let mut actual = vec![0usize; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= n_classes || t >= n_classes {
            return Err(Error::ShapeMismatch(format!("class index out of range for {n_classes} classes")));
        }
        predicted[p] += 1;
        actual[t] += 1;
        if p == t {
            tp[p] += 1;
        }
    }
    let classes: Vec<usize> = (0..n_classes).filter(|&c| predicted[c] + actual[c] > 0).collect();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let k = classes.len() as f64;
    let precision = classes.iter().map(|&c| ratio(tp[c], predicted[c])).sum::<f64>() / k;
    let recall = classes.iter().map(|&c| ratio(tp[c], actual[c])).sum::<f64>() / k;
    let accuracy = ratio(tp.iter().sum(), truth.len());
    Ok(ClassMetrics { accuracy: 100.0 * accuracy, precision: 100.0 * precision, recall: 100.0 * recall })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrMetrics {
    pub snr_db: f64,
    pub samples: usize,
    #[serde(flatten)]
    pub metrics: ClassMetrics,
}

/// Per-SNR metrics of `model` on the samples in `indices`.
pub fn evaluate(
    model: &ModelState,
    inputs: &PreparedInputs,
    labels: &[u32],
    snr_db: &[f32],
    indices: &[usize],
) -> Result<Vec<SnrMetrics>> {
    if indices.is_empty() {
        return Err(Error::EmptySplit("evaluation"));
    }
    let pred = predict_classes(model, inputs, indices)?;
    let mut snrs: Vec<f32> = indices.iter().map(|&i| snr_db[i]).collect();
    snrs.sort_by(f32::total_cmp);
    snrs.dedup();
    snrs.into_iter()
        .map(|snr| {
            let (p, t): (Vec<usize>, Vec<usize>) = indices
                .iter()
                .zip(&pred)
                .filter(|(&i, _)| snr_db[i] == snr)
                .map(|(&i, &p)| (p, labels[i] as usize))
                .unzip();
            Ok(SnrMetrics { snr_db: snr as f64, samples: t.len(), metrics: confusion_metrics(&p, &t, model.spec.n_classes)? })
        })
        .collect()
}

/// Mean with a two-sided 95% Student-t interval; no interval for one value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub ci95: Option<f64>,
    pub n: usize,
}

pub fn aggregate(values: &[f64]) -> Result<MeanCi> {
    let n = values.len();
    if n == 0 {
        return Err(Error::EmptySelection);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(MeanCi { mean, ci95: None, n });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let q = t.inverse_cdf(0.975);
    Ok(MeanCi { mean, ci95: Some(q * var.sqrt() / (n as f64).sqrt()), n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub per_snr: Vec<SnrMetrics>,
    pub curve: Vec<EpochLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrSummary {
    pub snr_db: f64,
    pub accuracy: MeanCi,
    pub precision: MeanCi,
    pub recall: MeanCi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub variant: Variant,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    pub summary: Vec<SnrSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
}

impl ExperimentRecord {
    /// Aggregate folds SNR by SNR; every fold must cover the same SNR points.
    pub fn from_folds(variant: Variant, seed: u64, folds: Vec<FoldResult>) -> Result<Self> {
        let first = folds.first().ok_or(Error::EmptySelection)?;
        let snrs: Vec<f64> = first.per_snr.iter().map(|m| m.snr_db).collect();
        for f in &folds {
            if f.per_snr.iter().map(|m| m.snr_db).ne(snrs.iter().copied()) {
                return Err(Error::ShapeMismatch(format!("fold {} covers different SNR points", f.fold)));
            }
        }
        let summary = snrs
            .iter()
            .enumerate()
            .map(|(k, &snr)| {
                let pick = |f: fn(&ClassMetrics) -> f64| folds.iter().map(|r| f(&r.per_snr[k].metrics)).collect::<Vec<_>>();
                Ok(SnrSummary {
                    snr_db: snr,
                    accuracy: aggregate(&pick(|m| m.accuracy))?,
                    precision: aggregate(&pick(|m| m.precision))?,
                    recall: aggregate(&pick(|m| m.recall))?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { variant, seed, folds, summary, wall_clock_s: None })
    }

    pub fn accuracy_at(&self, snr_db: f64) -> Option<f64> {
        self.summary.iter().find(|s| s.snr_db == snr_db).map(|s| s.accuracy.mean)
    }
}
