use serde::{Deserialize, Serialize};

use super::dataset::{generate_dataset, prepare_inputs, Dataset};
use super::metrics::{evaluate, ExperimentRecord, FoldResult};
use super::split::fold_split;
use super::train::{train_model, EpochLog};
use super::{ExperimentConfig, InputScheme, Variant};
use crate::{Error, Result};

/// One record per variant, in the order requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub records: Vec<ExperimentRecord>,
}

impl AblationTable {
    pub fn record(&self, variant: Variant) -> Option<&ExperimentRecord> {
        self.records.iter().find(|r| r.variant == variant)
    }

    pub fn accuracy(&self, variant: Variant, snr_db: f64) -> Option<f64> {
        self.record(variant)?.accuracy_at(snr_db)
    }
}

/// Progress hook: variant, fold and the epoch just finished.
pub type Progress<'a> = &'a mut dyn FnMut(Variant, usize, &EpochLog);

/// Generate one dataset and train every variant on every fold.
pub fn run_ablation(cfg: &ExperimentConfig, variants: &[Variant], progress: Option<Progress>) -> Result<AblationTable> {
    cfg.validate()?;
    let ds = generate_dataset(cfg)?;
    run_ablation_on(cfg, &ds, variants, progress)
}

/// Train and test `variants` on a shared dataset. Inputs of a scheme are
/// prepared once per fold and reused by its CNN and CDAE variants.
pub fn run_ablation_on(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    variants: &[Variant],
    mut progress: Option<Progress>,
) -> Result<AblationTable> {
    if variants.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mut results: Vec<Vec<FoldResult>> = vec![Vec::new(); variants.len()];
    for fold in 0..cfg.folds {
        let split = fold_split(&ds.labels, &ds.snr_db, cfg.train_fraction, cfg.validation_fraction, cfg.seed, fold)?;
        for scheme in InputScheme::ALL {
            let members: Vec<usize> = (0..variants.len()).filter(|&k| variants[k].input() == scheme).collect();
            if members.is_empty() {
                continue;
            }
            let inputs = prepare_inputs(ds, scheme, &split.train)?;
            for k in members {
                let v = variants[k];
                let mut hook = |e: &EpochLog| {
                    if let Some(p) = progress.as_mut() {
                        p(v, fold, e)
                    }
                };
                let out = train_model(cfg, v, &inputs, &ds.labels, &split, fold, Some(&mut hook))?;
                let per_snr = evaluate(&out.model, &inputs, &ds.labels, &ds.snr_db, &split.test)?;
                results[k].push(FoldResult {
                    fold,
                    best_epoch: out.best_epoch,
                    best_val_accuracy: out.best_val_accuracy,
                    per_snr,
                    curve: out.log,
                });
            }
        }
    }
    let records = variants
        .iter()
        .zip(results)
        .map(|(&v, folds)| ExperimentRecord::from_folds(v, cfg.seed, folds))
        .collect::<Result<_>>()?;
    Ok(AblationTable { records })
}
