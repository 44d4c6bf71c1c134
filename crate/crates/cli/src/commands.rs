//! The `gen`, `train`, `eval`, `report` and `defaults` commands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rffid::channel::SnrGrid;
use rffid::dsp::NormStats;
use rffid::exp::{
    evaluate, fold_split, generate_dataset, prepare_with_stats, scheme_rows, train_model, AblationTable, EpochLog,
    ExperimentConfig, ExperimentRecord, FoldResult, InputScheme, Variant,
};

use crate::config::{load_config, reference_config};
use crate::error::{CliError, Result};
use crate::store::{self, Checkpoint, CheckpointHeader};

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub snr_grid: Option<Vec<f64>>,
    pub devices: Option<usize>,
    pub frames: Option<usize>,
    pub epochs: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(f) = self.folds {
            cfg.folds = f;
        }
        if let Some(g) = &self.snr_grid {
            cfg.snr_grid = SnrGrid::new(g.clone()).map_err(|e| CliError::Usage(format!("--snr-grid: {e}")))?;
        }
        if let Some(d) = self.devices {
            cfg.population.n_devices = d;
        }
        if let Some(f) = self.frames {
            cfg.frames_per_device_per_snr = f;
        }
        if let Some(e) = self.epochs {
            cfg.max_epochs = e;
        }
        cfg.validate().map_err(|e| CliError::Usage(format!("invalid override: {e}")))
    }
}

fn resolve_config(path: Option<&Path>, o: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    o.apply(&mut cfg)?;
    Ok(cfg)
}

pub fn cmd_defaults(out: Option<&Path>) -> Result<()> {
    let text = reference_config();
    match out {
        Some(p) => store::write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Synthesize a dataset, draw every fold's split and fit each scheme's
/// normalization on that fold's training rows.
pub fn cmd_gen(config: Option<&Path>, out: &Path, o: &Overrides) -> Result<store::DatasetManifest> {
    let cfg = resolve_config(config, o)?;
    let ds = generate_dataset(&cfg)?;
    let mut folds = Vec::with_capacity(cfg.folds);
    let rows: Vec<_> = InputScheme::ALL.iter().map(|&s| scheme_rows(&ds, s).map(|r| (s, r))).collect::<rffid::Result<_>>()?;
    for k in 0..cfg.folds {
        let split = fold_split(&ds.labels, &ds.snr_db, cfg.train_fraction, cfg.validation_fraction, cfg.seed, k)?;
        let mut stats = Vec::new();
        for (scheme, (dims, noisy, _)) in &rows {
            let s = NormStats::fit_rows(split.train.iter().map(|&i| &noisy[i * dims..(i + 1) * dims]))?;
            stats.push((scheme.layout(), s));
        }
        folds.push((split, stats));
    }
    let manifest = store::write_dataset(out, &cfg, &ds, &folds)?;
    eprintln!("wrote {} samples ({} dropped) to {}", ds.len(), ds.dropped.len(), out.display());
    Ok(manifest)
}

fn log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,train_objective,train_mse,train_cce,val_accuracy,improved\n");
    for e in log {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            e.epoch, e.train_objective, e.train_mse, e.train_cce, e.val_accuracy, e.improved
        );
    }
    s
}

pub fn default_log_path(checkpoint: &Path) -> PathBuf {
    let mut p = checkpoint.as_os_str().to_owned();
    p.push(".log.csv");
    PathBuf::from(p)
}

/// Train one variant on one fold of a stored dataset.
pub fn cmd_train(data: &Path, variant: Variant, out: &Path, fold: usize, o: &Overrides) -> Result<Checkpoint> {
    let (manifest, ds) = store::read_dataset(data)?;
    let mut cfg = manifest.config.clone();
    o.apply(&mut cfg)?;
    let entry = manifest.fold(fold)?;
    let stats = store::read_norm(data, entry, variant.layout())?;
    let inputs = prepare_with_stats(&ds, variant.input(), stats)?;
    let mut progress = |e: &EpochLog| {
        eprintln!("{variant} fold {fold} epoch {:3} objective {:.4} val {:.1}%", e.epoch, e.train_objective, e.val_accuracy)
    };
    let outcome = train_model(&cfg, variant, &inputs, &ds.labels, &entry.split, fold, Some(&mut progress))?;
    let model = outcome.model;
    let header = CheckpointHeader {
        variant,
        fold,
        seed: cfg.seed,
        spec: model.spec,
        loss_weights: variant.loss_weights(cfg.loss_weights),
        tensors: model.params.iter().map(|p| (p.name.clone(), p.shape.clone())).collect(),
        adam_step: model.adam.step,
        dropout_rng: store::rng_state(&model.dropout_rng),
        best_epoch: outcome.best_epoch,
        best_val_accuracy: outcome.best_val_accuracy,
        curve: outcome.log,
    };
    let ckpt = Checkpoint { header, model };
    store::write_checkpoint(out, &ckpt)?;
    store::write_text(&default_log_path(out), &log_csv(&ckpt.header.curve))?;
    Ok(ckpt)
}

/// Which partition of the checkpoint's fold to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    Train,
    Validation,
    Test,
}

/// Score a checkpoint on its own fold of a dataset.
pub fn cmd_eval(checkpoint: &Path, data: &Path, out: &Path, which: EvalSplit) -> Result<ExperimentRecord> {
    let ckpt = store::read_checkpoint(checkpoint)?;
    let (manifest, ds) = store::read_dataset(data)?;
    let h = &ckpt.header;
    let expected = manifest.config.network_spec(h.variant);
    if expected != h.spec {
        return Err(CliError::Data(format!(
            "checkpoint network {:?} does not match the dataset's {} network {:?}",
            h.spec, h.variant, expected
        )));
    }
    let entry = manifest.fold(h.fold)?;
    let stats = store::read_norm(data, entry, h.variant.layout())?;
    let inputs = prepare_with_stats(&ds, h.variant.input(), stats)?;
    let indices = match which {
        EvalSplit::Train => &entry.split.train,
        EvalSplit::Validation => &entry.split.validation,
        EvalSplit::Test => &entry.split.test,
    };
    let per_snr = evaluate(&ckpt.model, &inputs, &ds.labels, &ds.snr_db, indices)?;
    let fold = FoldResult {
        fold: h.fold,
        best_epoch: h.best_epoch,
        best_val_accuracy: h.best_val_accuracy,
        per_snr,
        curve: h.curve.clone(),
    };
    let record = ExperimentRecord::from_folds(h.variant, h.seed, vec![fold])?;
    store::write_json(out, &record)?;
    Ok(record)
}

/// Merge per-fold records by variant and seed.
pub fn merge_records(records: Vec<ExperimentRecord>) -> Result<Vec<ExperimentRecord>> {
    let mut groups: BTreeMap<(usize, u64), Vec<FoldResult>> = BTreeMap::new();
    for r in records {
        let key = (Variant::ALL.iter().position(|&v| v == r.variant).unwrap_or(usize::MAX), r.seed);
        groups.entry(key).or_default().extend(r.folds);
    }
    groups
        .into_iter()
        .map(|((v, seed), mut folds)| {
            folds.sort_by_key(|f| f.fold);
            if folds.windows(2).any(|w| w[0].fold == w[1].fold) {
                return Err(CliError::Data(format!("duplicate fold for {} seed {seed}", Variant::ALL[v])));
            }
            Ok(ExperimentRecord::from_folds(Variant::ALL[v], seed, folds)?)
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Long-form table: one row per variant, seed and SNR.
pub fn results_csv(records: &[ExperimentRecord]) -> String {
    let mut s = String::from(
        "variant,seed,folds,snr_db,accuracy,accuracy_ci95,precision,precision_ci95,recall,recall_ci95\n",
    );
    for r in records {
        for p in &r.summary {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.variant,
                r.seed,
                r.folds.len(),
                p.snr_db,
                p.accuracy.mean,
                opt(p.accuracy.ci95),
                p.precision.mean,
                opt(p.precision.ci95),
                p.recall.mean,
                opt(p.recall.ci95)
            );
        }
    }
    s
}

/// SNR by variant accuracy grid, averaged over seeds; also the plot series.
pub fn accuracy_wide(records: &[ExperimentRecord]) -> (Vec<f64>, Vec<Variant>, String) {
    let mut snrs: Vec<f64> = records.iter().flat_map(|r| r.summary.iter().map(|p| p.snr_db)).collect();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();
    let variants: Vec<Variant> = Variant::ALL.into_iter().filter(|v| records.iter().any(|r| r.variant == *v)).collect();
    let mut s = String::from("snr_db");
    for v in &variants {
        let _ = write!(s, ",{v}");
    }
    s.push('\n');
    for &snr in &snrs {
        let _ = write!(s, "{snr}");
        for v in &variants {
            let acc: Vec<f64> = records.iter().filter(|r| r.variant == *v).filter_map(|r| r.accuracy_at(snr)).collect();
            let cell = (!acc.is_empty()).then(|| acc.iter().sum::<f64>() / acc.len() as f64);
            let _ = write!(s, ",{}", opt(cell));
        }
        s.push('\n');
    }
    (snrs, variants, s)
}

pub fn cmd_report(inputs: &[PathBuf], out: &Path) -> Result<AblationTable> {
    if inputs.is_empty() {
        return Err(CliError::Usage("report needs at least one record file".into()));
    }
    let records = inputs.iter().map(|p| store::read_json(p)).collect::<Result<Vec<ExperimentRecord>>>()?;
    let table = AblationTable { records: merge_records(records)? };
    std::fs::create_dir_all(out).map_err(CliError::io(out))?;
    store::write_text(&out.join("results.csv"), &results_csv(&table.records))?;
    store::write_text(&out.join("accuracy_wide.csv"), &accuracy_wide(&table.records).2)?;
    store::write_json(&out.join("summary.json"), &table)?;
    Ok(table)
}
