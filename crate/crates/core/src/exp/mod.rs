//! Dataset generation, cross-validated training and per-SNR metrics for the
//! ten-variant ablation grid.

mod ablation;
mod dataset;
mod metrics;
mod split;
mod train;

pub use ablation::{run_ablation, run_ablation_on, AblationTable, Progress};
pub use dataset::{generate_dataset, prepare_inputs, prepare_with_stats, scheme_rows, Dataset, DroppedFrame, PreparedInputs};
pub use metrics::{aggregate, confusion_metrics, evaluate, ClassMetrics, ExperimentRecord, FoldResult, MeanCi, SnrMetrics, SnrSummary};
pub use split::{fold_split, Split};
pub use train::{accuracy, predict_classes, train_model, EarlyStopping, EpochLog, StopDecision, TrainOutcome};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::channel::SnrGrid;
use crate::dsp::{Layout, SyncConfig};
use crate::impair::PopulationSpec;
use crate::nn::{AdamConfig, LossWeights, NetworkSpec};
use crate::phy::PhyConfig;
use crate::{Error, Result};

/// Which preamble symbols the network sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputScheme {
    /// Symbols 1-2.
    FirstTwo,
    /// Symbols 3-8 concatenated.
    LastSix,
    /// Element-wise mean of symbols 3-8.
    StackedSix,
    /// All eight symbols.
    All,
    /// Symbols 1-2 followed by the mean of 3-8.
    PartialStack,
}

impl InputScheme {
    pub const ALL: [InputScheme; 5] =
        [InputScheme::FirstTwo, InputScheme::LastSix, InputScheme::StackedSix, InputScheme::All, InputScheme::PartialStack];

    pub fn layout(self) -> Layout {
        match self {
            InputScheme::FirstTwo => Layout::TwoSym,
            InputScheme::LastSix => Layout::SixSym,
            InputScheme::StackedSix => Layout::OneSym,
            InputScheme::All => Layout::EightSym,
            InputScheme::PartialStack => Layout::ThreeSym,
        }
    }

    pub fn from_layout(layout: Layout) -> Self {
        Self::ALL.into_iter().find(|s| s.layout() == layout).expect("every layout has a scheme")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "CNN_2")]
    Cnn2,
    #[serde(rename = "CDAE_2")]
    Cdae2,
    #[serde(rename = "CNN_6")]
    Cnn6,
    #[serde(rename = "CDAE_6")]
    Cdae6,
    #[serde(rename = "SCNN_6")]
    Scnn6,
    #[serde(rename = "SCDAE_6")]
    Scdae6,
    #[serde(rename = "CNN_8")]
    Cnn8,
    #[serde(rename = "CDAE_8")]
    Cdae8,
    #[serde(rename = "PSCNN")]
    Pscnn,
    #[serde(rename = "PSCDAE")]
    Pscdae,
}

impl Variant {
    pub const ALL: [Variant; 10] = [
        Variant::Cnn2,
        Variant::Cdae2,
        Variant::Cnn6,
        Variant::Cdae6,
        Variant::Scnn6,
        Variant::Scdae6,
        Variant::Cnn8,
        Variant::Cdae8,
        Variant::Pscnn,
        Variant::Pscdae,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Cnn2 => "CNN_2",
            Variant::Cdae2 => "CDAE_2",
            Variant::Cnn6 => "CNN_6",
            Variant::Cdae6 => "CDAE_6",
            Variant::Scnn6 => "SCNN_6",
            Variant::Scdae6 => "SCDAE_6",
            Variant::Cnn8 => "CNN_8",
            Variant::Cdae8 => "CDAE_8",
            Variant::Pscnn => "PSCNN",
            Variant::Pscdae => "PSCDAE",
        }
    }

    pub fn input(self) -> InputScheme {
        match self {
            Variant::Cnn2 | Variant::Cdae2 => InputScheme::FirstTwo,
            Variant::Cnn6 | Variant::Cdae6 => InputScheme::LastSix,
            Variant::Scnn6 | Variant::Scdae6 => InputScheme::StackedSix,
            Variant::Cnn8 | Variant::Cdae8 => InputScheme::All,
            Variant::Pscnn | Variant::Pscdae => InputScheme::PartialStack,
        }
    }

    pub fn layout(self) -> Layout {
        self.input().layout()
    }

    /// CDAE variants train the reconstruction branch; CNN variants drop it.
    pub fn has_decoder(self) -> bool {
        matches!(self, Variant::Cdae2 | Variant::Cdae6 | Variant::Scdae6 | Variant::Cdae8 | Variant::Pscdae)
    }

    /// Effective loss weights: CNN variants force `lambda1 = 0`.
    pub fn loss_weights(self, base: LossWeights) -> LossWeights {
        if self.has_decoder() {
            base
        } else {
            LossWeights::cnn(base.lambda2)
        }
    }

    pub fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(|v| v.name()).collect()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant `{s}`; valid variants: {}", Self::names().join(", "))))
    }
}

/// Layer widths and regularization shared by every variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkWidths {
    pub filters: usize,
    pub dense_units: usize,
    pub dropout: f64,
    pub l2_dense: f64,
}

impl NetworkWidths {
    /// 128 filters, 1024 hidden units.
    pub fn full_width() -> Self {
        Self { filters: 128, dense_units: 1024, dropout: 0.5, l2_dense: 0.001 }
    }
}

impl Default for NetworkWidths {
    /// Narrow enough to run the full grid on one CPU core.
    fn default() -> Self {
        Self { filters: 8, dense_units: 256, ..Self::full_width() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub variant: Variant,
    pub frames_per_device_per_snr: usize,
    /// Zero padding on each side of a capture; the preamble lands at a
    /// random offset in `0..=2 * guard_samples`.
    pub guard_samples: usize,
    pub folds: usize,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub loss_weights: LossWeights,
    pub adam: AdamConfig,
    pub network: NetworkWidths,
    pub phy: PhyConfig,
    pub sync: SyncConfig,
    pub snr_grid: SnrGrid,
    pub population: PopulationSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            variant: Variant::Pscdae,
            frames_per_device_per_snr: 60,
            guard_samples: 64,
            folds: 5,
            train_fraction: 0.6,
            validation_fraction: 0.2,
            batch_size: 64,
            patience: 10,
            max_epochs: 200,
            loss_weights: LossWeights::default(),
            adam: AdamConfig::default(),
            network: NetworkWidths::default(),
            phy: PhyConfig::default(),
            sync: SyncConfig::default(),
            snr_grid: SnrGrid::default(),
            population: PopulationSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        self.phy.validate()?;
        self.population.validate()?;
        self.snr_grid.validate()?;
        if self.frames_per_device_per_snr == 0 {
            return bad("frames_per_device_per_snr must be positive");
        }
        if self.folds == 0 {
            return bad("folds must be positive");
        }
        let (t, v) = (self.train_fraction, self.validation_fraction);
        if !(t > 0.0 && v > 0.0 && t + v < 1.0) {
            return bad("train_fraction and validation_fraction must be positive and sum below 1");
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return bad("batch_size, patience and max_epochs must be positive");
        }
        let w = self.loss_weights;
        if !(w.lambda1 >= 0.0 && w.lambda2 >= 0.0) {
            return bad("loss weights must be nonnegative");
        }
        if !(self.adam.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        self.network_spec(self.variant).validate()
    }

    /// Network for one variant at the configured widths.
    pub fn network_spec(&self, variant: Variant) -> NetworkSpec {
        let layout = variant.layout();
        let rows = layout.rows(self.phy.samples_per_symbol);
        let w = self.network;
        NetworkSpec {
            input_rows: rows,
            n_classes: self.population.n_devices,
            filters: w.filters,
            dense_units: w.dense_units,
            pool: if layout.symbols() >= 6 { 4 } else { 2 },
            dropout: w.dropout,
            l2_dense: w.l2_dense,
            decoder: variant.has_decoder(),
        }
    }
}
