//! Workbench for radio-frequency fingerprint identification of ZigBee
//! transmitters from their preamble.
//!
//! The pipeline runs end to end in memory:
//!
//! * [`phy`] synthesizes the ideal eight-symbol O-QPSK preamble,
//! * [`impair`] applies a per-device hardware fingerprint,
//! * [`channel`] corrupts the signal with AWGN,
//! * [`dsp`] synchronizes, slices, stacks and normalizes it,
//! * [`nn`] holds the convolutional denoising autoencoder with its classifier head,
//! * [`exp`] generates datasets, trains the ablation variants and reports metrics.

pub mod channel;
pub mod dsp;
pub mod error;
pub mod exp;
pub mod impair;
pub mod nn;
pub mod phy;
pub mod rng;

pub use error::{Error, Result};
