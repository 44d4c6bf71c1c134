//! Ideal IEEE 802.15.4 (2.4 GHz) preamble synthesis: 32-chip DSSS spreading
//! followed by O-QPSK with half-sine chip shaping.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::{Error, Result};

pub const CHIPS_PER_SYMBOL: usize = 32;
pub const PREAMBLE_SYMBOLS: usize = 8;

/// Chip sequence of data symbol 0, chip c0 first.
const SYMBOL0_CHIPS: u32 = 0b1101_1001_1100_0011_0101_0010_0010_1110;

/// The 32-chip pseudo-noise sequence spreading one 4-bit data symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChipSequence([u8; CHIPS_PER_SYMBOL]);

impl ChipSequence {
    pub fn chips(&self) -> &[u8; CHIPS_PER_SYMBOL] {
        &self.0
    }

    /// Antipodal chip value, `0 -> -1`, `1 -> +1`.
    pub fn bipolar(&self, index: usize) -> f64 {
        if self.0[index] == 1 {
            1.0
        } else {
            -1.0
        }
    }
}

/// Standard chip table lookup.
///
/// Symbols 1..=7 are cyclic right shifts of symbol 0 by four chips per step;
/// symbols 8..=15 repeat 0..=7 with every odd-indexed chip inverted.
pub fn chips_for_symbol(symbol: u8) -> Result<ChipSequence> {
    if symbol > 15 {
        return Err(Error::SymbolOutOfRange(symbol));
    }
    let base = symbol as usize & 0x7;
    let mut chips = [0u8; CHIPS_PER_SYMBOL];
    for (i, chip) in chips.iter_mut().enumerate() {
        // chip i of the shifted sequence is chip (i - 4*base) mod 32 of symbol 0
        let src = (i + CHIPS_PER_SYMBOL - 4 * base) % CHIPS_PER_SYMBOL;
        let mut c = ((SYMBOL0_CHIPS >> (CHIPS_PER_SYMBOL - 1 - src)) & 1) as u8;
        if symbol >= 8 && i % 2 == 1 {
            c ^= 1;
        }
        *chip = c;
    }
    Ok(ChipSequence(chips))
}

/// Where a waveform sits in the processing chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Ideal,
    Impaired,
    Corrupted,
}

/// Complex baseband samples at a known sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexWaveform {
    pub samples: Vec<Complex64>,
    pub sample_rate_hz: f64,
    pub origin: Origin,
}

impl ComplexWaveform {
    pub fn new(samples: Vec<Complex64>, sample_rate_hz: f64, origin: Origin) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidConfig("waveform must hold at least one sample".into()));
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(Self { samples, sample_rate_hz, origin })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean of `|x|^2` over all samples.
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = origin;
        self
    }
}

pub fn mean_power(samples: &[Complex64]) -> f64 {
    samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhyConfig {
    pub samples_per_symbol: usize,
    pub symbols_in_preamble: usize,
    /// Aggregate chip rate over both branches.
    pub chip_rate_hz: f64,
}

impl Default for PhyConfig {
    fn default() -> Self {
        Self { samples_per_symbol: 160, symbols_in_preamble: PREAMBLE_SYMBOLS, chip_rate_hz: 2.0e6 }
    }
}

impl PhyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_symbol == 0 || self.samples_per_symbol % CHIPS_PER_SYMBOL != 0 {
            return Err(Error::InvalidConfig(format!(
                "samples_per_symbol must be a positive multiple of {CHIPS_PER_SYMBOL} so half-sine pulses tile exactly, got {}",
                self.samples_per_symbol
            )));
        }
        if self.symbols_in_preamble != PREAMBLE_SYMBOLS {
            return Err(Error::InvalidConfig(format!(
                "symbols_in_preamble must be {PREAMBLE_SYMBOLS}, got {}",
                self.symbols_in_preamble
            )));
        }
        if !(self.chip_rate_hz > 0.0 && self.chip_rate_hz.is_finite()) {
            return Err(Error::InvalidConfig("chip_rate_hz must be positive".into()));
        }
        Ok(())
    }

    pub fn samples_per_chip(&self) -> usize {
        self.samples_per_symbol / CHIPS_PER_SYMBOL
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.chip_rate_hz * self.samples_per_chip() as f64
    }

    pub fn symbol_rate_hz(&self) -> f64 {
        self.chip_rate_hz / CHIPS_PER_SYMBOL as f64
    }

    pub fn preamble_len(&self) -> usize {
        self.samples_per_symbol * self.symbols_in_preamble
    }
}

/// Modulate the eight 0x0 preamble symbols.
///
/// Even chips drive I and odd chips drive Q. Each chip is a half-sine pulse
/// two chip periods long; Q pulses are delayed by one chip period and the part
/// of the last Q pulse that falls beyond the preamble is dropped. The result is
/// scaled to unit mean power over the whole preamble.
pub fn modulate_preamble(cfg: &PhyConfig) -> Result<ComplexWaveform> {
    cfg.validate()?;
    let chips = chips_for_symbol(0)?;
    let spc = cfg.samples_per_chip();
    let pulse_len = 2 * spc;
    let n = cfg.preamble_len();
    let pulse: Vec<f64> = (0..pulse_len).map(|k| (PI * k as f64 / pulse_len as f64).sin()).collect();

    let mut samples = vec![Complex64::new(0.0, 0.0); n];
    let total_chips = CHIPS_PER_SYMBOL * cfg.symbols_in_preamble;
    for c in 0..total_chips {
        let value = chips.bipolar(c % CHIPS_PER_SYMBOL);
        // I pulse 2m starts at 2m*Tc; Q pulse 2m+1 starts at (2m+1)*Tc.
        let start = c * spc;
        for (k, p) in pulse.iter().enumerate() {
            let idx = start + k;
            if idx >= n {
                break;
            }
            if c % 2 == 0 {
                samples[idx].re += value * p;
            } else {
                samples[idx].im += value * p;
            }
        }
    }
    let scale = 1.0 / mean_power(&samples).sqrt();
    for s in &mut samples {
        *s *= scale;
    }
    ComplexWaveform::new(samples, cfg.sample_rate_hz(), Origin::Ideal)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbol_out_of_range_rejected() {
        assert!(matches!(chips_for_symbol(16), Err(Error::SymbolOutOfRange(16))));
    }

    #[test]
    fn every_symbol_has_32_chips_and_is_deterministic() {
        for s in 0..16 {
            let a = chips_for_symbol(s).unwrap();
            assert_eq!(a.chips().len(), 32);
            assert!(a.chips().iter().all(|&c| c <= 1));
            assert_eq!(a, chips_for_symbol(s).unwrap());
        }
    }

    #[test]
    fn default_preamble_has_1280_samples_at_10_msps() {
        let w = modulate_preamble(&PhyConfig::default()).unwrap();
        assert_eq!(w.len(), 1280);
        assert_eq!(w.sample_rate_hz, 10.0e6);
        assert_eq!(w.origin, Origin::Ideal);
        assert!((w.power() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn envelope_is_constant_after_first_chip() {
        let cfg = PhyConfig::default();
        let w = modulate_preamble(&cfg).unwrap();
        let reference = w.samples[cfg.samples_per_chip()].norm();
        for s in &w.samples[cfg.samples_per_chip()..] {
            assert!((s.norm() - reference).abs() < 1e-9);
        }
        // the only deficit is the Q branch warming up
        assert!(w.samples[1].norm() < reference);
    }

    #[test]
    fn symbols_two_through_eight_repeat() {
        let cfg = PhyConfig::default();
        let w = modulate_preamble(&cfg).unwrap();
        let sps = cfg.samples_per_symbol;
        for k in 1..7 {
            assert_eq!(w.samples[k * sps..(k + 1) * sps], w.samples[(k + 1) * sps..(k + 2) * sps]);
        }
        assert_ne!(w.samples[..sps], w.samples[sps..2 * sps]);
    }

    #[test]
    fn bad_oversampling_rejected() {
        let cfg = PhyConfig { samples_per_symbol: 100, ..PhyConfig::default() };
        assert!(modulate_preamble(&cfg).is_err());
        let cfg = PhyConfig { samples_per_symbol: 64, ..PhyConfig::default() };
        assert_eq!(modulate_preamble(&cfg).unwrap().len(), 512);
    }
}
