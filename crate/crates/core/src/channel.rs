//! AWGN corruption at a target SNR.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::phy::{mean_power, ComplexWaveform, Origin};
use crate::{Error, Result};

/// Ordered SNR operating points in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnrGrid {
    pub points_db: Vec<f64>,
}

impl Default for SnrGrid {
    fn default() -> Self {
        Self::range(-10.0, 30.0, 5.0).expect("default grid is valid")
    }
}

impl SnrGrid {
    pub fn new(points_db: Vec<f64>) -> Result<Self> {
        let grid = Self { points_db };
        grid.validate()?;
        Ok(grid)
    }

    /// Inclusive arithmetic progression `start, start + step, ..., stop`.
    pub fn range(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || stop < start {
            return Err(Error::InvalidConfig(format!("bad SNR range {start}:{stop}:{step}")));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
        Self::new((0..n).map(|i| start + step * i as f64).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.points_db.is_empty() {
            return Err(Error::InvalidConfig("SNR grid is empty".into()));
        }
        if self.points_db.iter().any(|p| p.is_nan()) {
            return Err(Error::InvalidConfig("SNR grid contains NaN".into()));
        }
        if self.points_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("SNR grid must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points_db.is_empty()
    }
}

/// Add circularly symmetric Gaussian noise with total variance
/// `P / 10^(snr_db / 10)`, where `P` is the mean power of `w`.
///
/// `snr_db = +inf` is the noiseless limit and returns the input unchanged.
pub fn awgn<R: Rng>(w: &ComplexWaveform, snr_db: f64, rng: &mut R) -> ComplexWaveform {
    awgn_with_reference(w, snr_db, w.power(), rng)
}

/// As [`awgn`], but with the signal power supplied by the caller. Used when the
/// waveform carries guard padding that must not dilute the reference power.
pub fn awgn_with_reference<R: Rng>(
    w: &ComplexWaveform,
    snr_db: f64,
    signal_power: f64,
    rng: &mut R,
) -> ComplexWaveform {
    let mut out = w.clone().with_origin(Origin::Corrupted);
    if snr_db == f64::INFINITY {
        return out;
    }
    let sigma = noise_sigma_per_component(signal_power, snr_db);
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and nonnegative");
    for s in &mut out.samples {
        let re = normal.sample(rng);
        let im = normal.sample(rng);
        *s += Complex64::new(re, im);
    }
    out
}

/// Standard deviation of each of the real and imaginary noise components.
pub fn noise_sigma_per_component(signal_power: f64, snr_db: f64) -> f64 {
    (signal_power / 10f64.powf(snr_db / 10.0) / 2.0).sqrt()
}

/// `10 log10(P_signal / P_noise)` where the noise is `noisy - clean`.
/// Returns `+inf` when the two waveforms coincide.
pub fn measure_snr(clean: &ComplexWaveform, noisy: &ComplexWaveform) -> Result<f64> {
    if clean.len() != noisy.len() {
        return Err(Error::LengthMismatch { expected: clean.len(), actual: noisy.len() });
    }
    let noise: Vec<Complex64> = noisy.samples.iter().zip(&clean.samples).map(|(n, c)| n - c).collect();
    let pn = mean_power(&noise);
    if pn == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (clean.power() / pn).log10())
}
