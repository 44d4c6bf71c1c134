use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{ExperimentConfig, InputScheme};
use crate::channel::awgn_with_reference;
use crate::dsp::{self, Layout, NormStats, PreambleTensor};
use crate::impair::{apply_rff, sample_population, DeviceProfile};
use crate::phy::{modulate_preamble, PREAMBLE_SYMBOLS};
use crate::{rng, Error, Result};

/// A frame rejected by the synchronizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedFrame {
    pub device: usize,
    pub snr_db: f64,
    pub frame: usize,
    /// `clean` or `noisy`.
    pub copy: String,
    pub metric: f64,
}

/// Synchronized eight-symbol frames before stacking and normalization,
/// stored in single precision exactly as written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples_per_symbol: usize,
    pub n_classes: usize,
    /// `[N][8 * sps][2]`, corrupted copies.
    pub noisy: Vec<f32>,
    /// `[N][8 * sps][2]`, channel-noise-free copies.
    pub clean: Vec<f32>,
    pub labels: Vec<u32>,
    pub snr_db: Vec<f32>,
    pub profiles: Vec<DeviceProfile>,
    pub frames_per_device: Vec<usize>,
    pub dropped: Vec<DroppedFrame>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn frame_dims(&self) -> usize {
        PREAMBLE_SYMBOLS * self.samples_per_symbol * 2
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = (self.len(), self.frame_dims());
        for (what, len) in [("noisy", self.noisy.len()), ("clean", self.clean.len())] {
            if len != n * d {
                return Err(Error::ShapeMismatch(format!("{what} holds {len} values, expected {n} x {d}")));
            }
        }
        if self.snr_db.len() != n {
            return Err(Error::LengthMismatch { expected: n, actual: self.snr_db.len() });
        }
        if let Some(&y) = self.labels.iter().find(|&&y| y as usize >= self.n_classes) {
            return Err(Error::ShapeMismatch(format!("label {y} with {} classes", self.n_classes)));
        }
        Ok(())
    }

    /// Distinct SNR values in ascending order.
    pub fn snr_points(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.snr_db.iter().map(|&s| s as f64).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

fn to_f32(samples: &[Complex64], out: &mut Vec<f32>) {
    out.extend(samples.iter().flat_map(|s| [s.re as f32, s.im as f32]));
}

/// Synthesize every device x SNR x frame capture, synchronize the clean and
/// corrupted copies, and keep the frames where both copies synchronize.
pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    cfg.phy.validate()?;
    cfg.snr_grid.validate()?;
    let phy = &cfg.phy;
    let profiles = sample_population(&cfg.population)?;
    let ideal = modulate_preamble(phy)?;
    let mut ds = Dataset {
        samples_per_symbol: phy.samples_per_symbol,
        n_classes: profiles.len(),
        noisy: Vec::new(),
        clean: Vec::new(),
        labels: Vec::new(),
        snr_db: Vec::new(),
        frames_per_device: vec![0; profiles.len()],
        dropped: Vec::new(),
        profiles: Vec::new(),
    };
    for (d, profile) in profiles.iter().enumerate() {
        let impaired = apply_rff(profile, phy, &ideal)?;
        let power = impaired.power();
        for (s, &snr) in cfg.snr_grid.points_db.iter().enumerate() {
            for f in 0..cfg.frames_per_device_per_snr {
                let mut g = rng::stream(cfg.seed, &[rng::tag("frame"), d as u64, s as u64, f as u64]);
                let delay = g.random_range(0..=2 * cfg.guard_samples);
                let phase = g.random_range(-PI..PI);
                let cap = dsp::capture(&impaired, cfg.guard_samples, delay, phase);
                let noisy_cap = awgn_with_reference(&cap, snr, power, &mut g);
                let mut drop = |copy: &str, e: Error| match e {
                    Error::SyncFailed { metric, .. } => {
                        ds.dropped.push(DroppedFrame { device: d, snr_db: snr, frame: f, copy: copy.into(), metric });
                        Ok(())
                    }
                    e => Err(e),
                };
                let clean = match dsp::synchronize(&cap, &ideal, phy, &cfg.sync) {
                    Ok(r) => r,
                    Err(e) => {
                        drop("clean", e)?;
                        continue;
                    }
                };
                let noisy = match dsp::synchronize(&noisy_cap, &ideal, phy, &cfg.sync) {
                    Ok(r) => r,
                    Err(e) => {
                        drop("noisy", e)?;
                        continue;
                    }
                };
                to_f32(&noisy.waveform.samples, &mut ds.noisy);
                to_f32(&clean.waveform.samples, &mut ds.clean);
                ds.labels.push(d as u32);
                ds.snr_db.push(snr as f32);
                ds.frames_per_device[d] += 1;
            }
        }
    }
    ds.profiles = profiles;
    Ok(ds)
}

/// Network inputs of one scheme as flat `[N][dims]` rows, normalized with
/// statistics fitted on the noisy training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedInputs {
    pub layout: Layout,
    pub dims: usize,
    pub z: Vec<f64>,
    pub z_hat: Vec<f64>,
    pub stats: NormStats,
}

impl PreparedInputs {
    pub fn z_row(&self, i: usize) -> &[f64] {
        &self.z[i * self.dims..(i + 1) * self.dims]
    }

    pub fn z_hat_row(&self, i: usize) -> &[f64] {
        &self.z_hat[i * self.dims..(i + 1) * self.dims]
    }
}

fn segments(frame: &[f32], sps: usize) -> Vec<PreambleTensor> {
    frame
        .chunks_exact(2 * sps)
        .map(|c| PreambleTensor { rows: sps, data: c.iter().map(|&v| v as f64).collect(), layout: Layout::OneSym })
        .collect()
}

fn build(scheme: InputScheme, segs: &[PreambleTensor]) -> Result<PreambleTensor> {
    match scheme {
        InputScheme::FirstTwo => dsp::select_symbols(segs, 1..=2),
        InputScheme::LastSix => dsp::select_symbols(segs, 3..=8),
        InputScheme::StackedSix => dsp::stack_all(segs, 3),
        InputScheme::All => dsp::select_symbols(segs, 1..=8),
        InputScheme::PartialStack => dsp::partial_stack(segs),
    }
}

/// Raw (unnormalized) scheme rows for the noisy and clean copies.
pub fn scheme_rows(ds: &Dataset, scheme: InputScheme) -> Result<(usize, Vec<f64>, Vec<f64>)> {
    ds.validate()?;
    let sps = ds.samples_per_symbol;
    let dims = scheme.layout().rows(sps) * 2;
    let fd = ds.frame_dims();
    let (mut noisy, mut clean) = (Vec::with_capacity(ds.len() * dims), Vec::with_capacity(ds.len() * dims));
    for i in 0..ds.len() {
        noisy.extend(build(scheme, &segments(&ds.noisy[i * fd..(i + 1) * fd], sps))?.data);
        clean.extend(build(scheme, &segments(&ds.clean[i * fd..(i + 1) * fd], sps))?.data);
    }
    Ok((dims, noisy, clean))
}

/// Stack, fit min-max statistics on `train` (noisy rows) and normalize both
/// copies with them.
pub fn prepare_inputs(ds: &Dataset, scheme: InputScheme, train: &[usize]) -> Result<PreparedInputs> {
    let (dims, noisy, clean) = scheme_rows(ds, scheme)?;
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let stats = NormStats::fit_rows(train.iter().map(|&i| &noisy[i * dims..(i + 1) * dims]))?;
    normalize(scheme.layout(), dims, noisy, clean, stats)
}

/// Same as [`prepare_inputs`] with previously fitted statistics.
pub fn prepare_with_stats(ds: &Dataset, scheme: InputScheme, stats: NormStats) -> Result<PreparedInputs> {
    let (dims, noisy, clean) = scheme_rows(ds, scheme)?;
    if stats.dims() != dims {
        return Err(Error::ShapeMismatch(format!("statistics cover {} dims, inputs have {dims}", stats.dims())));
    }
    normalize(scheme.layout(), dims, noisy, clean, stats)
}

fn normalize(layout: Layout, dims: usize, mut z: Vec<f64>, mut z_hat: Vec<f64>, stats: NormStats) -> Result<PreparedInputs> {
    let mut buf = vec![0.0; dims];
    for rows in [&mut z, &mut z_hat] {
        for row in rows.chunks_exact_mut(dims) {
            stats.normalize_into(row, &mut buf);
            row.copy_from_slice(&buf);
        }
    }
    Ok(PreparedInputs { layout, dims, z, z_hat, stats })
}
