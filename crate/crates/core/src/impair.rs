//! Synthetic transmitter fingerprints.
//!
//! Each [`DeviceProfile`] stands in for one physical radio. The transmit chain
//! is IQ imbalance, DC offset, odd-order PA compression, a settling transient
//! confined to the first two preamble symbols, a tiny per-symbol gain jitter and
//! a residual carrier offset.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::phy::{ComplexWaveform, Origin, PhyConfig};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub device_id: String,
    pub iq_gain_imbalance_db: f64,
    pub iq_phase_imbalance_rad: f64,
    pub dc_offset_i: f64,
    pub dc_offset_q: f64,
    pub residual_cfo_hz: f64,
    pub pa_gain_a1: f64,
    pub pa_nonlin_a3: f64,
    /// Settling time constant of the power-up transient, in samples. Zero
    /// disables the transient.
    pub transient_tau_samples: f64,
    /// Phase offset at power-up that settles to zero by the end of symbol two.
    pub transient_phase_drift_rad: f64,
    pub steady_jitter_sigma: f64,
    /// Seed of the per-symbol jitter pattern, fixed for the device.
    pub jitter_seed: u64,
}

impl DeviceProfile {
    /// A transmitter without any impairment.
    pub fn identity(device_id: impl Into<String>) -> Self {
        Self {
            device_id: device_id.into(),
            iq_gain_imbalance_db: 0.0,
            iq_phase_imbalance_rad: 0.0,
            dc_offset_i: 0.0,
            dc_offset_q: 0.0,
            residual_cfo_hz: 0.0,
            pa_gain_a1: 1.0,
            pa_nonlin_a3: 0.0,
            transient_tau_samples: 0.0,
            transient_phase_drift_rad: 0.0,
            steady_jitter_sigma: 0.0,
            jitter_seed: 0,
        }
    }

    fn parameter_vector(&self) -> [f64; 11] {
        [
            self.iq_gain_imbalance_db,
            self.iq_phase_imbalance_rad,
            self.dc_offset_i,
            self.dc_offset_q,
            self.residual_cfo_hz,
            self.pa_gain_a1,
            self.pa_nonlin_a3,
            self.transient_tau_samples,
            self.transient_phase_drift_rad,
            self.steady_jitter_sigma,
            self.jitter_seed as f64,
        ]
    }

    /// Complex gain applied to each preamble symbol by the jitter term.
    pub fn symbol_jitter(&self, n_symbols: usize) -> Vec<Complex64> {
        (0..n_symbols)
            .map(|k| {
                if self.steady_jitter_sigma == 0.0 {
                    return Complex64::new(1.0, 0.0);
                }
                let mut r = rng::stream(self.jitter_seed, &[k as u64]);
                let a: f64 = r.sample(StandardNormal);
                let b: f64 = r.sample(StandardNormal);
                Complex64::new(1.0 + self.steady_jitter_sigma * a, self.steady_jitter_sigma * b)
            })
            .collect()
    }
}

/// Normalized settling curve: 1 at power-up, decays with time constant `tau`
/// and reaches exactly 0 at `end`, staying 0 afterwards.
fn settling(n: usize, tau: f64, end: usize) -> f64 {
    if tau == 0.0 || n >= end {
        return 0.0;
    }
    let floor = (-(end as f64) / tau).exp();
    ((-(n as f64) / tau).exp() - floor) / (1.0 - floor)
}

/// Apply the device fingerprint to an ideal preamble.
///
/// `out = env(n) * jitter(k) * PA(IQ(w) + dc) * exp(j(2 pi cfo n / fs + drift(n)))`
pub fn apply_rff(profile: &DeviceProfile, phy: &PhyConfig, w: &ComplexWaveform) -> Result<ComplexWaveform> {
    phy.validate()?;
    let sps = phy.samples_per_symbol;
    if w.len() != phy.preamble_len() {
        return Err(Error::LengthMismatch { expected: phy.preamble_len(), actual: w.len() });
    }
    let semi_steady = 2 * sps;
    let tau = profile.transient_tau_samples;
    if !(0.0..semi_steady as f64).contains(&tau) {
        return Err(Error::InvalidConfig(format!(
            "transient_tau_samples must lie in [0, {semi_steady}), got {tau}"
        )));
    }

    let gain = 10f64.powf(profile.iq_gain_imbalance_db / 20.0);
    let (sin_phi, cos_phi) = profile.iq_phase_imbalance_rad.sin_cos();
    let dc = Complex64::new(profile.dc_offset_i, profile.dc_offset_q);
    let jitter = profile.symbol_jitter(phy.symbols_in_preamble);
    let omega = 2.0 * PI * profile.residual_cfo_hz / w.sample_rate_hz;

    let samples = w
        .samples
        .iter()
        .enumerate()
        .map(|(n, x)| {
            let iq = Complex64::new(x.re, gain * (x.im * cos_phi + x.re * sin_phi)) + dc;
            let pa = iq * profile.pa_gain_a1 + iq * (profile.pa_nonlin_a3 * iq.norm_sqr());
            let s = settling(n, tau, semi_steady);
            let envelope = 1.0 - s;
            let phase = omega * n as f64 + profile.transient_phase_drift_rad * s;
            pa * jitter[n / sps] * envelope * Complex64::from_polar(1.0, phase)
        })
        .collect();
    ComplexWaveform::new(samples, w.sample_rate_hz, Origin::Impaired)
}

/// Closed interval a parameter is drawn from uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        self.min + (self.max - self.min) * rng.random::<f64>()
    }

    fn is_degenerate(&self) -> bool {
        self.min == self.max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParameterRanges {
    pub iq_gain_imbalance_db: Range,
    pub iq_phase_imbalance_rad: Range,
    pub dc_offset_i: Range,
    pub dc_offset_q: Range,
    pub residual_cfo_hz: Range,
    pub pa_gain_a1: Range,
    pub pa_nonlin_a3: Range,
    pub transient_tau_samples: Range,
    pub transient_phase_drift_rad: Range,
    pub steady_jitter_sigma: Range,
}

impl Default for ParameterRanges {
    fn default() -> Self {
        Self {
            iq_gain_imbalance_db: Range::new(-0.5, 0.5),
            iq_phase_imbalance_rad: Range::new(-0.05, 0.05),
            dc_offset_i: Range::new(-0.03, 0.03),
            dc_offset_q: Range::new(-0.03, 0.03),
            residual_cfo_hz: Range::new(-5.0, 5.0),
            pa_gain_a1: Range::new(0.95, 1.05),
            pa_nonlin_a3: Range::new(-0.1, 0.0),
            transient_tau_samples: Range::new(120.0, 300.0),
            transient_phase_drift_rad: Range::new(-0.6, 0.6),
            steady_jitter_sigma: Range::new(0.0005, 0.002),
        }
    }
}

impl ParameterRanges {
    fn all(&self) -> [(&'static str, Range); 10] {
        [
            ("iq_gain_imbalance_db", self.iq_gain_imbalance_db),
            ("iq_phase_imbalance_rad", self.iq_phase_imbalance_rad),
            ("dc_offset_i", self.dc_offset_i),
            ("dc_offset_q", self.dc_offset_q),
            ("residual_cfo_hz", self.residual_cfo_hz),
            ("pa_gain_a1", self.pa_gain_a1),
            ("pa_nonlin_a3", self.pa_nonlin_a3),
            ("transient_tau_samples", self.transient_tau_samples),
            ("transient_phase_drift_rad", self.transient_phase_drift_rad),
            ("steady_jitter_sigma", self.steady_jitter_sigma),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopulationSpec {
    pub n_devices: usize,
    pub seed: u64,
    pub ranges: ParameterRanges,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self { n_devices: 8, seed: 2020, ranges: ParameterRanges::default() }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_devices < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_devices must be at least 2, got {}",
                self.n_devices
            )));
        }
        let ranges = self.ranges.all();
        for (name, r) in &ranges {
            if !(r.min.is_finite() && r.max.is_finite()) || r.min > r.max {
                return Err(Error::InvalidConfig(format!(
                    "range for {name} must satisfy min <= max, got [{}, {}]",
                    r.min, r.max
                )));
            }
        }
        if ranges.iter().all(|(_, r)| r.is_degenerate()) {
            return Err(Error::DegenerateRanges);
        }
        let tau = self.ranges.transient_tau_samples;
        if tau.min < 0.0 {
            return Err(Error::InvalidConfig("transient_tau_samples must be nonnegative".into()));
        }
        if self.ranges.steady_jitter_sigma.min < 0.0 {
            return Err(Error::InvalidConfig("steady_jitter_sigma must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Draw `n_devices` profiles; deterministic in `spec.seed`.
pub fn sample_population(spec: &PopulationSpec) -> Result<Vec<DeviceProfile>> {
    spec.validate()?;
    let r = &spec.ranges;
    let profiles: Vec<DeviceProfile> = (0..spec.n_devices)
        .map(|i| {
            let mut g = rng::stream(spec.seed, &[rng::tag("device"), i as u64]);
            DeviceProfile {
                device_id: format!("dev{i:02}"),
                iq_gain_imbalance_db: r.iq_gain_imbalance_db.sample(&mut g),
                iq_phase_imbalance_rad: r.iq_phase_imbalance_rad.sample(&mut g),
                dc_offset_i: r.dc_offset_i.sample(&mut g),
                dc_offset_q: r.dc_offset_q.sample(&mut g),
                residual_cfo_hz: r.residual_cfo_hz.sample(&mut g),
                pa_gain_a1: r.pa_gain_a1.sample(&mut g),
                pa_nonlin_a3: r.pa_nonlin_a3.sample(&mut g),
                transient_tau_samples: r.transient_tau_samples.sample(&mut g),
                transient_phase_drift_rad: r.transient_phase_drift_rad.sample(&mut g),
                steady_jitter_sigma: r.steady_jitter_sigma.sample(&mut g),
                jitter_seed: g.random(),
            }
        })
        .collect();
    for i in 0..profiles.len() {
        for j in i + 1..profiles.len() {
            if profiles[i].parameter_vector()[..10] == profiles[j].parameter_vector()[..10] {
                return Err(Error::DuplicateProfiles(i, j));
            }
        }
    }
    Ok(profiles)
}

/// Euclidean distance between two parameter vectors (jitter seed excluded).
pub fn parameter_distance(a: &DeviceProfile, b: &DeviceProfile) -> f64 {
    let (va, vb) = (a.parameter_vector(), b.parameter_vector());
    va[..10].iter().zip(&vb[..10]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// `||a - b||` relative to the mean norm of the two segments.
pub fn relative_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    diff / (0.5 * (na + nb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::modulate_preamble;

    fn ideal() -> (PhyConfig, ComplexWaveform) {
        let cfg = PhyConfig::default();
        let w = modulate_preamble(&cfg).unwrap();
        (cfg, w)
    }

    fn symbol(w: &ComplexWaveform, k: usize) -> &[Complex64] {
        &w.samples[(k - 1) * 160..k * 160]
    }

    #[test]
    fn identity_profile_is_exact_identity() {
        let (cfg, w) = ideal();
        let out = apply_rff(&DeviceProfile::identity("id"), &cfg, &w).unwrap();
        assert_eq!(out.samples, w.samples);
        assert_eq!(out.sample_rate_hz, w.sample_rate_hz);
        assert_eq!(out.origin, Origin::Impaired);
    }

    #[test]
    fn pure_cfo_preserves_magnitude() {
        let (cfg, w) = ideal();
        let p = DeviceProfile { residual_cfo_hz: 3_000.0, ..DeviceProfile::identity("cfo") };
        let out = apply_rff(&p, &cfg, &w).unwrap();
        for (a, b) in out.samples.iter().zip(&w.samples) {
            assert!((a.norm() - b.norm()).abs() < 1e-12);
        }
        assert!(relative_distance(&out.samples, &w.samples) > 0.1);
    }

    #[test]
    fn wrong_length_rejected() {
        let (cfg, mut w) = ideal();
        w.samples.truncate(1000);
        assert!(matches!(
            apply_rff(&DeviceProfile::identity("x"), &cfg, &w),
            Err(Error::LengthMismatch { expected: 1280, actual: 1000 })
        ));
    }

    #[test]
    fn transient_must_fit_semi_steady_region() {
        let (cfg, w) = ideal();
        let p = DeviceProfile { transient_tau_samples: 320.0, ..DeviceProfile::identity("x") };
        assert!(apply_rff(&p, &cfg, &w).is_err());
    }

    #[test]
    fn default_population_symbol_structure() {
        let (cfg, w) = ideal();
        let spec = PopulationSpec { n_devices: 27, ..PopulationSpec::default() };
        for p in sample_population(&spec).unwrap() {
            let out = apply_rff(&p, &cfg, &w).unwrap();
            assert!(relative_distance(symbol(&out, 3), symbol(&out, 8)) < 0.01, "{}", p.device_id);
            for (i, j) in [(1, 2), (1, 3), (2, 3)] {
                let d = relative_distance(symbol(&out, i), symbol(&out, j));
                assert!(d > 0.05, "{} sym{i} vs sym{j}: {d}", p.device_id);
            }
            let steady_max = (3..=8)
                .flat_map(|i| (i + 1..=8).map(move |j| (i, j)))
                .map(|(i, j)| relative_distance(symbol(&out, i), symbol(&out, j)))
                .fold(0.0, f64::max);
            let cross_min = (1..=2)
                .flat_map(|i| (3..=8).map(move |j| (i, j)))
                .map(|(i, j)| relative_distance(symbol(&out, i), symbol(&out, j)))
                .fold(f64::INFINITY, f64::min);
            assert!(steady_max <= 10.0 * cross_min);
        }
    }

    #[test]
    fn population_is_reproducible_and_distinct() {
        let spec = PopulationSpec { n_devices: 27, seed: 5, ..PopulationSpec::default() };
        let a = sample_population(&spec).unwrap();
        assert_eq!(a, sample_population(&spec).unwrap());
        assert_eq!(a.len(), 27);
        let two = PopulationSpec { n_devices: 2, seed: 9, ..PopulationSpec::default() };
        assert_eq!(sample_population(&two).unwrap(), sample_population(&two).unwrap());
        let eight = sample_population(&PopulationSpec::default()).unwrap();
        let min = (0..8)
            .flat_map(|i| (i + 1..8).map(move |j| (i, j)))
            .map(|(i, j)| parameter_distance(&eight[i], &eight[j]))
            .fold(f64::INFINITY, f64::min);
        assert!(min > 0.0);
    }

    #[test]
    fn degenerate_ranges_rejected() {
        let r = Range::new(1.0, 1.0);
        let ranges = ParameterRanges {
            iq_gain_imbalance_db: r,
            iq_phase_imbalance_rad: r,
            dc_offset_i: r,
            dc_offset_q: r,
            residual_cfo_hz: r,
            pa_gain_a1: r,
            pa_nonlin_a3: r,
            transient_tau_samples: r,
            transient_phase_drift_rad: r,
            steady_jitter_sigma: r,
        };
        let spec = PopulationSpec { n_devices: 3, seed: 1, ranges };
        assert!(matches!(sample_population(&spec), Err(Error::DegenerateRanges)));
        let one = PopulationSpec { n_devices: 1, ..PopulationSpec::default() };
        assert!(sample_population(&one).is_err());
    }
}
