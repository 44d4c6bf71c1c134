//! Receiver preprocessing: synchronization, symbol extraction, stacking and
//! min-max normalization.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::RangeInclusive;

use crate::phy::{ComplexWaveform, PhyConfig, PREAMBLE_SYMBOLS};
use crate::{Error, Result};

/// Number of preamble symbols a tensor spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    OneSym,
    TwoSym,
    ThreeSym,
    SixSym,
    EightSym,
}

impl Layout {
    pub const ALL: [Layout; 5] = [Layout::OneSym, Layout::TwoSym, Layout::ThreeSym, Layout::SixSym, Layout::EightSym];

    pub fn symbols(self) -> usize {
        match self {
            Layout::OneSym => 1,
            Layout::TwoSym => 2,
            Layout::ThreeSym => 3,
            Layout::SixSym => 6,
            Layout::EightSym => 8,
        }
    }

    pub fn from_symbols(n: usize) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.symbols() == n)
    }

    pub fn rows(self, samples_per_symbol: usize) -> usize {
        self.symbols() * samples_per_symbol
    }

    pub fn name(self) -> &'static str {
        match self {
            Layout::OneSym => "one_sym",
            Layout::TwoSym => "two_sym",
            Layout::ThreeSym => "three_sym",
            Layout::SixSym => "six_sym",
            Layout::EightSym => "eight_sym",
        }
    }
}

/// Real `rows x 2` matrix, row-major, column 0 = I and column 1 = Q.
#[derive(Debug, Clone, PartialEq)]
pub struct PreambleTensor {
    pub rows: usize,
    pub data: Vec<f64>,
    pub layout: Layout,
}

impl PreambleTensor {
    pub fn from_samples(samples: &[Complex64], layout: Layout) -> Self {
        let data = samples.iter().flat_map(|s| [s.re, s.im]).collect();
        Self { rows: samples.len(), data, layout }
    }

    pub fn dims(&self) -> usize {
        self.data.len()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self { data: self.data.iter().map(|x| alpha * x).collect(), ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyncConfig {
    /// Minimum normalized correlation for a detection.
    pub threshold: f64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self { threshold: 0.2 }
    }
}

#[derive(Debug, Clone)]
pub struct SyncResult {
    /// Exactly one preamble, timing aligned, CFO and phase removed.
    pub waveform: ComplexWaveform,
    pub offset: usize,
    pub cfo_hz: f64,
    pub phase_rad: f64,
    pub metric: f64,
}

/// Normalized non-coherent correlation of `w[lag..]` against the template,
/// accumulated per symbol so a residual CFO does not decorrelate the sum.
fn detection_metric(w: &[Complex64], template: &[Complex64], sps: usize) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (ws, ts) in w.chunks(sps).zip(template.chunks(sps)) {
        let c: Complex64 = ws.iter().zip(ts).map(|(a, b)| a * b.conj()).sum();
        num += c.norm();
        let ew: f64 = ws.iter().map(|a| a.norm_sqr()).sum();
        let et: f64 = ts.iter().map(|a| a.norm_sqr()).sum();
        den += (ew * et).sqrt();
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn lag_autocorrelation(seg: &[Complex64], start: usize, lag: usize) -> Complex64 {
    (start..seg.len() - lag).map(|n| seg[n + lag] * seg[n].conj()).sum()
}

fn derotate(seg: &[Complex64], cfo_hz: f64, phase: f64, fs: f64) -> Vec<Complex64> {
    let omega = 2.0 * PI * cfo_hz / fs;
    seg.iter()
        .enumerate()
        .map(|(n, s)| s * Complex64::from_polar(1.0, -(omega * n as f64 + phase)))
        .collect()
}

/// Locate the preamble in `w`, then remove carrier frequency and phase offset.
///
/// Timing is the lag maximizing the per-symbol correlation magnitude against
/// the ideal template. CFO comes from the lag-one-symbol autocorrelation over
/// the steady-state symbols, refined with a three-symbol lag. The remaining
/// constant phase is the argument of the correlation with the template.
pub fn synchronize(
    w: &ComplexWaveform,
    template: &ComplexWaveform,
    phy: &PhyConfig,
    cfg: &SyncConfig,
) -> Result<SyncResult> {
    let sps = phy.samples_per_symbol;
    let n_t = template.len();
    if n_t != phy.preamble_len() {
        return Err(Error::LengthMismatch { expected: phy.preamble_len(), actual: n_t });
    }
    if w.len() < n_t {
        return Err(Error::LengthMismatch { expected: n_t, actual: w.len() });
    }
    let (offset, metric) = (0..=w.len() - n_t)
        .map(|lag| (lag, detection_metric(&w.samples[lag..lag + n_t], &template.samples, sps)))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    if !(metric >= cfg.threshold) {
        return Err(Error::SyncFailed { metric, threshold: cfg.threshold });
    }
    let fs = w.sample_rate_hz;
    let seg = &w.samples[offset..offset + n_t];
    let steady_start = 2 * sps;

    let coarse = lag_autocorrelation(seg, steady_start, sps).arg() * fs / (2.0 * PI * sps as f64);
    let fine_lag = 3 * sps;
    let coarse_corrected = derotate(seg, coarse, 0.0, fs);
    let fine = lag_autocorrelation(&coarse_corrected, steady_start, fine_lag).arg() * fs
        / (2.0 * PI * fine_lag as f64);
    let cfo_hz = coarse + fine;

    let freq_corrected = derotate(seg, cfo_hz, 0.0, fs);
    let phase_rad = freq_corrected
        .iter()
        .zip(&template.samples)
        .map(|(a, b)| a * b.conj())
        .sum::<Complex64>()
        .arg();
    let samples = derotate(seg, cfo_hz, phase_rad, fs);
    Ok(SyncResult {
        waveform: ComplexWaveform::new(samples, fs, w.origin)?,
        offset,
        cfo_hz,
        phase_rad,
        metric,
    })
}

/// Split a synchronized preamble into its eight symbol segments.
pub fn extract_symbols(w: &ComplexWaveform, phy: &PhyConfig) -> Result<Vec<PreambleTensor>> {
    if w.len() != phy.preamble_len() {
        return Err(Error::LengthMismatch { expected: phy.preamble_len(), actual: w.len() });
    }
    Ok(w.samples
        .chunks(phy.samples_per_symbol)
        .map(|c| PreambleTensor::from_samples(c, Layout::OneSym))
        .collect())
}

fn check_segments(symbols: &[PreambleTensor]) -> Result<usize> {
    let first = symbols.first().ok_or(Error::EmptySelection)?;
    if let Some(bad) = symbols.iter().find(|s| s.rows != first.rows || s.data.len() != 2 * s.rows) {
        return Err(Error::ShapeMismatch(format!(
            "segments must share shape {}x2, found {}x2",
            first.rows, bad.rows
        )));
    }
    Ok(first.rows)
}

fn mean_of(symbols: &[PreambleTensor]) -> Vec<f64> {
    let mut acc = vec![0.0; symbols[0].data.len()];
    for s in symbols {
        for (a, x) in acc.iter_mut().zip(&s.data) {
            *a += x;
        }
    }
    let n = symbols.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

fn tensor(rows: usize, data: Vec<f64>) -> Result<PreambleTensor> {
    let layout = Layout::from_symbols(data.len() / (2 * rows))
        .ok_or_else(|| Error::ShapeMismatch(format!("no layout spans {} symbols", data.len() / (2 * rows))))?;
    Ok(PreambleTensor { rows: data.len() / 2, data, layout })
}

/// `[s1, s2, mean(s3..=s8)]`.
pub fn partial_stack(symbols: &[PreambleTensor]) -> Result<PreambleTensor> {
    if symbols.len() != PREAMBLE_SYMBOLS {
        return Err(Error::ShapeMismatch(format!("expected 8 segments, got {}", symbols.len())));
    }
    let rows = check_segments(symbols)?;
    let mut data = Vec::with_capacity(6 * rows);
    data.extend_from_slice(&symbols[0].data);
    data.extend_from_slice(&symbols[1].data);
    data.extend(mean_of(&symbols[2..]));
    tensor(rows, data)
}

/// Element-wise mean of symbols `k_first..=8` (1-based).
pub fn stack_all(symbols: &[PreambleTensor], k_first: usize) -> Result<PreambleTensor> {
    if k_first == 0 || k_first > symbols.len() {
        return Err(Error::EmptySelection);
    }
    let rows = check_segments(symbols)?;
    tensor(rows, mean_of(&symbols[k_first - 1..]))
}

/// Concatenate the symbols in a 1-based inclusive range.
pub fn select_symbols(symbols: &[PreambleTensor], range: RangeInclusive<usize>) -> Result<PreambleTensor> {
    let (lo, hi) = (*range.start(), *range.end());
    if lo == 0 || hi < lo || hi > symbols.len() {
        return Err(Error::EmptySelection);
    }
    let rows = check_segments(symbols)?;
    let data = symbols[lo - 1..hi].iter().flat_map(|s| s.data.iter().copied()).collect();
    tensor(rows, data)
}

/// Per-dimension extremes of the training inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    /// Fit on flattened training rows of equal length.
    pub fn fit_rows<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut it = rows.into_iter();
        let first = it.next().ok_or(Error::EmptySplit("train"))?;
        let mut min = first.to_vec();
        let mut max = first.to_vec();
        for row in it {
            if row.len() != min.len() {
                return Err(Error::ShapeMismatch(format!("row of {} dims, expected {}", row.len(), min.len())));
            }
            for ((lo, hi), &x) in min.iter_mut().zip(max.iter_mut()).zip(row) {
                *lo = lo.min(x);
                *hi = hi.max(x);
            }
        }
        Ok(Self { min, max })
    }

    pub fn dims(&self) -> usize {
        self.min.len()
    }

    /// Dimensions whose training range collapsed to a point; they normalize to 0.
    pub fn constant_dims(&self) -> Vec<usize> {
        (0..self.dims()).filter(|&i| !(self.max[i] > self.min[i])).collect()
    }

    /// `(x - min) / (max - min)` clipped to `[0, 1]`, written into `out`.
    pub fn normalize_into(&self, row: &[f64], out: &mut [f64]) {
        for i in 0..row.len() {
            let span = self.max[i] - self.min[i];
            out[i] = if span > 0.0 { ((row[i] - self.min[i]) / span).clamp(0.0, 1.0) } else { 0.0 };
        }
    }
}

pub fn fit_norm(train: &[PreambleTensor]) -> Result<NormStats> {
    if let Some(t) = train.iter().find(|t| t.layout != train[0].layout) {
        return Err(Error::ShapeMismatch(format!("mixed layouts {:?} and {:?}", train[0].layout, t.layout)));
    }
    NormStats::fit_rows(train.iter().map(|t| t.data.as_slice()))
}

pub fn apply_norm(t: &PreambleTensor, stats: &NormStats) -> Result<PreambleTensor> {
    if t.dims() != stats.dims() {
        return Err(Error::ShapeMismatch(format!("tensor has {} dims, stats {}", t.dims(), stats.dims())));
    }
    let mut data = vec![0.0; t.dims()];
    stats.normalize_into(&t.data, &mut data);
    Ok(PreambleTensor { data, ..t.clone() })
}

/// Embed a preamble after `delay` zero samples inside a `len + 2 * guard`
/// capture and rotate it by a carrier phase.
pub fn capture(w: &ComplexWaveform, guard: usize, delay: usize, phase_rad: f64) -> ComplexWaveform {
    let rot = Complex64::from_polar(1.0, phase_rad);
    let mut samples = vec![Complex64::new(0.0, 0.0); w.len() + 2 * guard];
    for (dst, s) in samples[delay..].iter_mut().zip(&w.samples) {
        *dst = s * rot;
    }
    ComplexWaveform { samples, sample_rate_hz: w.sample_rate_hz, origin: w.origin }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::{modulate_preamble, Origin};

    fn seg(v: f64, rows: usize) -> PreambleTensor {
        PreambleTensor { rows, data: vec![v; 2 * rows], layout: Layout::OneSym }
    }

    #[test]
    fn noiseless_delay_recovered_exactly() {
        let phy = PhyConfig::default();
        let t = modulate_preamble(&phy).unwrap();
        for delay in [0, 1, 17, 64, 128] {
            let w = capture(&t, 64, delay, 0.7);
            let r = synchronize(&w, &t, &phy, &SyncConfig::default()).unwrap();
            assert_eq!(r.offset, delay);
            assert!(r.cfo_hz.abs() < 1e-6);
            for (a, b) in r.waveform.samples.iter().zip(&t.samples) {
                assert!((a - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn synchronize_is_idempotent_on_aligned_input() {
        let phy = PhyConfig::default();
        let t = modulate_preamble(&phy).unwrap();
        let r = synchronize(&t, &t, &phy, &SyncConfig::default()).unwrap();
        assert_eq!(r.offset, 0);
        assert!(r.cfo_hz.abs() < 1e-9 * phy.symbol_rate_hz());
        assert_eq!(r.phase_rad, 0.0);
    }

    #[test]
    fn short_input_rejected() {
        let phy = PhyConfig::default();
        let t = modulate_preamble(&phy).unwrap();
        let short = ComplexWaveform::new(t.samples[..100].to_vec(), t.sample_rate_hz, Origin::Ideal).unwrap();
        assert!(matches!(synchronize(&short, &t, &phy, &SyncConfig::default()), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn extract_slices_partition_the_preamble() {
        let phy = PhyConfig::default();
        let t = modulate_preamble(&phy).unwrap();
        let symbols = extract_symbols(&t, &phy).unwrap();
        assert_eq!(symbols.len(), 8);
        assert!(symbols.iter().all(|s| s.rows == 160 && s.data.len() == 320));
        let joined: Vec<f64> = symbols.iter().flat_map(|s| s.data.clone()).collect();
        assert_eq!(joined, PreambleTensor::from_samples(&t.samples, Layout::EightSym).data);
        for k in 2..7 {
            assert_eq!(symbols[k], symbols[k + 1]);
        }
        let short = ComplexWaveform::new(t.samples[..1000].to_vec(), t.sample_rate_hz, Origin::Ideal).unwrap();
        assert!(extract_symbols(&short, &phy).is_err());
    }

    #[test]
    fn partial_stack_of_identical_segments() {
        let v = seg(0.3, 4);
        let out = partial_stack(&vec![v.clone(); 8]).unwrap();
        assert_eq!(out.layout, Layout::ThreeSym);
        assert_eq!(out.rows, 12);
        assert!(out.data.iter().all(|x| (x - 0.3).abs() < 1e-15));
    }

    #[test]
    fn partial_stack_passes_first_two_through() {
        let symbols: Vec<_> = (0..8).map(|k| seg(k as f64 * 1.1 + 0.123456789, 3)).collect();
        let out = partial_stack(&symbols).unwrap();
        assert_eq!(out.data[..6], symbols[0].data[..]);
        assert_eq!(out.data[6..12], symbols[1].data[..]);
        let expected = (2..8).map(|k| k as f64 * 1.1 + 0.123456789).sum::<f64>() / 6.0;
        assert!((out.data[12] - expected).abs() < 1e-12);
    }

    #[test]
    fn stacking_shape_errors() {
        let mut symbols = vec![seg(1.0, 4); 8];
        assert!(partial_stack(&symbols[..7]).is_err());
        symbols[5] = seg(1.0, 5);
        assert!(matches!(partial_stack(&symbols), Err(Error::ShapeMismatch(_))));
        assert!(matches!(select_symbols(&symbols[..0], 1..=2), Err(Error::EmptySelection)));
        assert!(matches!(stack_all(&symbols, 9), Err(Error::EmptySelection)));
    }

    #[test]
    fn selection_layouts() {
        let phy = PhyConfig::default();
        let t = modulate_preamble(&phy).unwrap();
        let symbols = extract_symbols(&t, &phy).unwrap();
        let first_two = select_symbols(&symbols, 1..=2).unwrap();
        assert_eq!((first_two.rows, first_two.layout), (320, Layout::TwoSym));
        let last_six = select_symbols(&symbols, 3..=8).unwrap();
        assert_eq!((last_six.rows, last_six.layout), (960, Layout::SixSym));
        let all = select_symbols(&symbols, 1..=8).unwrap();
        assert_eq!((all.rows, all.layout), (1280, Layout::EightSym));
        let stacked = stack_all(&symbols, 3).unwrap();
        assert_eq!((stacked.rows, stacked.layout), (160, Layout::OneSym));
        for (a, b) in stacked.data.iter().zip(&symbols[3].data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn norm_definitions() {
        let lo = PreambleTensor { rows: 1, data: vec![0.0, -1.0], layout: Layout::OneSym };
        let hi = PreambleTensor { rows: 1, data: vec![2.0, 3.0], layout: Layout::OneSym };
        let stats = fit_norm(&[lo.clone(), hi.clone()]).unwrap();
        assert_eq!(apply_norm(&lo, &stats).unwrap().data, vec![0.0, 0.0]);
        assert_eq!(apply_norm(&hi, &stats).unwrap().data, vec![1.0, 1.0]);
        let mid = PreambleTensor { rows: 1, data: vec![1.0, 7.0], layout: Layout::OneSym };
        assert_eq!(apply_norm(&mid, &stats).unwrap().data, vec![0.5, 1.0]);
    }

    #[test]
    fn constant_dimension_flagged() {
        let a = PreambleTensor { rows: 1, data: vec![1.0, 5.0], layout: Layout::OneSym };
        let b = PreambleTensor { rows: 1, data: vec![2.0, 5.0], layout: Layout::OneSym };
        let stats = fit_norm(&[a.clone(), b]).unwrap();
        assert_eq!(stats.constant_dims(), vec![1]);
        assert_eq!(apply_norm(&a, &stats).unwrap().data, vec![0.0, 0.0]);
        assert!(fit_norm(&[]).is_err());
    }
}
