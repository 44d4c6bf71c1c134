use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use rffid::channel::{awgn, measure_snr};
use rffid::dsp::{capture, extract_symbols, partial_stack, synchronize, NormStats, SyncConfig};
use rffid::exp::{fold_split, generate_dataset, prepare_inputs, ExperimentConfig, InputScheme};
use rffid::impair::{apply_rff, DeviceProfile};
use rffid::nn::{Mode, ModelState, NetworkSpec};
use rffid::phy::{modulate_preamble, ComplexWaveform, PhyConfig};
use rffid::rng;

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.population.n_devices = 3;
    cfg.frames_per_device_per_snr = 10;
    cfg.snr_grid.points_db = vec![0.0, 20.0];
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_rows_stay_in_unit_interval(
        train in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 1..12),
        probe in prop::collection::vec(-20.0f64..20.0, 6),
    ) {
        let stats = NormStats::fit_rows(train.iter().map(|r| r.as_slice())).unwrap();
        let mut out = vec![0.0; 6];
        for row in train.iter().chain([&probe]) {
            stats.normalize_into(row, &mut out);
            prop_assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn splits_partition_every_group(devices in 2u32..6, frames in 5usize..20, fold in 0usize..5, seed in any::<u64>()) {
        let snrs = [-10.0f32, 0.0, 10.0];
        let (mut labels, mut snr) = (Vec::new(), Vec::new());
        for d in 0..devices {
            for &s in &snrs {
                for _ in 0..frames {
                    labels.push(d);
                    snr.push(s);
                }
            }
        }
        let split = fold_split(&labels, &snr, 0.6, 0.2, seed, fold).unwrap();
        prop_assert!(split.is_partition_of(labels.len()));
        for d in 0..devices {
            for &s in &snrs {
                let count = |part: &[usize]| part.iter().filter(|&&i| labels[i] == d && snr[i] == s).count();
                prop_assert_eq!(count(&split.train), (frames as f64 * 0.6).round() as usize);
            }
        }
    }

    #[test]
    fn snr_calibration_is_scale_free(snr_db in -10.0f64..30.0, scale in 0.01f64..100.0, seed in any::<u64>()) {
        let phy = PhyConfig::default();
        let t = modulate_preamble(&phy).unwrap();
        let scaled = ComplexWaveform::new(t.samples.iter().map(|s| s * scale).collect(), t.sample_rate_hz, t.origin).unwrap();
        let mut g = rng::stream(seed, &[]);
        let noisy = awgn(&scaled, snr_db, &mut g);
        // 1280 complex samples: the measured SNR has a standard error near 0.17 dB.
        prop_assert!((measure_snr(&scaled, &noisy).unwrap() - snr_db).abs() < 1.0);
    }
}

#[test]
fn softmax_and_reconstruction_ranges() {
    let spec = NetworkSpec { input_rows: 320, n_classes: 27, filters: 4, dense_units: 16, pool: 2, dropout: 0.5, l2_dense: 0.0, decoder: true };
    let mut m = ModelState::init(spec, 5).unwrap();
    let mut g = rng::stream(9, &[]);
    let n = 1000;
    // Normalized inputs plus some far outside the range, to stress the softmax.
    let z: Vec<f64> = (0..n * spec.input_dims()).map(|i| if i % 7 == 0 { g.random_range(-50.0..50.0) } else { g.random() }).collect();
    let probs = m.predict(&z, n).unwrap();
    for row in probs.chunks(27) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(row.iter().all(|&p| p >= 0.0));
    }
    let t = m.forward(&z[..50 * spec.input_dims()], 50, Mode::Train).unwrap();
    assert!(t.z_tilde.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn training_stats_attain_their_extremes() {
    let cfg = small_config();
    let ds = generate_dataset(&cfg).unwrap();
    let split = fold_split(&ds.labels, &ds.snr_db, 0.6, 0.2, cfg.seed, 0).unwrap();
    for scheme in InputScheme::ALL {
        let p = prepare_inputs(&ds, scheme, &split.train).unwrap();
        for d in 0..p.dims {
            let col = split.train.iter().map(|&i| p.z_row(i)[d]);
            let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            assert_eq!((lo, hi), (0.0, 1.0), "{scheme:?} dim {d}");
        }
        assert!(p.z.iter().chain(&p.z_hat).all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn statistics_use_training_rows_only() {
    let cfg = small_config();
    let ds = generate_dataset(&cfg).unwrap();
    let split = fold_split(&ds.labels, &ds.snr_db, 0.6, 0.2, cfg.seed, 0).unwrap();
    let mut poisoned = ds.clone();
    let fd = ds.frame_dims();
    for &i in split.validation.iter().chain(&split.test) {
        poisoned.noisy[i * fd..(i + 1) * fd].iter_mut().for_each(|v| *v *= 100.0);
    }
    let a = prepare_inputs(&ds, InputScheme::PartialStack, &split.train).unwrap();
    let b = prepare_inputs(&poisoned, InputScheme::PartialStack, &split.train).unwrap();
    assert_eq!(a.stats, b.stats);
}

#[test]
fn stacking_divides_noise_variance_by_six() {
    let phy = PhyConfig::default();
    let clean = modulate_preamble(&phy).unwrap();
    let clean_stack = partial_stack(&extract_symbols(&clean, &phy).unwrap()).unwrap();
    let sigma = 0.3;
    let mut g = rng::stream(21, &[]);
    let (mut sum, mut count) = (0.0, 0usize);
    let tail = 4 * phy.samples_per_symbol;
    for _ in 0..2000 {
        let noisy: Vec<Complex64> = clean
            .samples
            .iter()
            .map(|s| s + Complex64::new(g.sample::<f64, _>(StandardNormal), g.sample::<f64, _>(StandardNormal)) * sigma)
            .collect();
        let w = ComplexWaveform::new(noisy, clean.sample_rate_hz, clean.origin).unwrap();
        let st = partial_stack(&extract_symbols(&w, &phy).unwrap()).unwrap();
        for (a, b) in st.data[tail..].iter().zip(&clean_stack.data[tail..]) {
            sum += (a - b).powi(2);
            count += 1;
        }
    }
    let ratio = sum / count as f64 / (sigma * sigma / 6.0);
    assert!((ratio - 1.0).abs() < 0.02, "{ratio}");
}

#[test]
fn cfo_estimate_at_twenty_db() {
    let phy = PhyConfig::default();
    let template = modulate_preamble(&phy).unwrap();
    let mut g = rng::stream(4, &[]);
    // Lag-one-symbol phase aliases at half the symbol rate.
    let limit = phy.symbol_rate_hz() / 2.0;
    for trial in 0..40 {
        let sign = if g.random::<bool>() { 1.0 } else { -1.0 };
        let cfo = sign * g.random_range(0.05..0.25) * limit;
        let mut p = DeviceProfile::identity("d");
        p.residual_cfo_hz = cfo;
        let tx = apply_rff(&p, &phy, &template).unwrap();
        let delay = g.random_range(0..=128);
        let cap = capture(&tx, 64, delay, g.random_range(-3.0..3.0));
        let rx = rffid::channel::awgn_with_reference(&cap, 20.0, tx.power(), &mut g);
        let r = synchronize(&rx, &template, &phy, &SyncConfig::default()).unwrap();
        assert_eq!(r.offset, delay, "trial {trial}");
        assert!((r.cfo_hz - cfo).abs() <= 0.02 * cfo.abs(), "trial {trial}: {} vs {cfo}", r.cfo_hz);
    }
}
