//! On-disk formats: dataset manifest, raw little-endian `f32` tensors,
//! normalization statistics and model checkpoints.

use rand_core::SeedableRng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::Path;

use rffid::dsp::{Layout, NormStats};
use rffid::exp::{Dataset, DroppedFrame, EpochLog, ExperimentConfig, Split, Variant};
use rffid::impair::DeviceProfile;
use rffid::nn::{AdamState, LossWeights, ModelState, NetworkSpec};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub file: String,
    pub dtype: String,
    pub shape: Vec<usize>,
}

impl TensorEntry {
    fn new(name: &str, shape: Vec<usize>) -> Self {
        Self { name: name.into(), file: format!("{name}.f32"), dtype: "f32le".into(), shape }
    }

    pub fn byte_len(&self) -> u64 {
        4 * self.shape.iter().product::<usize>() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldEntry {
    pub fold: usize,
    #[serde(flatten)]
    pub split: Split,
    /// Normalization statistics file per layout name.
    pub norm: Vec<(Layout, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub samples: usize,
    pub samples_per_symbol: usize,
    pub frames_per_device: Vec<usize>,
    pub profiles: Vec<DeviceProfile>,
    pub dropped: Vec<DroppedFrame>,
    pub tensors: Vec<TensorEntry>,
    pub folds: Vec<FoldEntry>,
}

impl DatasetManifest {
    pub fn fold(&self, fold: usize) -> Result<&FoldEntry> {
        self.folds
            .iter()
            .find(|f| f.fold == fold)
            .ok_or_else(|| CliError::Data(format!("dataset has no fold {fold} (folds 0..{})", self.folds.len())))
    }
}

fn write_f32(path: &Path, values: impl IntoIterator<Item = f32>) -> Result<()> {
    let bytes: Vec<u8> = values.into_iter().flat_map(f32::to_le_bytes).collect();
    fs::write(path, bytes).map_err(CliError::io(path))
}

fn read_f32(path: &Path, expected_bytes: u64) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    if bytes.len() as u64 != expected_bytes {
        return Err(CliError::Data(format!(
            "{}: {} bytes on disk, manifest shape needs {expected_bytes}",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    s.push('\n');
    fs::write(path, s).map_err(CliError::io(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&s).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(CliError::io(path))
}

/// Write tensors, per-fold statistics and the manifest into `dir`.
pub fn write_dataset(
    dir: &Path,
    cfg: &ExperimentConfig,
    ds: &Dataset,
    folds: &[(Split, Vec<(Layout, NormStats)>)],
) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let n = ds.len();
    let rows = ds.frame_dims() / 2;
    let tensors = vec![
        TensorEntry::new("noisy", vec![n, rows, 2]),
        TensorEntry::new("clean", vec![n, rows, 2]),
        TensorEntry::new("labels", vec![n]),
        TensorEntry::new("snr_db", vec![n]),
    ];
    write_f32(&dir.join(&tensors[0].file), ds.noisy.iter().copied())?;
    write_f32(&dir.join(&tensors[1].file), ds.clean.iter().copied())?;
    write_f32(&dir.join(&tensors[2].file), ds.labels.iter().map(|&y| y as f32))?;
    write_f32(&dir.join(&tensors[3].file), ds.snr_db.iter().copied())?;
    let norm_dir = dir.join("norm");
    fs::create_dir_all(&norm_dir).map_err(CliError::io(&norm_dir))?;
    let mut entries = Vec::new();
    for (k, (split, stats)) in folds.iter().enumerate() {
        let mut norm = Vec::new();
        for (layout, s) in stats {
            let file = format!("norm/fold{k}_{}.json", layout.name());
            write_json(&dir.join(&file), s)?;
            norm.push((*layout, file));
        }
        entries.push(FoldEntry { fold: k, split: split.clone(), norm });
    }
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        seed: cfg.seed,
        config: cfg.clone(),
        samples: n,
        samples_per_symbol: ds.samples_per_symbol,
        frames_per_device: ds.frames_per_device.clone(),
        profiles: ds.profiles.clone(),
        dropped: ds.dropped.clone(),
        tensors,
        folds: entries,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Load and validate a dataset directory.
pub fn read_dataset(dir: &Path) -> Result<(DatasetManifest, Dataset)> {
    let manifest: DatasetManifest = read_json(&dir.join(MANIFEST_FILE))?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(CliError::Data(format!("unsupported manifest version {}", manifest.format_version)));
    }
    let get = |name: &str| -> Result<Vec<f32>> {
        let t = manifest
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| CliError::Data(format!("manifest lists no `{name}` tensor")))?;
        if t.dtype != "f32le" {
            return Err(CliError::Data(format!("tensor `{name}` has unsupported dtype {}", t.dtype)));
        }
        read_f32(&dir.join(&t.file), t.byte_len())
    };
    let ds = Dataset {
        samples_per_symbol: manifest.samples_per_symbol,
        n_classes: manifest.profiles.len(),
        noisy: get("noisy")?,
        clean: get("clean")?,
        labels: get("labels")?.into_iter().map(|y| y as u32).collect(),
        snr_db: get("snr_db")?,
        profiles: manifest.profiles.clone(),
        frames_per_device: manifest.frames_per_device.clone(),
        dropped: manifest.dropped.clone(),
    };
    ds.validate().map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    if ds.len() != manifest.samples {
        return Err(CliError::Data(format!("manifest declares {} samples, tensors hold {}", manifest.samples, ds.len())));
    }
    for f in &manifest.folds {
        if !f.split.is_partition_of(ds.len()) {
            return Err(CliError::Data(format!("fold {} split does not partition the dataset", f.fold)));
        }
    }
    Ok((manifest, ds))
}

pub fn read_norm(dir: &Path, fold: &FoldEntry, layout: Layout) -> Result<NormStats> {
    let (_, file) = fold
        .norm
        .iter()
        .find(|(l, _)| *l == layout)
        .ok_or_else(|| CliError::Data(format!("fold {} has no statistics for {}", fold.fold, layout.name())))?;
    read_json(&dir.join(file))
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"RFFIDCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: Vec<u8>,
    pub stream: u64,
    /// Decimal, since JSON numbers cannot carry 128 bits.
    pub word_pos: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub variant: Variant,
    pub fold: usize,
    pub seed: u64,
    pub spec: NetworkSpec,
    pub loss_weights: LossWeights,
    pub tensors: Vec<(String, Vec<usize>)>,
    pub adam_step: u64,
    pub dropout_rng: RngState,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub curve: Vec<EpochLog>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: ModelState,
}

/// Layout: magic, `u32` version, `u32` header length, JSON header, then
/// parameters, Adam first moments and second moments as `f64` LE in
/// header tensor order, so a restored model is bit-identical.
pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let header = serde_json::to_vec(&ckpt.header).map_err(|e| CliError::Data(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    let m = &ckpt.model;
    for block in [m.params.iter().map(|p| &p.values).collect::<Vec<_>>(), m.adam.m.iter().collect(), m.adam.v.iter().collect()] {
        for t in block {
            for &v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    let mut f = fs::File::create(path).map_err(CliError::io(path))?;
    f.write_all(&out).map_err(CliError::io(path))
}

pub fn rng_state(rng: &rand_chacha::ChaCha8Rng) -> RngState {
    RngState { seed: rng.get_seed().to_vec(), stream: rng.get_stream(), word_pos: rng.get_word_pos().to_string() }
}

fn restore_rng(s: &RngState) -> Result<rand_chacha::ChaCha8Rng> {
    let seed: [u8; 32] = s.seed.as_slice().try_into().map_err(|_| CliError::Data("rng seed must be 32 bytes".into()))?;
    let pos: u128 = s.word_pos.parse().map_err(|_| CliError::Data(format!("bad rng word position {}", s.word_pos)))?;
    let mut r = rand_chacha::ChaCha8Rng::from_seed(seed);
    r.set_stream(s.stream);
    r.set_word_pos(pos);
    Ok(r)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    let bad = |m: &str| CliError::Data(format!("{}: {m}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
    let mut model = ModelState::init(header.spec, header.seed)?;
    let expected: Vec<(String, Vec<usize>)> = model.params.iter().map(|p| (p.name.clone(), p.shape.clone())).collect();
    if expected != header.tensors {
        return Err(bad("tensor list does not match the network spec"));
    }
    let total: usize = model.params.iter().map(|p| p.values.len()).sum();
    let payload = &bytes[16 + hlen..];
    if payload.len() != 3 * 8 * total {
        return Err(bad(&format!("payload holds {} bytes, expected {}", payload.len(), 24 * total)));
    }
    let mut vals = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for p in model.params.iter_mut() {
        p.values.iter_mut().for_each(|v| *v = vals.next().unwrap());
    }
    let mut adam = AdamState::zeros(&model.params);
    for t in adam.m.iter_mut().chain(adam.v.iter_mut()) {
        t.iter_mut().for_each(|v| *v = vals.next().unwrap());
    }
    adam.step = header.adam_step;
    model.adam = adam;
    model.dropout_rng = restore_rng(&header.dropout_rng)?;
    Ok(Checkpoint { header, model })
}
