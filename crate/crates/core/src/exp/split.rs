use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::{rng, Error, Result};

/// Sample indices of one train/validation/test partition, each ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every index in `0..n` appears in exactly one part.
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.validation).chain(&self.test) {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.into_iter().all(|s| s)
    }
}

/// Fresh partition for `fold`, stratified by (label, SNR) so every device
/// and SNR point keeps the requested fractions up to rounding.
pub fn fold_split(labels: &[u32], snr_db: &[f32], train_fraction: f64, validation_fraction: f64, seed: u64, fold: usize) -> Result<Split> {
    if labels.len() != snr_db.len() {
        return Err(Error::LengthMismatch { expected: labels.len(), actual: snr_db.len() });
    }
    let mut groups: BTreeMap<(u32, i64), Vec<usize>> = BTreeMap::new();
    for (i, (&y, &s)) in labels.iter().zip(snr_db).enumerate() {
        groups.entry((y, (s as f64 * 1000.0).round() as i64)).or_default().push(i);
    }
    let mut g = rng::stream(seed, &[rng::tag("split"), fold as u64]);
    let mut split = Split { train: Vec::new(), validation: Vec::new(), test: Vec::new() };
    for (_, mut idx) in groups {
        idx.shuffle(&mut g);
        let n = idx.len() as f64;
        let n_train = (n * train_fraction).round() as usize;
        let n_val = ((n * validation_fraction).round() as usize).min(idx.len() - n_train);
        split.train.extend_from_slice(&idx[..n_train]);
        split.validation.extend_from_slice(&idx[n_train..n_train + n_val]);
        split.test.extend_from_slice(&idx[n_train + n_val..]);
    }
    for part in [&mut split.train, &mut split.validation, &mut split.test] {
        part.sort_unstable();
    }
    for (name, part) in [("train", &split.train), ("validation", &split.validation), ("test", &split.test)] {
        if part.is_empty() {
            return Err(Error::EmptySplit(name));
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(devices: u32, snrs: &[f32], frames: usize) -> (Vec<u32>, Vec<f32>) {
        let mut l = Vec::new();
        let mut s = Vec::new();
        for d in 0..devices {
            for &snr in snrs {
                for _ in 0..frames {
                    l.push(d);
                    s.push(snr);
                }
            }
        }
        (l, s)
    }

    #[test]
    fn sixty_twenty_twenty() {
        let (l, s) = grid(8, &[-10.0, 0.0, 30.0], 60);
        let sp = fold_split(&l, &s, 0.6, 0.2, 1, 0).unwrap();
        assert_eq!((sp.train.len(), sp.validation.len(), sp.test.len()), (864, 288, 288));
        assert!(sp.is_partition_of(l.len()));
    }

    #[test]
    fn folds_redraw_and_stay_disjoint() {
        let (l, s) = grid(4, &[0.0, 10.0], 10);
        let a = fold_split(&l, &s, 0.6, 0.2, 7, 0).unwrap();
        let b = fold_split(&l, &s, 0.6, 0.2, 7, 1).unwrap();
        assert_ne!(a.test, b.test);
        for sp in [&a, &b] {
            assert!(sp.is_partition_of(l.len()));
            assert!(sp.test.iter().all(|i| !sp.train.contains(i) && !sp.validation.contains(i)));
        }
        assert_eq!(a, fold_split(&l, &s, 0.6, 0.2, 7, 0).unwrap());
    }

    #[test]
    fn tiny_groups_can_empty_a_split() {
        let (l, s) = grid(2, &[0.0], 1);
        assert!(matches!(fold_split(&l, &s, 0.6, 0.2, 1, 0), Err(Error::EmptySplit(_))));
    }
}
