//! Seeded Gaussian blobs in the unit cube.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobConfig {
    pub classes: usize,
    /// Samples drawn per class; the first half (rounded up) goes to train.
    pub per_class: usize,
    pub dim: usize,
    /// Standard deviation of each coordinate around its class center.
    pub spread: f64,
    /// Probability that a sample's label is replaced by a different class.
    #[serde(default)]
    pub label_noise: f64,
    pub seed: u64,
}

/// Folds `v` into `[0, 1]` by reflecting at the edges. Unlike clamping this
/// puts no mass on the faces, so train and test samples stay distinct.
fn reflect_unit(v: f64) -> f64 {
    let m = v.rem_euclid(2.0);
    if m > 1.0 {
        2.0 - m
    } else {
        m
    }
}

/// Class centers are uniform in `[0.2, 0.8]^dim`; samples are reflected into `[0, 1]`.
pub fn synth_blobs(cfg: &BlobConfig) -> Result<(Dataset, Dataset)> {
    if cfg.classes < 2 || cfg.per_class < 2 || cfg.dim == 0 {
        return Err(Error::InvalidConfig(
            "blobs need classes >= 2, per_class >= 2 and dim >= 1".into(),
        ));
    }
    if !(cfg.spread >= 0.0 && cfg.spread.is_finite()) {
        return Err(Error::InvalidConfig("blob spread must be finite and >= 0".into()));
    }
    if !(0.0..=1.0).contains(&cfg.label_noise) {
        return Err(Error::InvalidConfig("label_noise must be in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centers: Vec<Vec<f64>> = (0..cfg.classes)
        .map(|_| (0..cfg.dim).map(|_| rng.random_range(0.2..0.8)).collect())
        .collect();
    let noise = Normal::new(0.0, cfg.spread).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let train_per_class = cfg.per_class.div_ceil(2);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (class, center) in centers.iter().enumerate() {
        for i in 0..cfg.per_class {
            let data: Vec<f32> = center
                .iter()
                .map(|c| reflect_unit(c + noise.sample(&mut rng)) as f32)
                .collect();
            let mut label = class;
            if cfg.label_noise > 0.0 && rng.random_bool(cfg.label_noise) {
                label = (class + rng.random_range(1..cfg.classes)) % cfg.classes;
            }
            let sample = (Tensor::from_parts_unchecked(vec![cfg.dim], data), label);
            if i < train_per_class {
                train.push(sample);
            } else {
                test.push(sample);
            }
        }
    }
    Ok((
        Dataset::new(train, Split::Train, cfg.classes)?,
        Dataset::new(test, Split::Test, cfg.classes)?,
    ))
}
