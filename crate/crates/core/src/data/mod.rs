//! Datasets, checkpoints and report/figure serialization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub mod checkpoint;
pub mod idx;
pub mod report;
pub mod synth;
pub mod table;
pub mod tabular;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, CheckpointMeta};
pub use idx::{load_idx, parse_idx};
pub use report::{read_report, write_figure_data, write_report, FigureKind, ReportFormat};
pub use synth::{synth_blobs, BlobConfig};
pub use table::{read_attack_table, write_attack_table, AttackRecord};
pub use tabular::load_csv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Labeled samples sharing one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<(Tensor, usize)>,
    split: Split,
    num_classes: usize,
}

impl Dataset {
    pub fn new(samples: Vec<(Tensor, usize)>, split: Split, num_classes: usize) -> Result<Self> {
        let Some((first, _)) = samples.first() else {
            return Err(Error::EmptyDataset);
        };
        let shape = first.shape().to_vec();
        for (x, y) in &samples {
            x.check_shape(&shape)?;
            if *y >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: *y,
                    classes: num_classes,
                });
            }
        }
        Ok(Self {
            samples,
            split,
            num_classes,
        })
    }

    pub fn samples(&self) -> &[(Tensor, usize)] {
        &self.samples
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_shape(&self) -> &[usize] {
        self.samples[0].0.shape()
    }

    /// The first `n` samples (all of them when `n >= len`).
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            samples: self.samples.iter().take(n.max(1)).cloned().collect(),
            split: self.split,
            num_classes: self.num_classes,
        }
    }

    /// Reshapes every sample, e.g. to flatten images for a dense network.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Self> {
        let samples = self
            .samples
            .iter()
            .map(|(x, y)| Ok((x.reshape(shape.to_vec())?, *y)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            samples,
            split: self.split,
            num_classes: self.num_classes,
        })
    }
}
