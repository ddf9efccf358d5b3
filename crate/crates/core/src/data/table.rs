//! Per-sample attack table: one row per attacked sample with its outcome
//! and any baseline signals computed alongside.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mia::SignalKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub sample_id: usize,
    pub member: bool,
    /// Index of the sample within its source split.
    pub source_index: usize,
    pub label: usize,
    pub success: bool,
    pub initial_misclassified: bool,
    pub iterations: usize,
    pub queries: u64,
    pub l2_distance: f64,
    pub boundary_distance: Option<f64>,
    pub softmax_response: Option<f64>,
    pub prediction_entropy: Option<f64>,
    pub modified_entropy: Option<f64>,
    pub loss: Option<f64>,
}

impl AttackRecord {
    /// The raw value of `kind` for this sample, if it was recorded.
    pub fn signal(&self, kind: SignalKind) -> Option<f64> {
        match kind {
            SignalKind::Iterations => Some(self.iterations as f64),
            SignalKind::SoftmaxResponse => self.softmax_response,
            SignalKind::PredictionEntropy => self.prediction_entropy,
            SignalKind::ModifiedEntropy => self.modified_entropy,
            SignalKind::Loss => self.loss,
            SignalKind::BoundaryDistance => self.boundary_distance,
        }
    }
}

pub fn write_attack_table(records: &[AttackRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_attack_table(path: impl AsRef<Path>) -> Result<Vec<AttackRecord>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row.map_err(|e| Error::format(path, e.to_string()))?);
    }
    Ok(out)
}
