//! Evaluation reports (JSON or CSV) and figure data files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::table::AttackRecord;
use crate::error::{Error, Result};
use crate::eval::{roc_points, EvaluationReport, LabeledSignals};
use crate::mia::SignalKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureKind {
    /// `(sample_id, iterations, member)`
    Histogram,
    /// `(sample_id, boundary_distance, iterations, member, success)`
    Scatter,
    /// `(fpr, tpr)` of the iteration-count signal
    Roc,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    signal: &'a str,
    metric: &'a str,
    mean: f64,
    std: f64,
    repeats: usize,
}

/// JSON mirrors the report structure; CSV has one summary row per
/// (signal, metric).
pub fn write_report(report: &EvaluationReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    if report.metrics.is_empty() {
        return Err(Error::Evaluation("report has no signals".into()));
    }
    match format {
        ReportFormat::Json => {
            let mut text = serde_json::to_string_pretty(report)?;
            text.push('\n');
            std::fs::write(path, text)?;
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_path(path)?;
            for m in &report.metrics {
                for r in [&m.auroc, &m.accuracy] {
                    w.serialize(SummaryRow {
                        signal: m.kind.name(),
                        metric: &r.metric,
                        mean: r.mean,
                        std: r.std,
                        repeats: r.repeats,
                    })?;
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<EvaluationReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

#[derive(Serialize)]
struct HistogramRow {
    sample_id: usize,
    iterations: usize,
    member: bool,
}

#[derive(Serialize)]
struct ScatterRow {
    sample_id: usize,
    boundary_distance: f64,
    iterations: usize,
    member: bool,
    success: bool,
}

#[derive(Serialize)]
struct RocRow {
    fpr: f64,
    tpr: f64,
}

pub fn write_figure_data(kind: FigureKind, records: &[AttackRecord], path: impl AsRef<Path>) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Evaluation("attack table is empty".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    match kind {
        FigureKind::Histogram => {
            for r in records {
                w.serialize(HistogramRow {
                    sample_id: r.sample_id,
                    iterations: r.iterations,
                    member: r.member,
                })?;
            }
        }
        FigureKind::Scatter => {
            for r in records {
                w.serialize(ScatterRow {
                    sample_id: r.sample_id,
                    boundary_distance: r.boundary_distance.unwrap_or(r.l2_distance),
                    iterations: r.iterations,
                    member: r.member,
                    success: r.success,
                })?;
            }
        }
        FigureKind::Roc => {
            let signals = LabeledSignals::from_raw(
                SignalKind::Iterations.orientation(),
                &values(records, true),
                &values(records, false),
            )?;
            for p in roc_points(&signals)?.points {
                w.serialize(RocRow { fpr: p.fpr, tpr: p.tpr })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn values(records: &[AttackRecord], member: bool) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.member == member)
        .map(|r| r.iterations as f64)
        .collect()
}
