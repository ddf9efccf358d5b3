//! Browser bindings for the demo page in `www/`. Every export takes and
//! returns plain numbers, arrays or JSON strings so the page needs no glue
//! beyond the generated module. The `*_json` functions hold the logic and
//! run natively; the exports only convert errors.

use std::sync::Arc;

use imia_core::attacks::dct_basis_step;
use imia_core::eval::{auroc, best_threshold_accuracy, roc_points, LabeledSignals};
use imia_core::experiment::{attack_samples, load_datasets, select_attack_pool, train_model, ExperimentConfig};
use imia_core::oracle::{AccessLevel, LocalOracle};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Pixels of DCT direction `index` on a `size`×`size` single-channel image,
/// keeping the lowest `freq_dims` frequencies per axis.
pub fn dct_pixels(index: usize, freq_dims: usize, size: usize) -> imia_core::Result<Vec<f32>> {
    dct_basis_step(index, freq_dims, &[1, size, size]).map(|t| t.data().to_vec())
}

#[wasm_bindgen]
pub fn dct_direction(index: usize, freq_dims: usize, size: usize) -> Result<Vec<f32>, JsError> {
    dct_pixels(index, freq_dims, size).map_err(js_err)
}

#[derive(Serialize)]
struct SignalSummary {
    auroc: f64,
    accuracy: f64,
    threshold: Option<f64>,
    roc: Vec<[f64; 2]>,
}

fn summarize(members: &[f64], nonmembers: &[f64]) -> imia_core::Result<SignalSummary> {
    let signals = LabeledSignals::new(
        members
            .iter()
            .map(|v| (*v, true))
            .chain(nonmembers.iter().map(|v| (*v, false))),
    )?;
    let best = best_threshold_accuracy(&signals)?;
    Ok(SignalSummary {
        auroc: auroc(&signals)?,
        accuracy: best.accuracy,
        threshold: best.threshold.is_finite().then_some(best.threshold),
        roc: roc_points(&signals)?.points.iter().map(|p| [p.fpr, p.tpr]).collect(),
    })
}

/// AUROC, best balanced accuracy and ROC points for a signal where larger
/// values mean "member", as JSON.
pub fn score_signals_json(members: &[f64], nonmembers: &[f64]) -> imia_core::Result<String> {
    Ok(serde_json::to_string(&summarize(members, nonmembers)?)?)
}

#[wasm_bindgen]
pub fn score_signals(members: Vec<f64>, nonmembers: Vec<f64>) -> Result<String, JsError> {
    score_signals_json(&members, &nonmembers).map_err(js_err)
}

#[derive(Serialize)]
struct DemoRun {
    train_accuracy: f64,
    test_accuracy: f64,
    member_iterations: Vec<usize>,
    nonmember_iterations: Vec<usize>,
    signal: SignalSummary,
}

/// Trains a small MLP on noisy blobs for `epochs` epochs, runs SimBA on
/// `per_side` members and non-members and returns the iteration counts
/// with their membership scores as JSON. More epochs overfit harder.
pub fn simba_membership_json(epochs: usize, per_side: usize, seed: u64) -> imia_core::Result<String> {
    let config = format!(
        r#"{{
          "dataset": {{"kind": "blobs", "classes": 3, "per_class": 60, "dim": 8, "spread": 0.3, "label_noise": 0.1}},
          "network": {{"input_shape": [8], "layers": [
              {{"kind": "dense", "inputs": 8, "outputs": 48}}, {{"kind": "relu"}},
              {{"kind": "dense", "inputs": 48, "outputs": 3}}], "num_classes": 3}},
          "train": {{"epochs": {epochs}, "learning_rate": 0.3, "batch_size": 8}},
          "attack": {{"setting": "score-based", "simba": {{"freq_dims": 8}}}},
          "signals": ["iterations"],
          "evaluation": {{"n_per_side": {per_side}, "repeats": 1}},
          "seed": {seed}
        }}"#
    );
    let cfg = ExperimentConfig::from_json(&config)?;
    let (train, test) = load_datasets(&cfg)?;
    let (net, summary, _) = train_model(&cfg, &train, &test)?;
    let samples = select_attack_pool(&cfg, &train, &test)?;
    let oracle = LocalOracle::new(Arc::new(net), AccessLevel::Scores);
    let (records, _) = attack_samples(&cfg, &oracle, None, &samples, 1)?;
    let side = |member: bool| -> Vec<usize> {
        records
            .iter()
            .filter(|r| r.member == member)
            .map(|r| r.iterations)
            .collect()
    };
    let (m, n) = (side(true), side(false));
    let as_f64 = |v: &[usize]| v.iter().map(|&i| i as f64).collect::<Vec<_>>();
    let run = DemoRun {
        train_accuracy: summary.train_accuracy,
        test_accuracy: summary.test_accuracy,
        signal: summarize(&as_f64(&m), &as_f64(&n))?,
        member_iterations: m,
        nonmember_iterations: n,
    };
    Ok(serde_json::to_string(&run)?)
}

#[wasm_bindgen]
pub fn simba_membership_demo(epochs: usize, per_side: usize, seed: u64) -> Result<String, JsError> {
    simba_membership_json(epochs, per_side, seed).map_err(js_err)
}
