//! Membership signals and the thresholded decision rule.
//!
//! Every signal carries an orientation so that one rule covers all six
//! attacks: a Higher-oriented value at or above the threshold means member,
//! a Lower-oriented value at or below it means member.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attacks::{boundary_distance, AttackOutcome};
use crate::error::{Error, Result};
use crate::nn::cross_entropy;
use crate::tensor::Tensor;

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before any log.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    HigherMeansMember,
    LowerMeansMember,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Iterations,
    SoftmaxResponse,
    PredictionEntropy,
    ModifiedEntropy,
    Loss,
    BoundaryDistance,
}

impl SignalKind {
    pub const ALL: [SignalKind; 6] = [
        SignalKind::Iterations,
        SignalKind::SoftmaxResponse,
        SignalKind::PredictionEntropy,
        SignalKind::ModifiedEntropy,
        SignalKind::Loss,
        SignalKind::BoundaryDistance,
    ];

    pub fn orientation(self) -> Orientation {
        match self {
            SignalKind::Iterations | SignalKind::SoftmaxResponse | SignalKind::BoundaryDistance => {
                Orientation::HigherMeansMember
            }
            SignalKind::PredictionEntropy | SignalKind::ModifiedEntropy | SignalKind::Loss => {
                Orientation::LowerMeansMember
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SignalKind::Iterations => "iterations",
            SignalKind::SoftmaxResponse => "softmax_response",
            SignalKind::PredictionEntropy => "prediction_entropy",
            SignalKind::ModifiedEntropy => "modified_entropy",
            SignalKind::Loss => "loss",
            SignalKind::BoundaryDistance => "boundary_distance",
        }
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SignalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SignalKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown signal kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembershipSignal {
    pub kind: SignalKind,
    pub value: f64,
}

impl MembershipSignal {
    pub fn new(kind: SignalKind, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFinite("membership signal"));
        }
        Ok(Self { kind, value })
    }

    pub fn orientation(&self) -> Orientation {
        self.kind.orientation()
    }

    /// Value oriented so that larger always means "more likely member".
    pub fn oriented(&self) -> f64 {
        match self.orientation() {
            Orientation::HigherMeansMember => self.value,
            Orientation::LowerMeansMember => -self.value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiaDecision {
    pub is_member: bool,
    pub signal: MembershipSignal,
    pub threshold: f64,
}

fn clamped_ln(x: f64) -> f64 {
    x.max(PROB_CLAMP).ln()
}

fn check_probs(probs: &Tensor) -> Result<()> {
    if probs.is_empty() || probs.data().iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidConfig("probabilities must lie in [0, 1]".into()));
    }
    Ok(())
}

/// IMIA: the attack's iteration count.
pub fn signal_imia(outcome: &AttackOutcome) -> MembershipSignal {
    MembershipSignal {
        kind: SignalKind::Iterations,
        value: outcome.iterations as f64,
    }
}

/// Largest class probability.
pub fn signal_softmax_response(probs: &Tensor) -> Result<MembershipSignal> {
    check_probs(probs)?;
    let max = probs.data().iter().fold(0.0f32, |m, p| m.max(*p));
    MembershipSignal::new(SignalKind::SoftmaxResponse, f64::from(max))
}

/// `-Σ p ln p`, with `0 ln 0 = 0`.
pub fn signal_prediction_entropy(probs: &Tensor) -> Result<MembershipSignal> {
    check_probs(probs)?;
    let h = probs
        .data()
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| {
            let p = f64::from(*p);
            -p * p.max(PROB_CLAMP).ln()
        })
        .sum::<f64>();
    MembershipSignal::new(SignalKind::PredictionEntropy, h.max(0.0))
}

/// `-(1 - p_y) ln p_y - Σ_{i≠y} p_i ln(1 - p_i)` with clamped logs.
pub fn signal_modified_entropy(probs: &Tensor, label: usize) -> Result<MembershipSignal> {
    check_probs(probs)?;
    let p = probs.data();
    if label >= p.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: p.len(),
        });
    }
    let py = f64::from(p[label]);
    let mut value = -(1.0 - py) * clamped_ln(py);
    for (i, pi) in p.iter().enumerate() {
        if i != label {
            let pi = f64::from(*pi);
            value -= pi * clamped_ln(1.0 - pi);
        }
    }
    MembershipSignal::new(SignalKind::ModifiedEntropy, value.max(0.0))
}

/// Cross-entropy loss of the logits at the true label.
pub fn signal_loss(logits: &Tensor, label: usize) -> Result<MembershipSignal> {
    MembershipSignal::new(SignalKind::Loss, cross_entropy(logits, label)?)
}

/// Distance to the boundary point the attack found.
pub fn signal_boundary_distance(outcome: &AttackOutcome) -> Result<MembershipSignal> {
    MembershipSignal::new(SignalKind::BoundaryDistance, boundary_distance(outcome)?)
}

/// Applies the threshold rule; equality counts as member in both orientations.
pub fn decide(signal: MembershipSignal, threshold: f64) -> Result<MiaDecision> {
    if !threshold.is_finite() {
        return Err(Error::InvalidConfig("threshold must be finite".into()));
    }
    let is_member = match signal.orientation() {
        Orientation::HigherMeansMember => signal.value >= threshold,
        Orientation::LowerMeansMember => signal.value <= threshold,
    };
    Ok(MiaDecision {
        is_member,
        signal,
        threshold,
    })
}
