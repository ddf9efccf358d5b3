//! Threshold-free and thresholded evaluation of membership signals.
//!
//! All functions here work on [`LabeledSignals`], whose values are oriented
//! so that larger means "member". Lower-oriented signals are negated when
//! they are ingested.

use std::collections::{BTreeMap, HashSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mia::{MembershipSignal, Orientation, SignalKind};
use crate::seed::{derive_seed, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSignals {
    values: Vec<f64>,
    members: Vec<bool>,
}

impl LabeledSignals {
    /// `pairs` are `(oriented value, is_member)`.
    pub fn new(pairs: impl IntoIterator<Item = (f64, bool)>) -> Result<Self> {
        let (values, members): (Vec<f64>, Vec<bool>) = pairs.into_iter().unzip();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("labeled signal"));
        }
        Ok(Self { values, members })
    }

    /// Raw values with the given orientation.
    pub fn from_raw(orientation: Orientation, members: &[f64], nonmembers: &[f64]) -> Result<Self> {
        let flip = |v: f64| match orientation {
            Orientation::HigherMeansMember => v,
            Orientation::LowerMeansMember => -v,
        };
        Self::new(
            members
                .iter()
                .map(|v| (flip(*v), true))
                .chain(nonmembers.iter().map(|v| (flip(*v), false))),
        )
    }

    pub fn from_signals(members: &[MembershipSignal], nonmembers: &[MembershipSignal]) -> Result<Self> {
        Self::new(
            members
                .iter()
                .map(|s| (s.oriented(), true))
                .chain(nonmembers.iter().map(|s| (s.oriented(), false))),
        )
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, bool)> + '_ {
        self.values.iter().copied().zip(self.members.iter().copied())
    }

    /// (members, non-members)
    pub fn counts(&self) -> (usize, usize) {
        let m = self.members.iter().filter(|b| **b).count();
        (m, self.members.len() - m)
    }

    /// Same values with membership labels flipped.
    pub fn swapped(&self) -> Self {
        Self {
            values: self.values.clone(),
            members: self.members.iter().map(|b| !b).collect(),
        }
    }

    fn require_both_classes(&self) -> Result<(usize, usize)> {
        let (m, n) = self.counts();
        if m == 0 || n == 0 {
            return Err(Error::Evaluation("need at least one member and one non-member".into()));
        }
        Ok((m, n))
    }

    /// Groups of equal values in descending order: (members, non-members) per group.
    fn descending_groups(&self) -> Vec<(f64, usize, usize)> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|a, b| self.values[*b].total_cmp(&self.values[*a]));
        let mut groups: Vec<(f64, usize, usize)> = Vec::new();
        for i in idx {
            let v = self.values[i];
            let is_member = self.members[i];
            match groups.last_mut() {
                Some(g) if g.0 == v => {
                    if is_member {
                        g.1 += 1
                    } else {
                        g.2 += 1
                    }
                }
                _ => groups.push((v, usize::from(is_member), usize::from(!is_member))),
            }
        }
        groups
    }
}

/// Mann–Whitney AUROC: the fraction of member/non-member pairs where the
/// member scores higher, ties counting one half.
pub fn auroc(signals: &LabeledSignals) -> Result<f64> {
    let (m, n) = signals.require_both_classes()?;
    // Walk descending; every member beats the non-members strictly below it.
    let mut nonmembers_above = 0u64;
    let mut twice_wins = 0u64;
    for (_, gm, gn) in signals.descending_groups() {
        let (gm, gn) = (gm as u64, gn as u64);
        let below = n as u64 - nonmembers_above - gn;
        twice_wins += 2 * gm * below + gm * gn;
        nonmembers_above += gn;
    }
    Ok(twice_wins as f64 / (2 * m * n) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    /// Trapezoidal area under the points.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
            .sum()
    }
}

/// One point per distinct threshold, from (0,0) to (1,1).
pub fn roc_points(signals: &LabeledSignals) -> Result<RocCurve> {
    let (m, n) = signals.require_both_classes()?;
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (_, gm, gn) in signals.descending_groups() {
        tp += gm;
        fp += gn;
        points.push(RocPoint {
            fpr: fp as f64 / n as f64,
            tpr: tp as f64 / m as f64,
        });
    }
    Ok(RocCurve { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TprAtFpr {
    pub fpr: f64,
    pub tpr: f64,
}

/// Highest TPR reachable without exceeding each FPR level.
pub fn tpr_at_fpr(curve: &RocCurve, fpr_levels: &[f64]) -> Vec<TprAtFpr> {
    fpr_levels
        .iter()
        .map(|&level| TprAtFpr {
            fpr: level,
            tpr: curve
                .points
                .iter()
                .filter(|p| p.fpr <= level)
                .map(|p| p.tpr)
                .fold(0.0, f64::max),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdAccuracy {
    /// Balanced accuracy `(TPR + TNR) / 2`.
    pub accuracy: f64,
    /// Oriented threshold; `value >= threshold` means member. May be ±∞.
    pub threshold: f64,
}

/// Candidate thresholds: −∞, midpoints between adjacent distinct values, +∞.
pub fn candidate_thresholds(signals: &LabeledSignals) -> Vec<f64> {
    let mut distinct = signals.values.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut out = Vec::with_capacity(distinct.len() + 1);
    out.push(f64::NEG_INFINITY);
    out.extend(distinct.windows(2).map(|w| w[0] / 2.0 + w[1] / 2.0));
    out.push(f64::INFINITY);
    out
}

/// Balanced accuracy of the rule `value >= threshold ⇒ member`.
pub fn accuracy_at(tp: usize, m: usize, tn: usize, n: usize) -> f64 {
    (tp as f64 / m as f64 + tn as f64 / n as f64) / 2.0
}

/// Best balanced accuracy over [`candidate_thresholds`]; ties go to the
/// smaller threshold.
pub fn best_threshold_accuracy(signals: &LabeledSignals) -> Result<ThresholdAccuracy> {
    if signals.is_empty() {
        return Err(Error::Evaluation("no signals to threshold".into()));
    }
    let (m, n) = signals.require_both_classes()?;
    let mut member_vals: Vec<f64> = signals.pairs().filter(|p| p.1).map(|p| p.0).collect();
    let mut other_vals: Vec<f64> = signals.pairs().filter(|p| !p.1).map(|p| p.0).collect();
    member_vals.sort_by(f64::total_cmp);
    other_vals.sort_by(f64::total_cmp);
    let mut best = ThresholdAccuracy {
        accuracy: f64::NEG_INFINITY,
        threshold: f64::NEG_INFINITY,
    };
    for tau in candidate_thresholds(signals) {
        let tp = m - member_vals.partition_point(|v| *v < tau);
        let tn = other_vals.partition_point(|v| *v < tau);
        let acc = accuracy_at(tp, m, tn, n);
        if acc > best.accuracy {
            best = ThresholdAccuracy {
                accuracy: acc,
                threshold: tau,
            };
        }
    }
    Ok(best)
}

/// Indices drawn from each pool for one balanced evaluation set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalancedSet {
    pub members: Vec<usize>,
    pub nonmembers: Vec<usize>,
}

/// Uniform sampling without replacement of `n_per_side` ids from each pool.
pub fn build_balanced_set(
    member_pool: &[usize],
    nonmember_pool: &[usize],
    n_per_side: usize,
    seed: u64,
) -> Result<BalancedSet> {
    if n_per_side == 0 {
        return Err(Error::Evaluation("n_per_side must be at least 1".into()));
    }
    if member_pool.len() < n_per_side || nonmember_pool.len() < n_per_side {
        return Err(Error::Evaluation(format!(
            "pools of {} members and {} non-members cannot supply {n_per_side} per side",
            member_pool.len(),
            nonmember_pool.len()
        )));
    }
    let members: HashSet<usize> = member_pool.iter().copied().collect();
    if nonmember_pool.iter().any(|id| members.contains(id)) {
        return Err(Error::Evaluation("member and non-member pools overlap".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |pool: &[usize]| -> Vec<usize> {
        if n_per_side == pool.len() {
            return pool.to_vec();
        }
        let mut chosen: Vec<usize> = sample(&mut rng, pool.len(), n_per_side)
            .into_iter()
            .map(|i| pool[i])
            .collect();
        chosen.sort_unstable();
        chosen
    };
    let members = pick(member_pool);
    let nonmembers = pick(nonmember_pool);
    Ok(BalancedSet { members, nonmembers })
}

/// Mean ± sample standard deviation of one metric across repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatReport {
    pub metric: String,
    pub mean: f64,
    /// Sample (n − 1) standard deviation; 0 when `repeats == 1`.
    pub std: f64,
    pub repeats: usize,
    pub values: Vec<f64>,
}

impl RepeatReport {
    pub fn from_values(metric: impl Into<String>, values: Vec<f64>) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            metric: metric.into(),
            mean,
            std,
            repeats: n,
            values,
        }
    }
}

/// Cached raw signal values for every attacked pool sample; position `i`
/// is pool sample `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalPools {
    pub kind: SignalKind,
    pub members: Vec<f64>,
    pub nonmembers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub n_per_side: usize,
    pub repeats: usize,
    pub base_seed: u64,
    pub fpr_levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalMetrics {
    pub kind: SignalKind,
    pub orientation: Orientation,
    pub auroc: RepeatReport,
    pub accuracy: RepeatReport,
    /// Best-accuracy threshold on the raw signal scale over all pool samples,
    /// applied with the signal's orientation. `None` means a sentinel
    /// threshold (everything on one side) was optimal.
    pub threshold: Option<f64>,
    pub pool_auroc: f64,
    pub roc: Vec<RocPoint>,
    pub tpr_at_fpr: Vec<TprAtFpr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Seconds since the Unix epoch; excluded from determinism checks.
    pub generated_at: u64,
    pub threshold_rule: String,
    pub settings: EvalSettings,
    pub context: BTreeMap<String, String>,
    pub metrics: Vec<SignalMetrics>,
}

pub const THRESHOLD_RULE: &str =
    "accuracy uses the best threshold on each evaluation set (balanced accuracy, ties to the smaller threshold)";

/// Resamples balanced evaluation sets from cached signals `repeats` times.
/// Repeat `r` draws with `derive_seed(base_seed, REPEAT, r)` and uses the
/// same sample selection for every signal kind. ROC data and the reported
/// threshold come from the full pools.
pub fn repeat_evaluate(pools: &[SignalPools], settings: &EvalSettings) -> Result<EvaluationReport> {
    if settings.repeats == 0 {
        return Err(Error::Evaluation("repeats must be at least 1".into()));
    }
    let first = pools
        .first()
        .ok_or_else(|| Error::Evaluation("no signals to evaluate".into()))?;
    let (pm, pn) = (first.members.len(), first.nonmembers.len());
    if pools.iter().any(|p| p.members.len() != pm || p.nonmembers.len() != pn) {
        return Err(Error::Evaluation("signal pools differ in size".into()));
    }
    let member_ids: Vec<usize> = (0..pm).collect();
    let nonmember_ids: Vec<usize> = (pm..pm + pn).collect();

    let selections: Vec<BalancedSet> = (0..settings.repeats)
        .map(|r| {
            let seed = derive_seed(settings.base_seed, stream::REPEAT, r as u64);
            build_balanced_set(&member_ids, &nonmember_ids, settings.n_per_side, seed)
        })
        .collect::<Result<_>>()?;

    let mut metrics = Vec::with_capacity(pools.len());
    for pool in pools {
        let orientation = pool.kind.orientation();
        let mut aurocs = Vec::with_capacity(settings.repeats);
        let mut accs = Vec::with_capacity(settings.repeats);
        for sel in &selections {
            let m: Vec<f64> = sel.members.iter().map(|i| pool.members[*i]).collect();
            let n: Vec<f64> = sel.nonmembers.iter().map(|i| pool.nonmembers[*i - pm]).collect();
            let signals = LabeledSignals::from_raw(orientation, &m, &n)?;
            aurocs.push(auroc(&signals)?);
            accs.push(best_threshold_accuracy(&signals)?.accuracy);
        }
        let all = LabeledSignals::from_raw(orientation, &pool.members, &pool.nonmembers)?;
        let curve = roc_points(&all)?;
        let best = best_threshold_accuracy(&all)?;
        let threshold = best.threshold.is_finite().then(|| match orientation {
            Orientation::HigherMeansMember => best.threshold,
            Orientation::LowerMeansMember => -best.threshold,
        });
        metrics.push(SignalMetrics {
            kind: pool.kind,
            orientation,
            auroc: RepeatReport::from_values("auroc", aurocs),
            accuracy: RepeatReport::from_values("accuracy", accs),
            threshold,
            pool_auroc: auroc(&all)?,
            tpr_at_fpr: tpr_at_fpr(&curve, &settings.fpr_levels),
            roc: curve.points,
        });
    }
    Ok(EvaluationReport {
        generated_at: 0,
        threshold_rule: THRESHOLD_RULE.into(),
        settings: settings.clone(),
        context: BTreeMap::new(),
        metrics,
    })
}
