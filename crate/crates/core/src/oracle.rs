//! Access-controlled, query-counting views of a target model.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::Tensor;

/// What an adversary may observe about the target model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccessLevel {
    WhiteBox,
    Scores,
    LabelOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueryKind {
    Scores,
    Label,
    Gradient,
}

impl AccessLevel {
    pub const ALL: [AccessLevel; 3] = [AccessLevel::WhiteBox, AccessLevel::Scores, AccessLevel::LabelOnly];

    pub fn permits(self, kind: QueryKind) -> bool {
        match kind {
            QueryKind::Label => true,
            QueryKind::Scores => matches!(self, AccessLevel::WhiteBox | AccessLevel::Scores),
            QueryKind::Gradient => self == AccessLevel::WhiteBox,
        }
    }

    /// True when `self` grants every query `other` does.
    pub fn covers(self, other: AccessLevel) -> bool {
        [QueryKind::Scores, QueryKind::Label, QueryKind::Gradient]
            .into_iter()
            .all(|k| !other.permits(k) || self.permits(k))
    }

    fn require(self, kind: QueryKind) -> Result<()> {
        if self.permits(kind) {
            Ok(())
        } else {
            Err(Error::AccessViolation { level: self, kind })
        }
    }
}

impl fmt::Display for AccessLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessLevel::WhiteBox => "white-box",
            AccessLevel::Scores => "scores",
            AccessLevel::LabelOnly => "label-only",
        })
    }
}

impl FromStr for AccessLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white-box" | "whitebox" => Ok(AccessLevel::WhiteBox),
            "scores" | "score-based" => Ok(AccessLevel::Scores),
            "label-only" | "label" => Ok(AccessLevel::LabelOnly),
            other => Err(Error::InvalidConfig(format!("unknown access level '{other}'"))),
        }
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryKind::Scores => "scores",
            QueryKind::Label => "label",
            QueryKind::Gradient => "gradient",
        })
    }
}

/// Snapshot of per-kind query counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleStats {
    pub queries_scores: u64,
    pub queries_label: u64,
    pub queries_gradient: u64,
}

impl OracleStats {
    pub fn total(&self) -> u64 {
        self.queries_scores + self.queries_label + self.queries_gradient
    }
}

#[derive(Debug, Default)]
pub(crate) struct QueryCounters {
    scores: AtomicU64,
    label: AtomicU64,
    gradient: AtomicU64,
}

impl QueryCounters {
    pub(crate) fn bump(&self, kind: QueryKind) {
        let c = match kind {
            QueryKind::Scores => &self.scores,
            QueryKind::Label => &self.label,
            QueryKind::Gradient => &self.gradient,
        };
        c.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn snapshot(&self) -> OracleStats {
        OracleStats {
            queries_scores: self.scores.load(Ordering::Relaxed),
            queries_label: self.label.load(Ordering::Relaxed),
            queries_gradient: self.gradient.load(Ordering::Relaxed),
        }
    }
}

/// Maximum number of queries an attack may spend on one sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryBudget {
    pub max_queries: Option<u64>,
}

impl QueryBudget {
    pub const UNLIMITED: QueryBudget = QueryBudget { max_queries: None };

    pub fn limited(max_queries: u64) -> Self {
        Self {
            max_queries: Some(max_queries),
        }
    }
}

/// A queryable target model.
pub trait Oracle: Send + Sync {
    fn access_level(&self) -> AccessLevel;

    /// Class probabilities.
    fn query_scores(&self, input: &Tensor) -> Result<Tensor>;

    /// Predicted class, ties toward the lowest index.
    fn query_label(&self, input: &Tensor) -> Result<usize>;

    /// Cross-entropy gradient with respect to the input.
    fn query_input_gradient(&self, input: &Tensor, label: usize) -> Result<Tensor>;

    fn stats(&self) -> OracleStats;
}

/// In-process oracle over a shared network.
#[derive(Debug)]
pub struct LocalOracle {
    net: Arc<Network>,
    level: AccessLevel,
    counters: QueryCounters,
}

impl LocalOracle {
    pub fn new(net: Arc<Network>, level: AccessLevel) -> Self {
        Self {
            net,
            level,
            counters: QueryCounters::default(),
        }
    }

    pub fn network(&self) -> &Arc<Network> {
        &self.net
    }
}

impl Oracle for LocalOracle {
    fn access_level(&self) -> AccessLevel {
        self.level
    }

    fn query_scores(&self, input: &Tensor) -> Result<Tensor> {
        self.level.require(QueryKind::Scores)?;
        let probs = self.net.probabilities(input)?;
        self.counters.bump(QueryKind::Scores);
        Ok(probs)
    }

    fn query_label(&self, input: &Tensor) -> Result<usize> {
        let label = self.net.predict_label(input)?;
        self.counters.bump(QueryKind::Label);
        Ok(label)
    }

    fn query_input_gradient(&self, input: &Tensor, label: usize) -> Result<Tensor> {
        self.level.require(QueryKind::Gradient)?;
        let grad = self.net.input_gradient(input, label)?;
        self.counters.bump(QueryKind::Gradient);
        Ok(grad)
    }

    fn stats(&self) -> OracleStats {
        self.counters.snapshot()
    }
}

/// Per-attack view of an oracle that enforces a [`QueryBudget`] and counts
/// only the queries made through it.
pub struct MeteredOracle<'a> {
    inner: &'a dyn Oracle,
    budget: QueryBudget,
    counters: QueryCounters,
    used: AtomicU64,
}

impl<'a> MeteredOracle<'a> {
    pub fn new(inner: &'a dyn Oracle, budget: QueryBudget) -> Self {
        Self {
            inner,
            budget,
            counters: QueryCounters::default(),
            used: AtomicU64::new(0),
        }
    }

    pub fn queries_used(&self) -> u64 {
        self.used.load(Ordering::Relaxed)
    }

    fn reserve(&self) -> Result<()> {
        match self.budget.max_queries {
            None => {
                self.used.fetch_add(1, Ordering::Relaxed);
                Ok(())
            }
            Some(max) => self
                .used
                .fetch_update(Ordering::Relaxed, Ordering::Relaxed, |u| (u < max).then_some(u + 1))
                .map(|_| ())
                .map_err(|_| Error::BudgetExhausted(max)),
        }
    }

    fn release(&self) {
        self.used.fetch_sub(1, Ordering::Relaxed);
    }

    fn metered<T>(&self, kind: QueryKind, f: impl FnOnce() -> Result<T>) -> Result<T> {
        self.reserve()?;
        match f() {
            Ok(v) => {
                self.counters.bump(kind);
                Ok(v)
            }
            Err(e) => {
                self.release();
                Err(e)
            }
        }
    }
}

impl Oracle for MeteredOracle<'_> {
    fn access_level(&self) -> AccessLevel {
        self.inner.access_level()
    }

    fn query_scores(&self, input: &Tensor) -> Result<Tensor> {
        self.metered(QueryKind::Scores, || self.inner.query_scores(input))
    }

    fn query_label(&self, input: &Tensor) -> Result<usize> {
        self.metered(QueryKind::Label, || self.inner.query_label(input))
    }

    fn query_input_gradient(&self, input: &Tensor, label: usize) -> Result<Tensor> {
        self.metered(QueryKind::Gradient, || self.inner.query_input_gradient(input, label))
    }

    fn stats(&self) -> OracleStats {
        self.counters.snapshot()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerParams, LayerSpec, NetworkSpec};

    fn identity(n: usize) -> Arc<Network> {
        let spec = NetworkSpec {
            input_shape: vec![n],
            layers: vec![LayerSpec::Dense { inputs: n, outputs: n }],
            num_classes: n,
        };
        let mut weight = vec![0.0; n * n];
        for i in 0..n {
            weight[i * n + i] = 1.0;
        }
        Arc::new(
            Network::from_params(
                spec,
                vec![LayerParams {
                    weight,
                    bias: vec![0.0; n],
                }],
            )
            .unwrap(),
        )
    }

    fn v(data: &[f32]) -> Tensor {
        Tensor::vector(data.to_vec()).unwrap()
    }

    #[test]
    fn scores_denied_for_label_only() {
        let o = LocalOracle::new(identity(2), AccessLevel::LabelOnly);
        assert!(matches!(
            o.query_scores(&v(&[0.0, 0.0])),
            Err(Error::AccessViolation { .. })
        ));
        assert_eq!(o.stats().queries_scores, 0);
    }

    #[test]
    fn scores_counted() {
        let o = LocalOracle::new(identity(2), AccessLevel::Scores);
        let p = o.query_scores(&v(&[0.0, 0.0])).unwrap();
        assert_eq!(p.data(), &[0.5, 0.5]);
        assert_eq!(o.stats().queries_scores, 1);
    }

    #[test]
    fn budget_exhausts_on_third_score_query() {
        let o = LocalOracle::new(identity(2), AccessLevel::Scores);
        let m = MeteredOracle::new(&o, QueryBudget::limited(2));
        let x = v(&[0.0, 1.0]);
        m.query_scores(&x).unwrap();
        m.query_scores(&x).unwrap();
        assert!(matches!(m.query_scores(&x), Err(Error::BudgetExhausted(2))));
        assert_eq!(m.queries_used(), 2);
    }

    #[test]
    fn label_queries() {
        let o = LocalOracle::new(identity(3), AccessLevel::LabelOnly);
        assert_eq!(o.query_label(&v(&[3.0, 1.0, 2.0])).unwrap(), 0);
        assert_eq!(o.stats().queries_label, 1);
        let m = MeteredOracle::new(&o, QueryBudget::limited(1));
        m.query_label(&v(&[3.0, 1.0, 2.0])).unwrap();
        assert!(matches!(
            m.query_label(&v(&[3.0, 1.0, 2.0])),
            Err(Error::BudgetExhausted(1))
        ));
    }

    #[test]
    fn gradient_requires_white_box() {
        let o = LocalOracle::new(identity(2), AccessLevel::Scores);
        assert!(matches!(
            o.query_input_gradient(&v(&[0.0, 0.0]), 0),
            Err(Error::AccessViolation { .. })
        ));
        let spec = NetworkSpec::mlp(2, &[], 2);
        let zero = Network::from_params(
            spec,
            vec![LayerParams {
                weight: vec![0.0; 4],
                bias: vec![0.0; 2],
            }],
        )
        .unwrap();
        let o = LocalOracle::new(Arc::new(zero), AccessLevel::WhiteBox);
        let g = o.query_input_gradient(&v(&[0.3, 0.7]), 1).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0]);
        assert_eq!(o.stats().queries_gradient, 1);
        o.query_input_gradient(&v(&[0.3, 0.7]), 1).unwrap();
        assert_eq!(o.stats().queries_gradient, 2);
    }

    #[test]
    fn access_matrix() {
        use AccessLevel::{LabelOnly, WhiteBox};
        let kinds = [QueryKind::Scores, QueryKind::Label, QueryKind::Gradient];
        let expected = [
            (WhiteBox, [true, true, true]),
            (AccessLevel::Scores, [true, true, false]),
            (LabelOnly, [false, true, false]),
        ];
        for (level, allowed) in expected {
            for (kind, ok) in kinds.into_iter().zip(allowed) {
                assert_eq!(level.permits(kind), ok, "{level} {kind}");
            }
        }
        assert!(WhiteBox.covers(LabelOnly));
        assert!(!LabelOnly.covers(AccessLevel::Scores));
    }

    #[test]
    fn concurrent_counting_is_exact() {
        let o = LocalOracle::new(identity(2), AccessLevel::WhiteBox);
        let x = v(&[0.1, 0.2]);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    for _ in 0..250 {
                        o.query_label(&x).unwrap();
                    }
                });
            }
        });
        assert_eq!(o.stats().queries_label, 2000);
    }
}
