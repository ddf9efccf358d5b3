//! Score-based SimBA: greedy ±ε steps along orthonormal directions that
//! lower the true-class probability.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dct::DctBasis;
use super::AttackOutcome;
use crate::error::{Error, Result};
use crate::oracle::{MeteredOracle, Oracle, QueryBudget, QueryKind};
use crate::tensor::{argmax, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Pixel,
    Dct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    Random,
    Ascending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimbaConfig {
    pub max_iters: usize,
    /// Step length along each (unit-norm) direction.
    pub epsilon: f32,
    pub basis: Basis,
    /// Frequencies kept per spatial axis for the DCT basis.
    pub freq_dims: usize,
    pub order: Order,
    /// L∞ bound on the total perturbation; 0 means unbounded.
    pub linf_bound: f32,
    pub seed: u64,
    pub budget: QueryBudget,
}

impl Default for SimbaConfig {
    fn default() -> Self {
        Self {
            max_iters: 300,
            epsilon: 0.05,
            basis: Basis::Dct,
            freq_dims: 32,
            order: Order::Random,
            linf_bound: 0.0,
            seed: 0,
            budget: QueryBudget::UNLIMITED,
        }
    }
}

impl SimbaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("simba max_iters must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig("simba epsilon must be positive".into()));
        }
        if !(self.linf_bound >= 0.0 && self.linf_bound.is_finite()) {
            return Err(Error::InvalidConfig("simba linf_bound must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-run record of the search, for checking its invariants.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimbaTrace {
    /// True-class probability at the start and after every accepted proposal.
    pub accepted_probs: Vec<f32>,
    /// Index of the direction examined at each iteration.
    pub directions: Vec<usize>,
}

enum Directions {
    Pixel(usize),
    Dct(DctBasis),
}

impl Directions {
    fn len(&self) -> usize {
        match self {
            Directions::Pixel(n) => *n,
            Directions::Dct(b) => b.len(),
        }
    }

    fn fill(&self, index: usize, out: &mut [f64]) -> Result<()> {
        match self {
            Directions::Pixel(_) => {
                out.iter_mut().for_each(|v| *v = 0.0);
                out[index] = 1.0;
                Ok(())
            }
            Directions::Dct(b) => b.fill(index, out),
        }
    }
}

/// Runs SimBA and returns only the outcome.
pub fn simba_attack(oracle: &dyn Oracle, sample: &Tensor, label: usize, cfg: &SimbaConfig) -> Result<AttackOutcome> {
    simba_attack_traced(oracle, sample, label, cfg).map(|(o, _)| o)
}

/// Untargeted SimBA. Each iteration examines one direction `q`, tries
/// `x + εq` and then `x − εq`, and keeps the first that strictly lowers
/// `p(label | x)`. Iterations count every examined direction. When the
/// directions run out before `max_iters`, a new pass over them begins
/// (re-shuffled under [`Order::Random`]).
pub fn simba_attack_traced(
    oracle: &dyn Oracle,
    sample: &Tensor,
    label: usize,
    cfg: &SimbaConfig,
) -> Result<(AttackOutcome, SimbaTrace)> {
    cfg.validate()?;
    if !oracle.access_level().permits(QueryKind::Scores) {
        return Err(Error::AccessViolation {
            level: oracle.access_level(),
            kind: QueryKind::Scores,
        });
    }
    let directions = match cfg.basis {
        Basis::Pixel => Directions::Pixel(sample.len()),
        Basis::Dct => Directions::Dct(DctBasis::new(sample.shape(), cfg.freq_dims)?),
    };
    let oracle = MeteredOracle::new(oracle, cfg.budget);
    let mut trace = SimbaTrace::default();

    let probs = oracle.query_scores(sample)?;
    if label >= probs.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: probs.len(),
        });
    }
    let mut p_true = probs.data()[label];
    trace.accepted_probs.push(p_true);
    if argmax(probs.data()) != label {
        return Ok((
            AttackOutcome::already_misclassified(sample, oracle.queries_used()),
            trace,
        ));
    }

    let orig = sample.data();
    let bound = cfg.linf_bound;
    let mut x = orig.to_vec();
    let mut q = vec![0.0f64; x.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = Vec::new();

    let propose = |x: &[f32], q: &[f64], sign: f64| -> Vec<f32> {
        x.iter()
            .zip(q)
            .enumerate()
            .map(|(i, (v, d))| {
                let mut nv = (f64::from(*v) + sign * f64::from(cfg.epsilon) * d) as f32;
                if bound > 0.0 {
                    nv = nv.clamp(orig[i] - bound, orig[i] + bound);
                }
                nv.clamp(0.0, 1.0)
            })
            .collect()
    };

    for iter in 1..=cfg.max_iters {
        let slot = (iter - 1) % directions.len();
        if slot == 0 {
            order = (0..directions.len()).collect();
            if cfg.order == Order::Random {
                order.shuffle(&mut rng);
            }
        }
        let dir = order[slot];
        trace.directions.push(dir);
        directions.fill(dir, &mut q)?;

        let mut flipped = false;
        for sign in [1.0, -1.0] {
            let candidate = propose(&x, &q, sign);
            let scores = match oracle.query_scores(&sample.with_data(candidate.clone())?) {
                Ok(s) => s,
                Err(Error::BudgetExhausted(_)) => {
                    let adv = sample.with_data(x)?;
                    let outcome = AttackOutcome::finish(sample, adv, false, cfg.max_iters, oracle.queries_used());
                    return Ok((outcome, trace));
                }
                Err(e) => return Err(e),
            };
            let p = scores.data()[label];
            if p < p_true {
                p_true = p;
                x = candidate;
                trace.accepted_probs.push(p);
                flipped = argmax(scores.data()) != label;
                break;
            }
        }
        if flipped {
            let adv = sample.with_data(x)?;
            return Ok((
                AttackOutcome::finish(sample, adv, true, iter, oracle.queries_used()),
                trace,
            ));
        }
    }
    let adv = sample.with_data(x)?;
    Ok((
        AttackOutcome::finish(sample, adv, false, cfg.max_iters, oracle.queries_used()),
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerParams, LayerSpec, Network, NetworkSpec};
    use crate::oracle::{AccessLevel, LocalOracle};
    use std::sync::Arc;

    fn linear(weight: Vec<f32>, bias: Vec<f32>, inputs: usize) -> LocalOracle {
        let outputs = bias.len();
        let spec = NetworkSpec {
            input_shape: vec![inputs],
            layers: vec![LayerSpec::Dense { inputs, outputs }],
            num_classes: outputs,
        };
        let net = Network::from_params(spec, vec![LayerParams { weight, bias }]).unwrap();
        LocalOracle::new(Arc::new(net), AccessLevel::Scores)
    }

    fn pixel_ascending(max_iters: usize, epsilon: f32) -> SimbaConfig {
        SimbaConfig {
            max_iters,
            epsilon,
            basis: Basis::Pixel,
            order: Order::Ascending,
            ..SimbaConfig::default()
        }
    }

    #[test]
    fn constant_model_fails_after_max_iters() {
        let o = linear(vec![0.0; 8], vec![1.0, 0.0], 4);
        let x = Tensor::vector(vec![0.5; 4]).unwrap();
        let (out, trace) = simba_attack_traced(&o, &x, 0, &pixel_ascending(12, 0.1)).unwrap();
        assert!(!out.success);
        assert_eq!(out.iterations, 12);
        assert_eq!(out.queries, 1 + 2 * 12);
        assert_eq!(trace.accepted_probs.len(), 1);
        // 4 directions, so three full passes.
        assert_eq!(trace.directions, [0, 1, 2, 3].repeat(3));
    }

    #[test]
    fn misclassified_sample() {
        let o = linear(vec![0.0; 8], vec![0.0, 1.0], 4);
        let x = Tensor::vector(vec![0.5; 4]).unwrap();
        let out = simba_attack(&o, &x, 0, &pixel_ascending(300, 0.05)).unwrap();
        assert!(out.success && out.initial_misclassified);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.queries, 1);
    }

    #[test]
    fn label_only_oracle_rejected() {
        let net = Network::init(NetworkSpec::mlp(4, &[], 2), 0).unwrap();
        let o = LocalOracle::new(Arc::new(net), AccessLevel::LabelOnly);
        let x = Tensor::vector(vec![0.5; 4]).unwrap();
        assert!(matches!(
            simba_attack(&o, &x, 0, &SimbaConfig::default()),
            Err(Error::AccessViolation { .. })
        ));
    }

    #[test]
    fn budget_exhaustion_is_a_recorded_failure() {
        let o = linear(vec![0.0; 8], vec![1.0, 0.0], 4);
        let x = Tensor::vector(vec![0.5; 4]).unwrap();
        let cfg = SimbaConfig {
            budget: QueryBudget::limited(6),
            ..pixel_ascending(100, 0.1)
        };
        let out = simba_attack(&o, &x, 0, &cfg).unwrap();
        assert!(!out.success);
        assert_eq!(out.queries, 6);
        assert_eq!(out.iterations, 100);
    }

    #[test]
    fn dct_directions_need_image_compatible_freq_dims() {
        let o = linear(vec![0.0; 8], vec![1.0, 0.0], 4);
        let x = Tensor::vector(vec![0.5; 4]).unwrap();
        let cfg = SimbaConfig {
            freq_dims: 32,
            ..SimbaConfig::default()
        };
        assert!(matches!(simba_attack(&o, &x, 0, &cfg), Err(Error::InvalidConfig(_))));
    }
}
