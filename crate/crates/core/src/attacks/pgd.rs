//! White-box L∞ projected gradient descent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_unit_range, AttackOutcome};
use crate::error::{Error, Result};
use crate::oracle::{MeteredOracle, Oracle, QueryBudget, QueryKind};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgdConfig {
    /// L∞ radius of the feasible ball around the sample.
    pub epsilon: f32,
    pub alpha: f32,
    pub steps: usize,
    pub random_start: bool,
    pub seed: u64,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            epsilon: 3.0 / 255.0,
            alpha: 0.001,
            steps: 50,
            random_start: true,
            seed: 0,
        }
    }
}

impl PgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig("pgd epsilon must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig("pgd alpha must be positive".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("pgd steps must be at least 1".into()));
        }
        Ok(())
    }
}

fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Untargeted PGD. Each step moves by `alpha * sign(grad)` with the gradient
/// taken at the current iterate, then projects onto the ε-ball and `[0, 1]`.
/// Stops at the first label flip.
pub fn pgd_attack(oracle: &dyn Oracle, sample: &Tensor, label: usize, cfg: &PgdConfig) -> Result<AttackOutcome> {
    cfg.validate()?;
    if !oracle.access_level().permits(QueryKind::Gradient) {
        return Err(Error::AccessViolation {
            level: oracle.access_level(),
            kind: QueryKind::Gradient,
        });
    }
    check_unit_range(sample, 0.0, 1.0)?;
    let oracle = MeteredOracle::new(oracle, QueryBudget::UNLIMITED);

    if oracle.query_label(sample)? != label {
        return Ok(AttackOutcome::already_misclassified(sample, oracle.queries_used()));
    }

    let orig = sample.data();
    let eps = cfg.epsilon;
    let project = |i: usize, v: f32| v.clamp(orig[i] - eps, orig[i] + eps).clamp(0.0, 1.0);

    let mut x: Vec<f32> = if cfg.random_start {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        orig.iter()
            .enumerate()
            .map(|(i, v)| project(i, v + rng.random_range(-eps..=eps)))
            .collect()
    } else {
        orig.to_vec()
    };

    for step in 1..=cfg.steps {
        let current = sample.with_data(x.clone())?;
        let grad = oracle.query_input_gradient(&current, label)?;
        x = x
            .iter()
            .zip(grad.data())
            .enumerate()
            .map(|(i, (v, g))| project(i, v + cfg.alpha * sign(*g)))
            .collect();
        let candidate = sample.with_data(x.clone())?;
        if oracle.query_label(&candidate)? != label {
            return Ok(AttackOutcome::finish(
                sample,
                candidate,
                true,
                step,
                oracle.queries_used(),
            ));
        }
    }
    let last = sample.with_data(x)?;
    Ok(AttackOutcome::finish(
        sample,
        last,
        false,
        cfg.steps,
        oracle.queries_used(),
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
        LocalOracle::new(Arc::new(net), AccessLevel::WhiteBox)
    }

    #[test]
    fn misclassified_sample_needs_no_steps() {
        let o = linear(vec![0.0, 1.0], vec![0.0, 0.0], 1);
        let x = Tensor::vector(vec![0.5]).unwrap();
        let out = pgd_attack(&o, &x, 0, &PgdConfig::default()).unwrap();
        assert!(out.success && out.initial_misclassified);
        assert_eq!((out.iterations, out.l2_distance), (0, 0.0));
    }

    #[test]
    fn zero_gradient_exhausts_steps() {
        let o = linear(vec![0.0, 0.0], vec![0.0, 0.0], 1);
        let x = Tensor::vector(vec![0.5]).unwrap();
        let cfg = PgdConfig {
            steps: 17,
            ..PgdConfig::default()
        };
        let out = pgd_attack(&o, &x, 0, &cfg).unwrap();
        assert!(!out.success);
        assert_eq!(out.iterations, 17);
    }

    #[test]
    fn logistic_boundary_crossed_in_one_step() {
        // logits [0, x]: class 1 for x > 0, tie (class 0) at x = 0.
        let o = linear(vec![0.0, 1.0], vec![0.0, 0.0], 1);
        let x = Tensor::vector(vec![0.002]).unwrap();
        let cfg = PgdConfig {
            epsilon: 0.01,
            alpha: 0.005,
            steps: 10,
            random_start: false,
            seed: 0,
        };
        let out = pgd_attack(&o, &x, 1, &cfg).unwrap();
        assert!(out.success);
        assert_eq!(out.iterations, 1);
        assert_eq!(out.adversarial.data(), &[0.0]);
    }

    #[test]
    fn scores_oracle_rejected() {
        let net = Network::init(NetworkSpec::mlp(2, &[], 2), 0).unwrap();
        let o = LocalOracle::new(Arc::new(net), AccessLevel::Scores);
        let x = Tensor::vector(vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            pgd_attack(&o, &x, 0, &PgdConfig::default()),
            Err(Error::AccessViolation { .. })
        ));
    }
}
