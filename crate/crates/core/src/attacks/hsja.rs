//! Label-only HopSkipJump attack (L2, untargeted).
//!
//! Starts from a random misclassified point, then alternates Monte-Carlo
//! estimation of the boundary normal, a geometric step-size search and a
//! binary search back onto the boundary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_unit_range, AttackOutcome};
use crate::error::{Error, Result};
use crate::oracle::{MeteredOracle, Oracle, QueryBudget};
use crate::tensor::{l2_distance, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HsjaConfig {
    pub clip_min: f32,
    pub clip_max: f32,
    pub num_iterations: usize,
    /// Binary-search confidence; sets both the search tolerance and the
    /// gradient-probe radius.
    pub gamma: f64,
    pub max_num_evals: usize,
    pub init_num_evals: usize,
    /// Random draws tried when looking for a misclassified starting point.
    pub max_init_draws: usize,
    /// Success distance: the attack counts iterations until the adversarial
    /// point is closer than this. `None` never stops early.
    pub d_target: Option<f64>,
    pub seed: u64,
    pub budget: QueryBudget,
}

impl Default for HsjaConfig {
    fn default() -> Self {
        Self {
            clip_min: 0.0,
            clip_max: 1.0,
            num_iterations: 100,
            gamma: 1.0,
            max_num_evals: 10_000,
            init_num_evals: 100,
            max_init_draws: 1_000,
            d_target: None,
            seed: 0,
            budget: QueryBudget::UNLIMITED,
        }
    }
}

impl HsjaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_iterations == 0 {
            return Err(Error::InvalidConfig("hsja num_iterations must be at least 1".into()));
        }
        if self.init_num_evals == 0 || self.init_num_evals > self.max_num_evals {
            return Err(Error::InvalidConfig(
                "hsja needs 1 <= init_num_evals <= max_num_evals".into(),
            ));
        }
        if self.clip_min.partial_cmp(&self.clip_max) != Some(std::cmp::Ordering::Less) {
            return Err(Error::InvalidConfig("hsja clip range is empty".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig("hsja gamma must be positive".into()));
        }
        if self.max_init_draws == 0 {
            return Err(Error::InvalidConfig("hsja max_init_draws must be at least 1".into()));
        }
        if matches!(self.d_target, Some(d) if d.is_nan() || d < 0.0) {
            return Err(Error::InvalidConfig("hsja d_target must be >= 0".into()));
        }
        Ok(())
    }
}

/// Raised when no misclassified starting point was found.
pub const INIT_FAILURE: &str = "hsja initialization found no misclassified point";

struct Run<'a> {
    oracle: MeteredOracle<'a>,
    sample: &'a Tensor,
    label: usize,
    cfg: &'a HsjaConfig,
    rng: ChaCha8Rng,
    /// Every point the boundary search returned, when recording is on.
    boundary_points: Option<Vec<Vec<f32>>>,
}

impl Run<'_> {
    fn is_adversarial(&self, x: &[f32]) -> Result<bool> {
        let t = self.sample.with_data(x.to_vec())?;
        Ok(self.oracle.query_label(&t)? != self.label)
    }

    fn clip(&self, v: f64) -> f32 {
        (v as f32).clamp(self.cfg.clip_min, self.cfg.clip_max)
    }

    fn blend(&self, alpha: f64, target: &[f32]) -> Vec<f32> {
        if alpha == 1.0 {
            return target.to_vec();
        }
        self.sample
            .data()
            .iter()
            .zip(target)
            .map(|(o, t)| ((1.0 - alpha) * f64::from(*o) + alpha * f64::from(*t)) as f32)
            .collect()
    }

    fn initialize(&mut self) -> Result<Vec<f32>> {
        let d = self.sample.len();
        let mut noise = None;
        for _ in 0..self.cfg.max_init_draws {
            let candidate: Vec<f32> = (0..d)
                .map(|_| self.rng.random_range(self.cfg.clip_min..=self.cfg.clip_max))
                .collect();
            if self.is_adversarial(&candidate)? {
                noise = Some(candidate);
                break;
            }
        }
        let noise = noise.ok_or_else(|| Error::Attack(INIT_FAILURE.into()))?;
        let (mut low, mut high) = (0.0f64, 1.0f64);
        while high - low > 0.001 {
            let mid = (high + low) / 2.0;
            if self.is_adversarial(&self.blend(mid, &noise))? {
                high = mid;
            } else {
                low = mid;
            }
        }
        Ok(self.blend(high, &noise))
    }

    /// Binary search on the segment sample→`perturbed`, returning the
    /// adversarial end once it is within `theta` (in blend units).
    fn boundary_search(&mut self, perturbed: &[f32], theta: f64) -> Result<Vec<f32>> {
        let (mut low, mut high) = (0.0f64, 1.0f64);
        while (high - low) / theta > 1.0 {
            let mid = (high + low) / 2.0;
            if self.is_adversarial(&self.blend(mid, perturbed))? {
                high = mid;
            } else {
                low = mid;
            }
        }
        let out = self.blend(high, perturbed);
        if let Some(points) = self.boundary_points.as_mut() {
            points.push(out.clone());
        }
        Ok(out)
    }

    fn estimate_direction(&mut self, at: &[f32], num_evals: usize, delta: f64) -> Result<Vec<f64>> {
        let d = at.len();
        let mut probes: Vec<Vec<f64>> = Vec::with_capacity(num_evals);
        let mut signs: Vec<f64> = Vec::with_capacity(num_evals);
        for _ in 0..num_evals {
            let mut rv: Vec<f64> = (0..d).map(|_| self.rng.sample(StandardNormal)).collect();
            let norm = rv.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            rv.iter_mut().for_each(|v| *v /= norm);
            let probe: Vec<f32> = at
                .iter()
                .zip(&rv)
                .map(|(a, r)| self.clip(f64::from(*a) + delta * r))
                .collect();
            // Effective direction after clipping.
            let eff: Vec<f64> = probe
                .iter()
                .zip(at)
                .map(|(p, a)| (f64::from(*p) - f64::from(*a)) / delta)
                .collect();
            signs.push(if self.is_adversarial(&probe)? { 1.0 } else { -1.0 });
            probes.push(eff);
        }
        let mean_sign = signs.iter().sum::<f64>() / num_evals as f64;
        let mut grad = vec![0.0f64; d];
        if mean_sign == 1.0 || mean_sign == -1.0 {
            for p in &probes {
                for (g, v) in grad.iter_mut().zip(p) {
                    *g += mean_sign * v;
                }
            }
        } else {
            for (p, s) in probes.iter().zip(&signs) {
                let w = s - mean_sign;
                for (g, v) in grad.iter_mut().zip(p) {
                    *g += w * v;
                }
            }
        }
        let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            grad.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(grad)
    }

    /// Geometric step-size search: halve from `dist / sqrt(t)` until the
    /// stepped point stays adversarial.
    fn step(&mut self, at: &[f32], update: &[f64], dist: f64, t: usize) -> Result<Option<Vec<f32>>> {
        let mut eps = dist / (t as f64).sqrt();
        for _ in 0..64 {
            let candidate: Vec<f32> = at
                .iter()
                .zip(update)
                .map(|(a, u)| self.clip(f64::from(*a) + eps * u))
                .collect();
            if self.is_adversarial(&candidate)? {
                return Ok(Some(candidate));
            }
            eps /= 2.0;
        }
        Ok(None)
    }
}

/// Runs HopSkipJump. `iterations` is the first outer iteration at which the
/// L2 distance drops below `d_target` (0 when the initial boundary point
/// already does), otherwise `num_iterations`.
pub fn hsja_attack(oracle: &dyn Oracle, sample: &Tensor, label: usize, cfg: &HsjaConfig) -> Result<AttackOutcome> {
    run(oracle, sample, label, cfg, false).map(|(o, _)| o)
}

/// Like [`hsja_attack`] but also returns every point produced by the
/// boundary binary search.
pub fn hsja_attack_traced(
    oracle: &dyn Oracle,
    sample: &Tensor,
    label: usize,
    cfg: &HsjaConfig,
) -> Result<(AttackOutcome, Vec<Vec<f32>>)> {
    run(oracle, sample, label, cfg, true)
}

fn run(
    oracle: &dyn Oracle,
    sample: &Tensor,
    label: usize,
    cfg: &HsjaConfig,
    record: bool,
) -> Result<(AttackOutcome, Vec<Vec<f32>>)> {
    cfg.validate()?;
    check_unit_range(sample, cfg.clip_min, cfg.clip_max)?;
    let mut run = Run {
        oracle: MeteredOracle::new(oracle, cfg.budget),
        sample,
        label,
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        boundary_points: record.then(Vec::new),
    };
    let mut best: Option<Vec<f32>> = None;
    let result = search(&mut run, &mut best);
    let queries = run.oracle.queries_used();
    let points = run.boundary_points.take().unwrap_or_default();
    match result {
        Ok(outcome) => Ok((outcome, points)),
        Err(Error::BudgetExhausted(_)) => {
            let outcome = match best {
                Some(x) => AttackOutcome::finish(sample, sample.with_data(x)?, true, cfg.num_iterations, queries),
                None => AttackOutcome::finish(sample, sample.clone(), false, cfg.num_iterations, queries),
            };
            Ok((outcome, points))
        }
        Err(e) => Err(e),
    }
}

fn search(run: &mut Run<'_>, best: &mut Option<Vec<f32>>) -> Result<AttackOutcome> {
    let cfg = run.cfg;
    let sample = run.sample;
    let orig = sample.data();
    let target = cfg.d_target.unwrap_or(f64::NEG_INFINITY);

    if run.is_adversarial(orig)? {
        return Ok(AttackOutcome::already_misclassified(sample, run.oracle.queries_used()));
    }

    let d = orig.len() as f64;
    let theta = cfg.gamma / (d.sqrt() * d);
    let start = run.initialize()?;
    let mut perturbed = run.boundary_search(&start, theta)?;
    let mut dist = l2_distance(&perturbed, orig);
    *best = Some(perturbed.clone());
    if dist < target {
        let adv = sample.with_data(perturbed)?;
        return Ok(AttackOutcome::finish(sample, adv, true, 0, run.oracle.queries_used()));
    }

    for t in 1..=cfg.num_iterations {
        let delta = if t == 1 {
            0.1 * f64::from(cfg.clip_max - cfg.clip_min)
        } else {
            d.sqrt() * theta * dist
        };
        let num_evals = ((cfg.init_num_evals as f64 * (t as f64).sqrt()) as usize).min(cfg.max_num_evals);
        let update = run.estimate_direction(&perturbed, num_evals, delta)?;
        if let Some(stepped) = run.step(&perturbed, &update, dist, t)? {
            perturbed = run.boundary_search(&stepped, theta)?;
            dist = l2_distance(&perturbed, orig);
            *best = Some(perturbed.clone());
        }
        if dist < target {
            let adv = sample.with_data(perturbed)?;
            return Ok(AttackOutcome::finish(sample, adv, true, t, run.oracle.queries_used()));
        }
    }
    let adv = sample.with_data(perturbed)?;
    Ok(AttackOutcome::finish(
        sample,
        adv,
        true,
        cfg.num_iterations,
        run.oracle.queries_used(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerParams, LayerSpec, Network, NetworkSpec};
    use crate::oracle::{AccessLevel, LocalOracle};
    use std::sync::Arc;

    /// Two-class linear model: class 1 iff `w·x + b > 0`.
    fn halfplane(w: [f32; 2], b: f32) -> LocalOracle {
        let spec = NetworkSpec {
            input_shape: vec![2],
            layers: vec![LayerSpec::Dense { inputs: 2, outputs: 2 }],
            num_classes: 2,
        };
        let net = Network::from_params(
            spec,
            vec![LayerParams {
                weight: vec![0.0, 0.0, w[0], w[1]],
                bias: vec![0.0, b],
            }],
        )
        .unwrap();
        LocalOracle::new(Arc::new(net), AccessLevel::LabelOnly)
    }

    #[test]
    fn misclassified_sample() {
        let o = halfplane([1.0, 0.0], -0.5);
        let x = Tensor::vector(vec![0.8, 0.5]).unwrap();
        let out = hsja_attack(&o, &x, 0, &HsjaConfig::default()).unwrap();
        assert!(out.success && out.initial_misclassified);
        assert_eq!((out.iterations, out.l2_distance), (0, 0.0));
    }

    #[test]
    fn infinite_target_is_met_at_initialization() {
        let o = halfplane([1.0, 0.0], -0.5);
        let x = Tensor::vector(vec![0.2, 0.5]).unwrap();
        let cfg = HsjaConfig {
            d_target: Some(f64::INFINITY),
            ..HsjaConfig::default()
        };
        let out = hsja_attack(&o, &x, 0, &cfg).unwrap();
        assert!(out.success);
        assert!(out.iterations <= 1);
    }

    #[test]
    fn init_failure_is_reported() {
        // Nothing in [0,1]^2 is classified as class 1.
        let o = halfplane([1.0, 0.0], -5.0);
        let x = Tensor::vector(vec![0.2, 0.5]).unwrap();
        let cfg = HsjaConfig {
            max_init_draws: 20,
            ..HsjaConfig::default()
        };
        let err = hsja_attack(&o, &x, 0, &cfg).unwrap_err();
        assert!(matches!(err, Error::Attack(ref m) if m == INIT_FAILURE));
    }

    #[test]
    fn boundary_points_are_adversarial() {
        let o = halfplane([1.0, 1.0], -1.0);
        let x = Tensor::vector(vec![0.2, 0.3]).unwrap();
        let cfg = HsjaConfig {
            num_iterations: 10,
            seed: 4,
            ..HsjaConfig::default()
        };
        let (out, points) = hsja_attack_traced(&o, &x, 0, &cfg).unwrap();
        assert!(out.success);
        assert!(!points.is_empty());
        for p in points {
            let t = Tensor::vector(p).unwrap();
            assert_eq!(o.query_label(&t).unwrap(), 1);
        }
    }
}
