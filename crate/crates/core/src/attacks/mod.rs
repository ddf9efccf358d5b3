//! Adversarial example generators whose iteration counts feed the IMIA signal.
//!
//! | setting     | strategy | oracle access |
//! |-------------|----------|---------------|
//! | white-box   | PGD      | gradients     |
//! | score-based | SimBA    | probabilities |
//! | label-only  | HSJA     | hard labels   |
//!
//! All three share two conventions: a sample the model already gets wrong
//! yields `iterations = 0` and zero distance, and an attack that runs out of
//! iterations or budget records the configured maximum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub mod dct;
pub mod hsja;
pub mod pgd;
pub mod simba;

pub use dct::{dct_basis_step, DctBasis};
pub use hsja::{hsja_attack, HsjaConfig};
pub use pgd::{pgd_attack, PgdConfig};
pub use simba::{simba_attack, simba_attack_traced, Basis, Order, SimbaConfig, SimbaTrace};

/// Result of one adversarial-example generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub success: bool,
    pub iterations: usize,
    pub queries: u64,
    pub adversarial: Tensor,
    pub l2_distance: f64,
    pub initial_misclassified: bool,
}

impl AttackOutcome {
    pub(crate) fn already_misclassified(original: &Tensor, queries: u64) -> Self {
        Self {
            success: true,
            iterations: 0,
            queries,
            adversarial: original.clone(),
            l2_distance: 0.0,
            initial_misclassified: true,
        }
    }

    pub(crate) fn finish(
        original: &Tensor,
        adversarial: Tensor,
        success: bool,
        iterations: usize,
        queries: u64,
    ) -> Self {
        let l2_distance = original.l2_distance(&adversarial);
        Self {
            success,
            iterations,
            queries,
            adversarial,
            l2_distance,
            initial_misclassified: false,
        }
    }
}

/// L2 distance from the sample to the boundary point the attack reached.
pub fn boundary_distance(outcome: &AttackOutcome) -> Result<f64> {
    if outcome.success || outcome.initial_misclassified {
        Ok(outcome.l2_distance)
    } else {
        Err(Error::Attack(
            "attack did not reach the decision boundary; no distance defined".into(),
        ))
    }
}

pub(crate) fn check_unit_range(x: &Tensor, lo: f32, hi: f32) -> Result<()> {
    if x.data().iter().any(|v| *v < lo || *v > hi) {
        return Err(Error::Attack(format!("input values must lie in [{lo}, {hi}]")));
    }
    Ok(())
}
