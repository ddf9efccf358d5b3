//! Membership inference from adversarial-example iteration counts.
//!
//! Members of a model's training set tend to sit further from the decision
//! boundary than unseen samples, so an adversarial attack needs more
//! iterations to flip them. This crate trains small target models, runs
//! PGD, SimBA and HopSkipJump against them through access-controlled
//! oracles, turns the results (and five classic metric baselines) into
//! membership signals, and scores those signals with AUROC, balanced
//! accuracy and TPR@FPR over resampled balanced evaluation sets.

pub mod attacks;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod mia;
pub mod nn;
pub mod oracle;
pub mod remote;
pub mod seed;
pub mod tensor;

pub use error::{Error, ErrorCategory, Result};
pub use tensor::Tensor;
