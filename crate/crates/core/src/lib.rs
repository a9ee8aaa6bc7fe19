//! Noisy long-tailed classification laboratory.
//!
//! Builds synthetic datasets with controllable class imbalance and label
//! noise, trains an environment-invariant noise identifier, removes easy
//! noise iteratively with confidence-weighted Mixup, and fits a reweighted
//! balanced-softmax classifier. Baselines and metrics live in [`eval`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod envs;
pub mod error;
pub mod eval;
pub mod identifier;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod run;
pub mod synthdata;
pub mod warmup;

pub use error::{Error, Result};
