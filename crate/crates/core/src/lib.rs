//! Desk-scale laboratory for reinforcement learning with verifiable rewards.
//!
//! A featurized softmax policy (frozen random feature map, learned output
//! head) is trained with GRPO on synthetic verifiable tasks. The analytic
//! rank-1 head gradient makes the whole trainer autodiff-free and exactly
//! checkable against finite differences. On top of the trainer sit the two
//! advantage-shaping methods (perplexity reweighting, positional bonus) and
//! the token-level analysis instruments: entropy tracking, gradient-norm
//! proxies, probability shifts, counterfactual token interventions, stage
//! detection, positional profiles, and token-taxonomy reports.
//!
//! Module map:
//!
//! * [`vocab`], [`features`], [`policy`] - the policy core;
//! * [`task`] - verifiable tasks and rewards;
//! * [`rollout`] - grouped response sampling;
//! * [`grpo`] - advantages, clipped surrogate, training steps;
//! * [`shaping`] - PPL and positional advantage shaping;
//! * [`metrics`] - token-level measurement instruments;
//! * [`analysis`] - taxonomy, quality heuristics, run reports;
//! * [`logs`], [`experiment`] - persistence and the run drivers.

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod features;
pub mod grpo;
pub mod logs;
pub mod mat;
pub mod metrics;
pub mod policy;
pub mod rng;
pub mod rollout;
pub mod shaping;
pub mod task;
pub mod vocab;

pub use error::{Error, Result};
