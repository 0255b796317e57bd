//! Group-relative policy optimization.
//!
//! Advantages are rewards standardized within each group (population std;
//! all-equal groups are degenerate and contribute no gradient) and broadcast
//! to every token of a response. The clipped surrogate uses asymmetric
//! thresholds, and the per-token gradient coefficient is
//!
//! ```text
//! alpha_t = r_t * A_t            while the clip is not binding
//! alpha_t = 0                    when r_t falls outside the clip range on
//!                                the losing side of the min
//! ```
//!
//! Loss aggregation is token-level: each mini-batch's accumulated gradient is
//! divided by its total token count before one ascent step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::mat::Mat;
use crate::metrics::ShiftRecord;
use crate::policy::{self, OptimizerState, PolicyParameters, TokenDistribution};
use crate::rollout::RolloutGroup;
use crate::shaping::{self, ActiveShapers, ShapingConfig};
use crate::task::TaskSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Trainer hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub epsilon_low: f64,
    pub epsilon_high: f64,
    /// KL regularization weight (beta); 0 removes the KL branch entirely.
    pub kl_weight: f64,
    pub learning_rate: f64,
    /// Groups per training step.
    pub batch_size: usize,
    /// Groups per gradient update; must divide `batch_size`.
    pub mini_batch_size: usize,
    pub epochs_per_batch: usize,
    /// Linear learning-rate warmup over this many steps (0 disables).
    pub warmup_steps: u64,
    /// Responses per group; must be >= 2 so advantages are defined.
    pub group_size: usize,
    pub optimizer: OptimizerKind,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            epsilon_low: 0.2,
            epsilon_high: 0.28,
            kl_weight: 0.0,
            learning_rate: 0.05,
            batch_size: 64,
            mini_batch_size: 8,
            epochs_per_batch: 1,
            warmup_steps: 0,
            group_size: 8,
            optimizer: OptimizerKind::Sgd,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_low > 0.0 && self.epsilon_low <= self.epsilon_high) {
            return Err(Error::config(format!(
                "need 0 < epsilon_low <= epsilon_high, got {} / {}",
                self.epsilon_low, self.epsilon_high
            )));
        }
        if self.kl_weight < 0.0 {
            return Err(Error::config("kl_weight must be nonnegative"));
        }
        if self.learning_rate < 0.0 {
            return Err(Error::config("learning_rate must be nonnegative"));
        }
        if self.batch_size == 0 || self.mini_batch_size == 0 {
            return Err(Error::config("batch sizes must be positive"));
        }
        if self.batch_size % self.mini_batch_size != 0 {
            return Err(Error::config(format!(
                "mini_batch_size {} must divide batch_size {}",
                self.mini_batch_size, self.batch_size
            )));
        }
        if self.epochs_per_batch == 0 {
            return Err(Error::config("epochs_per_batch must be >= 1"));
        }
        if self.group_size < 2 {
            return Err(Error::config("group_size must be >= 2"));
        }
        Ok(())
    }

    pub fn optimizer_state(&self, vocab_size: usize, dim: usize) -> OptimizerState {
        match self.optimizer {
            OptimizerKind::Sgd => OptimizerState::sgd(),
            OptimizerKind::Adam => OptimizerState::adam(vocab_size, dim),
        }
    }

    /// Warmup-scaled learning rate at a global step (0-based).
    pub fn effective_lr(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 {
            self.learning_rate
        } else {
            let f = ((step + 1) as f64 / self.warmup_steps as f64).min(1.0);
            self.learning_rate * f
        }
    }
}

/// Group-standardized advantages, broadcast per response.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageSet {
    pub advantages: Vec<f64>,
    pub degenerate: bool,
}

/// `A_i = (R_i - mean) / std` with the population standard deviation; a
/// zero-variance group yields all zeros and the degenerate flag.
pub fn group_advantages(rewards: &[f64]) -> Result<AdvantageSet> {
    if rewards.len() < 2 {
        return Err(Error::contract(format!(
            "group_advantages needs >= 2 rewards, got {}",
            rewards.len()
        )));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return Ok(AdvantageSet { advantages: vec![0.0; rewards.len()], degenerate: true });
    }
    Ok(AdvantageSet {
        advantages: rewards.iter().map(|r| (r - mean) / std).collect(),
        degenerate: false,
    })
}

/// r = exp(new - old).
pub fn importance_ratio(new_logprob: f64, old_logprob: f64) -> f64 {
    (new_logprob - old_logprob).exp()
}

/// `min(r A, clip(r, 1 - eps_low, 1 + eps_high) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon_low: f64, epsilon_high: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon_low, 1.0 + epsilon_high);
    (ratio * advantage).min(clipped * advantage)
}

/// Gradient coefficient of the clipped surrogate with respect to `ln pi`:
/// `r * A` while the ratio is inside the active range, exactly 0 once the
/// clip binds on the losing side of the min.
pub fn token_coefficient(ratio: f64, advantage: f64, epsilon_low: f64, epsilon_high: f64) -> f64 {
    let clipped_out = (advantage > 0.0 && ratio > 1.0 + epsilon_high)
        || (advantage < 0.0 && ratio < 1.0 - epsilon_low);
    if clipped_out {
        0.0
    } else {
        ratio * advantage
    }
}

/// Exact KL divergence over the vocabulary. Errors if the reference assigns
/// zero probability where the policy is positive (impossible for softmax
/// references, possible for hand-built fixtures).
pub fn kl_term(policy: &TokenDistribution, reference: &TokenDistribution) -> Result<f64> {
    if policy.len() != reference.len() {
        return Err(Error::contract("KL over mismatched vocabularies"));
    }
    let mut kl = 0.0;
    for (&p, &q) in policy.probabilities().iter().zip(reference.probabilities()) {
        if p > 0.0 {
            if q <= 0.0 {
                return Err(Error::contract(
                    "reference assigns zero probability where the policy is positive",
                ));
            }
            kl += p * (p / q).ln();
        }
    }
    Ok(kl)
}

/// Gradient of `KL(softmax(z/T) || q)` with respect to the logits z:
/// `(p_k / T) * [(ln p_k - ln q_k) - KL]`.
fn kl_logit_gradient(
    policy: &TokenDistribution,
    reference: &TokenDistribution,
    temperature: f64,
) -> Result<Vec<f64>> {
    let kl = kl_term(policy, reference)?;
    Ok(policy
        .probabilities()
        .iter()
        .zip(reference.probabilities())
        .map(|(&p, &q)| {
            if p > 0.0 {
                p / temperature * ((p / q).ln() - kl)
            } else {
                0.0
            }
        })
        .collect())
}

/// Everything a training step needs besides the batch and the parameters.
pub struct TrainContext<'a> {
    pub map: &'a FeatureMap,
    pub spec: &'a TaskSpec,
    /// Reference policy for the KL term; required when `kl_weight > 0`.
    pub reference: Option<&'a PolicyParameters>,
    /// Global training step (drives warmup and shift records).
    pub step: u64,
    pub shapers: ActiveShapers,
    pub shaping: &'a ShapingConfig,
    /// Threshold for the "small probability shift" fraction.
    pub shift_threshold: f64,
}

/// Aggregates produced by one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainStepOutcome {
    pub mean_entropy: f64,
    pub pos_entropy: Option<f64>,
    pub neg_entropy: Option<f64>,
    pub accuracy: f64,
    pub mean_response_len: f64,
    pub grad_norm_mean: f64,
    pub grad_norm_max: f64,
    /// Fraction of sampled tokens with |delta p| below the threshold.
    pub shift_fraction_small: f64,
    pub shift_records: Vec<ShiftRecord>,
    /// (min, max) importance ratio observed on the first mini-batch pass;
    /// exactly (1, 1) because that pass is on-policy.
    pub ratio_range_first_pass: (f64, f64),
    pub total_tokens: usize,
    pub degenerate_groups: usize,
}

/// One GRPO step over a batch of rollout groups: shape advantages, run
/// `epochs_per_batch` passes of mini-batch clipped-surrogate updates, then
/// measure per-token probability shifts against the sampling snapshot.
pub fn train_step(
    groups: &[RolloutGroup],
    params: &mut PolicyParameters,
    opt_state: &mut OptimizerState,
    cfg: &TrainerConfig,
    ctx: &TrainContext,
) -> Result<TrainStepOutcome> {
    cfg.validate()?;
    if groups.is_empty() {
        return Err(Error::contract("train_step on an empty batch"));
    }
    if cfg.kl_weight > 0.0 && ctx.reference.is_none() {
        return Err(Error::config("kl_weight > 0 requires a reference policy"));
    }
    let vocab = &ctx.spec.vocab;

    // Per-response shaped scalar advantages (positional shaping happens per
    // token during the gradient pass).
    let mut scalars: Vec<Vec<f64>> = Vec::with_capacity(groups.len());
    let mut degenerate_groups = 0usize;
    for group in groups {
        if group.group_size() < 2 {
            return Err(Error::contract(format!(
                "training group of size {} (need >= 2)",
                group.group_size()
            )));
        }
        let adv = group_advantages(&group.rewards())?;
        if adv.degenerate {
            degenerate_groups += 1;
        }
        let scalar = if ctx.shapers.ppl {
            let weights = shaping::ppl_weights(&group.ppls())?;
            adv.advantages
                .iter()
                .zip(&weights)
                .map(|(&a, &w)| shaping::shape_ppl(a, w, &ctx.shaping.ppl))
                .collect()
        } else {
            adv.advantages
        };
        scalars.push(scalar);
    }

    let lr = cfg.effective_lr(ctx.step);
    let temperature = params.temperature();
    let prompt_caches: Vec<_> =
        groups.iter().map(|g| ctx.map.prompt_features(&g.instance.prompt)).collect();

    let mut grad_norms: Vec<f64> = Vec::new();
    let mut ratio_min = f64::INFINITY;
    let mut ratio_max = f64::NEG_INFINITY;
    let mut first_pass = true;

    for _epoch in 0..cfg.epochs_per_batch {
        for chunk_start in (0..groups.len()).step_by(cfg.mini_batch_size) {
            let chunk = chunk_start..(chunk_start + cfg.mini_batch_size).min(groups.len());
            let total_tokens: usize = chunk
                .clone()
                .map(|gi| groups[gi].responses.iter().map(|r| r.len()).sum::<usize>())
                .sum();
            if total_tokens == 0 {
                continue;
            }
            let mut grad = Mat::zeros(params.vocab_size(), params.dim());
            for gi in chunk.clone() {
                let group = &groups[gi];
                let cache = &prompt_caches[gi];
                for (ri, resp) in group.responses.iter().enumerate() {
                    let scalar = scalars[gi][ri];
                    let mut context: Vec<usize> = Vec::with_capacity(resp.len());
                    for rec in &resp.tokens {
                        let h = ctx.map.features_from_cache(vocab, cache, &context);
                        let dist = params.distribution(&h)?;
                        let new_lp = dist.prob(rec.token).ln();
                        let ratio = importance_ratio(new_lp, rec.logprob);
                        if first_pass {
                            ratio_min = ratio_min.min(ratio);
                            ratio_max = ratio_max.max(ratio);
                        }
                        let advantage = if ctx.shapers.positional {
                            let b = shaping::positional_bonus(rec.rel_pos, &ctx.shaping.positional);
                            shaping::shape_position(scalar, b)
                        } else {
                            scalar
                        };
                        // 1/T from d ln softmax(z/T) / dz.
                        let coeff =
                            token_coefficient(ratio, advantage, cfg.epsilon_low, cfg.epsilon_high)
                                / temperature;
                        grad_norms.push(policy::grad_norm(coeff, &dist, rec.token, &h));
                        if coeff != 0.0 {
                            let mut u: Vec<f64> =
                                dist.probabilities().iter().map(|p| -p).collect();
                            u[rec.token] += 1.0;
                            grad.add_outer(coeff, &u, &h);
                        }
                        if cfg.kl_weight > 0.0 {
                            let reference = ctx.reference.unwrap();
                            let q = reference.distribution(&h)?;
                            let dz = kl_logit_gradient(&dist, &q, temperature)?;
                            grad.add_outer(-cfg.kl_weight, &dz, &h);
                        }
                        context.push(rec.token);
                    }
                }
            }
            first_pass = false;
            grad.scale(1.0 / total_tokens as f64);
            policy::apply_update(params, &grad, lr, opt_state)?;
        }
    }

    // Probability shifts of the sampled tokens, against the sampling
    // snapshot. Only tokens with a retained distribution are measured; the
    // stored probability is the exact "before" value.
    let mut shift_records = Vec::new();
    let mut response_index = 0usize;
    for (gi, group) in groups.iter().enumerate() {
        let cache = &prompt_caches[gi];
        for resp in &group.responses {
            let mut context: Vec<usize> = Vec::with_capacity(resp.len());
            for rec in &resp.tokens {
                if let Some(stored) = &rec.dist {
                    let h = ctx.map.features_from_cache(vocab, cache, &context);
                    let after = params.distribution(&h)?.prob(rec.token);
                    shift_records.push(ShiftRecord {
                        step: ctx.step,
                        token: rec.token,
                        response: response_index,
                        delta_p: after - stored[rec.token],
                        ppl: resp.ppl,
                        rel_pos: rec.rel_pos,
                    });
                }
                context.push(rec.token);
            }
            response_index += 1;
        }
    }
    let shift_fraction_small =
        crate::metrics::fraction_below(shift_records.iter().map(|s| s.delta_p), ctx.shift_threshold);

    // Sampling-time aggregates.
    let (pos_entropy, neg_entropy) = crate::metrics::entropy_split_pos_neg(groups);
    let mut entropy_sum = 0.0;
    let mut token_count = 0usize;
    let mut correct = 0usize;
    let mut responses = 0usize;
    let mut length_sum = 0usize;
    for group in groups {
        for resp in &group.responses {
            responses += 1;
            length_sum += resp.len();
            if resp.verdict.correct {
                correct += 1;
            }
            for rec in &resp.tokens {
                entropy_sum += rec.entropy;
                token_count += 1;
            }
        }
    }
    let grad_norm_mean = if grad_norms.is_empty() {
        0.0
    } else {
        grad_norms.iter().sum::<f64>() / grad_norms.len() as f64
    };
    let grad_norm_max = grad_norms.iter().cloned().fold(0.0, f64::max);

    Ok(TrainStepOutcome {
        mean_entropy: entropy_sum / token_count as f64,
        pos_entropy,
        neg_entropy,
        accuracy: correct as f64 / responses as f64,
        mean_response_len: length_sum as f64 / responses as f64,
        grad_norm_mean,
        grad_norm_max,
        shift_fraction_small,
        shift_records,
        ratio_range_first_pass: (ratio_min, ratio_max),
        total_tokens: token_count,
        degenerate_groups,
    })
}
