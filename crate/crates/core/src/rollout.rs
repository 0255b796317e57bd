//! Rollout collection under a frozen policy snapshot.
//!
//! For each prompt we sample G responses autoregressively, recording per
//! token the log-probability and entropy of the exact distribution the token
//! was drawn from, plus (optionally) the distribution itself for later
//! probability-shift analysis. Response perplexity is computed under this
//! sampling-time policy.

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::policy::PolicyParameters;
use crate::rng::{stream_rng, Domain};
use crate::task::{self, Instance, TaskSpec, Verdict};
use crate::vocab::TokenId;

/// Sampling settings captured into every group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub top_p: f64,
}

/// Read-only view of everything needed to sample: parameters, the frozen
/// feature map, the task, and the sampling settings.
#[derive(Clone, Copy)]
pub struct PolicySnapshot<'a> {
    pub params: &'a PolicyParameters,
    pub map: &'a FeatureMap,
    pub spec: &'a TaskSpec,
    pub top_p: f64,
    /// Retain the full distribution for every n-th token (0 = never).
    pub store_every: usize,
}

impl<'a> PolicySnapshot<'a> {
    pub fn new(params: &'a PolicyParameters, map: &'a FeatureMap, spec: &'a TaskSpec) -> Self {
        PolicySnapshot { params, map, spec, top_p: 1.0, store_every: 1 }
    }

    pub fn with_top_p(mut self, top_p: f64) -> Self {
        self.top_p = top_p;
        self
    }

    pub fn with_store_every(mut self, n: usize) -> Self {
        self.store_every = n;
        self
    }

    pub fn sampling(&self) -> SamplingConfig {
        SamplingConfig { temperature: self.params.temperature(), top_p: self.top_p }
    }
}

/// One sampled token with its sampling-time measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenRecord {
    pub token: TokenId,
    /// 0-based position within the response.
    pub position: usize,
    /// Relative position l = t / (|o| - 1); 0 for length-1 responses.
    pub rel_pos: f64,
    /// ln pi_old(token), always <= 0.
    pub logprob: f64,
    /// Entropy (nats) of the distribution the token was sampled from.
    pub entropy: f64,
    /// Retained probabilities, when stored.
    pub dist: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseRecord {
    pub tokens: Vec<TokenRecord>,
    pub verdict: Verdict,
    pub reward: f64,
    pub ppl: f64,
}

impl ResponseRecord {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token_ids(&self) -> Vec<TokenId> {
        self.tokens.iter().map(|t| t.token).collect()
    }

    pub fn logprobs(&self) -> Vec<f64> {
        self.tokens.iter().map(|t| t.logprob).collect()
    }

    pub fn positive(&self) -> bool {
        self.reward > 0.0
    }
}

/// G responses to one prompt, sampled under one parameter snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub instance: Instance,
    pub responses: Vec<ResponseRecord>,
    pub sampling: SamplingConfig,
}

impl RolloutGroup {
    pub fn group_size(&self) -> usize {
        self.responses.len()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.responses.iter().map(|r| r.reward).collect()
    }

    pub fn ppls(&self) -> Vec<f64> {
        self.responses.iter().map(|r| r.ppl).collect()
    }

    pub fn accuracy(&self) -> f64 {
        let correct = self.responses.iter().filter(|r| r.verdict.correct).count();
        correct as f64 / self.responses.len() as f64
    }
}

/// Perplexity under the sampling policy: `exp(-mean logprob)`, always >= 1.
pub fn response_ppl(logprobs: &[f64]) -> Result<f64> {
    if logprobs.is_empty() {
        return Err(Error::contract("response_ppl on an empty response"));
    }
    let mean = logprobs.iter().sum::<f64>() / logprobs.len() as f64;
    Ok((-mean).exp())
}

/// Sample one response: tokens until `<eos>` or the length cap.
pub fn rollout_response(
    snap: &PolicySnapshot,
    instance: &Instance,
    rng: &mut impl Rng,
) -> Result<ResponseRecord> {
    let vocab = &snap.spec.vocab;
    let eos = vocab.eos();
    let cache = snap.map.prompt_features(&instance.prompt);
    let mut generated: Vec<TokenId> = Vec::new();
    let mut tokens: Vec<TokenRecord> = Vec::new();
    for t in 0..snap.spec.max_response_len {
        let h = snap.map.features_from_cache(vocab, &cache, &generated);
        let dist = snap.params.distribution(&h)?;
        let (tok, logprob) = dist.sample(snap.top_p, rng);
        let store = snap.store_every > 0 && t % snap.store_every == 0;
        tokens.push(TokenRecord {
            token: tok,
            position: t,
            rel_pos: 0.0,
            logprob,
            entropy: dist.entropy(),
            dist: store.then(|| dist.probabilities().to_vec()),
        });
        generated.push(tok);
        if tok == eos {
            break;
        }
    }
    let n = tokens.len();
    for rec in tokens.iter_mut() {
        rec.rel_pos = relative_position(rec.position, n);
    }
    let verdict = task::verify(snap.spec, instance, &generated);
    let logprobs: Vec<f64> = tokens.iter().map(|t| t.logprob).collect();
    Ok(ResponseRecord { tokens, verdict, reward: task::reward(&verdict), ppl: response_ppl(&logprobs)? })
}

/// l = t / (|o| - 1), with l = 0 for single-token responses.
pub fn relative_position(position: usize, response_len: usize) -> f64 {
    if response_len <= 1 {
        0.0
    } else {
        position as f64 / (response_len - 1) as f64
    }
}

/// Sample G responses for one instance from the provided rng.
pub fn rollout_group(
    snap: &PolicySnapshot,
    instance: &Instance,
    group_size: usize,
    rng: &mut impl Rng,
) -> Result<RolloutGroup> {
    if group_size == 0 {
        return Err(Error::contract("group size must be >= 1"));
    }
    let mut responses = Vec::with_capacity(group_size);
    for _ in 0..group_size {
        responses.push(rollout_response(snap, instance, rng)?);
    }
    Ok(RolloutGroup { instance: instance.clone(), responses, sampling: snap.sampling() })
}

/// Roll out a whole batch. Each instance gets its own RNG stream keyed by
/// `(run_seed, instance.id)`, so groups are independent and reordering the
/// input list permutes the output list without changing any group.
pub fn collect_batch(
    snap: &PolicySnapshot,
    instances: &[Instance],
    group_size: usize,
    run_seed: u64,
) -> Result<Vec<RolloutGroup>> {
    if instances.is_empty() {
        return Err(Error::contract("collect_batch on an empty instance list"));
    }
    instances
        .iter()
        .map(|inst| {
            let mut rng = stream_rng(run_seed, Domain::Rollout, inst.id);
            rollout_group(snap, inst, group_size, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::TaskSpec;

    fn setup(temperature: f64, scale: f64) -> (TaskSpec, FeatureMap, PolicyParameters) {
        let spec = TaskSpec::modular_addition(10, 16).unwrap();
        let map = FeatureMap::new(spec.vocab.size(), 16, 2, 8, 2.0, 11);
        let params =
            PolicyParameters::random(spec.vocab.size(), 16, temperature, scale, 11).unwrap();
        (spec, map, params)
    }

    #[test]
    fn deterministic_policy_repeats_itself() {
        // A near-zero temperature makes every distribution an exact one-hot
        // in f64, so all G responses coincide with zero logprob and entropy.
        let (spec, map, params) = setup(1e-6, 1.0);
        let snap = PolicySnapshot::new(&params, &map, &spec);
        let inst = spec.modular_instance(0, 3, 4);
        let mut rng = stream_rng(1, Domain::Rollout, 0);
        let group = rollout_group(&snap, &inst, 4, &mut rng).unwrap();
        for r in &group.responses {
            assert_eq!(r.token_ids(), group.responses[0].token_ids());
            for t in &r.tokens {
                assert_eq!(t.logprob, 0.0);
                assert_eq!(t.entropy, 0.0);
            }
            assert_eq!(r.ppl, 1.0);
        }
    }

    #[test]
    fn single_response_group_is_valid() {
        let (spec, map, params) = setup(1.0, 0.0);
        let snap = PolicySnapshot::new(&params, &map, &spec);
        let inst = spec.modular_instance(0, 1, 2);
        let mut rng = stream_rng(2, Domain::Rollout, 0);
        let group = rollout_group(&snap, &inst, 1, &mut rng).unwrap();
        assert_eq!(group.group_size(), 1);
    }

    #[test]
    fn seeded_rollouts_replay_bit_identically() {
        let (spec, map, params) = setup(1.0, 0.0);
        let snap = PolicySnapshot::new(&params, &map, &spec);
        let inst = spec.modular_instance(3, 6, 6);
        let mut rng1 = stream_rng(7, Domain::Rollout, 3);
        let mut rng2 = stream_rng(7, Domain::Rollout, 3);
        let a = rollout_group(&snap, &inst, 5, &mut rng1).unwrap();
        let b = rollout_group(&snap, &inst, 5, &mut rng2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ppl_worked_examples() {
        let half = 0.5f64.ln();
        assert!((response_ppl(&[half; 3]).unwrap() - 2.0).abs() < 1e-12);
        assert!((response_ppl(&[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        let quarter = 0.25f64.ln();
        assert!((response_ppl(&[half, quarter]).unwrap() - 2.82842712474619).abs() < 1e-12);
        let eighth = 0.125f64.ln();
        assert!((response_ppl(&[half, eighth]).unwrap() - 4.0).abs() < 1e-12);
        assert!(response_ppl(&[]).is_err());
    }

    #[test]
    fn record_invariants_hold_on_random_rollouts() {
        let (spec, map, params) = setup(1.0, 0.5);
        let snap = PolicySnapshot::new(&params, &map, &spec);
        let ln_v = (spec.vocab.size() as f64).ln();
        for idx in 0..10u64 {
            let inst = instance_for(&spec, idx);
            let mut rng = stream_rng(13, Domain::Rollout, idx);
            let group = rollout_group(&snap, &inst, 4, &mut rng).unwrap();
            for r in &group.responses {
                assert!(r.ppl >= 1.0);
                let mean_nll =
                    -r.logprobs().iter().sum::<f64>() / r.len() as f64;
                assert!((r.ppl - mean_nll.exp()).abs() < 1e-9);
                let n = r.len();
                for t in &r.tokens {
                    assert!(t.logprob <= 0.0);
                    assert!(t.entropy >= 0.0 && t.entropy <= ln_v + 1e-12);
                    assert!((t.rel_pos - relative_position(t.position, n)).abs() == 0.0);
                    // With top_p = 1 the stored logprob is exactly the
                    // retained distribution's probability.
                    let d = t.dist.as_ref().unwrap();
                    assert!((t.logprob.exp() - d[t.token]).abs() < 1e-12);
                }
            }
        }
    }

    fn instance_for(spec: &TaskSpec, idx: u64) -> Instance {
        crate::task::instance_at(spec, 21, idx)
    }

    #[test]
    fn batches_are_order_independent() {
        let (spec, map, params) = setup(1.0, 0.3);
        let snap = PolicySnapshot::new(&params, &map, &spec);
        let insts: Vec<Instance> = (0..4).map(|i| instance_for(&spec, i)).collect();
        let fwd = collect_batch(&snap, &insts, 3, 50).unwrap();
        let rev_insts: Vec<Instance> = insts.iter().rev().cloned().collect();
        let rev = collect_batch(&snap, &rev_insts, 3, 50).unwrap();
        for (i, g) in fwd.iter().enumerate() {
            assert_eq!(*g, rev[rev.len() - 1 - i]);
        }
    }

    #[test]
    fn batch_replay_is_exact() {
        let (spec, map, params) = setup(1.0, 0.3);
        let snap = PolicySnapshot::new(&params, &map, &spec);
        let insts: Vec<Instance> = (0..6).map(|i| instance_for(&spec, i)).collect();
        let a = collect_batch(&snap, &insts, 4, 9).unwrap();
        let b = collect_batch(&snap, &insts, 4, 9).unwrap();
        assert_eq!(a, b);
    }
}
