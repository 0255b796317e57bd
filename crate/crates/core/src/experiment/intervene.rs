//! Intervention studies over a trained checkpoint.
//!
//! Samples a fresh pool of responses under the checkpoint policy, stratifies
//! (response PPL quintile) x (token position quintile), picks up to
//! `per_stratum` targets per cell, and measures each token's impact by the
//! substitute-and-continue procedure. Empty strata are reported, not fatal.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logs::{InterventionLine, JsonlWriter};
use crate::metrics::{intervene, ImpactEstimator};
use crate::policy::PolicyParameters;
use crate::rng::{stream_rng, Domain};
use crate::rollout::{collect_batch, PolicySnapshot, RolloutGroup};
use crate::task::{instance_at, Instance};

use super::checkpoint::Checkpoint;
use super::config::ExperimentConfig;
use super::runner::RunPaths;

/// Instance ids for intervention pools start here so their rollout RNG
/// streams never collide with training streams.
const INSTANCE_ID_BASE: u64 = 1 << 32;

#[derive(Debug, Clone)]
pub struct InterveneOptions {
    /// Checkpoint to load; defaults to the run's final checkpoint.
    pub checkpoint: Option<PathBuf>,
    /// Prompts in the sampled pool.
    pub instances: usize,
    /// Responses per prompt.
    pub group_size: usize,
    /// Target (response, position) pairs per stratum.
    pub per_stratum: usize,
    /// Continuations per arm; defaults to the run config's intervention_k.
    pub k: Option<usize>,
    /// Enumerate continuations exactly instead of sampling.
    pub exhaustive: bool,
    /// RNG seed; defaults to the run seed.
    pub seed: Option<u64>,
    /// Output file; defaults to `intervention.jsonl` in the run directory.
    pub out: Option<PathBuf>,
}

impl Default for InterveneOptions {
    fn default() -> Self {
        InterveneOptions {
            checkpoint: None,
            instances: 16,
            group_size: 8,
            per_stratum: 4,
            k: None,
            exhaustive: false,
            seed: None,
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterveneSummary {
    pub selected: usize,
    /// Candidate counts per (ppl quintile, position quintile).
    pub strata_candidates: [[usize; 5]; 5],
    /// Selected counts per stratum.
    pub strata_selected: [[usize; 5]; 5],
    pub empty_strata: usize,
}

pub fn run_intervene(run_dir: &Path, opts: &InterveneOptions) -> Result<InterveneSummary> {
    if opts.instances == 0 || opts.group_size == 0 {
        return Err(Error::config("intervention pool must be non-empty"));
    }
    let paths = RunPaths::new(run_dir);
    let cfg = ExperimentConfig::load(&paths.config())?;
    let spec = cfg.task.build()?;
    let ckpt_path = opts.checkpoint.clone().unwrap_or_else(|| paths.checkpoint());
    let ck = Checkpoint::read(&ckpt_path)?;
    if ck.weights.rows() != spec.vocab.size() || ck.weights.cols() != cfg.policy.feature_dim {
        return Err(Error::Mismatch(format!(
            "checkpoint shape {}x{} does not match config ({}x{})",
            ck.weights.rows(),
            ck.weights.cols(),
            spec.vocab.size(),
            cfg.policy.feature_dim
        )));
    }
    let map = crate::features::FeatureMap::new(
        spec.vocab.size(),
        cfg.policy.feature_dim,
        cfg.policy.context_width,
        cfg.policy.prompt_code_dim,
        cfg.policy.prompt_code_scale,
        ck.feature_seed,
    );
    let params = PolicyParameters::new(ck.weights, cfg.policy.temperature)?;
    let seed = opts.seed.unwrap_or(cfg.seed);
    let k = opts.k.unwrap_or(cfg.metrics.intervention_k);

    let snap = PolicySnapshot::new(&params, &map, &spec)
        .with_top_p(cfg.policy.top_p)
        .with_store_every(0);
    let instances: Vec<Instance> = (0..opts.instances as u64)
        .map(|i| instance_at(&spec, seed, INSTANCE_ID_BASE + i))
        .collect();
    let groups: Vec<RolloutGroup> =
        collect_batch(&snap, &instances, opts.group_size, seed)?;

    // Rank-based PPL quintiles over the pooled responses.
    let mut order: Vec<(usize, usize)> = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        for ri in 0..g.responses.len() {
            order.push((gi, ri));
        }
    }
    let pool_len = order.len();
    order.sort_by(|&(ga, ra), &(gb, rb)| {
        let pa = groups[ga].responses[ra].ppl;
        let pb = groups[gb].responses[rb].ppl;
        pa.partial_cmp(&pb).unwrap().then((ga, ra).cmp(&(gb, rb)))
    });
    let mut quintile_of = std::collections::HashMap::new();
    for (rank, &(gi, ri)) in order.iter().enumerate() {
        quintile_of.insert((gi, ri), rank * 5 / pool_len);
    }

    // Build strata of (group, response, position) candidates.
    let mut strata: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); 25];
    for (gi, g) in groups.iter().enumerate() {
        for (ri, r) in g.responses.iter().enumerate() {
            let pq = quintile_of[&(gi, ri)];
            for rec in &r.tokens {
                let posq = ((rec.rel_pos * 5.0).floor() as usize).min(4);
                strata[pq * 5 + posq].push((gi, ri, rec.position));
            }
        }
    }

    let mut strata_candidates = [[0usize; 5]; 5];
    let mut strata_selected = [[0usize; 5]; 5];
    let mut empty_strata = 0usize;
    let mut select_rng = stream_rng(seed, Domain::InterventionSelect, 0);
    let mut selected: Vec<(usize, usize, usize, usize, usize)> = Vec::new(); // (gi, ri, t, pq, posq)
    for pq in 0..5 {
        for posq in 0..5 {
            let cell = &strata[pq * 5 + posq];
            strata_candidates[pq][posq] = cell.len();
            if cell.is_empty() {
                empty_strata += 1;
                continue;
            }
            let take = opts.per_stratum.min(cell.len());
            let mut chosen: Vec<usize> = if take == cell.len() {
                (0..cell.len()).collect()
            } else {
                rand::seq::index::sample(&mut select_rng, cell.len(), take).into_vec()
            };
            chosen.sort_unstable();
            strata_selected[pq][posq] = chosen.len();
            for idx in chosen {
                let (gi, ri, t) = cell[idx];
                selected.push((gi, ri, t, pq, posq));
            }
        }
    }

    let out_path = opts.out.clone().unwrap_or_else(|| paths.intervention());
    let mut out = JsonlWriter::create(&out_path)?;
    let estimator = if opts.exhaustive {
        ImpactEstimator::Exhaustive
    } else {
        ImpactEstimator::MonteCarlo { k }
    };
    for (pair_idx, &(gi, ri, t, pq, posq)) in selected.iter().enumerate() {
        let group = &groups[gi];
        let resp = &group.responses[ri];
        let tokens = resp.token_ids();
        let mut rng = stream_rng(seed, Domain::Intervention, pair_idx as u64);
        let res = intervene(&snap, &group.instance, &tokens, t, estimator, &mut rng)?;
        out.append(&InterventionLine {
            instance: group.instance.id,
            response: ri,
            position: t,
            rel_pos: resp.tokens[t].rel_pos,
            ppl: resp.ppl,
            ppl_quintile: pq,
            pos_quintile: posq,
            original: res.original,
            substitute: res.substitute,
            impact: res.impact,
            k: res.k,
        })?;
    }

    let summary = InterveneSummary {
        selected: selected.len(),
        strata_candidates,
        strata_selected,
        empty_strata,
    };
    std::fs::write(paths.intervention_summary(), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
