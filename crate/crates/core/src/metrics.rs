//! Measurement instruments for token-level training dynamics.
//!
//! * probability shifts of sampled tokens across a parameter update;
//! * counterfactual token interventions (swap a token for its best
//!   alternative, continue both ways, compare verifier accuracy);
//! * rising/plateau stage detection on the mean-entropy series;
//! * positional entropy profiles and positive/negative entropy splits;
//! * ranking token types by how fast their entropy fell.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::TokenDistribution;
use crate::rollout::{PolicySnapshot, ResponseRecord, RolloutGroup};
use crate::task;
use crate::task::Instance;
use crate::vocab::TokenId;

/// Signed probability change of one sampled token across an update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftRecord {
    pub step: u64,
    pub token: TokenId,
    /// Batch-wide response index (group-major).
    pub response: usize,
    pub delta_p: f64,
    pub ppl: f64,
    pub rel_pos: f64,
}

/// `pi_after(token) - pi_before(token)`.
pub fn probability_shift(
    before: &TokenDistribution,
    after: &TokenDistribution,
    token: TokenId,
) -> f64 {
    after.prob(token) - before.prob(token)
}

/// Fraction of shifts with `|delta_p| < threshold`; 1.0 for an empty set.
pub fn fraction_below(deltas: impl IntoIterator<Item = f64>, threshold: f64) -> f64 {
    let mut total = 0usize;
    let mut small = 0usize;
    for d in deltas {
        total += 1;
        if d.abs() < threshold {
            small += 1;
        }
    }
    if total == 0 {
        1.0
    } else {
        small as f64 / total as f64
    }
}

// ---------------------------------------------------------------------------
// Stage detection
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageLabel {
    Rising,
    Plateau,
}

/// Result of running the detector over an entropy series. `smoothed[j]` is
/// the trailing moving average over `series[j..j+window]`, i.e. the value the
/// detector sees at step `j + window`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageState {
    pub label: StageLabel,
    pub transition_step: Option<usize>,
    pub smoothed: Vec<f64>,
}

/// Latching rising -> plateau detector.
///
/// The moving average at step `i` covers the `window` entries before `i`
/// (exclusive). Plateau is declared at the first step where the average's
/// per-step slope has stayed below `slope_tol` in magnitude for `patience`
/// consecutive steps; a constant series therefore latches at exactly
/// `window + patience`. Once latched the label never reverts.
#[derive(Debug, Clone)]
pub struct StageDetector {
    window: usize,
    slope_tol: f64,
    patience: usize,
    series: Vec<f64>,
    smoothed: Vec<f64>,
    quiet_streak: usize,
    transition: Option<usize>,
}

impl StageDetector {
    pub fn new(window: usize, slope_tol: f64, patience: usize) -> Self {
        assert!(window >= 1 && patience >= 1);
        StageDetector {
            window,
            slope_tol,
            patience,
            series: Vec::new(),
            smoothed: Vec::new(),
            quiet_streak: 0,
            transition: None,
        }
    }

    /// Feed the next step's entropy; returns the label after this step.
    pub fn push(&mut self, entropy: f64) -> StageLabel {
        self.series.push(entropy);
        let i = self.series.len() - 1; // current step index
        if self.series.len() >= self.window {
            let start = self.series.len() - self.window;
            let ma = self.series[start..].iter().sum::<f64>() / self.window as f64;
            self.smoothed.push(ma);
        }
        if self.transition.is_none() && self.smoothed.len() >= 2 {
            let n = self.smoothed.len();
            let slope = self.smoothed[n - 1] - self.smoothed[n - 2];
            if slope.abs() < self.slope_tol {
                self.quiet_streak += 1;
                if self.quiet_streak >= self.patience {
                    self.transition = Some(i + 1);
                }
            } else {
                self.quiet_streak = 0;
            }
        }
        self.label()
    }

    pub fn label(&self) -> StageLabel {
        if self.transition.is_some() {
            StageLabel::Plateau
        } else {
            StageLabel::Rising
        }
    }

    pub fn transition_step(&self) -> Option<usize> {
        self.transition
    }

    pub fn state(&self) -> StageState {
        StageState {
            label: self.label(),
            transition_step: self.transition,
            smoothed: self.smoothed.clone(),
        }
    }
}

/// Run the detector over a full series.
pub fn detect_stage(series: &[f64], window: usize, slope_tol: f64, patience: usize) -> Result<StageState> {
    if series.len() < window {
        return Err(Error::contract(format!(
            "entropy series of length {} is shorter than the window {window}",
            series.len()
        )));
    }
    let mut det = StageDetector::new(window, slope_tol, patience);
    for &h in series {
        det.push(h);
    }
    Ok(det.state())
}

// ---------------------------------------------------------------------------
// Interventions
// ---------------------------------------------------------------------------

/// How to estimate continuation accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImpactEstimator {
    /// Sample `k` continuations per arm.
    MonteCarlo { k: usize },
    /// Enumerate every continuation, weighted by its policy probability.
    /// Only sensible when `V^(remaining length)` is small.
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterventionResult {
    pub position: usize,
    pub original: TokenId,
    pub substitute: TokenId,
    /// Mean accuracy of original-token continuations minus mean accuracy of
    /// substitute-token continuations; always in [-1, 1].
    pub impact: f64,
    /// Continuations per arm (0 for exhaustive enumeration).
    pub k: usize,
}

/// Swap the token at position `t` for the highest-probability alternative and
/// measure the accuracy difference of the two continuation arms.
pub fn intervene(
    snap: &PolicySnapshot,
    instance: &Instance,
    response: &[TokenId],
    t: usize,
    estimator: ImpactEstimator,
    rng: &mut impl Rng,
) -> Result<InterventionResult> {
    if snap.spec.vocab.size() < 2 {
        return Err(Error::contract("intervention needs a vocabulary of >= 2 tokens"));
    }
    if t >= response.len() {
        return Err(Error::contract(format!(
            "intervention position {t} outside response of length {}",
            response.len()
        )));
    }
    let prefix = &response[..t];
    let cache = snap.map.prompt_features(&instance.prompt);
    let h = snap.map.features_from_cache(&snap.spec.vocab, &cache, prefix);
    let dist = snap.params.distribution(&h)?;
    let original = response[t];
    let substitute = dist.argmax(Some(original));

    let accuracy = |first: TokenId, rng: &mut dyn rand::RngCore| -> Result<f64> {
        let mut start = prefix.to_vec();
        start.push(first);
        match estimator {
            ImpactEstimator::MonteCarlo { k } => {
                if k == 0 {
                    return Err(Error::contract("Monte-Carlo intervention needs k >= 1"));
                }
                let mut acc = 0.0;
                for _ in 0..k {
                    let full = complete(snap, instance, &start, rng)?;
                    if task::verify(snap.spec, instance, &full).correct {
                        acc += 1.0;
                    }
                }
                Ok(acc / k as f64)
            }
            ImpactEstimator::Exhaustive => expected_accuracy(snap, instance, &mut start),
        }
    };

    let acc_original = accuracy(original, rng)?;
    let acc_substitute = accuracy(substitute, rng)?;
    let k = match estimator {
        ImpactEstimator::MonteCarlo { k } => k,
        ImpactEstimator::Exhaustive => 0,
    };
    Ok(InterventionResult {
        position: t,
        original,
        substitute,
        impact: acc_original - acc_substitute,
        k,
    })
}

/// Sample the rest of a response from a fixed prefix.
fn complete(
    snap: &PolicySnapshot,
    instance: &Instance,
    prefix: &[TokenId],
    rng: &mut dyn rand::RngCore,
) -> Result<Vec<TokenId>> {
    let vocab = &snap.spec.vocab;
    let cache = snap.map.prompt_features(&instance.prompt);
    let mut toks = prefix.to_vec();
    while toks.len() < snap.spec.max_response_len && toks.last() != Some(&vocab.eos()) {
        let h = snap.map.features_from_cache(vocab, &cache, &toks);
        let dist = snap.params.distribution(&h)?;
        let (tok, _) = dist.sample(snap.top_p, rng);
        toks.push(tok);
    }
    Ok(toks)
}

/// Exact expected verifier accuracy over all continuations of `prefix`,
/// weighting each continuation by its probability under the (possibly
/// nucleus-truncated) sampling distribution.
fn expected_accuracy(
    snap: &PolicySnapshot,
    instance: &Instance,
    prefix: &mut Vec<TokenId>,
) -> Result<f64> {
    let vocab = &snap.spec.vocab;
    if prefix.len() >= snap.spec.max_response_len || prefix.last() == Some(&vocab.eos()) {
        return Ok(if task::verify(snap.spec, instance, prefix).correct { 1.0 } else { 0.0 });
    }
    let cache = snap.map.prompt_features(&instance.prompt);
    let h = snap.map.features_from_cache(vocab, &cache, prefix);
    let dist = snap.params.distribution(&h)?;
    let (tokens, probs) = dist.nucleus(snap.top_p);
    let mut acc = 0.0;
    for (tok, p) in tokens.into_iter().zip(probs) {
        prefix.push(tok);
        acc += p * expected_accuracy(snap, instance, prefix)?;
        prefix.pop();
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Aggregate profiles
// ---------------------------------------------------------------------------

/// Mean entropy per relative-position bin; `None` for empty bins.
pub fn positional_profile_from_pairs(
    pairs: impl IntoIterator<Item = (f64, f64)>,
    bins: usize,
) -> Result<Vec<Option<f64>>> {
    if bins < 2 {
        return Err(Error::contract("positional profile needs >= 2 bins"));
    }
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0u64; bins];
    for (l, h) in pairs {
        let b = ((l * bins as f64).floor() as usize).min(bins - 1);
        sums[b] += h;
        counts[b] += 1;
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| if c == 0 { None } else { Some(s / c as f64) })
        .collect())
}

/// Positional entropy profile over whole responses.
pub fn positional_entropy_profile(
    responses: &[&ResponseRecord],
    bins: usize,
) -> Result<Vec<Option<f64>>> {
    positional_profile_from_pairs(
        responses
            .iter()
            .flat_map(|r| r.tokens.iter().map(|t| (t.rel_pos, t.entropy))),
        bins,
    )
}

/// Token-weighted mean entropy over (positive, negative) responses; a side
/// with no responses is reported absent.
pub fn entropy_split_pos_neg(groups: &[RolloutGroup]) -> (Option<f64>, Option<f64>) {
    entropy_split_pairs(
        groups
            .iter()
            .flat_map(|g| g.responses.iter())
            .map(|r| (r.positive(), r.tokens.iter().map(|t| t.entropy).collect::<Vec<_>>())),
    )
}

/// Split from raw (positive, entropies) pairs.
pub fn entropy_split_pairs(
    responses: impl IntoIterator<Item = (bool, Vec<f64>)>,
) -> (Option<f64>, Option<f64>) {
    let (mut pos_sum, mut pos_n, mut neg_sum, mut neg_n) = (0.0, 0u64, 0.0, 0u64);
    for (positive, entropies) in responses {
        let (sum, n) = (entropies.iter().sum::<f64>(), entropies.len() as u64);
        if positive {
            pos_sum += sum;
            pos_n += n;
        } else {
            neg_sum += sum;
            neg_n += n;
        }
    }
    (
        (pos_n > 0).then(|| pos_sum / pos_n as f64),
        (neg_n > 0).then(|| neg_sum / neg_n as f64),
    )
}

// ---------------------------------------------------------------------------
// Entropy-drop ranking
// ---------------------------------------------------------------------------

/// Per-token-type entropy accumulation across recorded steps, with
/// positive/negative sample provenance counts.
#[derive(Debug, Clone, Default)]
pub struct TokenEntropyHistory {
    vocab_size: usize,
    steps: Vec<u64>,
    /// per recorded step, per token type: (entropy sum, occurrence count)
    per_step: Vec<Vec<(f64, u64)>>,
    pos_occurrences: Vec<u64>,
    neg_occurrences: Vec<u64>,
}

/// Where a token type's occurrences live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    PositiveOnly,
    NegativeOnly,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyDrop {
    pub token: TokenId,
    /// Early-window mean entropy minus late-window mean entropy.
    pub drop: f64,
    pub pos_occurrences: u64,
    pub neg_occurrences: u64,
    pub provenance: Provenance,
}

impl TokenEntropyHistory {
    pub fn new(vocab_size: usize) -> Self {
        TokenEntropyHistory {
            vocab_size,
            steps: Vec::new(),
            per_step: Vec::new(),
            pos_occurrences: vec![0; vocab_size],
            neg_occurrences: vec![0; vocab_size],
        }
    }

    /// Open accumulation for a new step; steps must arrive in order.
    pub fn begin_step(&mut self, step: u64) {
        assert!(self.steps.last().map_or(true, |&s| step > s), "steps must increase");
        self.steps.push(step);
        self.per_step.push(vec![(0.0, 0); self.vocab_size]);
    }

    pub fn record_token(&mut self, token: TokenId, entropy: f64, positive: bool) {
        let row = self.per_step.last_mut().expect("begin_step before record_token");
        row[token].0 += entropy;
        row[token].1 += 1;
        if positive {
            self.pos_occurrences[token] += 1;
        } else {
            self.neg_occurrences[token] += 1;
        }
    }

    pub fn record_response(&mut self, tokens: &[TokenId], entropies: &[f64], positive: bool) {
        for (&t, &h) in tokens.iter().zip(entropies) {
            self.record_token(t, h, positive);
        }
    }

    pub fn steps_recorded(&self) -> usize {
        self.steps.len()
    }

    /// Mean entropy of each token type over a span of recorded steps; `None`
    /// when the type never occurred there.
    fn window_means(&self, range: std::ops::Range<usize>) -> Vec<Option<f64>> {
        let mut out = vec![(0.0, 0u64); self.vocab_size];
        for row in &self.per_step[range] {
            for (acc, cell) in out.iter_mut().zip(row) {
                acc.0 += cell.0;
                acc.1 += cell.1;
            }
        }
        out.into_iter().map(|(s, c)| (c > 0).then(|| s / c as f64)).collect()
    }
}

/// Rank token types by early-minus-late mean entropy and return the top
/// `fraction` (at least one). The early and late windows each span
/// `window_frac` of the recorded steps (at least one step). Ties break by
/// token id; types absent from either window are not ranked.
pub fn top_entropy_drop_tokens(
    history: &TokenEntropyHistory,
    fraction: f64,
    window_frac: f64,
) -> Result<Vec<EntropyDrop>> {
    let n = history.steps_recorded();
    if n < 2 {
        return Err(Error::contract("entropy-drop ranking needs >= 2 recorded steps"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::contract("fraction must be in (0, 1]"));
    }
    let w = ((window_frac * n as f64).floor() as usize).clamp(1, n / 2);
    let early = history.window_means(0..w);
    let late = history.window_means(n - w..n);
    let mut drops: Vec<EntropyDrop> = Vec::new();
    for token in 0..history.vocab_size {
        let (Some(e), Some(l)) = (early[token], late[token]) else { continue };
        let (po, no) = (history.pos_occurrences[token], history.neg_occurrences[token]);
        let provenance = match (po > 0, no > 0) {
            (true, false) => Provenance::PositiveOnly,
            (false, true) => Provenance::NegativeOnly,
            _ => Provenance::Both,
        };
        drops.push(EntropyDrop {
            token,
            drop: e - l,
            pos_occurrences: po,
            neg_occurrences: no,
            provenance,
        });
    }
    drops.sort_by(|a, b| b.drop.partial_cmp(&a.drop).unwrap().then(a.token.cmp(&b.token)));
    let take = ((fraction * drops.len() as f64).ceil() as usize).min(drops.len());
    drops.truncate(take);
    Ok(drops)
}
