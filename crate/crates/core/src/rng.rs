//! Deterministic RNG substreams.
//!
//! Every random decision in a run is drawn from a ChaCha stream keyed by
//! `(master seed, domain, index)`. Streams for different domains or indices
//! never overlap, so reordering work items or skipping a consumer cannot
//! shift the draws seen by another. This is what makes batch collection
//! order-independent and runs replayable byte-for-byte.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Independent random domains within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Task instance generation (indexed by instance id).
    Instance,
    /// Response sampling (indexed by instance id).
    Rollout,
    /// Frozen feature-map projection (index 0).
    FeatureInit,
    /// Per-prompt random codes in the feature map (indexed by prompt hash).
    PromptCode,
    /// Policy head initialization (index 0).
    PolicyInit,
    /// Continuation sampling in intervention studies (indexed by pair).
    Intervention,
    /// Stratified sampling of intervention targets (index 0).
    InterventionSelect,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Instance => 1,
            Domain::Rollout => 2,
            Domain::FeatureInit => 3,
            Domain::PromptCode => 4,
            Domain::PolicyInit => 5,
            Domain::Intervention => 6,
            Domain::InterventionSelect => 7,
        }
    }
}

/// RNG for `(seed, domain, index)`; identical arguments yield an identical
/// stream on every platform.
pub fn stream_rng(seed: u64, domain: Domain, index: u64) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.tag().to_le_bytes());
    let mut rng = ChaCha12Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
