//! Frozen random feature map.
//!
//! Stands in for the hidden state feeding the output head: a fixed random
//! projection of the prompt summary and the last `k_ctx` generated tokens,
//! normalized to unit length. The projection is seeded once per run and never
//! trained, so the analytic head gradient is the exact gradient of the whole
//! policy.
//!
//! The prompt summary has two parts: a position-weighted bag of the prompt
//! tokens, and a random code keyed by the full prompt content. The code gives
//! distinct prompts well-separated directions, the way a trained encoder
//! would; without it a linear head cannot tell `3 + 4` from `4 + 5` apart
//! well enough to answer per-prompt questions. The code is a pure function of
//! (seed, prompt tokens) and carries no information about the answer.

use rand::Rng;

use crate::mat::Mat;
use crate::rng::{stream_rng, Domain};
use crate::vocab::{TokenId, Vocabulary};

/// Weight of position j of the prompt bag: (j + 1) / 2. Order-sensitive but
/// deliberately small next to the code and context components.
const BAG_POSITION_WEIGHT: f64 = 0.5;
/// Magnitude of each context one-hot; keeps recent-token information
/// prominent in the normalized feature vector.
const CONTEXT_SCALE: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct FeatureMap {
    context_width: usize,
    dim: usize,
    seed: u64,
    vocab_size: usize,
    code_dim: usize,
    code_scale: f64,
    /// dim x input_dim; input = [bag | prompt code | k_ctx one-hots | bias].
    projection: Mat,
}

/// Prompt-dependent part of the projection, computed once per instance and
/// reused for every position of every response to that prompt.
#[derive(Debug, Clone)]
pub struct PromptFeatures {
    base: Vec<f64>,
}

impl FeatureMap {
    pub fn new(
        vocab_size: usize,
        dim: usize,
        context_width: usize,
        code_dim: usize,
        code_scale: f64,
        seed: u64,
    ) -> Self {
        assert!(dim > 0, "feature dimension must be positive");
        let input_dim = vocab_size + code_dim + context_width * vocab_size + 1;
        let mut rng = stream_rng(seed, Domain::FeatureInit, 0);
        let projection = Mat::from_fn(dim, input_dim, |_, _| rng.gen_range(-1.0..1.0));
        FeatureMap { context_width, dim, seed, vocab_size, code_dim, code_scale, projection }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn context_width(&self) -> usize {
        self.context_width
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Feature vector for (prompt, generated-so-far). The context is the last
    /// `context_width` generated tokens, left-padded with the pad symbol.
    pub fn feature_vector(
        &self,
        vocab: &Vocabulary,
        prompt: &[TokenId],
        generated: &[TokenId],
    ) -> Vec<f64> {
        let base = self.prompt_features(prompt);
        self.features_from_cache(vocab, &base, generated)
    }

    /// Precompute the prompt part: bag, code, and bias columns.
    pub fn prompt_features(&self, prompt: &[TokenId]) -> PromptFeatures {
        let in_dim = self.projection.cols();
        let mut base = vec![0.0; self.dim];
        // Bag of prompt tokens, position-weighted so reorderings of the
        // prompt map to distinct summaries.
        for (j, &tok) in prompt.iter().enumerate() {
            debug_assert!(tok < self.vocab_size);
            let w = (j + 1) as f64 * BAG_POSITION_WEIGHT;
            for (r, b) in base.iter_mut().enumerate() {
                *b += w * self.projection.get(r, tok);
            }
        }
        // Prompt code: +-code_scale entries drawn from a stream keyed by the
        // prompt content hash.
        if self.code_dim > 0 && self.code_scale != 0.0 {
            let mut rng = stream_rng(self.seed, Domain::PromptCode, fnv1a(prompt));
            for c in 0..self.code_dim {
                let sign: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                let col = self.vocab_size + c;
                for (r, b) in base.iter_mut().enumerate() {
                    *b += self.code_scale * sign * self.projection.get(r, col);
                }
            }
        }
        let bias_col = in_dim - 1;
        for (r, b) in base.iter_mut().enumerate() {
            *b += self.projection.get(r, bias_col);
        }
        PromptFeatures { base }
    }

    /// Finish the feature vector from a cached prompt part. Equivalent to
    /// `feature_vector` (verified in tests), but O(k_ctx * d) per token.
    pub fn features_from_cache(
        &self,
        vocab: &Vocabulary,
        prompt_features: &PromptFeatures,
        generated: &[TokenId],
    ) -> Vec<f64> {
        let mut v = prompt_features.base.clone();
        let pad = vocab.pad();
        let ctx_base = self.vocab_size + self.code_dim;
        for slot in 0..self.context_width {
            // slot 0 holds the oldest of the k_ctx context tokens.
            let need = self.context_width - slot;
            let tok = if generated.len() >= need { generated[generated.len() - need] } else { pad };
            let col = ctx_base + slot * self.vocab_size + tok;
            for (r, b) in v.iter_mut().enumerate() {
                *b += CONTEXT_SCALE * self.projection.get(r, col);
            }
        }
        normalize(&mut v);
        v
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    } else {
        v[0] = 1.0;
    }
}

/// FNV-1a over the token ids; keys the per-prompt code stream.
fn fnv1a(tokens: &[TokenId]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &t in tokens {
        for byte in (t as u64).to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash
}
