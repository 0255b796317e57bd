//! Featurized softmax policy with an analytic output-head gradient.
//!
//! The policy is `pi(v | q, o_<t) = softmax(W h / T)` where `h` is the frozen
//! feature vector for the context and only `W` is learned. For one token the
//! surrogate gradient with respect to `W` is the rank-1 matrix
//!
//! ```text
//! dJ/dW = alpha_t (e(o_t) - pi) h^T
//! ```
//!
//! so its Frobenius norm factors as `|alpha_t| * ||e - pi|| * ||h||`, which is
//! the per-token update-magnitude proxy the analysis tooling reports.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::rng::{stream_rng, Domain};
use crate::vocab::TokenId;

/// Learned head weights (V x d) and the softmax temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParameters {
    weights: Mat,
    temperature: f64,
}

impl PolicyParameters {
    pub fn new(weights: Mat, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) {
            return Err(Error::contract(format!("temperature must be > 0, got {temperature}")));
        }
        if !weights.is_finite() {
            return Err(Error::NonFinite("policy weights".into()));
        }
        Ok(PolicyParameters { weights, temperature })
    }

    /// Zero-initialized head: every distribution starts exactly uniform.
    pub fn zeros(vocab_size: usize, dim: usize, temperature: f64) -> Result<Self> {
        Self::new(Mat::zeros(vocab_size, dim), temperature)
    }

    /// Seeded uniform(-scale, scale) initialization.
    pub fn random(
        vocab_size: usize,
        dim: usize,
        temperature: f64,
        scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if scale == 0.0 {
            return Self::zeros(vocab_size, dim, temperature);
        }
        let mut rng = stream_rng(seed, Domain::PolicyInit, 0);
        let w = Mat::from_fn(vocab_size, dim, |_, _| rng.gen_range(-scale..scale));
        Self::new(w, temperature)
    }

    pub fn weights(&self) -> &Mat {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Mat {
        &mut self.weights
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    /// z = W h.
    pub fn logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.weights.cols() {
            return Err(Error::contract(format!(
                "feature dimension {} does not match head dimension {}",
                features.len(),
                self.weights.cols()
            )));
        }
        Ok(self.weights.matvec(features))
    }

    /// Next-token distribution for a feature vector, at the policy temperature.
    pub fn distribution(&self, features: &[f64]) -> Result<TokenDistribution> {
        TokenDistribution::from_logits(&self.logits(features)?, self.temperature)
    }
}

/// A probability distribution over the vocabulary together with the logits
/// that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDistribution {
    probs: Vec<f64>,
    logits: Vec<f64>,
}

impl TokenDistribution {
    /// Numerically stable softmax of `logits / temperature`.
    pub fn from_logits(logits: &[f64], temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) {
            return Err(Error::contract(format!("temperature must be > 0, got {temperature}")));
        }
        if logits.is_empty() {
            return Err(Error::contract("empty logits"));
        }
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("logits".into()));
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logits.iter().map(|z| ((z - max) / temperature).exp()).collect();
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= sum;
        }
        Ok(TokenDistribution { probs, logits: logits.to_vec() })
    }

    /// Build directly from probabilities (fixtures, degenerate one-hot cases).
    /// Logits are set to `ln p`, which is `-inf` for zero entries.
    pub fn from_probabilities(probs: &[f64]) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::contract("empty distribution"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::contract("probabilities must be finite and nonnegative"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!("probabilities sum to {sum}, not 1")));
        }
        let logits = probs.iter().map(|p| p.ln()).collect();
        Ok(TokenDistribution { probs: probs.to_vec(), logits })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn raw_logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn prob(&self, id: TokenId) -> f64 {
        self.probs[id]
    }

    /// Shannon entropy in nats, with `0 ln 0 := 0`.
    pub fn entropy(&self) -> f64 {
        self.probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
    }

    /// Highest-probability token, excluding `skip` if given. Ties break to the
    /// lowest id.
    pub fn argmax(&self, skip: Option<TokenId>) -> TokenId {
        let mut best: Option<(TokenId, f64)> = None;
        for (i, &p) in self.probs.iter().enumerate() {
            if Some(i) == skip {
                continue;
            }
            if best.map_or(true, |(_, bp)| p > bp) {
                best = Some((i, p));
            }
        }
        best.expect("argmax over empty or singleton-skipped distribution").0
    }

    /// The nucleus at `top_p`: the smallest prefix of tokens, by descending
    /// probability (ties to the lower id), whose mass reaches `top_p`,
    /// together with the renormalized probabilities. `top_p = 1` returns the
    /// full distribution unchanged.
    pub fn nucleus(&self, top_p: f64) -> (Vec<TokenId>, Vec<f64>) {
        assert!(top_p > 0.0 && top_p <= 1.0, "top_p must be in (0, 1]");
        if top_p >= 1.0 {
            return ((0..self.probs.len()).collect(), self.probs.clone());
        }
        let mut order: Vec<TokenId> = (0..self.probs.len()).collect();
        order.sort_by(|&a, &b| self.probs[b].partial_cmp(&self.probs[a]).unwrap().then(a.cmp(&b)));
        let mut mass = 0.0;
        let mut tokens = Vec::new();
        for &i in &order {
            tokens.push(i);
            mass += self.probs[i];
            if mass >= top_p {
                break;
            }
        }
        let renorm = tokens.iter().map(|&i| self.probs[i] / mass).collect();
        (tokens, renorm)
    }

    /// Nucleus sampling. Returns the token and its log-probability under the
    /// full (untruncated) distribution, so stored logprobs always agree with
    /// the analyzed distribution. `top_p = 1` is exact categorical sampling.
    pub fn sample<R: Rng + ?Sized>(&self, top_p: f64, rng: &mut R) -> (TokenId, f64) {
        let chosen = if top_p >= 1.0 {
            assert!(top_p <= 1.0, "top_p must be in (0, 1]");
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut chosen = self.probs.len() - 1;
            for (i, &p) in self.probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            let (tokens, renorm) = self.nucleus(top_p);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut chosen = *tokens.last().unwrap();
            for (&i, &p) in tokens.iter().zip(&renorm) {
                acc += p;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        (chosen, self.probs[chosen].ln())
    }
}

/// Rank-1 head gradient `alpha (e(chosen) - pi) h^T`.
pub fn token_policy_gradient(
    alpha: f64,
    dist: &TokenDistribution,
    chosen: TokenId,
    features: &[f64],
) -> Mat {
    assert!(chosen < dist.len(), "chosen token outside vocabulary");
    let mut u: Vec<f64> = dist.probabilities().iter().map(|p| -p).collect();
    u[chosen] += 1.0;
    let mut grad = Mat::zeros(dist.len(), features.len());
    grad.add_outer(alpha, &u, features);
    grad
}

/// Frobenius norm of the rank-1 gradient without materializing it:
/// `|alpha| * ||e(chosen) - pi||_2 * ||h||_2`.
pub fn grad_norm(alpha: f64, dist: &TokenDistribution, chosen: TokenId, features: &[f64]) -> f64 {
    assert!(chosen < dist.len(), "chosen token outside vocabulary");
    let mut diff_sq = 0.0;
    for (i, &p) in dist.probabilities().iter().enumerate() {
        let e = if i == chosen { 1.0 } else { 0.0 };
        diff_sq += (e - p) * (e - p);
    }
    let h_sq: f64 = features.iter().map(|x| x * x).sum();
    alpha.abs() * diff_sq.sqrt() * h_sq.sqrt()
}

/// Update rule selector for `apply_update`.
#[derive(Debug, Clone)]
pub enum OptimizerState {
    /// Plain gradient ascent on the surrogate objective.
    Sgd,
    /// Adaptive-moment ascent.
    Adam { m: Mat, v: Mat, step: u64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerState {
    pub fn sgd() -> Self {
        OptimizerState::Sgd
    }

    pub fn adam(vocab_size: usize, dim: usize) -> Self {
        OptimizerState::Adam {
            m: Mat::zeros(vocab_size, dim),
            v: Mat::zeros(vocab_size, dim),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Ascent step `W <- W + lr * g` (or the adaptive-moment variant). A
/// non-finite gradient aborts the step without touching the parameters.
pub fn apply_update(
    params: &mut PolicyParameters,
    gradient: &Mat,
    learning_rate: f64,
    state: &mut OptimizerState,
) -> Result<()> {
    if !gradient.same_shape(params.weights()) {
        return Err(Error::contract(format!(
            "gradient shape {}x{} does not match weights {}x{}",
            gradient.rows(),
            gradient.cols(),
            params.weights().rows(),
            params.weights().cols()
        )));
    }
    if !gradient.is_finite() {
        return Err(Error::NonFinite("aggregate gradient; step aborted".into()));
    }
    match state {
        OptimizerState::Sgd => {
            params.weights_mut().add_scaled(learning_rate, gradient);
        }
        OptimizerState::Adam { m, v, step, beta1, beta2, eps } => {
            *step += 1;
            let (b1, b2) = (*beta1, *beta2);
            let bc1 = 1.0 - b1.powi(*step as i32);
            let bc2 = 1.0 - b2.powi(*step as i32);
            let w = params.weights_mut().as_mut_slice();
            let g = gradient.as_slice();
            let (ms, vs) = (m.as_mut_slice(), v.as_mut_slice());
            for i in 0..w.len() {
                ms[i] = b1 * ms[i] + (1.0 - b1) * g[i];
                vs[i] = b2 * vs[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = ms[i] / bc1;
                let vhat = vs[i] / bc2;
                w[i] += learning_rate * mhat / (vhat.sqrt() + *eps);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn softmax_oracle(logits: &[f64], t: f64) -> Vec<f64> {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|z| ((z - max) / t).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|x| x / s).collect()
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let p = PolicyParameters::zeros(5, 3, 1.0).unwrap();
        let z = p.logits(&[0.3, -0.2, 0.9]).unwrap();
        assert_eq!(z, vec![0.0; 5]);
    }

    #[test]
    fn identity_weights_pass_features_through() {
        let w = Mat::from_fn(4, 4, |r, c| if r == c { 1.0 } else { 0.0 });
        let p = PolicyParameters::new(w, 1.0).unwrap();
        let z = p.logits(&[0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(z, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn logits_match_naive_product() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        use rand::Rng;
        let w = Mat::from_fn(6, 4, |_, _| rng.gen_range(-2.0..2.0));
        let h: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let p = PolicyParameters::new(w.clone(), 1.0).unwrap();
        let z = p.logits(&h).unwrap();
        for r in 0..6 {
            let mut acc = 0.0;
            for c in 0..4 {
                acc += w.get(r, c) * h[c];
            }
            assert!((z[r] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn logits_dimension_mismatch_is_contract_error() {
        let p = PolicyParameters::zeros(5, 3, 1.0).unwrap();
        assert!(p.logits(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn equal_logits_are_uniform() {
        let d = TokenDistribution::from_logits(&[2.5; 8], 0.7).unwrap();
        for &p in d.probabilities() {
            assert!((p - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn ln3_zero_gives_three_quarters() {
        let d = TokenDistribution::from_logits(&[3.0f64.ln(), 0.0], 1.0).unwrap();
        assert!((d.prob(0) - 0.75).abs() < 1e-12);
        assert!((d.prob(1) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn huge_temperature_flattens() {
        let d = TokenDistribution::from_logits(&[5.0, -1.0, 2.0, 0.0], 1e6).unwrap();
        assert!((d.entropy() - 4.0f64.ln()).abs() < 1e-3);
    }

    #[test]
    fn non_finite_logits_rejected() {
        assert!(TokenDistribution::from_logits(&[1.0, f64::NAN], 1.0).is_err());
        assert!(TokenDistribution::from_logits(&[1.0, f64::INFINITY], 1.0).is_err());
    }

    #[test]
    fn entropy_values() {
        let uniform = TokenDistribution::from_logits(&[0.0; 16], 1.0).unwrap();
        assert!((uniform.entropy() - 16.0f64.ln()).abs() < 1e-12);

        let onehot = TokenDistribution::from_probabilities(&[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(onehot.entropy(), 0.0);

        let d = TokenDistribution::from_probabilities(&[0.75, 0.25]).unwrap();
        assert!((d.entropy() - 0.5623351446188083).abs() < 1e-12);
    }

    #[test]
    fn sampling_one_hot_is_certain() {
        let d = TokenDistribution::from_probabilities(&[0.0, 0.0, 1.0, 0.0]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..64 {
            let (tok, lp) = d.sample(1.0, &mut rng);
            assert_eq!(tok, 2);
            assert_eq!(lp, 0.0);
        }
    }

    #[test]
    fn sampling_frequencies_match_uniform() {
        let d = TokenDistribution::from_logits(&[0.0; 4], 1.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[d.sample(1.0, &mut rng).0] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn nucleus_keeps_only_top_token() {
        let d = TokenDistribution::from_probabilities(&[0.6, 0.2, 0.1, 0.1]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let (tok, lp) = d.sample(0.5, &mut rng);
            assert_eq!(tok, 0);
            assert!((lp - 0.6f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_zero_cases() {
        let d = TokenDistribution::from_logits(&[0.4, -0.3, 0.1], 1.0).unwrap();
        let g = token_policy_gradient(0.0, &d, 1, &[1.0, 2.0]);
        assert!(g.as_slice().iter().all(|&x| x == 0.0));

        let onehot = TokenDistribution::from_probabilities(&[0.0, 1.0, 0.0]).unwrap();
        let g = token_policy_gradient(2.0, &onehot, 1, &[1.0, 2.0]);
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
    }

    /// Clipped-surrogate value as a function of the head weights, evaluated
    /// from scratch; the finite-difference oracle for the analytic gradient.
    fn surrogate_at(w: &Mat, h: &[f64], chosen: usize, old_lp: f64, adv: f64, lo: f64, hi: f64) -> f64 {
        let probs = softmax_oracle(&w.matvec(h), 1.0);
        let r = (probs[chosen].ln() - old_lp).exp();
        let clipped = r.clamp(1.0 - lo, 1.0 + hi);
        (r * adv).min(clipped * adv)
    }

    #[test]
    fn gradient_matches_finite_differences_of_clipped_surrogate() {
        let mut rng = ChaCha12Rng::seed_from_u64(20);
        use rand::Rng;
        let (lo, hi) = (0.2, 0.28);
        let mut tested = 0;
        while tested < 50 {
            let (vs, ds) = (3usize, 2usize);
            let w = Mat::from_fn(vs, ds, |_, _| rng.gen_range(-1.5..1.5));
            let h: Vec<f64> = (0..ds).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let chosen = rng.gen_range(0..vs);
            let adv: f64 = if rng.gen::<bool>() { rng.gen_range(0.2..2.0) } else { rng.gen_range(-2.0..-0.2) };
            let dist = TokenDistribution::from_logits(&w.matvec(&h), 1.0).unwrap();
            let new_lp = dist.prob(chosen).ln();
            let old_lp = new_lp - rng.gen_range(-0.4..0.4);
            let r = (new_lp - old_lp).exp();
            // Stay away from the clip kink where the surrogate is not differentiable.
            if (r - (1.0 - lo)).abs() < 1e-3 || (r - (1.0 + hi)).abs() < 1e-3 {
                continue;
            }
            tested += 1;
            let clipped_out = (adv > 0.0 && r > 1.0 + hi) || (adv < 0.0 && r < 1.0 - lo);
            let alpha = if clipped_out { 0.0 } else { r * adv };
            let analytic = token_policy_gradient(alpha, &dist, chosen, &h);

            let step = 1e-4;
            for rr in 0..vs {
                for cc in 0..ds {
                    let mut wp = w.clone();
                    wp.set(rr, cc, w.get(rr, cc) + step);
                    let mut wm = w.clone();
                    wm.set(rr, cc, w.get(rr, cc) - step);
                    let fd = (surrogate_at(&wp, &h, chosen, old_lp, adv, lo, hi)
                        - surrogate_at(&wm, &h, chosen, old_lp, adv, lo, hi))
                        / (2.0 * step);
                    let a = analytic.get(rr, cc);
                    let denom = a.abs().max(fd.abs()).max(1e-8);
                    assert!(
                        (fd - a).abs() / denom < 1e-5,
                        "fd {fd} vs analytic {a} at ({rr},{cc}), r={r}, adv={adv}"
                    );
                }
            }
        }
    }

    #[test]
    fn grad_norm_examples() {
        let d = TokenDistribution::from_probabilities(&[0.5, 0.5]).unwrap();
        let n = grad_norm(1.0, &d, 0, &[1.0]);
        assert!((n - 0.7071067811865476).abs() < 1e-12);
        assert_eq!(grad_norm(0.0, &d, 0, &[1.0]), 0.0);
    }

    #[test]
    fn grad_norm_matches_full_frobenius() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        use rand::Rng;
        for _ in 0..200 {
            let vs = rng.gen_range(2..8);
            let ds = rng.gen_range(1..8);
            let logits: Vec<f64> = (0..vs).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let h: Vec<f64> = (0..ds).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let d = TokenDistribution::from_logits(&logits, 1.0).unwrap();
            let chosen = rng.gen_range(0..vs);
            let alpha = rng.gen_range(-3.0..3.0);
            let full = token_policy_gradient(alpha, &d, chosen, &h).frobenius_norm();
            let fast = grad_norm(alpha, &d, chosen, &h);
            assert!((full - fast).abs() < 1e-10, "{full} vs {fast}");
        }
    }

    #[test]
    fn update_noops() {
        let mut p = PolicyParameters::zeros(3, 2, 1.0).unwrap();
        let snapshot = p.clone();
        let g = Mat::from_fn(3, 2, |r, c| (r + c) as f64);
        apply_update(&mut p, &g, 0.0, &mut OptimizerState::sgd()).unwrap();
        assert_eq!(p, snapshot);
        apply_update(&mut p, &Mat::zeros(3, 2), 0.5, &mut OptimizerState::sgd()).unwrap();
        assert_eq!(p, snapshot);
        apply_update(&mut p, &Mat::zeros(3, 2), 0.5, &mut OptimizerState::adam(3, 2)).unwrap();
        assert_eq!(p, snapshot);
    }

    #[test]
    fn update_rejects_non_finite_gradient() {
        let mut p = PolicyParameters::zeros(2, 2, 1.0).unwrap();
        let mut g = Mat::zeros(2, 2);
        g.set(0, 0, f64::NAN);
        let err = apply_update(&mut p, &g, 0.1, &mut OptimizerState::sgd());
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    #[test]
    fn ascent_step_raises_chosen_probability() {
        // One-context bandit: a single ascent step on alpha=+1 for token 2
        // must increase pi(2).
        let h = [0.6, -0.8];
        let mut p = PolicyParameters::zeros(3, 2, 1.0).unwrap();
        let before = p.distribution(&h).unwrap().prob(2);
        let d = p.distribution(&h).unwrap();
        let g = token_policy_gradient(1.0, &d, 2, &h);
        apply_update(&mut p, &g, 0.1, &mut OptimizerState::sgd()).unwrap();
        let after = p.distribution(&h).unwrap().prob(2);
        assert!(after > before, "{after} <= {before}");
    }
}
