//! Synthetic verifiable tasks.
//!
//! Two tasks share one response grammar: free reasoning tokens, then exactly
//! one `<ans>` delimiter, then the answer tokens, then `<eos>` (or the length
//! cap). The verifier is a pure function and the reward is +1 / -1.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Domain};
use crate::vocab::{TokenId, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub enum TaskKind {
    ModularAddition { modulus: u32 },
    BracketCompletion { max_depth: u32 },
}

#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Hard cap on sampled response length (includes `<eos>` when produced).
    pub max_response_len: usize,
    pub vocab: Vocabulary,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, max_response_len: usize, n_reasoning: usize) -> Result<Self> {
        if max_response_len < 3 {
            return Err(Error::config(format!(
                "max_response_len must be >= 3, got {max_response_len}"
            )));
        }
        let vocab = match &kind {
            TaskKind::ModularAddition { modulus } => {
                if !(2..=10).contains(modulus) {
                    return Err(Error::config("modulus must be in 2..=10"));
                }
                Vocabulary::modular_addition(*modulus, n_reasoning)?
            }
            TaskKind::BracketCompletion { max_depth } => {
                if *max_depth == 0 {
                    return Err(Error::config("max_depth must be >= 1"));
                }
                if *max_depth as usize + 2 > max_response_len {
                    return Err(Error::config(
                        "max_depth + 2 exceeds max_response_len; gold response cannot fit",
                    ));
                }
                Vocabulary::brackets(n_reasoning)?
            }
        };
        Ok(TaskSpec { kind, max_response_len, vocab })
    }

    pub fn modular_addition(modulus: u32, max_response_len: usize) -> Result<Self> {
        Self::new(TaskKind::ModularAddition { modulus }, max_response_len, 8)
    }

    pub fn brackets(max_depth: u32, max_response_len: usize, n_reasoning: usize) -> Result<Self> {
        Self::new(TaskKind::BracketCompletion { max_depth }, max_response_len, n_reasoning)
    }

    /// Modular-addition instance with fixed operands.
    pub fn modular_instance(&self, id: u64, a: u32, b: u32) -> Instance {
        let TaskKind::ModularAddition { modulus } = self.kind else {
            panic!("modular_instance on a non-modular task");
        };
        assert!(a < modulus && b < modulus);
        let digit = |d: u32| self.vocab.id_of(&d.to_string()).expect("digit token");
        let prompt = vec![
            digit(a),
            self.vocab.id_of("+").expect("operator token"),
            digit(b),
            self.vocab.id_of(&format!("<mod{modulus}>")).expect("modulus token"),
        ];
        Instance { id, prompt, truth: vec![digit((a + b) % modulus)] }
    }

    /// Bracket-completion instance with a fixed opening depth.
    pub fn bracket_instance(&self, id: u64, depth: u32) -> Instance {
        let TaskKind::BracketCompletion { max_depth } = self.kind else {
            panic!("bracket_instance on a non-bracket task");
        };
        assert!(depth >= 1 && depth <= max_depth);
        let open = self.vocab.id_of("(").expect("open token");
        let close = self.vocab.id_of(")").expect("close token");
        Instance {
            id,
            prompt: vec![open; depth as usize],
            truth: vec![close; depth as usize],
        }
    }

    /// The canonical correct response: `<ans>` + answer tokens + `<eos>`.
    pub fn gold_response(&self, instance: &Instance) -> Vec<TokenId> {
        let mut r = vec![self.vocab.delimiter()];
        r.extend_from_slice(&instance.truth);
        r.push(self.vocab.eos());
        r
    }
}

/// One task instance: the prompt and the answer tokens the verifier expects
/// after the delimiter. `id` keys the deterministic RNG substreams used to
/// roll out this instance, so batches are order-independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: u64,
    pub prompt: Vec<TokenId>,
    pub truth: Vec<TokenId>,
}

/// Draw a random instance. All prompt tokens come from the prompt-role subset.
pub fn generate_instance(spec: &TaskSpec, id: u64, rng: &mut impl Rng) -> Instance {
    match spec.kind {
        TaskKind::ModularAddition { modulus } => {
            let a = rng.gen_range(0..modulus);
            let b = rng.gen_range(0..modulus);
            spec.modular_instance(id, a, b)
        }
        TaskKind::BracketCompletion { max_depth } => {
            let depth = rng.gen_range(1..=max_depth);
            spec.bracket_instance(id, depth)
        }
    }
}

/// The instance at `(seed, index)`; reproducible independent of call order.
pub fn instance_at(spec: &TaskSpec, seed: u64, index: u64) -> Instance {
    let mut rng = stream_rng(seed, Domain::Instance, index);
    generate_instance(spec, index, &mut rng)
}

/// Verifier output. A format violation always implies `correct = false`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub correct: bool,
    pub format_violation: bool,
}

/// Check a response: the body (tokens before the first `<eos>`) must contain
/// exactly one delimiter, and the tokens after it must equal the ground
/// truth. A delimiter count other than one is a format violation.
pub fn verify(spec: &TaskSpec, instance: &Instance, response: &[TokenId]) -> Verdict {
    let eos = spec.vocab.eos();
    let body_len = response.iter().position(|&t| t == eos).unwrap_or(response.len());
    let body = &response[..body_len];
    let delim = spec.vocab.delimiter();
    let delim_count = body.iter().filter(|&&t| t == delim).count();
    if delim_count != 1 {
        return Verdict { correct: false, format_violation: true };
    }
    let pos = body.iter().position(|&t| t == delim).unwrap();
    let answer = &body[pos + 1..];
    Verdict { correct: answer == instance.truth.as_slice(), format_violation: false }
}

/// Binary reward: +1 if correct, -1 otherwise.
pub fn reward(verdict: &Verdict) -> f64 {
    if verdict.correct {
        1.0
    } else {
        -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mod10() -> TaskSpec {
        TaskSpec::modular_addition(10, 16).unwrap()
    }

    #[test]
    fn modular_truths() {
        let spec = mod10();
        assert_eq!(spec.modular_instance(0, 3, 4).truth, vec![7]);
        assert_eq!(spec.modular_instance(0, 7, 8).truth, vec![5]);
    }

    #[test]
    fn bracket_truth_matches_depth() {
        let spec = TaskSpec::brackets(4, 16, 8).unwrap();
        let inst = spec.bracket_instance(0, 2);
        let close = spec.vocab.id_of(")").unwrap();
        assert_eq!(inst.truth, vec![close, close]);
        assert_eq!(inst.prompt.len(), 2);
    }

    #[test]
    fn prompts_use_prompt_role_tokens_only() {
        let spec = mod10();
        let mut rng = stream_rng(5, Domain::Instance, 0);
        for i in 0..50 {
            let inst = generate_instance(&spec, i, &mut rng);
            for &t in &inst.prompt {
                assert!(spec.vocab.roles(t).prompt, "non-prompt token {t} in prompt");
            }
        }
    }

    #[test]
    fn verify_gold_and_failure_modes() {
        let spec = mod10();
        let inst = spec.modular_instance(0, 3, 4);
        let gold = spec.gold_response(&inst);
        let v = verify(&spec, &inst, &gold);
        assert!(v.correct && !v.format_violation);
        assert_eq!(reward(&v), 1.0);

        // No delimiter at all: format violation.
        let so = spec.vocab.id_of("so").unwrap();
        let v = verify(&spec, &inst, &[so, so, spec.vocab.eos()]);
        assert!(!v.correct && v.format_violation);
        assert_eq!(reward(&v), -1.0);

        // Right format, wrong answer.
        let six = spec.vocab.id_of("6").unwrap();
        let v = verify(&spec, &inst, &[so, spec.vocab.delimiter(), six, spec.vocab.eos()]);
        assert!(!v.correct && !v.format_violation);

        // Two delimiters: violation even if an answer is present.
        let seven = spec.vocab.id_of("7").unwrap();
        let d = spec.vocab.delimiter();
        let v = verify(&spec, &inst, &[d, d, seven]);
        assert!(!v.correct && v.format_violation);

        // Trailing junk after the answer: wrong but well-formed.
        let v = verify(&spec, &inst, &[d, seven, six]);
        assert!(!v.correct && !v.format_violation);

        // Tokens after <eos> are ignored.
        let v = verify(&spec, &inst, &[d, seven, spec.vocab.eos(), d, d]);
        assert!(v.correct);
    }

    #[test]
    fn verifier_sound_on_all_instances() {
        let spec = mod10();
        let TaskKind::ModularAddition { modulus } = spec.kind else { unreachable!() };
        for a in 0..modulus {
            for b in 0..modulus {
                let inst = spec.modular_instance(0, a, b);
                assert!(verify(&spec, &inst, &spec.gold_response(&inst)).correct);
            }
        }
        let bspec = TaskSpec::brackets(6, 16, 4).unwrap();
        for depth in 1..=6 {
            let inst = bspec.bracket_instance(0, depth);
            assert!(verify(&bspec, &inst, &bspec.gold_response(&inst)).correct);
        }
    }

    #[test]
    fn instances_reproducible_from_seed_and_index() {
        let spec = mod10();
        let a = instance_at(&spec, 99, 7);
        let b = instance_at(&spec, 99, 7);
        assert_eq!(a, b);
        let c = instance_at(&spec, 99, 8);
        // Different index gives an independent draw (prompt may or may not
        // differ; the id always does).
        assert_eq!(c.id, 8);
    }

    #[test]
    fn l_max_floor_enforced() {
        assert!(TaskSpec::modular_addition(10, 2).is_err());
        assert!(TaskSpec::brackets(20, 16, 0).is_err());
    }
}
