//! Task vocabularies.
//!
//! A vocabulary is an ordered list of token strings; the token id is the
//! index. Tokens carry role flags (prompt / reasoning / answer) plus three
//! distinguished singletons: the answer delimiter, the end-of-sequence
//! marker, and the pad symbol used to left-fill feature contexts.

use crate::error::{Error, Result};

pub type TokenId = usize;

/// Role flags for one token. A token may hold several roles (digits are both
/// prompt and answer tokens in the modular-addition task).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Roles {
    pub prompt: bool,
    pub reasoning: bool,
    pub answer: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    roles: Vec<Roles>,
    delimiter: TokenId,
    eos: TokenId,
    pad: TokenId,
}

/// Free reasoning tokens shared by the built-in tasks.
pub const REASONING_WORDS: [&str; 8] =
    ["so", "then", "however", "wait", "check", "the", "we", "note"];

impl Vocabulary {
    /// Build a vocabulary from `(text, roles)` pairs plus the three special
    /// token texts, which must each appear exactly once among `tokens`.
    pub fn new(
        tokens: Vec<(String, Roles)>,
        delimiter: &str,
        eos: &str,
        pad: &str,
    ) -> Result<Self> {
        let texts: Vec<String> = tokens.iter().map(|(t, _)| t.clone()).collect();
        for (i, t) in texts.iter().enumerate() {
            if texts[..i].contains(t) {
                return Err(Error::contract(format!("duplicate token {t:?}")));
            }
        }
        let find_unique = |needle: &str| -> Result<TokenId> {
            let mut hits = texts.iter().enumerate().filter(|(_, t)| t.as_str() == needle);
            let id = hits
                .next()
                .map(|(i, _)| i)
                .ok_or_else(|| Error::contract(format!("missing special token {needle:?}")))?;
            Ok(id)
        };
        let delimiter = find_unique(delimiter)?;
        let eos = find_unique(eos)?;
        let pad = find_unique(pad)?;
        let roles = tokens.iter().map(|(_, r)| *r).collect();
        Ok(Vocabulary { tokens: texts, roles, delimiter, eos, pad })
    }

    /// Vocabulary for modular addition: the digits (prompt + answer roles),
    /// the operator and modulus marker (prompt), `n_reasoning` free reasoning
    /// words, and the specials.
    pub fn modular_addition(modulus: u32, n_reasoning: usize) -> Result<Self> {
        assert!(modulus >= 2 && modulus <= 10, "modulus must be in 2..=10");
        assert!(n_reasoning <= REASONING_WORDS.len());
        let mut toks = Vec::new();
        for d in 0..modulus {
            toks.push((d.to_string(), Roles { prompt: true, answer: true, reasoning: false }));
        }
        toks.push(("+".to_string(), Roles { prompt: true, ..Roles::default() }));
        toks.push((format!("<mod{modulus}>"), Roles { prompt: true, ..Roles::default() }));
        for w in &REASONING_WORDS[..n_reasoning] {
            toks.push((w.to_string(), Roles { reasoning: true, ..Roles::default() }));
        }
        toks.push(("<ans>".to_string(), Roles::default()));
        toks.push(("<eos>".to_string(), Roles::default()));
        toks.push(("<pad>".to_string(), Roles::default()));
        Self::new(toks, "<ans>", "<eos>", "<pad>")
    }

    /// Vocabulary for bracket completion: `(` is a prompt token, `)` an
    /// answer token. With `n_reasoning = 0` this is a 5-token vocabulary,
    /// small enough for exhaustive continuation enumeration.
    pub fn brackets(n_reasoning: usize) -> Result<Self> {
        assert!(n_reasoning <= REASONING_WORDS.len());
        let mut toks = vec![
            ("(".to_string(), Roles { prompt: true, ..Roles::default() }),
            (")".to_string(), Roles { answer: true, ..Roles::default() }),
        ];
        for w in &REASONING_WORDS[..n_reasoning] {
            toks.push((w.to_string(), Roles { reasoning: true, ..Roles::default() }));
        }
        toks.push(("<ans>".to_string(), Roles::default()));
        toks.push(("<eos>".to_string(), Roles::default()));
        toks.push(("<pad>".to_string(), Roles::default()));
        Self::new(toks, "<ans>", "<eos>", "<pad>")
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn text(&self, id: TokenId) -> &str {
        &self.tokens[id]
    }

    pub fn id_of(&self, text: &str) -> Option<TokenId> {
        self.tokens.iter().position(|t| t == text)
    }

    pub fn contains(&self, id: TokenId) -> bool {
        id < self.tokens.len()
    }

    pub fn roles(&self, id: TokenId) -> Roles {
        self.roles[id]
    }

    pub fn delimiter(&self) -> TokenId {
        self.delimiter
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn pad(&self) -> TokenId {
        self.pad
    }

    /// Prompt-role token ids.
    pub fn prompt_tokens(&self) -> impl Iterator<Item = TokenId> + '_ {
        (0..self.size()).filter(|&i| self.roles[i].prompt)
    }

    /// Whether a token is legitimate inside a response body: reasoning or
    /// answer role, or one of delimiter / eos. Everything else (prompt-only
    /// tokens, pad) counts as out-of-alphabet for quality checks.
    pub fn response_allowed(&self, id: TokenId) -> bool {
        id == self.delimiter
            || id == self.eos
            || self.roles[id].reasoning
            || self.roles[id].answer
    }

    /// Render a token sequence, space-separated.
    pub fn render(&self, ids: &[TokenId]) -> String {
        ids.iter().map(|&i| self.text(i)).collect::<Vec<_>>().join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modular_vocab_layout() {
        let v = Vocabulary::modular_addition(10, 8).unwrap();
        assert_eq!(v.size(), 23);
        assert_eq!(v.id_of("7"), Some(7));
        assert!(v.roles(v.id_of("7").unwrap()).prompt);
        assert!(v.roles(v.id_of("7").unwrap()).answer);
        assert!(v.roles(v.id_of("+").unwrap()).prompt);
        assert!(v.roles(v.id_of("however").unwrap()).reasoning);
        assert!(!v.response_allowed(v.id_of("+").unwrap()));
        assert!(v.response_allowed(v.id_of("7").unwrap()));
        assert!(v.response_allowed(v.eos()));
        assert!(!v.response_allowed(v.pad()));
    }

    #[test]
    fn bracket_vocab_is_five_tokens_bare() {
        let v = Vocabulary::brackets(0).unwrap();
        assert_eq!(v.size(), 5);
    }

    #[test]
    fn duplicate_tokens_rejected() {
        let toks = vec![
            ("a".to_string(), Roles::default()),
            ("a".to_string(), Roles::default()),
            ("<ans>".to_string(), Roles::default()),
            ("<eos>".to_string(), Roles::default()),
            ("<pad>".to_string(), Roles::default()),
        ];
        assert!(Vocabulary::new(toks, "<ans>", "<eos>", "<pad>").is_err());
    }

    #[test]
    fn missing_special_rejected() {
        let toks = vec![
            ("a".to_string(), Roles::default()),
            ("<eos>".to_string(), Roles::default()),
            ("<pad>".to_string(), Roles::default()),
        ];
        assert!(Vocabulary::new(toks, "<ans>", "<eos>", "<pad>").is_err());
    }
}
