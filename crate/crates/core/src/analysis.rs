//! Token taxonomy, response quality heuristics, and run-level reports.
//!
//! Tokens are grouped into four disjoint roles (formal reasoning, logical
//! structuring, metacognitive, semantic support); anything unlisted defaults
//! to semantic support. Quality flags cover malformed answers (delimiter
//! count != 1), repetitive text (a short window repeated back-to-back), and
//! out-of-alphabet tokens (tokens that have no business in a response body).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logs::{RolloutDumpLine, StepMetrics};
use crate::metrics::{
    positional_profile_from_pairs, top_entropy_drop_tokens, Provenance, StageLabel,
    TokenEntropyHistory,
};
use crate::rollout::relative_position;
use crate::vocab::{TokenId, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenCategory {
    FormalReasoning,
    LogicalStructuring,
    Metacognitive,
    SemanticSupport,
}

/// Explicit category membership per token id; the four sets are disjoint and
/// everything else falls back to semantic support.
#[derive(Debug, Clone)]
pub struct TokenLexicon {
    formal: Vec<bool>,
    logical: Vec<bool>,
    metacognitive: Vec<bool>,
    vocab_size: usize,
}

/// Serializable lexicon: token texts per category, stored next to the run
/// config so reports are reproducible against the exact vocabulary used.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LexiconFile {
    pub formal_reasoning: Vec<String>,
    pub logical_structuring: Vec<String>,
    pub metacognitive: Vec<String>,
    pub semantic_support: Vec<String>,
}

impl TokenLexicon {
    pub fn from_file(file: &LexiconFile, vocab: &Vocabulary) -> Result<Self> {
        let mut formal = vec![false; vocab.size()];
        let mut logical = vec![false; vocab.size()];
        let mut metacognitive = vec![false; vocab.size()];
        let mut seen = vec![false; vocab.size()];
        let mut fill = |texts: &[String], mut set: Option<&mut Vec<bool>>| -> Result<()> {
            for t in texts {
                let id = vocab
                    .id_of(t)
                    .ok_or_else(|| Error::config(format!("lexicon token {t:?} not in vocabulary")))?;
                if seen[id] {
                    return Err(Error::config(format!(
                        "lexicon token {t:?} listed in more than one category"
                    )));
                }
                seen[id] = true;
                if let Some(set) = set.as_deref_mut() {
                    set[id] = true;
                }
            }
            Ok(())
        };
        fill(&file.formal_reasoning, Some(&mut formal))?;
        fill(&file.logical_structuring, Some(&mut logical))?;
        fill(&file.metacognitive, Some(&mut metacognitive))?;
        // Explicit semantic entries only need the disjointness check; the
        // category is the default anyway.
        fill(&file.semantic_support, None)?;
        Ok(TokenLexicon { formal, logical, metacognitive, vocab_size: vocab.size() })
    }

    /// Built-in lexicon for the bundled task vocabularies: digits, operators
    /// and brackets are formal; connectives are logical; self-monitoring
    /// words are metacognitive.
    pub fn default_file(vocab: &Vocabulary) -> LexiconFile {
        let mut file = LexiconFile::default();
        for id in 0..vocab.size() {
            let text = vocab.text(id).to_string();
            let formal = text.chars().all(|c| c.is_ascii_digit())
                || matches!(text.as_str(), "+" | "(" | ")")
                || text.starts_with("<mod");
            let logical = matches!(text.as_str(), "so" | "then" | "however");
            let meta = matches!(text.as_str(), "wait" | "check");
            let semantic = matches!(text.as_str(), "the" | "we" | "note");
            if formal {
                file.formal_reasoning.push(text);
            } else if logical {
                file.logical_structuring.push(text);
            } else if meta {
                file.metacognitive.push(text);
            } else if semantic {
                file.semantic_support.push(text);
            }
        }
        file
    }

    pub fn default_for(vocab: &Vocabulary) -> Self {
        Self::from_file(&Self::default_file(vocab), vocab).expect("built-in lexicon is valid")
    }
}

/// Category lookup; errors on ids outside the vocabulary.
pub fn categorize_token(token: TokenId, lexicon: &TokenLexicon) -> Result<TokenCategory> {
    if token >= lexicon.vocab_size {
        return Err(Error::contract(format!("token id {token} outside vocabulary")));
    }
    Ok(if lexicon.formal[token] {
        TokenCategory::FormalReasoning
    } else if lexicon.logical[token] {
        TokenCategory::LogicalStructuring
    } else if lexicon.metacognitive[token] {
        TokenCategory::Metacognitive
    } else {
        TokenCategory::SemanticSupport
    })
}

/// Quality heuristics configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QualityRules {
    /// Longest window checked for back-to-back repetition.
    pub max_period: usize,
    /// Minimum number of back-to-back repeats that counts as repetition.
    pub min_repeats: usize,
}

impl Default for QualityRules {
    fn default() -> Self {
        QualityRules { max_period: 4, min_repeats: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QualityFlags {
    pub format_violation: bool,
    pub repetition: bool,
    pub out_of_alphabet: bool,
}

impl QualityFlags {
    pub fn any(&self) -> bool {
        self.format_violation || self.repetition || self.out_of_alphabet
    }
}

/// Flag quality issues in a response. All checks run over the body (tokens
/// before the first `<eos>`), matching the verifier's view.
pub fn detect_quality_issues(
    vocab: &Vocabulary,
    response: &[TokenId],
    rules: &QualityRules,
) -> QualityFlags {
    let body_len = response.iter().position(|&t| t == vocab.eos()).unwrap_or(response.len());
    let body = &response[..body_len];
    let delim_count = body.iter().filter(|&&t| t == vocab.delimiter()).count();
    QualityFlags {
        format_violation: delim_count != 1,
        repetition: has_periodic_repeat(body, rules.max_period, rules.min_repeats),
        out_of_alphabet: body.iter().any(|&t| !vocab.response_allowed(t)),
    }
}

/// True when some window of length <= `max_period` repeats at least
/// `min_repeats` times back-to-back.
fn has_periodic_repeat(body: &[TokenId], max_period: usize, min_repeats: usize) -> bool {
    if min_repeats <= 1 {
        return !body.is_empty();
    }
    for period in 1..=max_period.min(body.len()) {
        // A block of `period` tokens repeated r times means (r-1) * period
        // consecutive positions matching the token `period` places back.
        let needed = (min_repeats - 1) * period;
        let mut run = 0usize;
        for i in period..body.len() {
            if body[i] == body[i - period] {
                run += 1;
                if run >= needed {
                    return true;
                }
            } else {
                run = 0;
            }
        }
    }
    false
}

// ---------------------------------------------------------------------------
// Run-level report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub formal_reasoning: f64,
    pub logical_structuring: f64,
    pub metacognitive: f64,
    pub semantic_support: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityRate {
    pub step: u64,
    pub format_violation: f64,
    pub repetition: f64,
    pub out_of_alphabet: f64,
    pub any: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropEntry {
    pub token: TokenId,
    pub text: String,
    pub drop: f64,
    pub pos_occurrences: u64,
    pub neg_occurrences: u64,
    pub provenance: Provenance,
}

/// Machine-readable run summary: scalars plus named series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema: u32,
    /// Training steps covered by the metrics log.
    pub steps: usize,
    /// Steps present in the rollout dump.
    pub dumped_steps: usize,
    /// Malformed log lines skipped while reading.
    pub warnings: usize,
    pub mean_response_len: Option<f64>,
    /// Mean token count per response, by category.
    pub category_counts_per_response: Option<CategoryCounts>,
    /// Quality-issue rates per dumped step.
    pub quality_per_step: Vec<QualityRate>,
    pub mean_entropy_series: Vec<f64>,
    pub pos_entropy_series: Vec<Option<f64>>,
    pub neg_entropy_series: Vec<Option<f64>>,
    pub accuracy_series: Vec<f64>,
    pub shift_fraction_series: Vec<f64>,
    pub positional_profile: Vec<Option<f64>>,
    pub stage_transition_step: Option<u64>,
    pub top_entropy_drops: Vec<DropEntry>,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Report options, surfaced from the experiment's metrics configuration.
#[derive(Debug, Clone, Copy)]
pub struct ReportOptions {
    pub position_bins: usize,
    pub drop_fraction: f64,
    pub drop_window_frac: f64,
    pub quality: QualityRules,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            position_bins: 20,
            drop_fraction: 0.2,
            drop_window_frac: 0.25,
            quality: QualityRules::default(),
        }
    }
}

/// Build the run report from parsed logs. `warnings` carries the malformed
/// line count from the (lossy) readers.
pub fn summarize_run(
    metrics: &[StepMetrics],
    dump: &[RolloutDumpLine],
    vocab: &Vocabulary,
    lexicon: &TokenLexicon,
    opts: &ReportOptions,
    warnings: usize,
) -> Result<AnalysisReport> {
    // Series straight from the metrics log.
    let mean_entropy_series: Vec<f64> = metrics.iter().map(|m| m.mean_entropy).collect();
    let pos_entropy_series: Vec<Option<f64>> = metrics.iter().map(|m| m.pos_entropy).collect();
    let neg_entropy_series: Vec<Option<f64>> = metrics.iter().map(|m| m.neg_entropy).collect();
    let accuracy_series: Vec<f64> = metrics.iter().map(|m| m.accuracy).collect();
    let shift_fraction_series: Vec<f64> =
        metrics.iter().map(|m| m.shift_fraction_small).collect();
    let stage_transition_step =
        metrics.iter().find(|m| m.stage == StageLabel::Plateau).map(|m| m.step);

    // Everything else comes from the rollout dump.
    let mut dumped_steps: Vec<u64> = Vec::new();
    let mut length_sum = 0usize;
    let mut counts = CategoryCounts::default();
    let mut history = TokenEntropyHistory::new(vocab.size());
    let mut quality_per_step: Vec<QualityRate> = Vec::new();
    let mut step_quality: Option<(u64, [u64; 3], u64, u64)> = None; // (step, flag counts, any, responses)
    let flush_quality =
        |acc: &mut Option<(u64, [u64; 3], u64, u64)>, out: &mut Vec<QualityRate>| {
            if let Some((step, flags, any, n)) = acc.take() {
                let n = n as f64;
                out.push(QualityRate {
                    step,
                    format_violation: flags[0] as f64 / n,
                    repetition: flags[1] as f64 / n,
                    out_of_alphabet: flags[2] as f64 / n,
                    any: any as f64 / n,
                });
            }
        };

    for line in dump {
        if line.tokens.len() != line.logprobs.len() || line.tokens.len() != line.entropies.len() {
            return Err(Error::Mismatch(format!(
                "dump line at step {} has inconsistent token/logprob/entropy lengths",
                line.step
            )));
        }
        if dumped_steps.last() != Some(&line.step) {
            if let Some(&prev) = dumped_steps.last() {
                if line.step < prev {
                    return Err(Error::Mismatch("rollout dump steps out of order".into()));
                }
            }
            dumped_steps.push(line.step);
            history.begin_step(line.step);
            flush_quality(&mut step_quality, &mut quality_per_step);
            step_quality = Some((line.step, [0; 3], 0, 0));
        }
        length_sum += line.tokens.len();
        for &tok in &line.tokens {
            match categorize_token(tok, lexicon)? {
                TokenCategory::FormalReasoning => counts.formal_reasoning += 1.0,
                TokenCategory::LogicalStructuring => counts.logical_structuring += 1.0,
                TokenCategory::Metacognitive => counts.metacognitive += 1.0,
                TokenCategory::SemanticSupport => counts.semantic_support += 1.0,
            }
        }
        history.record_response(&line.tokens, &line.entropies, line.reward > 0.0);
        let flags = detect_quality_issues(vocab, &line.tokens, &opts.quality);
        let acc = step_quality.as_mut().unwrap();
        acc.1[0] += flags.format_violation as u64;
        acc.1[1] += flags.repetition as u64;
        acc.1[2] += flags.out_of_alphabet as u64;
        acc.2 += flags.any() as u64;
        acc.3 += 1;
    }
    flush_quality(&mut step_quality, &mut quality_per_step);

    let responses = dump.len();
    let mean_response_len =
        (responses > 0).then(|| length_sum as f64 / responses as f64);
    let category_counts_per_response = (responses > 0).then(|| {
        let n = responses as f64;
        CategoryCounts {
            formal_reasoning: counts.formal_reasoning / n,
            logical_structuring: counts.logical_structuring / n,
            metacognitive: counts.metacognitive / n,
            semantic_support: counts.semantic_support / n,
        }
    });

    let positional_profile = if responses > 0 {
        positional_profile_from_pairs(
            dump.iter().flat_map(|line| {
                let n = line.tokens.len();
                line.entropies
                    .iter()
                    .enumerate()
                    .map(move |(t, &h)| (relative_position(t, n), h))
            }),
            opts.position_bins,
        )?
    } else {
        vec![None; opts.position_bins]
    };

    let top_entropy_drops = if history.steps_recorded() >= 2 {
        top_entropy_drop_tokens(&history, opts.drop_fraction, opts.drop_window_frac)?
            .into_iter()
            .map(|d| DropEntry {
                token: d.token,
                text: vocab.text(d.token).to_string(),
                drop: d.drop,
                pos_occurrences: d.pos_occurrences,
                neg_occurrences: d.neg_occurrences,
                provenance: d.provenance,
            })
            .collect()
    } else {
        Vec::new()
    };

    Ok(AnalysisReport {
        schema: REPORT_SCHEMA_VERSION,
        steps: metrics.len(),
        dumped_steps: dumped_steps.len(),
        warnings,
        mean_response_len,
        category_counts_per_response,
        quality_per_step,
        mean_entropy_series,
        pos_entropy_series,
        neg_entropy_series,
        accuracy_series,
        shift_fraction_series,
        positional_profile,
        stage_transition_step,
        top_entropy_drops,
    })
}

/// Plain-text rendering of a report.
pub fn render_text(report: &AnalysisReport) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = writeln!(s, "run report (schema {})", report.schema);
    let _ = writeln!(s, "  steps analyzed:   {}", report.steps);
    let _ = writeln!(s, "  dumped steps:     {}", report.dumped_steps);
    let _ = writeln!(s, "  reader warnings:  {}", report.warnings);
    match report.stage_transition_step {
        Some(t) => {
            let _ = writeln!(s, "  plateau reached:  step {t}");
        }
        None => {
            let _ = writeln!(s, "  plateau reached:  never");
        }
    }
    if let (Some(first), Some(last)) =
        (report.accuracy_series.first(), report.accuracy_series.last())
    {
        let _ = writeln!(s, "  accuracy:         {first:.4} -> {last:.4}");
    }
    if let (Some(first), Some(last)) =
        (report.mean_entropy_series.first(), report.mean_entropy_series.last())
    {
        let _ = writeln!(s, "  mean entropy:     {first:.4} -> {last:.4}");
    }
    if let Some(len) = report.mean_response_len {
        let _ = writeln!(s, "  mean length:      {len:.3}");
    }
    if let Some(c) = &report.category_counts_per_response {
        let _ = writeln!(s, "token categories per response:");
        let _ = writeln!(s, "  formal-reasoning      {:.3}", c.formal_reasoning);
        let _ = writeln!(s, "  logical-structuring   {:.3}", c.logical_structuring);
        let _ = writeln!(s, "  metacognitive         {:.3}", c.metacognitive);
        let _ = writeln!(s, "  semantic-support      {:.3}", c.semantic_support);
    }
    if !report.quality_per_step.is_empty() {
        let _ = writeln!(s, "quality-issue rates (per dumped step):");
        let _ = writeln!(s, "  {:>6} {:>8} {:>8} {:>8} {:>8}", "step", "format", "repeat", "alphab", "any");
        for q in &report.quality_per_step {
            let _ = writeln!(
                s,
                "  {:>6} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                q.step, q.format_violation, q.repetition, q.out_of_alphabet, q.any
            );
        }
    }
    if report.positional_profile.iter().any(Option::is_some) {
        let _ = writeln!(s, "positional entropy profile ({} bins):", report.positional_profile.len());
        for (i, bin) in report.positional_profile.iter().enumerate() {
            match bin {
                Some(h) => {
                    let _ = writeln!(s, "  bin {i:>2}: {h:.4}");
                }
                None => {
                    let _ = writeln!(s, "  bin {i:>2}: -");
                }
            }
        }
    }
    if !report.top_entropy_drops.is_empty() {
        let _ = writeln!(s, "fastest entropy drops (token, drop, pos/neg occurrences):");
        for d in &report.top_entropy_drops {
            let _ = writeln!(
                s,
                "  {:<10} {:>8.4}  {:>8} / {:<8} {:?}",
                d.text, d.drop, d.pos_occurrences, d.neg_occurrences, d.provenance
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::TaskSpec;

    fn vocab() -> Vocabulary {
        TaskSpec::modular_addition(10, 16).unwrap().vocab
    }

    #[test]
    fn categorize_examples() {
        let v = vocab();
        let lex = TokenLexicon::default_for(&v);
        let cat = |text: &str| categorize_token(v.id_of(text).unwrap(), &lex).unwrap();
        assert_eq!(cat("+"), TokenCategory::FormalReasoning);
        assert_eq!(cat("7"), TokenCategory::FormalReasoning);
        assert_eq!(cat("however"), TokenCategory::LogicalStructuring);
        assert_eq!(cat("wait"), TokenCategory::Metacognitive);
        // Unlisted tokens default to semantic support.
        assert_eq!(cat("<ans>"), TokenCategory::SemanticSupport);
        assert!(categorize_token(999, &lex).is_err());
    }

    #[test]
    fn lexicon_rejects_overlap_and_unknowns() {
        let v = vocab();
        let mut file = TokenLexicon::default_file(&v);
        file.logical_structuring.push("+".into());
        assert!(TokenLexicon::from_file(&file, &v).is_err());
        let mut file = TokenLexicon::default_file(&v);
        file.formal_reasoning.push("nonexistent".into());
        assert!(TokenLexicon::from_file(&file, &v).is_err());
    }

    #[test]
    fn category_partition_covers_every_token() {
        let v = vocab();
        let lex = TokenLexicon::default_for(&v);
        let mut counts = [0usize; 4];
        for id in 0..v.size() {
            match categorize_token(id, &lex).unwrap() {
                TokenCategory::FormalReasoning => counts[0] += 1,
                TokenCategory::LogicalStructuring => counts[1] += 1,
                TokenCategory::Metacognitive => counts[2] += 1,
                TokenCategory::SemanticSupport => counts[3] += 1,
            }
        }
        assert_eq!(counts.iter().sum::<usize>(), v.size());
        assert_eq!(counts[0], 12); // 10 digits + "+" + "<mod10>"
        assert_eq!(counts[1], 3);
        assert_eq!(counts[2], 2);
    }

    #[test]
    fn quality_flags_worked_examples() {
        let spec = TaskSpec::modular_addition(10, 16).unwrap();
        let v = &spec.vocab;
        let rules = QualityRules::default();
        let inst = spec.modular_instance(0, 3, 4);
        let gold = spec.gold_response(&inst);
        assert_eq!(detect_quality_issues(v, &gold, &rules), QualityFlags::default());

        // Two delimiters.
        let d = v.delimiter();
        let seven = v.id_of("7").unwrap();
        let flags = detect_quality_issues(v, &[d, d, seven], &rules);
        assert!(flags.format_violation);

        // A 3-token window repeated four times back-to-back trips the
        // repetition rule (any period up to max_period counts).
        let (a, b, c) = (v.id_of("so").unwrap(), v.id_of("then").unwrap(), v.id_of("we").unwrap());
        let mut rep = Vec::new();
        for _ in 0..4 {
            rep.extend_from_slice(&[a, b, c]);
        }
        let flags = detect_quality_issues(v, &rep, &rules);
        assert!(flags.repetition);
        assert!(flags.format_violation); // no delimiter either

        // Same window repeated only twice: no repetition flag.
        let flags = detect_quality_issues(v, &[a, b, c, a, b, c], &rules);
        assert!(!flags.repetition);

        // Prompt-only token inside a response body.
        let plus = v.id_of("+").unwrap();
        let flags = detect_quality_issues(v, &[d, plus, seven], &rules);
        assert!(flags.out_of_alphabet);

        // Everything after <eos> is outside the body.
        let mut after = gold.clone();
        after.extend_from_slice(&[d, d, d, d]);
        assert_eq!(detect_quality_issues(v, &after, &rules), QualityFlags::default());
    }

    #[test]
    fn appending_second_delimiter_flips_format_flag() {
        let spec = TaskSpec::modular_addition(10, 16).unwrap();
        let inst = spec.modular_instance(0, 2, 2);
        let rules = QualityRules::default();
        let mut resp = vec![spec.vocab.delimiter(), spec.vocab.id_of("4").unwrap()];
        assert!(!detect_quality_issues(&spec.vocab, &resp, &rules).format_violation);
        resp.push(spec.vocab.delimiter());
        assert!(detect_quality_issues(&spec.vocab, &resp, &rules).format_violation);
    }

    fn dump_line(step: u64, tokens: Vec<usize>, reward: f64) -> RolloutDumpLine {
        let n = tokens.len();
        RolloutDumpLine {
            step,
            group: 0,
            response: 0,
            logprobs: vec![-0.5; n],
            entropies: vec![1.0; n],
            tokens,
            reward,
            ppl: 1.65,
        }
    }

    #[test]
    fn empty_run_summarizes_without_error() {
        let v = vocab();
        let lex = TokenLexicon::default_for(&v);
        let report =
            summarize_run(&[], &[], &v, &lex, &ReportOptions::default(), 0).unwrap();
        assert_eq!(report.steps, 0);
        assert_eq!(report.dumped_steps, 0);
        assert!(report.mean_response_len.is_none());
        assert!(report.top_entropy_drops.is_empty());
        assert!(report.positional_profile.iter().all(Option::is_none));
    }

    #[test]
    fn fixture_counts_are_exact() {
        let v = vocab();
        let lex = TokenLexicon::default_for(&v);
        let seven = v.id_of("7").unwrap();
        let so = v.id_of("so").unwrap();
        let wait = v.id_of("wait").unwrap();
        let the = v.id_of("the").unwrap();
        let dump = vec![
            dump_line(0, vec![so, seven, wait, v.delimiter()], 1.0),
            dump_line(0, vec![the, the, seven, seven], -1.0),
        ];
        let report = summarize_run(&[], &dump, &v, &lex, &ReportOptions::default(), 0).unwrap();
        let c = report.category_counts_per_response.unwrap();
        // 3 formal (three "7"s), 1 logical, 1 metacognitive, 3 semantic
        // (two "the" + the delimiter) over 2 responses.
        assert_eq!(c.formal_reasoning, 1.5);
        assert_eq!(c.logical_structuring, 0.5);
        assert_eq!(c.metacognitive, 0.5);
        assert_eq!(c.semantic_support, 1.5);
        assert_eq!(report.mean_response_len, Some(4.0));
        let total = c.formal_reasoning + c.logical_structuring + c.metacognitive + c.semantic_support;
        assert_eq!(total, report.mean_response_len.unwrap());
    }

    #[test]
    fn reports_are_deterministic() {
        let v = vocab();
        let lex = TokenLexicon::default_for(&v);
        let seven = v.id_of("7").unwrap();
        let dump = vec![
            dump_line(0, vec![seven, v.delimiter(), seven], 1.0),
            dump_line(5, vec![v.delimiter(), seven, v.eos()], -1.0),
        ];
        let opts = ReportOptions::default();
        let a = summarize_run(&[], &dump, &v, &lex, &opts, 0).unwrap();
        let b = summarize_run(&[], &dump, &v, &lex, &opts, 0).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.dumped_steps, 2);
        assert!(!render_text(&a).is_empty());
    }
}
