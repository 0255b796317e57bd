//! On-disk record schemas: the per-step metrics log, the rollout dump, and
//! intervention results. All three are line-delimited JSON, written
//! append-only and flushed per line so an aborted run keeps a valid prefix.
//!
//! Wall-clock time is deliberately kept out of the serialized metrics record:
//! logs and reports must be byte-identical across same-seed runs. Timings go
//! to a separate sidecar that no analysis reads.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::StageLabel;

pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// One line of the metrics log: aggregates for one training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// Schema version.
    pub v: u32,
    pub step: u64,
    pub mean_entropy: f64,
    pub pos_entropy: Option<f64>,
    pub neg_entropy: Option<f64>,
    pub accuracy: f64,
    pub mean_response_len: f64,
    pub grad_norm_mean: f64,
    pub grad_norm_max: f64,
    /// Fraction of sampled tokens whose probability moved less than the
    /// configured threshold during this step's updates.
    pub shift_fraction_small: f64,
    pub stage: StageLabel,
    pub active_shapers: Vec<String>,
    /// In-memory only; excluded from the log to keep it deterministic.
    #[serde(skip)]
    pub wall_clock_s: f64,
}

/// One line of the rollout dump: a single sampled response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutDumpLine {
    pub step: u64,
    pub group: usize,
    pub response: usize,
    pub tokens: Vec<usize>,
    pub logprobs: Vec<f64>,
    pub entropies: Vec<f64>,
    pub reward: f64,
    pub ppl: f64,
}

/// One line of the intervention results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionLine {
    pub instance: u64,
    pub response: usize,
    pub position: usize,
    pub rel_pos: f64,
    pub ppl: f64,
    /// 0-based PPL quintile of the response within the sampled pool.
    pub ppl_quintile: usize,
    /// 0-based relative-position quintile.
    pub pos_quintile: usize,
    pub original: usize,
    pub substitute: usize,
    pub impact: f64,
    pub k: usize,
}

/// Append-only JSONL writer that flushes after every record.
pub struct JsonlWriter {
    out: BufWriter<File>,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(JsonlWriter { out: BufWriter::new(File::create(path)?) })
    }

    pub fn append<T: Serialize>(&mut self, record: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Strict reader: any malformed line is an error.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            Error::Mismatch(format!("{}:{}: malformed record: {e}", path.display(), i + 1))
        })?);
    }
    Ok(out)
}

/// Lossy reader: malformed lines are skipped and counted.
pub fn read_jsonl_lossy<T: DeserializeOwned>(path: &Path) -> Result<(Vec<T>, usize)> {
    let file = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    let mut warnings = 0usize;
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(rec) => out.push(rec),
            Err(e) => {
                warnings += 1;
                log::warn!("skipping malformed log line: {e}");
            }
        }
    }
    Ok((out, warnings))
}

/// Validate a metrics log: schema version and strictly increasing steps.
pub fn validate_metrics(metrics: &[StepMetrics]) -> Result<()> {
    let mut prev: Option<u64> = None;
    for m in metrics {
        if m.v != METRICS_SCHEMA_VERSION {
            return Err(Error::Mismatch(format!(
                "metrics schema version {} (expected {METRICS_SCHEMA_VERSION})",
                m.v
            )));
        }
        if let Some(p) = prev {
            if m.step <= p {
                return Err(Error::Mismatch(format!(
                    "metrics steps not strictly increasing at step {}",
                    m.step
                )));
            }
        }
        prev = Some(m.step);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(step: u64) -> StepMetrics {
        StepMetrics {
            v: METRICS_SCHEMA_VERSION,
            step,
            mean_entropy: 3.0,
            pos_entropy: None,
            neg_entropy: Some(3.1),
            accuracy: 0.25,
            mean_response_len: 12.0,
            grad_norm_mean: 0.1,
            grad_norm_max: 0.9,
            shift_fraction_small: 0.99,
            stage: StageLabel::Rising,
            active_shapers: vec!["ppl".into()],
            wall_clock_s: 1.25,
        }
    }

    #[test]
    fn roundtrip_and_wall_clock_exclusion() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.jsonl");
        let mut w = JsonlWriter::create(&path).unwrap();
        w.append(&sample(0)).unwrap();
        w.append(&sample(1)).unwrap();
        drop(w);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.contains("wall_clock"), "wall clock must not be serialized");
        let back: Vec<StepMetrics> = read_jsonl(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].wall_clock_s, 0.0);
        assert_eq!(back[1].step, 1);
        validate_metrics(&back).unwrap();
    }

    #[test]
    fn lossy_reader_counts_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        std::fs::write(&path, "{\"not\": \"a record\"}\ngarbage\n").unwrap();
        let (recs, warnings) = read_jsonl_lossy::<StepMetrics>(&path).unwrap();
        assert!(recs.is_empty());
        assert_eq!(warnings, 2);
    }

    #[test]
    fn monotonicity_enforced() {
        let ms = vec![sample(3), sample(3)];
        assert!(validate_metrics(&ms).is_err());
    }
}
