//! Pairwise run comparison: aligned accuracy/entropy series, final-window
//! means, and a byte-identity check of the metrics logs (the neutral-shaping
//! case must come out identical).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logs::{read_jsonl, validate_metrics, StepMetrics};

use super::runner::RunPaths;

/// Steps averaged for the final-window summary (capped by the run length).
pub const FINAL_WINDOW: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub steps: usize,
    pub final_window: usize,
    pub baseline_accuracy_mean: f64,
    pub shaped_accuracy_mean: f64,
    pub accuracy_delta: f64,
    pub baseline_entropy_mean: f64,
    pub shaped_entropy_mean: f64,
    pub entropy_delta: f64,
    /// True when the two metrics logs are byte-for-byte identical.
    pub metrics_bytes_identical: bool,
}

pub fn run_compare(baseline: &Path, shaped: &Path, out_dir: &Path) -> Result<CompareSummary> {
    let base_paths = RunPaths::new(baseline);
    let shaped_paths = RunPaths::new(shaped);
    let base: Vec<StepMetrics> = read_jsonl(&base_paths.metrics())?;
    let other: Vec<StepMetrics> = read_jsonl(&shaped_paths.metrics())?;
    validate_metrics(&base)?;
    validate_metrics(&other)?;
    if base.len() != other.len() {
        return Err(Error::Mismatch(format!(
            "runs are misaligned: {} has {} steps, {} has {}",
            baseline.display(),
            base.len(),
            shaped.display(),
            other.len()
        )));
    }
    for (a, b) in base.iter().zip(&other) {
        if a.step != b.step {
            return Err(Error::Mismatch(format!(
                "runs are misaligned at step {} vs {}",
                a.step, b.step
            )));
        }
    }

    std::fs::create_dir_all(out_dir)?;
    let mut csv = std::fs::File::create(out_dir.join("compare.csv"))?;
    writeln!(
        csv,
        "step,baseline_accuracy,shaped_accuracy,accuracy_delta,baseline_entropy,shaped_entropy,entropy_delta"
    )?;
    for (a, b) in base.iter().zip(&other) {
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            a.step,
            a.accuracy,
            b.accuracy,
            b.accuracy - a.accuracy,
            a.mean_entropy,
            b.mean_entropy,
            b.mean_entropy - a.mean_entropy
        )?;
    }

    let window = FINAL_WINDOW.min(base.len()).max(1.min(base.len()));
    let mean_tail = |xs: &[StepMetrics], f: fn(&StepMetrics) -> f64| -> f64 {
        if xs.is_empty() {
            return 0.0;
        }
        let tail = &xs[xs.len() - window..];
        tail.iter().map(f).sum::<f64>() / tail.len() as f64
    };
    let identical = std::fs::read(base_paths.metrics())? == std::fs::read(shaped_paths.metrics())?;
    let summary = CompareSummary {
        steps: base.len(),
        final_window: if base.is_empty() { 0 } else { window },
        baseline_accuracy_mean: mean_tail(&base, |m| m.accuracy),
        shaped_accuracy_mean: mean_tail(&other, |m| m.accuracy),
        accuracy_delta: mean_tail(&other, |m| m.accuracy) - mean_tail(&base, |m| m.accuracy),
        baseline_entropy_mean: mean_tail(&base, |m| m.mean_entropy),
        shaped_entropy_mean: mean_tail(&other, |m| m.mean_entropy),
        entropy_delta: mean_tail(&other, |m| m.mean_entropy)
            - mean_tail(&base, |m| m.mean_entropy),
        metrics_bytes_identical: identical,
    };
    std::fs::write(out_dir.join("compare.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
