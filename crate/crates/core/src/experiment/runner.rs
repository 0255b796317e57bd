//! Training-run orchestration: seeded instance streams, per-step rollouts,
//! GRPO updates, stage detection, shaping schedule, and append-only logging.
//!
//! Everything serialized into the run directory is a pure function of
//! (config, seed); wall-clock timings go to a separate sidecar.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{self, AnalysisReport, ReportOptions, TokenLexicon};
use crate::error::{Error, Result};
use crate::grpo::{self, TrainContext};
use crate::logs::{
    read_jsonl_lossy, validate_metrics, JsonlWriter, RolloutDumpLine, StepMetrics,
    METRICS_SCHEMA_VERSION,
};
use crate::metrics::StageDetector;
use crate::rollout::{collect_batch, PolicySnapshot};
use crate::shaping;
use crate::task::{instance_at, Instance};

use super::checkpoint::Checkpoint;
use super::config::ExperimentConfig;

/// File layout of a run directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub dir: PathBuf,
}

impl RunPaths {
    pub fn new(dir: &Path) -> Self {
        RunPaths { dir: dir.to_path_buf() }
    }

    pub fn config(&self) -> PathBuf {
        self.dir.join("config.toml")
    }

    pub fn run_info(&self) -> PathBuf {
        self.dir.join("run.json")
    }

    pub fn lexicon(&self) -> PathBuf {
        self.dir.join("lexicon.json")
    }

    pub fn metrics(&self) -> PathBuf {
        self.dir.join("metrics.jsonl")
    }

    pub fn rollouts(&self) -> PathBuf {
        self.dir.join("rollouts.jsonl")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.dir.join("checkpoint.bin")
    }

    pub fn checkpoint_at(&self, step: u64) -> PathBuf {
        self.dir.join(format!("checkpoint_{step:06}.bin"))
    }

    pub fn timing(&self) -> PathBuf {
        self.dir.join("timing.csv")
    }

    pub fn report_json(&self) -> PathBuf {
        self.dir.join("report.json")
    }

    pub fn report_text(&self) -> PathBuf {
        self.dir.join("report.txt")
    }

    pub fn intervention(&self) -> PathBuf {
        self.dir.join("intervention.jsonl")
    }

    pub fn intervention_summary(&self) -> PathBuf {
        self.dir.join("intervention_summary.json")
    }
}

/// Deterministic identity block written into every run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub schema: u32,
    pub version: String,
    pub seed: u64,
}

/// What a finished run looked like, for callers and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: u64,
    pub first: Option<StepMetrics>,
    pub last: Option<StepMetrics>,
    pub stage_transition_step: Option<u64>,
}

/// Execute a full training run into `out_dir`. Refuses to clobber an
/// existing run unless `force` is set.
pub fn run_train(cfg: &ExperimentConfig, out_dir: &Path, force: bool) -> Result<RunSummary> {
    cfg.validate()?;
    let paths = RunPaths::new(out_dir);
    std::fs::create_dir_all(&paths.dir)?;
    if paths.metrics().exists() && !force {
        return Err(Error::config(format!(
            "{} already contains a run (use force to overwrite)",
            paths.dir.display()
        )));
    }

    let (spec, map, mut params) = cfg.build_components()?;
    let reference = params.clone();
    let mut opt_state = cfg.trainer.optimizer_state(spec.vocab.size(), cfg.policy.feature_dim);
    let mut detector = StageDetector::new(
        cfg.metrics.stage_window,
        cfg.metrics.stage_slope_tol,
        cfg.metrics.stage_patience,
    );

    // Self-describing run directory.
    std::fs::write(paths.config(), cfg.to_toml()?)?;
    let info = RunInfo {
        schema: METRICS_SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
    };
    std::fs::write(paths.run_info(), serde_json::to_string_pretty(&info)?)?;
    let lexicon_file = TokenLexicon::default_file(&spec.vocab);
    std::fs::write(paths.lexicon(), serde_json::to_string_pretty(&lexicon_file)?)?;

    let mut metrics_log = JsonlWriter::create(&paths.metrics())?;
    let mut dump_log = if cfg.metrics.dump_every > 0 {
        Some(JsonlWriter::create(&paths.rollouts())?)
    } else {
        None
    };
    let mut timing = std::fs::File::create(paths.timing())?;
    {
        use std::io::Write;
        writeln!(timing, "step,seconds")?;
    }

    let b = cfg.trainer.batch_size as u64;
    let mut first: Option<StepMetrics> = None;
    let mut last: Option<StepMetrics> = None;
    let mut transition: Option<u64> = None;

    for step in 0..cfg.steps {
        let t0 = Instant::now();
        let instances: Vec<Instance> =
            (0..b).map(|j| instance_at(&spec, cfg.seed, step * b + j)).collect();
        let snap = PolicySnapshot::new(&params, &map, &spec)
            .with_top_p(cfg.policy.top_p)
            .with_store_every(cfg.metrics.store_distributions_every);
        let groups = collect_batch(&snap, &instances, cfg.trainer.group_size, cfg.seed)?;

        // The stage detector sees sampling-time entropy, available before the
        // update, so this step's shaping gate already reflects it.
        let mut ent_sum = 0.0;
        let mut ent_n = 0usize;
        for g in &groups {
            for r in &g.responses {
                for t in &r.tokens {
                    ent_sum += t.entropy;
                    ent_n += 1;
                }
            }
        }
        let stage = detector.push(ent_sum / ent_n as f64);
        if transition.is_none() {
            transition = detector.transition_step().map(|s| s as u64);
        }
        let shapers = shaping::shaping_schedule(step, stage, &cfg.shaping);

        let ctx = TrainContext {
            map: &map,
            spec: &spec,
            reference: (cfg.trainer.kl_weight > 0.0).then_some(&reference),
            step,
            shapers,
            shaping: &cfg.shaping,
            shift_threshold: cfg.metrics.shift_threshold,
        };
        let outcome = grpo::train_step(&groups, &mut params, &mut opt_state, &cfg.trainer, &ctx)?;

        let record = StepMetrics {
            v: METRICS_SCHEMA_VERSION,
            step,
            mean_entropy: outcome.mean_entropy,
            pos_entropy: outcome.pos_entropy,
            neg_entropy: outcome.neg_entropy,
            accuracy: outcome.accuracy,
            mean_response_len: outcome.mean_response_len,
            grad_norm_mean: outcome.grad_norm_mean,
            grad_norm_max: outcome.grad_norm_max,
            shift_fraction_small: outcome.shift_fraction_small,
            stage,
            active_shapers: shapers.names(),
            wall_clock_s: t0.elapsed().as_secs_f64(),
        };
        metrics_log.append(&record)?;
        {
            use std::io::Write;
            writeln!(timing, "{},{:.6}", step, record.wall_clock_s)?;
        }

        if let Some(dump) = dump_log.as_mut() {
            if step % cfg.metrics.dump_every == 0 {
                for (gi, g) in groups.iter().enumerate() {
                    for (ri, r) in g.responses.iter().enumerate() {
                        dump.append(&RolloutDumpLine {
                            step,
                            group: gi,
                            response: ri,
                            tokens: r.token_ids(),
                            logprobs: r.logprobs(),
                            entropies: r.tokens.iter().map(|t| t.entropy).collect(),
                            reward: r.reward,
                            ppl: r.ppl,
                        })?;
                    }
                }
            }
        }

        if cfg.metrics.checkpoint_every > 0 && (step + 1) % cfg.metrics.checkpoint_every == 0 {
            Checkpoint { step: step + 1, feature_seed: cfg.seed, weights: params.weights().clone() }
                .write(&paths.checkpoint_at(step + 1))?;
        }

        if first.is_none() {
            first = Some(record.clone());
        }
        last = Some(record);
    }

    Checkpoint { step: cfg.steps, feature_seed: cfg.seed, weights: params.weights().clone() }
        .write(&paths.checkpoint())?;

    Ok(RunSummary { steps: cfg.steps, first, last, stage_transition_step: transition })
}

/// Summarize a completed run. Writes `report.json` and `report.txt` into
/// `out_dir` (the run directory by default) and returns the report.
pub fn run_analyze(run_dir: &Path, out_dir: Option<&Path>) -> Result<AnalysisReport> {
    let paths = RunPaths::new(run_dir);
    let cfg = ExperimentConfig::load(&paths.config())?;
    let spec = cfg.task.build()?;
    let lexicon = if paths.lexicon().exists() {
        let file: analysis::LexiconFile =
            serde_json::from_str(&std::fs::read_to_string(paths.lexicon())?)?;
        TokenLexicon::from_file(&file, &spec.vocab)?
    } else {
        TokenLexicon::default_for(&spec.vocab)
    };
    let (metrics, warn_metrics) = read_jsonl_lossy::<StepMetrics>(&paths.metrics())?;
    validate_metrics(&metrics)?;
    let (dump, warn_dump) = if paths.rollouts().exists() {
        read_jsonl_lossy::<RolloutDumpLine>(&paths.rollouts())?
    } else {
        (Vec::new(), 0)
    };
    let opts = ReportOptions {
        position_bins: cfg.metrics.position_bins,
        drop_fraction: cfg.metrics.drop_fraction,
        drop_window_frac: cfg.metrics.drop_window_frac,
        quality: cfg.metrics.quality,
    };
    let report = analysis::summarize_run(
        &metrics,
        &dump,
        &spec.vocab,
        &lexicon,
        &opts,
        warn_metrics + warn_dump,
    )?;
    let out = RunPaths::new(out_dir.unwrap_or(run_dir));
    std::fs::create_dir_all(&out.dir)?;
    std::fs::write(out.report_json(), serde_json::to_string_pretty(&report)?)?;
    std::fs::write(out.report_text(), analysis::render_text(&report))?;
    Ok(report)
}
