//! Experiment configuration: one TOML file drives a whole run.
//!
//! Unknown keys are rejected, omitted keys take the documented defaults, and
//! the resolved config round-trips losslessly. Every run directory embeds a
//! copy of its resolved config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::QualityRules;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::grpo::TrainerConfig;
use crate::policy::PolicyParameters;
use crate::shaping::ShapingConfig;
use crate::task::{TaskKind, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKindConfig {
    ModularAddition,
    BracketCompletion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub kind: TaskKindConfig,
    /// Modulus for modular addition.
    pub modulus: u32,
    /// Maximum opening depth for bracket completion.
    pub max_depth: u32,
    pub max_response_len: usize,
    /// Number of free reasoning tokens in the vocabulary.
    pub reasoning_tokens: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            kind: TaskKindConfig::ModularAddition,
            modulus: 10,
            max_depth: 4,
            max_response_len: 16,
            reasoning_tokens: 8,
        }
    }
}

impl TaskConfig {
    pub fn build(&self) -> Result<TaskSpec> {
        let kind = match self.kind {
            TaskKindConfig::ModularAddition => TaskKind::ModularAddition { modulus: self.modulus },
            TaskKindConfig::BracketCompletion => {
                TaskKind::BracketCompletion { max_depth: self.max_depth }
            }
        };
        TaskSpec::new(kind, self.max_response_len, self.reasoning_tokens)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub feature_dim: usize,
    pub context_width: usize,
    pub temperature: f64,
    pub top_p: f64,
    /// Uniform init scale for the head weights; 0 starts exactly uniform.
    pub init_scale: f64,
    /// Dimension of the per-prompt random code in the feature map
    /// (0 disables it, leaving only the bag summary).
    pub prompt_code_dim: usize,
    /// Magnitude of the prompt-code entries.
    pub prompt_code_scale: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            feature_dim: 32,
            context_width: 2,
            temperature: 1.0,
            top_p: 1.0,
            init_scale: 0.0,
            prompt_code_dim: 32,
            prompt_code_scale: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Bins of the positional entropy profile.
    pub position_bins: usize,
    /// Stage detector: moving-average window (steps).
    pub stage_window: usize,
    /// Stage detector: slope threshold (nats / step).
    pub stage_slope_tol: f64,
    /// Stage detector: consecutive quiet steps before latching.
    pub stage_patience: usize,
    /// Probability-shift threshold for the "small shift" fraction.
    pub shift_threshold: f64,
    /// Continuations per arm in intervention studies.
    pub intervention_k: usize,
    /// Fraction of token types reported in the entropy-drop ranking.
    pub drop_fraction: f64,
    /// Early/late window size for entropy drops, as a fraction of steps.
    pub drop_window_frac: f64,
    /// Dump rollouts every n steps (0 = never).
    pub dump_every: u64,
    /// Extra checkpoints every n steps (0 = final checkpoint only).
    pub checkpoint_every: u64,
    /// Retain full distributions for every n-th token (0 = never).
    pub store_distributions_every: usize,
    pub quality: QualityRules,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            position_bins: 20,
            stage_window: 25,
            stage_slope_tol: 1e-3,
            stage_patience: 10,
            shift_threshold: 0.06,
            intervention_k: 8,
            drop_fraction: 0.2,
            drop_window_frac: 0.25,
            dump_every: 10,
            checkpoint_every: 0,
            store_distributions_every: 1,
            quality: QualityRules::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub steps: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub task: TaskConfig,
    pub policy: PolicyConfig,
    pub trainer: TrainerConfig,
    pub shaping: ShapingConfig,
    pub metrics: MetricsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            steps: 300,
            output_dir: None,
            task: TaskConfig::default(),
            policy: PolicyConfig::default(),
            trainer: TrainerConfig::default(),
            shaping: ShapingConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.task.build()?;
        self.trainer.validate()?;
        if !(self.policy.temperature > 0.0) {
            return Err(Error::config("policy.temperature must be > 0"));
        }
        if !(self.policy.top_p > 0.0 && self.policy.top_p <= 1.0) {
            return Err(Error::config("policy.top_p must be in (0, 1]"));
        }
        if self.policy.feature_dim == 0 {
            return Err(Error::config("policy.feature_dim must be >= 1"));
        }
        if self.policy.init_scale < 0.0 {
            return Err(Error::config("policy.init_scale must be >= 0"));
        }
        if self.policy.prompt_code_scale < 0.0 {
            return Err(Error::config("policy.prompt_code_scale must be >= 0"));
        }
        if self.metrics.position_bins < 2 {
            return Err(Error::config("metrics.position_bins must be >= 2"));
        }
        if self.metrics.stage_window == 0 || self.metrics.stage_patience == 0 {
            return Err(Error::config("stage detector window/patience must be >= 1"));
        }
        if !(self.metrics.drop_fraction > 0.0 && self.metrics.drop_fraction <= 1.0) {
            return Err(Error::config("metrics.drop_fraction must be in (0, 1]"));
        }
        if !(self.metrics.drop_window_frac > 0.0 && self.metrics.drop_window_frac <= 0.5) {
            return Err(Error::config("metrics.drop_window_frac must be in (0, 0.5]"));
        }
        if self.metrics.intervention_k == 0 {
            return Err(Error::config("metrics.intervention_k must be >= 1"));
        }
        Ok(())
    }

    /// Parse and validate a TOML config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Build the task, frozen feature map, and initial policy for this config.
    pub fn build_components(&self) -> Result<(TaskSpec, FeatureMap, PolicyParameters)> {
        let spec = self.task.build()?;
        let map = FeatureMap::new(
            spec.vocab.size(),
            self.policy.feature_dim,
            self.policy.context_width,
            self.policy.prompt_code_dim,
            self.policy.prompt_code_scale,
            self.seed,
        );
        let params = PolicyParameters::random(
            spec.vocab.size(),
            self.policy.feature_dim,
            self.policy.temperature,
            self.policy.init_scale,
            self.seed,
        )?;
        Ok((spec, map, params))
    }
}
