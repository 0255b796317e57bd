//! Advantage shaping: perplexity reweighting and positional bonus.
//!
//! Two ways to steer updates toward tokens with more learning potential:
//!
//! * PPL reweighting scales a response's advantage by `1 -/+ alpha * w`,
//!   where `w` is the group-standardized log-perplexity of the response.
//!   `favor-low-ppl` (the `1 - alpha w` direction) down-weights high-PPL
//!   samples.
//! * The positional bonus `b = gamma * sigmoid(d * m * (l - n))` is added to
//!   positive advantages and subtracted from negative ones, amplifying
//!   whatever signal a token already carries, more so near the end of the
//!   sequence when `d = +1`.
//!
//! The PPL shaper runs for the whole training run; the positional shaper is
//! gated to a step window (or, alternatively, to the plateau stage).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::StageLabel;

/// Smallest multiplicative factor the PPL shaper may produce. Keeps the
/// shaped advantage on the same side of zero even for oversized `alpha`.
pub const MIN_PPL_FACTOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PplDirection {
    /// Factor `1 - alpha * w`: concentrate updates on low-PPL samples.
    FavorLowPpl,
    /// Factor `1 + alpha * w`: the opposing ablation.
    FavorHighPpl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PplShapingConfig {
    pub enabled: bool,
    pub alpha: f64,
    pub direction: PplDirection,
}

impl Default for PplShapingConfig {
    fn default() -> Self {
        PplShapingConfig { enabled: false, alpha: 0.01, direction: PplDirection::FavorLowPpl }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositionalMode {
    /// Active for steps in `[window_start, window_start + window_len)`.
    Window,
    /// Active whenever the stage detector reports the plateau stage.
    PlateauGated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PositionShapingConfig {
    pub enabled: bool,
    pub gamma: f64,
    /// +1 rewards late tokens, -1 rewards early tokens.
    pub direction: f64,
    /// Slope m of the relative-position score m * (l - n).
    pub slope: f64,
    /// Shift n of the relative-position score.
    pub offset: f64,
    pub window_start: u64,
    pub window_len: u64,
    pub mode: PositionalMode,
}

impl Default for PositionShapingConfig {
    fn default() -> Self {
        PositionShapingConfig {
            enabled: false,
            gamma: 0.1,
            direction: 1.0,
            slope: 15.0,
            offset: -0.5,
            window_start: 200,
            window_len: 100,
            mode: PositionalMode::Window,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapingConfig {
    pub ppl: PplShapingConfig,
    pub positional: PositionShapingConfig,
}

/// Which shapers actually modify advantages at a given step. A shaper whose
/// coefficient is zero is reported inactive: it cannot change any value, and
/// the metrics log of an `alpha = gamma = 0` run must be byte-identical to an
/// unshaped baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ActiveShapers {
    pub ppl: bool,
    pub positional: bool,
}

impl ActiveShapers {
    pub fn names(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.ppl {
            v.push("ppl".to_string());
        }
        if self.positional {
            v.push("positional".to_string());
        }
        v
    }
}

/// Standardized log-PPL weights within a group: `w_i = (ln PPL_i - mu) / sigma`
/// with the population standard deviation. All-equal groups give all zeros.
pub fn ppl_weights(ppls: &[f64]) -> Result<Vec<f64>> {
    if ppls.len() < 2 {
        return Err(Error::contract(format!(
            "ppl_weights needs a group of >= 2, got {}",
            ppls.len()
        )));
    }
    if ppls.iter().any(|p| !(*p >= 1.0)) {
        return Err(Error::contract("perplexities must be >= 1"));
    }
    let logs: Vec<f64> = ppls.iter().map(|p| p.ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let var = logs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / logs.len() as f64;
    let std = var.sqrt();
    if std == 0.0 {
        return Ok(vec![0.0; ppls.len()]);
    }
    Ok(logs.iter().map(|x| (x - mean) / std).collect())
}

/// Multiplicative PPL factor for one response, clamped to stay positive so
/// shaping never flips an advantage's sign.
pub fn ppl_factor(weight: f64, cfg: &PplShapingConfig) -> f64 {
    let raw = match cfg.direction {
        PplDirection::FavorLowPpl => 1.0 - cfg.alpha * weight,
        PplDirection::FavorHighPpl => 1.0 + cfg.alpha * weight,
    };
    if raw < MIN_PPL_FACTOR {
        log::warn!(
            "ppl shaping factor {raw:.3e} clamped to {MIN_PPL_FACTOR:e} (alpha={} w={weight})",
            cfg.alpha
        );
        MIN_PPL_FACTOR
    } else {
        raw
    }
}

/// PPL-shaped advantage.
pub fn shape_ppl(advantage: f64, weight: f64, cfg: &PplShapingConfig) -> f64 {
    advantage * ppl_factor(weight, cfg)
}

/// Positional bonus `gamma * sigmoid(direction * slope * (l - offset))`,
/// bounded by `[0, gamma]`.
pub fn positional_bonus(rel_pos: f64, cfg: &PositionShapingConfig) -> f64 {
    debug_assert!((0.0..=1.0).contains(&rel_pos));
    cfg.gamma * sigmoid(cfg.direction * cfg.slope * (rel_pos - cfg.offset))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Sign-aware positional shaping: the bonus amplifies the advantage in the
/// direction it already points; zero advantages stay exactly zero.
pub fn shape_position(advantage: f64, bonus: f64) -> f64 {
    advantage + sign(advantage) * bonus
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Which shapers are in effect at `step`, given the current training stage.
pub fn shaping_schedule(step: u64, stage: StageLabel, cfg: &ShapingConfig) -> ActiveShapers {
    let ppl = cfg.ppl.enabled && cfg.ppl.alpha != 0.0;
    let positional = cfg.positional.enabled
        && cfg.positional.gamma != 0.0
        && match cfg.positional.mode {
            PositionalMode::Window => {
                step >= cfg.positional.window_start
                    && step < cfg.positional.window_start + cfg.positional.window_len
            }
            PositionalMode::PlateauGated => stage == StageLabel::Plateau,
        };
    ActiveShapers { ppl, positional }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ppl_weights_worked_example() {
        let w = ppl_weights(&[1.2, 1.5, 2.0]).unwrap();
        assert!((w[0] - -1.1700574817832452).abs() < 1e-12);
        assert!((w[1] - -0.10288412931236501).abs() < 1e-12);
        assert!((w[2] - 1.2729416110956102).abs() < 1e-12);
    }

    #[test]
    fn ppl_weights_degenerate_and_pairs() {
        assert_eq!(ppl_weights(&[3.0, 3.0, 3.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        let w = ppl_weights(&[1.5, 2.5]).unwrap();
        assert!((w[0] + 1.0).abs() < 1e-9);
        assert!((w[1] - 1.0).abs() < 1e-9);
        assert!(ppl_weights(&[2.0]).is_err());
        assert!(ppl_weights(&[0.5, 2.0]).is_err());
    }

    #[test]
    fn shape_ppl_worked_examples() {
        let cfg = PplShapingConfig { enabled: true, alpha: 0.01, ..Default::default() };
        assert!((shape_ppl(1.0, 1.273, &cfg) - 0.98727).abs() < 1e-12);
        assert!((shape_ppl(-1.0, -1.170, &cfg) - -1.0117).abs() < 1e-12);
        let zero = PplShapingConfig { alpha: 0.0, ..cfg };
        let a = 0.12345678901234567;
        assert_eq!(shape_ppl(a, 2.5, &zero), a);
    }

    #[test]
    fn oversized_alpha_clamps_but_keeps_sign() {
        let cfg = PplShapingConfig { enabled: true, alpha: 2.0, ..Default::default() };
        let shaped = shape_ppl(1.0, 1.0, &cfg); // raw factor would be -1
        assert!(shaped > 0.0 && shaped <= MIN_PPL_FACTOR);
        let shaped = shape_ppl(-1.0, 1.0, &cfg);
        assert!(shaped < 0.0);
    }

    #[test]
    fn positional_bonus_paper_constants() {
        let cfg = PositionShapingConfig { enabled: true, ..Default::default() };
        assert!((positional_bonus(1.0, &cfg) - 0.09999999998308103).abs() < 1e-12);
        assert!((positional_bonus(0.0, &cfg) - 0.09994472213630765).abs() < 1e-12);
        assert!((positional_bonus(1.0, &cfg) - 0.1).abs() < 1e-6);
        assert!((positional_bonus(0.0, &cfg) - 0.099945).abs() < 1e-6);
        let off = PositionShapingConfig { gamma: 0.0, ..cfg };
        assert_eq!(positional_bonus(0.5, &off), 0.0);
    }

    #[test]
    fn shape_position_worked_examples() {
        assert!((shape_position(0.8, 0.1) - 0.9).abs() < 1e-15);
        assert!((shape_position(-0.8, 0.1) - -0.9).abs() < 1e-15);
        assert_eq!(shape_position(0.0, 0.1), 0.0);
    }

    #[test]
    fn schedule_window() {
        let cfg = ShapingConfig {
            ppl: PplShapingConfig { enabled: true, ..Default::default() },
            positional: PositionShapingConfig { enabled: true, ..Default::default() },
        };
        let at = |step| shaping_schedule(step, StageLabel::Rising, &cfg);
        assert!(!at(199).positional);
        assert!(at(250).positional);
        assert!(!at(301).positional);
        assert!(at(199).ppl && at(301).ppl, "ppl shaping runs for the whole run");
    }

    #[test]
    fn schedule_plateau_gated_and_neutral() {
        let mut cfg = ShapingConfig {
            ppl: PplShapingConfig { enabled: true, alpha: 0.0, ..Default::default() },
            positional: PositionShapingConfig {
                enabled: true,
                mode: PositionalMode::PlateauGated,
                ..Default::default()
            },
        };
        assert!(!shaping_schedule(250, StageLabel::Rising, &cfg).positional);
        assert!(shaping_schedule(10, StageLabel::Plateau, &cfg).positional);
        // alpha = 0 makes the ppl shaper a no-op and therefore inactive.
        assert!(!shaping_schedule(10, StageLabel::Plateau, &cfg).ppl);
        cfg.positional.gamma = 0.0;
        assert!(!shaping_schedule(10, StageLabel::Plateau, &cfg).positional);
    }

    proptest! {
        #[test]
        fn weights_are_standardized(ppls in proptest::collection::vec(1.0001f64..50.0, 2..64)) {
            let w = ppl_weights(&ppls).unwrap();
            let mean: f64 = w.iter().sum::<f64>() / w.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
            let var: f64 = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / w.len() as f64;
            // All-equal draws are measure-zero but guard anyway.
            if w.iter().any(|&x| x != 0.0) {
                prop_assert!((var.sqrt() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn paper_alpha_preserves_sign_up_to_g64(
            ppls in proptest::collection::vec(1.0001f64..50.0, 2..64),
            adv in -3.0f64..3.0,
        ) {
            let cfg = PplShapingConfig { enabled: true, alpha: 0.01, ..Default::default() };
            for &w in ppl_weights(&ppls).unwrap().iter() {
                let shaped = shape_ppl(adv, w, &cfg);
                prop_assert!(shaped == 0.0 && adv == 0.0 || shaped.signum() == adv.signum());
            }
        }

        #[test]
        fn bonus_is_monotone_and_bounded(l1 in 0.0f64..=1.0, l2 in 0.0f64..=1.0, dir in prop_oneof![Just(1.0), Just(-1.0)]) {
            let cfg = PositionShapingConfig { enabled: true, direction: dir, ..Default::default() };
            let (b1, b2) = (positional_bonus(l1, &cfg), positional_bonus(l2, &cfg));
            prop_assert!(b1 >= 0.0 && b1 <= cfg.gamma);
            if l1 <= l2 {
                if dir > 0.0 { prop_assert!(b1 <= b2 + 1e-15); } else { prop_assert!(b1 >= b2 - 1e-15); }
            }
        }

        #[test]
        fn positional_shaping_amplifies(adv in -2.0f64..2.0, b in 0.0f64..0.5) {
            let shaped = shape_position(adv, b);
            prop_assert!(shaped.abs() >= adv.abs());
            if adv != 0.0 && b != 0.0 {
                prop_assert!(shaped.abs() > adv.abs());
            } else {
                prop_assert_eq!(shaped, adv);
            }
        }
    }

    #[test]
    fn paper_constants_keep_bonus_strictly_inside_range() {
        let cfg = PositionShapingConfig { enabled: true, ..Default::default() };
        for i in 0..=100 {
            let b = positional_bonus(i as f64 / 100.0, &cfg);
            assert!(b > 0.0 && b < cfg.gamma);
        }
    }
}
