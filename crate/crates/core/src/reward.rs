//! Packing quality and per-step rewards.
//!
//! Compactness is the packed volume divided by the volume of the tightest
//! axis-aligned box around all placed objects, measured on the grid: the
//! union of footprint cells gives the horizontal extent, the highest stamped
//! top the vertical one (from the floor).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::container::{BoundsCheck, ContainerState};
use crate::error::{PackError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// +1 inside, -1 outside.
    Simple,
    /// Compactness inside, -1 outside.
    Compactness,
    /// `alpha * C + (1 - alpha) * S` inside, -1 outside, with `S = ±1` from
    /// the stability check.
    CompactnessStability,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub kind: RewardKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    0.6
}

impl RewardConfig {
    pub const SIMPLE: Self = Self {
        kind: RewardKind::Simple,
        alpha: 1.0,
    };
    pub const COMPACTNESS: Self = Self {
        kind: RewardKind::Compactness,
        alpha: 1.0,
    };
    pub const CS_06: Self = Self {
        kind: RewardKind::CompactnessStability,
        alpha: 0.6,
    };
    pub const CS_09: Self = Self {
        kind: RewardKind::CompactnessStability,
        alpha: 0.9,
    };

    pub fn cs(alpha: f64) -> Result<Self> {
        let cfg = Self {
            kind: RewardKind::CompactnessStability,
            alpha,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(PackError::Config(format!(
                "reward alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    pub fn reward(&self, outcome: &StepOutcome) -> f64 {
        step_reward(self, outcome)
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self::CS_06
    }
}

impl fmt::Display for RewardConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            RewardKind::Simple => f.write_str("simple"),
            RewardKind::Compactness => f.write_str("c"),
            RewardKind::CompactnessStability => write!(f, "cs{}", self.alpha),
        }
    }
}

/// Accepts `simple`, `c`, and `cs<alpha>` such as `cs0.6`.
impl FromStr for RewardConfig {
    type Err = PackError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "simple" => Ok(Self::SIMPLE),
            "c" | "compactness" => Ok(Self::COMPACTNESS),
            _ => {
                let alpha = lower
                    .strip_prefix("cs")
                    .map(|a| a.trim_start_matches([':', '=']))
                    .and_then(|a| a.parse::<f64>().ok())
                    .ok_or_else(|| PackError::Config(format!("unknown reward {s:?}")))?;
                Self::cs(alpha)
            }
        }
    }
}

/// What happened on one placement attempt, as seen by the reward.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub inside: bool,
    pub compactness: f64,
    pub stable: bool,
}

impl StepOutcome {
    pub fn outside() -> Self {
        Self {
            inside: false,
            compactness: 0.0,
            stable: false,
        }
    }

    pub fn from_bounds(check: BoundsCheck, compactness: f64, stable: bool) -> Self {
        Self {
            inside: check == BoundsCheck::Inside,
            compactness,
            stable,
        }
    }
}

pub fn step_reward(cfg: &RewardConfig, outcome: &StepOutcome) -> f64 {
    if !outcome.inside {
        return -1.0;
    }
    let s = if outcome.stable { 1.0 } else { -1.0 };
    match cfg.kind {
        RewardKind::Simple => 1.0,
        RewardKind::Compactness => outcome.compactness,
        RewardKind::CompactnessStability => cfg.alpha * outcome.compactness + (1.0 - cfg.alpha) * s,
    }
}

/// Compactness of everything placed so far, clamped to at most 1.
///
/// Raster rounding can make the grid-measured enclosing box slightly smaller
/// than the true object volume; the clamp keeps the value a ratio.
pub fn compactness(state: &ContainerState) -> Result<f64> {
    let Some(v) = enclosing_volume(state) else {
        return Err(PackError::UndefinedMetric("compactness of an empty box"));
    };
    if v <= 0.0 {
        return Err(PackError::UndefinedMetric(
            "compactness with a zero-volume enclosing box",
        ));
    }
    Ok((state.cumulative_volume / v).min(1.0))
}

/// Volume of the grid-aligned box enclosing all placements, if any.
pub fn enclosing_volume(state: &ContainerState) -> Option<f64> {
    let c = state.spec.cell_size;
    let mut lo = (i64::MAX, i64::MAX);
    let mut hi = (i64::MIN, i64::MIN);
    let mut top = 0.0f64;
    for p in &state.placements {
        let [umin, umax, vmin, vmax] = p.profile.footprint_bounds();
        lo.0 = lo.0.min(p.origin.0 + umin as i64);
        lo.1 = lo.1.min(p.origin.1 + vmin as i64);
        hi.0 = hi.0.max(p.origin.0 + umax as i64);
        hi.1 = hi.1.max(p.origin.1 + vmax as i64);
        top = top.max(p.pose.z + p.profile.max_top);
    }
    if state.placements.is_empty() {
        return None;
    }
    Some((hi.0 - lo.0 + 1) as f64 * c * (hi.1 - lo.1 + 1) as f64 * c * top)
}
