use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::episode::{Policy, RandomPolicy, SequencePlanner};
use crate::error::{PackError, Result};
use crate::heuristics::{HeuristicConfig, HeuristicPolicy, YawScanPolicy};
use crate::sequence::TransitionMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlannerKind {
    Given,
    Volume,
    Random,
    Greedy,
    Beam3,
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyKind {
    BlbfSo2,
    BlbfSo3,
    /// BLBF over four yaws, the built-in planar policy.
    YawScan,
    Random,
}

/// A benchmark method: a sequence planner paired with a placement policy.
///
/// Written `<planner>+<policy>`, e.g. `beam3+policy`. The bare names
/// `blbf-so2` and `blbf-so3` mean largest-first ordering with that heuristic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MethodSpec {
    pub name: String,
    pub planner: PlannerKind,
    pub policy: PolicyKind,
}

impl MethodSpec {
    pub fn needs_matrix(&self) -> bool {
        matches!(
            self.planner,
            PlannerKind::Greedy | PlannerKind::Beam3 | PlannerKind::Sampled
        )
    }

    pub fn planner(&self, matrix: Option<&Arc<TransitionMatrix>>) -> Result<SequencePlanner> {
        let need = || {
            matrix.cloned().ok_or_else(|| {
                PackError::Config(format!("method {} needs demonstrations", self.name))
            })
        };
        Ok(match self.planner {
            PlannerKind::Given => SequencePlanner::Given,
            PlannerKind::Volume => SequencePlanner::Volume,
            PlannerKind::Random => SequencePlanner::Random,
            PlannerKind::Greedy => SequencePlanner::Greedy(need()?),
            PlannerKind::Beam3 => SequencePlanner::Beam3(need()?),
            PlannerKind::Sampled => SequencePlanner::Sampled(need()?),
        })
    }

    /// A fresh policy; `spread` bounds the random policy's positions.
    pub fn policy(&self, heuristic: &HeuristicConfig, spread: f64) -> Result<Box<dyn Policy>> {
        Ok(match self.policy {
            PolicyKind::BlbfSo2 => Box::new(HeuristicPolicy::new(HeuristicConfig {
                mode: crate::heuristics::RotationMode::SO2,
                ..heuristic.clone()
            })?),
            PolicyKind::BlbfSo3 => Box::new(HeuristicPolicy::new(HeuristicConfig {
                mode: crate::heuristics::RotationMode::SO3,
                ..heuristic.clone()
            })?),
            PolicyKind::YawScan => Box::new(YawScanPolicy::new(HeuristicConfig {
                yaw_candidates: YawScanPolicy::default().cfg.yaw_candidates,
                ..heuristic.clone()
            })?),
            PolicyKind::Random => Box::new(RandomPolicy::new(0, spread)),
        })
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl FromStr for MethodSpec {
    type Err = PackError;

    fn from_str(s: &str) -> Result<Self> {
        let name = s.trim().to_ascii_lowercase();
        let (planner, policy) = match name.split_once('+') {
            Some((p, q)) => (p, q),
            None => ("volume", name.as_str()),
        };
        let planner = match planner {
            "given" => PlannerKind::Given,
            "volume" => PlannerKind::Volume,
            "random" => PlannerKind::Random,
            "greedy" => PlannerKind::Greedy,
            "beam3" => PlannerKind::Beam3,
            "sampled" => PlannerKind::Sampled,
            other => {
                return Err(PackError::Config(format!(
                    "unknown sequence planner {other:?} in {s:?}"
                )))
            }
        };
        let policy = match policy {
            "blbf-so2" => PolicyKind::BlbfSo2,
            "blbf-so3" => PolicyKind::BlbfSo3,
            "policy" | "yaw-scan" => PolicyKind::YawScan,
            "random" => PolicyKind::Random,
            other => {
                return Err(PackError::Config(format!(
                    "unknown placement policy {other:?} in {s:?}"
                )))
            }
        };
        Ok(Self {
            name,
            planner,
            policy,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_method_strings() {
        let m: MethodSpec = "beam3+policy".parse().unwrap();
        assert_eq!(
            (m.planner, m.policy),
            (PlannerKind::Beam3, PolicyKind::YawScan)
        );
        assert!(m.needs_matrix());
        let m: MethodSpec = "BLBF-SO3".parse().unwrap();
        assert_eq!(
            (m.planner, m.policy, m.name.as_str()),
            (PlannerKind::Volume, PolicyKind::BlbfSo3, "blbf-so3")
        );
        assert!("beam9+policy".parse::<MethodSpec>().is_err());
        assert!("given+magic".parse::<MethodSpec>().is_err());
    }

    #[test]
    fn matrix_required_for_learned_orders() {
        let m: MethodSpec = "greedy+blbf-so2".parse().unwrap();
        assert!(matches!(m.planner(None), Err(PackError::Config(_))));
    }
}
