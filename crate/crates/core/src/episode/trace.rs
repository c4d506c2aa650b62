use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Env, EnvConfig, StepStatus, Termination};
use crate::container::{ContainerState, Pose};
use crate::error::{IoContext, PackError, Result};
use crate::mesh::ObjectModel;

/// One placement attempt. Serialized as one JSON line per step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub episode_id: String,
    pub method: String,
    pub seed: u64,
    pub episode_len: usize,
    pub step: usize,
    pub object_id: String,
    pub category: String,
    pub pose: Pose,
    pub status: StepStatus,
    pub reward: f64,
    pub compactness: Option<f64>,
    pub stable: Option<bool>,
    pub tilt_deg: Option<f64>,
    pub support_fraction: Option<f64>,
    pub terminated: bool,
    pub termination: Option<Termination>,
    /// Policy decision plus drop-height time, in milliseconds.
    pub latency_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub episode_id: String,
    pub method: String,
    pub seed: u64,
    /// Object identifiers in the order they were offered.
    pub order: Vec<String>,
    pub steps: Vec<StepRecord>,
    pub termination: Termination,
}

impl EpisodeTrace {
    pub fn success(&self) -> bool {
        self.termination == Termination::AllPlaced
    }

    pub fn placed(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| s.status == StepStatus::Placed)
            .count()
    }

    /// Compactness after the last successful placement.
    pub fn final_compactness(&self) -> Option<f64> {
        self.steps.iter().rev().find_map(|s| s.compactness)
    }

    /// Fraction of placed objects judged stable.
    pub fn stability_rate(&self) -> Option<f64> {
        let placed = self.placed();
        (placed > 0).then(|| {
            self.steps.iter().filter(|s| s.stable == Some(true)).count() as f64 / placed as f64
        })
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn latencies_ms(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.latency_ms)
    }

    /// The trace with timing fields zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> Self {
        let mut t = self.clone();
        t.steps.iter_mut().for_each(|s| s.latency_ms = 0.0);
        t
    }
}

pub fn write_traces(path: &Path, traces: &[EpisodeTrace]) -> Result<()> {
    let file = std::fs::File::create(path).at_path(path)?;
    let mut w = BufWriter::new(file);
    for t in traces {
        for s in &t.steps {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n").at_path(path)?;
        }
    }
    w.flush().at_path(path)
}

/// Regroups step lines into episodes; an episode ends at a line with
/// `terminated: true`.
pub fn read_traces(path: &Path) -> Result<Vec<EpisodeTrace>> {
    let file = std::fs::File::open(path).at_path(path)?;
    let mut out = Vec::new();
    let mut open: Vec<StepRecord> = Vec::new();
    let mut last_line = 0;
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.at_path(path)?;
        if line.trim().is_empty() {
            continue;
        }
        last_line = n + 1;
        let bad = |message: String| PackError::Input {
            path: path.to_owned(),
            line: n + 1,
            message,
        };
        let step: StepRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if let Some(first) = open.first() {
            if (&first.episode_id, &first.method, first.seed)
                != (&step.episode_id, &step.method, step.seed)
            {
                return Err(bad("new episode before the previous one terminated".into()));
            }
        }
        let done = step.termination;
        open.push(step);
        if let Some(termination) = done {
            let steps = std::mem::take(&mut open);
            let first = &steps[0];
            out.push(EpisodeTrace {
                episode_id: first.episode_id.clone(),
                method: first.method.clone(),
                seed: first.seed,
                order: steps.iter().map(|s| s.object_id.clone()).collect(),
                termination,
                steps,
            });
        }
    }
    if !open.is_empty() {
        return Err(PackError::Input {
            path: path.to_owned(),
            line: last_line,
            message: "unterminated episode".into(),
        });
    }
    Ok(out)
}

/// Re-executes the recorded poses and checks statuses and rewards agree.
/// Returns the final container state.
pub fn replay(
    trace: &EpisodeTrace,
    objects: &[ObjectModel],
    cfg: &EnvConfig,
) -> Result<ContainerState> {
    let lookup =
        |id: &str| {
            objects.iter().find(|m| m.id == id).cloned().ok_or_else(|| {
                PackError::Manifest(format!("trace references unknown object {id:?}"))
            })
        };
    let mut sequence = trace
        .steps
        .iter()
        .map(|s| lookup(&s.object_id))
        .collect::<Result<Vec<_>>>()?;
    // Objects never reached keep the episode from ending early on success.
    if let Some(len) = trace.steps.first().map(|s| s.episode_len) {
        while sequence.len() < len {
            sequence.push(sequence[0].clone());
        }
    }
    let mut env = Env::new(EnvConfig {
        render: false,
        ..cfg.clone()
    })?;
    env.reset(sequence, trace.seed)?;
    for s in &trace.steps {
        let t = env.step_pose(s.pose.x, s.pose.y, s.pose.theta, s.pose.orientation)?;
        if t.status != s.status || t.reward != s.reward || t.termination != s.termination {
            return Err(PackError::Internal(format!(
                "replay diverged at step {}: {:?}/{} vs recorded {:?}/{}",
                s.step, t.status, t.reward, s.status, s.reward
            )));
        }
    }
    Ok(env.state().clone())
}
