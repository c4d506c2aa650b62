use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;

use super::plot::{histogram, line_chart, Series};
use crate::episode::{write_traces, EpisodeTrace, StepStatus};
use crate::error::{IoContext, Result};

/// Mean and population standard deviation; `None` for no samples.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub episodes: usize,
    /// Percentage of episodes that placed every object.
    pub success_rate: f64,
    /// Objects placed per episode.
    pub objects_mean: f64,
    pub objects_std: f64,
    pub compactness_mean: Option<f64>,
    pub compactness_std: Option<f64>,
    /// Stable placements over all placements.
    pub stability_rate: Option<f64>,
    pub latency_mean_ms: f64,
    pub latency_std_ms: f64,
}

#[derive(Clone, Debug)]
pub struct BenchmarkReport {
    pub summaries: Vec<MethodSummary>,
    /// Objects to pack per distinct episode: mean and standard deviation.
    pub reference: (f64, f64),
    pub traces: Vec<EpisodeTrace>,
}

/// One CSV row. Per-episode rows leave the summary columns empty and vice
/// versa; timing columns come last.
#[derive(Serialize, Default)]
struct Row {
    row_type: &'static str,
    method: String,
    episode_id: String,
    seed: Option<u64>,
    success: Option<bool>,
    termination: String,
    placed: Option<usize>,
    total: Option<usize>,
    final_compactness: Option<f64>,
    stability_rate: Option<f64>,
    total_reward: Option<f64>,
    episodes: Option<usize>,
    success_rate: Option<f64>,
    objects_mean: Option<f64>,
    objects_std: Option<f64>,
    compactness_mean: Option<f64>,
    compactness_std: Option<f64>,
    latency_mean_ms: Option<f64>,
    latency_std_ms: Option<f64>,
}

impl BenchmarkReport {
    /// Aggregates traces, which should be sorted by method, episode and seed.
    pub fn from_traces(traces: Vec<EpisodeTrace>) -> Self {
        let mut by_method: BTreeMap<&str, Vec<&EpisodeTrace>> = BTreeMap::new();
        for t in &traces {
            by_method.entry(&t.method).or_default().push(t);
        }
        let summaries = by_method
            .iter()
            .map(|(method, ts)| {
                let placed: Vec<f64> = ts.iter().map(|t| t.placed() as f64).collect();
                let finals: Vec<f64> = ts.iter().filter_map(|t| t.final_compactness()).collect();
                let stable = ts
                    .iter()
                    .flat_map(|t| &t.steps)
                    .filter(|s| s.stable == Some(true))
                    .count();
                let placements: usize = ts.iter().map(|t| t.placed()).sum();
                let lat: Vec<f64> = ts.iter().flat_map(|t| t.latencies_ms()).collect();
                let (objects_mean, objects_std) = mean_std(&placed).unwrap_or_default();
                let c = mean_std(&finals);
                let (latency_mean_ms, latency_std_ms) = mean_std(&lat).unwrap_or_default();
                MethodSummary {
                    method: method.to_string(),
                    episodes: ts.len(),
                    success_rate: 100.0 * ts.iter().filter(|t| t.success()).count() as f64
                        / ts.len() as f64,
                    objects_mean,
                    objects_std,
                    compactness_mean: c.map(|c| c.0),
                    compactness_std: c.map(|c| c.1),
                    stability_rate: (placements > 0).then(|| stable as f64 / placements as f64),
                    latency_mean_ms,
                    latency_std_ms,
                }
            })
            .collect();
        let mut lengths = BTreeMap::new();
        for t in &traces {
            lengths
                .entry(&t.episode_id)
                .or_insert(t.steps.first().map_or(0, |s| s.episode_len) as f64);
        }
        let lengths: Vec<f64> = lengths.into_values().collect();
        let reference = mean_std(&lengths).unwrap_or_default();
        Self {
            summaries,
            reference,
            traces,
        }
    }

    pub fn summary(&self, method: &str) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for t in &self.traces {
            let lat: Vec<f64> = t.latencies_ms().collect();
            let l = mean_std(&lat);
            w.serialize(Row {
                row_type: "episode",
                method: t.method.clone(),
                episode_id: t.episode_id.clone(),
                seed: Some(t.seed),
                success: Some(t.success()),
                termination: serde_json::to_value(t.termination)?
                    .as_str()
                    .unwrap_or_default()
                    .to_owned(),
                placed: Some(t.placed()),
                total: t.steps.first().map(|s| s.episode_len),
                final_compactness: t.final_compactness(),
                stability_rate: t.stability_rate(),
                total_reward: Some(t.total_reward()),
                latency_mean_ms: l.map(|l| l.0),
                latency_std_ms: l.map(|l| l.1),
                ..Row::default()
            })?;
        }
        for s in &self.summaries {
            w.serialize(Row {
                row_type: "summary",
                method: s.method.clone(),
                stability_rate: s.stability_rate,
                episodes: Some(s.episodes),
                success_rate: Some(s.success_rate),
                objects_mean: Some(s.objects_mean),
                objects_std: Some(s.objects_std),
                compactness_mean: s.compactness_mean,
                compactness_std: s.compactness_std,
                latency_mean_ms: Some(s.latency_mean_ms),
                latency_std_ms: Some(s.latency_std_ms),
                ..Row::default()
            })?;
        }
        w.serialize(Row {
            row_type: "reference",
            method: "objects-to-pack".into(),
            episodes: Some(
                self.traces
                    .iter()
                    .map(|t| &t.episode_id)
                    .collect::<BTreeSet<_>>()
                    .len(),
            ),
            objects_mean: Some(self.reference.0),
            objects_std: Some(self.reference.1),
            ..Row::default()
        })?;
        w.flush().at_path(path)
    }

    /// Writes `report.csv`, per-method trace files under `traces/` and the
    /// charts under `plots/`.
    pub fn write_all(&self, out: &Path) -> Result<()> {
        let traces_dir = out.join("traces");
        let plots_dir = out.join("plots");
        std::fs::create_dir_all(&traces_dir).at_path(&traces_dir)?;
        std::fs::create_dir_all(&plots_dir).at_path(&plots_dir)?;
        self.write_csv(&out.join("report.csv"))?;
        let mut by_method: BTreeMap<&str, Vec<EpisodeTrace>> = BTreeMap::new();
        for t in &self.traces {
            by_method.entry(&t.method).or_default().push(t.clone());
        }
        for (method, ts) in &by_method {
            write_traces(&traces_dir.join(format!("{}.jsonl", file_stem(method))), ts)?;
        }
        let finals: Vec<Series> = by_method
            .iter()
            .map(|(m, ts)| Series {
                name: m.to_string(),
                values: ts.iter().filter_map(|t| t.final_compactness()).collect(),
            })
            .collect();
        histogram(&plots_dir.join("final_compactness.png"), &finals, 20)?;
        let per_step = |f: &dyn Fn(&crate::episode::StepRecord) -> Option<f64>| -> Vec<Series> {
            by_method
                .iter()
                .map(|(m, ts)| {
                    let longest = ts.iter().map(|t| t.steps.len()).max().unwrap_or(0);
                    let values = (0..longest)
                        .filter_map(|k| {
                            let v: Vec<f64> = ts
                                .iter()
                                .filter_map(|t| t.steps.get(k))
                                .filter_map(f)
                                .collect();
                            mean_std(&v).map(|m| m.0)
                        })
                        .collect();
                    Series {
                        name: m.to_string(),
                        values,
                    }
                })
                .collect()
        };
        line_chart(
            &plots_dir.join("step_compactness.png"),
            &per_step(&|s| s.compactness),
        )?;
        line_chart(
            &plots_dir.join("step_stability.png"),
            &per_step(&|s| {
                (s.status == StepStatus::Placed).then(|| {
                    if s.stable == Some(true) {
                        1.0
                    } else {
                        0.0
                    }
                })
            }),
        )?;
        Ok(())
    }
}

fn file_stem(method: &str) -> String {
    method
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!((m, s), (5.0, 2.0));
        assert!(mean_std(&[]).is_none());
    }
}
