use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::library::{EpisodeDef, ObjectLibrary};
use super::method::MethodSpec;
use super::report::{mean_std, BenchmarkReport};
use crate::container::{ContainerSpec, Pose};
use crate::episode::{run_episode, Env, EnvConfig, EpisodeTrace};
use crate::error::{IoContext, PackError, Result};
use crate::heuristics::HeuristicConfig;
use crate::mesh::RasterCache;
use crate::reward::RewardConfig;
use crate::sequence::TransitionMatrix;

/// Environment variable overriding the worker count when
/// [`SuiteConfig::threads`] is unset.
pub const THREADS_ENV: &str = "PACK_THREADS";

#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub env: EnvConfig,
    pub heuristic: HeuristicConfig,
    pub methods: Vec<MethodSpec>,
    pub seeds: Vec<u64>,
    pub threads: Option<usize>,
    /// Position range of the random policy, in normalized units.
    pub random_spread: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            heuristic: HeuristicConfig::default(),
            methods: Vec::new(),
            seeds: vec![0],
            threads: None,
            random_spread: 1.0,
        }
    }
}

/// Settings file for benchmark runs, TOML or JSON by extension. Every
/// table is optional:
///
/// ```toml
/// random_spread = 1.0
/// [container]
/// cell_size = 0.002
/// [reward]
/// kind = "compactness_stability"
/// alpha = 0.6
/// [heuristic]
/// mode = "so2"
/// yaw_candidates = [0.0, 1.5707963267948966]
/// scan_stride = 1
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    pub container: ContainerSpec,
    pub reward: RewardConfig,
    pub heuristic: HeuristicConfig,
    pub contact_tol: Option<f64>,
    pub random_spread: f64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        let s = SuiteConfig::default();
        Self {
            container: s.env.container,
            reward: s.env.reward,
            heuristic: s.heuristic,
            contact_tol: s.env.contact_tol,
            random_spread: s.random_spread,
        }
    }
}

impl BenchSettings {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at_path(path)?;
        let settings: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)?,
            _ => toml::from_str(&text)
                .map_err(|e| PackError::Config(format!("{}: {e}", path.display())))?,
        };
        settings.container.validate()?;
        settings.reward.validate()?;
        settings.heuristic.validate()?;
        Ok(settings)
    }

    /// Suite configuration with these settings and no methods yet.
    pub fn suite(&self) -> SuiteConfig {
        SuiteConfig {
            env: EnvConfig {
                container: self.container,
                reward: self.reward,
                contact_tol: self.contact_tol,
                render: false,
            },
            heuristic: self.heuristic.clone(),
            random_spread: self.random_spread,
            ..SuiteConfig::default()
        }
    }
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let n = match threads {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| {
                PackError::Config(format!("{THREADS_ENV} must be a thread count, got {v:?}"))
            })?,
            Err(_) => 0,
        },
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| PackError::Config(format!("thread pool: {e}")))
}

fn run_one(
    library: &ObjectLibrary,
    episode: &EpisodeDef,
    method: &MethodSpec,
    seed: u64,
    matrix: Option<&Arc<TransitionMatrix>>,
    cfg: &SuiteConfig,
    cache: &Arc<RasterCache>,
) -> Result<EpisodeTrace> {
    let objects = library.resolve(&episode.objects)?;
    let ordered = method.planner(matrix)?.order(&objects, seed)?;
    let mut policy = method.policy(&cfg.heuristic, cfg.random_spread)?;
    let mut env = Env::with_cache(cfg.env.clone(), Arc::clone(cache))?;
    run_episode(
        &mut env,
        policy.as_mut(),
        ordered,
        &episode.episode_id,
        &method.name,
        seed,
    )
}

/// Runs every (method, episode, seed) job on a worker pool. Results are
/// ordered by method, then episode file order, then seed, whatever the
/// schedule.
pub fn run_suite(
    library: &ObjectLibrary,
    episodes: &[EpisodeDef],
    matrix: Option<Arc<TransitionMatrix>>,
    cfg: &SuiteConfig,
) -> Result<BenchmarkReport> {
    if cfg.methods.is_empty() {
        return Err(PackError::Config("no benchmark methods".into()));
    }
    if episodes.is_empty() {
        return Err(PackError::EmptyData("no episodes"));
    }
    for m in &cfg.methods {
        m.planner(matrix.as_ref())?;
    }
    let jobs: Vec<(&MethodSpec, &EpisodeDef, u64)> = cfg
        .methods
        .iter()
        .flat_map(|m| {
            episodes
                .iter()
                .flat_map(move |e| cfg.seeds.iter().map(move |&s| (m, e, s)))
        })
        .collect();
    let cache = Arc::new(RasterCache::new());
    let traces = pool(cfg.threads)?.install(|| {
        jobs.par_iter()
            .map(|(m, e, s)| run_one(library, e, m, *s, matrix.as_ref(), cfg, &cache))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(BenchmarkReport::from_traces(traces))
}

#[derive(Clone, Debug)]
pub struct LatencyProfile {
    pub mean_ms: f64,
    pub std_ms: f64,
    /// Per-decision samples after warm-up, in milliseconds.
    pub samples: Vec<f64>,
    /// Chosen poses of every measured run, for determinism checks.
    pub decisions: Vec<Vec<Pose>>,
}

/// Times each placement decision (policy plus drop height) on one thread.
/// Each episode runs `repetitions` times; the first `warmup` runs overall
/// are discarded.
pub fn latency_profile(
    library: &ObjectLibrary,
    episodes: &[EpisodeDef],
    method: &MethodSpec,
    matrix: Option<Arc<TransitionMatrix>>,
    cfg: &SuiteConfig,
    repetitions: usize,
    warmup: usize,
) -> Result<LatencyProfile> {
    let cache = Arc::new(RasterCache::new());
    let mut samples = Vec::new();
    let mut decisions = Vec::new();
    let mut run = 0;
    for episode in episodes {
        for _ in 0..repetitions.max(1) {
            let seed = cfg.seeds.first().copied().unwrap_or(0);
            let t = run_one(library, episode, method, seed, matrix.as_ref(), cfg, &cache)?;
            run += 1;
            if run <= warmup {
                continue;
            }
            samples.extend(t.latencies_ms());
            decisions.push(t.steps.iter().map(|s| s.pose).collect());
        }
    }
    let (mean_ms, std_ms) =
        mean_std(&samples).ok_or(PackError::EmptyData("no timed decisions after warm-up"))?;
    Ok(LatencyProfile {
        mean_ms,
        std_ms,
        samples,
        decisions,
    })
}
