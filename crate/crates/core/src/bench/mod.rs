//! Benchmark harness: object manifests, episode files, method strings,
//! parallel suite runs, CSV reports and charts.

mod library;
mod method;
pub mod plot;
mod report;
mod suite;
pub mod synth;

pub use library::{
    load_episodes, write_episodes, write_manifest, EpisodeDef, ManifestEntry, ObjectLibrary,
};
pub use method::{MethodSpec, PlannerKind, PolicyKind};
pub use report::{mean_std, BenchmarkReport, MethodSummary};
pub use suite::{
    latency_profile, run_suite, BenchSettings, LatencyProfile, SuiteConfig, THREADS_ENV,
};
