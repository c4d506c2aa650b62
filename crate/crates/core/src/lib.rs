//! Deterministic engine for packing irregular 3D objects into a box.
//!
//! The crate is organised bottom-up:
//!
//! - [`mesh`]: mesh loading, convex hulls, volumes and per-orientation heightfields.
//! - [`container`]: the box heightmap, drop-height estimation, commits and observations.
//! - [`sequence`]: a transition-matrix model of demonstrated packing orders and beam planning.
//! - [`heuristics`]: largest-first ordering, rotation alignment and bottom-left-back fill.
//! - [`settle`]: a quasi-static support-polygon stability model.
//! - [`reward`]: compactness and the Simple / C / CS step rewards.
//! - [`episode`]: the reset/step environment, policies and traces.
//! - [`bench`]: manifests, episode files, benchmark suites, reports and plots.
//! - [`wire`]: the newline-delimited JSON protocol used by external training clients.

pub mod bench;
pub mod container;
pub mod episode;
pub mod error;
pub mod heuristics;
pub mod mesh;
pub mod reward;
pub mod sequence;
pub mod settle;
pub mod wire;

pub use container::{BoundsCheck, ContainerSpec, ContainerState, Observation, Placement, Pose};
pub use episode::{Action, Env, EpisodeTrace, Policy};
pub use error::{PackError, Result};
pub use heuristics::{HeuristicConfig, RotationMode};
pub use mesh::{HeightfieldPair, ObjectModel, Orientation, TriMesh};
pub use reward::{RewardConfig, RewardKind};
pub use sequence::{SequencePlan, TransitionMatrix};
pub use settle::SettleResult;
