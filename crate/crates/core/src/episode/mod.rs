//! The packing environment: objects arrive one at a time, a policy chooses a
//! planar pose, the object is dropped, settled, scored and committed.
//!
//! An episode ends when every object is placed or when a placement leaves
//! the box footprint or exceeds the ceiling. Instability never ends an
//! episode; it only lowers the stability term of the reward.

mod run;
mod trace;

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::container::{
    render_observation, BoundsCheck, ContainerSpec, ContainerState, Observation, Pose,
};
use crate::error::{PackError, Result};
use crate::mesh::{ObjectModel, Orientation, RasterCache};
use crate::reward::{compactness, step_reward, RewardConfig, StepOutcome};
use crate::settle::{settle_with, SettleResult};

pub use run::{run_episode, RandomPolicy, SequencePlanner};
pub use trace::{read_traces, replay, write_traces, EpisodeTrace, StepRecord};

/// Normalized planar action: `x`, `y` and `theta` in `[-1, 1]`, mapping to
/// the box length, the box width and a yaw in `[-π, π]`. Out-of-range
/// components are clamped.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Action {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    /// Metric `(x, y, theta)` in the box frame.
    pub fn to_metric(&self, spec: &ContainerSpec) -> Result<(f64, f64, f64)> {
        if !(self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()) {
            return Err(PackError::Protocol(format!("non-finite action {self:?}")));
        }
        let s = |a: f64| (a.clamp(-1.0, 1.0) + 1.0) / 2.0;
        Ok((
            s(self.x) * spec.length,
            s(self.y) * spec.width,
            self.theta.clamp(-1.0, 1.0) * PI,
        ))
    }

    /// Inverse of [`Action::to_metric`], wrapping the yaw into `[-π, π]`.
    pub fn from_metric(spec: &ContainerSpec, x: f64, y: f64, theta: f64) -> Self {
        let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
        Self {
            x: 2.0 * x / spec.length - 1.0,
            y: 2.0 * y / spec.width - 1.0,
            theta: wrapped / PI,
        }
    }
}

/// What a policy asks the environment to do with the current object.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decision {
    Action(Action),
    /// A metric pose with an explicit base orientation.
    Pose {
        x: f64,
        y: f64,
        theta: f64,
        orientation: Orientation,
    },
}

/// Everything a policy may look at when choosing a placement.
pub struct PolicyView<'a> {
    pub state: &'a ContainerState,
    pub object: &'a ObjectModel,
    pub upcoming: &'a [ObjectModel],
    pub observation: Option<&'a Observation>,
    pub cache: &'a RasterCache,
    pub step: usize,
}

pub trait Policy: Send {
    fn name(&self) -> String;

    /// Whether [`PolicyView::observation`] should be rendered.
    fn wants_observation(&self) -> bool {
        false
    }

    fn reset(&mut self, _seed: u64) {}

    fn act(&mut self, view: &PolicyView<'_>) -> Result<Decision>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Placed,
    OutOfBounds,
    OverCeiling,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    AllPlaced,
    OutOfBounds,
    OverCeiling,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub container: ContainerSpec,
    pub reward: RewardConfig,
    /// Return an observation with every transition.
    pub render: bool,
    /// Contact tolerance for settling; a quarter cell when unset.
    pub contact_tol: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Transition {
    pub observation: Option<Observation>,
    pub reward: f64,
    pub terminated: bool,
    pub termination: Option<Termination>,
    pub status: StepStatus,
    pub outcome: StepOutcome,
    pub pose: Pose,
    pub settle: Option<SettleResult>,
    /// Time spent estimating the drop height.
    pub drop_time: Duration,
}

pub struct Env {
    cfg: EnvConfig,
    cache: Arc<RasterCache>,
    objects: Vec<ObjectModel>,
    cursor: usize,
    state: ContainerState,
    termination: Option<Termination>,
    seed: u64,
}

impl Env {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        Self::with_cache(cfg, Arc::new(RasterCache::new()))
    }

    /// Environment sharing a rasterization cache with others.
    pub fn with_cache(cfg: EnvConfig, cache: Arc<RasterCache>) -> Result<Self> {
        cfg.reward.validate()?;
        let state = ContainerState::new(cfg.container)?;
        Ok(Self {
            cfg,
            cache,
            objects: Vec::new(),
            cursor: 0,
            state,
            termination: None,
            seed: 0,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn cache(&self) -> &Arc<RasterCache> {
        &self.cache
    }

    pub fn state(&self) -> &ContainerState {
        &self.state
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    pub fn is_terminated(&self) -> bool {
        self.termination.is_some()
    }

    /// Object awaiting placement, if the episode is running.
    pub fn current_object(&self) -> Option<&ObjectModel> {
        if self.termination.is_some() {
            return None;
        }
        self.objects.get(self.cursor)
    }

    /// Objects after the current one.
    pub fn upcoming(&self) -> &[ObjectModel] {
        self.objects.get(self.cursor + 1..).unwrap_or(&[])
    }

    /// Starts an episode over `objects` in the given order.
    pub fn reset(&mut self, objects: Vec<ObjectModel>, seed: u64) -> Result<Option<Observation>> {
        if objects.is_empty() {
            return Err(PackError::EmptyData("episode has no objects"));
        }
        if self.cfg.render {
            // Fail now rather than after a committed step.
            for m in &objects {
                let p =
                    self.cache
                        .get(m, Orientation::IDENTITY, 0.0, self.cfg.container.cell_size)?;
                render_observation(&self.state, Some(&p))?;
            }
        }
        self.objects = objects;
        self.cursor = 0;
        self.state.reset();
        self.termination = None;
        self.seed = seed;
        if self.cfg.render {
            Ok(Some(self.observe()?))
        } else {
            Ok(None)
        }
    }

    /// Like [`Env::reset`], but starting from a partly filled box.
    pub fn reset_on(
        &mut self,
        objects: Vec<ObjectModel>,
        state: ContainerState,
        seed: u64,
    ) -> Result<Option<Observation>> {
        if state.spec != self.cfg.container {
            return Err(PackError::Config(
                "state was built for a different container".into(),
            ));
        }
        let obs = self.reset(objects, seed)?;
        self.state = state;
        if self.cfg.render {
            Ok(Some(self.observe()?))
        } else {
            Ok(obs)
        }
    }

    /// Box heightmap plus the current object's top profile in its authored
    /// orientation.
    pub fn observe(&self) -> Result<Observation> {
        match self.current_object() {
            Some(m) => {
                let p =
                    self.cache
                        .get(m, Orientation::IDENTITY, 0.0, self.cfg.container.cell_size)?;
                render_observation(&self.state, Some(&p))
            }
            None => render_observation(&self.state, None),
        }
    }

    pub fn step(&mut self, action: Action) -> Result<Transition> {
        let (x, y, theta) = action.to_metric(&self.cfg.container)?;
        self.step_pose(x, y, theta, Orientation::IDENTITY)
    }

    pub fn apply(&mut self, decision: Decision) -> Result<Transition> {
        match decision {
            Decision::Action(a) => self.step(a),
            Decision::Pose {
                x,
                y,
                theta,
                orientation,
            } => self.step_pose(x, y, theta, orientation),
        }
    }

    /// Places the current object with its footprint center at `(x, y)`.
    pub fn step_pose(
        &mut self,
        x: f64,
        y: f64,
        theta: f64,
        orientation: Orientation,
    ) -> Result<Transition> {
        if let Some(t) = self.termination {
            return Err(PackError::Protocol(format!(
                "step after the episode terminated ({t:?})"
            )));
        }
        let Some(model) = self.objects.get(self.cursor).cloned() else {
            return Err(PackError::Protocol("step before reset".into()));
        };
        if !(x.is_finite() && y.is_finite() && theta.is_finite()) {
            return Err(PackError::Protocol(format!(
                "non-finite pose ({x}, {y}, {theta})"
            )));
        }
        let profile = self
            .cache
            .get(&model, orientation, theta, self.cfg.container.cell_size)?;
        let mut pose = Pose {
            x,
            y,
            theta,
            z: 0.0,
            orientation,
        };
        let started = Instant::now();
        let dropped = self.state.drop_z(&profile, x, y);
        let drop_time = started.elapsed();
        let (status, outcome, settle) = match dropped {
            Err(PackError::OutOfBounds { .. }) => {
                (StepStatus::OutOfBounds, StepOutcome::outside(), None)
            }
            Err(e) => return Err(e),
            Ok(z) => {
                pose.z = z;
                match self.state.check_bounds(&profile, &pose) {
                    BoundsCheck::Inside => {
                        let tol = self
                            .cfg
                            .contact_tol
                            .unwrap_or(self.cfg.container.cell_size / 4.0);
                        let settled = settle_with(&self.state, &profile, &pose, tol)?;
                        self.state.commit(&model, profile, pose, settled)?;
                        let c = compactness(&self.state)?;
                        let outcome = StepOutcome {
                            inside: true,
                            compactness: c,
                            stable: settled.stable,
                        };
                        (StepStatus::Placed, outcome, Some(settled))
                    }
                    BoundsCheck::OverCeiling => {
                        (StepStatus::OverCeiling, StepOutcome::outside(), None)
                    }
                    BoundsCheck::OutsideFootprint => {
                        (StepStatus::OutOfBounds, StepOutcome::outside(), None)
                    }
                }
            }
        };
        self.termination = match status {
            StepStatus::OutOfBounds => Some(Termination::OutOfBounds),
            StepStatus::OverCeiling => Some(Termination::OverCeiling),
            StepStatus::Placed => {
                self.cursor += 1;
                (self.cursor == self.objects.len()).then_some(Termination::AllPlaced)
            }
        };
        let observation = if self.cfg.render {
            Some(self.observe()?)
        } else {
            None
        };
        Ok(Transition {
            observation,
            reward: step_reward(&self.cfg.reward, &outcome),
            terminated: self.termination.is_some(),
            termination: self.termination,
            status,
            outcome,
            pose,
            settle,
            drop_time,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use approx::assert_relative_eq;

    fn cubes(n: usize, side: f64) -> Vec<ObjectModel> {
        (0..n)
            .map(|k| {
                ObjectModel::new(format!("c{k}"), "cube", &shapes::cuboid(side, side, side))
                    .unwrap()
            })
            .collect()
    }

    fn env(render: bool) -> Env {
        let cfg = EnvConfig {
            container: ContainerSpec {
                cell_size: 0.01,
                ..ContainerSpec::default()
            },
            render,
            ..EnvConfig::default()
        };
        Env::new(cfg).unwrap()
    }

    #[test]
    fn reset_on_keeps_the_given_heightmap() {
        let mut e = env(false);
        let spec = e.config().container;
        let state =
            ContainerState::with_heightmap(spec, vec![0.05; spec.nx() * spec.ny()]).unwrap();
        e.reset_on(cubes(1, 0.1), state, 0).unwrap();
        let t = e.step_pose(0.2, 0.15, 0.0, Orientation::IDENTITY).unwrap();
        assert_relative_eq!(t.pose.z, 0.05);
        let other = ContainerState::new(ContainerSpec::default()).unwrap();
        assert!(e.reset_on(cubes(1, 0.1), other, 0).is_err());
    }

    #[test]
    fn action_mapping_round_trips() {
        let spec = ContainerSpec::default();
        let a = Action::new(-1.0, 1.0, 0.5);
        let (x, y, t) = a.to_metric(&spec).unwrap();
        assert_eq!((x, y), (0.0, 0.3));
        assert_relative_eq!(t, PI / 2.0);
        let back = Action::from_metric(&spec, x, y, t);
        assert_relative_eq!(back.x, a.x);
        assert_relative_eq!(back.y, a.y);
        assert_relative_eq!(back.theta, a.theta);
        assert_eq!(
            Action::new(3.0, -7.0, 2.0).to_metric(&spec).unwrap(),
            (0.4, 0.0, PI)
        );
        assert!(Action::new(f64::NAN, 0.0, 0.0).to_metric(&spec).is_err());
    }

    #[test]
    fn completes_and_rejects_late_steps() {
        let mut env = env(false);
        assert!(env.reset(cubes(2, 0.1), 0).unwrap().is_none());
        let t = env
            .step_pose(0.05, 0.05, 0.0, Orientation::IDENTITY)
            .unwrap();
        assert_eq!((t.status, t.terminated), (StepStatus::Placed, false));
        assert_relative_eq!(t.reward, 0.6 * 1.0 + 0.4, epsilon = 1e-9);
        let t = env
            .step_pose(0.15, 0.05, 0.0, Orientation::IDENTITY)
            .unwrap();
        assert_eq!(t.termination, Some(Termination::AllPlaced));
        assert!(matches!(
            env.step(Action::default()),
            Err(PackError::Protocol(_))
        ));
    }

    #[test]
    fn leaving_the_box_terminates() {
        let mut env = env(false);
        env.reset(cubes(3, 0.1), 0).unwrap();
        let t = env
            .step_pose(0.01, 0.15, 0.0, Orientation::IDENTITY)
            .unwrap();
        assert_eq!(t.status, StepStatus::OutOfBounds);
        assert_eq!(t.reward, -1.0);
        assert_eq!(t.termination, Some(Termination::OutOfBounds));
        assert!(env.state().placements.is_empty());
    }

    #[test]
    fn stacking_past_the_ceiling_terminates() {
        let mut env = env(false);
        env.reset(cubes(4, 0.1), 0).unwrap();
        for _ in 0..2 {
            assert_eq!(
                env.step_pose(0.2, 0.15, 0.0, Orientation::IDENTITY)
                    .unwrap()
                    .status,
                StepStatus::Placed
            );
        }
        let t = env
            .step_pose(0.2, 0.15, 0.0, Orientation::IDENTITY)
            .unwrap();
        assert_eq!(t.status, StepStatus::OverCeiling);
        assert_eq!(t.reward, -1.0);
        assert_eq!(env.state().placements.len(), 2);
    }

    #[test]
    fn observations_follow_the_state() {
        let mut env = env(true);
        let first = env.reset(cubes(2, 0.1), 0).unwrap().unwrap();
        assert!(first.pixels[..30].iter().all(|&p| p == 0.0));
        assert_eq!(first.object_region.unwrap().col, 32);
        let t = env.step(Action::new(0.0, 0.0, 0.0)).unwrap();
        let obs = t.observation.unwrap();
        assert!(obs.get(20, 15) > 0.3);
    }
}
