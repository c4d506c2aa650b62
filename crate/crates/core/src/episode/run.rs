use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::trace::EpisodeTrace;
use super::{Action, Decision, Env, Policy, PolicyView, StepRecord};
use crate::error::{PackError, Result};
use crate::heuristics::order_by_volume;
use crate::mesh::ObjectModel;
use crate::sequence::{beam3_plan, greedy_plan, sample_plan, PlanItem, TransitionMatrix};

/// How the objects of an episode are ordered before packing.
#[derive(Clone, Debug)]
pub enum SequencePlanner {
    /// Keep the order the episode lists.
    Given,
    /// Largest volume first.
    Volume,
    /// Seeded shuffle.
    Random,
    Greedy(Arc<TransitionMatrix>),
    Beam3(Arc<TransitionMatrix>),
    /// Seeded sampling from the top-3 transitions.
    Sampled(Arc<TransitionMatrix>),
}

impl SequencePlanner {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Given => "given",
            Self::Volume => "volume",
            Self::Random => "random",
            Self::Greedy(_) => "greedy",
            Self::Beam3(_) => "beam3",
            Self::Sampled(_) => "sampled",
        }
    }

    pub fn order(&self, objects: &[ObjectModel], seed: u64) -> Result<Vec<ObjectModel>> {
        let items: Vec<PlanItem> = objects
            .iter()
            .map(|m| PlanItem::new(&m.id, &m.category))
            .collect();
        let by_plan = |order: Vec<String>| -> Vec<ObjectModel> {
            let mut pool: Vec<Option<&ObjectModel>> = objects.iter().map(Some).collect();
            order
                .iter()
                .map(|id| {
                    let slot = pool
                        .iter_mut()
                        .find(|m| m.is_some_and(|m| &m.id == id))
                        .expect("plan uses known ids");
                    slot.take().unwrap().clone()
                })
                .collect()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(match self {
            Self::Given => objects.to_vec(),
            Self::Volume => order_by_volume(objects)
                .into_iter()
                .map(|k| objects[k].clone())
                .collect(),
            Self::Random => {
                let mut v = objects.to_vec();
                v.shuffle(&mut rng);
                v
            }
            Self::Greedy(m) => by_plan(greedy_plan(m, &items)?.order),
            Self::Beam3(m) => by_plan(beam3_plan(m, &items)?.order),
            Self::Sampled(m) => by_plan(sample_plan(m, &items, &mut rng)?.order),
        })
    }
}

/// Uniform random normalized actions, with positions drawn from
/// `[-spread, spread]`.
#[derive(Clone, Debug)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
    pub spread: f64,
}

impl RandomPolicy {
    pub fn new(seed: u64, spread: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spread,
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn reset(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn act(&mut self, _view: &PolicyView<'_>) -> Result<Decision> {
        let s = self.spread.abs().min(1.0);
        let mut draw = |lim: f64| {
            if lim == 0.0 {
                0.0
            } else {
                self.rng.random_range(-lim..=lim)
            }
        };
        Ok(Decision::Action(Action::new(draw(s), draw(s), draw(1.0))))
    }
}

/// Runs one episode to termination over `objects` in the given order.
pub fn run_episode(
    env: &mut Env,
    policy: &mut dyn Policy,
    objects: Vec<ObjectModel>,
    episode_id: &str,
    method: &str,
    seed: u64,
) -> Result<EpisodeTrace> {
    let order: Vec<String> = objects.iter().map(|m| m.id.clone()).collect();
    let len = objects.len();
    env.reset(objects, seed)?;
    policy.reset(seed);
    let mut steps = Vec::with_capacity(len);
    while let Some(object) = env.current_object().cloned() {
        let observation = if policy.wants_observation() {
            Some(env.observe()?)
        } else {
            None
        };
        let view = PolicyView {
            state: env.state(),
            object: &object,
            upcoming: env.upcoming(),
            observation: observation.as_ref(),
            cache: env.cache(),
            step: steps.len(),
        };
        let started = Instant::now();
        let decision = policy.act(&view)?;
        let think = started.elapsed();
        let t = env.apply(decision)?;
        steps.push(StepRecord {
            episode_id: episode_id.to_owned(),
            method: method.to_owned(),
            seed,
            episode_len: len,
            step: steps.len(),
            object_id: object.id.clone(),
            category: object.category.clone(),
            pose: t.pose,
            status: t.status,
            reward: t.reward,
            compactness: t.settle.map(|_| t.outcome.compactness),
            stable: t.settle.map(|s| s.stable),
            tilt_deg: t.settle.map(|s| s.tilt_deg),
            support_fraction: t.settle.map(|s| s.support_fraction),
            terminated: t.terminated,
            termination: t.termination,
            latency_ms: (think + t.drop_time).as_secs_f64() * 1e3,
        });
    }
    let termination = env
        .termination()
        .ok_or_else(|| PackError::Internal("episode loop ended without termination".into()))?;
    Ok(EpisodeTrace {
        episode_id: episode_id.to_owned(),
        method: method.to_owned(),
        seed,
        order,
        steps,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::container::ContainerSpec;
    use crate::episode::{read_traces, replay, write_traces, EnvConfig, Termination};
    use crate::heuristics::{HeuristicConfig, HeuristicPolicy};
    use crate::mesh::shapes;

    fn objects() -> Vec<ObjectModel> {
        vec![
            ObjectModel::new("a", "box", &shapes::cuboid(0.1, 0.08, 0.06)).unwrap(),
            ObjectModel::new("b", "can", &shapes::cylinder(0.035, 0.1, 16)).unwrap(),
            ObjectModel::new("c", "ball", &shapes::sphere(0.04, 8, 16)).unwrap(),
            ObjectModel::new("d", "box", &shapes::cuboid(0.12, 0.1, 0.05)).unwrap(),
        ]
    }

    fn cfg() -> EnvConfig {
        EnvConfig {
            container: ContainerSpec {
                cell_size: 0.005,
                ..ContainerSpec::default()
            },
            ..EnvConfig::default()
        }
    }

    #[test]
    fn heuristic_episode_places_everything() {
        let mut env = Env::new(cfg()).unwrap();
        let mut policy = HeuristicPolicy::new(HeuristicConfig::default()).unwrap();
        let ordered = SequencePlanner::Volume.order(&objects(), 0).unwrap();
        assert_eq!(
            ordered.iter().map(|m| m.id.as_str()).collect::<Vec<_>>(),
            ["d", "a", "b", "c"]
        );
        let trace = run_episode(&mut env, &mut policy, ordered, "e0", "blbf-so2", 0).unwrap();
        assert!(trace.success());
        assert_eq!(trace.placed(), 4);
        let c = trace.final_compactness().unwrap();
        assert!(c > 0.0 && c <= 1.0);
    }

    #[test]
    fn traces_round_trip_and_replay() {
        let mut env = Env::new(cfg()).unwrap();
        let mut traces = Vec::new();
        for seed in 0..6 {
            let mut policy = RandomPolicy::new(0, 0.8);
            let ordered = SequencePlanner::Random.order(&objects(), seed).unwrap();
            let t = run_episode(
                &mut env,
                &mut policy,
                ordered,
                &format!("e{seed}"),
                "random",
                seed,
            )
            .unwrap();
            if t.success() {
                assert_eq!(env.state().placements.len(), 4);
            } else {
                assert_ne!(t.termination, Termination::AllPlaced);
            }
            let state = replay(&t, &objects(), &cfg()).unwrap();
            assert_eq!(state.heightmap(), env.state().heightmap());
            traces.push(t);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        write_traces(&path, &traces).unwrap();
        let back = read_traces(&path).unwrap();
        assert_eq!(back.len(), traces.len());
        for (a, b) in back.iter().zip(&traces) {
            assert_eq!((&a.steps, a.termination), (&b.steps, b.termination));
        }
    }

    #[test]
    fn seeded_random_policy_is_reproducible() {
        let run = || {
            let mut env = Env::new(cfg()).unwrap();
            let mut p = RandomPolicy::new(0, 1.0);
            run_episode(&mut env, &mut p, objects(), "e", "random", 42)
                .unwrap()
                .without_timing()
        };
        assert_eq!(run(), run());
    }
}
