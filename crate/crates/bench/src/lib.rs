//! Fixtures shared by the benchmarks.

use std::f64::consts::PI;
use std::sync::Arc;

use packsim_core::mesh::{rasterize, shapes};
use packsim_core::sequence::PlanItem;
use packsim_core::{
    ContainerSpec, ContainerState, ObjectModel, Pose, SettleResult, TransitionMatrix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn household_objects() -> Vec<ObjectModel> {
    vec![
        ObjectModel::new("cereal", "box", &shapes::cuboid(0.19, 0.065, 0.25)).unwrap(),
        ObjectModel::new("tea", "box", &shapes::cuboid(0.12, 0.07, 0.07)).unwrap(),
        ObjectModel::new("soup", "can", &shapes::cylinder(0.034, 0.1, 24)).unwrap(),
        ObjectModel::new(
            "mustard",
            "bottle",
            &shapes::bottle(0.03, 0.13, 0.012, 0.05, 24),
        )
        .unwrap(),
        ObjectModel::new(
            "bread",
            "bread",
            &shapes::ellipsoid(0.12, 0.06, 0.05, 10, 20),
        )
        .unwrap(),
        ObjectModel::new("orange", "fruit", &shapes::sphere(0.038, 10, 20)).unwrap(),
    ]
}

/// A default-size box with `count` objects dropped at random spots.
pub fn cluttered_state(count: usize, seed: u64) -> ContainerState {
    let spec = ContainerSpec::default();
    let objects = household_objects();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = ContainerState::new(spec).unwrap();
    let mut placed = 0;
    while placed < count {
        let m = &objects[rng.random_range(1..objects.len())];
        let hf = Arc::new(rasterize(m, rng.random_range(-PI..PI), spec.cell_size).unwrap());
        let (x, y) = (rng.random_range(0.06..0.34), rng.random_range(0.06..0.24));
        let Ok(z) = state.drop_z(&hf, x, y) else {
            continue;
        };
        if z + hf.max_top <= spec.ceiling() {
            state
                .commit(
                    m,
                    hf,
                    Pose {
                        x,
                        y,
                        z,
                        ..Pose::default()
                    },
                    SettleResult::resting(),
                )
                .unwrap();
            placed += 1;
        }
    }
    state
}

/// A matrix over `categories` learned from noisy preference-ordered demos.
pub fn demo_matrix(categories: usize, seed: u64) -> (TransitionMatrix, Vec<PlanItem>) {
    let names: Vec<String> = (0..categories).map(|k| format!("cat{k:02}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let demos: Vec<Vec<String>> = (0..200)
        .map(|_| {
            let mut keyed: Vec<(f64, &String)> = names
                .iter()
                .enumerate()
                .map(|(k, n)| (k as f64 + rng.random_range(0.0..3.0), n))
                .collect();
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
            keyed.into_iter().map(|(_, n)| n.clone()).collect()
        })
        .collect();
    let matrix = TransitionMatrix::build(&names, &demos, 0.5).unwrap();
    let items = (0..categories + categories / 2)
        .map(|k| PlanItem::new(format!("obj{k:02}"), names[k % categories].clone()))
        .collect();
    (matrix, items)
}
