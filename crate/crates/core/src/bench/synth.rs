//! Synthetic household-object dataset: convex stand-ins for boxes, cans,
//! bottles and produce, demonstration sequences drawn from a noisy
//! category preference, and episode files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::library::{write_episodes, write_manifest, EpisodeDef, ManifestEntry, ObjectLibrary};
use crate::error::{IoContext, Result};
use crate::mesh::{shapes, write_obj, ObjectModel, TriMesh};

/// `(category, preference rank, base mesh)`. Lower ranks tend to be packed
/// first in the synthetic demonstrations: heavy boxes and cans before
/// bottles, produce and soft items.
fn catalog() -> Vec<(&'static str, f64, TriMesh)> {
    vec![
        ("cereal_box", 0.0, shapes::cuboid(0.19, 0.065, 0.25)),
        ("pasta_box", 0.5, shapes::cuboid(0.20, 0.08, 0.05)),
        ("tea_box", 1.0, shapes::cuboid(0.12, 0.07, 0.07)),
        ("soup_can", 1.5, shapes::cylinder(0.034, 0.10, 24)),
        ("coffee_jar", 2.0, shapes::cylinder(0.045, 0.14, 24)),
        ("chips_can", 2.5, shapes::cylinder(0.037, 0.24, 24)),
        (
            "bleach_bottle",
            3.0,
            shapes::bottle(0.05, 0.17, 0.016, 0.06, 24),
        ),
        (
            "mustard_bottle",
            3.5,
            shapes::bottle(0.03, 0.13, 0.012, 0.05, 24),
        ),
        ("bread", 4.0, shapes::ellipsoid(0.12, 0.06, 0.05, 10, 20)),
        ("cheese_wedge", 4.5, shapes::wedge(0.10, 0.07, 0.05)),
        ("sponge", 5.0, shapes::cuboid(0.09, 0.06, 0.03)),
        ("yogurt_cup", 5.5, shapes::cone(0.04, 0.08, 24)),
        ("banana", 6.0, shapes::ellipsoid(0.09, 0.02, 0.02, 8, 16)),
        ("apple", 6.5, shapes::ellipsoid(0.04, 0.04, 0.036, 10, 20)),
        ("orange", 7.0, shapes::sphere(0.038, 10, 20)),
        ("tennis_ball", 7.5, shapes::sphere(0.033, 10, 20)),
    ]
}

const VARIANT_SCALES: [f64; 3] = [0.85, 1.0, 1.1];

pub struct SynthPaths {
    pub manifest: PathBuf,
    pub demos: PathBuf,
    pub episodes: PathBuf,
}

#[derive(Clone, Copy, Debug)]
pub struct SynthConfig {
    pub episodes: usize,
    pub demos: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Spread of the per-object preference noise, in rank units.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            episodes: 40,
            demos: 200,
            min_objects: 12,
            max_objects: 22,
            noise: 2.5,
            seed: 0,
        }
    }
}

/// Writes `meshes/*.obj`, `manifest.json`, `demos.jsonl` and
/// `episodes.jsonl` under `dir`.
pub fn write_dataset(dir: &Path, cfg: &SynthConfig) -> Result<SynthPaths> {
    let mesh_dir = dir.join("meshes");
    std::fs::create_dir_all(&mesh_dir).at_path(&mesh_dir)?;
    let mut entries = BTreeMap::new();
    let mut ranked = Vec::new();
    for (category, rank, mesh) in catalog() {
        let file = format!("meshes/{category}.obj");
        write_obj(&mesh, &dir.join(&file))?;
        for (v, &scale) in VARIANT_SCALES.iter().enumerate() {
            let id = format!("{category}_{v}");
            entries.insert(
                id.clone(),
                ManifestEntry {
                    mesh_path: file.clone().into(),
                    category: category.into(),
                    scale,
                },
            );
            ranked.push((id, category.to_string(), rank));
        }
    }
    let manifest = dir.join("manifest.json");
    write_manifest(&manifest, &entries)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draw_set = |rng: &mut ChaCha8Rng| {
        let n = rng
            .random_range(cfg.min_objects..=cfg.max_objects)
            .min(ranked.len());
        ranked.choose_multiple(rng, n).cloned().collect::<Vec<_>>()
    };
    let mut demo_lines = String::new();
    for _ in 0..cfg.demos {
        let mut set = draw_set(&mut rng);
        let mut keyed: Vec<(f64, String)> = set
            .drain(..)
            .map(|(_, c, r)| (r + rng.random_range(0.0..cfg.noise.max(1e-9)), c))
            .collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
        let cats: Vec<&str> = keyed.iter().map(|k| k.1.as_str()).collect();
        demo_lines.push_str(&serde_json::to_string(&cats)?);
        demo_lines.push('\n');
    }
    let demos = dir.join("demos.jsonl");
    std::fs::write(&demos, demo_lines).at_path(&demos)?;

    let episodes: Vec<EpisodeDef> = (0..cfg.episodes)
        .map(|k| EpisodeDef {
            episode_id: format!("ep{k:03}"),
            objects: draw_set(&mut rng)
                .into_iter()
                .map(|(id, _, _)| id)
                .collect(),
        })
        .collect();
    let episodes_path = dir.join("episodes.jsonl");
    write_episodes(&episodes_path, &episodes)?;
    Ok(SynthPaths {
        manifest,
        demos,
        episodes: episodes_path,
    })
}

/// Tall objects (jugs and tubes 0.24-0.26 m high, about 0.093 m across):
/// twelve stand side by side on the floor under the ceiling, while lying
/// down along the long wall leaves room for only three per layer.
pub fn tall_object_suite(episodes: usize, seed: u64) -> Result<(ObjectLibrary, Vec<EpisodeDef>)> {
    let designs = [
        ("juice_jug", shapes::bottle(0.0465, 0.19, 0.02, 0.06, 24)),
        ("water_jug", shapes::bottle(0.046, 0.2, 0.022, 0.05, 24)),
        ("snack_tube", shapes::cylinder(0.0465, 0.24, 24)),
        ("paper_tube", shapes::cylinder(0.045, 0.26, 24)),
    ];
    let mut models = Vec::new();
    for (category, mesh) in &designs {
        for v in 0..4 {
            models.push(ObjectModel::new(
                format!("{category}_{v}"),
                *category,
                mesh,
            )?);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let defs = (0..episodes)
        .map(|k| {
            let n = rng.random_range(10..=12);
            EpisodeDef {
                episode_id: format!("tall{k:02}"),
                objects: models
                    .choose_multiple(&mut rng, n)
                    .map(|m| m.id.clone())
                    .collect(),
            }
        })
        .collect();
    Ok((ObjectLibrary::from_models(models)?, defs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::library::load_episodes;
    use crate::container::{ContainerSpec, OBSERVATION_SIZE};
    use crate::mesh::rasterize;
    use crate::sequence::load_demos;

    #[test]
    fn dataset_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            episodes: 5,
            demos: 10,
            ..SynthConfig::default()
        };
        let paths = write_dataset(dir.path(), &cfg).unwrap();
        let lib = ObjectLibrary::load(&paths.manifest).unwrap();
        assert_eq!(lib.len(), 48);
        let eps = load_episodes(&paths.episodes, &lib).unwrap();
        assert_eq!(eps.len(), 5);
        assert!(eps.iter().all(|e| (12..=22).contains(&e.objects.len())));
        assert_eq!(load_demos(&paths.demos).unwrap().len(), 10);
    }

    #[test]
    fn catalog_fits_the_observation() {
        let spec = ContainerSpec::default();
        for (category, _, mesh) in catalog() {
            let m = ObjectModel::new(category, category, &mesh.scaled(VARIANT_SCALES[2])).unwrap();
            let p = rasterize(&m, 0.0, spec.cell_size).unwrap();
            assert!(
                spec.ny() + 2 + p.nv <= OBSERVATION_SIZE,
                "{category} is {} cells wide",
                p.nv
            );
            assert!(p.max_top < spec.ceiling(), "{category}");
        }
    }
}
