use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{IoContext, PackError, Result};
use crate::mesh::{load_mesh, MeshFormat, ObjectModel};

/// One manifest entry. Relative mesh paths resolve against the manifest's
/// directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub mesh_path: PathBuf,
    pub category: String,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

/// Object models by identifier.
#[derive(Clone, Debug, Default)]
pub struct ObjectLibrary {
    models: BTreeMap<String, ObjectModel>,
}

impl ObjectLibrary {
    pub fn from_models(models: impl IntoIterator<Item = ObjectModel>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for m in models {
            let id = m.id.clone();
            if map.insert(id.clone(), m).is_some() {
                return Err(PackError::Manifest(format!("duplicate object id {id:?}")));
            }
        }
        Ok(Self { models: map })
    }

    /// Loads every mesh listed in a JSON manifest (`id -> entry`), in parallel.
    pub fn load(manifest: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(manifest).at_path(manifest)?;
        let entries: BTreeMap<String, ManifestEntry> = serde_json::from_str(&text)
            .map_err(|e| PackError::Manifest(format!("{}: {e}", manifest.display())))?;
        let base = manifest.parent().unwrap_or(Path::new("."));
        let models = entries
            .par_iter()
            .map(|(id, entry)| {
                let path = base.join(&entry.mesh_path);
                let build = || -> Result<ObjectModel> {
                    let format = MeshFormat::from_path(&path)
                        .ok_or_else(|| PackError::Manifest("mesh must be .obj or .stl".into()))?;
                    let mesh = load_mesh(&path, format, entry.scale)?;
                    ObjectModel::new(id.clone(), entry.category.clone(), &mesh)
                };
                build().map_err(|e| {
                    PackError::Manifest(format!("object {id:?} ({}): {e}", path.display()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_models(models)
    }

    pub fn get(&self, id: &str) -> Option<&ObjectModel> {
        self.models.get(id)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ObjectModel> {
        self.models.values()
    }

    /// Models for `ids`, in order.
    pub fn resolve<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<ObjectModel>> {
        ids.iter()
            .map(|id| {
                self.get(id.as_ref())
                    .cloned()
                    .ok_or_else(|| PackError::Manifest(format!("unknown object {:?}", id.as_ref())))
            })
            .collect()
    }
}

pub fn write_manifest(path: &Path, entries: &BTreeMap<String, ManifestEntry>) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(entries)?).at_path(path)
}

/// An ordered object list to pack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeDef {
    pub episode_id: String,
    pub objects: Vec<String>,
}

/// Reads episode definitions, one JSON object per line, rejecting unknown
/// object identifiers with the offending line number.
pub fn load_episodes(path: &Path, library: &ObjectLibrary) -> Result<Vec<EpisodeDef>> {
    let file = std::fs::File::open(path).at_path(path)?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.at_path(path)?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| PackError::Input {
            path: path.to_owned(),
            line: n + 1,
            message,
        };
        let ep: EpisodeDef = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if ep.objects.is_empty() {
            return Err(bad(format!("episode {:?} lists no objects", ep.episode_id)));
        }
        if let Some(id) = ep.objects.iter().find(|id| library.get(id).is_none()) {
            return Err(bad(format!("unknown object {id:?}")));
        }
        out.push(ep);
    }
    Ok(out)
}

pub fn write_episodes(path: &Path, episodes: &[EpisodeDef]) -> Result<()> {
    let mut out = Vec::new();
    for ep in episodes {
        serde_json::to_writer(&mut out, ep)?;
        out.write_all(b"\n").at_path(path)?;
    }
    std::fs::write(path, out).at_path(path)
}
