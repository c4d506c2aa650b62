//! OBJ (ASCII `v`/`f` records) and STL (binary or ASCII) readers.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::TriMesh;
use crate::error::{IoContext, PackError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshFormat {
    Obj,
    Stl,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "obj" => Some(Self::Obj),
            "stl" => Some(Self::Stl),
            _ => None,
        }
    }
}

/// Loads a mesh and multiplies every coordinate by `scale`.
pub fn load_mesh(path: &Path, format: MeshFormat, scale: f64) -> Result<TriMesh> {
    let bytes = std::fs::read(path).at_path(path)?;
    let mesh = match format {
        MeshFormat::Obj => parse_obj(&bytes)?,
        MeshFormat::Stl => parse_stl(&bytes)?,
    };
    Ok(mesh.scaled(scale))
}

fn require_volume(mesh: TriMesh) -> Result<TriMesh> {
    if mesh.vertices.len() < 4 {
        return Err(PackError::DegenerateMesh(format!(
            "{} vertices, need at least 4",
            mesh.vertices.len()
        )));
    }
    Ok(mesh)
}

pub fn parse_obj(bytes: &[u8]) -> Result<TriMesh> {
    let text = std::str::from_utf8(bytes).map_err(|e| PackError::Format {
        format: "OBJ",
        offset: e.valid_up_to(),
        message: "invalid UTF-8".into(),
    })?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let at = offset;
        offset += line.len();
        let err = |message: String| PackError::Format {
            format: "OBJ",
            offset: at,
            message,
        };
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| err(format!("bad coordinate {t:?}")))
                    })
                    .collect::<Result<_>>()?;
                if coords.len() != 3 {
                    return Err(err("vertex needs three coordinates".into()));
                }
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for t in tokens {
                    let head = t.split('/').next().unwrap_or("");
                    let i: i64 = head
                        .parse()
                        .map_err(|_| err(format!("bad face index {t:?}")))?;
                    let resolved = match i {
                        0 => return Err(err("face index 0".into())),
                        i if i > 0 => i - 1,
                        i => vertices.len() as i64 + i,
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(err(format!("face index {i} out of range")));
                    }
                    idx.push(resolved as usize);
                }
                if idx.len() < 3 {
                    return Err(err("face needs at least three vertices".into()));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    require_volume(TriMesh { vertices, faces })
}

/// Parses binary STL, falling back to ASCII when the data starts with `solid`
/// and does not match the binary length. Coincident vertices are welded.
pub fn parse_stl(bytes: &[u8]) -> Result<TriMesh> {
    let binary_len = (bytes.len() >= 84)
        .then(|| 84 + 50 * u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize);
    let triangles = if bytes.starts_with(b"solid") && binary_len != Some(bytes.len()) {
        parse_stl_ascii(bytes)?
    } else {
        parse_stl_binary(bytes)?
    };
    let mut welded: HashMap<[u64; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut faces = Vec::with_capacity(triangles.len());
    for tri in triangles {
        let face = tri.map(|p| {
            *welded
                .entry(p.map(|c| (c as f64).to_bits()))
                .or_insert_with(|| {
                    vertices.push(Point3::new(p[0] as f64, p[1] as f64, p[2] as f64));
                    vertices.len() - 1
                })
        });
        faces.push(face);
    }
    require_volume(TriMesh { vertices, faces })
}

fn parse_stl_binary(bytes: &[u8]) -> Result<Vec<[[f32; 3]; 3]>> {
    let err = |offset, message: &str| PackError::Format {
        format: "STL",
        offset,
        message: message.into(),
    };
    if bytes.len() < 84 {
        return Err(err(bytes.len(), "truncated header"));
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    let mut out = Vec::with_capacity(count);
    for t in 0..count {
        let base = 84 + 50 * t;
        if base + 50 > bytes.len() {
            return Err(err(base, "truncated triangle record"));
        }
        let f = |k: usize| {
            f32::from_le_bytes(
                bytes[base + 12 + 4 * k..base + 16 + 4 * k]
                    .try_into()
                    .unwrap(),
            )
        };
        let tri = [[f(0), f(1), f(2)], [f(3), f(4), f(5)], [f(6), f(7), f(8)]];
        if tri.iter().flatten().any(|c| !c.is_finite()) {
            return Err(err(base, "non-finite coordinate"));
        }
        out.push(tri);
    }
    Ok(out)
}

fn parse_stl_ascii(bytes: &[u8]) -> Result<Vec<[[f32; 3]; 3]>> {
    let text = std::str::from_utf8(bytes).map_err(|e| PackError::Format {
        format: "STL",
        offset: e.valid_up_to(),
        message: "invalid UTF-8".into(),
    })?;
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(3);
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let at = offset;
        offset += line.len();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("vertex") => {
                let c: Vec<f32> = tokens.filter_map(|t| t.parse().ok()).collect();
                if c.len() != 3 {
                    return Err(PackError::Format {
                        format: "STL",
                        offset: at,
                        message: "bad vertex".into(),
                    });
                }
                current.push([c[0], c[1], c[2]]);
            }
            Some("endfacet") => {
                let tri: [[f32; 3]; 3] =
                    current
                        .as_slice()
                        .try_into()
                        .map_err(|_| PackError::Format {
                            format: "STL",
                            offset: at,
                            message: format!("facet with {} vertices", current.len()),
                        })?;
                out.push(tri);
                current.clear();
            }
            _ => {}
        }
    }
    Ok(out)
}

/// Writes `mesh` as ASCII OBJ.
pub fn write_obj(mesh: &TriMesh, path: &Path) -> Result<()> {
    use std::fmt::Write;
    let mut s = String::new();
    for v in &mesh.vertices {
        writeln!(s, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    for f in &mesh.faces {
        writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    std::fs::write(path, s).at_path(path)
}

/// Writes `mesh` as binary STL.
pub fn write_stl(mesh: &TriMesh, path: &Path) -> Result<()> {
    let mut out = vec![0u8; 80];
    out.extend((mesh.faces.len() as u32).to_le_bytes());
    for f in &mesh.faces {
        let [a, b, c] = f.map(|i| mesh.vertices[i]);
        let n = (b - a)
            .cross(&(c - a))
            .try_normalize(0.0)
            .unwrap_or_default();
        for x in [n.x, n.y, n.z] {
            out.extend((x as f32).to_le_bytes());
        }
        for p in [a, b, c] {
            for x in [p.x, p.y, p.z] {
                out.extend((x as f32).to_le_bytes());
            }
        }
        out.extend([0u8, 0]);
    }
    std::fs::write(path, out).at_path(path)
}
