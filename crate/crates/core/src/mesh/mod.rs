//! Object meshes: loading, convex simplification, volumes and heightfields.

mod hull;
mod io;
pub(crate) mod raster;
pub mod shapes;

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{Matrix3, Point3, Vector3};

use crate::error::{PackError, Result};

pub use hull::convexify;
pub use io::{load_mesh, parse_obj, parse_stl, write_obj, write_stl, MeshFormat};
pub use raster::{rasterize, rasterize_oriented, HeightfieldPair, RasterCache};

/// Triangle mesh in meters. Faces index into `vertices`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some(face) = faces.iter().find(|f| f.iter().any(|&i| i >= n)) {
            return Err(PackError::DegenerateMesh(format!(
                "face {face:?} references a vertex beyond {n}"
            )));
        }
        Ok(Self { vertices, faces })
    }

    pub fn scaled(mut self, scale: f64) -> Self {
        for v in &mut self.vertices {
            v.coords *= scale;
        }
        self
    }

    pub fn transformed(&self, rotation: &Matrix3<f64>) -> Self {
        Self {
            vertices: self
                .vertices
                .iter()
                .map(|v| Point3::from(rotation * v.coords))
                .collect(),
            faces: self.faces.clone(),
        }
    }

    /// `(min, max)` corners of the axis-aligned bounding box.
    pub fn bounds(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    pub fn extents(&self) -> Vector3<f64> {
        let (lo, hi) = self.bounds();
        hi - lo
    }

    /// Every undirected edge is shared by exactly two faces, traversed once in
    /// each direction.
    pub fn check_watertight(&self) -> Result<()> {
        if self.faces.len() < 4 {
            return Err(PackError::NotWatertight(format!(
                "{} faces cannot close a volume",
                self.faces.len()
            )));
        }
        let mut directed: HashMap<(usize, usize), u32> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                *directed.entry((f[k], f[(k + 1) % 3])).or_default() += 1;
            }
        }
        for (&(a, b), &count) in &directed {
            let reverse = directed.get(&(b, a)).copied().unwrap_or(0);
            if count != 1 || reverse != 1 {
                return Err(PackError::NotWatertight(format!(
                    "edge ({a}, {b}) used {count} times forward and {reverse} times backward"
                )));
            }
        }
        Ok(())
    }

    /// Sum of signed tetrahedra `(origin, a, b, c)` and their weighted centroids.
    fn signed_moments(&self) -> (f64, Vector3<f64>) {
        // Anchoring at the first vertex instead of the origin keeps the
        // terms small for meshes placed far from it.
        let anchor = self.vertices.first().map(|p| p.coords).unwrap_or_default();
        let mut volume = 0.0;
        let mut moment = Vector3::zeros();
        for f in &self.faces {
            let a = self.vertices[f[0]].coords - anchor;
            let b = self.vertices[f[1]].coords - anchor;
            let c = self.vertices[f[2]].coords - anchor;
            let v = a.dot(&b.cross(&c)) / 6.0;
            volume += v;
            moment += (a + b + c) * (v / 4.0);
        }
        (volume, moment + anchor * volume)
    }

    /// Centroid of the enclosed solid, assuming uniform density.
    pub fn centroid(&self) -> Result<Point3<f64>> {
        self.check_watertight()?;
        let (volume, moment) = self.signed_moments();
        if volume.abs() <= f64::MIN_POSITIVE {
            return Err(PackError::DegenerateGeometry("zero-volume mesh".into()));
        }
        Ok(Point3::from(moment / volume))
    }
}

/// Enclosed volume of a closed mesh via the divergence theorem.
pub fn mesh_volume(mesh: &TriMesh) -> Result<f64> {
    mesh.check_watertight()?;
    let (volume, _) = mesh.signed_moments();
    if volume.abs() <= f64::MIN_POSITIVE {
        return Err(PackError::DegenerateGeometry("zero-volume mesh".into()));
    }
    Ok(volume.abs())
}

/// One of the 24 rotations mapping coordinate axes onto coordinate axes.
/// Index 0 is the identity (the orientation authored in the mesh file).
#[derive(
    Clone,
    Copy,
    Debug,
    Default,
    PartialEq,
    Eq,
    Hash,
    PartialOrd,
    Ord,
    serde::Serialize,
    serde::Deserialize,
)]
#[serde(transparent)]
pub struct Orientation(pub u8);

impl Orientation {
    pub const IDENTITY: Orientation = Orientation(0);
    pub const COUNT: usize = 24;

    pub fn all() -> impl Iterator<Item = Orientation> {
        (0..Self::COUNT as u8).map(Orientation)
    }

    pub fn matrix(self) -> Matrix3<f64> {
        AXIS_ROTATIONS[self.0 as usize % Self::COUNT]
    }
}

static AXIS_ROTATIONS: std::sync::LazyLock<Vec<Matrix3<f64>>> = std::sync::LazyLock::new(|| {
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut out = Vec::with_capacity(Orientation::COUNT);
    for perm in PERMS {
        for signs in 0..8u8 {
            let mut m = Matrix3::zeros();
            for row in 0..3 {
                m[(row, perm[row])] = if signs & (4 >> row) != 0 { -1.0 } else { 1.0 };
            }
            if m.determinant() > 0.0 {
                out.push(m);
            }
        }
    }
    out
});

/// An object ready for packing: its convex hull and derived quantities.
#[derive(Clone, Debug)]
pub struct ObjectModel {
    pub id: String,
    pub category: String,
    pub mesh: Arc<TriMesh>,
    pub volume: f64,
    /// Extents of the bounding box in the authored orientation.
    pub aabb: Vector3<f64>,
    pub centroid: Point3<f64>,
}

impl ObjectModel {
    /// Builds a model from an arbitrary mesh by replacing it with its convex hull.
    pub fn new(id: impl Into<String>, category: impl Into<String>, mesh: &TriMesh) -> Result<Self> {
        let hull = convexify(mesh)?;
        let volume = mesh_volume(&hull)?;
        let centroid = hull.centroid()?;
        Ok(Self {
            id: id.into(),
            category: category.into(),
            aabb: hull.extents(),
            mesh: Arc::new(hull),
            volume,
            centroid,
        })
    }

    /// Extents after applying `orientation`.
    pub fn extents_in(&self, orientation: Orientation) -> Vector3<f64> {
        let m = orientation.matrix();
        m.abs() * self.aabb
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unit_cube_volume() {
        let cube = shapes::cuboid(1.0, 1.0, 1.0);
        assert_relative_eq!(mesh_volume(&cube).unwrap(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn right_tetrahedron_volume() {
        let tet = TriMesh::new(
            vec![
                Point3::origin(),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        )
        .unwrap();
        assert_relative_eq!(mesh_volume(&tet).unwrap(), 1.0 / 6.0, max_relative = 1e-12);
    }

    #[test]
    fn open_mesh_is_rejected() {
        let mut cube = shapes::cuboid(1.0, 1.0, 1.0);
        cube.faces.pop();
        assert!(matches!(
            mesh_volume(&cube),
            Err(PackError::NotWatertight(_))
        ));
    }

    #[test]
    fn face_index_out_of_range() {
        let err = TriMesh::new(vec![Point3::origin(); 3], vec![[0, 1, 3]]).unwrap_err();
        assert!(matches!(err, PackError::DegenerateMesh(_)));
    }

    #[test]
    fn orientations_are_distinct_proper_rotations() {
        let all: Vec<_> = Orientation::all().map(Orientation::matrix).collect();
        assert_eq!(all.len(), 24);
        assert_eq!(all[0], Matrix3::identity());
        for (i, a) in all.iter().enumerate() {
            assert_relative_eq!(a.determinant(), 1.0);
            for b in &all[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn centroid_of_offset_cube() {
        let cube = shapes::cuboid(0.2, 0.1, 0.1);
        let c = cube.centroid().unwrap();
        assert_relative_eq!(c.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(c.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(c.z, 0.05, epsilon = 1e-12);
    }

    #[test]
    fn oriented_extents_swap_axes() {
        let m = ObjectModel::new("a", "box", &shapes::cuboid(0.3, 0.2, 0.1)).unwrap();
        let mut seen: Vec<[i64; 3]> = Orientation::all()
            .map(|o| {
                let e = m.extents_in(o);
                [0, 1, 2].map(|k| (e[k] * 1000.0).round() as i64)
            })
            .collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 6);
    }
}
