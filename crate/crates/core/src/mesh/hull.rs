//! Exact convex hull by quickhull with per-face conflict lists.

use std::collections::{HashMap, VecDeque};

use nalgebra::{Point3, Vector3};

use super::TriMesh;
use crate::error::{PackError, Result};

struct Face {
    v: [usize; 3],
    normal: Vector3<f64>,
    offset: f64,
    outside: Vec<usize>,
    alive: bool,
}

impl Face {
    fn new(points: &[Point3<f64>], v: [usize; 3]) -> Self {
        let (a, b, c) = (points[v[0]], points[v[1]], points[v[2]]);
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        let normal = if len > 0.0 { n / len } else { n };
        Face {
            v,
            normal,
            offset: normal.dot(&a.coords),
            outside: Vec::new(),
            alive: true,
        }
    }

    #[inline]
    fn distance(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&p.coords) - self.offset
    }
}

/// Replaces `mesh` with its convex hull.
///
/// The result is watertight, outward-oriented and keeps only strictly extreme
/// vertices, so applying it twice yields the same vertex set.
pub fn convexify(mesh: &TriMesh) -> Result<TriMesh> {
    if mesh.vertices.len() < 4 {
        return Err(PackError::DegenerateGeometry(format!(
            "{} vertices cannot span a volume",
            mesh.vertices.len()
        )));
    }
    if mesh
        .vertices
        .iter()
        .any(|p| !p.coords.iter().all(|c| c.is_finite()))
    {
        return Err(PackError::DegenerateGeometry("non-finite vertex".into()));
    }
    let mut points = mesh.vertices.clone();
    // A hull can pick up non-extreme vertices (points in the interior of a
    // planar facet that were extreme when inserted). Rebuilding from the
    // extreme subset removes them; one pass normally suffices.
    for _ in 0..4 {
        let (verts, faces) = quickhull(&points)?;
        let extreme = extreme_vertices(&verts, &faces);
        if extreme.len() == verts.len() {
            return Ok(TriMesh {
                vertices: verts,
                faces,
            });
        }
        points = extreme.into_iter().map(|i| verts[i]).collect();
    }
    let (vertices, faces) = quickhull(&points)?;
    Ok(TriMesh { vertices, faces })
}

fn tolerance(points: &[Point3<f64>]) -> f64 {
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let scale = (hi - lo).norm().max(lo.coords.amax()).max(hi.coords.amax());
    1e-11 * scale.max(f64::MIN_POSITIVE)
}

fn initial_simplex(points: &[Point3<f64>], eps: f64) -> Result<[usize; 4]> {
    let i0 = (0..points.len())
        .min_by(|&a, &b| points[a].x.total_cmp(&points[b].x))
        .unwrap();
    let far = |score: &dyn Fn(&Point3<f64>) -> f64| {
        (0..points.len())
            .map(|i| (i, score(&points[i])))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
    };
    let p0 = points[i0];
    let (i1, d1) = far(&|p| (p - p0).norm());
    if d1 <= eps {
        return Err(PackError::DegenerateGeometry("all points coincide".into()));
    }
    let p1 = points[i1];
    let axis = (p1 - p0) / d1;
    let (i2, d2) = far(&|p| {
        let d = p - p0;
        (d - axis * d.dot(&axis)).norm()
    });
    if d2 <= eps {
        return Err(PackError::DegenerateGeometry("points are collinear".into()));
    }
    let p2 = points[i2];
    let n = (p1 - p0).cross(&(p2 - p0)).normalize();
    let (i3, d3) = far(&|p| n.dot(&(p - p0)).abs());
    if d3 <= eps {
        return Err(PackError::DegenerateGeometry("points are coplanar".into()));
    }
    Ok([i0, i1, i2, i3])
}

fn quickhull(points: &[Point3<f64>]) -> Result<(Vec<Point3<f64>>, Vec<[usize; 3]>)> {
    let eps = tolerance(points);
    let [a, b, c, d] = initial_simplex(points, eps)?;

    let mut faces: Vec<Face> = Vec::new();
    let centroid = Point3::from(
        (points[a].coords + points[b].coords + points[c].coords + points[d].coords) / 4.0,
    );
    for tri in [[a, b, c], [a, b, d], [a, c, d], [b, c, d]] {
        let mut f = Face::new(points, tri);
        if f.distance(&centroid) > 0.0 {
            f = Face::new(points, [tri[0], tri[2], tri[1]]);
        }
        faces.push(f);
    }
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            edges.insert((f.v[k], f.v[(k + 1) % 3]), fi);
        }
    }

    let assign = |faces: &mut [Face], candidates: &[usize], pts: &[usize]| {
        for &p in pts {
            let best = candidates
                .iter()
                .map(|&fi| (fi, faces[fi].distance(&points[p])))
                .filter(|&(_, dist)| dist > eps)
                .max_by(|x, y| x.1.total_cmp(&y.1));
            if let Some((fi, _)) = best {
                faces[fi].outside.push(p);
            }
        }
    };
    let rest: Vec<usize> = (0..points.len())
        .filter(|i| ![a, b, c, d].contains(i))
        .collect();
    assign(&mut faces, &[0, 1, 2, 3], &rest);

    let mut cursor = 0;
    loop {
        // Scan for the next face with pending outside points.
        let start = (cursor..faces.len())
            .chain(0..cursor)
            .find(|&fi| faces[fi].alive && !faces[fi].outside.is_empty());
        let Some(seed) = start else { break };
        cursor = seed;

        let apex = *faces[seed]
            .outside
            .iter()
            .max_by(|&&x, &&y| {
                faces[seed]
                    .distance(&points[x])
                    .total_cmp(&faces[seed].distance(&points[y]))
            })
            .unwrap();
        let pa = points[apex];

        // Visible region, grown through edge adjacency so it stays connected.
        let mut visible = vec![seed];
        let mut is_visible: HashMap<usize, bool> = HashMap::from([(seed, true)]);
        let mut queue = VecDeque::from([seed]);
        while let Some(fi) = queue.pop_front() {
            let v = faces[fi].v;
            for k in 0..3 {
                let nb = edges[&(v[(k + 1) % 3], v[k])];
                if is_visible.contains_key(&nb) {
                    continue;
                }
                let vis = faces[nb].distance(&pa) > eps;
                is_visible.insert(nb, vis);
                if vis {
                    visible.push(nb);
                    queue.push_back(nb);
                }
            }
        }

        let mut horizon = Vec::new();
        for &fi in &visible {
            let v = faces[fi].v;
            for k in 0..3 {
                let (from, to) = (v[k], v[(k + 1) % 3]);
                let nb = edges[&(to, from)];
                if !is_visible[&nb] {
                    horizon.push((from, to));
                }
            }
        }

        let mut orphans = Vec::new();
        for &fi in &visible {
            let f = &mut faces[fi];
            f.alive = false;
            orphans.extend(f.outside.drain(..).filter(|&p| p != apex));
            let v = f.v;
            for k in 0..3 {
                edges.remove(&(v[k], v[(k + 1) % 3]));
            }
        }

        let mut created = Vec::with_capacity(horizon.len());
        for (from, to) in horizon {
            let fi = faces.len();
            faces.push(Face::new(points, [from, to, apex]));
            for (x, y) in [(from, to), (to, apex), (apex, from)] {
                edges.insert((x, y), fi);
            }
            created.push(fi);
        }
        assign(&mut faces, &created, &orphans);
    }

    let mut remap = vec![usize::MAX; points.len()];
    let mut verts = Vec::new();
    let mut tris = Vec::new();
    for f in faces.iter().filter(|f| f.alive) {
        let tri = f.v.map(|i| {
            if remap[i] == usize::MAX {
                remap[i] = verts.len();
                verts.push(points[i]);
            }
            remap[i]
        });
        tris.push(tri);
    }
    Ok((verts, tris))
}

/// Vertices incident to at least three distinct face planes. Anything else
/// sits inside a planar facet or along a straight hull edge.
fn extreme_vertices(verts: &[Point3<f64>], faces: &[[usize; 3]]) -> Vec<usize> {
    let mut normals: Vec<Vec<Vector3<f64>>> = vec![Vec::new(); verts.len()];
    for f in faces {
        let n = (verts[f[1]] - verts[f[0]]).cross(&(verts[f[2]] - verts[f[0]]));
        let len = n.norm();
        if len == 0.0 {
            continue;
        }
        let n = n / len;
        for &i in f {
            if !normals[i].iter().any(|m| (m - n).norm() < 1e-7) {
                normals[i].push(n);
            }
        }
    }
    (0..verts.len())
        .filter(|&i| normals[i].len() >= 3)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{mesh_volume, shapes};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(points: Vec<[f64; 3]>) -> TriMesh {
        TriMesh {
            vertices: points
                .into_iter()
                .map(|p| Point3::new(p[0], p[1], p[2]))
                .collect(),
            faces: Vec::new(),
        }
    }

    fn cube_corners() -> Vec<[f64; 3]> {
        let mut v = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    v.push([x, y, z]);
                }
            }
        }
        v
    }

    /// Every point lies on or below every face plane of `hull`.
    fn all_inside(hull: &TriMesh, points: &[Point3<f64>], tol: f64) -> bool {
        hull.faces.iter().all(|f| {
            let a = hull.vertices[f[0]];
            let n = (hull.vertices[f[1]] - a)
                .cross(&(hull.vertices[f[2]] - a))
                .normalize();
            points.iter().all(|p| n.dot(&(p - a)) <= tol)
        })
    }

    #[test]
    fn unit_cube_hull() {
        let hull = convexify(&cloud(cube_corners())).unwrap();
        assert_eq!(hull.vertices.len(), 8);
        assert_eq!(hull.faces.len(), 12);
        hull.check_watertight().unwrap();
        assert_relative_eq!(mesh_volume(&hull).unwrap(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn interior_point_is_dropped() {
        let mut pts = cube_corners();
        pts.push([0.5, 0.5, 0.5]);
        let hull = convexify(&cloud(pts)).unwrap();
        assert_eq!(hull.vertices.len(), 8);
        assert_relative_eq!(mesh_volume(&hull).unwrap(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn facet_and_edge_points_are_dropped() {
        let mut pts = vec![
            [0.5, 0.5, 1.0],
            [0.5, 0.0, 0.0],
            [0.5, 0.5, 0.0],
            [0.0, 0.5, 1.0],
        ];
        pts.extend(cube_corners());
        let hull = convexify(&cloud(pts)).unwrap();
        assert_eq!(hull.vertices.len(), 8);
        hull.check_watertight().unwrap();
    }

    #[test]
    fn degenerate_inputs() {
        let flat = cloud(vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 1.0, 0.0],
        ]);
        assert!(matches!(
            convexify(&flat),
            Err(PackError::DegenerateGeometry(_))
        ));
        let line = cloud((0..5).map(|i| [i as f64, 2.0 * i as f64, 0.0]).collect());
        assert!(matches!(
            convexify(&line),
            Err(PackError::DegenerateGeometry(_))
        ));
        let few = cloud(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert!(convexify(&few).is_err());
    }

    #[test]
    fn random_ball_hull_contains_all_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut pts = Vec::new();
        while pts.len() < 200 {
            let p = [0, 1, 2].map(|_| rng.random_range(-1.0..1.0));
            if p.iter().map(|c| c * c).sum::<f64>() <= 1.0 {
                pts.push(p);
            }
        }
        let input = cloud(pts);
        let hull = convexify(&input).unwrap();
        hull.check_watertight().unwrap();
        assert!(all_inside(&hull, &input.vertices, 1e-9));
        assert!(all_inside(&hull, &hull.vertices, 1e-9));
        let vol = mesh_volume(&hull).unwrap();
        assert!(vol > 0.0 && vol <= 4.0 * std::f64::consts::PI / 3.0);
    }

    #[test]
    fn hull_of_primitives_is_valid() {
        for mesh in [
            shapes::sphere(0.05, 12, 24),
            shapes::cylinder(0.04, 0.25, 32),
            shapes::cone(0.05, 0.1, 16),
            shapes::bottle(0.04, 0.2, 0.015, 0.06, 24),
        ] {
            let hull = convexify(&mesh).unwrap();
            hull.check_watertight().unwrap();
            assert!(all_inside(&hull, &mesh.vertices, 1e-9));
        }
    }
}
