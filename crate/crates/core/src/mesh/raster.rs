//! Top/bottom heightfields of a convex hull.
//!
//! The footprint is the `round(area / cell²)` cells with the largest coverage
//! by the projected hull polygon. Cells whose center lies inside the polygon
//! take the hull's vertical extent along the center ray; partially covered
//! cells take the widest extent over their covered part.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{Matrix3, Point2, Rotation3, Vector2, Vector3};
use parking_lot::RwLock;

use super::{ObjectModel, Orientation};
use crate::error::{PackError, Result};

/// Object-side height profiles for one orientation.
///
/// Cell `(u, v)` covers `[u, u + 1) × [v, v + 1)` cells from the grid origin;
/// the grid is centered on the rotated footprint's bounding box, so a pose
/// `(x, y)` places that center at `(x, y)`. Heights are measured from the
/// object's lowest point.
#[derive(Clone, Debug, PartialEq)]
pub struct HeightfieldPair {
    pub nu: usize,
    pub nv: usize,
    pub cell_size: f64,
    pub theta: f64,
    pub orientation: Orientation,
    pub top: Vec<f64>,
    pub bottom: Vec<f64>,
    pub footprint: Vec<bool>,
    /// Object height in this orientation.
    pub height: f64,
    /// Center of mass: x/y from the grid origin, z above the lowest point.
    pub com: [f64; 3],
    pub max_top: f64,
    /// Area of the projected hull polygon.
    pub projected_area: f64,
    pub projected_perimeter: f64,
    cells: Vec<(u32, u32)>,
    bounds: [usize; 4],
}

impl HeightfieldPair {
    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        u * self.nv + v
    }

    /// Footprint cells in row-major order.
    pub fn cells(&self) -> impl ExactSizeIterator<Item = (usize, usize)> + '_ {
        self.cells.iter().map(|&(u, v)| (u as usize, v as usize))
    }

    /// `[umin, umax, vmin, vmax]` over footprint cells, inclusive.
    pub fn footprint_bounds(&self) -> [usize; 4] {
        self.bounds
    }

    pub fn footprint_count(&self) -> usize {
        self.cells.len()
    }

    pub fn footprint_area(&self) -> f64 {
        self.cells.len() as f64 * self.cell_size * self.cell_size
    }

    /// Builds a profile directly from grids. Cells outside `footprint` are
    /// ignored; `com` defaults to the footprint centroid at half height.
    pub fn from_grids(
        nu: usize,
        nv: usize,
        cell_size: f64,
        top: Vec<f64>,
        bottom: Vec<f64>,
        footprint: Vec<bool>,
    ) -> Result<Self> {
        if top.len() != nu * nv || bottom.len() != nu * nv || footprint.len() != nu * nv {
            return Err(PackError::Config("grid sizes disagree".into()));
        }
        let cells: Vec<(u32, u32)> = (0..nu * nv)
            .filter(|&i| footprint[i])
            .map(|i| ((i / nv) as u32, (i % nv) as u32))
            .collect();
        if cells.is_empty() {
            return Err(PackError::Config("empty footprint".into()));
        }
        if cells.iter().any(|&(u, v)| {
            let i = u as usize * nv + v as usize;
            !(top[i] >= bottom[i] && bottom[i] >= 0.0)
        }) {
            return Err(PackError::Config("profile needs top >= bottom >= 0".into()));
        }
        let max_top = cells
            .iter()
            .map(|&(u, v)| top[u as usize * nv + v as usize])
            .fold(0.0, f64::max);
        let n = cells.len() as f64;
        let cx = cells.iter().map(|&(u, _)| u as f64 + 0.5).sum::<f64>() / n * cell_size;
        let cy = cells.iter().map(|&(_, v)| v as f64 + 0.5).sum::<f64>() / n * cell_size;
        let area = n * cell_size * cell_size;
        Ok(Self {
            nu,
            nv,
            cell_size,
            theta: 0.0,
            orientation: Orientation::IDENTITY,
            top,
            bottom,
            footprint,
            height: max_top,
            com: [cx, cy, max_top / 2.0],
            max_top,
            projected_area: area,
            projected_perimeter: 0.0,
            bounds: cell_bounds(&cells),
            cells,
        })
    }
}

/// Heightfields of `model` rotated by `theta` about the vertical axis.
pub fn rasterize(model: &ObjectModel, theta: f64, cell_size: f64) -> Result<HeightfieldPair> {
    rasterize_oriented(model, Orientation::IDENTITY, theta, cell_size)
}

/// Heightfields after applying `orientation`, then yaw `theta`.
pub fn rasterize_oriented(
    model: &ObjectModel,
    orientation: Orientation,
    theta: f64,
    cell_size: f64,
) -> Result<HeightfieldPair> {
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(PackError::Config(format!(
            "cell size must be positive, got {cell_size}"
        )));
    }
    if !theta.is_finite() {
        return Err(PackError::Config("non-finite yaw".into()));
    }
    let rot: Matrix3<f64> =
        Rotation3::from_axis_angle(&Vector3::z_axis(), theta).into_inner() * orientation.matrix();
    let verts: Vec<Vector3<f64>> = model.mesh.vertices.iter().map(|p| rot * p.coords).collect();

    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for v in &verts {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    let ext = hi - lo;
    let cells_along = |len: f64| ((len / cell_size - 1e-9).ceil() as usize).max(1);
    let (nu, nv) = (cells_along(ext.x), cells_along(ext.y));
    if nu.saturating_mul(nv) > 16_000_000 {
        return Err(PackError::Resolution(format!(
            "{nu}x{nv} object grid is too fine"
        )));
    }
    let origin = Vector2::new(
        (lo.x + hi.x) / 2.0 - nu as f64 * cell_size / 2.0,
        (lo.y + hi.y) / 2.0 - nv as f64 * cell_size / 2.0,
    );

    let planes: Vec<(Vector3<f64>, f64)> = model
        .mesh
        .faces
        .iter()
        .filter_map(|f| {
            let (a, b, c) = (verts[f[0]], verts[f[1]], verts[f[2]]);
            let n = (b - a).cross(&(c - a)).try_normalize(0.0)?;
            Some((n, n.dot(&a)))
        })
        .collect();
    let polygon = convex_polygon(verts.iter().map(|v| Point2::new(v.x, v.y)).collect());
    let scale = ext.norm().max(cell_size);
    let tol = 1e-9 * scale;
    let centroid2 = polygon
        .iter()
        .fold(Vector2::zeros(), |acc, p| acc + p.coords)
        / polygon.len() as f64;

    // Keep the cells with the largest polygon coverage, as many as the
    // polygon area fills, so the footprint area tracks the projected area at
    // any yaw.
    let area = polygon_area(&polygon);
    let cell_area = cell_size * cell_size;
    let mut coverage: Vec<(f64, usize)> = Vec::new();
    for u in 0..nu {
        for v in 0..nv {
            let x0 = origin.x + u as f64 * cell_size;
            let y0 = origin.y + v as f64 * cell_size;
            let clipped = clip_to_cell(&polygon, x0, y0, cell_size);
            let covered = polygon_area(&clipped) / cell_area;
            if covered > 1e-12 {
                coverage.push((covered, u * nv + v));
            }
        }
    }
    coverage.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let keep = ((area / cell_area).round() as usize).clamp(1, coverage.len().max(1));
    let mut chosen: Vec<usize> = coverage.iter().take(keep).map(|&(_, i)| i).collect();
    chosen.sort_unstable();

    let n = nu * nv;
    let mut top = vec![0.0; n];
    let mut bottom = vec![0.0; n];
    let mut footprint = vec![false; n];
    let mut cells = Vec::with_capacity(chosen.len());
    for i in chosen {
        let (u, v) = (i / nv, i % nv);
        let center = Point2::new(
            origin.x + (u as f64 + 0.5) * cell_size,
            origin.y + (v as f64 + 0.5) * cell_size,
        );
        let extent = if inside_polygon(&polygon, &center, tol) {
            // Grazing centers: pull the sample toward the interior until the
            // ray registers a hit.
            [0.0, 1e-9, 1e-6, 1e-3, 1e-2, 1e-1]
                .iter()
                .find_map(|&pull| {
                    ray_extent(
                        &planes,
                        &Point2::from(center.coords + (centroid2 - center.coords) * pull),
                        tol,
                    )
                })
        } else {
            // Partially covered cell: conservative extent over the covered part.
            let x0 = origin.x + u as f64 * cell_size;
            let y0 = origin.y + v as f64 * cell_size;
            let clipped = clip_to_cell(&polygon, x0, y0, cell_size);
            let mid = clipped
                .iter()
                .fold(Vector2::zeros(), |acc, p| acc + p.coords)
                / clipped.len().max(1) as f64;
            clipped
                .iter()
                .map(|p| Point2::from(p.coords + (mid - p.coords) * 1e-6))
                .chain(std::iter::once(Point2::from(mid)))
                .filter_map(|q| ray_extent(&planes, &q, tol))
                .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
        };
        let Some((zlo, zhi)) = extent else { continue };
        let b = (zlo - lo.z).max(0.0);
        bottom[i] = b;
        top[i] = (zhi - lo.z).max(b);
        footprint[i] = true;
        cells.push((u as u32, v as u32));
    }
    if cells.is_empty() {
        return Err(PackError::DegenerateGeometry("empty footprint".into()));
    }
    let max_top = cells
        .iter()
        .map(|&(u, v)| top[u as usize * nv + v as usize])
        .fold(0.0, f64::max);
    let com = rot * model.centroid.coords;
    Ok(HeightfieldPair {
        nu,
        nv,
        cell_size,
        theta,
        orientation,
        top,
        bottom,
        footprint,
        height: ext.z,
        com: [com.x - origin.x, com.y - origin.y, com.z - lo.z],
        max_top,
        projected_area: area,
        projected_perimeter: polygon_perimeter(&polygon),
        bounds: cell_bounds(&cells),
        cells,
    })
}

fn cell_bounds(cells: &[(u32, u32)]) -> [usize; 4] {
    let mut b = [usize::MAX, 0, usize::MAX, 0];
    for &(u, v) in cells {
        let (u, v) = (u as usize, v as usize);
        b = [b[0].min(u), b[1].max(u), b[2].min(v), b[3].max(v)];
    }
    b
}

/// Vertical extent `[zlo, zhi]` of the convex hull along the line through `p`.
fn ray_extent(planes: &[(Vector3<f64>, f64)], p: &Point2<f64>, tol: f64) -> Option<(f64, f64)> {
    let mut zlo = f64::NEG_INFINITY;
    let mut zhi = f64::INFINITY;
    for (n, d) in planes {
        let r = d - n.x * p.x - n.y * p.y;
        if n.z.abs() < 1e-12 {
            if r < -tol {
                return None;
            }
        } else if n.z > 0.0 {
            zhi = zhi.min(r / n.z);
        } else {
            zlo = zlo.max(r / n.z);
        }
    }
    (zlo.is_finite() && zhi.is_finite() && zlo <= zhi + tol).then(|| (zlo.min(zhi), zhi))
}

/// Counter-clockwise convex hull with collinear points removed.
pub(crate) fn convex_polygon(mut pts: Vec<Point2<f64>>) -> Vec<Point2<f64>> {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>| (a - o).perp(&(b - o));
    let mut hull: Vec<Point2<f64>> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2<f64>>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2
                && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

pub(crate) fn inside_polygon(poly: &[Point2<f64>], p: &Point2<f64>, tol: f64) -> bool {
    match poly.len() {
        0 => false,
        1 => (poly[0] - p).norm() <= tol,
        _ => (0..poly.len()).all(|k| {
            let a = poly[k];
            let b = poly[(k + 1) % poly.len()];
            let e = b - a;
            let len = e.norm();
            len == 0.0 || e.perp(&(p - a)) >= -tol * len
        }),
    }
}

/// Convex polygon clipped to the square `[x0, x0 + size] × [y0, y0 + size]`.
fn clip_to_cell(poly: &[Point2<f64>], x0: f64, y0: f64, size: f64) -> Vec<Point2<f64>> {
    let mut out = poly.to_vec();
    // (axis, bound, keep values >= bound?)
    for (axis, bound, keep_above) in [
        (0, x0, true),
        (0, x0 + size, false),
        (1, y0, true),
        (1, y0 + size, false),
    ] {
        if out.is_empty() {
            break;
        }
        let inside = |p: &Point2<f64>| {
            if keep_above {
                p[axis] >= bound
            } else {
                p[axis] <= bound
            }
        };
        let input = std::mem::take(&mut out);
        for k in 0..input.len() {
            let a = input[k];
            let b = input[(k + 1) % input.len()];
            let (ia, ib) = (inside(&a), inside(&b));
            if ia {
                out.push(a);
            }
            if ia != ib {
                let t = (bound - a[axis]) / (b[axis] - a[axis]);
                out.push(a + (b - a) * t);
            }
        }
    }
    out
}

pub(crate) fn polygon_area(poly: &[Point2<f64>]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for k in 0..poly.len() {
        s += poly[k].coords.perp(&poly[(k + 1) % poly.len()].coords);
    }
    s.abs() / 2.0
}

fn polygon_perimeter(poly: &[Point2<f64>]) -> f64 {
    (0..poly.len())
        .map(|k| (poly[(k + 1) % poly.len()] - poly[k]).norm())
        .sum()
}

type CacheKey = (String, Orientation, u64, u64);

/// Thread-safe memo of rasterizations keyed by object, orientation, yaw and
/// cell size.
#[derive(Default)]
pub struct RasterCache {
    map: RwLock<HashMap<CacheKey, Arc<HeightfieldPair>>>,
}

impl RasterCache {
    const MAX_ENTRIES: usize = 65_536;

    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(
        &self,
        model: &ObjectModel,
        orientation: Orientation,
        theta: f64,
        cell_size: f64,
    ) -> Result<Arc<HeightfieldPair>> {
        // -0.0 and 0.0 rasterize identically; fold them onto one key.
        let theta = if theta == 0.0 { 0.0 } else { theta };
        let key = (
            model.id.clone(),
            orientation,
            theta.to_bits(),
            cell_size.to_bits(),
        );
        if let Some(hit) = self.map.read().get(&key) {
            return Ok(Arc::clone(hit));
        }
        let profile = Arc::new(rasterize_oriented(model, orientation, theta, cell_size)?);
        let mut map = self.map.write();
        if map.len() >= Self::MAX_ENTRIES {
            map.clear();
        }
        Ok(Arc::clone(map.entry(key).or_insert(profile)))
    }

    pub fn len(&self) -> usize {
        self.map.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
