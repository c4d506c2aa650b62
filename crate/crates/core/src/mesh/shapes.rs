//! Convex primitives, authored upright with the base on `z = 0` and centered in x/y.

use std::f64::consts::{PI, TAU};

use nalgebra::Point3;

use super::{convexify, TriMesh};

/// Axis-aligned box with outward-wound faces.
pub fn cuboid(lx: f64, ly: f64, lz: f64) -> TriMesh {
    let (hx, hy) = (lx / 2.0, ly / 2.0);
    let mut vertices = Vec::with_capacity(8);
    for i in 0..8 {
        vertices.push(Point3::new(
            if i & 1 == 0 { -hx } else { hx },
            if i & 2 == 0 { -hy } else { hy },
            if i & 4 == 0 { 0.0 } else { lz },
        ));
    }
    let faces = vec![
        [0, 2, 1],
        [1, 2, 3], // bottom
        [4, 5, 6],
        [5, 7, 6], // top
        [0, 1, 4],
        [1, 5, 4], // -y
        [2, 6, 3],
        [3, 6, 7], // +y
        [0, 4, 2],
        [2, 4, 6], // -x
        [1, 3, 5],
        [3, 7, 5], // +x
    ];
    TriMesh { vertices, faces }
}

fn hull_of(points: Vec<Point3<f64>>) -> TriMesh {
    convexify(&TriMesh {
        vertices: points,
        faces: Vec::new(),
    })
    .expect("primitive point sets span a volume")
}

fn ring(radius: f64, z: f64, segments: usize, out: &mut Vec<Point3<f64>>) {
    for k in 0..segments {
        let a = TAU * k as f64 / segments as f64;
        out.push(Point3::new(radius * a.cos(), radius * a.sin(), z));
    }
}

pub fn cylinder(radius: f64, height: f64, segments: usize) -> TriMesh {
    let mut pts = Vec::new();
    ring(radius, 0.0, segments, &mut pts);
    ring(radius, height, segments, &mut pts);
    hull_of(pts)
}

pub fn cone(radius: f64, height: f64, segments: usize) -> TriMesh {
    let mut pts = vec![Point3::new(0.0, 0.0, height)];
    ring(radius, 0.0, segments, &mut pts);
    hull_of(pts)
}

/// Ellipsoid with semi-axes `(rx, ry, rz)`, resting on its lowest point.
pub fn ellipsoid(rx: f64, ry: f64, rz: f64, stacks: usize, slices: usize) -> TriMesh {
    let mut pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(0.0, 0.0, 2.0 * rz)];
    for i in 1..stacks {
        let phi = PI * i as f64 / stacks as f64;
        for j in 0..slices {
            let t = TAU * j as f64 / slices as f64;
            pts.push(Point3::new(
                rx * phi.sin() * t.cos(),
                ry * phi.sin() * t.sin(),
                rz - rz * phi.cos(),
            ));
        }
    }
    hull_of(pts)
}

pub fn sphere(radius: f64, stacks: usize, slices: usize) -> TriMesh {
    ellipsoid(radius, radius, radius, stacks, slices)
}

/// Cylindrical body with a conical shoulder and a narrow neck.
pub fn bottle(
    body_radius: f64,
    body_height: f64,
    neck_radius: f64,
    neck_height: f64,
    segments: usize,
) -> TriMesh {
    let shoulder = (body_radius - neck_radius).max(0.0);
    let mut pts = Vec::new();
    ring(body_radius, 0.0, segments, &mut pts);
    ring(body_radius, body_height, segments, &mut pts);
    ring(neck_radius, body_height + shoulder, segments, &mut pts);
    ring(
        neck_radius,
        body_height + shoulder + neck_height,
        segments,
        &mut pts,
    );
    hull_of(pts)
}

/// Triangular prism: a right triangle of legs `(lx, lz)` extruded along y.
pub fn wedge(lx: f64, ly: f64, lz: f64) -> TriMesh {
    let (hx, hy) = (lx / 2.0, ly / 2.0);
    let mut pts = Vec::new();
    for y in [-hy, hy] {
        pts.push(Point3::new(-hx, y, 0.0));
        pts.push(Point3::new(hx, y, 0.0));
        pts.push(Point3::new(-hx, y, lz));
    }
    hull_of(pts)
}
