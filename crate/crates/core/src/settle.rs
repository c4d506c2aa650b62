//! Quasi-static settling: decides whether a dropped object would stay put.
//!
//! Contact cells are footprint cells whose underside lies within a tolerance
//! of the heightmap. When the center of mass projects inside the convex hull
//! of contact-cell centers the object rests as placed. Otherwise the tilt is
//! the rotation about the nearest support edge that would bring the center of
//! mass above it, `atan(d / h)`, where `d` is the horizontal distance to the
//! support polygon and `h` the height of the center of mass above the lowest
//! contact.
//!
//! Poses are never mutated: the tilt only drives the stability flag.

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::container::{cell_index, ContainerState, Pose};
use crate::error::{PackError, Result};
use crate::mesh::raster::{convex_polygon, inside_polygon};
use crate::mesh::HeightfieldPair;

/// Tilt, in degrees, above which a placement counts as unstable.
pub const STABILITY_THRESHOLD_DEG: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettleResult {
    pub settled_pose: Pose,
    pub tilt_deg: f64,
    pub stable: bool,
    pub support_fraction: f64,
}

impl SettleResult {
    /// Fully supported, untilted placement at the default pose.
    pub fn resting() -> Self {
        Self {
            settled_pose: Pose::default(),
            tilt_deg: 0.0,
            stable: true,
            support_fraction: 1.0,
        }
    }
}

/// The boundary tilt itself counts as stable.
pub fn is_stable(tilt_deg: f64) -> bool {
    tilt_deg <= STABILITY_THRESHOLD_DEG
}

/// Settles with the default contact tolerance of a quarter cell.
pub fn settle(
    state: &ContainerState,
    profile: &HeightfieldPair,
    pose: &Pose,
) -> Result<SettleResult> {
    settle_with(state, profile, pose, state.spec.cell_size / 4.0)
}

pub fn settle_with(
    state: &ContainerState,
    profile: &HeightfieldPair,
    pose: &Pose,
    contact_tol: f64,
) -> Result<SettleResult> {
    let origin = state.footprint_origin(profile, pose.x, pose.y);
    if !state.footprint_inside(profile, origin) {
        return Err(PackError::OutOfBounds {
            x: pose.x,
            y: pose.y,
        });
    }
    let c = profile.cell_size;
    let mut contacts = Vec::new();
    let mut lowest_contact = f64::INFINITY;
    for (u, v) in profile.cells() {
        let b = profile.bottom[profile.index(u, v)];
        let gap = pose.z + b - state.heightmap()[cell_index(state.dims().1, origin, u, v)];
        if gap <= contact_tol {
            contacts.push(Point2::new((u as f64 + 0.5) * c, (v as f64 + 0.5) * c));
            lowest_contact = lowest_contact.min(b);
        }
    }
    if contacts.is_empty() {
        return Err(PackError::Internal(format!(
            "no contact cells at z = {}; pose did not come from drop_z",
            pose.z
        )));
    }
    let com = Point2::new(profile.com[0], profile.com[1]);
    let tilt_deg = support_tilt(&contacts, &com, profile.com[2] - lowest_contact);
    Ok(SettleResult {
        settled_pose: *pose,
        tilt_deg,
        stable: is_stable(tilt_deg),
        support_fraction: contacts.len() as f64 / profile.footprint_count() as f64,
    })
}

/// Tilt in degrees for a center of mass `lever` above the support points.
pub fn support_tilt(support: &[Point2<f64>], com: &Point2<f64>, lever: f64) -> f64 {
    let polygon = convex_polygon(support.to_vec());
    let d = distance_to_polygon(&polygon, com);
    if d <= 1e-9 {
        return 0.0;
    }
    d.atan2(lever.max(1e-12)).to_degrees().min(90.0)
}

fn distance_to_polygon(poly: &[Point2<f64>], p: &Point2<f64>) -> f64 {
    if poly.len() >= 3 && inside_polygon(poly, p, 0.0) {
        return 0.0;
    }
    if poly.len() == 1 {
        return (poly[0] - p).norm();
    }
    (0..poly.len())
        .map(|k| segment_distance(&poly[k], &poly[(k + 1) % poly.len()], p))
        .fold(f64::INFINITY, f64::min)
}

fn segment_distance(a: &Point2<f64>, b: &Point2<f64>, p: &Point2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    };
    (a + ab * t - p).norm()
}
