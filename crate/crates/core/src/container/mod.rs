//! Box heightmap state: drop-height estimation, commits and bounds checks.
//!
//! Grid axes: index `i` runs along the box length (x), `j` along the width
//! (y). Cell `(i, j)` spans `[i, i + 1) × [j, j + 1)` cell sizes from the
//! back-left corner at the origin.

mod export;
mod observation;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{PackError, Result};
use crate::mesh::{HeightfieldPair, ObjectModel, Orientation};
use crate::settle::SettleResult;

pub use export::{read_heightmap, write_heightmap_csv, write_heightmap_pgm};
pub use observation::{render_observation, Observation, Rect, OBSERVATION_SIZE};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContainerSpec {
    pub length: f64,
    pub width: f64,
    pub wall_height: f64,
    pub vertical_margin: f64,
    pub cell_size: f64,
}

impl ContainerSpec {
    pub const DEFAULT_LENGTH: f64 = 0.40;
    pub const DEFAULT_WIDTH: f64 = 0.30;
    pub const DEFAULT_WALL_HEIGHT: f64 = 0.164;
    pub const DEFAULT_VERTICAL_MARGIN: f64 = 0.13;

    /// Box with default heights and `cell_size = max(length, width) / 200`.
    pub fn with_footprint(length: f64, width: f64) -> Self {
        Self {
            length,
            width,
            wall_height: Self::DEFAULT_WALL_HEIGHT,
            vertical_margin: Self::DEFAULT_VERTICAL_MARGIN,
            cell_size: length.max(width) / 200.0,
        }
    }

    /// Highest point a placed object may reach.
    pub fn ceiling(&self) -> f64 {
        self.wall_height + self.vertical_margin
    }

    pub fn nx(&self) -> usize {
        (self.length / self.cell_size + 1e-9).floor() as usize
    }

    pub fn ny(&self) -> usize {
        (self.width / self.cell_size + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("length", self.length),
            ("width", self.width),
            ("wall_height", self.wall_height),
            ("vertical_margin", self.vertical_margin),
            ("cell_size", self.cell_size),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(PackError::Config(format!(
                    "container {name} must be positive, got {value}"
                )));
            }
        }
        if self.nx() == 0 || self.ny() == 0 {
            return Err(PackError::Config(
                "cell size exceeds the box footprint".into(),
            ));
        }
        Ok(())
    }
}

impl Default for ContainerSpec {
    fn default() -> Self {
        Self::with_footprint(Self::DEFAULT_LENGTH, Self::DEFAULT_WIDTH)
    }
}

/// Object pose: `(x, y)` is the center of the rotated footprint's bounding
/// box, `z` the height of the object's lowest point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub z: f64,
    #[serde(default)]
    pub orientation: Orientation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsCheck {
    Inside,
    OutsideFootprint,
    OverCeiling,
}

#[derive(Clone, Debug, Serialize)]
pub struct Placement {
    pub object_id: String,
    pub category: String,
    pub volume: f64,
    pub pose: Pose,
    pub settle: SettleResult,
    /// Grid cell of the profile's `(0, 0)` corner.
    pub origin: (i64, i64),
    #[serde(skip)]
    pub profile: Arc<HeightfieldPair>,
}

#[derive(Clone, Debug)]
pub struct ContainerState {
    pub spec: ContainerSpec,
    nx: usize,
    ny: usize,
    heightmap: Vec<f64>,
    pub placements: Vec<Placement>,
    pub cumulative_volume: f64,
}

impl ContainerState {
    pub fn new(spec: ContainerSpec) -> Result<Self> {
        spec.validate()?;
        let (nx, ny) = (spec.nx(), spec.ny());
        Ok(Self {
            spec,
            nx,
            ny,
            heightmap: vec![0.0; nx * ny],
            placements: Vec::new(),
            cumulative_volume: 0.0,
        })
    }

    /// State with a preset heightmap (row-major, `nx × ny`) and no placement log.
    pub fn with_heightmap(spec: ContainerSpec, heightmap: Vec<f64>) -> Result<Self> {
        let mut state = Self::new(spec)?;
        if heightmap.len() != state.heightmap.len() {
            return Err(PackError::Config(format!(
                "heightmap has {} cells, box grid needs {}x{}",
                heightmap.len(),
                state.nx,
                state.ny
            )));
        }
        if heightmap.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
            return Err(PackError::Config(
                "heights must be finite and non-negative".into(),
            ));
        }
        state.heightmap = heightmap;
        Ok(state)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn heightmap(&self) -> &[f64] {
        &self.heightmap
    }

    #[inline]
    pub fn height(&self, i: usize, j: usize) -> f64 {
        self.heightmap[i * self.ny + j]
    }

    pub fn reset(&mut self) {
        self.heightmap.fill(0.0);
        self.placements.clear();
        self.cumulative_volume = 0.0;
    }

    /// Grid cell of the profile's corner when its center sits at `(x, y)`.
    pub fn footprint_origin(&self, profile: &HeightfieldPair, x: f64, y: f64) -> (i64, i64) {
        let c = self.spec.cell_size;
        (
            (x / c - profile.nu as f64 / 2.0).round() as i64,
            (y / c - profile.nv as f64 / 2.0).round() as i64,
        )
    }

    /// Center position corresponding to a grid origin.
    pub fn origin_to_xy(&self, profile: &HeightfieldPair, origin: (i64, i64)) -> (f64, f64) {
        let c = self.spec.cell_size;
        (
            (origin.0 as f64 + profile.nu as f64 / 2.0) * c,
            (origin.1 as f64 + profile.nv as f64 / 2.0) * c,
        )
    }

    /// Whether every footprint cell lands inside the box grid.
    pub fn footprint_inside(&self, profile: &HeightfieldPair, origin: (i64, i64)) -> bool {
        let [umin, umax, vmin, vmax] = profile.footprint_bounds();
        let (i0, j0) = origin;
        i0 + umin as i64 >= 0
            && j0 + vmin as i64 >= 0
            && i0 + (umax as i64) < self.nx as i64
            && j0 + (vmax as i64) < self.ny as i64
    }

    /// Rest height for a profile at an in-bounds grid origin.
    #[inline]
    pub(crate) fn drop_z_at(&self, profile: &HeightfieldPair, origin: (i64, i64)) -> f64 {
        let mut z = 0.0f64;
        for (u, v) in profile.cells() {
            let h = self.heightmap[cell_index(self.ny, origin, u, v)];
            z = z.max(h - profile.bottom[profile.index(u, v)]);
        }
        z
    }

    /// Lowest height at which the object rests on the heightmap without
    /// interpenetration; negative values clamp to the floor.
    pub fn drop_z(&self, profile: &HeightfieldPair, x: f64, y: f64) -> Result<f64> {
        let origin = self.footprint_origin(profile, x, y);
        if !self.footprint_inside(profile, origin) {
            return Err(PackError::OutOfBounds { x, y });
        }
        Ok(self.drop_z_at(profile, origin))
    }

    pub fn check_bounds(&self, profile: &HeightfieldPair, pose: &Pose) -> BoundsCheck {
        let origin = self.footprint_origin(profile, pose.x, pose.y);
        if !self.footprint_inside(profile, origin) {
            BoundsCheck::OutsideFootprint
        } else if pose.z + profile.max_top > self.spec.ceiling() + 1e-12 {
            BoundsCheck::OverCeiling
        } else {
            BoundsCheck::Inside
        }
    }

    /// Raises the heightmap under the object's top profile and logs the placement.
    ///
    /// The footprint must be inside the box; `pose` should come from
    /// [`ContainerState::drop_z`] or a settled correction of it.
    pub fn commit(
        &mut self,
        model: &ObjectModel,
        profile: Arc<HeightfieldPair>,
        pose: Pose,
        settle: SettleResult,
    ) -> Result<&Placement> {
        let origin = self.footprint_origin(&profile, pose.x, pose.y);
        if !self.footprint_inside(&profile, origin) {
            return Err(PackError::OutOfBounds {
                x: pose.x,
                y: pose.y,
            });
        }
        stamp(&mut self.heightmap, self.ny, &profile, origin, pose.z);
        self.cumulative_volume += model.volume;
        self.placements.push(Placement {
            object_id: model.id.clone(),
            category: model.category.clone(),
            volume: model.volume,
            pose,
            settle,
            origin,
            profile,
        });
        Ok(self.placements.last().unwrap())
    }

    /// Heightmap recomputed from scratch from the placement log.
    pub fn rebuild_heightmap(&self) -> Vec<f64> {
        let mut grid = vec![0.0; self.nx * self.ny];
        for p in &self.placements {
            stamp(&mut grid, self.ny, &p.profile, p.origin, p.pose.z);
        }
        grid
    }
}

/// Flat heightmap index of profile cell `(u, v)`; the origin may be
/// negative when the footprint does not touch the profile grid's edge.
#[inline]
pub(crate) fn cell_index(ny: usize, origin: (i64, i64), u: usize, v: usize) -> usize {
    (origin.0 + u as i64) as usize * ny + (origin.1 + v as i64) as usize
}

fn stamp(grid: &mut [f64], ny: usize, profile: &HeightfieldPair, origin: (i64, i64), z: f64) {
    for (u, v) in profile.cells() {
        let idx = cell_index(ny, origin, u, v);
        let top = z + profile.top[profile.index(u, v)];
        if top > grid[idx] {
            grid[idx] = top;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{rasterize, shapes};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec() -> ContainerSpec {
        ContainerSpec {
            cell_size: 0.01,
            ..ContainerSpec::default()
        }
    }

    fn cube(side: f64) -> (ObjectModel, Arc<HeightfieldPair>) {
        let m = ObjectModel::new("cube", "cube", &shapes::cuboid(side, side, side)).unwrap();
        let hf = Arc::new(rasterize(&m, 0.0, 0.01).unwrap());
        (m, hf)
    }

    #[test]
    fn default_ceiling() {
        let s = ContainerSpec::default();
        assert_relative_eq!(s.ceiling(), 0.294, epsilon = 1e-15);
        assert_eq!((s.nx(), s.ny()), (200, 150));
    }

    #[test]
    fn empty_box_drop_is_floor() {
        let state = ContainerState::new(spec()).unwrap();
        let (_, hf) = cube(0.1);
        assert_eq!(state.drop_z(&hf, 0.2, 0.15).unwrap(), 0.0);
    }

    #[test]
    fn plateau_raises_drop() {
        let state = ContainerState::with_heightmap(spec(), vec![0.05; 40 * 30]).unwrap();
        let (_, hf) = cube(0.1);
        assert_relative_eq!(state.drop_z(&hf, 0.2, 0.15).unwrap(), 0.05);
    }

    #[test]
    fn drop_outside_is_error() {
        let state = ContainerState::new(spec()).unwrap();
        let (_, hf) = cube(0.1);
        assert!(matches!(
            state.drop_z(&hf, 0.01, 0.15),
            Err(PackError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn commit_and_stack() {
        let mut state = ContainerState::new(spec()).unwrap();
        let (m, hf) = cube(0.1);
        let z = state.drop_z(&hf, 0.05, 0.05).unwrap();
        let pose = Pose {
            x: 0.05,
            y: 0.05,
            z,
            ..Pose::default()
        };
        state
            .commit(&m, hf.clone(), pose, SettleResult::resting())
            .unwrap();
        assert_relative_eq!(state.height(0, 0), 0.1, epsilon = 1e-12);
        assert_relative_eq!(state.height(9, 9), 0.1, epsilon = 1e-12);
        assert_eq!(state.height(10, 0), 0.0);
        let z = state.drop_z(&hf, 0.05, 0.05).unwrap();
        assert_relative_eq!(z, 0.1, epsilon = 1e-12);
        state
            .commit(&m, hf.clone(), Pose { z, ..pose }, SettleResult::resting())
            .unwrap();
        assert_relative_eq!(state.height(5, 5), 0.2, epsilon = 1e-12);
        assert_relative_eq!(state.cumulative_volume, 2e-3, max_relative = 1e-12);
    }

    #[test]
    fn padded_footprint_reaches_the_corner() {
        // 6x6 grid with a 2x2 footprint at (2..4, 2..4)
        let mask: Vec<bool> = (0..36)
            .map(|i| (2..4).contains(&(i / 6)) && (2..4).contains(&(i % 6)))
            .collect();
        let hf = Arc::new(
            HeightfieldPair::from_grids(6, 6, 0.01, vec![0.03; 36], vec![0.0; 36], mask).unwrap(),
        );
        let mut hm = vec![0.0; 40 * 30];
        hm[0] = 0.02;
        let mut state = ContainerState::with_heightmap(spec(), hm).unwrap();
        let origin = state.footprint_origin(&hf, 0.01, 0.01);
        assert_eq!(origin, (-2, -2));
        let z = state.drop_z(&hf, 0.01, 0.01).unwrap();
        assert_relative_eq!(z, 0.02);
        let m = ObjectModel::new("c", "c", &shapes::cuboid(0.02, 0.02, 0.03)).unwrap();
        state
            .commit(
                &m,
                hf,
                Pose {
                    x: 0.01,
                    y: 0.01,
                    z,
                    ..Pose::default()
                },
                SettleResult::resting(),
            )
            .unwrap();
        assert_relative_eq!(state.height(1, 1), 0.05);
        assert_eq!(state.height(2, 2), 0.0);
    }

    #[test]
    fn bounds_classes() {
        let state = ContainerState::new(ContainerSpec::default()).unwrap();
        let (_, hf) = cube(0.1);
        let mut hf = (*hf).clone();
        hf.cell_size = 0.002;
        let centered = Pose {
            x: 0.2,
            y: 0.15,
            ..Pose::default()
        };
        assert_eq!(state.check_bounds(&hf, &centered), BoundsCheck::Inside);
        let beyond = Pose {
            x: 0.41,
            ..centered
        };
        assert_eq!(
            state.check_bounds(&hf, &beyond),
            BoundsCheck::OutsideFootprint
        );
    }

    #[test]
    fn ceiling_is_wall_plus_margin() {
        let state = ContainerState::new(spec()).unwrap();
        let (_, hf) = cube(0.1);
        let at = |z| Pose {
            x: 0.2,
            y: 0.15,
            z,
            ..Pose::default()
        };
        // Stack top at 0.30 m exceeds 0.164 + 0.13.
        assert_eq!(state.check_bounds(&hf, &at(0.20)), BoundsCheck::OverCeiling);
        assert_eq!(state.check_bounds(&hf, &at(0.194)), BoundsCheck::Inside);
    }

    /// Replaying the placement log reproduces the incremental heightmap
    /// after random overlapping commits.
    #[test]
    fn overlapping_commits_match_rebuild() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut state = ContainerState::new(spec()).unwrap();
        let shapes = [
            shapes::cuboid(0.07, 0.05, 0.04),
            shapes::sphere(0.03, 8, 16),
            shapes::cone(0.04, 0.05, 12),
        ];
        let models: Vec<_> = shapes
            .iter()
            .enumerate()
            .map(|(k, s)| ObjectModel::new(format!("o{k}"), "x", s).unwrap())
            .collect();
        for _ in 0..30 {
            let m = &models[rng.random_range(0..3)];
            let hf = Arc::new(rasterize(m, rng.random_range(-3.0..3.0), 0.01).unwrap());
            let (x, y) = (rng.random_range(0.06..0.34), rng.random_range(0.06..0.24));
            let z = state.drop_z(&hf, x, y).unwrap();
            let before = state.heightmap().to_vec();
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
            assert!(state.heightmap().iter().zip(&before).all(|(a, b)| a >= b));
        }
        assert_eq!(state.rebuild_heightmap(), state.heightmap());
    }
}
