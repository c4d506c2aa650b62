//! Hand-designed packing: largest-first ordering, rotation alignment and
//! bottom-left-back fill (BLBF).
//!
//! BLBF scans candidate footprint positions over the grid and keeps the one
//! with the lowest drop height; ties go to the smallest back coordinate
//! (`j`), then the smallest left coordinate (`i`), then the earliest profile.
//! Positions are compared by the grid cell of the footprint's bounding-box
//! corner, so profiles of different sizes share one ordering.

use std::f64::consts::FRAC_PI_2;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::ContainerSpec;
use crate::container::ContainerState;
use crate::episode::{Decision, Policy, PolicyView};
use crate::error::{PackError, Result};
use crate::mesh::{HeightfieldPair, ObjectModel, Orientation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RotationMode {
    /// Yaw about the vertical axis only; the authored up axis stays up.
    #[serde(rename = "so2")]
    SO2,
    /// Any of the 24 axis-aligned orientations.
    #[serde(rename = "so3")]
    SO3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeuristicConfig {
    pub mode: RotationMode,
    pub yaw_candidates: Vec<f64>,
    /// Step, in cells, between scanned positions. 1 is exhaustive.
    pub scan_stride: usize,
    /// Scan rows on the rayon pool.
    pub parallel: bool,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            mode: RotationMode::SO2,
            yaw_candidates: vec![0.0, FRAC_PI_2],
            scan_stride: 1,
            parallel: false,
        }
    }
}

impl HeuristicConfig {
    pub fn so3() -> Self {
        Self {
            mode: RotationMode::SO3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scan_stride == 0 {
            return Err(PackError::Config("scan stride must be at least 1".into()));
        }
        if self.mode == RotationMode::SO2 && self.yaw_candidates.is_empty() {
            return Err(PackError::Config(
                "SO2 alignment needs at least one yaw candidate".into(),
            ));
        }
        Ok(())
    }
}

/// Indices of `objects` by decreasing volume, equal volumes by identifier.
pub fn order_by_volume(objects: &[ObjectModel]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..objects.len()).collect();
    idx.sort_by(|&a, &b| {
        objects[b]
            .volume
            .total_cmp(&objects[a].volume)
            .then_with(|| objects[a].id.cmp(&objects[b].id))
    });
    idx
}

/// Orientation and yaw putting the object's longest dimension along the
/// box's longest side.
///
/// SO2 picks the yaw candidate with the largest extent along that side
/// (first candidate on ties). SO3 picks, among orientations whose extent
/// along that side equals the object's largest dimension, the one with the
/// smallest height, then the lowest orientation index.
pub fn align_rotation(
    model: &ObjectModel,
    spec: &ContainerSpec,
    cfg: &HeuristicConfig,
) -> (Orientation, f64) {
    let long = if spec.length >= spec.width { 0 } else { 1 };
    match cfg.mode {
        RotationMode::SO2 => {
            let mut best = (f64::NEG_INFINITY, 0.0);
            for &theta in &cfg.yaw_candidates {
                let e = planar_extents(model, theta)[long];
                if e > best.0 + 1e-9 {
                    best = (e, theta);
                }
            }
            (Orientation::IDENTITY, best.1)
        }
        RotationMode::SO3 => {
            let longest = model.aabb.max();
            let mut best: Option<(f64, Orientation)> = None;
            for o in Orientation::all() {
                let e = model.extents_in(o);
                if e[long] < longest - 1e-9 {
                    continue;
                }
                if best.is_none_or(|(h, _)| e.z < h - 1e-9) {
                    best = Some((e.z, o));
                }
            }
            (best.map_or(Orientation::IDENTITY, |b| b.1), 0.0)
        }
    }
}

/// Horizontal bounding-box extents of the hull after yaw `theta`.
pub fn planar_extents(model: &ObjectModel, theta: f64) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in &model.mesh.vertices {
        let q = [c * p.x - s * p.y, s * p.x + c * p.y];
        for k in 0..2 {
            lo[k] = lo[k].min(q[k]);
            hi[k] = hi[k].max(q[k]);
        }
    }
    [hi[0] - lo[0], hi[1] - lo[1]]
}

/// A BLBF choice: which profile, where, and how high.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub profile: usize,
    pub origin: (i64, i64),
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Candidate {
    /// Tie-break key after `z`: footprint corner `(j, i)`, then profile.
    fn key(&self, profiles: &[&HeightfieldPair]) -> (i64, i64, usize) {
        let [umin, _, vmin, _] = profiles[self.profile].footprint_bounds();
        (
            self.origin.1 + vmin as i64,
            self.origin.0 + umin as i64,
            self.profile,
        )
    }

    fn better(&self, other: &Candidate, profiles: &[&HeightfieldPair]) -> bool {
        self.z < other.z || (self.z == other.z && self.key(profiles) < other.key(profiles))
    }
}

/// Footprint cells of one profile ordered by ascending bottom height: the
/// cells most likely to set the drop height are checked first.
struct Probe<'a> {
    profile: &'a HeightfieldPair,
    cells: Vec<(usize, f64)>,
    umin: i64,
    vmin: i64,
    /// Highest feasible drop height, or infinity when the ceiling is ignored.
    limit: f64,
    span: (i64, i64),
}

impl<'a> Probe<'a> {
    fn new(state: &ContainerState, profile: &'a HeightfieldPair, respect_ceiling: bool) -> Self {
        let (_, ny) = state.dims();
        let [umin, umax, vmin, vmax] = profile.footprint_bounds();
        let mut cells: Vec<(usize, f64)> = profile
            .cells()
            .map(|(u, v)| {
                (
                    (u - umin) * ny + (v - vmin),
                    profile.bottom[profile.index(u, v)],
                )
            })
            .collect();
        cells.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let limit = if respect_ceiling {
            state.spec.ceiling() + 1e-12 - profile.max_top
        } else {
            f64::INFINITY
        };
        Self {
            profile,
            cells,
            umin: umin as i64,
            vmin: vmin as i64,
            limit,
            span: ((umax - umin) as i64, (vmax - vmin) as i64),
        }
    }

    /// Drop height with the footprint corner at `base` (flat grid index), or
    /// `None` as soon as it provably reaches `bound` (or `strict` with
    /// equality allowed) or exceeds the ceiling limit.
    #[inline]
    fn drop_z(&self, heights: &[f64], base: usize, bound: f64, strict: f64) -> Option<f64> {
        let mut z = 0.0f64;
        for &(off, b) in &self.cells {
            let d = heights[base + off] - b;
            if d > z {
                z = d;
                if z >= bound || z > strict || z > self.limit {
                    return None;
                }
            }
        }
        if z >= bound || z > strict || z > self.limit {
            return None;
        }
        Some(z)
    }
}

/// Lowest-z, then back-most, then left-most placement over `profiles`.
/// Returns `None` when no profile fits (within the ceiling, if requested).
pub fn blbf_search(
    state: &ContainerState,
    profiles: &[&HeightfieldPair],
    stride: usize,
    respect_ceiling: bool,
    parallel: bool,
) -> Option<Candidate> {
    let stride = stride.max(1);
    let probes: Vec<Probe> = profiles
        .iter()
        .map(|p| Probe::new(state, p, respect_ceiling))
        .collect();
    let (nx, ny) = state.dims();
    let rows: Vec<i64> = (0..ny as i64).step_by(stride).collect();
    let shared = AtomicU64::new(f64::INFINITY.to_bits());
    let scan_row = |cj: i64| -> Option<Candidate> {
        let heights = state.heightmap();
        let mut best: Option<Candidate> = None;
        for ci in (0..nx as i64).step_by(stride) {
            for (k, probe) in probes.iter().enumerate() {
                if ci + probe.span.0 >= nx as i64 || cj + probe.span.1 >= ny as i64 {
                    continue;
                }
                let bound = best.map_or(f64::INFINITY, |b| b.z);
                let strict = f64::from_bits(shared.load(AtomicOrdering::Relaxed));
                let base = ci as usize * ny + cj as usize;
                if let Some(z) = probe.drop_z(heights, base, bound, strict) {
                    let origin = (ci - probe.umin, cj - probe.vmin);
                    let (x, y) = state.origin_to_xy(probe.profile, origin);
                    best = Some(Candidate {
                        profile: k,
                        origin,
                        x,
                        y,
                        z,
                    });
                    shared.fetch_min(z.to_bits(), AtomicOrdering::Relaxed);
                    if z == 0.0 {
                        return best;
                    }
                }
            }
        }
        best
    };
    let pick = |a: Option<Candidate>, b: Option<Candidate>| match (a, b) {
        (Some(a), Some(b)) => Some(if b.better(&a, profiles) { b } else { a }),
        (a, b) => a.or(b),
    };
    if parallel {
        rows.par_iter()
            .map(|&cj| scan_row(cj))
            .reduce(|| None, pick)
    } else {
        let mut best = None;
        for &cj in &rows {
            best = pick(best, scan_row(cj));
            if best.is_some_and(|b: Candidate| b.z == 0.0) {
                break;
            }
        }
        best
    }
}

/// BLBF placement within the ceiling.
pub fn blbf_place(
    state: &ContainerState,
    profiles: &[&HeightfieldPair],
    stride: usize,
) -> Result<Candidate> {
    blbf_search(state, profiles, stride, true, false).ok_or_else(|| {
        PackError::NoFeasiblePlacement(format!("no position in {} profile(s) fits", profiles.len()))
    })
}

/// Largest-first style placement: aligned rotation, then BLBF.
#[derive(Clone, Debug)]
pub struct HeuristicPolicy {
    pub cfg: HeuristicConfig,
}

impl HeuristicPolicy {
    pub fn new(cfg: HeuristicConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }
}

impl Policy for HeuristicPolicy {
    fn name(&self) -> String {
        match self.cfg.mode {
            RotationMode::SO2 => "blbf-so2".into(),
            RotationMode::SO3 => "blbf-so3".into(),
        }
    }

    fn act(&mut self, view: &PolicyView<'_>) -> Result<Decision> {
        let (orientation, theta) = align_rotation(view.object, &view.state.spec, &self.cfg);
        let profile = view
            .cache
            .get(view.object, orientation, theta, view.state.spec.cell_size)?;
        Ok(fallback_pose(
            view.state,
            &[(&profile, orientation, theta)],
            &self.cfg,
        ))
    }
}

/// BLBF over every configured yaw with the authored up axis; the planar
/// policy used when no learned policy is plugged in.
#[derive(Clone, Debug)]
pub struct YawScanPolicy {
    pub cfg: HeuristicConfig,
}

impl YawScanPolicy {
    pub fn new(cfg: HeuristicConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }
}

impl Default for YawScanPolicy {
    fn default() -> Self {
        let cfg = HeuristicConfig {
            yaw_candidates: vec![0.0, FRAC_PI_2, std::f64::consts::PI, -FRAC_PI_2],
            ..HeuristicConfig::default()
        };
        Self { cfg }
    }
}

impl Policy for YawScanPolicy {
    fn name(&self) -> String {
        "yaw-scan".into()
    }

    fn act(&mut self, view: &PolicyView<'_>) -> Result<Decision> {
        let c = view.state.spec.cell_size;
        let profiles = self
            .cfg
            .yaw_candidates
            .iter()
            .map(|&t| {
                Ok((
                    view.cache.get(view.object, Orientation::IDENTITY, t, c)?,
                    Orientation::IDENTITY,
                    t,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<_> = profiles
            .iter()
            .map(|(p, o, t)| (p.as_ref(), *o, *t))
            .collect();
        Ok(fallback_pose(view.state, &refs, &self.cfg))
    }
}

/// BLBF within the ceiling; failing that, the lowest position regardless of
/// the ceiling; failing that (nothing fits the footprint), the box center.
/// The last two make the environment end the episode.
fn fallback_pose(
    state: &ContainerState,
    options: &[(&HeightfieldPair, Orientation, f64)],
    cfg: &HeuristicConfig,
) -> Decision {
    let profiles: Vec<&HeightfieldPair> = options.iter().map(|o| o.0).collect();
    let found = blbf_search(state, &profiles, cfg.scan_stride, true, cfg.parallel)
        .or_else(|| blbf_search(state, &profiles, cfg.scan_stride, false, cfg.parallel));
    match found {
        Some(c) => Decision::Pose {
            x: c.x,
            y: c.y,
            theta: options[c.profile].2,
            orientation: options[c.profile].1,
        },
        None => Decision::Pose {
            x: state.spec.length / 2.0,
            y: state.spec.width / 2.0,
            theta: options[0].2,
            orientation: options[0].1,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::container::Pose;
    use crate::mesh::{rasterize, rasterize_oriented, shapes};
    use crate::settle::SettleResult;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn spec() -> ContainerSpec {
        ContainerSpec {
            cell_size: 0.01,
            ..ContainerSpec::default()
        }
    }

    fn model(id: &str, mesh: crate::mesh::TriMesh) -> ObjectModel {
        ObjectModel::new(id, "x", &mesh).unwrap()
    }

    /// Exhaustive scan: every origin, every cell, every profile.
    fn oracle(state: &ContainerState, profiles: &[&HeightfieldPair]) -> Option<Candidate> {
        let (nx, ny) = state.dims();
        let mut best: Option<(f64, (i64, i64, usize), Candidate)> = None;
        for (k, p) in profiles.iter().enumerate() {
            let [umin, _, vmin, _] = p.footprint_bounds();
            for i0 in -(p.nu as i64)..nx as i64 {
                for j0 in -(p.nv as i64)..ny as i64 {
                    if !state.footprint_inside(p, (i0, j0)) {
                        continue;
                    }
                    let mut z = 0.0f64;
                    for (u, v) in p.cells() {
                        let h = state.height((i0 + u as i64) as usize, (j0 + v as i64) as usize);
                        z = z.max(h - p.bottom[p.index(u, v)]);
                    }
                    if z + p.max_top > state.spec.ceiling() + 1e-12 {
                        continue;
                    }
                    let key = (j0 + vmin as i64, i0 + umin as i64, k);
                    if best
                        .as_ref()
                        .is_none_or(|b| z < b.0 || (z == b.0 && key < b.1))
                    {
                        let (x, y) = state.origin_to_xy(p, (i0, j0));
                        best = Some((
                            z,
                            key,
                            Candidate {
                                profile: k,
                                origin: (i0, j0),
                                x,
                                y,
                                z,
                            },
                        ));
                    }
                }
            }
        }
        best.map(|b| b.2)
    }

    fn cluttered(seed: u64) -> ContainerState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = ContainerState::new(spec()).unwrap();
        let m = model("b", shapes::cuboid(0.08, 0.06, 0.05));
        for _ in 0..rng.random_range(0..8) {
            let hf = Arc::new(rasterize(&m, rng.random_range(0.0..3.0), 0.01).unwrap());
            let (x, y) = (rng.random_range(0.06..0.34), rng.random_range(0.06..0.24));
            let z = state.drop_z(&hf, x, y).unwrap();
            state
                .commit(
                    &m,
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
        }
        state
    }

    #[test]
    fn empty_box_goes_back_left() {
        let state = ContainerState::new(spec()).unwrap();
        let hf = rasterize(&model("c", shapes::cuboid(0.1, 0.1, 0.1)), 0.0, 0.01).unwrap();
        let c = blbf_place(&state, &[&hf], 1).unwrap();
        assert_eq!((c.origin, c.z), ((0, 0), 0.0));
        assert!((c.x - 0.05).abs() < 1e-12 && (c.y - 0.05).abs() < 1e-12);
    }

    #[test]
    fn fills_beside_before_stacking() {
        let mut state = ContainerState::new(spec()).unwrap();
        let m = model("c", shapes::cuboid(0.1, 0.1, 0.1));
        let hf = Arc::new(rasterize(&m, 0.0, 0.01).unwrap());
        let first = blbf_place(&state, &[&hf], 1).unwrap();
        state
            .commit(
                &m,
                hf.clone(),
                Pose {
                    x: first.x,
                    y: first.y,
                    z: first.z,
                    ..Pose::default()
                },
                SettleResult::resting(),
            )
            .unwrap();
        let second = blbf_place(&state, &[&hf], 1).unwrap();
        assert_eq!((second.origin, second.z), ((10, 0), 0.0));
    }

    #[test]
    fn no_fit_is_reported() {
        let state = ContainerState::with_heightmap(spec(), vec![0.25; 40 * 30]).unwrap();
        let hf = rasterize(&model("c", shapes::cuboid(0.1, 0.1, 0.1)), 0.0, 0.01).unwrap();
        assert!(matches!(
            blbf_place(&state, &[&hf], 1),
            Err(PackError::NoFeasiblePlacement(_))
        ));
        assert!(blbf_search(&state, &[&hf], 1, false, false).is_some());
    }

    #[test]
    fn volume_order_breaks_ties_by_id() {
        let objs = vec![
            model("b", shapes::cuboid(0.1, 0.1, 0.1)),
            model("c", shapes::cuboid(0.2, 0.1, 0.1)),
            model("a", shapes::cuboid(0.1, 0.1, 0.1)),
        ];
        assert_eq!(order_by_volume(&objs), vec![1, 2, 0]);
    }

    #[test]
    fn so2_alignment_turns_long_side_to_length() {
        let m = model("r", shapes::cuboid(0.05, 0.2, 0.03));
        let (o, theta) = align_rotation(&m, &ContainerSpec::default(), &HeuristicConfig::default());
        assert_eq!(o, Orientation::IDENTITY);
        assert_eq!(theta, FRAC_PI_2);
        let square = model("s", shapes::cuboid(0.1, 0.1, 0.03));
        assert_eq!(
            align_rotation(
                &square,
                &ContainerSpec::default(),
                &HeuristicConfig::default()
            )
            .1,
            0.0
        );
    }

    #[test]
    fn so3_alignment_lays_tall_objects_down() {
        let m = model("t", shapes::cuboid(0.05, 0.08, 0.25));
        let (o, theta) = align_rotation(&m, &ContainerSpec::default(), &HeuristicConfig::so3());
        let e = m.extents_in(o);
        assert!((e.x - 0.25).abs() < 1e-12, "{e:?}");
        assert!((e.z - 0.05).abs() < 1e-12, "{e:?}");
        assert_eq!(theta, 0.0);
    }

    #[test]
    fn cube_keeps_first_orientation() {
        let m = model("c", shapes::cuboid(0.1, 0.1, 0.1));
        assert_eq!(
            align_rotation(&m, &ContainerSpec::default(), &HeuristicConfig::so3()).0,
            Orientation(0)
        );
    }

    #[test]
    fn raised_left_half_sends_cube_right() {
        let mut hm = vec![0.0; 40 * 30];
        hm[..20 * 30].fill(0.05);
        let state = ContainerState::with_heightmap(spec(), hm).unwrap();
        let hf = rasterize(&model("c", shapes::cuboid(0.1, 0.1, 0.1)), 0.0, 0.01).unwrap();
        let c = blbf_place(&state, &[&hf], 1).unwrap();
        assert_eq!((c.origin, c.z), ((20, 0), 0.0));
        assert_eq!(Some(c), oracle(&state, &[&hf]));
    }

    #[test]
    fn bulky_non_cuboids_go_first() {
        let objs = vec![
            model("tennis_ball", shapes::sphere(0.033, 10, 20)),
            model("egg_carton", shapes::wedge(0.3, 0.1, 0.07)),
            model("sponge", shapes::cuboid(0.09, 0.06, 0.03)),
        ];
        assert_eq!(order_by_volume(&objs), vec![1, 2, 0]);
    }

    #[test]
    fn matches_oracle_on_cluttered_boxes() {
        let shapes = [
            model("a", shapes::cuboid(0.07, 0.05, 0.04)),
            model("s", shapes::sphere(0.04, 10, 20)),
            model("w", shapes::wedge(0.09, 0.06, 0.05)),
        ];
        for seed in 0..12u64 {
            let state = cluttered(seed);
            let m = &shapes[seed as usize % 3];
            let profiles: Vec<HeightfieldPair> = [Orientation(0), Orientation(5), Orientation(17)]
                .iter()
                .map(|&o| rasterize_oriented(m, o, seed as f64 * 0.4, 0.01).unwrap())
                .collect();
            let refs: Vec<&HeightfieldPair> = profiles.iter().collect();
            let want = oracle(&state, &refs);
            assert_eq!(
                blbf_search(&state, &refs, 1, true, false),
                want,
                "seed {seed}"
            );
            assert_eq!(
                blbf_search(&state, &refs, 1, true, true),
                want,
                "parallel seed {seed}"
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn chosen_pose_is_inside(seed in 0u64..1000, theta in 0.0f64..3.2) {
            let state = cluttered(seed);
            let hf = rasterize(&model("c", shapes::cylinder(0.03, 0.08, 12)), theta, 0.01).unwrap();
            let c = blbf_place(&state, &[&hf], 1).unwrap();
            let pose = Pose { x: c.x, y: c.y, z: c.z, theta, ..Pose::default() };
            prop_assert_eq!(state.check_bounds(&hf, &pose), crate::container::BoundsCheck::Inside);
            prop_assert_eq!(state.drop_z(&hf, c.x, c.y).unwrap(), c.z);
        }
    }
}
