//! Camera-pose geometry on the viewing sphere.
//!
//! Poses are (yaw, pitch) pairs in degrees. Directions follow
//! `u(yaw, pitch) = [cos(pitch) cos(yaw), sin(pitch), cos(pitch) sin(yaw)]`,
//! so +y is up and the key view (0°, 0°) looks along the +x axis.
//! Distances between views are great-circle angles computed with the
//! `atan2(|u x v|, u . v)` form, which stays well conditioned for nearly
//! parallel and nearly antipodal directions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distances closer than this are treated as ties and resolved by view id.
pub const TIE_EPS: f64 = 1e-12;

/// Slack applied to the inclusive `tau` comparison so that a view sitting
/// exactly on the threshold is not lost to rounding.
const TAU_SLACK: f64 = 1e-9;

/// Default number of reference views per target.
pub const DEFAULT_K: usize = 6;
/// Default angular threshold for reference views, in degrees.
pub const DEFAULT_TAU_DEG: f64 = 75.0;
/// Maximum number of full 2-opt passes.
pub const TWO_OPT_MAX_PASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ViewId(pub u32);

impl fmt::Display for ViewId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid pose {id}: {reason}")]
    InvalidPose { id: ViewId, reason: String },
    #[error("cannot sample an empty view set")]
    EmptySet,
    #[error("unknown view id {0}")]
    UnknownView(ViewId),
    #[error("duplicate view id {0}")]
    DuplicateView(ViewId),
    #[error("order is not a permutation of the view set: {0}")]
    NotPermutation(String),
    #[error("invalid sampling band: {0}")]
    InvalidBand(String),
}

/// A camera direction on the viewing sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPose", into = "RawPose")]
pub struct ViewPose {
    id: ViewId,
    yaw_deg: f64,
    pitch_deg: f64,
    radius: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPose {
    id: u32,
    yaw_deg: f64,
    pitch_deg: f64,
    #[serde(default = "default_radius")]
    radius: f64,
}

fn default_radius() -> f64 {
    1.0
}

impl TryFrom<RawPose> for ViewPose {
    type Error = GeometryError;
    fn try_from(raw: RawPose) -> Result<Self, Self::Error> {
        ViewPose::with_radius(ViewId(raw.id), raw.yaw_deg, raw.pitch_deg, raw.radius)
    }
}

impl From<ViewPose> for RawPose {
    fn from(p: ViewPose) -> Self {
        RawPose { id: p.id.0, yaw_deg: p.yaw_deg, pitch_deg: p.pitch_deg, radius: p.radius }
    }
}

impl ViewPose {
    pub fn new(id: ViewId, yaw_deg: f64, pitch_deg: f64) -> Result<Self, GeometryError> {
        Self::with_radius(id, yaw_deg, pitch_deg, 1.0)
    }

    pub fn with_radius(
        id: ViewId,
        yaw_deg: f64,
        pitch_deg: f64,
        radius: f64,
    ) -> Result<Self, GeometryError> {
        let invalid = |reason: &str| GeometryError::InvalidPose { id, reason: reason.to_string() };
        if !yaw_deg.is_finite() || !pitch_deg.is_finite() || !radius.is_finite() {
            return Err(invalid("non-finite field"));
        }
        if !(-180.0..=180.0).contains(&yaw_deg) {
            return Err(invalid("yaw outside [-180, 180]"));
        }
        if !(-90.0..=90.0).contains(&pitch_deg) {
            return Err(invalid("pitch outside [-90, 90]"));
        }
        if radius <= 0.0 {
            return Err(invalid("radius must be positive"));
        }
        Ok(Self { id, yaw_deg, pitch_deg, radius })
    }

    pub fn id(&self) -> ViewId {
        self.id
    }

    pub fn yaw_deg(&self) -> f64 {
        self.yaw_deg
    }

    pub fn pitch_deg(&self) -> f64 {
        self.pitch_deg
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Unit viewing direction of this pose.
    pub fn direction(&self) -> [f64; 3] {
        view_direction(self.yaw_deg, self.pitch_deg)
    }
}

/// `(sin, cos)` of an angle in degrees, exact at multiples of 90°.
pub(crate) fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let quarter = deg / 90.0;
    if quarter.fract() == 0.0 {
        match (quarter as i64).rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        deg.to_radians().sin_cos()
    }
}

/// Unit viewing direction for a yaw/pitch pair given in degrees.
pub fn view_direction(yaw_deg: f64, pitch_deg: f64) -> [f64; 3] {
    let (sy, cy) = sin_cos_deg(yaw_deg);
    let (sp, cp) = sin_cos_deg(pitch_deg);
    [cp * cy, sp, cp * sy]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Great-circle angle between two unit directions, in radians.
pub fn direction_angle(u: [f64; 3], v: [f64; 3]) -> f64 {
    norm(cross(u, v)).atan2(dot(u, v).clamp(-1.0, 1.0))
}

/// Angular distance between two poses in radians, in `[0, π]`.
///
/// Radius does not participate.
pub fn angular_distance(a: &ViewPose, b: &ViewPose) -> f64 {
    direction_angle(a.direction(), b.direction())
}

/// Pitch band used when sampling the sphere; the full sphere by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereBand {
    pub min_pitch_deg: f64,
    pub max_pitch_deg: f64,
}

impl Default for SphereBand {
    fn default() -> Self {
        Self { min_pitch_deg: -90.0, max_pitch_deg: 90.0 }
    }
}

/// Deterministic, near-uniform Fibonacci-lattice samples.
///
/// The lattice is rotated in yaw so that the sample closest to the equator
/// sits at yaw 0; for odd `n` on the full sphere that sample is exactly the
/// key direction (0°, 0°).
pub fn sample_sphere(n: usize) -> Result<Vec<ViewPose>, GeometryError> {
    sample_sphere_band(n, SphereBand::default())
}

pub fn sample_sphere_band(n: usize, band: SphereBand) -> Result<Vec<ViewPose>, GeometryError> {
    if n == 0 {
        return Err(GeometryError::EmptySet);
    }
    let SphereBand { min_pitch_deg, max_pitch_deg } = band;
    if !(min_pitch_deg.is_finite() && max_pitch_deg.is_finite())
        || min_pitch_deg < -90.0
        || max_pitch_deg > 90.0
        || min_pitch_deg > max_pitch_deg
    {
        return Err(GeometryError::InvalidBand(format!("[{min_pitch_deg}, {max_pitch_deg}]")));
    }
    let y_hi = sin_cos_deg(max_pitch_deg).0;
    let y_lo = sin_cos_deg(min_pitch_deg).0;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());

    let heights: Vec<f64> = (0..n)
        .map(|i| y_hi - (2 * i + 1) as f64 / (2 * n) as f64 * (y_hi - y_lo))
        .collect();
    // sample nearest the equator (lowest index on ties) anchors yaw 0
    let anchor = (0..n)
        .min_by(|&a, &b| heights[a].abs().total_cmp(&heights[b].abs()).then(a.cmp(&b)))
        .expect("n >= 1");

    (0..n)
        .map(|i| {
            let y = heights[i].clamp(-1.0, 1.0);
            let pitch = if y == 0.0 { 0.0 } else { y.asin().to_degrees() };
            let turns = (i as f64 - anchor as f64) * golden;
            let yaw = wrap_deg(turns.to_degrees());
            ViewPose::new(ViewId(i as u32), yaw, pitch)
        })
        .collect()
}

/// Wraps an angle in degrees into `[-180, 180]`.
fn wrap_deg(deg: f64) -> f64 {
    let w = (deg + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 && deg > 0.0 {
        180.0
    } else {
        w
    }
}

/// Yaw values of the turntable grid: −120° to +120° every 15°.
pub const TURNTABLE_YAWS: usize = 17;
/// Pitch rows of the turntable grid.
pub const TURNTABLE_PITCHES: [f64; 3] = [-45.0, 0.0, 45.0];

/// The 51-pose turntable grid, ids row-major (pitch outer, yaw inner).
pub fn turntable_grid() -> Vec<ViewPose> {
    let mut out = Vec::with_capacity(TURNTABLE_YAWS * TURNTABLE_PITCHES.len());
    for &pitch in &TURNTABLE_PITCHES {
        for j in 0..TURNTABLE_YAWS {
            let yaw = -120.0 + 15.0 * j as f64;
            let id = ViewId(out.len() as u32);
            out.push(ViewPose::new(id, yaw, pitch).expect("grid poses are in range"));
        }
    }
    out
}

/// Pose lookup by id, rejecting duplicates.
pub fn index_views(views: &[ViewPose]) -> Result<BTreeMap<ViewId, &ViewPose>, GeometryError> {
    let mut map = BTreeMap::new();
    for v in views {
        if map.insert(v.id(), v).is_some() {
            return Err(GeometryError::DuplicateView(v.id()));
        }
    }
    Ok(map)
}

/// The view whose direction is closest to `(yaw_deg, pitch_deg)`, lowest id on ties.
pub fn nearest_view(views: &[ViewPose], yaw_deg: f64, pitch_deg: f64) -> Option<ViewId> {
    let target = view_direction(yaw_deg, pitch_deg);
    let mut best: Option<(f64, ViewId)> = None;
    for v in views {
        let d = direction_angle(target, v.direction());
        best = match best {
            Some((bd, bid)) if bd < d - TIE_EPS || ((bd - d).abs() <= TIE_EPS && bid < v.id()) => {
                Some((bd, bid))
            }
            _ => Some((d, v.id())),
        };
    }
    best.map(|(_, id)| id)
}

/// Greedy nearest-unvisited ordering starting at `start`.
pub fn nn_traversal(views: &[ViewPose], start: ViewId) -> Result<Vec<ViewId>, GeometryError> {
    let index = index_views(views)?;
    if !index.contains_key(&start) {
        return Err(GeometryError::UnknownView(start));
    }
    let mut unvisited: BTreeSet<ViewId> = index.keys().copied().collect();
    unvisited.remove(&start);
    let mut order = Vec::with_capacity(index.len());
    order.push(start);
    let mut current = index[&start];
    while !unvisited.is_empty() {
        // BTreeSet iterates ascending, so strict improvement keeps the lowest id on ties
        let mut best: Option<(f64, ViewId)> = None;
        for id in &unvisited {
            let d = angular_distance(current, index[id]);
            if best.is_none_or(|(bd, _)| d < bd - TIE_EPS) {
                best = Some((d, *id));
            }
        }
        let (_, next) = best.expect("unvisited is non-empty");
        unvisited.remove(&next);
        order.push(next);
        current = index[&next];
    }
    Ok(order)
}

/// Total great-circle length of an open path through `order`.
pub fn path_length(views: &[ViewPose], order: &[ViewId]) -> Result<f64, GeometryError> {
    let index = index_views(views)?;
    order
        .windows(2)
        .map(|w| {
            let a = index.get(&w[0]).ok_or(GeometryError::UnknownView(w[0]))?;
            let b = index.get(&w[1]).ok_or(GeometryError::UnknownView(w[1]))?;
            Ok(angular_distance(a, b))
        })
        .sum()
}

fn check_permutation(
    index: &BTreeMap<ViewId, &ViewPose>,
    order: &[ViewId],
) -> Result<(), GeometryError> {
    if order.len() != index.len() {
        return Err(GeometryError::NotPermutation(format!(
            "{} entries for {} views",
            order.len(),
            index.len()
        )));
    }
    let mut seen = BTreeSet::new();
    for id in order {
        if !index.contains_key(id) {
            return Err(GeometryError::NotPermutation(format!("unknown id {id}")));
        }
        if !seen.insert(*id) {
            return Err(GeometryError::NotPermutation(format!("repeated id {id}")));
        }
    }
    Ok(())
}

/// First-improvement 2-opt over an open path with the first view pinned.
///
/// Runs at most [`TWO_OPT_MAX_PASSES`] full passes; the result never has a
/// larger total angular length than the input.
pub fn two_opt_refine(views: &[ViewPose], order: &[ViewId]) -> Result<Vec<ViewId>, GeometryError> {
    let index = index_views(views)?;
    check_permutation(&index, order)?;
    let n = order.len();
    if n < 3 {
        return Ok(order.to_vec());
    }
    let dirs: Vec<[f64; 3]> = order.iter().map(|id| index[id].direction()).collect();
    let dist = |a: usize, b: usize| direction_angle(dirs[a], dirs[b]);
    // positions into `dirs`
    let mut tour: Vec<usize> = (0..n).collect();

    for _ in 0..TWO_OPT_MAX_PASSES {
        let mut improved = false;
        for i in 1..n - 1 {
            for j in i + 1..n {
                let before_head = dist(tour[i - 1], tour[i]);
                let after_head = dist(tour[i - 1], tour[j]);
                let (before_tail, after_tail) = if j + 1 < n {
                    (dist(tour[j], tour[j + 1]), dist(tour[i], tour[j + 1]))
                } else {
                    (0.0, 0.0)
                };
                let delta = (after_head + after_tail) - (before_head + before_tail);
                if delta < -TIE_EPS {
                    tour[i..=j].reverse();
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(tour.into_iter().map(|p| order[p]).collect())
}

/// Up to `k` processed views within `tau_deg` of `target`, nearest first.
pub fn select_references(
    target: ViewId,
    processed: &[ViewId],
    views: &[ViewPose],
    k: usize,
    tau_deg: f64,
) -> Result<Vec<ViewId>, GeometryError> {
    Ok(select_references_with_distance(target, processed, views, k, tau_deg)?
        .into_iter()
        .map(|(id, _)| id)
        .collect())
}

/// As [`select_references`], also returning each distance in radians.
pub fn select_references_with_distance(
    target: ViewId,
    processed: &[ViewId],
    views: &[ViewPose],
    k: usize,
    tau_deg: f64,
) -> Result<Vec<(ViewId, f64)>, GeometryError> {
    let index = index_views(views)?;
    let t = index.get(&target).ok_or(GeometryError::UnknownView(target))?;
    let tau = tau_deg.to_radians();
    let mut cands = Vec::with_capacity(processed.len());
    for id in processed {
        if *id == target {
            continue;
        }
        let v = index.get(id).ok_or(GeometryError::UnknownView(*id))?;
        let d = angular_distance(t, v);
        if d <= tau + TAU_SLACK {
            cands.push((*id, d));
        }
    }
    sort_by_distance(&mut cands);
    cands.dedup_by_key(|c| c.0);
    cands.truncate(k);
    Ok(cands)
}

/// Nearest processed view regardless of any threshold.
pub fn nearest_processed(
    target: ViewId,
    processed: &[ViewId],
    views: &[ViewPose],
) -> Result<Option<(ViewId, f64)>, GeometryError> {
    Ok(select_references_with_distance(target, processed, views, 1, 180.0)?.into_iter().next())
}

pub(crate) fn sort_by_distance(c: &mut [(ViewId, f64)]) {
    c.sort_by(|a, b| {
        if (a.1 - b.1).abs() <= TIE_EPS {
            a.0.cmp(&b.0)
        } else {
            a.1.total_cmp(&b.1)
        }
    });
}

/// Visiting order over all views plus per-view reference sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraversalPlan {
    pub order: Vec<ViewId>,
    pub references: BTreeMap<ViewId, Vec<ViewId>>,
    pub k: usize,
    pub tau_deg: f64,
}

impl TraversalPlan {
    /// Nearest-neighbour traversal, 2-opt refinement, then reference sets.
    pub fn build(
        views: &[ViewPose],
        start: ViewId,
        k: usize,
        tau_deg: f64,
    ) -> Result<Self, GeometryError> {
        let order = two_opt_refine(views, &nn_traversal(views, start)?)?;
        let mut references = BTreeMap::new();
        for (pos, id) in order.iter().enumerate() {
            references.insert(*id, select_references(*id, &order[..pos], views, k, tau_deg)?);
        }
        Ok(Self { order, references, k, tau_deg })
    }

    pub fn key_view(&self) -> ViewId {
        self.order[0]
    }

    /// Checks every structural invariant of the plan against `views`.
    pub fn validate(&self, views: &[ViewPose]) -> Result<(), GeometryError> {
        let index = index_views(views)?;
        check_permutation(&index, &self.order)?;
        let position: BTreeMap<ViewId, usize> =
            self.order.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let tau = self.tau_deg.to_radians();
        for (id, refs) in &self.references {
            let pos = *position.get(id).ok_or(GeometryError::UnknownView(*id))?;
            if refs.len() > self.k {
                return Err(GeometryError::NotPermutation(format!(
                    "view {id} has {} references, k = {}",
                    refs.len(),
                    self.k
                )));
            }
            for r in refs {
                let rpos = *position.get(r).ok_or(GeometryError::UnknownView(*r))?;
                if rpos >= pos {
                    return Err(GeometryError::NotPermutation(format!(
                        "reference {r} of view {id} is not processed earlier"
                    )));
                }
                if angular_distance(index[id], index[r]) > tau + TAU_SLACK {
                    return Err(GeometryError::NotPermutation(format!(
                        "reference {r} of view {id} lies outside tau"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn pitch0(yaws: &[f64]) -> Vec<ViewPose> {
        yaws.iter()
            .enumerate()
            .map(|(i, &y)| ViewPose::new(ViewId(i as u32), y, 0.0).unwrap())
            .collect()
    }

    #[test]
    fn axis_directions_are_exact() {
        assert_eq!(view_direction(0.0, 0.0), [1.0, 0.0, 0.0]);
        assert_eq!(view_direction(0.0, 90.0), [0.0, 1.0, 0.0]);
        assert_eq!(view_direction(90.0, 0.0), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn non_finite_pose_is_rejected() {
        assert!(matches!(
            ViewPose::new(ViewId(0), f64::NAN, 0.0),
            Err(GeometryError::InvalidPose { .. })
        ));
        assert!(ViewPose::new(ViewId(0), 0.0, f64::INFINITY).is_err());
        assert!(ViewPose::new(ViewId(0), 190.0, 0.0).is_err());
    }

    #[test]
    fn distance_examples() {
        let v = pitch0(&[0.0, 90.0, 180.0]);
        assert_eq!(angular_distance(&v[0], &v[0]), 0.0);
        assert!((angular_distance(&v[0], &v[1]) - FRAC_PI_2).abs() < 1e-15);
        assert!((angular_distance(&v[0], &v[2]) - PI).abs() < 1e-15);
    }

    #[test]
    fn sphere_sampling_edge_cases() {
        assert_eq!(sample_sphere(0), Err(GeometryError::EmptySet));
        let one = sample_sphere(1).unwrap();
        assert_eq!((one[0].yaw_deg(), one[0].pitch_deg()), (0.0, 0.0));
        let two = sample_sphere(2).unwrap();
        assert!(angular_distance(&two[0], &two[1]) >= FRAC_PI_2);
        let odd = sample_sphere(51).unwrap();
        assert!(odd.iter().any(|p| p.yaw_deg() == 0.0 && p.pitch_deg() == 0.0));
    }

    #[test]
    fn sphere_band_is_respected() {
        let band = SphereBand { min_pitch_deg: 0.0, max_pitch_deg: 60.0 };
        let s = sample_sphere_band(40, band).unwrap();
        assert!(s.iter().all(|p| (0.0..=60.0).contains(&p.pitch_deg())));
        assert!(sample_sphere_band(4, SphereBand { min_pitch_deg: 10.0, max_pitch_deg: 0.0 })
            .is_err());
    }

    #[test]
    fn turntable_grid_layout() {
        let g = turntable_grid();
        assert_eq!(g.len(), 51);
        assert!(g.iter().any(|p| p.yaw_deg() == 0.0 && p.pitch_deg() == 0.0));
        assert!(!g.iter().any(|p| p.yaw_deg() == 135.0));
        assert_eq!((g[0].yaw_deg(), g[0].pitch_deg()), (-120.0, -45.0));
        assert_eq!((g[25].yaw_deg(), g[25].pitch_deg()), (0.0, 0.0));
        assert_eq!(nearest_view(&g, 0.0, 0.0), Some(ViewId(25)));
    }

    #[test]
    fn nn_traversal_examples() {
        let v = pitch0(&[0.0, 15.0, 180.0, 30.0]);
        let order = nn_traversal(&v, ViewId(0)).unwrap();
        assert_eq!(order, vec![ViewId(0), ViewId(1), ViewId(3), ViewId(2)]);

        let single = pitch0(&[42.0]);
        assert_eq!(nn_traversal(&single, ViewId(0)).unwrap(), vec![ViewId(0)]);

        // ids 1 and 2 are equidistant from the start
        let tie = pitch0(&[0.0, 15.0, -15.0]);
        assert_eq!(nn_traversal(&tie, ViewId(0)).unwrap()[1], ViewId(1));
        let tie = pitch0(&[0.0, -15.0, 15.0]);
        assert_eq!(nn_traversal(&tie, ViewId(0)).unwrap()[1], ViewId(1));

        assert_eq!(nn_traversal(&v, ViewId(9)), Err(GeometryError::UnknownView(ViewId(9))));
    }

    #[test]
    fn two_opt_examples() {
        let v = pitch0(&[0.0, 90.0, 10.0, 100.0]);
        let input = vec![ViewId(0), ViewId(1), ViewId(2), ViewId(3)];
        let before = path_length(&v, &input).unwrap();
        assert!((before.to_degrees() - 260.0).abs() < 1e-9);
        let out = two_opt_refine(&v, &input).unwrap();
        assert_eq!(out, vec![ViewId(0), ViewId(2), ViewId(1), ViewId(3)]);
        assert!((path_length(&v, &out).unwrap().to_degrees() - 100.0).abs() < 1e-9);
        assert_eq!(two_opt_refine(&v, &out).unwrap(), out);
    }

    #[test]
    fn two_opt_rejects_non_permutations() {
        let v = pitch0(&[0.0, 10.0, 20.0]);
        assert!(two_opt_refine(&v, &[ViewId(0), ViewId(0), ViewId(1)]).is_err());
        assert!(two_opt_refine(&v, &[ViewId(0), ViewId(1)]).is_err());
        assert!(two_opt_refine(&v, &[ViewId(0), ViewId(1), ViewId(7)]).is_err());
    }

    #[test]
    fn reference_selection_example() {
        let v = pitch0(&[0.0, 15.0, 30.0, 75.0, 80.0, 100.0, 170.0, 90.0]);
        let processed: Vec<ViewId> = (0..7).map(ViewId).collect();
        let refs = select_references(ViewId(7), &processed, &v, 6, 75.0).unwrap();
        assert_eq!(refs, vec![ViewId(4), ViewId(5), ViewId(3), ViewId(2), ViewId(1)]);
        assert!(select_references(ViewId(7), &[], &v, 6, 75.0).unwrap().is_empty());
        let capped = select_references(ViewId(7), &processed, &v, 2, 180.0).unwrap();
        assert_eq!(capped, vec![ViewId(4), ViewId(5)]);
    }

    #[test]
    fn plan_is_valid_on_turntable_grid() {
        let g = turntable_grid();
        let plan = TraversalPlan::build(&g, ViewId(25), DEFAULT_K, DEFAULT_TAU_DEG).unwrap();
        assert_eq!(plan.key_view(), ViewId(25));
        plan.validate(&g).unwrap();
        assert!(plan.references[&ViewId(25)].is_empty());
    }

    #[test]
    fn pose_json_validates() {
        let ok: ViewPose =
            serde_json::from_str(r#"{"id":3,"yaw_deg":15.0,"pitch_deg":-45.0,"radius":2.0}"#)
                .unwrap();
        assert_eq!(ok.id(), ViewId(3));
        assert!(serde_json::from_str::<ViewPose>(r#"{"id":3,"yaw_deg":15.0,"pitch_deg":-95.0}"#)
            .is_err());
    }
}
