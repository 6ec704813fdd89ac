//! Analytic orthographic renderer for primitive scenes, producing rasters
//! and ground-truth label maps.

use std::collections::{BTreeMap, BTreeSet};

use image::{Luma, RgbaImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::colorsci::{delta_e, Rgba, Srgb};
use crate::formats::LabelMap;
use crate::maskops::{Bitmap, PartId, PartMask};
use crate::vectordoc::{merge_parts, trace_part, Canvas, SvgError, VectorDocument};
use crate::viewsphere::ViewPose;

/// Minimum pairwise ΔE00 between primitive colours.
pub const MIN_COLOR_SEPARATION: f64 = 5.0;

const CAMERA_DISTANCE: f64 = 100.0;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("scene has no primitives")]
    Empty,
    #[error("part id {0} is used by more than one primitive or is 0")]
    BadPartId(u16),
    #[error("parts {0} and {1} have colours only {2:.2} ΔE00 apart")]
    ColorsTooClose(u16, u16, f64),
    #[error("invalid size: {0}")]
    InvalidSize(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Sphere { radius: f64 },
    Box { half_extents: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub center: [f64; 3],
    pub color: Srgb,
    pub part_id: PartId,
}

fn default_extent() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    /// `(width, height)` in pixels.
    pub image_size: (u32, u32),
    /// Half-width of the view window along the shorter image side, in
    /// scene units.
    #[serde(default = "default_extent")]
    pub extent: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    /// Halve the alpha of foreground pixels bordering the background.
    pub feather: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub raster: RgbaImage,
    pub labels: LabelMap,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.primitives.is_empty() {
            return Err(SceneError::Empty);
        }
        let (w, h) = self.image_size;
        if w == 0 || h == 0 || !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(SceneError::InvalidSize(format!("{w}x{h}, extent {}", self.extent)));
        }
        let mut seen = BTreeSet::new();
        for p in &self.primitives {
            if p.part_id == PartId::BACKGROUND || !seen.insert(p.part_id) {
                return Err(SceneError::BadPartId(p.part_id.0));
            }
            let ok = match &p.shape {
                Shape::Sphere { radius } => *radius > 0.0,
                Shape::Box { half_extents } => half_extents.iter().all(|h| *h > 0.0),
            };
            if !ok {
                return Err(SceneError::InvalidSize(format!("primitive of part {}", p.part_id)));
            }
        }
        for (i, a) in self.primitives.iter().enumerate() {
            for b in &self.primitives[i + 1..] {
                let d = delta_e(a.color, b.color);
                if d < MIN_COLOR_SEPARATION {
                    return Err(SceneError::ColorsTooClose(a.part_id.0, b.part_id.0, d));
                }
            }
        }
        Ok(())
    }

    pub fn part_colors(&self) -> BTreeMap<PartId, Srgb> {
        self.primitives.iter().map(|p| (p.part_id, p.color)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Distance along the ray to the first surface hit, if any.
fn intersect(p: &Primitive, origin: [f64; 3], dir: [f64; 3]) -> Option<f64> {
    let oc = sub(origin, p.center);
    match &p.shape {
        Shape::Sphere { radius } => {
            let b = dot(dir, oc);
            let disc = b * b - (dot(oc, oc) - radius * radius);
            if disc < 0.0 {
                return None;
            }
            let t = -b - disc.sqrt();
            (t > 0.0).then_some(t)
        }
        Shape::Box { half_extents } => {
            let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
            for k in 0..3 {
                if dir[k].abs() < 1e-15 {
                    if oc[k].abs() > half_extents[k] {
                        return None;
                    }
                    continue;
                }
                let a = (-half_extents[k] - oc[k]) / dir[k];
                let b = (half_extents[k] - oc[k]) / dir[k];
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
            (t0 <= t1 && t0 > 0.0).then_some(t0)
        }
    }
}

/// Camera right and up vectors for a pose; the view direction is
/// `-direction()`.
pub fn camera_basis(pose: &ViewPose) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let (sy, cy) = pose.yaw_deg().to_radians().sin_cos();
    let (sp, cp) = pose.pitch_deg().to_radians().sin_cos();
    let right = [sy, 0.0, -cy];
    let up = [-sp * cy, cp, -sp * sy];
    (right, up, pose.direction())
}

fn trace_pixels(scene: &SceneSpec, pose: &ViewPose) -> Vec<Option<usize>> {
    let (w, h) = scene.image_size;
    let (right, up, u) = camera_basis(pose);
    let dir = [-u[0], -u[1], -u[2]];
    let scale = 2.0 * scene.extent / w.min(h) as f64;
    let mut hits = Vec::with_capacity(w as usize * h as usize);
    for py in 0..h {
        let sy = (h as f64 / 2.0 - (py as f64 + 0.5)) * scale;
        for px in 0..w {
            let sx = (px as f64 + 0.5 - w as f64 / 2.0) * scale;
            let origin = [
                sx * right[0] + sy * up[0] + CAMERA_DISTANCE * u[0],
                sx * right[1] + sy * up[1] + CAMERA_DISTANCE * u[1],
                sx * right[2] + sy * up[2] + CAMERA_DISTANCE * u[2],
            ];
            let mut best: Option<(f64, usize)> = None;
            for (i, p) in scene.primitives.iter().enumerate() {
                if let Some(t) = intersect(p, origin, dir) {
                    // strict comparison: earlier primitives win exact ties
                    if best.is_none_or(|(bt, _)| t < bt) {
                        best = Some((t, i));
                    }
                }
            }
            hits.push(best.map(|b| b.1));
        }
    }
    hits
}

/// Ground-truth label map only.
pub fn render_labels(scene: &SceneSpec, pose: &ViewPose) -> LabelMap {
    let (w, h) = scene.image_size;
    let hits = trace_pixels(scene, pose);
    LabelMap::from_fn(w, h, |x, y| {
        Luma([hits[(y * w + x) as usize].map_or(0, |i| scene.primitives[i].part_id.0)])
    })
}

/// Renders the raster and label map of a view.
pub fn render_view(scene: &SceneSpec, pose: &ViewPose, opts: RenderOptions) -> Rendered {
    let (w, h) = scene.image_size;
    let hits = trace_pixels(scene, pose);
    let at = |x: i64, y: i64| {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            None
        } else {
            hits[(y as u32 * w + x as u32) as usize]
        }
    };
    let labels = LabelMap::from_fn(w, h, |x, y| {
        Luma([at(x as i64, y as i64).map_or(0, |i| scene.primitives[i].part_id.0)])
    });
    let raster = RgbaImage::from_fn(w, h, |x, y| {
        let (xi, yi) = (x as i64, y as i64);
        match at(xi, yi) {
            None => image::Rgba([0, 0, 0, 0]),
            Some(i) => {
                let c = scene.primitives[i].color;
                let edge = opts.feather
                    && [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|(dx, dy)| at(xi + dx, yi + dy).is_none());
                image::Rgba([c.r, c.g, c.b, if edge { 128 } else { 255 }])
            }
        }
    });
    Rendered { raster, labels }
}

/// Bitmap of one part in a label map.
pub fn part_bitmap(labels: &LabelMap, part: PartId) -> Bitmap {
    let (w, h) = labels.dimensions();
    Bitmap::from_fn(w, h, |x, y| labels.get_pixel(x, y).0[0] == part.0)
}

/// Pixel count per visible part.
pub fn visible_areas(labels: &LabelMap) -> BTreeMap<PartId, usize> {
    let mut out = BTreeMap::new();
    for p in labels.pixels() {
        if p.0[0] != 0 {
            *out.entry(PartId(p.0[0])).or_insert(0) += 1;
        }
    }
    out
}

/// Input-SVG stand-in: the key view's ground truth traced part by part.
pub fn reference_svg(scene: &SceneSpec, pose: &ViewPose) -> Result<VectorDocument, SvgError> {
    let labels = render_labels(scene, pose);
    let colors = scene.part_colors();
    let mut parts = BTreeMap::new();
    let mut areas = BTreeMap::new();
    for (part, area) in visible_areas(&labels) {
        let c = colors[&part];
        let mask = PartMask::with_color(part, pose.id(), part_bitmap(&labels, part), Rgba { rgb: c, a: 255 })
            .expect("visible part has pixels");
        parts.insert(part, trace_part(&mask)?);
        areas.insert(part, area);
    }
    let (w, h) = scene.image_size;
    Ok(merge_parts(&parts, &areas, Canvas::new(w as f64, h as f64)))
}

fn prim(shape: Shape, center: [f64; 3], color: Srgb, id: u16) -> Primitive {
    Primitive { shape, center, color, part_id: PartId(id) }
}

/// Three parts: a red body sphere, a blue hat box on top, and a green box
/// behind the body that the key view (yaw 0, pitch 0) cannot see.
pub fn fixture_occlusion_scene() -> SceneSpec {
    SceneSpec {
        primitives: vec![
            prim(Shape::Sphere { radius: 0.5 }, [0.0, 0.0, 0.0], Srgb::new(220, 60, 50), 1),
            prim(Shape::Box { half_extents: [0.25, 0.12, 0.25] }, [0.0, 0.55, 0.0], Srgb::new(40, 90, 200), 2),
            prim(Shape::Box { half_extents: [0.18, 0.18, 0.18] }, [-0.6, 0.0, 0.0], Srgb::new(60, 170, 80), 3),
        ],
        image_size: (160, 160),
        extent: 1.0,
    }
}

/// Four parts visible from the key view and most of the turntable: a body
/// sphere, top and bottom caps, and a front badge.
pub fn fixture_ablation_scene() -> SceneSpec {
    SceneSpec {
        primitives: vec![
            prim(Shape::Sphere { radius: 0.45 }, [0.0, 0.0, 0.0], Srgb::new(220, 60, 50), 1),
            prim(Shape::Box { half_extents: [0.24, 0.1, 0.24] }, [0.0, 0.5, 0.0], Srgb::new(40, 90, 200), 2),
            prim(Shape::Box { half_extents: [0.24, 0.1, 0.24] }, [0.0, -0.5, 0.0], Srgb::new(60, 170, 80), 3),
            prim(Shape::Sphere { radius: 0.2 }, [0.35, 0.0, 0.0], Srgb::new(240, 200, 40), 4),
        ],
        image_size: (128, 128),
        extent: 1.0,
    }
}

/// Three parts visible from every turntable pose: a body sphere with caps
/// above and below it.
pub fn fixture_pipeline_scene() -> SceneSpec {
    let mut s = fixture_ablation_scene();
    s.primitives.truncate(3);
    s.image_size = (160, 160);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::viewsphere::ViewId;

    fn pose(yaw: f64, pitch: f64) -> ViewPose {
        ViewPose::new(ViewId(0), yaw, pitch).unwrap()
    }

    #[test]
    fn fixtures_are_valid_and_deterministic() {
        fixture_occlusion_scene().validate().unwrap();
        fixture_ablation_scene().validate().unwrap();
        fixture_pipeline_scene().validate().unwrap();
        assert_eq!(fixture_occlusion_scene(), fixture_occlusion_scene());
    }

    #[test]
    fn sphere_silhouette_is_pose_invariant() {
        let scene = SceneSpec {
            primitives: vec![prim(Shape::Sphere { radius: 0.6 }, [0.0; 3], Srgb::new(200, 0, 0), 1)],
            image_size: (64, 64),
            extent: 1.0,
        };
        let a = render_labels(&scene, &pose(0.0, 0.0));
        for (y, p) in [(37.0, 12.0), (-150.0, -60.0), (90.0, 90.0)] {
            assert_eq!(render_labels(&scene, &pose(y, p)), a);
        }
    }

    #[test]
    fn occluded_part_visibility() {
        let s = fixture_occlusion_scene();
        let key = visible_areas(&render_labels(&s, &pose(0.0, 0.0)));
        assert_eq!(key.keys().copied().collect::<Vec<_>>(), vec![PartId(1), PartId(2)]);
        let back = visible_areas(&render_labels(&s, &pose(180.0, 0.0)));
        assert_eq!(back.len(), 3);
        // analytic face area: 0.36 × 0.36 units at 80 px per unit
        let face = (0.36f64 * 80.0).powi(2);
        assert!((back[&PartId(3)] as f64 - face).abs() / face < 0.1);
    }

    #[test]
    fn raster_and_labels_agree() {
        let s = fixture_occlusion_scene();
        for opts in [RenderOptions::default(), RenderOptions { feather: true }] {
            let r = render_view(&s, &pose(135.0, 30.0), opts);
            let colors = s.part_colors();
            for (x, y, l) in r.labels.enumerate_pixels() {
                let px = r.raster.get_pixel(x, y).0;
                assert_eq!(px[3] > 0, l.0[0] != 0);
                if l.0[0] != 0 {
                    let c = colors[&PartId(l.0[0])];
                    assert_eq!([px[0], px[1], px[2]], [c.r, c.g, c.b]);
                }
            }
        }
    }

    #[test]
    fn validation_rejects_bad_scenes() {
        let mut s = fixture_occlusion_scene();
        s.primitives[1].color = Srgb::new(221, 60, 50);
        assert!(matches!(s.validate(), Err(SceneError::ColorsTooClose(1, 2, _))));
        let mut s = fixture_occlusion_scene();
        s.primitives[2].part_id = PartId(1);
        assert_eq!(s.validate(), Err(SceneError::BadPartId(1)));
        let s = SceneSpec { primitives: vec![], image_size: (4, 4), extent: 1.0 };
        assert_eq!(s.validate(), Err(SceneError::Empty));
    }

    #[test]
    fn scene_json_round_trip() {
        let s = fixture_ablation_scene();
        let back: SceneSpec = serde_json::from_str(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }
}
