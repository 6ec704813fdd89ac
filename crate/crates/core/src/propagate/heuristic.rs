use image::RgbaImage;
use serde::{Deserialize, Serialize};

use super::{PropagationBackend, PropagationErrorKind, PropagationJob};
use crate::colorsci::delta_e;
use crate::maskops::{MaskSet, PartId, PartMask};
use crate::viewsphere::{DEFAULT_TAU_DEG, TIE_EPS};

/// Weights of the colour, position and view-distance terms of the
/// matching score, and the acceptance ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchWeights {
    pub w_color: f64,
    pub w_pos: f64,
    pub w_view: f64,
    pub s_max: f64,
}

impl Default for MatchWeights {
    fn default() -> Self {
        Self { w_color: 0.5, w_pos: 0.35, w_view: 0.15, s_max: 0.35 }
    }
}

impl MatchWeights {
    pub fn validate(&self) -> Result<(), String> {
        let w = [self.w_color, self.w_pos, self.w_view];
        if w.iter().any(|v| !(*v >= 0.0)) {
            return Err(format!("weights must be nonnegative: {w:?}"));
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(format!("weights must sum to 1: {w:?}"));
        }
        if !(self.s_max > 0.0 && self.s_max < 1.0) {
            return Err(format!("s_max must lie in (0, 1): {}", self.s_max));
        }
        Ok(())
    }
}

fn diagonal(image: &RgbaImage) -> f64 {
    let (w, h) = image.dimensions();
    (w as f64).hypot(h as f64)
}

/// Best-scoring reference part for a target component. The part is `None`
/// when the best score is not below `s_max`; the score is `INFINITY` when
/// no reference holds any part.
pub fn heuristic_match(
    component: &PartMask,
    job: &PropagationJob,
    weights: &MatchWeights,
    tau_deg: f64,
) -> (Option<PartId>, f64) {
    let diag = diagonal(job.target_image);
    let tau = tau_deg.to_radians();
    let mut best: Option<(f64, PartId)> = None;
    for r in &job.references {
        for p in &r.maskset.masks {
            let color = delta_e(component.mean_color.rgb, p.mean_color.rgb) / 100.0;
            let (cx, cy) = component.centroid;
            let pos = (cx - p.centroid.0).hypot(cy - p.centroid.1) / diag;
            let s = weights.w_color * color + weights.w_pos * pos + weights.w_view * (r.distance_rad / tau);
            let better = match best {
                None => true,
                Some((bs, bid)) => s < bs - TIE_EPS || ((s - bs).abs() <= TIE_EPS && p.part_id < bid),
            };
            if better {
                best = Some((s, p.part_id));
            }
        }
    }
    match best {
        None => (None, f64::INFINITY),
        Some((s, id)) => ((s < weights.s_max).then_some(id), s),
    }
}

/// Segments the target into flat-colour components and labels each with
/// its best-matching reference part. Unmatched components are left for
/// residual discovery.
#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicBackend {
    pub weights: MatchWeights,
    pub tau_deg: f64,
}

impl Default for HeuristicBackend {
    fn default() -> Self {
        Self { weights: MatchWeights::default(), tau_deg: DEFAULT_TAU_DEG }
    }
}

impl PropagationBackend for HeuristicBackend {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn propagate(&self, job: &PropagationJob) -> Result<MaskSet, PropagationErrorKind> {
        self.weights.validate().map_err(PropagationErrorKind::Backend)?;
        let view = job.target.id();
        let components = self.segment(job.target_image, None, view);
        let mut out = MaskSet::new(view, components.width, components.height);
        for c in components.masks {
            if let (Some(id), _) = heuristic_match(&c, job, &self.weights, self.tau_deg) {
                out.merge(PartMask { part_id: id, ..c });
            }
        }
        // merged masks keep the colour of their first component
        out.masks = out
            .masks
            .into_iter()
            .filter_map(|m| PartMask::from_bitmap(m.part_id, view, m.bitmap, job.target_image))
            .collect();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorsci::{Rgba, Srgb};
    use crate::maskops::{flat_color_segment, mask_iou, Bitmap, PartRegistry};
    use crate::propagate::{propagate_view, ReferenceView};
    use crate::synthscene::{part_bitmap, render_view, Primitive, RenderOptions, SceneSpec, Shape};
    use crate::viewsphere::{ViewId, ViewPose};
    use std::collections::BTreeMap;

    fn square(x0: u32, color: Srgb, id: u16) -> PartMask {
        let b = Bitmap::from_fn(40, 40, |x, y| (x0..x0 + 10).contains(&x) && (10..20).contains(&y));
        PartMask::with_color(PartId(id), ViewId(0), b, Rgba { rgb: color, a: 255 }).unwrap()
    }

    fn job_with<'a>(img: &'a RgbaImage, refs: Vec<ReferenceView<'a>>, reg: &'a PartRegistry) -> PropagationJob<'a> {
        PropagationJob { target: ViewPose::new(ViewId(1), 0.0, 0.0).unwrap(), target_image: img, references: refs, registry: reg }
    }

    #[test]
    fn scoring_examples() {
        let img = RgbaImage::new(40, 40);
        let reg = PartRegistry::new();
        let red = Srgb::new(200, 30, 30);
        let mut set = MaskSet::new(ViewId(0), 40, 40);
        set.masks.push(square(5, red, 4));
        let pose = ViewPose::new(ViewId(0), 0.0, 0.0).unwrap();
        let refs = vec![ReferenceView { pose, image: &img, maskset: &set, distance_rad: 0.0 }];
        let job = job_with(&img, refs.clone(), &reg);
        let w = MatchWeights::default();
        assert_eq!(heuristic_match(&square(5, red, 1), &job, &w, 75.0), (Some(PartId(4)), 0.0));

        // black vs white is ΔE00 = 100 (to the 1e-7 that white's L* misses 100 by)
        let mut white = MaskSet::new(ViewId(0), 40, 40);
        white.masks.push(square(5, Srgb::WHITE, 2));
        let refs = vec![ReferenceView { pose, image: &img, maskset: &white, distance_rad: 0.0 }];
        let job = job_with(&img, refs, &reg);
        let (id, s) = heuristic_match(&square(5, Srgb::BLACK, 1), &job, &w, 75.0);
        assert_eq!(id, None);
        assert!((s - 0.5).abs() < 1e-6, "{s}");

        // two parts equidistant from the component with equal colours
        let mut tie = MaskSet::new(ViewId(0), 40, 40);
        tie.masks.push(square(0, red, 7));
        tie.masks.push(square(20, red, 3));
        let refs = vec![ReferenceView { pose, image: &img, maskset: &tie, distance_rad: 0.0 }];
        let job = job_with(&img, refs, &reg);
        assert_eq!(heuristic_match(&square(10, red, 1), &job, &w, 75.0).0, Some(PartId(3)));

        let weights = MatchWeights { w_color: 0.2, w_pos: 0.2, w_view: 0.7, s_max: 0.35 };
        let refs = vec![ReferenceView { pose, image: &img, maskset: &set, distance_rad: 75f64.to_radians() }];
        let job = job_with(&img, refs, &reg);
        let (_, s) = heuristic_match(&square(5, red, 1), &job, &weights, 75.0);
        assert!((s - 0.7).abs() < 1e-12);
    }

    #[test]
    fn weight_validation() {
        assert!(MatchWeights::default().validate().is_ok());
        assert!(MatchWeights { w_color: 0.6, ..Default::default() }.validate().is_err());
        assert!(MatchWeights { s_max: 1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn two_part_scene_fifteen_degrees_apart() {
        let scene = SceneSpec {
            primitives: vec![
                Primitive { shape: Shape::Sphere { radius: 0.5 }, center: [0.0; 3], color: Srgb::new(210, 70, 40), part_id: PartId(1) },
                Primitive {
                    shape: Shape::Box { half_extents: [0.3, 0.15, 0.3] },
                    center: [0.0, 0.6, 0.0],
                    color: Srgb::new(30, 110, 190),
                    part_id: PartId(2),
                },
            ],
            image_size: (120, 120),
            extent: 1.0,
        };
        let a = ViewPose::new(ViewId(0), 0.0, 0.0).unwrap();
        let b = ViewPose::new(ViewId(1), 15.0, 0.0).unwrap();
        let ra = render_view(&scene, &a, RenderOptions::default());
        let rb = render_view(&scene, &b, RenderOptions::default());
        let mut reg = PartRegistry::new();
        let key = flat_color_segment(&ra.raster, None, a.id(), &mut reg).unwrap();
        let job = PropagationJob {
            target: b,
            target_image: &rb.raster,
            references: vec![ReferenceView { pose: a, image: &ra.raster, maskset: &key, distance_rad: 15f64.to_radians() }],
            registry: &reg,
        };
        let out = propagate_view(&job, &HeuristicBackend::default()).unwrap();
        assert_eq!(out.masks.len(), 2);
        let by_color: BTreeMap<u8, PartId> = key.masks.iter().map(|m| (m.mean_color.rgb.r, m.part_id)).collect();
        for (gt, red) in [(PartId(1), 210u8), (PartId(2), 30)] {
            let m = out.get(by_color[&red]).unwrap();
            let iou = mask_iou(&m.bitmap, &part_bitmap(&rb.labels, gt)).unwrap();
            assert!(iou >= 0.9, "part {gt}: IoU {iou}");
        }
    }
}
