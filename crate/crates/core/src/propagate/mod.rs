//! Cross-view mask propagation guided by geometrically selected reference
//! views, over pluggable backends.

mod external;
mod heuristic;
mod oracle;

use std::collections::BTreeMap;

use image::RgbaImage;
use thiserror::Error;

use crate::maskops::{segment_regions, Bitmap, MaskError, MaskSet, PartId, PartRegistry};
use crate::viewsphere::{
    angular_distance, index_views, nearest_processed, select_references_with_distance, GeometryError, ViewId,
    ViewPose,
};

pub use external::ExternalBackend;
pub use heuristic::{heuristic_match, HeuristicBackend, MatchWeights};
pub use oracle::OracleBackend;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagationErrorKind {
    #[error("backend failed: {0}")]
    Backend(String),
    #[error("output is {got:?}, target image is {expected:?}")]
    DimensionMismatch { expected: (u32, u32), got: (u32, u32) },
    #[error("output refers to unregistered part {0}")]
    UnknownPart(PartId),
    #[error("no processed view is available as a reference")]
    NoReferences,
    #[error("references are not sorted by distance")]
    UnsortedReferences,
    #[error("no image or maskset for view {0}")]
    MissingView(ViewId),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("view {view}: {kind}")]
pub struct PropagationError {
    pub view: ViewId,
    pub kind: PropagationErrorKind,
}

impl PropagationError {
    pub fn new(view: ViewId, kind: impl Into<PropagationErrorKind>) -> Self {
        Self { view, kind: kind.into() }
    }
}

/// One entry of the spatial memory: a processed view and its masks.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceView<'a> {
    pub pose: ViewPose,
    pub image: &'a RgbaImage,
    pub maskset: &'a MaskSet,
    pub distance_rad: f64,
}

#[derive(Debug, Clone)]
pub struct PropagationJob<'a> {
    pub target: ViewPose,
    pub target_image: &'a RgbaImage,
    /// Sorted ascending by `distance_rad`.
    pub references: Vec<ReferenceView<'a>>,
    pub registry: &'a PartRegistry,
}

impl PropagationJob<'_> {
    pub fn validate(&self) -> Result<(), PropagationErrorKind> {
        if self.references.is_empty() {
            return Err(PropagationErrorKind::NoReferences);
        }
        if self.references.windows(2).any(|w| w[0].distance_rad > w[1].distance_rad) {
            return Err(PropagationErrorKind::UnsortedReferences);
        }
        Ok(())
    }

    pub fn dims(&self) -> (u32, u32) {
        self.target_image.dimensions()
    }
}

pub trait PropagationBackend: Sync {
    fn name(&self) -> &str;

    /// Masks for the job's target view, ids taken from the registry.
    fn propagate(&self, job: &PropagationJob) -> Result<MaskSet, PropagationErrorKind>;

    /// Automatic segmentation used at the key view and for residual
    /// discovery. Returned ids are provisional.
    fn segment(&self, image: &RgbaImage, region: Option<&Bitmap>, view: ViewId) -> MaskSet {
        segment_regions(image, region, view)
    }
}

/// Runs a backend on a job and checks its output against the target image
/// and the registry.
pub fn propagate_view(job: &PropagationJob, backend: &dyn PropagationBackend) -> Result<MaskSet, PropagationError> {
    let view = job.target.id();
    let err = |k: PropagationErrorKind| PropagationError::new(view, k);
    job.validate().map_err(err)?;
    let mut out = backend.propagate(job).map_err(err)?;
    if out.dims() != job.dims() {
        return Err(err(PropagationErrorKind::DimensionMismatch { expected: job.dims(), got: out.dims() }));
    }
    out.view_id = view;
    for m in &mut out.masks {
        if !job.registry.contains(m.part_id) {
            return Err(err(PropagationErrorKind::UnknownPart(m.part_id)));
        }
        m.view_id = view;
    }
    out.validate().map_err(|e| err(e.into()))?;
    out.masks.sort_by_key(|m| m.part_id);
    Ok(out)
}

/// Views, their rasters and reference-selection parameters.
#[derive(Debug, Clone, Copy)]
pub struct ViewContext<'a> {
    pub views: &'a [ViewPose],
    pub images: &'a BTreeMap<ViewId, RgbaImage>,
    pub k: usize,
    pub tau_deg: f64,
}

impl<'a> ViewContext<'a> {
    pub fn pose(&self, id: ViewId) -> Result<ViewPose, PropagationError> {
        self.views
            .iter()
            .find(|v| v.id() == id)
            .copied()
            .ok_or_else(|| PropagationError::new(id, GeometryError::UnknownView(id)))
    }

    pub fn image(&self, id: ViewId) -> Result<&'a RgbaImage, PropagationError> {
        self.images.get(&id).ok_or_else(|| PropagationError::new(id, PropagationErrorKind::MissingView(id)))
    }

    /// Reference entries for the given ids, re-sorted by distance.
    pub fn references_from<'m>(
        &self,
        target: ViewId,
        ids: &[ViewId],
        masksets: &'m BTreeMap<ViewId, MaskSet>,
    ) -> Result<Vec<ReferenceView<'m>>, PropagationError>
    where
        'a: 'm,
    {
        let t = self.pose(target)?;
        let mut refs = Vec::with_capacity(ids.len());
        for id in ids {
            let pose = self.pose(*id)?;
            let maskset =
                masksets.get(id).ok_or_else(|| PropagationError::new(target, PropagationErrorKind::MissingView(*id)))?;
            refs.push(ReferenceView { pose, image: self.image(*id)?, maskset, distance_rad: angular_distance(&t, &pose) });
        }
        refs.sort_by(|a, b| a.distance_rad.total_cmp(&b.distance_rad).then(a.pose.id().cmp(&b.pose.id())));
        Ok(refs)
    }

    /// Up to `k` candidates within `tau_deg`, or the single nearest
    /// candidate when none qualifies.
    pub fn gather_references<'m>(
        &self,
        target: ViewId,
        candidates: &[ViewId],
        masksets: &'m BTreeMap<ViewId, MaskSet>,
    ) -> Result<Vec<ReferenceView<'m>>, PropagationError>
    where
        'a: 'm,
    {
        let geo = |e: GeometryError| PropagationError::new(target, e);
        let mut ids: Vec<ViewId> = select_references_with_distance(target, candidates, self.views, self.k, self.tau_deg)
            .map_err(geo)?
            .into_iter()
            .map(|r| r.0)
            .collect();
        if ids.is_empty() {
            ids.extend(nearest_processed(target, candidates, self.views).map_err(geo)?.map(|r| r.0));
        }
        self.references_from(target, &ids, masksets)
    }
}

/// Initial propagation along `order`: each view after the first is
/// propagated from its listed references (nearest processed view when the
/// list is empty). `masksets` must hold the first view's masks.
pub fn propagate_sequence(
    ctx: &ViewContext,
    order: &[ViewId],
    references: &BTreeMap<ViewId, Vec<ViewId>>,
    masksets: &mut BTreeMap<ViewId, MaskSet>,
    registry: &PartRegistry,
    backend: &dyn PropagationBackend,
) -> Result<(), PropagationError> {
    index_views(ctx.views).map_err(|e| PropagationError::new(order.first().copied().unwrap_or(ViewId(0)), e))?;
    for (pos, &target) in order.iter().enumerate().skip(1) {
        let listed = references.get(&target).map(Vec::as_slice).unwrap_or(&[]);
        let refs = if listed.is_empty() {
            log::debug!("view {target}: no reference within tau, using nearest processed view");
            ctx.gather_references(target, &order[..pos], masksets)?
        } else {
            ctx.references_from(target, listed, masksets)?
        };
        let job = PropagationJob { target: ctx.pose(target)?, target_image: ctx.image(target)?, references: refs, registry };
        let out = propagate_view(&job, backend)?;
        masksets.insert(target, out);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maskops::flat_color_segment;
    use crate::synthscene::{fixture_occlusion_scene, part_bitmap, render_view, RenderOptions};
    use crate::viewsphere::TraversalPlan;

    struct Fixed(MaskSet);

    impl PropagationBackend for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn propagate(&self, _: &PropagationJob) -> Result<MaskSet, PropagationErrorKind> {
            Ok(self.0.clone())
        }
    }

    fn setup() -> (Vec<ViewPose>, BTreeMap<ViewId, RgbaImage>) {
        let scene = fixture_occlusion_scene();
        let views: Vec<ViewPose> = [(0.0, 0.0), (20.0, 0.0), (150.0, 0.0)]
            .iter()
            .enumerate()
            .map(|(i, (y, p))| ViewPose::new(ViewId(i as u32), *y, *p).unwrap())
            .collect();
        let images = views.iter().map(|v| (v.id(), render_view(&scene, v, RenderOptions::default()).raster)).collect();
        (views, images)
    }

    #[test]
    fn validation_of_backend_output() {
        let (views, images) = setup();
        let mut reg = PartRegistry::new();
        let key = flat_color_segment(&images[&ViewId(0)], None, ViewId(0), &mut reg).unwrap();
        let masksets = BTreeMap::from([(ViewId(0), key.clone())]);
        let ctx = ViewContext { views: &views, images: &images, k: 6, tau_deg: 75.0 };
        let refs = ctx.gather_references(ViewId(1), &[ViewId(0)], &masksets).unwrap();
        let job = PropagationJob { target: views[1], target_image: &images[&ViewId(1)], references: refs, registry: &reg };

        let out = propagate_view(&job, &Fixed(key.clone())).unwrap();
        assert_eq!(out.view_id, ViewId(1));
        assert!(out.masks.iter().all(|m| m.view_id == ViewId(1)));

        let mut bad = key.clone();
        bad.masks[0].part_id = PartId(9);
        let e = propagate_view(&job, &Fixed(bad)).unwrap_err();
        assert_eq!(e, PropagationError::new(ViewId(1), PropagationErrorKind::UnknownPart(PartId(9))));

        let small = MaskSet::new(ViewId(1), 3, 3);
        let e = propagate_view(&job, &Fixed(small)).unwrap_err();
        assert!(matches!(e.kind, PropagationErrorKind::DimensionMismatch { .. }));

        let empty = PropagationJob { references: vec![], ..job.clone() };
        assert_eq!(propagate_view(&empty, &Fixed(key)).unwrap_err().kind, PropagationErrorKind::NoReferences);
    }

    #[test]
    fn fallback_uses_nearest_processed_view() {
        let (views, images) = setup();
        let masksets: BTreeMap<ViewId, MaskSet> =
            views.iter().map(|v| (v.id(), MaskSet::new(v.id(), 160, 160))).collect();
        let ctx = ViewContext { views: &views, images: &images, k: 6, tau_deg: 75.0 };
        let refs = ctx.gather_references(ViewId(2), &[ViewId(0), ViewId(1)], &masksets).unwrap();
        assert_eq!(refs.len(), 1);
        assert_eq!(refs[0].pose.id(), ViewId(1));
        assert!((refs[0].distance_rad - 130f64.to_radians()).abs() < 1e-9);
        let within = ctx.gather_references(ViewId(1), &[ViewId(0), ViewId(2)], &masksets).unwrap();
        assert_eq!(within.iter().map(|r| r.pose.id()).collect::<Vec<_>>(), vec![ViewId(0)]);
    }

    #[test]
    fn sequence_with_oracle_matches_ground_truth() {
        let scene = fixture_occlusion_scene();
        let views: Vec<ViewPose> =
            (0..7).map(|i| ViewPose::new(ViewId(i), i as f64 * 30.0 - 90.0, 0.0).unwrap()).collect();
        let rendered: BTreeMap<ViewId, _> =
            views.iter().map(|v| (v.id(), render_view(&scene, v, RenderOptions::default()))).collect();
        let images: BTreeMap<ViewId, RgbaImage> = rendered.iter().map(|(k, r)| (*k, r.raster.clone())).collect();
        let plan = TraversalPlan::build(&views, ViewId(3), 6, 75.0).unwrap();
        let mut reg = PartRegistry::new();
        let key = flat_color_segment(&images[&ViewId(3)], None, ViewId(3), &mut reg).unwrap();
        let mut masksets = BTreeMap::from([(ViewId(3), key)]);
        let ctx = ViewContext { views: &views, images: &images, k: 6, tau_deg: 75.0 };
        let backend = OracleBackend::new(scene.clone(), 0.0, 0);
        propagate_sequence(&ctx, &plan.order, &plan.references, &mut masksets, &reg, &backend).unwrap();
        assert_eq!(masksets.len(), 7);
        // registry ids follow key-view area order: sphere then hat
        for (id, set) in &masksets {
            if *id == ViewId(3) {
                continue;
            }
            for (part, gt) in [(PartId(1), 1), (PartId(2), 2)] {
                let truth = part_bitmap(&rendered[id].labels, PartId(gt));
                match set.get(part) {
                    Some(m) => assert_eq!(m.bitmap, truth, "view {id} part {part}"),
                    None => assert!(truth.is_empty()),
                }
            }
            assert!(set.get(PartId(3)).is_none());
        }
    }
}
