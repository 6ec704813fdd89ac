use std::collections::BTreeMap;

use super::{coverage_ratio, estimate_foreground, mask_iou, Bitmap, MaskSet, PartId, PartRegistry, ResidualConfig, NMS_IOU};
use crate::propagate::{propagate_view, PropagationBackend, PropagationError, PropagationErrorKind, PropagationJob, ViewContext};
use crate::viewsphere::ViewId;

#[derive(Debug, Clone, PartialEq)]
pub struct Discovery {
    pub pass: usize,
    pub view: ViewId,
    pub part: PartId,
    /// False when the mask was unioned into an overlapping existing part.
    pub new_part: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualOutcome {
    /// Passes executed, including a final pass that found nothing.
    pub passes: usize,
    pub discoveries: Vec<Discovery>,
    /// Covered fraction of each view's foreground: entry 0 before the
    /// first pass, entry `i` after pass `i`.
    pub coverage: Vec<BTreeMap<ViewId, f64>>,
    /// Set when a backend call failed; masksets keep all earlier updates.
    pub failure: Option<PropagationError>,
}

impl ResidualOutcome {
    pub fn new_parts(&self) -> Vec<PartId> {
        self.discoveries.iter().filter(|d| d.new_part).map(|d| d.part).collect()
    }
}

fn covered(masksets: &BTreeMap<ViewId, MaskSet>, fg: &BTreeMap<ViewId, Bitmap>) -> BTreeMap<ViewId, f64> {
    fg.iter()
        .map(|(v, f)| (*v, 1.0 - coverage_ratio(&masksets[v], f).expect("dimensions checked")))
        .collect()
}

/// Repeated passes over `order`: a view whose uncovered foreground exceeds
/// the threshold is re-segmented on the uncovered region, each segment
/// joins an existing part it overlaps with IoU > 0.5 or becomes a new part,
/// and new parts are propagated to every other view. Stops after a pass
/// that changes nothing, or after `max_passes`.
///
/// Masks are only added or extended.
pub fn residual_discovery(
    ctx: &ViewContext,
    order: &[ViewId],
    masksets: &mut BTreeMap<ViewId, MaskSet>,
    registry: &mut PartRegistry,
    backend: &dyn PropagationBackend,
    config: &ResidualConfig,
) -> ResidualOutcome {
    let mut outcome = ResidualOutcome { passes: 0, discoveries: Vec::new(), coverage: Vec::new(), failure: None };
    let mut fg = BTreeMap::new();
    for &v in order {
        let check = || -> Result<Bitmap, PropagationError> {
            let image = ctx.image(v)?;
            let set = masksets.get(&v).ok_or_else(|| PropagationError::new(v, PropagationErrorKind::MissingView(v)))?;
            if set.dims() != image.dimensions() {
                return Err(PropagationError::new(
                    v,
                    PropagationErrorKind::DimensionMismatch { expected: image.dimensions(), got: set.dims() },
                ));
            }
            Ok(estimate_foreground(image))
        };
        match check() {
            Ok(f) => {
                fg.insert(v, f);
            }
            Err(e) => {
                outcome.failure = Some(e);
                return outcome;
            }
        }
    }
    outcome.coverage.push(covered(masksets, &fg));

    for pass in 1..=config.max_passes {
        outcome.passes = pass;
        let mut changed = false;
        for (pos, &t) in order.iter().enumerate() {
            let set = &masksets[&t];
            let uncovered = coverage_ratio(set, &fg[&t]).expect("dimensions checked");
            if uncovered <= config.uncovered_threshold {
                continue;
            }
            let region = fg[&t].difference(&set.union());
            let found = backend.segment(ctx.image(t).expect("checked"), Some(&region), t);
            let mut fresh = Vec::new();
            for mut m in found.masks {
                let set = masksets.get_mut(&t).expect("checked");
                let host = set
                    .masks
                    .iter()
                    .filter_map(|e| mask_iou(&e.bitmap, &m.bitmap).ok().map(|iou| (iou, e.part_id)))
                    .filter(|(iou, _)| *iou > NMS_IOU)
                    .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
                if let Some((_, id)) = host {
                    let before = set.get(id).map_or(0, |e| e.area_px);
                    m.part_id = id;
                    set.merge(m);
                    if set.get(id).map_or(0, |e| e.area_px) > before {
                        changed = true;
                        outcome.discoveries.push(Discovery { pass, view: t, part: id, new_part: false });
                    }
                    continue;
                }
                match registry.allocate(m.mean_color, t) {
                    Ok(id) => {
                        m.part_id = id;
                        set.merge(m);
                        changed = true;
                        fresh.push(id);
                        outcome.discoveries.push(Discovery { pass, view: t, part: id, new_part: true });
                    }
                    Err(e) => {
                        outcome.failure = Some(PropagationError::new(t, e));
                        outcome.coverage.push(covered(masksets, &fg));
                        return outcome;
                    }
                }
            }
            for part in fresh {
                if let Err(e) = spread_part(ctx, order, pos, part, masksets, registry, backend) {
                    outcome.failure = Some(e);
                    outcome.coverage.push(covered(masksets, &fg));
                    return outcome;
                }
            }
        }
        outcome.coverage.push(covered(masksets, &fg));
        if !changed {
            break;
        }
    }
    outcome
}

/// Propagates one part to every view lacking it, walking `order` onward
/// from position `from` and wrapping around; references are views that
/// already hold the part.
fn spread_part(
    ctx: &ViewContext,
    order: &[ViewId],
    from: usize,
    part: PartId,
    masksets: &mut BTreeMap<ViewId, MaskSet>,
    registry: &PartRegistry,
    backend: &dyn PropagationBackend,
) -> Result<(), PropagationError> {
    let n = order.len();
    for step in 1..n {
        let v = order[(from + step) % n];
        if masksets[&v].get(part).is_some() {
            continue;
        }
        let holders: Vec<ViewId> =
            order.iter().copied().filter(|u| *u != v && masksets[u].get(part).is_some()).collect();
        let mask = {
            let references = ctx.gather_references(v, &holders, masksets)?;
            let job = PropagationJob { target: ctx.pose(v)?, target_image: ctx.image(v)?, references, registry };
            propagate_view(&job, backend)?.get(part).cloned()
        };
        if let Some(m) = mask {
            masksets.get_mut(&v).expect("checked").merge(m);
        }
    }
    Ok(())
}
