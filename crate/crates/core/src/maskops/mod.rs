//! Part masks: data model, key-frame clean-up (small-region filter, closing,
//! non-maximum suppression), foreground estimation and coverage, flat-colour
//! segmentation and the residual discovery loop.

mod bitmap;
mod morphology;
mod residual;
mod segment;

use std::collections::BTreeMap;
use std::fmt;

use image::RgbaImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::colorsci::{Rgba, Srgb};
use crate::viewsphere::ViewId;

pub use bitmap::Bitmap;
pub use morphology::{close_with, closing_kernel_diameter, disc_offsets, morphological_close};
pub use residual::{residual_discovery, Discovery, ResidualOutcome};
pub use segment::{
    estimate_foreground, flat_color_segment, segment_regions, BACKGROUND_DELTA, MERGE_DELTA,
};

/// Default IoU above which a lower-ranked mask is suppressed.
pub const NMS_IOU: f64 = 0.5;
/// Absolute floor of the small-region filter, in pixels.
pub const MIN_REGION_PX: usize = 200;
/// Relative floor of the small-region filter, as a fraction of image area.
pub const MIN_REGION_FRACTION: f64 = 0.0005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartId(pub u16);

impl PartId {
    pub const BACKGROUND: PartId = PartId(0);
}

impl fmt::Display for PartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MaskError {
    #[error("IoU is undefined for two empty masks")]
    UndefinedIou,
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch { expected: (u32, u32), got: (u32, u32) },
    #[error("duplicate part id {0} in one view")]
    DuplicatePart(PartId),
    #[error("part registry is full")]
    RegistryFull,
    #[error("malformed registry: {0}")]
    Registry(String),
}

/// One part's binary mask in one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartMask {
    pub part_id: PartId,
    pub view_id: ViewId,
    pub bitmap: Bitmap,
    pub area_px: usize,
    pub mean_color: Rgba,
    pub centroid: (f64, f64),
}

impl PartMask {
    /// Builds a mask, averaging colour over its pixels in `image`.
    /// Returns `None` for an empty bitmap.
    pub fn from_bitmap(
        part_id: PartId,
        view_id: ViewId,
        bitmap: Bitmap,
        image: &RgbaImage,
    ) -> Option<Self> {
        let mut sum = [0u64; 4];
        let mut n = 0u64;
        for (x, y) in bitmap.iter_set() {
            let p = image.get_pixel(x, y).0;
            for c in 0..4 {
                sum[c] += p[c] as u64;
            }
            n += 1;
        }
        if n == 0 {
            return None;
        }
        let avg = |c: usize| ((sum[c] + n / 2) / n) as u8;
        let color = Rgba::new(avg(0), avg(1), avg(2), avg(3));
        Self::with_color(part_id, view_id, bitmap, color)
    }

    pub fn with_color(
        part_id: PartId,
        view_id: ViewId,
        bitmap: Bitmap,
        mean_color: Rgba,
    ) -> Option<Self> {
        let centroid = bitmap.centroid()?;
        Some(Self { part_id, view_id, area_px: bitmap.count(), bitmap, mean_color, centroid })
    }

    /// Replaces the bitmap, recomputing area and centroid; keeps the colour.
    pub fn replace_bitmap(&self, bitmap: Bitmap) -> Option<Self> {
        Self::with_color(self.part_id, self.view_id, bitmap, self.mean_color)
    }
}

/// All part masks of one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSet {
    pub view_id: ViewId,
    pub width: u32,
    pub height: u32,
    pub masks: Vec<PartMask>,
}

impl MaskSet {
    pub fn new(view_id: ViewId, width: u32, height: u32) -> Self {
        Self { view_id, width, height, masks: Vec::new() }
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn get(&self, part: PartId) -> Option<&PartMask> {
        self.masks.iter().find(|m| m.part_id == part)
    }

    pub fn part_ids(&self) -> Vec<PartId> {
        self.masks.iter().map(|m| m.part_id).collect()
    }

    pub fn union(&self) -> Bitmap {
        let mut u = Bitmap::new(self.width, self.height);
        for m in &self.masks {
            u.union_in_place(&m.bitmap);
        }
        u
    }

    /// Adds a mask, or unions it into an existing mask with the same id.
    pub fn merge(&mut self, mask: PartMask) {
        if let Some(existing) = self.masks.iter_mut().find(|m| m.part_id == mask.part_id) {
            let merged = existing.bitmap.union(&mask.bitmap);
            *existing = existing.replace_bitmap(merged).expect("union of non-empty masks");
        } else {
            self.masks.push(PartMask { view_id: self.view_id, ..mask });
        }
    }

    pub fn validate(&self) -> Result<(), MaskError> {
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.masks {
            if m.bitmap.dims() != self.dims() {
                return Err(MaskError::DimensionMismatch {
                    expected: self.dims(),
                    got: m.bitmap.dims(),
                });
            }
            if !seen.insert(m.part_id) {
                return Err(MaskError::DuplicatePart(m.part_id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub canonical_color: Rgba,
    pub first_seen_view: ViewId,
}

/// Global part identities; ids are dense from 1, 0 is background.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartRegistry {
    entries: BTreeMap<PartId, RegistryEntry>,
}

#[derive(Serialize, Deserialize)]
struct RegistryFile {
    parts: Vec<RegistryFileEntry>,
}

#[derive(Serialize, Deserialize)]
struct RegistryFileEntry {
    id: u16,
    color: [u8; 4],
    first_seen: u32,
}

impl PartRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn allocate(&mut self, color: Rgba, view: ViewId) -> Result<PartId, MaskError> {
        let next = u16::try_from(self.entries.len() + 1).map_err(|_| MaskError::RegistryFull)?;
        let id = PartId(next);
        self.entries.insert(id, RegistryEntry { canonical_color: color, first_seen_view: view });
        Ok(id)
    }

    pub fn contains(&self, id: PartId) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn get(&self, id: PartId) -> Option<&RegistryEntry> {
        self.entries.get(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = PartId> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> String {
        let file = RegistryFile {
            parts: self
                .entries
                .iter()
                .map(|(id, e)| {
                    let c = e.canonical_color;
                    RegistryFileEntry {
                        id: id.0,
                        color: [c.rgb.r, c.rgb.g, c.rgb.b, c.a],
                        first_seen: e.first_seen_view.0,
                    }
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("registry serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MaskError> {
        let file: RegistryFile =
            serde_json::from_str(text).map_err(|e| MaskError::Registry(e.to_string()))?;
        let mut entries = BTreeMap::new();
        for (i, p) in file.parts.into_iter().enumerate() {
            if p.id as usize != i + 1 {
                return Err(MaskError::Registry(format!("ids must be dense from 1, found {}", p.id)));
            }
            let [r, g, b, a] = p.color;
            entries.insert(
                PartId(p.id),
                RegistryEntry {
                    canonical_color: Rgba::new(r, g, b, a),
                    first_seen_view: ViewId(p.first_seen),
                },
            );
        }
        Ok(Self { entries })
    }
}

/// Uncovered-foreground threshold and pass cap of the residual loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResidualConfig {
    pub uncovered_threshold: f64,
    pub max_passes: usize,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self { uncovered_threshold: 0.05, max_passes: 3 }
    }
}

/// Minimum region size for a W×H image.
pub fn min_region_px(width: u32, height: u32) -> usize {
    let rel = (MIN_REGION_FRACTION * width as f64 * height as f64).ceil() as usize;
    rel.max(MIN_REGION_PX)
}

/// Drops connected components (and then whole masks) below the size floor.
pub fn filter_small_regions(set: &MaskSet) -> MaskSet {
    let floor = min_region_px(set.width, set.height);
    let masks = set
        .masks
        .iter()
        .filter_map(|m| {
            let mut kept = Bitmap::new(set.width, set.height);
            let mut any = false;
            for comp in m.bitmap.components() {
                if comp.count() >= floor {
                    kept.union_in_place(&comp);
                    any = true;
                }
            }
            if !any {
                None
            } else if kept == m.bitmap {
                Some(m.clone())
            } else {
                m.replace_bitmap(kept)
            }
        })
        .collect();
    MaskSet { masks, ..set.clone() }
}

/// |a ∩ b| / |a ∪ b|.
pub fn mask_iou(a: &Bitmap, b: &Bitmap) -> Result<f64, MaskError> {
    if a.dims() != b.dims() {
        return Err(MaskError::DimensionMismatch { expected: a.dims(), got: b.dims() });
    }
    let inter = a.intersection_count(b);
    let union = a.count() + b.count() - inter;
    if union == 0 {
        return Err(MaskError::UndefinedIou);
    }
    Ok(inter as f64 / union as f64)
}

fn iou_or_zero(a: &Bitmap, b: &Bitmap) -> f64 {
    mask_iou(a, b).unwrap_or(0.0)
}

/// Greedy non-maximum suppression, largest area first (lower id on ties).
pub fn nms_masks(set: &MaskSet, iou_threshold: f64) -> MaskSet {
    let mut order: Vec<&PartMask> = set.masks.iter().collect();
    order.sort_by(|a, b| b.area_px.cmp(&a.area_px).then(a.part_id.cmp(&b.part_id)));
    let mut kept: Vec<&PartMask> = Vec::new();
    for cand in order {
        if kept.iter().all(|k| iou_or_zero(&k.bitmap, &cand.bitmap) <= iou_threshold) {
            kept.push(cand);
        }
    }
    MaskSet { masks: kept.into_iter().cloned().collect(), ..set.clone() }
}

/// Small-region filter, closing of every mask, then NMS.
pub fn clean_masks(set: &MaskSet) -> MaskSet {
    let filtered = filter_small_regions(set);
    let closed = MaskSet {
        masks: filtered
            .masks
            .iter()
            .map(|m| {
                let c = morphological_close(&m.bitmap);
                if c == m.bitmap {
                    m.clone()
                } else {
                    m.replace_bitmap(c).expect("closing is extensive")
                }
            })
            .collect(),
        ..filtered
    };
    nms_masks(&closed, NMS_IOU)
}

/// Fraction of the foreground left uncovered by the union of all masks.
pub fn coverage_ratio(set: &MaskSet, foreground: &Bitmap) -> Result<f64, MaskError> {
    if set.dims() != foreground.dims() {
        return Err(MaskError::DimensionMismatch { expected: foreground.dims(), got: set.dims() });
    }
    let fg = foreground.count();
    if fg == 0 {
        return Ok(0.0);
    }
    let covered = foreground.intersection_count(&set.union());
    Ok((fg - covered) as f64 / fg as f64)
}

pub(crate) fn rgb_of(p: &image::Rgba<u8>) -> Srgb {
    Srgb::new(p.0[0], p.0[1], p.0[2])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(w: u32, h: u32, x0: u32, y0: u32, x1: u32, y1: u32) -> Bitmap {
        Bitmap::from_fn(w, h, |x, y| (x0..x1).contains(&x) && (y0..y1).contains(&y))
    }

    fn mask(id: u16, bitmap: Bitmap) -> PartMask {
        PartMask::with_color(PartId(id), ViewId(0), bitmap, Rgba::new(1, 2, 3, 255)).unwrap()
    }

    fn set_of(w: u32, h: u32, masks: Vec<PartMask>) -> MaskSet {
        MaskSet { view_id: ViewId(0), width: w, height: h, masks }
    }

    #[test]
    fn small_region_threshold_arithmetic() {
        assert_eq!(min_region_px(1000, 1000), 500);
        assert_eq!(min_region_px(400, 400), 200);
        let big = set_of(1000, 1000, vec![mask(1, rect(1000, 1000, 0, 0, 30, 10))]);
        assert!(filter_small_regions(&big).masks.is_empty());
        let small = set_of(400, 400, vec![mask(1, rect(400, 400, 0, 0, 30, 10))]);
        assert_eq!(filter_small_regions(&small).masks.len(), 1);
    }

    #[test]
    fn small_components_inside_a_mask_are_dropped() {
        let b = rect(100, 100, 0, 0, 20, 20).union(&rect(100, 100, 50, 50, 55, 55));
        let set = set_of(100, 100, vec![mask(1, b)]);
        let out = filter_small_regions(&set);
        assert_eq!(out.masks[0].area_px, 400);
        assert_eq!(filter_small_regions(&out), out);
    }

    #[test]
    fn iou_examples() {
        let a = rect(20, 20, 0, 0, 10, 10);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(mask_iou(&a, &rect(20, 20, 10, 10, 20, 20)).unwrap(), 0.0);
        // |a| = 100, |b| = 60, overlap 50
        let b = rect(20, 20, 5, 0, 10, 10).union(&rect(20, 20, 12, 0, 14, 5));
        assert_eq!(b.count(), 60);
        assert!((mask_iou(&a, &b).unwrap() - 50.0 / 110.0).abs() < 1e-12);
        let e = Bitmap::new(20, 20);
        assert_eq!(mask_iou(&e, &e), Err(MaskError::UndefinedIou));
    }

    #[test]
    fn nms_examples() {
        let a = rect(30, 30, 0, 0, 10, 10);
        let dup = set_of(30, 30, vec![mask(2, a.clone()), mask(1, a.clone())]);
        assert_eq!(nms_masks(&dup, NMS_IOU).part_ids(), vec![PartId(1)]);

        let disjoint = set_of(30, 30, vec![mask(1, a.clone()), mask(2, rect(30, 30, 20, 20, 30, 30))]);
        assert_eq!(nms_masks(&disjoint, NMS_IOU).masks.len(), 2);

        // nested chain: |A| = 100, |B| = 60, |C| = 30, B and C inside A
        let big = rect(30, 30, 0, 0, 10, 10);
        let mid = rect(30, 30, 0, 0, 6, 10);
        let small = rect(30, 30, 0, 0, 3, 10);
        assert!((mask_iou(&big, &mid).unwrap() - 0.6).abs() < 1e-12);
        assert!((mask_iou(&big, &small).unwrap() - 0.3).abs() < 1e-12);
        assert!((mask_iou(&mid, &small).unwrap() - 0.5).abs() < 1e-12);
        let chain = set_of(30, 30, vec![mask(1, big), mask(2, mid), mask(3, small)]);
        assert_eq!(nms_masks(&chain, NMS_IOU).part_ids(), vec![PartId(1), PartId(3)]);
    }

    #[test]
    fn coverage_examples() {
        let fg = rect(100, 10, 0, 0, 100, 10);
        let covered = set_of(100, 10, vec![mask(1, rect(100, 10, 0, 0, 93, 10))]);
        assert!((coverage_ratio(&covered, &fg).unwrap() - 0.07).abs() < 1e-12);
        let full = set_of(100, 10, vec![mask(1, fg.clone())]);
        assert_eq!(coverage_ratio(&full, &fg).unwrap(), 0.0);
        assert_eq!(coverage_ratio(&set_of(100, 10, vec![]), &fg).unwrap(), 1.0);
        assert_eq!(coverage_ratio(&full, &Bitmap::new(100, 10)).unwrap(), 0.0);
    }

    #[test]
    fn registry_json_roundtrip() {
        let mut reg = PartRegistry::new();
        assert_eq!(reg.allocate(Rgba::new(255, 0, 0, 255), ViewId(0)).unwrap(), PartId(1));
        assert_eq!(reg.allocate(Rgba::new(0, 0, 255, 200), ViewId(4)).unwrap(), PartId(2));
        let text = reg.to_json();
        assert!(text.contains("\"first_seen\": 4"));
        assert_eq!(PartRegistry::from_json(&text).unwrap(), reg);
        assert!(PartRegistry::from_json(r#"{"parts":[{"id":2,"color":[0,0,0,0],"first_seen":0}]}"#)
            .is_err());
    }

    #[test]
    fn merge_unions_same_part() {
        let mut set = set_of(20, 20, vec![mask(1, rect(20, 20, 0, 0, 5, 5))]);
        set.merge(mask(1, rect(20, 20, 5, 0, 10, 5)));
        set.merge(mask(2, rect(20, 20, 15, 15, 20, 20)));
        assert_eq!(set.masks.len(), 2);
        assert_eq!(set.get(PartId(1)).unwrap().area_px, 50);
        set.validate().unwrap();
    }
}
