//! PNG label maps and rasters.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, RgbaImage};
use thiserror::Error;

use crate::maskops::{Bitmap, MaskError, MaskSet, PartId, PartMask, PartRegistry};
use crate::viewsphere::ViewId;

/// 16-bit single-channel label map: 0 is background, `n` is part `n`.
pub type LabelMap = ImageBuffer<Luma<u16>, Vec<u16>>;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Image { path: String, source: image::ImageError },
    #[error("{path}: expected a single-channel label map, found {found}")]
    NotALabelMap { path: String, found: String },
    #[error("label map is {got:?}, image is {expected:?}")]
    DimensionMismatch { expected: (u32, u32), got: (u32, u32) },
    #[error("label map refers to unregistered part {0}")]
    UnknownPart(PartId),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

fn image_err(path: &Path, source: image::ImageError) -> FormatError {
    FormatError::Image { path: path.display().to_string(), source }
}

/// Paints masks larger-first so smaller parts stay visible where they overlap.
pub fn maskset_to_labels(set: &MaskSet) -> LabelMap {
    let mut order: Vec<&PartMask> = set.masks.iter().collect();
    order.sort_by(|a, b| b.area_px.cmp(&a.area_px).then(a.part_id.cmp(&b.part_id)));
    let mut out = LabelMap::new(set.width, set.height);
    for m in order {
        for (x, y) in m.bitmap.iter_set() {
            out.put_pixel(x, y, Luma([m.part_id.0]));
        }
    }
    out
}

/// Splits a label map into per-part masks, colours averaged from `image`.
/// With a registry, unregistered ids are rejected.
pub fn labels_to_maskset(
    labels: &LabelMap,
    image: &RgbaImage,
    view_id: ViewId,
    registry: Option<&PartRegistry>,
) -> Result<MaskSet, FormatError> {
    if labels.dimensions() != image.dimensions() {
        return Err(FormatError::DimensionMismatch { expected: image.dimensions(), got: labels.dimensions() });
    }
    let (w, h) = labels.dimensions();
    let mut ids: Vec<u16> = labels.pixels().map(|p| p.0[0]).filter(|v| *v != 0).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut set = MaskSet::new(view_id, w, h);
    for id in ids {
        let part = PartId(id);
        if registry.is_some_and(|r| !r.contains(part)) {
            return Err(FormatError::UnknownPart(part));
        }
        let bitmap = Bitmap::from_fn(w, h, |x, y| labels.get_pixel(x, y).0[0] == id);
        if let Some(m) = PartMask::from_bitmap(part, view_id, bitmap, image) {
            set.masks.push(m);
        }
    }
    Ok(set)
}

pub fn write_labels(path: &Path, labels: &LabelMap) -> Result<(), FormatError> {
    labels.save(path).map_err(|e| image_err(path, e))
}

/// Reads a label map. 8-bit grayscale files are accepted and widened
/// without rescaling.
pub fn read_labels(path: &Path) -> Result<LabelMap, FormatError> {
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    match img {
        DynamicImage::ImageLuma16(l) => Ok(l),
        DynamicImage::ImageLuma8(l) => {
            let (w, h) = l.dimensions();
            Ok(LabelMap::from_fn(w, h, |x, y| Luma([l.get_pixel(x, y).0[0] as u16])))
        }
        other => Err(FormatError::NotALabelMap {
            path: path.display().to_string(),
            found: format!("{:?}", other.color()),
        }),
    }
}

pub fn write_rgba(path: &Path, image: &RgbaImage) -> Result<(), FormatError> {
    image.save(path).map_err(|e| image_err(path, e))
}

pub fn read_rgba(path: &Path) -> Result<RgbaImage, FormatError> {
    Ok(image::open(path).map_err(|e| image_err(path, e))?.to_rgba8())
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgba;

    #[test]
    fn label_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.png");
        let labels = LabelMap::from_fn(20, 10, |x, _| Luma([if x < 5 { 0 } else if x < 12 { 3 } else { 700 }]));
        write_labels(&path, &labels).unwrap();
        assert_eq!(read_labels(&path).unwrap(), labels);

        let img = RgbaImage::from_pixel(20, 10, Rgba([9, 8, 7, 255]));
        let set = labels_to_maskset(&labels, &img, ViewId(4), None).unwrap();
        assert_eq!(set.part_ids(), vec![PartId(3), PartId(700)]);
        assert_eq!(set.masks[0].area_px, 70);
        assert_eq!(maskset_to_labels(&set), labels);
        assert!(matches!(
            labels_to_maskset(&labels, &img, ViewId(4), Some(&PartRegistry::new())),
            Err(FormatError::UnknownPart(PartId(3)))
        ));
    }

    #[test]
    fn eight_bit_labels_are_not_rescaled() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l8.png");
        image::GrayImage::from_fn(4, 4, |x, _| Luma([x as u8])).save(&path).unwrap();
        let l = read_labels(&path).unwrap();
        assert_eq!(l.get_pixel(3, 0).0[0], 3);
    }
}
