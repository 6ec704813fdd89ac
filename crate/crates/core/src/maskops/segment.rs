//! Flat-colour automatic segmentation.

use std::collections::HashMap;

use image::RgbaImage;

use super::{clean_masks, rgb_of, Bitmap, MaskError, MaskSet, PartId, PartMask, PartRegistry};
use crate::colorsci::{ciede2000, LabColor, Srgb};
use crate::viewsphere::ViewId;

/// Adjacent pixels closer than this ΔE00 belong to one region.
pub const MERGE_DELTA: f64 = 2.0;
/// Pixels farther than this ΔE00 from the border colour are foreground.
pub const BACKGROUND_DELTA: f64 = 2.0;

#[derive(Default)]
struct DeltaCache {
    lab: HashMap<Srgb, LabColor>,
    delta: HashMap<(Srgb, Srgb), f64>,
}

impl DeltaCache {
    fn lab(&mut self, c: Srgb) -> LabColor {
        *self.lab.entry(c).or_insert_with(|| c.to_lab())
    }

    fn delta(&mut self, a: Srgb, b: Srgb) -> f64 {
        if a == b {
            return 0.0;
        }
        let key = if a < b { (a, b) } else { (b, a) };
        if let Some(d) = self.delta.get(&key) {
            return *d;
        }
        let d = ciede2000(self.lab(key.0), self.lab(key.1));
        self.delta.insert(key, d);
        d
    }
}

/// Foreground pixels of an image.
///
/// If any pixel is not fully opaque the alpha channel decides (alpha > 0).
/// Otherwise the most frequent border colour is taken as background and
/// pixels farther than [`BACKGROUND_DELTA`] from it are foreground.
pub fn estimate_foreground(image: &RgbaImage) -> Bitmap {
    let (w, h) = image.dimensions();
    if image.pixels().any(|p| p.0[3] < 255) {
        return Bitmap::from_fn(w, h, |x, y| image.get_pixel(x, y).0[3] > 0);
    }
    if w == 0 || h == 0 {
        return Bitmap::new(w, h);
    }
    let mut counts: HashMap<Srgb, usize> = HashMap::new();
    for y in 0..h {
        for x in 0..w {
            if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
                *counts.entry(rgb_of(image.get_pixel(x, y))).or_default() += 1;
            }
        }
    }
    // most frequent, smallest colour on ties
    let background = counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(c, _)| c)
        .expect("non-empty border");
    let mut cache = DeltaCache::default();
    Bitmap::from_fn(w, h, |x, y| {
        let c = rgb_of(image.get_pixel(x, y));
        cache.delta(c, background) > BACKGROUND_DELTA
    })
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Near-constant-colour regions of the (optionally restricted) foreground,
/// after the small-region filter, closing and NMS.
///
/// Masks carry provisional ids `1..` in raster order of their first pixel;
/// callers assign registry ids.
pub fn segment_regions(image: &RgbaImage, region: Option<&Bitmap>, view_id: ViewId) -> MaskSet {
    let (w, h) = image.dimensions();
    let mut fg = estimate_foreground(image);
    if let Some(r) = region {
        fg = fg.intersection(r);
    }
    let (wu, hu) = (w as usize, h as usize);
    let mut parent: Vec<usize> = (0..wu * hu).collect();
    let mut cache = DeltaCache::default();
    let colors: Vec<Srgb> = image.pixels().map(rgb_of).collect();
    let on = fg.as_slice();
    for y in 0..hu {
        for x in 0..wu {
            let i = y * wu + x;
            if !on[i] {
                continue;
            }
            for j in [(x + 1 < wu).then(|| i + 1), (y + 1 < hu).then(|| i + wu)].into_iter().flatten() {
                if on[j] && cache.delta(colors[i], colors[j]) < MERGE_DELTA {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri.max(rj)] = ri.min(rj);
                    }
                }
            }
        }
    }

    let mut index_of_root: HashMap<usize, usize> = HashMap::new();
    let mut bitmaps: Vec<Bitmap> = Vec::new();
    for i in 0..wu * hu {
        if !on[i] {
            continue;
        }
        let root = find(&mut parent, i);
        let k = *index_of_root.entry(root).or_insert_with(|| {
            bitmaps.push(Bitmap::new(w, h));
            bitmaps.len() - 1
        });
        bitmaps[k].set((i % wu) as u32, (i / wu) as u32, true);
    }

    let masks = bitmaps
        .into_iter()
        .enumerate()
        .filter_map(|(k, b)| PartMask::from_bitmap(PartId(k as u16 + 1), view_id, b, image))
        .collect();
    clean_masks(&MaskSet { view_id, width: w, height: h, masks })
}

/// Segments an image into flat-colour parts and registers each as a new part.
///
/// Ids are allocated largest region first.
pub fn flat_color_segment(
    image: &RgbaImage,
    region: Option<&Bitmap>,
    view_id: ViewId,
    registry: &mut PartRegistry,
) -> Result<MaskSet, MaskError> {
    let mut set = segment_regions(image, region, view_id);
    for m in &mut set.masks {
        m.part_id = registry.allocate(m.mean_color, view_id)?;
    }
    set.masks.sort_by_key(|m| m.part_id);
    Ok(set)
}
