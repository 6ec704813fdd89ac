//! Binary closing with a disc-shaped structuring element.

use super::Bitmap;

/// Kernel diameter for an image: 0.5% of the shorter side, rounded, bumped
/// to the next odd integer and clamped to at least 3.
pub fn closing_kernel_diameter(width: u32, height: u32) -> u32 {
    let d = (0.005 * width.min(height) as f64).round() as u32;
    let d = if d.is_multiple_of(2) { d + 1 } else { d };
    d.max(3)
}

/// Offsets of a disc of the given odd diameter.
pub fn disc_offsets(diameter: u32) -> Vec<(i64, i64)> {
    let r = (diameter / 2) as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Morphological closing (dilate, then erode) with a disc of `diameter`.
///
/// Computed on a canvas padded by the kernel radius so the result equals the
/// unbounded closing cropped to the image; this keeps the operation extensive
/// (output ⊇ input) and idempotent at the image border.
pub fn close_with(mask: &Bitmap, diameter: u32) -> Bitmap {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let r = (diameter / 2) as i64;
    let offsets = disc_offsets(diameter);
    let (pw, ph) = (w + 2 * r, h + 2 * r);
    let idx = |x: i64, y: i64| (y * pw + x) as usize;

    let mut dilated = vec![false; (pw * ph) as usize];
    for (x, y) in mask.iter_set() {
        let (cx, cy) = (x as i64 + r, y as i64 + r);
        for (dx, dy) in &offsets {
            dilated[idx(cx + dx, cy + dy)] = true;
        }
    }

    Bitmap::from_fn(mask.width(), mask.height(), |x, y| {
        let (cx, cy) = (x as i64 + r, y as i64 + r);
        offsets.iter().all(|(dx, dy)| dilated[idx(cx + dx, cy + dy)])
    })
}

/// Closing with the kernel size derived from the image dimensions.
pub fn morphological_close(mask: &Bitmap) -> Bitmap {
    close_with(mask, closing_kernel_diameter(mask.width(), mask.height()))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Textbook definitions over an explicitly padded plane.
    fn brute_close(mask: &Bitmap, diameter: u32) -> Bitmap {
        let offs = disc_offsets(diameter);
        let r = (diameter / 2) as i64;
        let (w, h) = (mask.width() as i64, mask.height() as i64);
        let dil = |x: i64, y: i64| offs.iter().any(|(dx, dy)| mask.get_signed(x - dx, y - dy));
        Bitmap::from_fn(mask.width(), mask.height(), |x, y| {
            offs.iter().all(|(dx, dy)| {
                let (px, py) = (x as i64 + dx, y as i64 + dy);
                debug_assert!(px >= -r && py >= -r && px < w + r && py < h + r);
                dil(px, py)
            })
        })
    }

    #[test]
    fn kernel_rounding_rule() {
        assert_eq!(closing_kernel_diameter(1024, 768), 5);
        assert_eq!(closing_kernel_diameter(100, 100), 3);
        assert_eq!(closing_kernel_diameter(2000, 2000), 11);
        assert_eq!(closing_kernel_diameter(1400, 1400), 7);
    }

    #[test]
    fn solid_rectangle_is_unchanged() {
        let m = Bitmap::from_fn(40, 30, |x, y| (5..25).contains(&x) && (4..20).contains(&y));
        assert_eq!(close_with(&m, 5), m);
        let edge = Bitmap::from_fn(40, 30, |x, _| x < 12);
        assert_eq!(close_with(&edge, 5), edge);
    }

    #[test]
    fn one_pixel_gap_is_bridged() {
        let m = Bitmap::from_fn(20, 9, |x, y| (2..18).contains(&x) && (2..7).contains(&y) && x != 10);
        assert_eq!(m.components().len(), 2);
        let closed = close_with(&m, 3);
        assert_eq!(closed.components().len(), 1);
        assert_eq!(closed, brute_close(&m, 3));
    }

    #[test]
    fn matches_brute_force_and_is_extensive() {
        let m = Bitmap::from_fn(23, 17, |x, y| (x * 7 + y * 3) % 5 == 0 || (x + y) % 9 == 0);
        for d in [3, 5, 7] {
            let c = close_with(&m, d);
            assert_eq!(c, brute_close(&m, d));
            assert_eq!(c.intersection(&m), m);
            assert_eq!(close_with(&c, d), c);
        }
    }
}
