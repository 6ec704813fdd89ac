//! Scanline fill of flattened outlines, sampled at pixel centres.

use super::geom::{Point, Subpath, FLATTEN_TOLERANCE};
use super::{Canvas, DrawableElement, FillRule};
use crate::maskops::Bitmap;

/// Grid size (longest side) used when measuring filled area.
pub const AREA_RESOLUTION: u32 = 512;

/// Maps user space onto a `width`×`height` pixel grid.
#[derive(Debug, Clone, Copy)]
struct Grid {
    width: u32,
    height: u32,
    origin: Point,
    sx: f64,
    sy: f64,
}

impl Grid {
    fn new(canvas: &Canvas, width: u32, height: u32) -> Self {
        let [vx, vy, vw, vh] = canvas.user_rect();
        Self {
            width,
            height,
            origin: Point::new(vx, vy),
            sx: width as f64 / vw,
            sy: height as f64 / vh,
        }
    }

    /// Grid whose longest side has `resolution` pixels.
    fn fitted(canvas: &Canvas, resolution: u32) -> Self {
        let [_, _, vw, vh] = canvas.user_rect();
        let s = resolution as f64 / vw.max(vh);
        let w = ((vw * s).round() as u32).max(1);
        let h = ((vh * s).round() as u32).max(1);
        Self::new(canvas, w, h)
    }

    fn map(&self, p: Point) -> Point {
        Point::new((p.x - self.origin.x) * self.sx, (p.y - self.origin.y) * self.sy)
    }
}

/// Calls `span(row, x0, x1)` for every run of covered pixels `x0..x1`.
fn for_each_span(subpaths: &[Subpath], rule: FillRule, grid: &Grid, mut span: impl FnMut(u32, u32, u32)) {
    let h = grid.height as usize;
    let mut rows: Vec<Vec<(f64, i32)>> = vec![Vec::new(); h];
    for sp in subpaths {
        let n = sp.points.len();
        if n < 2 {
            continue;
        }
        for i in 0..n {
            let (p, q) = (grid.map(sp.points[i]), grid.map(sp.points[(i + 1) % n]));
            if p.y == q.y || !(p.y.is_finite() && q.y.is_finite()) {
                continue;
            }
            let (lo, hi, dir) = if p.y < q.y { (p, q, 1) } else { (q, p, -1) };
            // rows whose centre c satisfies lo.y <= c < hi.y
            let first = (lo.y - 0.5).ceil().max(0.0);
            let last = ((hi.y - 0.5).ceil() - 1.0).min(h as f64 - 1.0);
            if first > last {
                continue;
            }
            let inv = (hi.x - lo.x) / (hi.y - lo.y);
            for row in first as usize..=last as usize {
                let c = row as f64 + 0.5;
                rows[row].push((lo.x + (c - lo.y) * inv, dir));
            }
        }
    }
    let w = grid.width as f64;
    for (row, xs) in rows.iter_mut().enumerate() {
        if xs.is_empty() {
            continue;
        }
        xs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut winding = 0;
        for k in 0..xs.len() - 1 {
            winding += xs[k].1;
            let inside = match rule {
                FillRule::NonZero => winding != 0,
                FillRule::EvenOdd => winding % 2 != 0,
            };
            if !inside {
                continue;
            }
            // pixels whose centre lies in [xs[k], xs[k+1])
            let x0 = (xs[k].0 - 0.5).ceil().clamp(0.0, w);
            let x1 = (xs[k + 1].0 - 0.5).ceil().clamp(0.0, w);
            if x1 > x0 {
                span(row as u32, x0 as u32, x1 as u32);
            }
        }
    }
}

fn fill_subpaths(e: &DrawableElement) -> Vec<Subpath> {
    if e.paint.fill.is_none() {
        return Vec::new();
    }
    e.subpaths(FLATTEN_TOLERANCE)
}

/// Coverage bitmap of an element's fill on a `width`×`height` grid spanning
/// the canvas.
pub fn rasterize_element(e: &DrawableElement, canvas: &Canvas, width: u32, height: u32) -> Bitmap {
    let mut out = Bitmap::new(width, height);
    let grid = Grid::new(canvas, width, height);
    for_each_span(&fill_subpaths(e), e.paint.fill_rule, &grid, |row, x0, x1| {
        for x in x0..x1 {
            out.set(x, row, true);
        }
    });
    out
}

/// Union of the fills of several elements.
pub fn rasterize_elements<'a>(
    elements: impl IntoIterator<Item = &'a DrawableElement>,
    canvas: &Canvas,
    width: u32,
    height: u32,
) -> Bitmap {
    let mut out = Bitmap::new(width, height);
    for e in elements {
        out.union_in_place(&rasterize_element(e, canvas, width, height));
    }
    out
}

/// Fraction of the canvas covered by the element's fill, measured on a grid
/// with `resolution` pixels along the longest side.
pub fn path_fill_area_at(e: &DrawableElement, canvas: &Canvas, resolution: u32) -> f64 {
    let grid = Grid::fitted(canvas, resolution);
    let mut covered = 0u64;
    for_each_span(&fill_subpaths(e), e.paint.fill_rule, &grid, |_, x0, x1| {
        covered += (x1 - x0) as u64;
    });
    covered as f64 / (grid.width as f64 * grid.height as f64)
}

/// [`path_fill_area_at`] at [`AREA_RESOLUTION`]. Zero for unfilled or
/// degenerate elements.
pub fn path_fill_area(e: &DrawableElement, canvas: &Canvas) -> f64 {
    path_fill_area_at(e, canvas, AREA_RESOLUTION)
}
