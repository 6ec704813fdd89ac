//! Mask to vector tracing.

use std::collections::BTreeMap;
use std::process::Command;

use image::RgbaImage;

use super::geom::{Point, Transform};
use super::{parse_svg, DrawableElement, FillRule, Geometry, Paint, PathCmd, SvgError};
use crate::maskops::{Bitmap, PartMask};

/// Douglas–Peucker tolerance as a fraction of the canvas diagonal.
pub const TRACE_EPSILON_FRACTION: f64 = 0.002;

#[derive(Debug, Clone, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum TraceMode {
    #[default]
    Builtin,
    /// Shell command template with `{input_png}` and `{output_svg}`.
    External { command: String },
}

// Midpoint keys are stored doubled so they stay integral.
type Key = (i64, i64);

fn key_point(k: Key) -> Point {
    Point::new(k.0 as f64 / 2.0, k.1 as f64 / 2.0)
}

/// Oriented marching-squares segments over the pixel-centre lattice, with
/// saddle corners kept apart.
fn contour_segments(mask: &Bitmap) -> BTreeMap<Key, Key> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut next = BTreeMap::new();
    for j in -1..h {
        for i in -1..w {
            let corner = [
                mask.get_signed(i, j),
                mask.get_signed(i + 1, j),
                mask.get_signed(i + 1, j + 1),
                mask.get_signed(i, j + 1),
            ];
            if corner.iter().all(|c| *c) || corner.iter().all(|c| !*c) {
                continue;
            }
            // edge k joins corner k and k+1 (clockwise on screen)
            let mid = [
                (2 * i + 2, 2 * j + 1),
                (2 * i + 3, 2 * j + 2),
                (2 * i + 2, 2 * j + 3),
                (2 * i + 1, 2 * j + 2),
            ];
            let exits: Vec<usize> = (0..4).filter(|&k| corner[k] && !corner[(k + 1) % 4]).collect();
            let entries: Vec<usize> = (0..4).filter(|&k| !corner[k] && corner[(k + 1) % 4]).collect();
            for &e in &entries {
                let x = (1..=4).map(|d| (e + d) % 4).find(|k| exits.contains(k)).expect("paired crossing");
                next.insert(mid[e], mid[x]);
            }
        }
    }
    next
}

fn rings(mask: &Bitmap) -> Vec<Vec<Point>> {
    let mut next = contour_segments(mask);
    let mut out = Vec::new();
    while let Some((&start, _)) = next.iter().next() {
        let mut ring = vec![key_point(start)];
        let mut cur = next.remove(&start).expect("present");
        while cur != start {
            ring.push(key_point(cur));
            cur = next.remove(&cur).expect("contours are closed");
        }
        out.push(drop_collinear(ring));
    }
    out
}

fn drop_collinear(ring: Vec<Point>) -> Vec<Point> {
    let n = ring.len();
    if n < 4 {
        return ring;
    }
    (0..n)
        .filter(|&i| {
            let (a, b, c) = (ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n]);
            ((b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x)).abs() > 1e-12
        })
        .map(|i| ring[i])
        .collect()
}

fn seg_dist(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(Point::new(a.x + t * dx, a.y + t * dy))
}

fn dp_open(pts: &[Point], eps: f64, keep: &mut [bool]) {
    let mut stack = vec![(0, pts.len() - 1)];
    while let Some((s, e)) = stack.pop() {
        if e <= s + 1 {
            continue;
        }
        let (mut best, mut idx) = (0.0, s);
        for k in s + 1..e {
            let d = seg_dist(pts[k], pts[s], pts[e]);
            if d > best {
                best = d;
                idx = k;
            }
        }
        if best > eps {
            keep[idx] = true;
            stack.push((s, idx));
            stack.push((idx, e));
        }
    }
}

/// Douglas–Peucker on a closed ring, split at the vertex farthest from the
/// first one.
fn simplify_ring(ring: &[Point], eps: f64) -> Vec<Point> {
    let n = ring.len();
    if n <= 3 {
        return ring.to_vec();
    }
    let far = (1..n).max_by(|&a, &b| ring[0].dist(ring[a]).total_cmp(&ring[0].dist(ring[b]))).expect("n > 1");
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[far] = true;
    let first: Vec<Point> = ring[..=far].to_vec();
    let mut k1 = vec![false; first.len()];
    dp_open(&first, eps, &mut k1);
    let mut second: Vec<Point> = ring[far..].to_vec();
    second.push(ring[0]);
    let mut k2 = vec![false; second.len()];
    dp_open(&second, eps, &mut k2);
    for (i, k) in k1.iter().enumerate() {
        keep[i] |= *k;
    }
    for (i, k) in k2.iter().enumerate().take(second.len() - 1) {
        keep[far + i] |= *k;
    }
    ring.iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| *p).collect()
}

fn ring_area(r: &[Point]) -> f64 {
    let n = r.len();
    (0..n).map(|i| r[i].x * r[(i + 1) % n].y - r[(i + 1) % n].x * r[i].y).sum::<f64>() / 2.0
}

fn builtin(mask: &PartMask) -> Vec<DrawableElement> {
    let b = &mask.bitmap;
    let eps = TRACE_EPSILON_FRACTION * (b.width() as f64).hypot(b.height() as f64);
    let mut cmds = Vec::new();
    for ring in rings(b) {
        let r = simplify_ring(&ring, eps);
        if r.len() < 3 || ring_area(&r).abs() < 1e-9 {
            continue;
        }
        cmds.push(PathCmd::MoveTo(r[0]));
        cmds.extend(r[1..].iter().map(|p| PathCmd::LineTo(*p)));
        cmds.push(PathCmd::Close);
    }
    if cmds.is_empty() {
        return Vec::new();
    }
    let paint = Paint { fill_rule: FillRule::EvenOdd, ..Paint::fill(mask.mean_color.rgb) };
    vec![DrawableElement::new(Geometry::Path(cmds), paint)]
}

pub(crate) fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

fn external(mask: &PartMask, command: &str) -> Result<Vec<DrawableElement>, SvgError> {
    let b = &mask.bitmap;
    let (x0, y0, x1, y1) = b.bounding_box().ok_or(SvgError::EmptyMask)?;
    let (x0, y0) = (x0.saturating_sub(1), y0.saturating_sub(1));
    let (x1, y1) = ((x1 + 1).min(b.width() - 1), (y1 + 1).min(b.height() - 1));
    let (cw, ch) = (x1 - x0 + 1, y1 - y0 + 1);
    let c = mask.mean_color.rgb;
    let crop = RgbaImage::from_fn(cw, ch, |x, y| {
        if b.get(x + x0, y + y0) {
            image::Rgba([c.r, c.g, c.b, 255])
        } else {
            image::Rgba([0, 0, 0, 0])
        }
    });
    let dir = tempfile::tempdir().map_err(|e| SvgError::Trace(format!("temp dir: {e}")))?;
    let input = dir.path().join("input.png");
    let output = dir.path().join("output.svg");
    crop.save(&input).map_err(|e| SvgError::Trace(format!("writing crop: {e}")))?;
    let cmd = command
        .replace("{input_png}", &shell_quote(&input.to_string_lossy()))
        .replace("{output_svg}", &shell_quote(&output.to_string_lossy()));
    let res = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .output()
        .map_err(|e| SvgError::Trace(format!("spawning `{cmd}`: {e}")))?;
    if !res.status.success() {
        return Err(SvgError::Trace(format!(
            "`{cmd}` exited with {}: {}",
            res.status,
            String::from_utf8_lossy(&res.stderr).trim()
        )));
    }
    let bytes = std::fs::read(&output).map_err(|e| SvgError::Trace(format!("reading tracer output: {e}")))?;
    let doc = parse_svg(&bytes).map_err(|e| SvgError::Trace(format!("tracer output: {e}")))?;
    let [vx, vy, vw, vh] = doc.canvas.user_rect();
    let place = Transform::translate(x0 as f64, y0 as f64)
        .concat(&Transform::scale(cw as f64 / vw, ch as f64 / vh))
        .concat(&Transform::translate(-vx, -vy));
    Ok(doc
        .elements
        .into_iter()
        .map(|mut e| {
            e.transform = place.concat(&e.transform);
            e.group = None;
            e
        })
        .collect())
}

/// Traces a part mask with the built-in tracer: marching-squares contours
/// simplified with Douglas–Peucker, emitted as one even-odd path.
pub fn trace_part(mask: &PartMask) -> Result<Vec<DrawableElement>, SvgError> {
    trace_part_with(mask, &TraceMode::Builtin)
}

pub fn trace_part_with(mask: &PartMask, mode: &TraceMode) -> Result<Vec<DrawableElement>, SvgError> {
    if mask.bitmap.is_empty() {
        return Err(SvgError::EmptyMask);
    }
    match mode {
        TraceMode::Builtin => Ok(builtin(mask)),
        TraceMode::External { command } => external(mask, command),
    }
}

/// The canvas a traced mask lives on.
#[cfg(test)]
pub(crate) fn mask_canvas(mask: &Bitmap) -> super::Canvas {
    super::Canvas::new(mask.width() as f64, mask.height() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorsci::Rgba;
    use crate::maskops::PartId;
    use crate::vectordoc::rasterize_element;
    use crate::viewsphere::ViewId;

    fn part(b: Bitmap) -> PartMask {
        let area = b.count();
        PartMask {
            part_id: PartId(1),
            view_id: ViewId(0),
            centroid: b.centroid().unwrap_or_default(),
            bitmap: b,
            area_px: area,
            mean_color: Rgba::new(200, 10, 10, 255),
        }
    }

    fn iou(a: &Bitmap, b: &Bitmap) -> f64 {
        a.intersection_count(b) as f64 / a.union(b).count() as f64
    }

    fn contour_count(e: &DrawableElement) -> usize {
        match &e.geometry {
            Geometry::Path(c) => c.iter().filter(|c| matches!(c, PathCmd::MoveTo(_))).count(),
            _ => 0,
        }
    }

    #[test]
    fn square_traces_to_few_vertices() {
        let b = Bitmap::from_fn(100, 100, |x, y| (20..70).contains(&x) && (30..80).contains(&y));
        let els = trace_part(&part(b.clone())).unwrap();
        assert_eq!(els.len(), 1);
        let Geometry::Path(cmds) = &els[0].geometry else { panic!() };
        assert!(cmds.len() <= 10, "{}", cmds.len());
        let r = rasterize_element(&els[0], &mask_canvas(&b), 100, 100);
        assert!(iou(&r, &b) >= 0.98);
    }

    #[test]
    fn annulus_has_two_contours() {
        let b = Bitmap::from_fn(80, 80, |x, y| {
            let d2 = (x as f64 + 0.5 - 40.0).powi(2) + (y as f64 + 0.5 - 40.0).powi(2);
            (15.0 * 15.0..30.0 * 30.0).contains(&d2)
        });
        let els = trace_part(&part(b.clone())).unwrap();
        assert_eq!(contour_count(&els[0]), 2);
        assert_eq!(els[0].paint.fill_rule, FillRule::EvenOdd);
        let r = rasterize_element(&els[0], &mask_canvas(&b), 80, 80);
        assert!(iou(&r, &b) >= 0.95);
    }

    #[test]
    fn saddle_pixels_stay_separate() {
        let b = Bitmap::from_fn(4, 4, |x, y| (x, y) == (1, 1) || (x, y) == (2, 2));
        assert_eq!(rings(&b).len(), 2);
        let r = rasterize_element(&builtin(&part(b.clone()))[0], &mask_canvas(&b), 4, 4);
        assert_eq!(r, b);
    }

    #[test]
    fn unsimplified_contours_reproduce_mask() {
        let b = Bitmap::from_fn(30, 20, |x, y| (x * x + 3 * y) % 7 < 3 || (5..9).contains(&y));
        let mut cmds = Vec::new();
        for ring in rings(&b) {
            cmds.push(PathCmd::MoveTo(ring[0]));
            cmds.extend(ring[1..].iter().map(|p| PathCmd::LineTo(*p)));
            cmds.push(PathCmd::Close);
        }
        let e = DrawableElement::new(
            Geometry::Path(cmds),
            Paint { fill_rule: FillRule::EvenOdd, ..Paint::default() },
        );
        assert_eq!(rasterize_element(&e, &mask_canvas(&b), 30, 20), b);
    }

    #[test]
    fn empty_mask_rejected() {
        assert!(matches!(trace_part(&part(Bitmap::new(5, 5))), Err(SvgError::EmptyMask)));
    }

    #[test]
    fn external_tracer_output_is_offset() {
        let b = Bitmap::from_fn(50, 40, |x, y| (10..20).contains(&x) && (5..15).contains(&y));
        // stand-in tracer: a rect covering the crop's interior
        let cmd = r##"printf '<svg xmlns="http://www.w3.org/2000/svg" width="12" height="12"><rect x="1" y="1" width="10" height="10" fill="#c80a0a"/></svg>' > {output_svg}; test -s {input_png}"##;
        let els = trace_part_with(&part(b.clone()), &TraceMode::External { command: cmd.into() }).unwrap();
        let r = rasterize_element(&els[0], &mask_canvas(&b), 50, 40);
        assert_eq!(r, b);
        let fail = trace_part_with(&part(b), &TraceMode::External { command: "echo nope >&2; exit 3".into() });
        match fail {
            Err(SvgError::Trace(msg)) => assert!(msg.contains("nope")),
            other => panic!("{other:?}"),
        }
    }
}
