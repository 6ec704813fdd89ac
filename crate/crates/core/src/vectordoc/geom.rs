//! Affine transforms and curve flattening.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{DrawableElement, Geometry, PathCmd};

/// Maximum distance between a curve and its polyline approximation, in
/// user units.
pub const FLATTEN_TOLERANCE: f64 = 0.25;

const MAX_SEGMENTS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, o: Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    fn lerp(self, o: Point, t: f64) -> Point {
        Point::new(self.x + (o.x - self.x) * t, self.y + (o.y - self.y) * t)
    }
}

/// `[a b c d e f]`, mapping `(x, y)` to `(a x + c y + e, b x + d y + f)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform(pub [f64; 6]);

impl Default for Transform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Transform {
    pub const IDENTITY: Transform = Transform([1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);

    pub fn translate(tx: f64, ty: f64) -> Self {
        Transform([1.0, 0.0, 0.0, 1.0, tx, ty])
    }

    pub fn scale(sx: f64, sy: f64) -> Self {
        Transform([sx, 0.0, 0.0, sy, 0.0, 0.0])
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    /// `self ∘ inner`: apply `inner` first, then `self`.
    pub fn concat(&self, inner: &Transform) -> Transform {
        let [a, b, c, d, e, f] = self.0;
        let [a2, b2, c2, d2, e2, f2] = inner.0;
        Transform([
            a * a2 + c * b2,
            b * a2 + d * b2,
            a * c2 + c * d2,
            b * c2 + d * d2,
            a * e2 + c * f2 + e,
            b * e2 + d * f2 + f,
        ])
    }

    pub fn apply(&self, p: Point) -> Point {
        let [a, b, c, d, e, f] = self.0;
        Point::new(a * p.x + c * p.y + e, b * p.x + d * p.y + f)
    }

    /// Geometric mean scale factor.
    pub fn mean_scale(&self) -> f64 {
        let [a, b, c, d, _, _] = self.0;
        (a * d - b * c).abs().sqrt()
    }
}

/// A flattened polyline. Closed subpaths imply an edge back to the start.
#[derive(Debug, Clone, PartialEq)]
pub struct Subpath {
    pub points: Vec<Point>,
    pub closed: bool,
}

impl Subpath {
    pub fn length(&self) -> f64 {
        let mut len: f64 = self.points.windows(2).map(|w| w[0].dist(w[1])).sum();
        if self.closed && self.points.len() > 1 {
            len += self.points[self.points.len() - 1].dist(self.points[0]);
        }
        len
    }

    /// Signed shoelace area (positive for counter-clockwise in y-up axes).
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        let mut s = 0.0;
        for i in 0..n {
            let (p, q) = (self.points[i], self.points[(i + 1) % n]);
            s += p.x * q.y - q.x * p.y;
        }
        s / 2.0
    }
}

fn segments_for(n: f64) -> usize {
    if n.is_finite() {
        (n.ceil() as usize).clamp(1, MAX_SEGMENTS)
    } else {
        1
    }
}

fn flatten_quad(out: &mut Vec<Point>, p0: Point, p1: Point, p2: Point, tol: f64) {
    let m = (p0.x - 2.0 * p1.x + p2.x).hypot(p0.y - 2.0 * p1.y + p2.y);
    let n = segments_for((0.25 * m / tol).sqrt());
    for i in 1..=n {
        let t = i as f64 / n as f64;
        out.push(p0.lerp(p1, t).lerp(p1.lerp(p2, t), t));
    }
}

fn flatten_cubic(out: &mut Vec<Point>, p: [Point; 4], tol: f64) {
    let dd = |a: Point, b: Point, c: Point| (a.x - 2.0 * b.x + c.x).hypot(a.y - 2.0 * b.y + c.y);
    let m = dd(p[0], p[1], p[2]).max(dd(p[1], p[2], p[3]));
    let n = segments_for((0.75 * m / tol).sqrt());
    for i in 1..=n {
        let t = i as f64 / n as f64;
        let s = 1.0 - t;
        let (a, b, c, d) = (s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t);
        out.push(Point::new(
            a * p[0].x + b * p[1].x + c * p[2].x + d * p[3].x,
            a * p[0].y + b * p[1].y + c * p[2].y + d * p[3].y,
        ));
    }
}

fn arc_steps(radius: f64, sweep: f64, tol: f64) -> usize {
    if radius <= tol {
        return segments_for(sweep.abs() / (PI / 2.0));
    }
    let step = 2.0 * (1.0 - tol / radius).acos();
    segments_for(sweep.abs() / step)
}

/// Endpoint arc parameterisation to points, excluding the start point.
#[allow(clippy::too_many_arguments)]
fn flatten_arc(
    out: &mut Vec<Point>,
    from: Point,
    mut rx: f64,
    mut ry: f64,
    rotation_deg: f64,
    large_arc: bool,
    sweep: bool,
    to: Point,
    tol: f64,
) {
    rx = rx.abs();
    ry = ry.abs();
    if from == to {
        return;
    }
    if rx == 0.0 || ry == 0.0 {
        out.push(to);
        return;
    }
    let phi = rotation_deg.to_radians();
    let (sp, cp) = phi.sin_cos();
    let dx = (from.x - to.x) / 2.0;
    let dy = (from.y - to.y) / 2.0;
    let x1 = cp * dx + sp * dy;
    let y1 = -sp * dx + cp * dy;
    let lambda = (x1 * x1) / (rx * rx) + (y1 * y1) / (ry * ry);
    if lambda > 1.0 {
        let s = lambda.sqrt();
        rx *= s;
        ry *= s;
    }
    let num = rx * rx * ry * ry - rx * rx * y1 * y1 - ry * ry * x1 * x1;
    let den = rx * rx * y1 * y1 + ry * ry * x1 * x1;
    let mut coef = (num / den).max(0.0).sqrt();
    if large_arc == sweep {
        coef = -coef;
    }
    let cxp = coef * rx * y1 / ry;
    let cyp = -coef * ry * x1 / rx;
    let cx = cp * cxp - sp * cyp + (from.x + to.x) / 2.0;
    let cy = sp * cxp + cp * cyp + (from.y + to.y) / 2.0;

    let angle = |ux: f64, uy: f64, vx: f64, vy: f64| (ux * vy - uy * vx).atan2(ux * vx + uy * vy);
    let theta1 = angle(1.0, 0.0, (x1 - cxp) / rx, (y1 - cyp) / ry);
    let mut dtheta = angle((x1 - cxp) / rx, (y1 - cyp) / ry, (-x1 - cxp) / rx, (-y1 - cyp) / ry);
    if !sweep && dtheta > 0.0 {
        dtheta -= 2.0 * PI;
    } else if sweep && dtheta < 0.0 {
        dtheta += 2.0 * PI;
    }

    let n = arc_steps(rx.max(ry), dtheta, tol);
    for i in 1..n {
        let t = theta1 + dtheta * i as f64 / n as f64;
        let (st, ct) = t.sin_cos();
        out.push(Point::new(cx + rx * ct * cp - ry * st * sp, cy + rx * ct * sp + ry * st * cp));
    }
    out.push(to);
}

fn ellipse_ring(cx: f64, cy: f64, rx: f64, ry: f64, tol: f64) -> Vec<Point> {
    let n = arc_steps(rx.max(ry), 2.0 * PI, tol).max(8);
    (0..n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            Point::new(cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

/// Path commands tracing a (possibly rounded) rectangle.
pub(crate) fn rect_commands(x: f64, y: f64, w: f64, h: f64, rx: f64, ry: f64) -> Vec<PathCmd> {
    use PathCmd::*;
    let p = Point::new;
    if rx <= 0.0 || ry <= 0.0 {
        return vec![
            MoveTo(p(x, y)),
            LineTo(p(x + w, y)),
            LineTo(p(x + w, y + h)),
            LineTo(p(x, y + h)),
            Close,
        ];
    }
    let arc = |to: Point| ArcTo { rx, ry, rotation: 0.0, large_arc: false, sweep: true, to };
    vec![
        MoveTo(p(x + rx, y)),
        LineTo(p(x + w - rx, y)),
        arc(p(x + w, y + ry)),
        LineTo(p(x + w, y + h - ry)),
        arc(p(x + w - rx, y + h)),
        LineTo(p(x + rx, y + h)),
        arc(p(x, y + h - ry)),
        LineTo(p(x, y + ry)),
        arc(p(x + rx, y)),
        Close,
    ]
}

/// Flattens path commands into subpaths.
pub(crate) fn flatten_commands(cmds: &[PathCmd], tol: f64) -> Vec<Subpath> {
    let mut out = Vec::new();
    let mut cur: Vec<Point> = Vec::new();
    let mut start = Point::default();
    let mut pos = Point::default();
    let flush = |cur: &mut Vec<Point>, out: &mut Vec<Subpath>, closed: bool| {
        if cur.len() > 1 || (closed && !cur.is_empty()) {
            out.push(Subpath { points: std::mem::take(cur), closed });
        } else {
            cur.clear();
        }
    };
    for cmd in cmds {
        match *cmd {
            PathCmd::MoveTo(p) => {
                flush(&mut cur, &mut out, false);
                cur.push(p);
                start = p;
                pos = p;
            }
            PathCmd::Close => {
                flush(&mut cur, &mut out, true);
                pos = start;
            }
            _ => {
                if cur.is_empty() {
                    cur.push(pos);
                    start = pos;
                }
                match *cmd {
                    PathCmd::LineTo(p) => cur.push(p),
                    PathCmd::QuadTo(c, p) => flatten_quad(&mut cur, pos, c, p, tol),
                    PathCmd::CubicTo(c1, c2, p) => flatten_cubic(&mut cur, [pos, c1, c2, p], tol),
                    PathCmd::ArcTo { rx, ry, rotation, large_arc, sweep, to } => {
                        flatten_arc(&mut cur, pos, rx, ry, rotation, large_arc, sweep, to, tol)
                    }
                    PathCmd::MoveTo(_) | PathCmd::Close => unreachable!(),
                }
                pos = *cur.last().expect("non-empty");
            }
        }
    }
    flush(&mut cur, &mut out, false);
    out
}

impl Geometry {
    /// Flattened outline in local coordinates.
    pub fn subpaths(&self, tol: f64) -> Vec<Subpath> {
        match self {
            Geometry::Path(cmds) => flatten_commands(cmds, tol),
            Geometry::Rect { x, y, width, height, rx, ry } => {
                if *width <= 0.0 || *height <= 0.0 {
                    return Vec::new();
                }
                flatten_commands(&rect_commands(*x, *y, *width, *height, *rx, *ry), tol)
            }
            Geometry::Circle { cx, cy, r } => {
                if *r <= 0.0 {
                    return Vec::new();
                }
                vec![Subpath { points: ellipse_ring(*cx, *cy, *r, *r, tol), closed: true }]
            }
            Geometry::Ellipse { cx, cy, rx, ry } => {
                if *rx <= 0.0 || *ry <= 0.0 {
                    return Vec::new();
                }
                vec![Subpath { points: ellipse_ring(*cx, *cy, *rx, *ry, tol), closed: true }]
            }
            Geometry::Polygon(pts) => vec![Subpath { points: pts.clone(), closed: true }],
            Geometry::Polyline(pts) => vec![Subpath { points: pts.clone(), closed: false }],
            Geometry::Line { x1, y1, x2, y2 } => vec![Subpath {
                points: vec![Point::new(*x1, *y1), Point::new(*x2, *y2)],
                closed: false,
            }],
        }
    }
}

impl DrawableElement {
    /// Flattened outline in canvas user space.
    pub fn subpaths(&self, tol: f64) -> Vec<Subpath> {
        let scale = self.transform.mean_scale();
        let local_tol = if scale > 1e-12 { tol / scale } else { tol };
        let mut subs = self.geometry.subpaths(local_tol);
        if !self.transform.is_identity() {
            for s in &mut subs {
                for p in &mut s.points {
                    *p = self.transform.apply(*p);
                }
            }
        }
        subs
    }

    /// Total outline length in user units.
    pub fn outline_length(&self) -> f64 {
        self.subpaths(FLATTEN_TOLERANCE).iter().map(Subpath::length).sum()
    }
}
