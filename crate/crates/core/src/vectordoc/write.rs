//! Canonical SVG serialization.

use std::fmt::Write as _;

use super::{DrawableElement, FillRule, Geometry, PathCmd, VectorDocument};
use super::geom::Point;
use crate::colorsci::Srgb;

/// Formats a number with 6 significant digits and no trailing zeros.
pub fn format_number(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return "0".to_string();
    }
    let digits = 6;
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (digits - 1 - magnitude).max(0) as usize;
    let mut s = format!("{:.*}", decimals, v);
    // rounding may bump the magnitude (e.g. 999999.5)
    if decimals > 0 {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    } else if magnitude >= digits {
        let scale = 10f64.powi(magnitude - digits + 1);
        s = format!("{:.0}", (v / scale).round() * scale);
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn color(c: Option<Srgb>) -> String {
    c.map_or_else(|| "none".to_string(), |c| c.to_hex())
}

fn pt(out: &mut String, p: Point) {
    let _ = write!(out, "{} {}", format_number(p.x), format_number(p.y));
}

fn path_data(cmds: &[PathCmd]) -> String {
    let mut d = String::new();
    for (i, c) in cmds.iter().enumerate() {
        if i > 0 {
            d.push(' ');
        }
        match *c {
            PathCmd::MoveTo(p) => {
                d.push_str("M ");
                pt(&mut d, p);
            }
            PathCmd::LineTo(p) => {
                d.push_str("L ");
                pt(&mut d, p);
            }
            PathCmd::CubicTo(a, b, p) => {
                d.push_str("C ");
                pt(&mut d, a);
                d.push(' ');
                pt(&mut d, b);
                d.push(' ');
                pt(&mut d, p);
            }
            PathCmd::QuadTo(a, p) => {
                d.push_str("Q ");
                pt(&mut d, a);
                d.push(' ');
                pt(&mut d, p);
            }
            PathCmd::ArcTo { rx, ry, rotation, large_arc, sweep, to } => {
                let _ = write!(
                    d,
                    "A {} {} {} {} {} ",
                    format_number(rx),
                    format_number(ry),
                    format_number(rotation),
                    large_arc as u8,
                    sweep as u8
                );
                pt(&mut d, to);
            }
            PathCmd::Close => d.push('Z'),
        }
    }
    d
}

fn points(pts: &[Point]) -> String {
    let mut s = String::new();
    for (i, p) in pts.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{},{}", format_number(p.x), format_number(p.y));
    }
    s
}

fn element(out: &mut String, e: &DrawableElement, indent: &str) {
    let n = format_number;
    let _ = write!(out, "{indent}<{}", e.kind().tag());
    match &e.geometry {
        Geometry::Path(cmds) => {
            let _ = write!(out, r#" d="{}""#, path_data(cmds));
        }
        Geometry::Rect { x, y, width, height, rx, ry } => {
            let _ = write!(out, r#" x="{}" y="{}" width="{}" height="{}""#, n(*x), n(*y), n(*width), n(*height));
            if *rx != 0.0 || *ry != 0.0 {
                let _ = write!(out, r#" rx="{}" ry="{}""#, n(*rx), n(*ry));
            }
        }
        Geometry::Circle { cx, cy, r } => {
            let _ = write!(out, r#" cx="{}" cy="{}" r="{}""#, n(*cx), n(*cy), n(*r));
        }
        Geometry::Ellipse { cx, cy, rx, ry } => {
            let _ = write!(out, r#" cx="{}" cy="{}" rx="{}" ry="{}""#, n(*cx), n(*cy), n(*rx), n(*ry));
        }
        Geometry::Polygon(p) | Geometry::Polyline(p) => {
            let _ = write!(out, r#" points="{}""#, points(p));
        }
        Geometry::Line { x1, y1, x2, y2 } => {
            let _ = write!(out, r#" x1="{}" y1="{}" x2="{}" y2="{}""#, n(*x1), n(*y1), n(*x2), n(*y2));
        }
    }
    let p = &e.paint;
    let rule = match p.fill_rule {
        FillRule::NonZero => "nonzero",
        FillRule::EvenOdd => "evenodd",
    };
    let _ = write!(
        out,
        r#" fill="{}" fill-opacity="{}" fill-rule="{}" stroke="{}" stroke-width="{}" stroke-opacity="{}" opacity="{}""#,
        color(p.fill),
        n(p.fill_opacity),
        rule,
        color(p.stroke),
        n(p.stroke_width),
        n(p.stroke_opacity),
        n(p.opacity)
    );
    if !e.transform.is_identity() {
        let t = e.transform.0;
        let _ = write!(
            out,
            r#" transform="matrix({} {} {} {} {} {})""#,
            n(t[0]),
            n(t[1]),
            n(t[2]),
            n(t[3]),
            n(t[4]),
            n(t[5])
        );
    }
    out.push_str("/>\n");
}

/// Canonical SVG text: explicit paint attributes on every element, no
/// `style`, consecutive elements of one part wrapped in `<g id>`.
/// Elements with neither fill nor stroke are dropped.
pub fn serialize_svg(doc: &VectorDocument) -> Vec<u8> {
    let mut out = String::new();
    let c = &doc.canvas;
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}""#,
        format_number(c.width),
        format_number(c.height)
    );
    if let Some([x, y, w, h]) = c.view_box {
        let _ = write!(
            out,
            r#" viewBox="{} {} {} {}""#,
            format_number(x),
            format_number(y),
            format_number(w),
            format_number(h)
        );
    }
    out.push_str(">\n");
    let mut open: Option<&str> = None;
    for e in &doc.elements {
        if !e.paint.is_visible() {
            log::warn!("dropping invisible <{}> (no fill, no stroke)", e.kind().tag());
            continue;
        }
        let group = e.group.as_deref();
        if group != open {
            if open.is_some() {
                out.push_str("  </g>\n");
            }
            if let Some(g) = group {
                let _ = writeln!(out, r#"  <g id="{}">"#, escape(g));
            }
            open = group;
        }
        element(&mut out, e, if open.is_some() { "    " } else { "  " });
    }
    if open.is_some() {
        out.push_str("  </g>\n");
    }
    out.push_str("</svg>\n");
    out.into_bytes()
}
