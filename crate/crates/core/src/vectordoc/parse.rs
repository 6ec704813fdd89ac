//! SVG subset parser with inheritance flattening.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use roxmltree::{Document, Node};
use svgtypes::{Length, LengthUnit, PathParser, PathSegment, PointsParser};

use super::geom::{Point, Transform};
use super::{Canvas, DrawableElement, FillRule, Geometry, Paint, PathCmd, SvgError, VectorDocument};
use crate::colorsci::Srgb;

const SVG_NS: &str = "http://www.w3.org/2000/svg";
const IGNORED: &[&str] = &["title", "desc", "metadata"];
const SHAPES: &[&str] = &["path", "rect", "circle", "ellipse", "line", "polyline", "polygon"];

#[derive(Debug, Clone)]
struct Inherited {
    fill: Option<(Srgb, f64)>,
    fill_opacity: f64,
    fill_rule: FillRule,
    stroke: Option<(Srgb, f64)>,
    stroke_width: f64,
    stroke_opacity: f64,
    color: (Srgb, f64),
    visible: bool,
    opacity: f64,
    transform: Transform,
    group: Option<String>,
}

impl Default for Inherited {
    fn default() -> Self {
        Self {
            fill: Some((Srgb::BLACK, 1.0)),
            fill_opacity: 1.0,
            fill_rule: FillRule::NonZero,
            stroke: None,
            stroke_width: 1.0,
            stroke_opacity: 1.0,
            color: (Srgb::BLACK, 1.0),
            visible: true,
            opacity: 1.0,
            transform: Transform::IDENTITY,
            group: None,
        }
    }
}

#[derive(Clone, Copy)]
enum Axis {
    X,
    Y,
    Diag,
}

struct Parser {
    canvas: Canvas,
    unsupported: BTreeSet<String>,
    elements: Vec<DrawableElement>,
}

fn is_svg(node: &Node) -> bool {
    node.is_element() && matches!(node.tag_name().namespace(), None | Some(SVG_NS))
}

fn invalid(node: &Node, attribute: &str, value: &str) -> SvgError {
    SvgError::InvalidAttribute {
        element: node.tag_name().name().to_string(),
        attribute: attribute.to_string(),
        value: value.to_string(),
    }
}

/// Presentation attributes overlaid with inline `style` declarations.
fn properties<'a>(node: &Node<'a, 'a>) -> BTreeMap<String, String> {
    let mut props: BTreeMap<String, String> = node
        .attributes()
        .filter(|a| a.namespace().is_none())
        .map(|a| (a.name().to_string(), a.value().trim().to_string()))
        .collect();
    if let Some(style) = props.remove("style") {
        for decl in style.split(';') {
            if let Some((k, v)) = decl.split_once(':') {
                let v = v.trim().trim_end_matches("!important").trim();
                props.insert(k.trim().to_string(), v.to_string());
            }
        }
    }
    props
}

fn parse_number(node: &Node, name: &str, value: &str) -> Result<f64, SvgError> {
    let v = value.trim();
    let parsed = match v.strip_suffix('%') {
        Some(p) => p.trim().parse::<f64>().map(|x| x / 100.0),
        None => v.parse::<f64>(),
    };
    parsed.ok().filter(|x| x.is_finite()).ok_or_else(|| invalid(node, name, value))
}

fn parse_opacity(node: &Node, name: &str, value: &str) -> Result<f64, SvgError> {
    Ok(parse_number(node, name, value)?.clamp(0.0, 1.0))
}

fn to_srgb(c: svgtypes::Color) -> (Srgb, f64) {
    (Srgb::new(c.red, c.green, c.blue), c.alpha as f64 / 255.0)
}

impl Parser {
    fn length(&self, node: &Node, name: &str, value: &str, axis: Axis) -> Result<f64, SvgError> {
        let len = Length::from_str(value).map_err(|_| invalid(node, name, value))?;
        let [_, _, vw, vh] = self.canvas.user_rect();
        let px = match len.unit {
            LengthUnit::None | LengthUnit::Px => 1.0,
            LengthUnit::In => 96.0,
            LengthUnit::Cm => 96.0 / 2.54,
            LengthUnit::Mm => 96.0 / 25.4,
            LengthUnit::Pt => 4.0 / 3.0,
            LengthUnit::Pc => 16.0,
            LengthUnit::Em => 16.0,
            LengthUnit::Ex => 8.0,
            LengthUnit::Percent => {
                let base = match axis {
                    Axis::X => vw,
                    Axis::Y => vh,
                    Axis::Diag => vw.hypot(vh) / std::f64::consts::SQRT_2,
                };
                base / 100.0
            }
        };
        let v = len.number * px;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(invalid(node, name, value))
        }
    }

    fn len_attr(
        &self,
        node: &Node,
        props: &BTreeMap<String, String>,
        name: &str,
        axis: Axis,
    ) -> Result<Option<f64>, SvgError> {
        match props.get(name) {
            Some(v) if !v.is_empty() => self.length(node, name, v, axis).map(Some),
            _ => Ok(None),
        }
    }

    fn paint(
        &mut self,
        node: &Node,
        name: &str,
        value: &str,
        inherited: Option<(Srgb, f64)>,
        current: (Srgb, f64),
    ) -> Result<Option<(Srgb, f64)>, SvgError> {
        match svgtypes::Paint::from_str(value) {
            Ok(svgtypes::Paint::None) => Ok(None),
            Ok(svgtypes::Paint::Inherit) => Ok(inherited),
            Ok(svgtypes::Paint::CurrentColor) => Ok(Some(current)),
            Ok(svgtypes::Paint::Color(c)) => Ok(Some(to_srgb(c))),
            Ok(svgtypes::Paint::FuncIRI(..)) => {
                self.unsupported.insert(format!("{name}=url(...) paint server"));
                Ok(inherited)
            }
            Ok(_) => {
                self.unsupported.insert(format!("{name}={value}"));
                Ok(inherited)
            }
            Err(_) => Err(invalid(node, name, value)),
        }
    }

    fn resolve(&mut self, node: &Node, parent: &Inherited) -> Result<(Inherited, BTreeMap<String, String>), SvgError> {
        let props = properties(node);
        let mut st = parent.clone();
        st.opacity = parent.opacity;
        for attr in ["clip-path", "mask", "filter"] {
            if props.get(attr).is_some_and(|v| v != "none" && !v.is_empty()) {
                self.unsupported.insert(format!("{attr} attribute"));
            }
        }
        if let Some(v) = props.get("color").filter(|v| !v.is_empty() && *v != "inherit") {
            let c = svgtypes::Color::from_str(v).map_err(|_| invalid(node, "color", v))?;
            st.color = to_srgb(c);
        }
        if let Some(v) = props.get("fill").filter(|v| !v.is_empty()) {
            st.fill = self.paint(node, "fill", v, parent.fill, st.color)?;
        }
        if let Some(v) = props.get("stroke").filter(|v| !v.is_empty()) {
            st.stroke = self.paint(node, "stroke", v, parent.stroke, st.color)?;
        }
        let keep = |v: &&String| !v.is_empty() && *v != "inherit";
        if let Some(v) = props.get("fill-opacity").filter(keep) {
            st.fill_opacity = parse_opacity(node, "fill-opacity", v)?;
        }
        if let Some(v) = props.get("stroke-opacity").filter(keep) {
            st.stroke_opacity = parse_opacity(node, "stroke-opacity", v)?;
        }
        if let Some(v) = props.get("fill-rule").filter(keep) {
            st.fill_rule = match v.as_str() {
                "nonzero" => FillRule::NonZero,
                "evenodd" => FillRule::EvenOdd,
                _ => return Err(invalid(node, "fill-rule", v)),
            };
        }
        if let Some(v) = props.get("stroke-width").filter(keep) {
            st.stroke_width = self.length(node, "stroke-width", v, Axis::Diag)?.max(0.0);
        }
        if let Some(v) = props.get("opacity").filter(keep) {
            st.opacity *= parse_opacity(node, "opacity", v)?;
        }
        if let Some(v) = props.get("visibility").filter(keep) {
            st.visible = v == "visible";
        }
        if let Some(v) = node.attribute("transform").filter(|v| !v.trim().is_empty()) {
            let t = svgtypes::Transform::from_str(v).map_err(|_| invalid(node, "transform", v))?;
            st.transform = parent.transform.concat(&Transform([t.a, t.b, t.c, t.d, t.e, t.f]));
        }
        Ok((st, props))
    }

    fn walk(&mut self, node: Node, parent: &Inherited) -> Result<(), SvgError> {
        for child in node.children().filter(is_svg) {
            let name = child.tag_name().name();
            if IGNORED.contains(&name) {
                continue;
            }
            if name == "defs" {
                self.scan_defs(child);
                continue;
            }
            if name != "g" && !SHAPES.contains(&name) {
                self.unsupported.insert(format!("<{name}>"));
                continue;
            }
            let (mut st, props) = self.resolve(&child, parent)?;
            if props.get("display").is_some_and(|v| v == "none") {
                continue;
            }
            if name == "g" {
                if let Some(id) = child.attribute("id").filter(|s| !s.is_empty()) {
                    st.group = Some(id.to_string());
                }
                self.walk(child, &st)?;
            } else if st.visible {
                if let Some(geometry) = self.geometry(&child, &props)? {
                    self.emit(geometry, &st);
                }
            }
        }
        Ok(())
    }

    fn scan_defs(&mut self, node: Node) {
        for d in node.descendants().filter(is_svg).skip(1) {
            let name = d.tag_name().name();
            if name != "g" && !SHAPES.contains(&name) && !IGNORED.contains(&name) {
                self.unsupported.insert(format!("<{name}>"));
            }
        }
    }

    fn emit(&mut self, geometry: Geometry, st: &Inherited) {
        let paint = Paint {
            fill: st.fill.map(|f| f.0),
            fill_opacity: st.fill_opacity * st.fill.map_or(1.0, |f| f.1),
            fill_rule: st.fill_rule,
            stroke: st.stroke.map(|s| s.0),
            stroke_width: st.stroke_width,
            stroke_opacity: st.stroke_opacity * st.stroke.map_or(1.0, |s| s.1),
            opacity: st.opacity,
        };
        self.elements.push(DrawableElement {
            geometry,
            paint,
            transform: st.transform,
            group: st.group.clone(),
        });
    }

    fn geometry(&self, node: &Node, props: &BTreeMap<String, String>) -> Result<Option<Geometry>, SvgError> {
        let get = |name: &str, axis: Axis| self.len_attr(node, props, name, axis);
        let val = |name: &str, axis: Axis| get(name, axis).map(|v| v.unwrap_or(0.0));
        let g = match node.tag_name().name() {
            "path" => {
                let d = props.get("d").map(String::as_str).unwrap_or("");
                let cmds = parse_path_data(d).map_err(|_| invalid(node, "d", d))?;
                if cmds.iter().all(|c| matches!(c, PathCmd::MoveTo(_))) {
                    log::warn!("skipping <path> without drawable segments");
                    return Ok(None);
                }
                Geometry::Path(cmds)
            }
            "rect" => {
                let (width, height) = (val("width", Axis::X)?, val("height", Axis::Y)?);
                if width <= 0.0 || height <= 0.0 {
                    return Ok(None);
                }
                let (rx, ry) = match (get("rx", Axis::X)?, get("ry", Axis::Y)?) {
                    (None, None) => (0.0, 0.0),
                    (Some(r), None) | (None, Some(r)) => (r, r),
                    (Some(a), Some(b)) => (a, b),
                };
                let (rx, ry) = (rx.max(0.0).min(width / 2.0), ry.max(0.0).min(height / 2.0));
                let (rx, ry) = if rx == 0.0 || ry == 0.0 { (0.0, 0.0) } else { (rx, ry) };
                Geometry::Rect { x: val("x", Axis::X)?, y: val("y", Axis::Y)?, width, height, rx, ry }
            }
            "circle" => {
                let r = val("r", Axis::Diag)?;
                if r <= 0.0 {
                    return Ok(None);
                }
                Geometry::Circle { cx: val("cx", Axis::X)?, cy: val("cy", Axis::Y)?, r }
            }
            "ellipse" => {
                let (rx, ry) = match (get("rx", Axis::X)?, get("ry", Axis::Y)?) {
                    (Some(a), Some(b)) => (a, b),
                    (Some(r), None) | (None, Some(r)) => (r, r),
                    (None, None) => (0.0, 0.0),
                };
                if rx <= 0.0 || ry <= 0.0 {
                    return Ok(None);
                }
                Geometry::Ellipse { cx: val("cx", Axis::X)?, cy: val("cy", Axis::Y)?, rx, ry }
            }
            "line" => Geometry::Line {
                x1: val("x1", Axis::X)?,
                y1: val("y1", Axis::Y)?,
                x2: val("x2", Axis::X)?,
                y2: val("y2", Axis::Y)?,
            },
            tag @ ("polygon" | "polyline") => {
                let pts: Vec<Point> = PointsParser::from(props.get("points").map(String::as_str).unwrap_or(""))
                    .map(|(x, y)| Point::new(x, y))
                    .collect();
                if pts.len() < 2 {
                    return Ok(None);
                }
                if tag == "polygon" {
                    Geometry::Polygon(pts)
                } else {
                    Geometry::Polyline(pts)
                }
            }
            _ => return Ok(None),
        };
        Ok(Some(g))
    }
}

/// Parses path data into absolute commands, keeping arcs and expanding
/// shorthand forms.
pub(crate) fn parse_path_data(d: &str) -> Result<Vec<PathCmd>, svgtypes::Error> {
    let mut out = Vec::new();
    let mut cur = Point::default();
    let mut start = Point::default();
    // reflection sources for S/T
    let mut last_cubic: Option<Point> = None;
    let mut last_quad: Option<Point> = None;
    for seg in PathParser::from(d) {
        let seg = seg?;
        let abs = seg.is_abs();
        let at = |x: f64, y: f64, cur: Point| if abs { Point::new(x, y) } else { Point::new(cur.x + x, cur.y + y) };
        let reflect = |c: Option<Point>, cur: Point| c.map_or(cur, |c| Point::new(2.0 * cur.x - c.x, 2.0 * cur.y - c.y));
        let (mut next_cubic, mut next_quad) = (None, None);
        match seg {
            PathSegment::MoveTo { x, y, .. } => {
                cur = at(x, y, cur);
                start = cur;
                out.push(PathCmd::MoveTo(cur));
            }
            PathSegment::LineTo { x, y, .. } => {
                cur = at(x, y, cur);
                out.push(PathCmd::LineTo(cur));
            }
            PathSegment::HorizontalLineTo { x, .. } => {
                cur = Point::new(if abs { x } else { cur.x + x }, cur.y);
                out.push(PathCmd::LineTo(cur));
            }
            PathSegment::VerticalLineTo { y, .. } => {
                cur = Point::new(cur.x, if abs { y } else { cur.y + y });
                out.push(PathCmd::LineTo(cur));
            }
            PathSegment::CurveTo { x1, y1, x2, y2, x, y, .. } => {
                let (c1, c2, p) = (at(x1, y1, cur), at(x2, y2, cur), at(x, y, cur));
                out.push(PathCmd::CubicTo(c1, c2, p));
                next_cubic = Some(c2);
                cur = p;
            }
            PathSegment::SmoothCurveTo { x2, y2, x, y, .. } => {
                let c1 = reflect(last_cubic, cur);
                let (c2, p) = (at(x2, y2, cur), at(x, y, cur));
                out.push(PathCmd::CubicTo(c1, c2, p));
                next_cubic = Some(c2);
                cur = p;
            }
            PathSegment::Quadratic { x1, y1, x, y, .. } => {
                let (c, p) = (at(x1, y1, cur), at(x, y, cur));
                out.push(PathCmd::QuadTo(c, p));
                next_quad = Some(c);
                cur = p;
            }
            PathSegment::SmoothQuadratic { x, y, .. } => {
                let c = reflect(last_quad, cur);
                let p = at(x, y, cur);
                out.push(PathCmd::QuadTo(c, p));
                next_quad = Some(c);
                cur = p;
            }
            PathSegment::EllipticalArc { rx, ry, x_axis_rotation, large_arc, sweep, x, y, .. } => {
                let to = at(x, y, cur);
                out.push(PathCmd::ArcTo { rx: rx.abs(), ry: ry.abs(), rotation: x_axis_rotation, large_arc, sweep, to });
                cur = to;
            }
            PathSegment::ClosePath { .. } => {
                out.push(PathCmd::Close);
                cur = start;
            }
        }
        last_cubic = next_cubic;
        last_quad = next_quad;
    }
    Ok(out)
}

/// Parses an SVG document in the supported flat-design subset.
pub fn parse_svg(bytes: &[u8]) -> Result<VectorDocument, SvgError> {
    let text = std::str::from_utf8(bytes).map_err(|e| SvgError::Xml {
        row: 1,
        col: 1,
        message: format!("invalid UTF-8: {e}"),
    })?;
    let doc = Document::parse(text).map_err(|e| {
        let pos = e.pos();
        SvgError::Xml { row: pos.row, col: pos.col, message: e.to_string() }
    })?;
    let root = doc.root_element();
    if root.tag_name().name() != "svg" || !is_svg(&root) {
        return Err(SvgError::NotSvg(root.tag_name().name().to_string()));
    }

    let view_box = match root.attribute("viewBox") {
        Some(v) => {
            let vb = svgtypes::ViewBox::from_str(v).map_err(|_| invalid(&root, "viewBox", v))?;
            Some([vb.x, vb.y, vb.w, vb.h])
        }
        None => None,
    };
    let mut parser = Parser {
        canvas: Canvas { width: 0.0, height: 0.0, view_box },
        unsupported: BTreeSet::new(),
        elements: Vec::new(),
    };
    let dim = |name: &str, fallback: Option<f64>| -> Result<f64, SvgError> {
        match root.attribute(name) {
            Some(v) if !v.trim().ends_with('%') => {
                let len = Length::from_str(v).map_err(|_| invalid(&root, name, v))?;
                let probe = Parser { canvas: Canvas::new(1.0, 1.0), unsupported: BTreeSet::new(), elements: Vec::new() };
                let px = probe.length(&root, name, v, Axis::X)?;
                if len.number > 0.0 {
                    Ok(px)
                } else {
                    Err(SvgError::MissingCanvas)
                }
            }
            _ => fallback.ok_or(SvgError::MissingCanvas),
        }
    };
    parser.canvas.width = dim("width", view_box.map(|v| v[2]))?;
    parser.canvas.height = dim("height", view_box.map(|v| v[3]))?;
    if parser.canvas.user_rect()[2] <= 0.0 || parser.canvas.user_rect()[3] <= 0.0 {
        return Err(SvgError::MissingCanvas);
    }

    let (top, _) = parser.resolve(&root, &Inherited::default())?;
    let top = Inherited { transform: Transform::IDENTITY, ..top };
    parser.walk(root, &top)?;
    if !parser.unsupported.is_empty() {
        return Err(SvgError::Unsupported(parser.unsupported.into_iter().collect()));
    }
    Ok(VectorDocument { canvas: parser.canvas, elements: parser.elements })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> VectorDocument {
        parse_svg(s.as_bytes()).unwrap()
    }

    #[test]
    fn group_fill_is_inherited() {
        let d = parse(r#"<svg xmlns="http://www.w3.org/2000/svg" width="10" height="10"><g fill="red"><rect width="5" height="5"/></g></svg>"#);
        assert_eq!(d.elements.len(), 1);
        assert_eq!(d.elements[0].paint.fill, Some(Srgb::new(255, 0, 0)));
    }

    #[test]
    fn style_beats_attribute() {
        let d = parse(r#"<svg width="10" height="10"><path style="fill:#00f" fill="red" d="M0 0L5 0L5 5Z"/></svg>"#);
        assert_eq!(d.elements[0].paint.fill, Some(Srgb::new(0, 0, 255)));
    }

    #[test]
    fn text_is_rejected() {
        let err = parse_svg(br#"<svg width="10" height="10"><text>hi</text><linearGradient id="g"/></svg>"#).unwrap_err();
        match err {
            SvgError::Unsupported(list) => {
                assert!(list.contains(&"<text>".to_string()));
                assert!(list.contains(&"<linearGradient>".to_string()));
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn malformed_xml_reports_position() {
        match parse_svg(b"<svg width=\"10\" height=\"10\">\n<rect></svg>").unwrap_err() {
            SvgError::Xml { row, .. } => assert_eq!(row, 2),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn opacity_and_transform_compose() {
        let d = parse(
            r#"<svg width="100" height="100"><g opacity="0.5" transform="translate(10 0)"><g transform="scale(2)" opacity="0.5"><circle r="1" fill="rgba(0,0,255,0.5)"/></g></g></svg>"#,
        );
        let e = &d.elements[0];
        assert_eq!(e.paint.opacity, 0.25);
        assert!((e.paint.fill_opacity - 128.0 / 255.0).abs() < 1e-12);
        assert_eq!(e.transform, Transform([2.0, 0.0, 0.0, 2.0, 10.0, 0.0]));
    }

    #[test]
    fn relative_and_shorthand_paths() {
        let cmds = parse_path_data("m1 1 h2 v2 h-2 z m5 0 l1 1 s1 1 2 0 t2 0").unwrap();
        use PathCmd::*;
        let p = Point::new;
        assert_eq!(cmds[0], MoveTo(p(1.0, 1.0)));
        assert_eq!(cmds[1], LineTo(p(3.0, 1.0)));
        assert_eq!(cmds[4], Close);
        assert_eq!(cmds[5], MoveTo(p(6.0, 1.0)));
        assert_eq!(cmds[7], CubicTo(p(7.0, 2.0), p(8.0, 3.0), p(9.0, 2.0)));
        assert_eq!(cmds[8], QuadTo(p(9.0, 2.0), p(11.0, 2.0)));
    }

    #[test]
    fn group_ids_and_foreign_elements() {
        let d = parse(
            r#"<svg xmlns="http://www.w3.org/2000/svg" xmlns:x="urn:x" viewBox="0 0 20 10"><x:meta/><title>t</title><g id="part-3"><g><rect width="1" height="1"/></g></g><rect width="2" height="2" stroke="black" fill="none"/></svg>"#,
        );
        assert_eq!(d.canvas.width, 20.0);
        assert_eq!(d.elements[0].group.as_deref(), Some("part-3"));
        assert_eq!(d.elements[1].group, None);
        assert_eq!(d.elements[1].paint.fill, None);
        assert_eq!(d.elements[1].paint.stroke, Some(Srgb::BLACK));
    }

    #[test]
    fn color_syntaxes_normalize() {
        let d = parse(r##"<svg width="4" height="4"><rect width="1" height="1" fill="#f00"/><rect width="1" height="1" fill="rgb(255,0,0)"/><rect width="1" height="1" fill="red" color="blue"/><rect width="1" height="1" fill="currentColor" color="blue"/></svg>"##);
        let fills: Vec<_> = d.elements.iter().map(|e| e.paint.fill.unwrap()).collect();
        assert_eq!(fills[0], fills[1]);
        assert_eq!(fills[1], fills[2]);
        assert_eq!(fills[3], Srgb::new(0, 0, 255));
    }

    #[test]
    fn missing_canvas_is_an_error() {
        assert!(matches!(parse_svg(b"<svg><rect/></svg>"), Err(SvgError::MissingCanvas)));
        assert!(matches!(parse_svg(b"<html/>"), Err(SvgError::NotSvg(_))));
    }
}
