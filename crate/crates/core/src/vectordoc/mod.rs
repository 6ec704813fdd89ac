//! Flat-design SVG documents: parsing with attribute resolution, canonical
//! serialization, per-part tracing, and vector-domain consolidation.

mod consolidate;
mod geom;
mod parse;
mod raster;
mod trace;
mod write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::colorsci::{ColorError, Srgb};

pub use consolidate::{
    align_palette, consolidate_and_align, consolidate_colors, extract_palette, fill_color_areas,
    merge_parts, remove_micro_strokes, ConsolidationConfig,
};
pub use geom::{Point, Subpath, Transform, FLATTEN_TOLERANCE};
pub use parse::parse_svg;
pub use raster::{
    path_fill_area, path_fill_area_at, rasterize_element, rasterize_elements, AREA_RESOLUTION,
};
pub(crate) use trace::shell_quote;
pub use trace::{trace_part, trace_part_with, TraceMode, TRACE_EPSILON_FRACTION};
pub use write::{format_number, serialize_svg};

#[derive(Debug, Error)]
pub enum SvgError {
    #[error("malformed XML at {row}:{col}: {message}")]
    Xml { row: u32, col: u32, message: String },
    #[error("unsupported SVG features: {}", .0.join(", "))]
    Unsupported(Vec<String>),
    #[error("invalid value for `{attribute}` on <{element}>: {value:?}")]
    InvalidAttribute { element: String, attribute: String, value: String },
    #[error("document has no usable canvas size")]
    MissingCanvas,
    #[error("root element is <{0}>, expected <svg>")]
    NotSvg(String),
    #[error("document has no painted elements")]
    NothingPainted,
    #[error(transparent)]
    Color(#[from] ColorError),
    #[error("tracing failed: {0}")]
    Trace(String),
    #[error("cannot trace an empty mask")]
    EmptyMask,
}

/// Canvas size plus optional viewBox `[min_x, min_y, width, height]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Canvas {
    pub width: f64,
    pub height: f64,
    pub view_box: Option<[f64; 4]>,
}

impl Canvas {
    pub fn new(width: f64, height: f64) -> Self {
        Self { width, height, view_box: None }
    }

    /// The user-space rectangle `[x, y, w, h]` elements are drawn in.
    pub fn user_rect(&self) -> [f64; 4] {
        self.view_box.unwrap_or([0.0, 0.0, self.width, self.height])
    }

    pub fn diagonal(&self) -> f64 {
        let [_, _, w, h] = self.user_rect();
        w.hypot(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FillRule {
    #[default]
    NonZero,
    EvenOdd,
}

/// Absolute path commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PathCmd {
    MoveTo(Point),
    LineTo(Point),
    CubicTo(Point, Point, Point),
    QuadTo(Point, Point),
    ArcTo { rx: f64, ry: f64, rotation: f64, large_arc: bool, sweep: bool, to: Point },
    Close,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Geometry {
    Path(Vec<PathCmd>),
    Rect { x: f64, y: f64, width: f64, height: f64, rx: f64, ry: f64 },
    Circle { cx: f64, cy: f64, r: f64 },
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
    Polygon(Vec<Point>),
    Polyline(Vec<Point>),
    Line { x1: f64, y1: f64, x2: f64, y2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElementKind {
    Path,
    Rect,
    Circle,
    Ellipse,
    Polygon,
    Polyline,
    Line,
}

impl ElementKind {
    pub fn tag(self) -> &'static str {
        match self {
            ElementKind::Path => "path",
            ElementKind::Rect => "rect",
            ElementKind::Circle => "circle",
            ElementKind::Ellipse => "ellipse",
            ElementKind::Polygon => "polygon",
            ElementKind::Polyline => "polyline",
            ElementKind::Line => "line",
        }
    }
}

impl Geometry {
    pub fn kind(&self) -> ElementKind {
        match self {
            Geometry::Path(_) => ElementKind::Path,
            Geometry::Rect { .. } => ElementKind::Rect,
            Geometry::Circle { .. } => ElementKind::Circle,
            Geometry::Ellipse { .. } => ElementKind::Ellipse,
            Geometry::Polygon(_) => ElementKind::Polygon,
            Geometry::Polyline(_) => ElementKind::Polyline,
            Geometry::Line { .. } => ElementKind::Line,
        }
    }
}

/// Fully resolved paint of a leaf element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Paint {
    pub fill: Option<Srgb>,
    pub fill_opacity: f64,
    pub fill_rule: FillRule,
    pub stroke: Option<Srgb>,
    pub stroke_width: f64,
    pub stroke_opacity: f64,
    pub opacity: f64,
}

impl Default for Paint {
    fn default() -> Self {
        Self {
            fill: Some(Srgb::BLACK),
            fill_opacity: 1.0,
            fill_rule: FillRule::NonZero,
            stroke: None,
            stroke_width: 1.0,
            stroke_opacity: 1.0,
            opacity: 1.0,
        }
    }
}

impl Paint {
    pub fn fill(color: Srgb) -> Self {
        Self { fill: Some(color), ..Self::default() }
    }

    pub fn is_visible(&self) -> bool {
        self.fill.is_some() || self.stroke.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawableElement {
    pub geometry: Geometry,
    pub paint: Paint,
    pub transform: Transform,
    /// Identifier of the enclosing part group, if any.
    pub group: Option<String>,
}

impl DrawableElement {
    pub fn new(geometry: Geometry, paint: Paint) -> Self {
        Self { geometry, paint, transform: Transform::IDENTITY, group: None }
    }

    pub fn kind(&self) -> ElementKind {
        self.geometry.kind()
    }
}

/// A parsed, attribute-resolved SVG document. Element order is paint order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorDocument {
    pub canvas: Canvas,
    pub elements: Vec<DrawableElement>,
}

impl VectorDocument {
    pub fn new(canvas: Canvas) -> Self {
        Self { canvas, elements: Vec::new() }
    }

    /// Distinct fill colours in first-use order.
    pub fn fill_colors(&self) -> Vec<Srgb> {
        let mut out: Vec<Srgb> = Vec::new();
        for e in &self.elements {
            if let Some(c) = e.paint.fill {
                if !out.contains(&c) {
                    out.push(c);
                }
            }
        }
        out
    }

    /// Distinct fill and stroke colours in first-use order.
    pub fn used_colors(&self) -> Vec<Srgb> {
        let mut out: Vec<Srgb> = Vec::new();
        for e in &self.elements {
            for c in [e.paint.fill, e.paint.stroke].into_iter().flatten() {
                if !out.contains(&c) {
                    out.push(c);
                }
            }
        }
        out
    }

    /// Group identifiers in first-appearance order.
    pub fn groups(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for e in &self.elements {
            if let Some(g) = e.group.as_deref() {
                if !out.contains(&g) {
                    out.push(g);
                }
            }
        }
        out
    }
}
