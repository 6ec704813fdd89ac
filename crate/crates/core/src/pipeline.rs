//! Configuration, workspace layout and the staged multi-view pipeline:
//! view planning, rasters, segmentation and propagation, tracing,
//! consolidation, palette alignment and metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use image::RgbaImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::colorsci::NearBlackBias;
use crate::formats::{labels_to_maskset, maskset_to_labels, read_labels, read_rgba, write_labels, write_rgba};
use crate::maskops::{residual_discovery, MaskSet, PartRegistry, ResidualConfig, ResidualOutcome};
use crate::metrics::{chain_adjacency, count_stats, turntable_adjacency, StabilityReport};
use crate::propagate::{
    propagate_sequence, ExternalBackend, HeuristicBackend, MatchWeights, OracleBackend, PropagationBackend, ViewContext,
};
use crate::synthscene::{reference_svg, render_view, RenderOptions, SceneSpec};
use crate::vectordoc::{
    consolidate_and_align, consolidate_colors, extract_palette, merge_parts, parse_svg, remove_micro_strokes,
    serialize_svg, trace_part_with, Canvas, ConsolidationConfig, TraceMode, VectorDocument,
};
use crate::viewsphere::{
    nearest_view, sample_sphere, turntable_grid, TraversalPlan, ViewId, ViewPose, DEFAULT_K, DEFAULT_TAU_DEG,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Plan,
    Synth,
    Ingest,
    Segment,
    Trace,
    Consolidate,
    Align,
    Metrics,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("stage serializes");
        write!(f, "{}", s.as_str().expect("unit variant"))
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[error("{stage} stage failed{}: {message}", view.map(|v| format!(" at view {v}")).unwrap_or_default())]
pub struct PipelineError {
    pub stage: Stage,
    pub view: Option<ViewId>,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, view: Option<ViewId>, message: impl fmt::Display) -> Self {
        Self { stage, view, message: message.to_string() }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ViewMode {
    Turntable,
    Sphere { n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewsConfig {
    #[serde(flatten)]
    pub mode: ViewMode,
    /// Key view; defaults to the view nearest yaw 0, pitch 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<ViewId>,
}

impl Default for ViewsConfig {
    fn default() -> Self {
        Self { mode: ViewMode::Turntable, start: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub k: usize,
    pub tau_deg: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { k: DEFAULT_K, tau_deg: DEFAULT_TAU_DEG }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    Oracle {
        #[serde(default)]
        dropout: f64,
    },
    Heuristic {
        #[serde(default)]
        weights: MatchWeights,
    },
    External {
        command: String,
    },
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Oracle { dropout: 0.0 }
    }
}

impl BackendConfig {
    pub fn name(&self) -> &'static str {
        match self {
            BackendConfig::Oracle { .. } => "oracle",
            BackendConfig::Heuristic { .. } => "heuristic",
            BackendConfig::External { .. } => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub workspace: PathBuf,
    /// Seed of the oracle's dropout noise.
    pub seed: u64,
    /// Worker threads; all cores when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    /// Halve the alpha of silhouette pixels in synthetic rasters.
    pub feather: bool,
    pub views: ViewsConfig,
    pub selection: SelectionConfig,
    pub residual: ResidualConfig,
    pub backend: BackendConfig,
    pub trace: TraceMode,
    pub consolidation: ConsolidationConfig,
    pub bias: NearBlackBias,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            workspace: PathBuf::from("workspace"),
            seed: 0,
            jobs: None,
            feather: false,
            views: ViewsConfig::default(),
            selection: SelectionConfig::default(),
            residual: ResidualConfig::default(),
            backend: BackendConfig::default(),
            trace: TraceMode::default(),
            consolidation: ConsolidationConfig::default(),
            bias: NearBlackBias::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| PipelineError::new(Stage::Config, None, e))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::new(Stage::Config, None, format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

/// Fixed artifact paths under a workspace directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn views_json(&self) -> PathBuf {
        self.root.join("views.json")
    }
    pub fn scene_json(&self) -> PathBuf {
        self.root.join("scene.json")
    }
    pub fn input_svg(&self) -> PathBuf {
        self.root.join("input.svg")
    }
    pub fn registry_json(&self) -> PathBuf {
        self.root.join("registry.json")
    }
    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }
    pub fn errors_json(&self) -> PathBuf {
        self.root.join("errors.json")
    }
    pub fn raster(&self, v: ViewId) -> PathBuf {
        self.root.join("rasters").join(format!("{v}.png"))
    }
    pub fn labels(&self, v: ViewId) -> PathBuf {
        self.root.join("labels").join(format!("{v}.png"))
    }
    pub fn svg(&self, v: ViewId) -> PathBuf {
        self.root.join("svg").join(format!("{v}.svg"))
    }

    fn ensure_dirs(&self, stage: Stage) -> Result<()> {
        for d in ["rasters", "labels", "svg"] {
            std::fs::create_dir_all(self.root.join(d)).map_err(|e| PipelineError::new(stage, None, e))?;
        }
        Ok(())
    }

    /// Records a failure in `errors.json`.
    pub fn write_error(&self, err: &PipelineError) {
        let _ = std::fs::create_dir_all(&self.root);
        let body = serde_json::to_string_pretty(&serde_json::json!({ "errors": [err] })).expect("error serializes");
        if let Err(e) = std::fs::write(self.errors_json(), body) {
            log::error!("cannot write error manifest: {e}");
        }
    }
}

fn write_file(stage: Stage, view: Option<ViewId>, path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::new(stage, view, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| PipelineError::new(stage, view, format!("{}: {e}", path.display())))
}

fn read_file(stage: Stage, view: Option<ViewId>, path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| PipelineError::new(stage, view, format!("{}: {e}", path.display())))
}

/// Contents of `views.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewManifest {
    pub views: Vec<ViewPose>,
    pub order: Vec<ViewId>,
    pub references: BTreeMap<ViewId, Vec<ViewId>>,
    pub k: usize,
    pub tau_deg: f64,
    pub turntable: bool,
}

impl ViewManifest {
    pub fn key_view(&self) -> ViewId {
        self.order[0]
    }

    pub fn pose(&self, id: ViewId) -> Option<&ViewPose> {
        self.views.iter().find(|v| v.id() == id)
    }

    pub fn ids(&self) -> Vec<ViewId> {
        self.views.iter().map(|v| v.id()).collect()
    }

    pub fn adjacency(&self) -> Vec<(ViewId, ViewId)> {
        if self.turntable {
            turntable_adjacency(&self.views)
        } else {
            chain_adjacency(&self.order)
        }
    }

    pub fn load(ws: &Workspace) -> Result<Self> {
        let bytes = read_file(Stage::Plan, None, &ws.views_json())?;
        let m: ViewManifest = serde_json::from_slice(&bytes).map_err(|e| PipelineError::new(Stage::Plan, None, e))?;
        let plan = TraversalPlan { order: m.order.clone(), references: m.references.clone(), k: m.k, tau_deg: m.tau_deg };
        plan.validate(&m.views).map_err(|e| PipelineError::new(Stage::Plan, None, e))?;
        Ok(m)
    }
}

/// Builds the view set and traversal plan and writes `views.json`.
pub fn stage_plan(cfg: &PipelineConfig, ws: &Workspace) -> Result<ViewManifest> {
    let err = |e: &dyn fmt::Display| PipelineError::new(Stage::Plan, None, e);
    let (views, turntable) = match cfg.views.mode {
        ViewMode::Turntable => (turntable_grid(), true),
        ViewMode::Sphere { n } => (sample_sphere(n).map_err(|e| err(&e))?, false),
    };
    let start = match cfg.views.start {
        Some(s) => s,
        None => nearest_view(&views, 0.0, 0.0).ok_or_else(|| err(&"empty view set"))?,
    };
    let plan = TraversalPlan::build(&views, start, cfg.selection.k, cfg.selection.tau_deg).map_err(|e| err(&e))?;
    let m = ViewManifest {
        views,
        order: plan.order,
        references: plan.references,
        k: plan.k,
        tau_deg: plan.tau_deg,
        turntable,
    };
    write_file(Stage::Plan, None, &ws.views_json(), serde_json::to_string_pretty(&m).expect("manifest serializes").as_bytes())?;
    Ok(m)
}

/// Renders every view of a synthetic scene into `rasters/` and saves the
/// scene as `scene.json`.
pub fn stage_synth(cfg: &PipelineConfig, ws: &Workspace, m: &ViewManifest, scene: &SceneSpec) -> Result<()> {
    scene.validate().map_err(|e| PipelineError::new(Stage::Synth, None, e))?;
    ws.ensure_dirs(Stage::Synth)?;
    write_file(Stage::Synth, None, &ws.scene_json(), scene.to_json().as_bytes())?;
    let opts = RenderOptions { feather: cfg.feather };
    let results: Vec<Result<()>> = m
        .views
        .par_iter()
        .map(|v| {
            let r = render_view(scene, v, opts);
            write_rgba(&ws.raster(v.id()), &r.raster).map_err(|e| PipelineError::new(Stage::Synth, Some(v.id()), e))
        })
        .collect();
    results.into_iter().collect()
}

/// Copies `<dir>/<id>.png` for every view into `rasters/`, requiring one
/// common size.
pub fn stage_ingest(ws: &Workspace, m: &ViewManifest, dir: &Path) -> Result<()> {
    ws.ensure_dirs(Stage::Ingest)?;
    let key = m.key_view();
    let load = |v: ViewId| {
        read_rgba(&dir.join(format!("{v}.png"))).map_err(|e| PipelineError::new(Stage::Ingest, Some(v), e))
    };
    let expected = load(key)?.dimensions();
    for v in m.ids() {
        let img = load(v)?;
        if img.dimensions() != expected {
            return Err(PipelineError::new(
                Stage::Ingest,
                Some(v),
                format!(
                    "raster is {}x{}, view {key} is {}x{}",
                    img.width(),
                    img.height(),
                    expected.0,
                    expected.1
                ),
            ));
        }
        write_rgba(&ws.raster(v), &img).map_err(|e| PipelineError::new(Stage::Ingest, Some(v), e))?;
    }
    Ok(())
}

fn load_rasters(ws: &Workspace, m: &ViewManifest, stage: Stage) -> Result<BTreeMap<ViewId, RgbaImage>> {
    let results: Vec<Result<(ViewId, RgbaImage)>> = m
        .ids()
        .into_par_iter()
        .map(|v| Ok((v, read_rgba(&ws.raster(v)).map_err(|e| PipelineError::new(stage, Some(v), e))?)))
        .collect();
    let images: BTreeMap<ViewId, RgbaImage> = results.into_iter().collect::<Result<_>>()?;
    let dims = images[&m.key_view()].dimensions();
    if let Some((v, img)) = images.iter().find(|(_, i)| i.dimensions() != dims) {
        return Err(PipelineError::new(
            stage,
            Some(*v),
            format!("raster is {}x{}, key view is {}x{}", img.width(), img.height(), dims.0, dims.1),
        ));
    }
    Ok(images)
}

/// The configured backend; the oracle needs the workspace's `scene.json`.
pub fn make_backend(cfg: &PipelineConfig, ws: &Workspace) -> Result<Box<dyn PropagationBackend>> {
    let err = |e: &dyn fmt::Display| PipelineError::new(Stage::Config, None, e);
    Ok(match &cfg.backend {
        BackendConfig::Oracle { dropout } => {
            let bytes = read_file(Stage::Config, None, &ws.scene_json())
                .map_err(|e| err(&format!("the oracle backend needs a synthetic scene ({})", e.message)))?;
            let scene: SceneSpec = serde_json::from_slice(&bytes).map_err(|e| err(&e))?;
            Box::new(OracleBackend::new(scene, *dropout, cfg.seed))
        }
        BackendConfig::Heuristic { weights } => {
            weights.validate().map_err(|e| err(&e))?;
            Box::new(HeuristicBackend { weights: *weights, tau_deg: cfg.selection.tau_deg })
        }
        BackendConfig::External { command } => Box::new(ExternalBackend { command: command.clone() }),
    })
}

/// Key-view segmentation, initial propagation and residual discovery;
/// writes `labels/` and `registry.json`.
pub fn stage_segment(
    cfg: &PipelineConfig,
    ws: &Workspace,
    m: &ViewManifest,
    backend: &dyn PropagationBackend,
) -> Result<ResidualOutcome> {
    ws.ensure_dirs(Stage::Segment)?;
    let images = load_rasters(ws, m, Stage::Segment)?;
    let key = m.key_view();
    let mut registry = PartRegistry::new();
    let mut key_set = backend.segment(&images[&key], None, key);
    for mask in &mut key_set.masks {
        mask.part_id =
            registry.allocate(mask.mean_color, key).map_err(|e| PipelineError::new(Stage::Segment, Some(key), e))?;
    }
    key_set.masks.sort_by_key(|mask| mask.part_id);
    let mut masksets = BTreeMap::from([(key, key_set)]);
    let ctx = ViewContext { views: &m.views, images: &images, k: m.k, tau_deg: m.tau_deg };
    propagate_sequence(&ctx, &m.order, &m.references, &mut masksets, &registry, backend)
        .map_err(|e| PipelineError::new(Stage::Segment, Some(e.view), e.kind))?;
    let outcome = residual_discovery(&ctx, &m.order, &mut masksets, &mut registry, backend, &cfg.residual);
    log::info!(
        "residual discovery: {} pass(es), {} new part(s)",
        outcome.passes,
        outcome.new_parts().len()
    );

    write_file(Stage::Segment, None, &ws.registry_json(), registry.to_json().as_bytes())?;
    let written: Vec<Result<()>> = masksets
        .par_iter()
        .map(|(v, set)| {
            write_labels(&ws.labels(*v), &maskset_to_labels(set)).map_err(|e| PipelineError::new(Stage::Segment, Some(*v), e))
        })
        .collect();
    written.into_iter().collect::<Result<()>>()?;
    if let Some(e) = &outcome.failure {
        return Err(PipelineError::new(Stage::Segment, Some(e.view), format!("residual discovery aborted: {}", e.kind)));
    }
    Ok(outcome)
}

fn load_registry(ws: &Workspace, stage: Stage) -> Result<PartRegistry> {
    let text = read_file(stage, None, &ws.registry_json())?;
    PartRegistry::from_json(&String::from_utf8_lossy(&text)).map_err(|e| PipelineError::new(stage, None, e))
}

/// Traces every labelled part of a view into one document.
pub fn trace_view(set: &MaskSet, mode: &TraceMode) -> std::result::Result<VectorDocument, crate::vectordoc::SvgError> {
    let mut parts = BTreeMap::new();
    let mut areas = BTreeMap::new();
    for mask in &set.masks {
        parts.insert(mask.part_id, trace_part_with(mask, mode)?);
        areas.insert(mask.part_id, mask.area_px);
    }
    Ok(merge_parts(&parts, &areas, Canvas::new(set.width as f64, set.height as f64)))
}

fn per_view<T: Send>(m: &ViewManifest, f: impl Fn(ViewId) -> Result<T> + Sync) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = m.ids().into_par_iter().map(&f).collect();
    results.into_iter().collect()
}

/// Traces `labels/` into `svg/`.
pub fn stage_trace(cfg: &PipelineConfig, ws: &Workspace, m: &ViewManifest) -> Result<()> {
    ws.ensure_dirs(Stage::Trace)?;
    let registry = load_registry(ws, Stage::Trace)?;
    per_view(m, |v| {
        let err = |e: &dyn fmt::Display| PipelineError::new(Stage::Trace, Some(v), e);
        let image = read_rgba(&ws.raster(v)).map_err(|e| err(&e))?;
        let labels = read_labels(&ws.labels(v)).map_err(|e| err(&e))?;
        let set = labels_to_maskset(&labels, &image, v, Some(&registry)).map_err(|e| err(&e))?;
        let doc = trace_view(&set, &cfg.trace).map_err(|e| err(&e))?;
        write_file(Stage::Trace, Some(v), &ws.svg(v), &serialize_svg(&doc))
    })?;
    Ok(())
}

fn rewrite_svgs(ws: &Workspace, m: &ViewManifest, stage: Stage, f: impl Fn(&VectorDocument) -> VectorDocument + Sync) -> Result<()> {
    per_view(m, |v| {
        let doc = parse_svg(&read_file(stage, Some(v), &ws.svg(v))?).map_err(|e| PipelineError::new(stage, Some(v), e))?;
        write_file(stage, Some(v), &ws.svg(v), &serialize_svg(&f(&doc)))
    })?;
    Ok(())
}

/// Micro-stroke removal and colour consolidation of `svg/`, in place.
pub fn stage_consolidate(cfg: &PipelineConfig, ws: &Workspace, m: &ViewManifest) -> Result<()> {
    let c = cfg.consolidation;
    rewrite_svgs(ws, m, Stage::Consolidate, |d| consolidate_colors(&remove_micro_strokes(d, c.micro_stroke_frac), &c))
}

fn input_document(ws: &Workspace, stage: Stage) -> Result<VectorDocument> {
    parse_svg(&read_file(stage, None, &ws.input_svg())?)
        .map_err(|e| PipelineError::new(stage, None, format!("input SVG: {e}")))
}

/// Aligns `svg/` to the palette of `input.svg`, in place.
pub fn stage_align(cfg: &PipelineConfig, ws: &Workspace, m: &ViewManifest) -> Result<()> {
    let input = input_document(ws, Stage::Align)?;
    let palette = extract_palette(&input).map_err(|e| PipelineError::new(Stage::Align, None, e))?;
    rewrite_svgs(ws, m, Stage::Align, |d| consolidate_and_align(d, &palette, cfg.bias, &cfg.consolidation))
}

/// Computes and writes `report.json`.
pub fn stage_metrics(ws: &Workspace, m: &ViewManifest) -> Result<StabilityReport> {
    let input = input_document(ws, Stage::Metrics)?;
    let stats = per_view(m, |v| {
        let doc = parse_svg(&read_file(Stage::Metrics, Some(v), &ws.svg(v))?)
            .map_err(|e| PipelineError::new(Stage::Metrics, Some(v), e))?;
        Ok(count_stats(v, &doc))
    })?;
    let report = StabilityReport::build(stats, input.elements.len(), m.adjacency())
        .map_err(|e| PipelineError::new(Stage::Metrics, None, e))?;
    write_file(Stage::Metrics, None, &ws.report_json(), report.to_json().as_bytes())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Scene(SceneSpec),
    /// Directory of `<view id>.png` rasters.
    Rasters(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineInputs {
    /// Without one, synthetic runs trace the key view's ground truth.
    pub input_svg: Option<PathBuf>,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSummary {
    pub manifest: ViewManifest,
    pub residual: ResidualOutcome,
    pub report: StabilityReport,
}

/// Writes `input.svg`: a copy of the given document, or for synthetic
/// runs without one, the traced ground truth of the key view.
pub fn stage_input(ws: &Workspace, manifest: &ViewManifest, inputs: &PipelineInputs) -> Result<()> {
    match (&inputs.input_svg, &inputs.source) {
        (Some(path), _) => {
            let bytes = read_file(Stage::Config, None, path)?;
            parse_svg(&bytes).map_err(|e| PipelineError::new(Stage::Config, None, format!("input SVG: {e}")))?;
            write_file(Stage::Config, None, &ws.input_svg(), &bytes)?;
        }
        (None, Source::Scene(scene)) => {
            let key = *manifest.pose(manifest.key_view()).expect("key view is planned");
            let doc = reference_svg(scene, &key).map_err(|e| PipelineError::new(Stage::Synth, Some(key.id()), e))?;
            write_file(Stage::Synth, None, &ws.input_svg(), &serialize_svg(&doc))?;
        }
        (None, Source::Rasters(_)) => {
            return Err(PipelineError::new(Stage::Config, None, "ingest mode needs an input SVG"));
        }
    }
    Ok(())
}

fn run_stages(cfg: &PipelineConfig, inputs: &PipelineInputs, ws: &Workspace) -> Result<PipelineSummary> {
    let manifest = stage_plan(cfg, ws)?;
    match &inputs.source {
        Source::Scene(scene) => stage_synth(cfg, ws, &manifest, scene)?,
        Source::Rasters(dir) => stage_ingest(ws, &manifest, dir)?,
    }
    stage_input(ws, &manifest, inputs)?;
    let backend = make_backend(cfg, ws)?;
    let residual = stage_segment(cfg, ws, &manifest, backend.as_ref())?;
    stage_trace(cfg, ws, &manifest)?;
    stage_consolidate(cfg, ws, &manifest)?;
    stage_align(cfg, ws, &manifest)?;
    let report = stage_metrics(ws, &manifest)?;
    Ok(PipelineSummary { manifest, residual, report })
}

/// Runs every stage in order. On failure the artifacts written so far stay
/// in place and `errors.json` records the failing stage and view.
pub fn run_pipeline(cfg: &PipelineConfig, inputs: &PipelineInputs) -> Result<PipelineSummary> {
    let ws = Workspace::new(&cfg.workspace);
    let _ = std::fs::remove_file(ws.errors_json());
    run_stages(cfg, inputs, &ws).inspect_err(|e| ws.write_error(e))
}
