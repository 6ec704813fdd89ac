use mvsvg::pipeline::{
    run_pipeline, BackendConfig, PipelineConfig, PipelineInputs, Source, Stage, ViewMode, ViewsConfig, Workspace,
};
use mvsvg::propagate::MatchWeights;
use mvsvg::synthscene::fixture_pipeline_scene;
use mvsvg::vectordoc::parse_svg;
use mvsvg::viewsphere::ViewId;

fn synthetic() -> PipelineInputs {
    PipelineInputs { input_svg: None, source: Source::Scene(fixture_pipeline_scene()) }
}

#[test]
fn heuristic_backend_runs_deterministically() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = |root: &std::path::Path| PipelineConfig {
        workspace: root.to_path_buf(),
        backend: BackendConfig::Heuristic { weights: MatchWeights::default() },
        ..Default::default()
    };
    let sa = run_pipeline(&cfg(a.path()), &synthetic()).unwrap();
    run_pipeline(&cfg(b.path()), &synthetic()).unwrap();
    assert_eq!(sa.report.per_view.len(), 51);
    for v in sa.manifest.ids() {
        let (wa, wb) = (Workspace::new(a.path()), Workspace::new(b.path()));
        let bytes = std::fs::read(wa.svg(v)).unwrap();
        assert_eq!(bytes, std::fs::read(wb.svg(v)).unwrap(), "view {v}");
        assert!(!parse_svg(&bytes).unwrap().groups().is_empty(), "view {v} is empty");
    }
    assert_eq!(
        std::fs::read(Workspace::new(a.path()).report_json()).unwrap(),
        std::fs::read(Workspace::new(b.path()).report_json()).unwrap()
    );
}

#[test]
fn sphere_mode_uses_the_traversal_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        workspace: dir.path().to_path_buf(),
        views: ViewsConfig { mode: ViewMode::Sphere { n: 20 }, start: None },
        ..Default::default()
    };
    let s = run_pipeline(&cfg, &synthetic()).unwrap();
    assert_eq!(s.report.per_view.len(), 20);
    assert_eq!(s.report.adjacency.len(), 19);
    assert_eq!(s.report.adjacency[0].0, s.manifest.key_view());
}

#[test]
fn backend_failure_is_recorded_with_its_view() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        workspace: dir.path().to_path_buf(),
        backend: BackendConfig::External { command: "echo 'no model' >&2; exit 3".into() },
        ..Default::default()
    };
    let e = run_pipeline(&cfg, &synthetic()).unwrap_err();
    assert_eq!(e.stage, Stage::Segment);
    let key = ViewId(25);
    let first = e.view.unwrap();
    assert_ne!(first, key);
    assert!(e.message.contains("no model"), "{}", e.message);

    let ws = Workspace::new(dir.path());
    let recorded: serde_json::Value = serde_json::from_slice(&std::fs::read(ws.errors_json()).unwrap()).unwrap();
    assert_eq!(recorded["errors"][0]["stage"], "segment");
    assert_eq!(recorded["errors"][0]["view"], first.0);
    // rasters from earlier stages stay in place
    assert!(ws.raster(key).is_file());
}

#[test]
fn ingest_without_input_svg_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let rasters = tempfile::tempdir().unwrap();
    let first = run_pipeline(
        &PipelineConfig { workspace: rasters.path().to_path_buf(), ..Default::default() },
        &synthetic(),
    )
    .unwrap();
    assert_eq!(first.report.per_view.len(), 51);
    let cfg = PipelineConfig { workspace: dir.path().to_path_buf(), ..Default::default() };
    let inputs = PipelineInputs { input_svg: None, source: Source::Rasters(rasters.path().join("rasters")) };
    let e = run_pipeline(&cfg, &inputs).unwrap_err();
    assert_eq!(e.stage, Stage::Config);
}

#[test]
fn ingested_rasters_reproduce_the_synthetic_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let wa = Workspace::new(a.path());
    run_pipeline(&PipelineConfig { workspace: a.path().to_path_buf(), ..Default::default() }, &synthetic()).unwrap();
    // the oracle needs the scene even for ingested rasters
    std::fs::create_dir_all(b.path()).unwrap();
    std::fs::copy(wa.scene_json(), Workspace::new(b.path()).scene_json()).unwrap();
    let inputs = PipelineInputs { input_svg: Some(wa.input_svg()), source: Source::Rasters(a.path().join("rasters")) };
    let s = run_pipeline(&PipelineConfig { workspace: b.path().to_path_buf(), ..Default::default() }, &inputs).unwrap();
    for v in s.manifest.ids() {
        assert_eq!(std::fs::read(wa.svg(v)).unwrap(), std::fs::read(Workspace::new(b.path()).svg(v)).unwrap());
    }
}
