use std::path::Path;
use std::process::{Command, Output};

use mvsvg::maskops::min_region_px;
use mvsvg::synthscene::{fixture_occlusion_scene, render_labels, visible_areas};
use mvsvg::vectordoc::parse_svg;
use mvsvg::viewsphere::turntable_grid;

fn mvsvg(args: &[&str], ws: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvsvg"))
        .args(args)
        .arg("--workspace")
        .arg(ws)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn errors(ws: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(ws.join("errors.json")).expect("errors.json written")).unwrap()
}

#[test]
fn occlusion_pipeline_emits_every_view() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path();
    let out = mvsvg(&["pipeline", "--fixture", "occlusion"], ws);
    assert_ok(&out);
    assert!(!ws.join("errors.json").exists());

    let scene = fixture_occlusion_scene();
    let floor = min_region_px(scene.image_size.0, scene.image_size.1);
    let mut all_three = 0;
    for v in turntable_grid() {
        let doc = parse_svg(&std::fs::read(ws.join(format!("svg/{}.svg", v.id()))).unwrap()).unwrap();
        let visible = visible_areas(&render_labels(&scene, &v)).values().filter(|a| **a >= floor).count();
        assert!(doc.groups().len() >= visible, "view {}: {} groups, {visible} visible", v.id(), doc.groups().len());
        if doc.groups().len() == 3 {
            all_three += 1;
        }
    }
    assert!(all_three > 0);
    for f in ["views.json", "registry.json", "report.json", "input.svg", "scene.json"] {
        assert!(ws.join(f).is_file(), "{f}");
    }
}

#[test]
fn staged_run_matches_pipeline() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_ok(&mvsvg(&["pipeline", "--fixture", "pipeline"], a.path()));
    for args in [
        &["plan-views"][..],
        &["synth", "--fixture", "pipeline"],
        &["segment"],
        &["trace"],
        &["consolidate"],
        &["align"],
        &["metrics"],
    ] {
        assert_ok(&mvsvg(args, b.path()));
    }
    for v in turntable_grid() {
        let name = format!("svg/{}.svg", v.id());
        assert_eq!(std::fs::read(a.path().join(&name)).unwrap(), std::fs::read(b.path().join(&name)).unwrap(), "{name}");
    }
    assert_eq!(std::fs::read(a.path().join("report.json")).unwrap(), std::fs::read(b.path().join("report.json")).unwrap());
}

#[test]
fn ingest_dimension_mismatch_names_the_view() {
    let (small, large, ws) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, fixture) in [(small.path(), "ablation"), (large.path(), "occlusion")] {
        assert_ok(&mvsvg(&["plan-views"], dir));
        assert_ok(&mvsvg(&["synth", "--fixture", fixture], dir));
    }
    let rasters = small.path().join("rasters");
    std::fs::copy(large.path().join("rasters/7.png"), rasters.join("7.png")).unwrap();
    let input = small.path().join("input.svg");
    let out = mvsvg(
        &["pipeline", "--rasters", rasters.to_str().unwrap(), "--input-svg", input.to_str().unwrap()],
        ws.path(),
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("ingest stage failed at view 7"), "{stderr}");
    let e = &errors(ws.path())["errors"][0];
    assert_eq!(e["stage"], "ingest");
    assert_eq!(e["view"], 7);
}

#[test]
fn metrics_compares_two_sequences() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_ok(&mvsvg(&["pipeline", "--fixture", "ablation", "--backend", "oracle"], a.path()));
    assert_ok(&mvsvg(&["pipeline", "--fixture", "pipeline"], b.path()));
    let out = Command::new(env!("CARGO_BIN_EXE_mvsvg"))
        .args(["metrics", "--compare"])
        .arg(a.path())
        .arg(b.path().join("report.json"))
        .arg("--workspace")
        .arg(b.path())
        .output()
        .unwrap();
    assert_ok(&out);
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["rmse_path", "mean_nbr_color_delta", "mean_path"] {
        assert!(r.get(key).is_some(), "{key} missing from {r}");
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("from-flag");
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "workspace = \"unused\"\nseed = 3\n[views]\nmode = \"sphere\"\nn = 12\n").unwrap();
    let out = mvsvg(&["plan-views", "--config", cfg.to_str().unwrap()], &ws);
    assert_ok(&out);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(ws.join("views.json")).unwrap()).unwrap();
    assert_eq!(m["views"].as_array().unwrap().len(), 12);
    assert!(!dir.path().join("unused").exists());

    let out = mvsvg(&["plan-views", "--backend", "external"], &ws);
    assert!(!out.status.success());
    assert_eq!(errors(&ws)["errors"][0]["stage"], "config");
}

#[test]
fn missing_manifest_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = mvsvg(&["trace"], dir.path());
    assert!(!out.status.success());
    assert_eq!(errors(dir.path())["errors"][0]["stage"], "plan");
}
