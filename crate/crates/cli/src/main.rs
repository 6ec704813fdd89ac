use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mvsvg::metrics::{compare_reports, StabilityReport};
use mvsvg::pipeline::{
    make_backend, run_pipeline, stage_align, stage_consolidate, stage_ingest, stage_input, stage_metrics, stage_plan,
    stage_segment, stage_synth, stage_trace, BackendConfig, PipelineConfig, PipelineError, PipelineInputs, Source,
    Stage, ViewManifest, Workspace,
};
use mvsvg::propagate::MatchWeights;
use mvsvg::synthscene::{fixture_ablation_scene, fixture_occlusion_scene, fixture_pipeline_scene, SceneSpec};

/// Multi-view SVG generation from flat-design views of one object.
#[derive(Debug, Parser)]
#[command(name = "mvsvg", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR")]
    workspace: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendKind>,
    /// Seed of the oracle backend's dropout noise.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-view stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Oracle,
    Heuristic,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Fixture {
    Occlusion,
    Ablation,
    Pipeline,
}

#[derive(Debug, Args)]
#[group(multiple = false)]
struct SceneArgs {
    /// Scene description as JSON.
    #[arg(long, value_name = "FILE")]
    scene: Option<PathBuf>,
    /// Built-in synthetic scene.
    #[arg(long, value_enum)]
    fixture: Option<Fixture>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample views and plan the traversal; writes views.json.
    PlanViews,
    /// Render a synthetic scene into rasters/ and write input.svg.
    Synth {
        #[command(flatten)]
        scene: SceneArgs,
        /// Input SVG; defaults to the traced key view.
        #[arg(long, value_name = "FILE")]
        input_svg: Option<PathBuf>,
    },
    /// Copy <DIR>/<view id>.png rasters into the workspace.
    Ingest {
        #[arg(long, value_name = "DIR")]
        rasters: PathBuf,
        #[arg(long, value_name = "FILE")]
        input_svg: PathBuf,
    },
    /// Key-view segmentation, propagation and residual discovery.
    Segment,
    /// Trace label maps into per-view SVGs.
    Trace,
    /// Micro-stroke removal and colour consolidation of svg/.
    Consolidate,
    /// Align svg/ colours to the input SVG's palette.
    Align,
    /// Write report.json, or compare two reports.
    Metrics {
        /// Baseline and candidate reports (files or workspaces); prints the
        /// reduction of the candidate relative to the baseline.
        #[arg(long, num_args = 2, value_names = ["BASELINE", "OURS"])]
        compare: Option<Vec<PathBuf>>,
    },
    /// Every stage in order.
    Pipeline {
        #[command(flatten)]
        scene: SceneArgs,
        /// Directory of <view id>.png rasters instead of a synthetic scene.
        #[arg(long, value_name = "DIR", conflicts_with_all = ["scene", "fixture"])]
        rasters: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        input_svg: Option<PathBuf>,
    },
}

fn config_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::new(Stage::Config, None, e)
}

/// Defaults, then the file, then flags.
fn resolve_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(w) = &cli.workspace {
        cfg.workspace = w.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = Some(j);
    }
    if let Some(kind) = cli.backend {
        cfg.backend = match (kind, &cfg.backend) {
            (BackendKind::Oracle, b @ BackendConfig::Oracle { .. })
            | (BackendKind::Heuristic, b @ BackendConfig::Heuristic { .. })
            | (BackendKind::External, b @ BackendConfig::External { .. }) => b.clone(),
            (BackendKind::Oracle, _) => BackendConfig::Oracle { dropout: 0.0 },
            (BackendKind::Heuristic, _) => BackendConfig::Heuristic { weights: MatchWeights::default() },
            (BackendKind::External, _) => {
                return Err(config_err("the external backend needs [backend] command in the config file"))
            }
        };
    }
    Ok(cfg)
}

fn load_scene(args: &SceneArgs) -> Result<Option<SceneSpec>, PipelineError> {
    if let Some(path) = &args.scene {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        return SceneSpec::from_json(&text).map(Some).map_err(|e| config_err(format!("{}: {e}", path.display())));
    }
    Ok(args.fixture.map(|f| match f {
        Fixture::Occlusion => fixture_occlusion_scene(),
        Fixture::Ablation => fixture_ablation_scene(),
        Fixture::Pipeline => fixture_pipeline_scene(),
    }))
}

fn read_report(path: &Path) -> Result<StabilityReport, PipelineError> {
    let file = if path.is_dir() { Workspace::new(path).report_json() } else { path.to_path_buf() };
    let err = |e: &dyn std::fmt::Display| PipelineError::new(Stage::Metrics, None, format!("{}: {e}", file.display()));
    let text = std::fs::read_to_string(&file).map_err(|e| err(&e))?;
    StabilityReport::from_json(&text).map_err(|e| err(&e))
}

fn execute(cli: &Cli, cfg: &PipelineConfig, ws: &Workspace) -> Result<(), PipelineError> {
    match &cli.command {
        Command::PlanViews => {
            let m = stage_plan(cfg, ws)?;
            println!("planned {} views, key view {}", m.views.len(), m.key_view());
        }
        Command::Synth { scene, input_svg } => {
            let scene = load_scene(scene)?.ok_or_else(|| config_err("synth needs --scene or --fixture"))?;
            let m = ViewManifest::load(ws)?;
            stage_synth(cfg, ws, &m, &scene)?;
            stage_input(ws, &m, &PipelineInputs { input_svg: input_svg.clone(), source: Source::Scene(scene) })?;
        }
        Command::Ingest { rasters, input_svg } => {
            let m = ViewManifest::load(ws)?;
            stage_ingest(ws, &m, rasters)?;
            let inputs = PipelineInputs { input_svg: Some(input_svg.clone()), source: Source::Rasters(rasters.clone()) };
            stage_input(ws, &m, &inputs)?;
        }
        Command::Segment => {
            let m = ViewManifest::load(ws)?;
            let backend = make_backend(cfg, ws)?;
            let out = stage_segment(cfg, ws, &m, backend.as_ref())?;
            println!("{} residual pass(es), {} new part(s)", out.passes, out.new_parts().len());
        }
        Command::Trace => stage_trace(cfg, ws, &ViewManifest::load(ws)?)?,
        Command::Consolidate => stage_consolidate(cfg, ws, &ViewManifest::load(ws)?)?,
        Command::Align => stage_align(cfg, ws, &ViewManifest::load(ws)?)?,
        Command::Metrics { compare: Some(paths) } => {
            let (baseline, ours) = (read_report(&paths[0])?, read_report(&paths[1])?);
            let r = compare_reports(&baseline, &ours).map_err(|e| PipelineError::new(Stage::Metrics, None, e))?;
            println!("{}", serde_json::to_string_pretty(&r).expect("serializes"));
        }
        Command::Metrics { compare: None } => {
            let report = stage_metrics(ws, &ViewManifest::load(ws)?)?;
            println!("{}", serde_json::to_string_pretty(&report.summary).expect("serializes"));
        }
        Command::Pipeline { scene, rasters, input_svg } => {
            let source = match (load_scene(scene)?, rasters) {
                (Some(s), _) => Source::Scene(s),
                (None, Some(dir)) => Source::Rasters(dir.clone()),
                (None, None) => return Err(config_err("pipeline needs --scene, --fixture or --rasters")),
            };
            let summary = run_pipeline(cfg, &PipelineInputs { input_svg: input_svg.clone(), source })?;
            println!(
                "{} views written to {}; {} new part(s) from residual discovery",
                summary.manifest.views.len(),
                ws.root.join("svg").display(),
                summary.residual.new_parts().len()
            );
            println!("{}", serde_json::to_string_pretty(&summary.report.summary).expect("serializes"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let fallback = Workspace::new(cli.workspace.clone().unwrap_or_else(|| PipelineConfig::default().workspace));
    let cfg = match resolve_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            fallback.write_error(&e);
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Some(n) = cfg.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("cannot size the worker pool: {e}");
        }
    }
    let ws = Workspace::new(&cfg.workspace);
    match execute(&cli, &cfg, &ws) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // run_pipeline records its own failures
            if !matches!(cli.command, Command::Pipeline { .. }) || e.stage == Stage::Config {
                ws.write_error(&e);
            }
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
