//! `drape`: render outfits, predict and edit control points, check templates,
//! label layouts and run the editing service.
//!
//! Exit status is 0 on success, 2 for invalid input and 3 when rendering fails.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use drape_core::dsl::{self, library_with_shipped, print_template, EditTemplate};
use drape_core::layout::{label_closure, label_tuck, ClosureThresholds};
use drape_core::pipeline::{
    batch_apply, interpolate, BatchOutcome, Engine, ErrorClass, Outfit, PersonScene, PipelineError,
};
use drape_core::raster::{self, Rgba, RgbaImage};
use drape_core::{
    asset, default_schema, BodyPose, ControlPointSet, Dims, GarmentAsset, SemanticLayout, StyleVector,
};

#[derive(Parser)]
#[command(name = "drape", version, about = "Controllable garment drape engine")]
struct Cli {
    /// Extra template directory, searched before the shipped templates.
    #[arg(long, global = true, env = "DRAPE_TEMPLATES")]
    templates: Option<PathBuf>,
    /// Worker threads for warping (default: all cores; RAYON_NUM_THREADS also works).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render an outfit spec to a draft image, layouts, points and reports.
    Render {
        #[arg(long)]
        outfit: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Control-point operations.
    #[command(subcommand)]
    Points(PointsCommand),
    /// Edit-template operations.
    #[command(subcommand)]
    Template(TemplateCommand),
    /// Label closure from a layout, and tuck from points and a pose.
    Label {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long, requires = "pose")]
        points: Option<PathBuf>,
        #[arg(long, requires = "points")]
        pose: Option<PathBuf>,
    },
    /// Render a template in N increments and report how closely the
    /// silhouette follows the moved points.
    Interpolate {
        #[arg(long)]
        outfit: PathBuf,
        #[arg(long)]
        template: String,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        /// Write each step's render into `<out>/step_<k>/`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the bundled demo outfit.
    Demo {
        #[arg(long, default_value = "assets/demo")]
        out: PathBuf,
    },
    /// Run the HTTP editing service.
    Serve(ServeArgs),
}

#[derive(Subcommand)]
enum PointsCommand {
    /// Predict a garment's control points for a pose.
    Predict {
        /// Asset bundle directory.
        #[arg(long)]
        asset: PathBuf,
        #[arg(long)]
        pose: PathBuf,
        /// Style entry, e.g. `tuck=full_tuck`. Repeatable.
        #[arg(long = "style", value_parser = parse_key_value)]
        style: Vec<(String, String)>,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TemplateCommand {
    /// Parse and lint template files.
    Check {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Print the canonical form of every template.
        #[arg(long)]
        print: bool,
    },
    /// Apply a template to every applicable garment of a catalog.
    Apply {
        #[arg(long)]
        template: String,
        /// Directory of asset bundles.
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        pose: PathBuf,
        /// Person image; a plain backdrop when omitted.
        #[arg(long, requires = "layout")]
        person: Option<PathBuf>,
        #[arg(long, requires = "person")]
        layout: Option<PathBuf>,
        /// Canvas for the plain backdrop, `WIDTHxHEIGHT`.
        #[arg(long, default_value = "512x768", value_parser = parse_dims)]
        canvas: Dims,
        /// Write each render into `<out>/<garment id>/`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "DRAPE_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Root that posted outfit specs resolve paths against.
    #[arg(long, env = "DRAPE_ASSETS", default_value = ".")]
    assets: PathBuf,
    /// Session snapshot directory; persistence is off when omitted.
    #[arg(long, env = "DRAPE_SNAPSHOTS")]
    snapshots: Option<PathBuf>,
    /// Seconds between snapshots.
    #[arg(long, env = "DRAPE_SNAPSHOT_INTERVAL", default_value_t = 30)]
    snapshot_interval: u64,
}

/// An error with the exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn invalid(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 2,
            error: error.into(),
        }
    }

    fn render(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 3,
            error: error.into(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e.class {
            ErrorClass::Validation => Self::invalid(e),
            ErrorClass::Render => Self::render(e),
        }
    }
}

type Outcome = Result<(), Failure>;

fn parse_key_value(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got \"{s}\""))
}

fn parse_dims(s: &str) -> Result<Dims, String> {
    let (w, h) = s
        .split_once('x')
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got \"{s}\""))?;
    let w: u32 = w.parse().map_err(|_| format!("bad width in \"{s}\""))?;
    let h: u32 = h.parse().map_err(|_| format!("bad height in \"{s}\""))?;
    if w == 0 || h == 0 {
        return Err("canvas dimensions must be positive".into());
    }
    Ok(Dims::new(w, h))
}

fn library(dir: Option<&Path>) -> Result<Vec<EditTemplate>, Failure> {
    library_with_shipped(dir, default_schema()).map_err(Failure::invalid)
}

fn find_template(library: &[EditTemplate], name: &str) -> Result<EditTemplate, Failure> {
    library
        .iter()
        .find(|t| t.name == name)
        .cloned()
        .ok_or_else(|| Failure::invalid(anyhow!("unknown template \"{name}\"")))
}

fn load_pose(path: &Path) -> Result<BodyPose, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| path.display().to_string())
        .map_err(Failure::invalid)?;
    let pose = BodyPose::from_toml(&text)
        .and_then(|p| p.validate().map(|_| p))
        .with_context(|| path.display().to_string())
        .map_err(Failure::invalid)?;
    Ok(pose)
}

fn render(cli: &Cli, outfit: &Path, out: &Path) -> Outcome {
    let engine = Engine::default();
    let library = library(cli.templates.as_deref())?;
    let start = Instant::now();
    let outfit = Outfit::from_file(outfit, engine.schema, &library)?;
    let result = engine.render(&outfit)?;
    let written = result.write(&outfit, out)?;
    log::info!("rendered {} garment(s) in {:.3?}", outfit.garments.len(), start.elapsed());
    for p in written {
        println!("{}", p.display());
    }
    for apps in &result.edits {
        for a in apps {
            if let drape_core::pipeline::ApplicationOutcome::Skipped { reason } = &a.outcome {
                eprintln!("warning: template \"{}\" skipped on {}: {reason}", a.template, a.garment_id);
            }
        }
    }
    let remaining = &result.coordination.remaining;
    if !remaining.is_empty() {
        let mut garments: Vec<&str> = remaining.iter().map(|v| outfit.garments[v.inner].asset.id.as_str()).collect();
        garments.dedup();
        eprintln!(
            "note: {} point(s) of {} lie outside the outerwear above them; see reports.json, or set coordination = \"fix\"",
            remaining.len(),
            garments.join(", ")
        );
    }
    Ok(())
}

fn predict(asset: &Path, pose: &Path, style: &[(String, String)], out: Option<&Path>) -> Outcome {
    let engine = Engine::default();
    let asset = GarmentAsset::load_bundle(asset, engine.schema).map_err(Failure::invalid)?;
    let pose = load_pose(pose)?;
    let style: BTreeMap<String, String> = style.iter().cloned().collect();
    let style = StyleVector::from_map(&style).map_err(Failure::invalid)?;
    let points: ControlPointSet = engine
        .library
        .find(asset.category, &style)
        .and_then(|t| t.fit(engine.schema, &pose))
        .with_context(|| format!("predicting {}", asset.id))
        .map_err(Failure::invalid)?;
    let text = points.to_toml();
    match out {
        Some(p) => std::fs::write(p, text)
            .with_context(|| p.display().to_string())
            .map_err(Failure::render)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn check(files: &[PathBuf], print: bool) -> Outcome {
    let mut failed = 0;
    for f in files {
        match dsl::parse_file(f, default_schema()) {
            Ok(ts) => {
                println!("{}: {} template(s) ok", f.display(), ts.len());
                if print {
                    for t in &ts {
                        println!("{}", print_template(t));
                    }
                }
            }
            Err(e) => {
                eprintln!("{e}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        return Err(Failure::invalid(anyhow!("{failed} file(s) failed")));
    }
    Ok(())
}

struct ApplyArgs<'a> {
    template: &'a str,
    catalog: &'a Path,
    pose: &'a Path,
    person: Option<&'a Path>,
    layout: Option<&'a Path>,
    canvas: Dims,
    out: Option<&'a Path>,
}

fn apply(cli: &Cli, a: ApplyArgs<'_>) -> Outcome {
    let engine = Engine::default();
    let template = find_template(&library(cli.templates.as_deref())?, a.template)?;
    let pose = load_pose(a.pose)?;
    let person = match (a.person, a.layout) {
        (Some(img), Some(layout)) => PersonScene {
            image: raster::load_rgba(img).map_err(Failure::invalid)?,
            pose,
            layout: SemanticLayout::load(layout).map_err(Failure::invalid)?,
        },
        _ => PersonScene {
            image: image_blank(a.canvas),
            pose,
            layout: SemanticLayout::new(a.canvas),
        },
    };
    let mut catalog = Vec::new();
    for dir in asset::catalog_dirs(a.catalog).map_err(Failure::invalid)? {
        catalog.push(GarmentAsset::load_bundle(&dir, engine.schema).map_err(Failure::invalid)?);
    }
    if catalog.is_empty() {
        return Err(Failure::invalid(anyhow!("no asset bundles under {}", a.catalog.display())));
    }
    let items = batch_apply(&engine, &catalog, &template, &person);
    let mut worst: Option<Failure> = None;
    let (mut rendered, mut skipped) = (0, 0);
    for item in items {
        match item.outcome {
            BatchOutcome::Rendered(r) => {
                rendered += 1;
                match a.out {
                    Some(out) => {
                        let dir = out.join(&item.garment_id);
                        let outfit = Outfit::new(
                            person.clone(),
                            vec![drape_core::pipeline::Garment {
                                asset: catalog.iter().find(|g| g.id == item.garment_id).cloned().expect("catalog item"),
                                style: StyleVector::default(),
                            }],
                        );
                        r.write(&outfit, &dir)?;
                        println!("{}\trendered\t{}", item.garment_id, dir.display());
                    }
                    None => println!("{}\trendered", item.garment_id),
                }
            }
            BatchOutcome::Skipped { reason } => {
                skipped += 1;
                println!("{}\tskipped\t{reason}", item.garment_id);
            }
            BatchOutcome::Failed(e) => {
                println!("{}\tfailed\t{e}", item.garment_id);
                let f = Failure::from(e);
                if worst.as_ref().is_none_or(|w| f.code > w.code) {
                    worst = Some(f);
                }
            }
        }
    }
    eprintln!("{rendered} rendered, {skipped} skipped, {} total", catalog.len());
    match worst {
        Some(f) => Err(Failure {
            code: f.code,
            error: anyhow!("some catalog items failed; first of the worst kind: {}", f.error),
        }),
        None => Ok(()),
    }
}

fn image_blank(dims: Dims) -> RgbaImage {
    RgbaImage::from_pixel(dims.width, dims.height, Rgba([255, 255, 255, 255]))
}

fn label(layout: &Path, points: Option<&Path>, pose: Option<&Path>) -> Outcome {
    let layout = SemanticLayout::load(layout).map_err(Failure::invalid)?;
    let mut doc = serde_json::Map::new();
    match label_closure(&layout, &ClosureThresholds::default()) {
        Ok(l) => doc.insert("closure".into(), serde_json::to_value(l).expect("label serializes")),
        Err(e) => doc.insert("closure".into(), serde_json::json!({ "error": e.to_string() })),
    };
    if let (Some(points), Some(pose)) = (points, pose) {
        let text = std::fs::read_to_string(points)
            .with_context(|| points.display().to_string())
            .map_err(Failure::invalid)?;
        let k = ControlPointSet::from_toml(&text)
            .with_context(|| points.display().to_string())
            .map_err(Failure::invalid)?;
        let pose = load_pose(pose)?;
        let l = label_tuck(default_schema(), &k, &pose).map_err(Failure::invalid)?;
        doc.insert("tuck".into(), serde_json::to_value(l).expect("label serializes"));
    }
    println!("{}", serde_json::to_string_pretty(&doc).expect("labels serialize"));
    Ok(())
}

fn run_interpolate(cli: &Cli, outfit: &Path, template: &str, steps: usize, out: Option<&Path>) -> Outcome {
    let engine = Engine::default();
    let library = library(cli.templates.as_deref())?;
    let template = find_template(&library, template)?;
    let outfit = Outfit::from_file(outfit, engine.schema, &library)?;
    let results = interpolate(&engine, &outfit, &template, steps)?;
    for s in &results {
        match out {
            Some(out) => {
                let dir = out.join(format!("step_{}", s.step));
                s.result.write(&outfit, &dir)?;
                println!("step {}\tfactor {:.4}\tdeviation {:.5}\t{}", s.step, s.factor, s.deviation, dir.display());
            }
            None => println!("step {}\tfactor {:.4}\tdeviation {:.5}", s.step, s.factor, s.deviation),
        }
    }
    Ok(())
}

fn serve(cli: &Cli, args: &ServeArgs) -> Outcome {
    let mut config = drape_service::Config::new(&args.assets);
    config.template_dir = cli.templates.clone();
    config.snapshot_dir = args.snapshots.clone();
    config.snapshot_interval = Duration::from_secs(args.snapshot_interval.max(1));
    let state = Arc::new(drape_service::AppState::new(config).map_err(Failure::invalid)?);
    let restored = state.restore_snapshots().map_err(Failure::invalid)?;
    if restored > 0 {
        log::info!("restored {restored} session(s)");
    }
    let runtime = tokio::runtime::Runtime::new().map_err(Failure::render)?;
    runtime
        .block_on(async {
            let listener = tokio::net::TcpListener::bind(args.listen).await?;
            log::info!("listening on {}", listener.local_addr()?);
            let shutdown = async {
                let _ = tokio::signal::ctrl_c().await;
            };
            drape_service::serve(listener, state, shutdown).await
        })
        .map_err(Failure::render)
}

fn run(cli: &Cli) -> Outcome {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(Failure::invalid)?;
    }
    match &cli.command {
        Command::Render { outfit, out } => render(cli, outfit, out),
        Command::Points(PointsCommand::Predict { asset, pose, style, out }) => {
            predict(asset, pose, style, out.as_deref())
        }
        Command::Template(TemplateCommand::Check { files, print }) => check(files, *print),
        Command::Template(TemplateCommand::Apply {
            template,
            catalog,
            pose,
            person,
            layout,
            canvas,
            out,
        }) => apply(
            cli,
            ApplyArgs {
                template,
                catalog,
                pose,
                person: person.as_deref(),
                layout: layout.as_deref(),
                canvas: *canvas,
                out: out.as_deref(),
            },
        ),
        Command::Label { layout, points, pose } => label(layout, points.as_deref(), pose.as_deref()),
        Command::Interpolate {
            outfit,
            template,
            steps,
            out,
        } => run_interpolate(cli, outfit, template, *steps, out.as_deref()),
        Command::Demo { out } => {
            let spec = drape_core::demo::write_outfit(out)?;
            println!("{}", spec.display());
            Ok(())
        }
        Command::Serve(args) => serve(cli, args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
