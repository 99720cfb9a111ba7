use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use slidepress_core::catalog::Catalog;
use slidepress_core::deepzoom::{build_pyramid, build_pyramid_from_slide, BuildOptions, PyramidLayout, TileFormat};
use slidepress_core::pipeline::{requeue_corrected, run_batch, watch, PipelineConfig, RunReport};
use slidepress_core::slide_io::{generate_synthetic, SyntheticSpec};
use slidepress_core::snapshot::{create_snapshot, review_override, SnapshotConfig};
use slidepress_core::splitter::{split_slide, Algorithm, SplitConfig};
use slidepress_core::{codec, open_slide, Exec};

#[derive(Parser)]
#[command(name = "slidepress", version, about = "Whole-slide image tiling, snapshots and Deep Zoom publishing")]
struct Cli {
    /// Log filter, e.g. `info` or `slidepress_core=debug`.
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a slide's dimensions, magnification and stored levels.
    Inspect { slide: PathBuf },
    /// Cut slides into tiles, setting empty tiles aside.
    Split(SplitArgs),
    /// Build a Deep Zoom pyramid from a slide or a JPEG/PNG image.
    Dzi(DziArgs),
    /// Write the centered web snapshot of a slide.
    Snapshot(SnapshotArgs),
    /// Render a `.synth` description into a `.wtif` slide plus sidecar.
    Synth {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Folder-driven batch publishing.
    #[command(subcommand)]
    Pipeline(PipelineCommand),
    /// Serve the specimen API and published pyramids over HTTP.
    Serve(ServeArgs),
    /// Specimen catalog maintenance.
    #[command(subcommand)]
    Specimen(SpecimenCommand),
}

#[derive(Args)]
struct SplitArgs {
    /// Splitter properties file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tile_width: Option<u32>,
    #[arg(long)]
    tile_height: Option<u32>,
    #[arg(long)]
    magnification: Option<f64>,
    /// none, intensity or compression.
    #[arg(long)]
    filter: Option<Algorithm>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    sequential: bool,
    #[arg(required = true)]
    slides: Vec<PathBuf>,
}

#[derive(Args)]
struct DziArgs {
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Pyramid name; defaults to the input file stem.
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value_t = 254)]
    tile_size: u32,
    #[arg(long, default_value_t = 1)]
    overlap: u32,
    #[arg(long, default_value = "jpg")]
    format: TileFormat,
    #[arg(long, default_value_t = 90)]
    quality: u8,
    /// For slide input; defaults to the objective power.
    #[arg(long)]
    magnification: Option<f64>,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct SnapshotArgs {
    slide: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    magnification: Option<f64>,
    #[arg(long, default_value_t = 85)]
    quality: u8,
    #[arg(long)]
    watermark: Option<PathBuf>,
}

#[derive(Subcommand)]
enum PipelineCommand {
    /// Process the inbox once, or repeatedly with --watch.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        watch: bool,
        /// Stop watching after this many batches.
        #[arg(long, requires = "watch")]
        iterations: Option<usize>,
    },
    /// Move a corrected snapshot from JPEG-Failed back to JPEG-Processing.
    Requeue {
        old: PathBuf,
        new_id: String,
        #[arg(long)]
        config: PathBuf,
    },
    /// Stage a hand-made snapshot; it replaces the automatic one.
    Stage {
        jpeg: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    publish_dir: PathBuf,
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Allowed CORS origin (any when omitted).
    #[arg(long)]
    cors_origin: Option<String>,
}

#[derive(Subcommand)]
enum SpecimenCommand {
    /// Import specimen_id,cancer_type,stain,biomarkers,notes rows.
    Import {
        csv: PathBuf,
        #[arg(long)]
        store: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_new(&cli.log).unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn exec(sequential: bool) -> Exec {
    if sequential {
        Exec::Sequential
    } else {
        Exec::default()
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Inspect { slide } => inspect(&slide)?,
        Command::Split(args) => split(args)?,
        Command::Dzi(args) => dzi(args)?,
        Command::Snapshot(args) => {
            let src = open_slide(&args.slide)?;
            let config = SnapshotConfig {
                magnification: args.magnification,
                jpeg_quality: args.quality,
                watermark_path: args.watermark,
                ..Default::default()
            };
            let r = create_snapshot(&src, &config, &args.out)?;
            println!(
                "{} {}x{} at {}x (region {},{})",
                r.jpeg_path.display(),
                r.width,
                r.height,
                r.region.magnification,
                r.region.x,
                r.region.y
            );
        }
        Command::Synth { spec, out } => {
            let text = std::fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let parsed = SyntheticSpec::parse(&text)?;
            let src = generate_synthetic(&parsed, &out)?;
            println!("{} {}x{}", out.display(), src.base_width(), src.base_height());
        }
        Command::Pipeline(cmd) => return pipeline(cmd),
        Command::Serve(args) => {
            let config = slidepress_server::ServerConfig {
                publish_dir: args.publish_dir,
                store_path: args.store,
                port: args.port,
                cors_origin: args.cors_origin,
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(slidepress_server::serve(config)).map_err(anyhow::Error::msg)?;
        }
        Command::Specimen(SpecimenCommand::Import { csv, store }) => {
            let catalog = Catalog::open(&store)?;
            let file = std::fs::File::open(&csv).with_context(|| format!("opening {}", csv.display()))?;
            let n = catalog.import_csv(file)?;
            println!("imported {n} specimens into {}", store.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn inspect(path: &Path) -> Result<()> {
    let src = open_slide(path)?;
    println!("slide            {}", path.display());
    println!("dimensions       {}x{}", src.base_width(), src.base_height());
    println!("objective power  {}", src.objective_power());
    match src.mpp() {
        (Some(x), Some(y)) => println!("mpp              {x} x {y}"),
        _ => println!("mpp              unknown"),
    }
    for l in src.levels() {
        println!(
            "level {:<2}         {}x{} tiles {}x{} downsample {}",
            l.index, l.width, l.height, l.tile_width, l.tile_height, l.downsample
        );
    }
    for w in src.warnings() {
        println!("warning          {w}");
    }
    Ok(())
}

fn split(args: SplitArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(p) => SplitConfig::load(p)?,
        None => SplitConfig::default(),
    };
    if let Some(v) = args.tile_width {
        config.tile_width = v;
    }
    if let Some(v) = args.tile_height {
        config.tile_height = v;
    }
    if let Some(v) = args.magnification {
        config.magnification = Some(v);
    }
    if let Some(v) = args.filter {
        config.policy.algorithm = v;
    }
    if let Some(v) = args.out {
        config.output_dir = v;
    }
    let mut failures = 0;
    for slide in &args.slides {
        let result = open_slide(slide).map_err(anyhow::Error::from).and_then(|src| {
            let req = config.request(&src);
            let outcome = if args.sequential {
                slidepress_core::splitter::split_slide_with(&req, Exec::Sequential)?
            } else {
                split_slide(&req)?
            };
            Ok(outcome)
        });
        match result {
            Ok(o) => println!(
                "{}: {} tiles ({} kept, {} empty) -> {}",
                slide.display(),
                o.records.len(),
                o.kept(),
                o.empty(),
                o.directory.display()
            ),
            Err(e) => {
                failures += 1;
                eprintln!("{}: {e:#}", slide.display());
            }
        }
    }
    if failures > 0 {
        bail!("{failures} of {} slides failed", args.slides.len());
    }
    Ok(())
}

fn dzi(args: DziArgs) -> Result<()> {
    let name = match &args.name {
        Some(n) => n.clone(),
        None => args
            .input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .context("input has no file name")?,
    };
    let layout = PyramidLayout {
        tile_size: args.tile_size,
        overlap: args.overlap,
        format: args.format,
    };
    let opts = BuildOptions {
        jpeg_quality: args.quality,
        exec: exec(args.sequential),
    };
    let ext = args
        .input
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    let (pyramid, paths) = if matches!(ext.as_str(), "jpg" | "jpeg" | "png") {
        let bytes = std::fs::read(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
        let image = codec::decode_any(&bytes)?;
        let pyramid = layout.plan(image.width(), image.height())?;
        let paths = build_pyramid(&image, &args.out, &name, &pyramid, &opts)?;
        (pyramid, paths)
    } else {
        let src = open_slide(&args.input)?;
        let m = args.magnification.unwrap_or(src.objective_power());
        build_pyramid_from_slide(&src, m, &layout, &args.out, &name, &opts)?
    };
    println!(
        "{} {}x{}, {} levels, {} tiles",
        paths.descriptor.display(),
        pyramid.image_width,
        pyramid.image_height,
        pyramid.level_count(),
        pyramid.tile_count()
    );
    Ok(())
}

fn print_report(r: &RunReport) {
    println!(
        "published {}, failed {}, notifications {} ({} undelivered)",
        r.published,
        r.failed,
        r.notifications_sent,
        r.notification_failures.len()
    );
    for job in &r.jobs {
        match (&job.failure_stage, &job.failure_reason) {
            (Some(stage), Some(reason)) => println!("  {} failed at {stage}: {reason}", job.specimen_id),
            _ => println!("  {} published", job.specimen_id),
        }
    }
}

fn pipeline(cmd: PipelineCommand) -> Result<ExitCode> {
    match cmd {
        PipelineCommand::Run {
            config,
            watch: false,
            ..
        } => {
            let config = PipelineConfig::load(&config)?;
            let report = run_batch(&config)?;
            print_report(&report);
            Ok(if report.failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        PipelineCommand::Run {
            config,
            watch: true,
            iterations,
        } => {
            let config = PipelineConfig::load(&config)?;
            watch(&config, iterations, |r| {
                if !r.is_empty() {
                    print_report(r)
                }
            })?;
            Ok(ExitCode::SUCCESS)
        }
        PipelineCommand::Requeue { old, new_id, config } => {
            let config = PipelineConfig::load(&config)?;
            let target = requeue_corrected(&old, &new_id, &config)?;
            println!("{}", target.display());
            Ok(ExitCode::SUCCESS)
        }
        PipelineCommand::Stage { jpeg, config } => {
            let config = PipelineConfig::load(&config)?;
            let target = review_override(&jpeg, &config.jpeg_processing_dir)?;
            println!("{}", target.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
