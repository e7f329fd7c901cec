//! Command-line front end: `field`, `synthesize`, `eval`, and `scene-gen`.
//!
//! Exit codes: 0 success, 2 infeasible scene, 3 optimization abort,
//! 4 I/O or configuration error. The env var `REACHGRASP_THREADS` caps the
//! worker-thread pool (builds with the `parallel` feature only).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use reachgrasp::pipeline::{
    load_synthesis_config, run_eval, run_field, run_scene_gen, run_synthesize, SceneKind,
    SynthesisConfig,
};
use reachgrasp::scene::Handedness;
use reachgrasp::{Error, Result};

#[derive(Parser)]
#[command(
    name = "reachgrasp",
    version,
    about = "Whole-body reach-and-grasp pose synthesis around 3D scenes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum HandArg {
    Right,
    Left,
}

impl From<HandArg> for Handedness {
    fn from(h: HandArg) -> Handedness {
        match h {
            HandArg::Right => Handedness::Right,
            HandArg::Left => Handedness::Left,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Table,
    Shelf,
    OpenBox,
    WallCabinet,
}

impl From<KindArg> for SceneKind {
    fn from(k: KindArg) -> SceneKind {
        match k {
            KindArg::Table => SceneKind::Table,
            KindArg::Shelf => SceneKind::Shelf,
            KindArg::OpenBox => SceneKind::OpenBox,
            KindArg::WallCabinet => SceneKind::WallCabinet,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the probabilistic field of reaching directions for a scene.
    Field {
        /// Scene description (scene.json).
        scene: PathBuf,
        /// Candidate directions on the sphere.
        #[arg(long, default_value_t = 2562)]
        rays: usize,
        /// Overrides the seed recorded in the scene config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (field.json, field.ply, manifest.json).
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize a whole-body reach-and-grasp pose for a scene.
    Synthesize {
        /// Scene description (scene.json).
        scene: PathBuf,
        /// Overrides the seed recorded in the scene config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the handedness recorded in the scene config.
        #[arg(long, value_enum)]
        hand: Option<HandArg>,
        /// Optional synthesis config JSON; flags below override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Candidate directions on the sphere (overrides config).
        #[arg(long)]
        rays: Option<usize>,
        /// Bodies to synthesize; 2+ enables the pose-diversity metric.
        #[arg(long)]
        samples: Option<usize>,
        /// Output directory (body.obj, hand.json, trace.csv, metrics.json).
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate the metrics of one or more run directories into a CSV.
    Eval {
        /// Run directories, each holding a metrics.json.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Directory for aggregate.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Generate a procedural scene (object resting in a receptacle).
    SceneGen {
        /// Receptacle family.
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Target object centroid height above the ground (meters).
        #[arg(long)]
        height: f64,
        /// Seed stored in the generated scene config.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (object.obj, receptacle.obj, scene.json).
        #[arg(long)]
        out: PathBuf,
    },
}

/// Applies `REACHGRASP_THREADS` before any parallel work starts.
#[cfg(feature = "parallel")]
fn configure_threads() {
    if let Ok(v) = std::env::var("REACHGRASP_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n >= 1 => {
                // A second build_global (e.g. in tests) fails harmlessly;
                // the first one wins.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring REACHGRASP_THREADS={v} (want a positive integer)"),
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn configure_threads() {}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Field {
            scene,
            rays,
            seed,
            out,
        } => {
            let field = run_field(&scene, rays, seed, &out)?;
            println!(
                "field: {} of {} rays alive -> {}",
                field.filter_report.alive,
                field.rays.len(),
                out.display()
            );
            Ok(())
        }
        Command::Synthesize {
            scene,
            seed,
            hand,
            config,
            rays,
            samples,
            out,
        } => {
            let mut synth_config = match &config {
                Some(path) => load_synthesis_config(path)?,
                None => SynthesisConfig::default(),
            };
            if let Some(n) = rays {
                synth_config.ray_count = n;
            }
            if let Some(k) = samples {
                synth_config.samples = k;
            }
            let run = run_synthesize(
                &scene,
                &synth_config,
                config.as_deref(),
                seed,
                hand.map(Handedness::from),
                &out,
            )?;
            println!(
                "synthesize: loss {:.4} -> {:.4}, wrist error {:.2} mm -> {}",
                run.trace.start_total(),
                run.trace.end_total(),
                10.0 * run.metrics.condition_errors.wrist_mse_cm.sqrt(),
                out.display()
            );
            Ok(())
        }
        Command::Eval { runs, out } => {
            let outcome = run_eval(&runs, &out)?;
            println!(
                "eval: {} run(s) aggregated, {} skipped -> {}",
                outcome.rows,
                outcome.skipped.len(),
                out.join("aggregate.csv").display()
            );
            Ok(())
        }
        Command::SceneGen {
            kind,
            height,
            seed,
            out,
        } => {
            let path = run_scene_gen(kind.into(), height, seed, &out)?;
            println!("scene-gen: wrote {}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = Error::exit_code(&e);
            ExitCode::from(u8::try_from(code).unwrap_or(1))
        }
    }
}
