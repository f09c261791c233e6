//! Batch driver for the twin pipeline: validate scenes, synthesize datasets,
//! train, and write evaluation artifacts. Every artifact is deterministic
//! for a fixed seed and worker count.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use emtwin::em::MaterialTable;
use emtwin::evaluator::{
    cluster_csv, cluster_embeddings, gain_error_grid, grid_csv, percentile, GridSpec,
};
use emtwin::math::{vec3, Vec3};
use emtwin::parallel::default_workers;
use emtwin::scene::{world_geometry, Scene};
use emtwin::textio::fmt_f64;
use emtwin::tracer::{trace_paths, TraceConfig};
use emtwin::trainer::{evaluate, gen_dataset, train, Dataset, Split, TrainConfig};
use emtwin::twin::TwinModel;

#[derive(Parser)]
#[command(name = "emtwin", version, about = "Wireless digital twin pipeline")]
struct Cli {
    /// Worker threads (default: available parallelism). Outputs are
    /// bit-reproducible only for a fixed worker count and seed.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Scene file checks.
    Scene {
        #[command(subcommand)]
        cmd: SceneCmd,
    },
    /// Dataset synthesis.
    Dataset {
        #[command(subcommand)]
        cmd: DatasetCmd,
    },
    /// Fit a twin to a dataset.
    Train(TrainArgs),
    /// Per-sample NMSE report for a trained twin.
    Eval(EvalArgs),
    /// Path-gain error over a horizontal grid of receiver positions.
    Grid(GridArgs),
    /// Cluster embedding probes on one object's surface.
    Cluster(ClusterArgs),
    /// Predict one channel at a receiver position.
    Predict(PredictArgs),
}

#[derive(Subcommand)]
enum SceneCmd {
    /// Parse and validate a scene file.
    Validate { file: PathBuf },
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Trace and synthesize ground-truth channels for sampled receivers.
    Gen(DatasetGenArgs),
}

#[derive(Args)]
struct DatasetGenArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Material table override (default: the bundled table).
    #[arg(long)]
    materials: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// Output directory for twin.ckpt, checkpoint.ckpt and history.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    twin: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// CSV report with one NMSE row per sample.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    twin: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    /// Grid spec file (origin, steps, counts, trace settings).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Material table override (default: the bundled table).
    #[arg(long)]
    materials: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    twin: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    /// Object id whose surface is probed.
    #[arg(long)]
    object: u32,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
    /// Surface probe count.
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    twin: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    /// Receiver position as x,y,z (meters).
    #[arg(long, value_parser = parse_xyz)]
    rx: Vec3,
    /// Output: one `re im` row per subcarrier.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    subcarriers: usize,
    /// Subcarrier spacing in Hz.
    #[arg(long, default_value_t = 30e3)]
    delta_f: f64,
    #[arg(long, default_value_t = 8000)]
    rays: usize,
    /// Maximum specular bounces per path.
    #[arg(long, default_value_t = 1)]
    depth: u32,
    /// Capture sphere growth constant.
    #[arg(long, default_value_t = 2.0)]
    capture: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_xyz(s: &str) -> Result<Vec3, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z, got `{s}`"));
    }
    let mut v = [0.0; 3];
    for (slot, part) in v.iter_mut().zip(&parts) {
        *slot = part.trim().parse::<f64>().map_err(|e| format!("bad coordinate `{part}`: {e}"))?;
    }
    Ok(vec3(v[0], v[1], v[2]))
}

fn load_scene(path: &PathBuf) -> Result<Scene> {
    let scene =
        Scene::load_path(path).with_context(|| format!("loading scene {}", path.display()))?;
    scene.validate().with_context(|| format!("validating scene {}", path.display()))?;
    Ok(scene)
}

fn load_materials(path: &Option<PathBuf>) -> Result<MaterialTable> {
    match path {
        Some(p) => MaterialTable::load_path(p)
            .with_context(|| format!("loading material table {}", p.display())),
        None => Ok(MaterialTable::bundled()),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let workers = cli.workers.unwrap_or_else(default_workers).max(1);
    match cli.cmd {
        Cmd::Scene { cmd: SceneCmd::Validate { file } } => {
            let scene = load_scene(&file)?;
            let (tris, wedges) = world_geometry(&scene);
            println!(
                "ok: {} objects, {} triangles, {} wedges",
                scene.objects.len(),
                tris.len(),
                wedges.len()
            );
        }
        Cmd::Dataset { cmd: DatasetCmd::Gen(a) } => {
            let scene = load_scene(&a.scene)?;
            let mats = load_materials(&a.materials)?;
            let cfg = TrainConfig::load_path(&a.config)
                .with_context(|| format!("loading config {}", a.config.display()))?;
            let ds = gen_dataset(&scene, &mats, &cfg, workers)?;
            ds.save_path(&a.out)
                .with_context(|| format!("writing dataset {}", a.out.display()))?;
            let paths: usize = ds.samples.iter().map(|s| s.paths.len()).sum();
            println!(
                "wrote {}: {} samples ({} train, {} test, {} moved), {:.1} paths/sample",
                a.out.display(),
                ds.samples.len(),
                ds.indices_of(Split::Train).len(),
                ds.indices_of(Split::Test).len(),
                ds.indices_of(Split::Moved).len(),
                paths as f64 / ds.samples.len().max(1) as f64
            );
        }
        Cmd::Train(a) => {
            let ds = Dataset::load_path(&a.dataset)
                .with_context(|| format!("loading dataset {}", a.dataset.display()))?;
            let cfg = TrainConfig::load_path(&a.config)
                .with_context(|| format!("loading config {}", a.config.display()))?;
            let ids: Vec<u32> = ds.scene.objects.iter().map(|o| o.id).collect();
            let mut twin = TwinModel::new(&ids, ds.grid.f_c, cfg.seed);
            let epochs = cfg.epochs;
            let history =
                train(&mut twin, &ds, &cfg, Some(&a.out), workers, |epoch, loss| {
                    eprintln!("epoch {:>4}/{epochs}: mean loss {loss:.6}", epoch + 1);
                })?;
            println!(
                "wrote {}: {} epochs, final mean loss {:.6}",
                a.out.join("twin.ckpt").display(),
                history.len(),
                history.last().copied().unwrap_or(f64::NAN)
            );
        }
        Cmd::Eval(a) => {
            let twin = TwinModel::load(&a.twin)
                .with_context(|| format!("loading twin {}", a.twin.display()))?;
            let ds = Dataset::load_path(&a.dataset)
                .with_context(|| format!("loading dataset {}", a.dataset.display()))?;
            let mut rows: Vec<Option<f64>> = vec![None; ds.samples.len()];
            for split in [Split::Train, Split::Test, Split::Moved] {
                let idx = ds.indices_of(split);
                if idx.is_empty() {
                    continue;
                }
                let vals = evaluate(&twin, &ds, split, workers)?;
                for (&i, &v) in idx.iter().zip(vals.iter()) {
                    rows[i] = Some(v);
                }
                println!(
                    "{}: {} samples, median {:.2} dB, p90 {:.2} dB",
                    split.name(),
                    vals.len(),
                    percentile(&vals, 0.5),
                    percentile(&vals, 0.9)
                );
            }
            let mut csv = String::from("index,split,nmse_db\n");
            for (i, (s, v)) in ds.samples.iter().zip(rows.iter()).enumerate() {
                let v = v.expect("every sample belongs to a split");
                csv.push_str(&format!("{i},{},{}\n", s.split.name(), fmt_f64(v)));
            }
            std::fs::write(&a.report, csv)
                .with_context(|| format!("writing report {}", a.report.display()))?;
            println!("wrote {}", a.report.display());
        }
        Cmd::Grid(a) => {
            let twin = TwinModel::load(&a.twin)
                .with_context(|| format!("loading twin {}", a.twin.display()))?;
            let scene = load_scene(&a.scene)?;
            let mats = load_materials(&a.materials)?;
            let spec = GridSpec::load_path(&a.spec)
                .with_context(|| format!("loading grid spec {}", a.spec.display()))?;
            let grid = gain_error_grid(&twin, &scene, &mats, &spec, workers)?;
            let covered: usize =
                grid.iter().map(|row| row.iter().filter(|c| c.is_some()).count()).sum();
            std::fs::write(&a.out, grid_csv(&grid))
                .with_context(|| format!("writing grid {}", a.out.display()))?;
            println!(
                "wrote {}: {}x{} cells, {covered} with coverage",
                a.out.display(),
                spec.ny,
                spec.nx
            );
        }
        Cmd::Cluster(a) => {
            let twin = TwinModel::load(&a.twin)
                .with_context(|| format!("loading twin {}", a.twin.display()))?;
            let scene = load_scene(&a.scene)?;
            let Some(obj) = scene.object(a.object) else {
                bail!("scene has no object with id {}", a.object);
            };
            let report = cluster_embeddings(&twin, obj, a.samples, a.k, a.seed)?;
            std::fs::write(&a.out, cluster_csv(&report))
                .with_context(|| format!("writing clusters {}", a.out.display()))?;
            println!(
                "wrote {}: purity {:.3}, majority baseline {:.3}",
                a.out.display(),
                report.purity,
                report.majority_baseline
            );
        }
        Cmd::Predict(a) => {
            let twin = TwinModel::load(&a.twin)
                .with_context(|| format!("loading twin {}", a.twin.display()))?;
            let mut scene = load_scene(&a.scene)?;
            scene.rx.position = a.rx;
            let cfg = TraceConfig {
                n_rays: a.rays,
                max_depth: a.depth,
                capture_c: a.capture,
                eps_self: 1e-6,
                seed: a.seed,
            };
            let paths = trace_paths(&scene, &cfg);
            if paths.is_empty() {
                eprintln!("warning: no propagation paths reach the receiver");
            }
            let grid = twin.grid(a.delta_f, a.subcarriers);
            let h = twin.predict_channel(&scene, &paths, &grid)?;
            let mut out = String::new();
            for c in &h {
                out.push_str(&format!("{} {}\n", fmt_f64(c.re), fmt_f64(c.im)));
            }
            std::fs::write(&a.out, out)
                .with_context(|| format!("writing channel {}", a.out.display()))?;
            println!("wrote {}: {} paths, {} subcarriers", a.out.display(), paths.len(), h.len());
        }
    }
    Ok(())
}
