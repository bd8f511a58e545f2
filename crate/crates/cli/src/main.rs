//! `defield`: dataset generation, prior generation, training, rendering
//! and evaluation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use defield::dataset::{self, Dataset, DatasetInfo};
use defield::geometry::{load_rig, SampleMode};
use defield::image_io::{load_depth, load_png, save_depth, save_png};
use defield::metrics::{frame_metrics, MetricReport};
use defield::priors::synthetic::{synth_priors, SynthPriorOptions};
use defield::priors::{self, inject_outliers, write_depth_priors, write_flow_priors, RigLimits};
use defield::renderer::{render_image, SamplerConfig};
use defield::synthscene::{load_scene, write_dataset, EmitOptions, SyntheticScene};
use defield::trainer::{self, TrainConfig, TrainData};

#[derive(Parser, Debug)]
#[command(name = "defield", version, about = "Dynamic radiance fields with flow priors")]
struct Cli {
    /// Worker threads (default: DEFIELD_THREADS, else all logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a procedural scene into a dataset directory.
    GenSynthetic(GenSynthetic),
    /// Write exact flow and depth priors for a generated dataset.
    GenPriors(GenPriors),
    /// Fit a model to a dataset.
    Train(Train),
    /// Render frames from a checkpoint.
    Render(Render),
    /// Compare rendered frames against references.
    Evaluate(Evaluate),
}

#[derive(Args, Debug)]
struct GenSynthetic {
    #[arg(long, default_value = "blob-orbit")]
    scene: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    cameras: usize,
    #[arg(long, default_value_t = 64)]
    size: u32,
    #[arg(long)]
    frames: Option<u32>,
    /// Ray-marching samples of the reference renders.
    #[arg(long, default_value_t = 512)]
    samples: usize,
}

#[derive(Args, Debug)]
struct GenPriors {
    #[arg(long)]
    data: PathBuf,
    /// Fraction of flow priors replaced by outliers.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Outlier displacement in pixels.
    #[arg(long, default_value_t = 20.0)]
    noise_px: f64,
    #[arg(long, default_value_t = 16)]
    n_sparse: usize,
    #[arg(long, default_value_t = 4)]
    dense_stride: u32,
    #[arg(long, default_value_t = priors::DEFAULT_PRIOR_OFFSET)]
    offset: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (default: the dataset directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Train {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Disable the sparse flow term.
    #[arg(long)]
    no_sf: bool,
    /// Disable the dense flow term.
    #[arg(long)]
    no_df: bool,
    /// Enable the sparse depth term.
    #[arg(long)]
    sd: bool,
    /// Training cameras, e.g. `1,3`.
    #[arg(long, value_delimiter = ',')]
    cameras: Option<Vec<usize>>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Continue from a checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Render {
    #[arg(long)]
    ckpt: PathBuf,
    /// Rig JSON with the cameras to render.
    #[arg(long)]
    camera: PathBuf,
    /// Subset of the rig's cameras (1-based), e.g. `2`.
    #[arg(long, value_delimiter = ',')]
    views: Option<Vec<usize>>,
    /// Inclusive frame range `a..b`.
    #[arg(long)]
    frames: String,
    #[arg(long)]
    out: PathBuf,
    /// Samples per ray (default: the training value).
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args, Debug)]
struct Evaluate {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Exit status for data and validation failures.
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let threads = cli
        .threads
        .or_else(|| std::env::var("DEFIELD_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numeric = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<defield::Error>(), Some(defield::Error::NonFinite { .. })));
            ExitCode::from(if numeric { EXIT_NUMERIC } else { EXIT_DATA })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::GenPriors(a) => gen_priors(a),
        Command::Train(a) => train(a),
        Command::Render(a) => render(a),
        Command::Evaluate(a) => evaluate(a),
    }
}

fn gen_synthetic(a: GenSynthetic) -> Result<()> {
    let mut scene = SyntheticScene::by_name(&a.scene)?;
    if let Some(n) = a.frames {
        scene.n_frames = n;
    }
    let options = EmitOptions { n_cameras: a.cameras, image_size: a.size, focal: 70.0 * a.size as f64 / 64.0, n_samples: a.samples };
    let cams = write_dataset(&scene, &options, &a.out)?;
    log::info!("wrote {} cameras x {} frames to {}", cams.len(), scene.n_frames, a.out.display());
    Ok(())
}

fn gen_priors(a: GenPriors) -> Result<()> {
    if !(0.0..=1.0).contains(&a.noise) {
        bail!(defield::Error::InvalidArgument(format!("--noise {} outside [0, 1]", a.noise)));
    }
    let scene = load_scene(&a.data)?;
    let cameras = load_rig(&a.data.join(dataset::RIG_FILE))?;
    let options = SynthPriorOptions {
        n_sparse: a.n_sparse,
        dense_stride: a.dense_stride,
        offset: a.offset,
        seed: a.seed,
        ..Default::default()
    };
    let mut p = synth_priors(&scene, &cameras, &options)?;
    if a.noise > 0.0 {
        let limits = RigLimits::new(&cameras, scene.n_frames);
        let mut rng = defield::seed::rng(&[a.seed, 0x0u64, 0x5EED]);
        let n = inject_outliers(&mut p.sparse, a.noise, a.noise_px, &limits, &mut rng)
            + inject_outliers(&mut p.dense, a.noise, a.noise_px, &limits, &mut rng);
        log::info!("replaced {n} priors by {}-pixel outliers", a.noise_px);
    }
    let out = a.out.unwrap_or(a.data);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write_flow_priors(&out.join(priors::SPARSE_FILE), &p.sparse)?;
    write_flow_priors(&out.join(priors::DENSE_FILE), &p.dense)?;
    write_depth_priors(&out.join(priors::DEPTH_FILE), &p.depth)?;
    log::info!("{} sparse, {} dense, {} depth priors", p.sparse.len(), p.dense.len(), p.depth.len());
    Ok(())
}

fn train(a: Train) -> Result<()> {
    let mut config: TrainConfig = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| defield::Error::Io { path: p.clone(), source: e })?;
            serde_json::from_str(&text).map_err(|e| defield::Error::Format { path: p.clone(), message: e.to_string() })?
        }
        None => TrainConfig::default(),
    };
    if a.no_sf {
        config.weights.sparse_flow = 0.0;
    }
    if a.no_df {
        config.weights.dense_flow = 0.0;
    }
    if a.sd && config.weights.sparse_depth == 0.0 {
        config.weights.sparse_depth = 1.0;
    }
    if let Some(c) = a.cameras {
        config.cameras = c;
    }
    if let Some(n) = a.iterations {
        config.iterations = n;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    config.validate()?;
    let dataset = Dataset::load(&a.data, &config.cameras)?;
    let priors = dataset.load_priors()?;
    log::info!(
        "training on cameras {:?}: {} flow priors, {} depth priors",
        dataset.selected,
        priors.flow_count(),
        priors.depth_count()
    );
    let resume = a.resume.as_deref().map(trainer::load_checkpoint).transpose()?;
    let outcome = trainer::train(&TrainData { dataset, priors }, &config, &a.out, resume)?;
    log::info!(
        "done in {:.1}s; final checkpoint {}",
        outcome.seconds,
        outcome.final_checkpoint.display()
    );
    Ok(())
}

fn parse_frames(spec: &str) -> Result<(u32, u32)> {
    let parsed = match spec.split_once("..") {
        Some((a, b)) => a.trim().parse().ok().zip(b.trim().parse().ok()),
        None => spec.trim().parse().ok().map(|t| (t, t)),
    };
    match parsed {
        Some((a, b)) if a >= 1 && a <= b => Ok((a, b)),
        _ => bail!(defield::Error::InvalidArgument(format!("bad frame range `{spec}` (expected a..b)"))),
    }
}

fn render(a: Render) -> Result<()> {
    let fields = trainer::load_fields(&a.ckpt)?;
    let meta = trainer::load_meta(&a.ckpt)?;
    let rig = load_rig(&a.camera)?;
    let (first, last) = parse_frames(&a.frames)?;
    if last > fields.domain.n_frames {
        bail!(defield::Error::InvalidArgument(format!(
            "frame {last} beyond the model's {} frames",
            fields.domain.n_frames
        )));
    }
    let views = a.views.unwrap_or_else(|| (1..=rig.len()).collect());
    let n_samples = a
        .samples
        .or(meta.train.as_ref().map(|t| t.samples_per_ray))
        .unwrap_or(64);
    let sampler = SamplerConfig { n_samples, mode: SampleMode::Uniform };
    for v in views {
        let cam = rig
            .get(v.wrapping_sub(1))
            .ok_or_else(|| defield::Error::InvalidArgument(format!("camera {v} not in {}", a.camera.display())))?;
        let dir = dataset::camera_dir(&a.out, v);
        let ddir = a.out.join("depth").join(format!("cam_{v}"));
        for d in [&dir, &ddir] {
            std::fs::create_dir_all(d).map_err(|e| defield::Error::Io { path: d.clone(), source: e })?;
        }
        for t in first..=last {
            let view = render_image(cam, t, &fields, &fields.domain.bounds, &sampler)?;
            save_png(&dataset::frame_path(&a.out, v, t), &view.color)?;
            let mut depth = view.depth;
            for (z, ok) in depth.values.iter_mut().zip(&depth.valid) {
                if !ok {
                    *z = 0.0;
                }
            }
            save_depth(&ddir.join(format!("{}.f32", dataset::frame_name(t))), &depth)?;
        }
        log::info!("rendered camera {v}, frames {first}..{last}");
    }
    Ok(())
}

/// `(camera, frame)` of every `cam_<v>/frame_<t>.png` under `dir`.
fn list_frames(dir: &Path) -> Result<Vec<(usize, u32)>> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| defield::Error::Io { path: dir.to_path_buf(), source: e })?;
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().to_string();
        let Some(v) = name.strip_prefix("cam_").and_then(|s| s.parse::<usize>().ok()) else { continue };
        for f in std::fs::read_dir(entry.path())?.flatten() {
            let fname = f.file_name().to_string_lossy().to_string();
            if let Some(t) = fname
                .strip_prefix("frame_")
                .and_then(|s| s.strip_suffix(".png"))
                .and_then(|s| s.parse::<u32>().ok())
            {
                out.push((v, t));
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

fn evaluate(a: Evaluate) -> Result<()> {
    let frames = list_frames(&a.pred)?;
    if frames.is_empty() {
        bail!(defield::Error::Validation(format!("no frames found under {}", a.pred.display())));
    }
    let _ = DatasetInfo::load(&a.gt).ok();
    let mut rows = Vec::with_capacity(frames.len());
    for (v, t) in frames {
        let pred = load_png(&dataset::frame_path(&a.pred, v, t))?;
        let truth = load_png(&dataset::frame_path(&a.gt, v, t))?;
        let pd = a.pred.join("depth").join(format!("cam_{v}")).join(format!("{}.f32", dataset::frame_name(t)));
        let gd = dataset::depth_path(&a.gt, v, t);
        let (pd, gd) = if pd.exists() && gd.exists() { (Some(load_depth(&pd)?), Some(load_depth(&gd)?)) } else { (None, None) };
        rows.push(frame_metrics(v, t, &pred, &truth, pd.as_ref(), gd.as_ref())?);
    }
    let report = MetricReport::new(rows);
    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(&a.out, json).map_err(|e| defield::Error::Io { path: a.out.clone(), source: e })?;
    let csv = a.out.with_extension("csv");
    std::fs::write(&csv, report.to_csv()).map_err(|e| defield::Error::Io { path: csv.clone(), source: e })?;
    println!(
        "frames {}  psnr {}  ssim {:.4}  depth_mae {}",
        report.frames.len(),
        report.psnr.map_or("inf".into(), |p| format!("{p:.3}")),
        report.ssim,
        report.depth_mae.map_or("n/a".into(), |m| format!("{m:.4}"))
    );
    Ok(())
}
