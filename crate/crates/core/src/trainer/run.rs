use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::{checkpoint_path, save_checkpoint, train_step, TrainConfig, TrainData, TrainState};
use crate::error::{Error, Result};
use crate::fields::{Domain, FieldBundle, FieldConfig};
use crate::geometry::SampleMode;
use crate::image_io::save_png;
use crate::losses::{LossBreakdown, LOSS_LOG_HEADER};
use crate::renderer::{render_image, SamplerConfig};

pub const LOSS_LOG: &str = "loss.csv";
pub const RESOLVED_CONFIG: &str = "config.json";

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub state: TrainState,
    pub last_loss: Option<LossBreakdown>,
    pub final_checkpoint: PathBuf,
    pub seconds: f64,
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

/// Trains until `config.iterations` steps are done, starting from `resume`
/// or a fresh model. Writes the resolved config, the loss log, checkpoints
/// and validation renders into `run_dir`.
pub fn train(data: &TrainData, config: &TrainConfig, run_dir: &Path, resume: Option<TrainState>) -> Result<RunOutcome> {
    config.validate()?;
    std::fs::create_dir_all(run_dir).map_err(io(run_dir))?;
    let info = &data.dataset.info;
    let field_config = config.fields.clone().unwrap_or_else(|| FieldConfig::for_frames(info.n_frames));
    let mut resolved = config.clone();
    resolved.fields = Some(field_config.clone());
    resolved.cameras = data.dataset.selected.clone();
    let cfg_path = run_dir.join(RESOLVED_CONFIG);
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&resolved).expect("config serializes")).map_err(io(&cfg_path))?;

    let mut state = match resume {
        Some(s) => {
            if s.fields.config != field_config {
                return Err(Error::Validation("checkpoint architecture differs from the config".into()));
            }
            s
        }
        None => {
            let domain = Domain::new(info.bounds, info.n_frames)?;
            TrainState::new(FieldBundle::new(field_config, domain, config.seed)?, config.seed)
        }
    };

    let log_path = run_dir.join(LOSS_LOG);
    let fresh = state.iteration == 0 || !log_path.exists();
    let mut log = OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(&log_path)
        .map_err(io(&log_path))?;
    if fresh {
        writeln!(log, "{LOSS_LOG_HEADER}").map_err(io(&log_path))?;
    }

    let start = Instant::now();
    let mut last_loss = None;
    while state.iteration < config.iterations {
        let loss = train_step(&mut state, data, config)?;
        writeln!(log, "{}", loss.log_row(state.iteration)).map_err(io(&log_path))?;
        if state.iteration % 100 == 0 {
            log::info!(
                "step {} L_total {:.5} L_ph {:.5} ({:.1}s)",
                state.iteration,
                loss.total,
                loss.photometric,
                start.elapsed().as_secs_f64()
            );
        }
        last_loss = Some(loss);
        let it = state.iteration;
        if config.checkpoint_every > 0 && it % config.checkpoint_every == 0 && it < config.iterations {
            save_checkpoint(&checkpoint_path(run_dir, it), &state, Some(&resolved))?;
        }
        if config.eval_every > 0 && it % config.eval_every == 0 {
            write_validation(data, config, &state, run_dir)?;
        }
    }
    log.flush().map_err(io(&log_path))?;
    let final_checkpoint = checkpoint_path(run_dir, state.iteration);
    save_checkpoint(&final_checkpoint, &state, Some(&resolved))?;
    Ok(RunOutcome { state, last_loss, final_checkpoint, seconds: start.elapsed().as_secs_f64() })
}

fn write_validation(data: &TrainData, config: &TrainConfig, state: &TrainState, run_dir: &Path) -> Result<()> {
    let ds = &data.dataset;
    let v = config.val_camera.unwrap_or(ds.selected[0]);
    if v == 0 || v > ds.cameras.len() {
        return Err(Error::Validation(format!("validation camera {v} is not in the rig")));
    }
    let t = config.val_frame.clamp(1, ds.info.n_frames);
    let dir = run_dir.join("val");
    std::fs::create_dir_all(&dir).map_err(io(&dir))?;
    let sampler = SamplerConfig { n_samples: config.samples_per_ray, mode: SampleMode::Uniform };
    let view = render_image(ds.camera(v), t, &state.fields, &ds.info.bounds, &sampler)?;
    save_png(&dir.join(format!("step_{:06}_cam_{v}_frame_{t:03}.png", state.iteration)), &view.color)
}
