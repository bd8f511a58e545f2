//! Optimization: configuration, Adam, training state and checkpoints.
//!
//! Each step renders a batch of photometric rays plus matched prior rays,
//! accumulates gradients into a fixed number of shards that are summed in
//! order (so results do not depend on the thread count), and applies one
//! Adam update. All randomness of a step is derived from the run seed and
//! the iteration number, which makes a resumed run identical to an
//! uninterrupted one.

mod run;
mod step;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Payload, Record};
use crate::error::{Error, Result};
use crate::fields::{Domain, FieldBundle, FieldConfig};
use crate::geometry::SampleMode;
use crate::losses::LossWeights;
use crate::priors::DEFAULT_PRIOR_OFFSET;

pub use run::{train, RunOutcome, LOSS_LOG, RESOLVED_CONFIG};
pub use step::{train_step, TrainData};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: u64,
    /// Photometric rays per step.
    pub batch_rays: usize,
    /// Prior rays per step, half for sparse and half for dense pairs (two
    /// rays per pair). Defaults to a quarter of `batch_rays`.
    pub prior_rays_per_batch: Option<usize>,
    pub samples_per_ray: usize,
    pub sample_mode: SampleMode,
    pub weights: LossWeights,
    pub lr_grid: f64,
    pub lr_mlp: f64,
    pub warmup_steps: u64,
    /// Learning rate at the last step relative to the peak.
    pub final_lr_factor: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Accumulate gradients in `grad_shards` fixed shards; otherwise one
    /// shard per worker thread.
    pub deterministic: bool,
    pub grad_shards: usize,
    pub prior_offset: u32,
    /// Cameras used for training (1-based); empty means all.
    pub cameras: Vec<usize>,
    /// Write a checkpoint every this many steps (0: only at the end).
    pub checkpoint_every: u64,
    /// Render a validation view every this many steps (0: never).
    pub eval_every: u64,
    pub val_camera: Option<usize>,
    pub val_frame: u32,
    /// Model architecture; defaults depend on the frame count.
    pub fields: Option<FieldConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 30_000,
            batch_rays: 1024,
            prior_rays_per_batch: None,
            samples_per_ray: 64,
            sample_mode: SampleMode::Stratified,
            weights: LossWeights::default(),
            lr_grid: 1e-2,
            lr_mlp: 1e-3,
            warmup_steps: 512,
            final_lr_factor: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            deterministic: true,
            grad_shards: 4,
            prior_offset: DEFAULT_PRIOR_OFFSET,
            cameras: Vec::new(),
            checkpoint_every: 0,
            eval_every: 0,
            val_camera: None,
            val_frame: 1,
            fields: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.iterations < 1 {
            return bad("iterations must be at least 1".into());
        }
        if self.batch_rays < 1 || self.samples_per_ray < 1 {
            return bad("batch_rays and samples_per_ray must be positive".into());
        }
        if !(self.lr_grid > 0.0 && self.lr_mlp > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(self.final_lr_factor > 0.0 && self.final_lr_factor <= 1.0) {
            return bad("final_lr_factor must lie in (0, 1]".into());
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.epsilon > 0.0) {
            return bad("Adam hyperparameters out of range".into());
        }
        let w = &self.weights;
        if [w.sparse_flow, w.dense_flow, w.sparse_depth].iter().any(|&l| !(l >= 0.0)) {
            return bad("loss weights must be non-negative".into());
        }
        if self.deterministic && self.grad_shards < 1 {
            return bad("grad_shards must be positive".into());
        }
        Ok(())
    }

    pub fn prior_rays(&self) -> usize {
        self.prior_rays_per_batch.unwrap_or(self.batch_rays / 4)
    }

    /// Learning-rate multiplier at step `step` (0-based): linear warmup,
    /// then cosine decay to `final_lr_factor` at the last step.
    pub fn lr_factor(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.iterations.saturating_sub(self.warmup_steps).max(1) as f64;
        let progress = ((step - self.warmup_steps) as f64 / span).min(1.0);
        let f = self.final_lr_factor;
        f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

/// One bias-corrected Adam update; `step` counts from 1.
pub fn adam_update(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], hp: &AdamParams, step: u64) {
    let c1 = 1.0 - hp.beta1.powi(step as i32);
    let c2 = 1.0 - hp.beta2.powi(step as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        param[i] -= hp.lr * m_hat / (v_hat.sqrt() + hp.epsilon);
    }
}

/// Parameters, Adam moments and counters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub fields: FieldBundle,
    pub m: FieldBundle,
    pub v: FieldBundle,
    /// Completed steps.
    pub iteration: u64,
    pub seed: u64,
}

impl TrainState {
    pub fn new(fields: FieldBundle, seed: u64) -> Self {
        let m = fields.zeros_like();
        let v = fields.zeros_like();
        Self { fields, m, v, iteration: 0, seed }
    }

    /// Applies Adam to every array, grids and MLPs with their own rates.
    pub fn apply_gradients(&mut self, grads: &FieldBundle, config: &TrainConfig) {
        let factor = config.lr_factor(self.iteration);
        let step = self.iteration + 1;
        let g = grads.arrays();
        let params = self.fields.arrays_mut();
        let ms = self.m.arrays_mut();
        let vs = self.v.arrays_mut();
        for (((name, p), (_, m)), ((_, v), ga)) in params.into_iter().zip(ms).zip(vs.into_iter().zip(&g)) {
            let base = if name.starts_with('G') { config.lr_grid } else { config.lr_mlp };
            let hp = AdamParams { lr: base * factor, beta1: config.beta1, beta2: config.beta2, epsilon: config.epsilon };
            adam_update(p, ga.data, m, v, &hp, step);
        }
    }
}

pub fn checkpoint_path(run_dir: &Path, iteration: u64) -> PathBuf {
    run_dir.join(format!("ckpt_{iteration}.bin"))
}

/// Metadata stored next to a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub fields: FieldConfig,
    pub domain: Domain,
    pub train: Option<TrainConfig>,
}

fn records_of(prefix: &str, bundle: &FieldBundle, out: &mut Vec<Record>) {
    for a in bundle.arrays() {
        out.push(Record::new(
            format!("{prefix}{}", a.name),
            a.shape.iter().map(|&d| d as u32).collect(),
            Payload::F64(a.data.to_vec()),
        ));
    }
}

/// Writes `ckpt_<iteration>.bin` and its JSON sidecar. Values are stored
/// as `f64` so that a resumed run continues bit-exactly.
pub fn save_checkpoint(path: &Path, state: &TrainState, train: Option<&TrainConfig>) -> Result<()> {
    let mut records = Vec::new();
    records_of("", &state.fields, &mut records);
    records_of("adam/m/", &state.m, &mut records);
    records_of("adam/v/", &state.v, &mut records);
    records.push(Record::scalar_u64("state/iteration", state.iteration));
    records.push(Record::scalar_u64("state/seed", state.seed));
    checkpoint::write(path, &records)?;
    let meta = CheckpointMeta {
        fields: state.fields.config.clone(),
        domain: state.fields.domain,
        train: train.cloned(),
    };
    let side = path.with_extension("json");
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

pub fn load_meta(path: &Path) -> Result<CheckpointMeta> {
    let side = path.with_extension("json");
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&side, e.to_string()))
}

fn fill(prefix: &str, bundle: &mut FieldBundle, records: &[Record], path: &Path) -> Result<()> {
    let shapes: Vec<(String, Vec<usize>)> = bundle.arrays().into_iter().map(|a| (a.name, a.shape)).collect();
    for ((name, shape), (_, data)) in shapes.into_iter().zip(bundle.arrays_mut()) {
        let full = format!("{prefix}{name}");
        let rec = records
            .iter()
            .find(|r| r.name == full)
            .ok_or_else(|| Error::format(path, format!("array {full} missing")))?;
        let dims: Vec<usize> = rec.dims.iter().map(|&d| d as usize).collect();
        if dims != shape {
            return Err(Error::format(
                path,
                format!("array {full} has shape {dims:?}, model expects {shape:?}"),
            ));
        }
        let values = rec
            .payload
            .to_f64()
            .ok_or_else(|| Error::format(path, format!("array {full} is not floating point")))?;
        data.copy_from_slice(&values);
    }
    Ok(())
}

fn scalar(records: &[Record], name: &str, path: &Path) -> Result<u64> {
    match records.iter().find(|r| r.name == name).map(|r| &r.payload) {
        Some(Payload::U64(v)) if v.len() == 1 => Ok(v[0]),
        _ => Err(Error::format(path, format!("counter {name} missing or malformed"))),
    }
}

/// Parameters only; Adam moments are not required.
pub fn load_fields(path: &Path) -> Result<FieldBundle> {
    let meta = load_meta(path)?;
    let records = checkpoint::read(path)?;
    let mut fields = FieldBundle::new(meta.fields, meta.domain, 0)?;
    fill("", &mut fields, &records, path)?;
    Ok(fields)
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let meta = load_meta(path)?;
    let records = checkpoint::read(path)?;
    let mut fields = FieldBundle::new(meta.fields, meta.domain, 0)?;
    fill("", &mut fields, &records, path)?;
    let mut state = TrainState::new(fields, 0);
    fill("adam/m/", &mut state.m, &records, path)?;
    fill("adam/v/", &mut state.v, &records, path)?;
    state.iteration = scalar(&records, "state/iteration", path)?;
    state.seed = scalar(&records, "state/seed", path)?;
    Ok(state)
}
