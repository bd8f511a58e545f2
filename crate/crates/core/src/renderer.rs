//! Differentiable volume rendering through the deformation field.
//!
//! Samples along a ray are deformed to the canonical time, the canonical
//! field gives per-sample density and color, and the usual alpha
//! compositing yields
//!
//! ```text
//! w_i = T_i (1 - exp(-δ_i σ_i)),   T_i = Π_{j<i} exp(-δ_j σ_j)
//! c   = Σ w_i c_i,                 z   = Σ w_i z_i
//! ```
//!
//! The background is black. The backward pass accepts upstream gradients on
//! the color, the depth, each weight and each canonical point; the last two
//! are what the flow losses produce.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FieldBundle, SampleTrace};
use crate::geometry::{sample_along_ray, Camera, Ray, SampleMode, SceneBounds};
use crate::image_io::{DepthMap, ImageRgb};

/// A ray whose accumulated opacity is at least this is reported as having
/// a valid depth.
pub const DEPTH_VALID_OPACITY: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_samples: usize,
    pub mode: SampleMode,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_samples: 128,
            mode: SampleMode::Stratified,
        }
    }
}

/// Compositing weights and the transmittance in front of every sample.
pub fn composite(sigmas: &[f64], deltas: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut weights = Vec::with_capacity(sigmas.len());
    let mut trans = Vec::with_capacity(sigmas.len());
    let mut t = 1.0;
    for (&s, &d) in sigmas.iter().zip(deltas) {
        let x = s * d;
        trans.push(t);
        weights.push(t * -(-x).exp_m1());
        t *= (-x).exp();
    }
    (weights, trans)
}

/// Result of rendering one ray, with what the backward pass needs.
#[derive(Clone, Debug)]
pub struct RenderResult {
    pub color: [f64; 3],
    pub depth: f64,
    pub weights: Vec<f64>,
    pub canonical_points: Vec<Vector3<f64>>,
    pub transmittances: Vec<f64>,
    pub depths: Vec<f64>,
    pub deltas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub colors: Vec<[f64; 3]>,
    traces: Vec<SampleTrace>,
}

impl RenderResult {
    pub fn opacity(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn depth_valid(&self) -> bool {
        self.opacity() >= DEPTH_VALID_OPACITY
    }
}

/// Renders one ray. Stratified jitter is keyed by `(seed, pixel, t)`.
pub fn render_ray(ray: &Ray, fields: &FieldBundle, sampler: &SamplerConfig, seed: u64) -> Result<RenderResult> {
    if !(ray.near < ray.far) {
        return Err(Error::InvalidArgument(format!(
            "degenerate ray: near {} >= far {}",
            ray.near, ray.far
        )));
    }
    let samples = sample_along_ray(ray, sampler.n_samples, sampler.mode, seed)?;
    let enc = fields.ray_encoding(&ray.direction, ray.time);
    let n = samples.len();
    let mut sigmas = Vec::with_capacity(n);
    let mut colors = Vec::with_capacity(n);
    let mut canonical_points = Vec::with_capacity(n);
    let mut traces = Vec::with_capacity(n);
    for p in &samples.positions {
        let s = fields.eval_sample(p, &enc);
        sigmas.push(s.sigma);
        colors.push(s.color);
        canonical_points.push(s.p_canonical);
        traces.push(s.trace);
    }
    let (weights, transmittances) = composite(&sigmas, &samples.deltas);
    let mut color = [0.0; 3];
    let mut depth = 0.0;
    for i in 0..n {
        for c in 0..3 {
            color[c] += weights[i] * colors[i][c];
        }
        depth += weights[i] * samples.depths[i];
    }
    Ok(RenderResult {
        color,
        depth,
        weights,
        canonical_points,
        transmittances,
        depths: samples.depths,
        deltas: samples.deltas,
        sigmas,
        colors,
        traces,
    })
}

/// Upstream gradients of one ray. Empty `weights`/`canonical_points` mean zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RayUpstream {
    pub color: [f64; 3],
    pub depth: f64,
    pub weights: Vec<f64>,
    pub canonical_points: Vec<Vector3<f64>>,
}

impl RayUpstream {
    pub fn is_zero(&self) -> bool {
        self.color == [0.0; 3]
            && self.depth == 0.0
            && self.weights.iter().all(|&w| w == 0.0)
            && self.canonical_points.iter().all(|p| *p == Vector3::zeros())
    }

    /// Adds another upstream (used when one ray feeds several loss terms).
    pub fn accumulate(&mut self, other: &RayUpstream) {
        for c in 0..3 {
            self.color[c] += other.color[c];
        }
        self.depth += other.depth;
        add_padded(&mut self.weights, &other.weights, |a, b| *a += b);
        if self.canonical_points.len() < other.canonical_points.len() {
            self.canonical_points.resize(other.canonical_points.len(), Vector3::zeros());
        }
        for (a, b) in self.canonical_points.iter_mut().zip(&other.canonical_points) {
            *a += b;
        }
    }
}

fn add_padded(a: &mut Vec<f64>, b: &[f64], f: impl Fn(&mut f64, f64)) {
    if a.len() < b.len() {
        a.resize(b.len(), 0.0);
    }
    a.iter_mut().zip(b).for_each(|(x, &y)| f(x, y));
}

/// Gradient of the loss with respect to each sample density, given the
/// total derivative `g_i` of the loss with respect to each weight.
pub fn sigma_gradients(result: &RenderResult, weight_grads: &[f64]) -> Vec<f64> {
    let n = result.weights.len();
    let mut out = vec![0.0; n];
    // Σ_{i>k} g_i w_i, accumulated from the back.
    let mut tail = 0.0;
    for k in (0..n).rev() {
        let t_next = result.transmittances[k] - result.weights[k];
        out[k] = result.deltas[k] * (weight_grads[k] * t_next - tail);
        tail += weight_grads[k] * result.weights[k];
    }
    out
}

/// Accumulates the parameter gradients of one ray into `grads`. Gradients on
/// the weights are not stopped: they reach both fields through the densities.
pub fn render_ray_backward(result: &RenderResult, fields: &FieldBundle, upstream: &RayUpstream, grads: &mut FieldBundle) {
    let n = result.weights.len();
    let weight_grads: Vec<f64> = (0..n)
        .map(|i| {
            let c = &result.colors[i];
            upstream.weights.get(i).copied().unwrap_or(0.0)
                + upstream.color[0] * c[0]
                + upstream.color[1] * c[1]
                + upstream.color[2] * c[2]
                + upstream.depth * result.depths[i]
        })
        .collect();
    let d_sigma = sigma_gradients(result, &weight_grads);
    for i in 0..n {
        let w = result.weights[i];
        let d_color = upstream.color.map(|g| g * w);
        let d_point = upstream
            .canonical_points
            .get(i)
            .copied()
            .unwrap_or_else(Vector3::zeros);
        fields.backward_sample(&result.traces[i], d_sigma[i], &d_color, &d_point, grads);
    }
}

/// Color image and depth map of one camera at frame `t`.
#[derive(Clone, Debug)]
pub struct RenderedView {
    pub color: ImageRgb,
    pub depth: DepthMap,
}

/// Renders every pixel center of `camera` at frame `t`, rows in parallel.
pub fn render_image(
    camera: &Camera,
    t: u32,
    fields: &FieldBundle,
    bounds: &SceneBounds,
    sampler: &SamplerConfig,
) -> Result<RenderedView> {
    let (w, h) = (camera.width(), camera.height());
    let rows: Vec<Vec<([f64; 3], f64, bool)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let ray = camera.ray_for_pixel((x as f64, y as f64), t, bounds)?;
                    let r = render_ray(&ray, fields, sampler, 0)?;
                    let valid = r.depth_valid();
                    Ok((r.color, r.depth, valid))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut color = ImageRgb::new(w, h);
    let mut depth = DepthMap {
        width: w,
        height: h,
        values: Vec::with_capacity((w * h) as usize),
        valid: Vec::with_capacity((w * h) as usize),
    };
    for (i, (c, z, v)) in rows.into_iter().flatten().enumerate() {
        color.pixels[i] = c;
        depth.values.push(z);
        depth.valid.push(v);
    }
    Ok(RenderedView { color, depth })
}
