//! Exact priors for synthetic scenes.
//!
//! A source pixel is lifted to 3D at its oracle expected depth, moved with
//! the primitive that owns it, and projected into the target view. Matches
//! whose target pixel sees a different surface (occlusion, leaving the
//! image, empty space) are dropped.

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DepthPrior, FlowPrior, PriorKind, DEFAULT_PRIOR_OFFSET};
use crate::error::Result;
use crate::geometry::Camera;
use crate::renderer::DEPTH_VALID_OPACITY;
use crate::seed;
use crate::synthscene::SyntheticScene;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthPriorOptions {
    /// Keypoints per source view; each is matched into every other camera.
    pub n_sparse: usize,
    /// Pixel stride of the dense flow grid.
    pub dense_stride: u32,
    pub offset: u32,
    /// Largest depth disagreement (scene units) accepted at the target.
    pub depth_tolerance: f64,
    /// Source and target pixels must be at least this opaque. The expected
    /// depth of a partly transparent pixel is pulled towards the camera,
    /// and so is the point the flow losses compare.
    pub min_opacity: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for SynthPriorOptions {
    fn default() -> Self {
        Self {
            n_sparse: 16,
            dense_stride: 4,
            offset: DEFAULT_PRIOR_OFFSET,
            depth_tolerance: 0.15,
            min_opacity: 0.99,
            n_samples: 256,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynthPriors {
    pub sparse: Vec<FlowPrior>,
    pub dense: Vec<FlowPrior>,
    pub depth: Vec<DepthPrior>,
}

/// Visible surface point of a pixel with its expected depth along the ray,
/// if the pixel's opacity reaches `min_opacity`.
pub fn surface_point(
    scene: &SyntheticScene,
    camera: &Camera,
    t: u32,
    pixel: (f64, f64),
    n_samples: usize,
    min_opacity: f64,
) -> Option<(Vector3<f64>, f64)> {
    let ray = camera.ray_for_pixel(pixel, t, &scene.bounds).ok()?;
    let r = scene.oracle_ray(&ray, n_samples);
    (r.opacity >= min_opacity.max(DEPTH_VALID_OPACITY)).then(|| (ray.at(r.depth), r.depth))
}

/// Where the surface point `p` seen at frame `t` appears in `target` at
/// frame `s`, if it is visible there.
pub fn track(
    scene: &SyntheticScene,
    p: &Vector3<f64>,
    t: u32,
    s: u32,
    target: &Camera,
    options: &SynthPriorOptions,
) -> Option<(f64, f64)> {
    let moved = p + scene.oracle_flow(p, t as f64, s as f64);
    let (px, _) = target.project(&moved)?;
    if !target.contains_pixel(px.x, px.y) {
        return None;
    }
    let (_, seen) = surface_point(scene, target, s, (px.x, px.y), options.n_samples, options.min_opacity)?;
    let expected = (moved - target.center()).norm();
    ((seen - expected).abs() <= options.depth_tolerance).then_some((px.x, px.y))
}

struct SourceView {
    t: u32,
    v: usize,
    keypoints: Vec<((f64, f64), Vector3<f64>, f64)>,
    grid: Vec<((f64, f64), Vector3<f64>)>,
}

fn partner_frames(t: u32, n_frames: u32, offset: u32) -> Vec<u32> {
    [t.checked_sub(offset).filter(|&s| s >= 1), Some(t + offset).filter(|&s| s <= n_frames)]
        .into_iter()
        .flatten()
        .collect()
}

/// Keypoints are drawn among pixels with a valid surface, half of them
/// from moving primitives when the view shows any.
fn source_view(scene: &SyntheticScene, cam: &Camera, t: u32, options: &SynthPriorOptions) -> SourceView {
    let mut dynamic = Vec::new();
    let mut fixed = Vec::new();
    let mut grid = Vec::new();
    let stride = options.dense_stride.max(1);
    for y in 0..cam.height() {
        for x in 0..cam.width() {
            let pixel = (x as f64, y as f64);
            let Some((p, z)) = surface_point(scene, cam, t, pixel, options.n_samples, options.min_opacity) else {
                continue;
            };
            let moving = scene.owner(&p, t as f64).is_some_and(|i| {
                let tr = &scene.primitives[i].trajectory;
                tr.position(t as f64) != tr.position(t as f64 + 1.0)
            });
            if moving { &mut dynamic } else { &mut fixed }.push((pixel, p, z));
            if x % stride == stride / 2 && y % stride == stride / 2 {
                grid.push((pixel, p));
            }
        }
    }
    let mut rng = seed::rng(&[options.seed, t as u64, cam.index() as u64, 0x5EED]);
    dynamic.shuffle(&mut rng);
    fixed.shuffle(&mut rng);
    let from_dynamic = dynamic.len().min(options.n_sparse / 2);
    let mut keypoints: Vec<_> = dynamic.into_iter().take(from_dynamic).collect();
    keypoints.extend(fixed.into_iter().take(options.n_sparse - from_dynamic));
    SourceView { t, v: cam.index(), keypoints, grid }
}

/// Sparse cross-camera matches, dense within-camera flow and keypoint
/// depths for every frame and camera. Deterministic for a fixed seed.
pub fn synth_priors(scene: &SyntheticScene, cameras: &[Camera], options: &SynthPriorOptions) -> Result<SynthPriors> {
    let jobs: Vec<(u32, usize)> = (1..=scene.n_frames)
        .flat_map(|t| (0..cameras.len()).map(move |i| (t, i)))
        .collect();
    let parts: Vec<SynthPriors> = jobs
        .par_iter()
        .map(|&(t, i)| {
            let src = source_view(scene, &cameras[i], t, options);
            let mut out = SynthPriors::default();
            for &((x, y), _, z) in &src.keypoints {
                out.depth.push(DepthPrior { t, v: src.v, x, y, z, conf: 1.0 }.quantized());
            }
            for s in partner_frames(src.t, scene.n_frames, options.offset) {
                for target in cameras.iter().filter(|c| c.index() != src.v) {
                    for &((x, y), p, _) in &src.keypoints {
                        if let Some((xp, yp)) = track(scene, &p, t, s, target, options) {
                            out.sparse.push(
                                FlowPrior { kind: PriorKind::Sparse, t, v: src.v, x, y, s, u: target.index(), xp, yp, conf: 1.0 }
                                    .quantized(),
                            );
                        }
                    }
                }
                for &((x, y), p) in &src.grid {
                    if let Some((xp, yp)) = track(scene, &p, t, s, &cameras[i], options) {
                        out.dense.push(
                            FlowPrior { kind: PriorKind::Dense, t, v: src.v, x, y, s, u: src.v, xp, yp, conf: 1.0 }
                                .quantized(),
                        );
                    }
                }
            }
            out
        })
        .collect();
    let mut all = SynthPriors::default();
    for p in parts {
        all.sparse.extend(p.sparse);
        all.dense.extend(p.dense);
        all.depth.extend(p.depth);
    }
    Ok(all)
}
