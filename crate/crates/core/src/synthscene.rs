//! Procedural dynamic scenes with closed-form density, color and motion.
//!
//! Primitives translate rigidly along closed-form trajectories, so the
//! scene flow of a point is the displacement of the primitive that owns it
//! (the one with the largest density there). Images are ray-marched with the
//! same compositing rule as the learned renderer, at high sample counts.

use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, DatasetInfo};
use crate::error::{Error, Result};
use crate::geometry::{save_rig, Camera, Ray, SceneBounds};
use crate::image_io::{save_depth, save_png, DepthMap, ImageRgb};
use crate::renderer::{composite, RenderedView, DEPTH_VALID_OPACITY};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    /// `A exp(-|p - c|² / 2 std²)`.
    Gaussian { std: f64 },
    /// Box with logistic edges of width `softness`.
    SoftBox { half: [f64; 3], softness: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Trajectory {
    Static { center: [f64; 3] },
    Linear { start: [f64; 3], velocity: [f64; 3] },
    /// Circle in the x–z plane, one revolution per `period` frames, starting
    /// at `center + radius·x̂` on frame 1.
    OrbitXz { center: [f64; 3], radius: f64, period: f64 },
}

impl Trajectory {
    pub fn position(&self, t: f64) -> Vector3<f64> {
        match self {
            Trajectory::Static { center } => Vector3::from(*center),
            Trajectory::Linear { start, velocity } => {
                Vector3::from(*start) + (t - 1.0) * Vector3::from(*velocity)
            }
            Trajectory::OrbitXz { center, radius, period } => {
                let a = std::f64::consts::TAU * (t - 1.0) / period;
                Vector3::from(*center) + *radius * Vector3::new(a.cos(), 0.0, a.sin())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub trajectory: Trajectory,
    pub amplitude: f64,
    pub color: [f64; 3],
}

impl Primitive {
    pub fn density(&self, p: &Vector3<f64>, t: f64) -> f64 {
        let d = p - self.trajectory.position(t);
        match &self.shape {
            Shape::Gaussian { std } => self.amplitude * (-d.norm_squared() / (2.0 * std * std)).exp(),
            Shape::SoftBox { half, softness } => {
                let mut v = self.amplitude;
                for a in 0..3 {
                    v *= logistic((half[a] - d[a].abs()) / softness);
                }
                v
            }
        }
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub name: String,
    pub primitives: Vec<Primitive>,
    pub bounds: SceneBounds,
    pub n_frames: u32,
}

/// Oracle output along one ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleRay {
    pub color: [f64; 3],
    pub depth: f64,
    pub opacity: f64,
}

impl SyntheticScene {
    /// One static backdrop slab and one Gaussian blob circling in front of
    /// it once over the sequence.
    pub fn blob_orbit() -> Self {
        Self {
            name: "blob-orbit".into(),
            primitives: vec![
                Primitive {
                    shape: Shape::SoftBox { half: [1.2, 0.9, 0.2], softness: 0.03 },
                    trajectory: Trajectory::Static { center: [0.0, 0.0, 1.1] },
                    amplitude: 30.0,
                    color: [0.2, 0.5, 0.8],
                },
                Primitive {
                    shape: Shape::Gaussian { std: 0.22 },
                    trajectory: Trajectory::OrbitXz { center: [0.0, 0.0, 0.0], radius: 0.5, period: 60.0 },
                    amplitude: 40.0,
                    color: [0.9, 0.3, 0.2],
                },
            ],
            bounds: SceneBounds { min: [-1.5; 3], max: [1.5; 3], near: 1.0, far: 7.0 },
            n_frames: 60,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "blob-orbit" => Ok(Self::blob_orbit()),
            other => Err(Error::InvalidArgument(format!("unknown scene `{other}` (known: blob-orbit)"))),
        }
    }

    /// Cameras on an arc of radius 4 around the origin, slightly above the
    /// scene, looking at the origin. Angles are evenly spread over ±30°.
    pub fn arc_rig(n_cameras: usize, size: u32, focal: f64) -> Result<Vec<Camera>> {
        if n_cameras == 0 {
            return Err(Error::InvalidArgument("a rig needs at least one camera".into()));
        }
        (0..n_cameras)
            .map(|i| {
                let frac = if n_cameras == 1 { 0.5 } else { i as f64 / (n_cameras - 1) as f64 };
                let a = (-30.0 + 60.0 * frac).to_radians();
                let eye = Vector3::new(4.0 * a.sin(), -0.7, -4.0 * a.cos());
                Camera::look_at(eye, Vector3::zeros(), Vector3::new(0.0, -1.0, 0.0), focal, size, size, i + 1)
            })
            .collect()
    }

    pub fn densities(&self, p: &Vector3<f64>, t: f64) -> Vec<f64> {
        self.primitives.iter().map(|q| q.density(p, t)).collect()
    }

    /// Total density and the density-weighted color.
    pub fn oracle_sigma_color(&self, p: &Vector3<f64>, t: f64) -> (f64, [f64; 3]) {
        let mut sigma = 0.0;
        let mut acc = [0.0; 3];
        for q in &self.primitives {
            let s = q.density(p, t);
            sigma += s;
            for c in 0..3 {
                acc[c] += s * q.color[c];
            }
        }
        if sigma > 0.0 {
            (sigma, acc.map(|a| a / sigma))
        } else {
            (0.0, [0.0; 3])
        }
    }

    /// Primitive with the largest density at `p`, if any is nonzero.
    pub fn owner(&self, p: &Vector3<f64>, t: f64) -> Option<usize> {
        let d = self.densities(p, t);
        let (i, &m) = d.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
        (m > 0.0).then_some(i)
    }

    /// Displacement from frame `t` to frame `s` of the point at `p`.
    pub fn oracle_flow(&self, p: &Vector3<f64>, t: f64, s: f64) -> Vector3<f64> {
        match self.owner(p, t) {
            Some(i) => {
                let tr = &self.primitives[i].trajectory;
                tr.position(s) - tr.position(t)
            }
            None => Vector3::zeros(),
        }
    }

    /// Ray-marches `n` uniformly spaced samples (bin centers).
    pub fn oracle_ray(&self, ray: &Ray, n: usize) -> OracleRay {
        let dz = (ray.far - ray.near) / n as f64;
        let mut sigmas = Vec::with_capacity(n);
        let mut colors = Vec::with_capacity(n);
        let mut depths = Vec::with_capacity(n);
        for i in 0..n {
            let z = ray.near + (i as f64 + 0.5) * dz;
            let (s, c) = self.oracle_sigma_color(&ray.at(z), ray.time as f64);
            sigmas.push(s);
            colors.push(c);
            depths.push(z);
        }
        let mut deltas = vec![dz; n];
        deltas[0] = 0.5 * dz;
        let (w, _) = composite(&sigmas, &deltas);
        let mut out = OracleRay { color: [0.0; 3], depth: 0.0, opacity: 0.0 };
        for i in 0..n {
            for c in 0..3 {
                out.color[c] += w[i] * colors[i][c];
            }
            out.depth += w[i] * depths[i];
            out.opacity += w[i];
        }
        out
    }

    /// Oracle color and depth of every pixel. Depth is the expected distance
    /// along the ray; pixels with opacity below the validity threshold are
    /// marked invalid and stored as 0.
    pub fn oracle_render(&self, camera: &Camera, t: u32, n_samples: usize) -> Result<RenderedView> {
        let (w, h) = (camera.width(), camera.height());
        let rows: Vec<Vec<OracleRay>> = (0..h)
            .into_par_iter()
            .map(|y| {
                (0..w)
                    .map(|x| {
                        let ray = camera.ray_for_pixel((x as f64, y as f64), t, &self.bounds)?;
                        Ok(self.oracle_ray(&ray, n_samples))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let px: Vec<OracleRay> = rows.into_iter().flatten().collect();
        let valid: Vec<bool> = px.iter().map(|r| r.opacity >= DEPTH_VALID_OPACITY).collect();
        Ok(RenderedView {
            color: ImageRgb { width: w, height: h, pixels: px.iter().map(|r| r.color).collect() },
            depth: DepthMap {
                width: w,
                height: h,
                values: px.iter().zip(&valid).map(|(r, &v)| if v { r.depth } else { 0.0 }).collect(),
                valid,
            },
        })
    }
}

/// Settings of a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmitOptions {
    pub n_cameras: usize,
    pub image_size: u32,
    pub focal: f64,
    pub n_samples: usize,
}

impl Default for EmitOptions {
    fn default() -> Self {
        Self { n_cameras: 3, image_size: 64, focal: 70.0, n_samples: 512 }
    }
}

/// Writes frames, oracle depth maps, the rig, the dataset description and
/// the scene description to `dir`.
pub fn write_dataset(scene: &SyntheticScene, options: &EmitOptions, dir: &Path) -> Result<Vec<Camera>> {
    let cameras = SyntheticScene::arc_rig(options.n_cameras, options.image_size, options.focal)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for cam in &cameras {
        for sub in [dataset::camera_dir(dir, cam.index()), dataset::depth_dir(dir, cam.index())] {
            std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        }
        for t in 1..=scene.n_frames {
            let view = scene.oracle_render(cam, t, options.n_samples)?;
            save_png(&dataset::frame_path(dir, cam.index(), t), &view.color)?;
            save_depth(&dataset::depth_path(dir, cam.index(), t), &view.depth)?;
        }
    }
    save_rig(&dir.join(dataset::RIG_FILE), &cameras)?;
    DatasetInfo { n_frames: scene.n_frames, bounds: scene.bounds, scene: Some(scene.name.clone()) }
        .save(dir)?;
    let path = dir.join(dataset::SCENE_FILE);
    let text = serde_json::to_string_pretty(scene).expect("scene serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(cameras)
}

pub fn load_scene(dir: &Path) -> Result<SyntheticScene> {
    let path = dir.join(dataset::SCENE_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
}
