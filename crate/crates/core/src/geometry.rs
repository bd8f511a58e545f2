//! Pinhole cameras, ray generation and point sampling along rays.
//!
//! Pixel coordinates address pixel centers: pixel `(x, y)` with integer
//! coordinates is the center of column `x`, row `y`, and the image covers
//! `[-0.5, W - 0.5] x [-0.5, H - 0.5]`. Cameras follow the usual computer
//! vision convention (x right, y down, z forward).

use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Vector2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

const ROTATION_TOLERANCE: f64 = 1e-6;

/// A static pinhole camera of the rig.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    intrinsics: Matrix3<f64>,
    intrinsics_inv: Matrix3<f64>,
    world_from_camera: Matrix4<f64>,
    rotation: Matrix3<f64>,
    center: Vector3<f64>,
    width: u32,
    height: u32,
    index: usize,
}

impl Camera {
    /// Builds a camera, validating intrinsics and pose. `index` is 1-based.
    pub fn new(
        intrinsics: Matrix3<f64>,
        world_from_camera: Matrix4<f64>,
        width: u32,
        height: u32,
        index: usize,
    ) -> Result<Self> {
        if index == 0 {
            return Err(Error::Validation("camera index is 1-based".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::Validation(format!(
                "camera {index}: empty image size {width}x{height}"
            )));
        }
        let k = &intrinsics;
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0) {
            return Err(Error::Validation(format!(
                "camera {index}: focal lengths must be positive"
            )));
        }
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 || k[(2, 2)] != 1.0 {
            return Err(Error::Validation(format!(
                "camera {index}: intrinsics must be upper triangular with K[2][2] = 1"
            )));
        }
        if k[(0, 1)] != 0.0 {
            return Err(Error::Validation(format!(
                "camera {index}: skewed intrinsics are not supported"
            )));
        }
        let rotation: Matrix3<f64> = world_from_camera.fixed_view::<3, 3>(0, 0).into_owned();
        let center: Vector3<f64> = world_from_camera.fixed_view::<3, 1>(0, 3).into_owned();
        let gram = rotation.transpose() * rotation;
        if (gram - Matrix3::identity()).amax() > ROTATION_TOLERANCE
            || (rotation.determinant() - 1.0).abs() > ROTATION_TOLERANCE
        {
            return Err(Error::Validation(format!(
                "camera {index}: pose rotation is not orthonormal"
            )));
        }
        let bottom = world_from_camera.fixed_view::<1, 4>(3, 0);
        if bottom[0] != 0.0 || bottom[1] != 0.0 || bottom[2] != 0.0 || bottom[3] != 1.0 {
            return Err(Error::Validation(format!(
                "camera {index}: pose last row must be [0, 0, 0, 1]"
            )));
        }
        let intrinsics_inv = intrinsics
            .try_inverse()
            .ok_or_else(|| Error::Validation(format!("camera {index}: singular intrinsics")))?;
        Ok(Self {
            intrinsics,
            intrinsics_inv,
            world_from_camera,
            rotation,
            center,
            width,
            height,
            index,
        })
    }

    /// Camera at `eye` looking at `target`. `up` is the world direction that
    /// should appear upward in the image.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal: f64,
        width: u32,
        height: u32,
        index: usize,
    ) -> Result<Self> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_columns(&[right, down, forward]);
        let mut pose = Matrix4::identity();
        pose.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation);
        pose.fixed_view_mut::<3, 1>(0, 3).copy_from(&eye);
        let intrinsics = Matrix3::new(
            focal,
            0.0,
            (width as f64 - 1.0) / 2.0,
            0.0,
            focal,
            (height as f64 - 1.0) / 2.0,
            0.0,
            0.0,
            1.0,
        );
        Self::new(intrinsics, pose, width, height, index)
    }

    pub fn intrinsics(&self) -> &Matrix3<f64> {
        &self.intrinsics
    }

    pub fn world_from_camera(&self) -> &Matrix4<f64> {
        &self.world_from_camera
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn center(&self) -> Vector3<f64> {
        self.center
    }

    pub fn contains_pixel(&self, x: f64, y: f64) -> bool {
        x >= -0.5 && x <= self.width as f64 - 0.5 && y >= -0.5 && y <= self.height as f64 - 0.5
    }

    /// Point in camera coordinates.
    pub fn to_camera(&self, p_world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p_world - self.center)
    }

    /// Projects a world point to continuous pixel coordinates together with
    /// its depth along the optical axis. Points behind the camera give `None`.
    pub fn project(&self, p_world: &Vector3<f64>) -> Option<(Vector2<f64>, f64)> {
        let pc = self.to_camera(p_world);
        if pc.z <= 0.0 {
            return None;
        }
        let h = self.intrinsics * (pc / pc.z);
        Some((Vector2::new(h.x, h.y), pc.z))
    }

    /// Unit direction (world frame) of the ray through a pixel.
    pub fn direction(&self, x: f64, y: f64) -> Vector3<f64> {
        let d_cam = self.intrinsics_inv * Vector3::new(x, y, 1.0);
        (self.rotation * d_cam).normalize()
    }

    /// The ray through pixel `(x, y)` at frame `t` (1-based), clipped to the
    /// scene bounds.
    pub fn ray_for_pixel(&self, pixel: (f64, f64), t: u32, bounds: &SceneBounds) -> Result<Ray> {
        let (x, y) = pixel;
        if !(x.is_finite() && y.is_finite()) || !self.contains_pixel(x, y) {
            return Err(Error::InvalidArgument(format!(
                "pixel ({x}, {y}) outside {}x{} image of camera {}",
                self.width, self.height, self.index
            )));
        }
        if t == 0 {
            return Err(Error::InvalidArgument("frame index is 1-based".into()));
        }
        let direction = self.direction(x, y);
        let (near, far) = bounds.clip(&self.center, &direction);
        Ok(Ray {
            origin: self.center,
            direction,
            near,
            far,
            pixel,
            time: t,
            camera: self.index,
        })
    }
}

/// Axis-aligned scene box plus the fallback near/far range for rays that
/// miss it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneBounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub near: f64,
    pub far: f64,
}

impl SceneBounds {
    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            if !(self.min[a] < self.max[a]) {
                return Err(Error::Validation(format!(
                    "scene box axis {a}: min {} must be below max {}",
                    self.min[a], self.max[a]
                )));
            }
        }
        if !(self.near >= 0.0 && self.near < self.far) {
            return Err(Error::Validation(format!(
                "near/far range [{}, {}] is invalid",
                self.near, self.far
            )));
        }
        Ok(())
    }

    pub fn extent(&self) -> Vector3<f64> {
        Vector3::new(
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        )
    }

    /// Slab intersection of a ray with the box; falls back to the global
    /// near/far range when the ray misses.
    pub fn clip(&self, origin: &Vector3<f64>, direction: &Vector3<f64>) -> (f64, f64) {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            let inv = 1.0 / direction[a];
            let mut ta = (self.min[a] - origin[a]) * inv;
            let mut tb = (self.max[a] - origin[a]) * inv;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            // NaN (origin on a slab plane of a parallel ray) keeps the old bound.
            t0 = t0.max(ta);
            t1 = t1.min(tb);
        }
        let near = t0.max(self.near);
        if t1 > near && t1.is_finite() {
            (near, t1)
        } else {
            (self.near, self.far)
        }
    }
}

/// A camera ray at one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
    pub near: f64,
    pub far: f64,
    pub pixel: (f64, f64),
    /// Frame index, 1-based.
    pub time: u32,
    /// Camera index, 1-based.
    pub camera: usize,
}

impl Ray {
    pub fn at(&self, z: f64) -> Vector3<f64> {
        self.origin + self.direction * z
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    Uniform,
    Stratified,
}

/// Points along a ray with their depths and interval lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub positions: Vec<Vector3<f64>>,
    pub depths: Vec<f64>,
    pub deltas: Vec<f64>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }
}

// Stratified jitter stays this far inside each bin so depths stay strictly
// increasing after rounding.
const JITTER_MARGIN: f64 = 1e-3;

/// Samples `n` depths in `[near, far]`: bin centers in uniform mode, one
/// jittered depth per equal-width bin in stratified mode. The stratified
/// stream is derived from `(seed, pixel, t)`.
pub fn sample_along_ray(ray: &Ray, n: usize, mode: SampleMode, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    if !(ray.near < ray.far) {
        return Err(Error::InvalidArgument(format!(
            "degenerate ray range [{}, {}]",
            ray.near, ray.far
        )));
    }
    let bin = (ray.far - ray.near) / n as f64;
    let depths: Vec<f64> = match mode {
        SampleMode::Uniform => (0..n)
            .map(|i| ray.near + (i as f64 + 0.5) * bin)
            .collect(),
        SampleMode::Stratified => {
            let mut rng = seed::rng(&[seed::ray_seed(seed, ray.pixel, ray.time)]);
            (0..n)
                .map(|i| {
                    let u: f64 = rng.gen();
                    let u = JITTER_MARGIN + (1.0 - 2.0 * JITTER_MARGIN) * u;
                    ray.near + (i as f64 + u) * bin
                })
                .collect()
        }
    };
    let mut deltas = Vec::with_capacity(n);
    let mut prev = ray.near;
    for &z in &depths {
        deltas.push(z - prev);
        prev = z;
    }
    let positions = depths.iter().map(|&z| ray.at(z)).collect();
    Ok(SampleSet {
        positions,
        depths,
        deltas,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct RigEntry {
    #[serde(rename = "K")]
    k: [[f64; 3]; 3],
    pose_w_from_c: [[f64; 4]; 4],
    width: u32,
    height: u32,
}

/// Parses a rig document (one JSON entry per camera, row-major matrices).
pub fn parse_rig(text: &str) -> std::result::Result<Vec<Camera>, String> {
    let entries: Vec<RigEntry> = serde_json::from_str(text).map_err(|e| e.to_string())?;
    entries
        .into_iter()
        .enumerate()
        .map(|(i, e)| {
            let k = Matrix3::from_fn(|r, c| e.k[r][c]);
            let pose = Matrix4::from_fn(|r, c| e.pose_w_from_c[r][c]);
            Camera::new(k, pose, e.width, e.height, i + 1).map_err(|err| err.to_string())
        })
        .collect()
}

pub fn rig_to_json(cameras: &[Camera]) -> String {
    let entries: Vec<RigEntry> = cameras
        .iter()
        .map(|c| RigEntry {
            k: std::array::from_fn(|r| std::array::from_fn(|col| c.intrinsics[(r, col)])),
            pose_w_from_c: std::array::from_fn(|r| {
                std::array::from_fn(|col| c.world_from_camera[(r, col)])
            }),
            width: c.width,
            height: c.height,
        })
        .collect();
    serde_json::to_string_pretty(&entries).expect("rig serializes")
}

pub fn load_rig(path: &Path) -> Result<Vec<Camera>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rig(&text).map_err(|m| Error::format(path, m))
}

pub fn save_rig(path: &Path, cameras: &[Camera]) -> Result<()> {
    std::fs::write(path, rig_to_json(cameras)).map_err(|e| Error::io(path, e))
}
