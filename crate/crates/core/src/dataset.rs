//! Multi-view video datasets on disk.
//!
//! ```text
//! dataset.json            {"n_frames": .., "bounds": {..}, "scene": ..}
//! rig.json                cameras, 1-based in file order
//! cam_<v>/frame_<ttt>.png color frames, t zero-padded to 3 digits
//! depth_gt/cam_<v>/frame_<ttt>.f32   reference depth (optional)
//! priors_*.csv            flow and depth priors (optional)
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{load_rig, Camera, SceneBounds};
use crate::image_io::{load_png, ImageRgb};
use crate::priors::{load_priors, PriorStore, RigLimits};

pub const INFO_FILE: &str = "dataset.json";
pub const RIG_FILE: &str = "rig.json";
pub const SCENE_FILE: &str = "scene.json";

pub fn camera_dir(root: &Path, v: usize) -> PathBuf {
    root.join(format!("cam_{v}"))
}

pub fn frame_name(t: u32) -> String {
    format!("frame_{t:03}")
}

pub fn frame_path(root: &Path, v: usize, t: u32) -> PathBuf {
    camera_dir(root, v).join(format!("{}.png", frame_name(t)))
}

pub fn depth_dir(root: &Path, v: usize) -> PathBuf {
    root.join("depth_gt").join(format!("cam_{v}"))
}

pub fn depth_path(root: &Path, v: usize, t: u32) -> PathBuf {
    depth_dir(root, v).join(format!("{}.f32", frame_name(t)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub n_frames: u32,
    pub bounds: SceneBounds,
    #[serde(default)]
    pub scene: Option<String>,
}

impl DatasetInfo {
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(INFO_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let info: Self = serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
        info.bounds.validate()?;
        if info.n_frames == 0 {
            return Err(Error::format(&path, "n_frames must be at least 1"));
        }
        Ok(info)
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        let path = root.join(INFO_FILE);
        let text = serde_json::to_string_pretty(self).expect("dataset info serializes");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Frames of the selected cameras held in memory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub info: DatasetInfo,
    /// All cameras of the rig.
    pub cameras: Vec<Camera>,
    /// 1-based indices of the cameras whose frames were loaded.
    pub selected: Vec<usize>,
    /// `frames[i][t - 1]` belongs to camera `selected[i]`.
    pub frames: Vec<Vec<ImageRgb>>,
}

impl Dataset {
    /// Loads every frame of the selected cameras (all cameras if empty).
    pub fn load(root: &Path, cameras: &[usize]) -> Result<Self> {
        let info = DatasetInfo::load(root)?;
        let rig = load_rig(&root.join(RIG_FILE))?;
        let selected: Vec<usize> = if cameras.is_empty() {
            (1..=rig.len()).collect()
        } else {
            cameras.to_vec()
        };
        for &v in &selected {
            if v == 0 || v > rig.len() {
                return Err(Error::Validation(format!(
                    "camera {v} is not in the rig ({} cameras)",
                    rig.len()
                )));
            }
        }
        let mut frames = Vec::with_capacity(selected.len());
        for &v in &selected {
            let cam = &rig[v - 1];
            let mut per_cam = Vec::with_capacity(info.n_frames as usize);
            for t in 1..=info.n_frames {
                let path = frame_path(root, v, t);
                let img = load_png(&path)?;
                if (img.width, img.height) != (cam.width(), cam.height()) {
                    return Err(Error::format(
                        &path,
                        format!(
                            "frame is {}x{} but camera {v} is {}x{}",
                            img.width,
                            img.height,
                            cam.width(),
                            cam.height()
                        ),
                    ));
                }
                per_cam.push(img);
            }
            frames.push(per_cam);
        }
        Ok(Self { root: root.to_path_buf(), info, cameras: rig, selected, frames })
    }

    pub fn camera(&self, v: usize) -> &Camera {
        &self.cameras[v - 1]
    }

    pub fn limits(&self) -> RigLimits {
        RigLimits::new(&self.cameras, self.info.n_frames)
    }

    /// Priors stored next to the frames, restricted to the selected cameras.
    pub fn load_priors(&self) -> Result<PriorStore> {
        Ok(load_priors(&self.root, &self.limits())?.restricted_to(&self.selected))
    }

    pub fn frame(&self, v: usize, t: u32) -> &ImageRgb {
        let i = self.selected.iter().position(|&c| c == v).expect("camera selected");
        &self.frames[i][t as usize - 1]
    }
}
