//! Color images (8-bit PNG on disk) and depth maps (flat little-endian
//! `f32` arrays with a `{width, height}` JSON sidecar).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major RGB image with channels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRgb {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[f64; 3]>,
}

impl ImageRgb {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            pixels: vec![[0.0; 3]; (width * height) as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> [f64; 3] {
        self.pixels[(y * self.width + x) as usize]
    }

    /// Rounds every channel to the nearest 8-bit level.
    pub fn quantized(&self) -> Self {
        let mut out = self.clone();
        for p in &mut out.pixels {
            for c in p.iter_mut() {
                *c = to_u8(*c) as f64 / 255.0;
            }
        }
        out
    }

    /// One channel as a row-major plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.pixels.iter().map(|p| p[c]).collect()
    }
}

/// Row-major depth map with a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn save_png(path: &Path, image: &ImageRgb) -> Result<()> {
    let bytes: Vec<u8> = image.pixels.iter().flat_map(|p| p.map(to_u8)).collect();
    let buf = image::RgbImage::from_raw(image.width, image.height, bytes)
        .ok_or_else(|| Error::format(path, "pixel buffer does not match image size"))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))
}

pub fn load_png(path: &Path) -> Result<ImageRgb> {
    let img = image::open(path)
        .map_err(|e| Error::format(path, e.to_string()))?
        .to_rgb8();
    let (width, height) = img.dimensions();
    let pixels = img
        .pixels()
        .map(|p| [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0])
        .collect();
    Ok(ImageRgb {
        width,
        height,
        pixels,
    })
}

#[derive(Serialize, Deserialize)]
struct DepthSidecar {
    width: u32,
    height: u32,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes the depth values (invalid pixels as stored, usually 0) and the
/// sidecar. The mask is not persisted; it is recomputed by the reader's
/// caller when needed.
pub fn save_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for &v in &depth.values {
        w.write_all(&(v as f32).to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let text = serde_json::to_string(&DepthSidecar {
        width: depth.width,
        height: depth.height,
    })
    .expect("sidecar serializes");
    std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

pub fn load_depth(path: &Path) -> Result<DepthMap> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: DepthSidecar =
        serde_json::from_str(&text).map_err(|e| Error::format(&side, e.to_string()))?;
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let n = (meta.width * meta.height) as usize;
    if bytes.len() != 4 * n {
        return Err(Error::format(
            path,
            format!("expected {} bytes for {}x{}, found {}", 4 * n, meta.width, meta.height, bytes.len()),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(DepthMap {
        width: meta.width,
        height: meta.height,
        valid: values.iter().map(|&v| v > 0.0).collect(),
        values,
    })
}
