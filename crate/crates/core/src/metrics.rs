//! Image and depth quality measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io::{DepthMap, ImageRgb};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn check_same_size(a: &ImageRgb, b: &ImageRgb) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::InvalidArgument(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

pub fn mse(a: &ImageRgb, b: &ImageRgb) -> Result<f64> {
    check_same_size(a, b)?;
    let sum: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(p, q)| (0..3).map(|c| (p[c] - q[c]).powi(2)).sum::<f64>())
        .sum();
    Ok(sum / (3 * a.pixels.len()) as f64)
}

/// `10 log10(1 / MSE)` for images in `[0, 1]`; identical images give
/// `f64::INFINITY`.
pub fn psnr(a: &ImageRgb, b: &ImageRgb) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
}

fn gaussian_kernel() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let k: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian filter; taps that fall outside the image are dropped
/// and the rest renormalized.
fn blur(plane: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let r = k.len() as isize / 2;
    let pass = |src: &[f64], horizontal: bool| {
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let (mut acc, mut norm) = (0.0, 0.0);
                for (j, &kv) in k.iter().enumerate() {
                    let o = j as isize - r;
                    let (sx, sy) = if horizontal { (x as isize + o, y as isize) } else { (x as isize, y as isize + o) };
                    if sx < 0 || sy < 0 || sx >= w as isize || sy >= h as isize {
                        continue;
                    }
                    acc += kv * src[sy as usize * w + sx as usize];
                    norm += kv;
                }
                out[y * w + x] = acc / norm;
            }
        }
        out
    };
    pass(&pass(plane, true), false)
}

fn ssim_plane(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    let k = gaussian_kernel();
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mu_a = blur(a, w, h, &k);
    let mu_b = blur(b, w, h, &k);
    let aa = blur(&prod(a, a), w, h, &k);
    let bb = blur(&prod(b, b), w, h, &k);
    let ab = blur(&prod(a, b), w, h, &k);
    let mut sum = 0.0;
    for i in 0..w * h {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        sum += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
    }
    sum / (w * h) as f64
}

/// Single-scale SSIM (11×11 Gaussian window, σ = 1.5), averaged over the
/// pixels and the three channels.
pub fn ssim(a: &ImageRgb, b: &ImageRgb) -> Result<f64> {
    check_same_size(a, b)?;
    let (w, h) = (a.width as usize, a.height as usize);
    Ok((0..3).map(|c| ssim_plane(&a.channel(c), &b.channel(c), w, h)).sum::<f64>() / 3.0)
}

/// Mean `|z − z_ref|` over pixels valid in both maps; `None` if there are none.
pub fn depth_mae(z: &DepthMap, reference: &DepthMap) -> Result<Option<f64>> {
    if (z.width, z.height) != (reference.width, reference.height) {
        return Err(Error::InvalidArgument(format!(
            "depth sizes differ: {}x{} vs {}x{}",
            z.width, z.height, reference.width, reference.height
        )));
    }
    let (sum, n) = z
        .values
        .iter()
        .zip(&reference.values)
        .zip(z.valid.iter().zip(&reference.valid))
        .filter(|(_, (a, b))| **a && **b)
        .fold((0.0, 0usize), |(s, n), ((p, q), _)| (s + (p - q).abs(), n + 1));
    Ok((n > 0).then(|| sum / n as f64))
}

/// Metrics of one predicted frame. `psnr` is `None` for identical images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub camera: usize,
    pub frame: u32,
    pub psnr: Option<f64>,
    pub ssim: f64,
    pub depth_mae: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub frames: Vec<FrameMetrics>,
    /// Mean over finite per-frame values; `None` if all frames are identical.
    pub psnr: Option<f64>,
    pub ssim: f64,
    pub depth_mae: Option<f64>,
}

impl MetricReport {
    pub fn new(frames: Vec<FrameMetrics>) -> Self {
        fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
            let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
            (n > 0).then(|| s / n as f64)
        }
        Self {
            psnr: mean(frames.iter().filter_map(|f| f.psnr)),
            ssim: mean(frames.iter().map(|f| f.ssim)).unwrap_or(1.0),
            depth_mae: mean(frames.iter().filter_map(|f| f.depth_mae)),
            frames,
        }
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("inf".to_string(), |x| x.to_string());
        let mut out = String::from("camera,frame,psnr,ssim,depth_mae\n");
        for f in &self.frames {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                f.camera,
                f.frame,
                opt(f.psnr),
                f.ssim,
                f.depth_mae.map_or(String::new(), |x| x.to_string())
            ));
        }
        out
    }
}

pub fn frame_metrics(
    camera: usize,
    frame: u32,
    pred: &ImageRgb,
    truth: &ImageRgb,
    pred_depth: Option<&DepthMap>,
    truth_depth: Option<&DepthMap>,
) -> Result<FrameMetrics> {
    let p = psnr(pred, truth)?;
    let depth_mae = match (pred_depth, truth_depth) {
        (Some(a), Some(b)) => depth_mae(a, b)?,
        _ => None,
    };
    Ok(FrameMetrics {
        camera,
        frame,
        psnr: p.is_finite().then_some(p),
        ssim: ssim(pred, truth)?,
        depth_mae,
    })
}
