//! Training objectives.
//!
//! Every term is a batch mean of a per-item squared error. The per-item
//! helpers return the value together with its gradient so the trainer can
//! scale by `λ / count` and hand the result to the renderer backward pass.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::renderer::{RayUpstream, RenderResult};

/// `‖c − ĉ‖²` and its gradient with respect to `c`.
pub fn photometric(color: &[f64; 3], truth: &[f64; 3]) -> (f64, [f64; 3]) {
    let d: [f64; 3] = std::array::from_fn(|i| color[i] - truth[i]);
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2], d.map(|x| 2.0 * x))
}

/// Mean photometric error over a batch; 0 for an empty batch.
pub fn photometric_loss(colors: &[[f64; 3]], truths: &[[f64; 3]]) -> f64 {
    mean(colors.iter().zip(truths).map(|(c, t)| photometric(c, t).0))
}

/// `Σ w_i p'_i`: the pixel's location in the canonical volume.
pub fn canonical_point(result: &RenderResult) -> Vector3<f64> {
    result
        .weights
        .iter()
        .zip(&result.canonical_points)
        .fold(Vector3::zeros(), |acc, (w, p)| acc + *w * p)
}

/// Upstream of `dL/dP` for a ray whose canonical point is `P = Σ w_i p'_i`.
pub fn canonical_point_upstream(result: &RenderResult, d_point: &Vector3<f64>) -> RayUpstream {
    RayUpstream {
        color: [0.0; 3],
        depth: 0.0,
        weights: result.canonical_points.iter().map(|p| d_point.dot(p)).collect(),
        canonical_points: result.weights.iter().map(|w| *w * d_point).collect(),
    }
}

/// Squared distance between the canonical points of two matched rays, with
/// the upstream gradients of both rays scaled by `scale`. Neither the
/// weights nor the canonical positions are detached.
pub fn flow_pair(a: &RenderResult, b: &RenderResult, scale: f64) -> (f64, RayUpstream, RayUpstream) {
    let d = canonical_point(a) - canonical_point(b);
    let g = 2.0 * scale * d;
    (
        d.norm_squared(),
        canonical_point_upstream(a, &g),
        canonical_point_upstream(b, &-g),
    )
}

/// Mean flow loss over matched pairs.
pub fn flow_loss(pairs: &[(&RenderResult, &RenderResult)]) -> f64 {
    mean(pairs.iter().map(|(a, b)| (canonical_point(a) - canonical_point(b)).norm_squared()))
}

/// `(z − ẑ)²` and its gradient with respect to `z`.
pub fn depth(z: f64, prior: f64) -> (f64, f64) {
    let d = z - prior;
    (d * d, 2.0 * d)
}

/// Mean squared depth error over the pixels where `mask` is set.
pub fn sparse_depth_loss(z: &[f64], prior: &[f64], mask: &[bool]) -> f64 {
    mean(
        z.iter()
            .zip(prior)
            .zip(mask)
            .filter(|(_, m)| **m)
            .map(|((z, p), _)| depth(*z, *p).0),
    )
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Weights of the prior terms relative to the photometric term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub sparse_flow: f64,
    pub dense_flow: f64,
    pub sparse_depth: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            sparse_flow: 1.0,
            dense_flow: 1.0,
            sparse_depth: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub photometric: f64,
    pub sparse_flow: f64,
    pub dense_flow: f64,
    pub sparse_depth: f64,
    pub total: f64,
    pub n_photometric: usize,
    pub n_sparse_flow: usize,
    pub n_dense_flow: usize,
    pub n_sparse_depth: usize,
}

pub const LOSS_LOG_HEADER: &str = "iter,L_ph,L_sf,L_df,L_sd,L_total";

/// `L_ph + λ_sf L_sf + λ_df L_df + λ_sd L_sd`.
pub fn total_loss(ph: f64, sf: f64, df: f64, sd: f64, w: &LossWeights) -> f64 {
    ph + w.sparse_flow * sf + w.dense_flow * df + w.sparse_depth * sd
}

impl LossBreakdown {
    pub fn new(ph: f64, sf: f64, df: f64, sd: f64, w: &LossWeights) -> Self {
        Self {
            photometric: ph,
            sparse_flow: sf,
            dense_flow: df,
            sparse_depth: sd,
            total: total_loss(ph, sf, df, sd, w),
            ..Self::default()
        }
    }

    /// First non-finite term, by log name.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        [
            ("L_ph", self.photometric),
            ("L_sf", self.sparse_flow),
            ("L_df", self.dense_flow),
            ("L_sd", self.sparse_depth),
            ("L_total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }

    pub fn log_row(&self, iteration: u64) -> String {
        format!(
            "{iteration},{},{},{},{},{}",
            self.photometric, self.sparse_flow, self.dense_flow, self.sparse_depth, self.total
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Domain, FieldBundle, FieldConfig, FrequencyEncoding};
    use crate::geometry::{Ray, SampleMode, SceneBounds};
    use crate::grids::LevelSpec;
    use crate::renderer::{render_ray, render_ray_backward, SamplerConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fake_result(weights: Vec<f64>, points: Vec<Vector3<f64>>) -> RenderResult {
        let n = weights.len();
        let fields = toy_fields(0);
        let ray = toy_ray(Vector3::new(0.0, 0.0, 1.0), 1);
        let mut r = render_ray(&ray, &fields, &SamplerConfig { n_samples: n, mode: SampleMode::Uniform }, 0).unwrap();
        r.weights = weights;
        r.canonical_points = points;
        r
    }

    fn toy_fields(seed: u64) -> FieldBundle {
        let config = FieldConfig {
            motion_levels: vec![LevelSpec { spatial_res: 4, time_res: 3, feature_dim: 3 }],
            canonical_levels: vec![LevelSpec { spatial_res: 4, time_res: 2, feature_dim: 3 }],
            motion_hidden: vec![4],
            color_hidden: vec![4],
            dir_encoding: FrequencyEncoding::new(1, true),
            time_encoding: FrequencyEncoding::new(1, true),
            canonical_time: 1,
        };
        let bounds = SceneBounds { min: [-1.0; 3], max: [1.0; 3], near: 0.5, far: 5.0 };
        let mut f = FieldBundle::new(config, Domain::new(bounds, 5).unwrap(), seed).unwrap();
        f.randomize(&mut ChaCha8Rng::seed_from_u64(seed), 0.7);
        f
    }

    fn toy_ray(direction: Vector3<f64>, time: u32) -> Ray {
        Ray {
            origin: Vector3::new(0.1, -0.2, -3.0),
            direction: direction.normalize(),
            near: 2.0,
            far: 4.0,
            pixel: (0.0, 0.0),
            time,
            camera: 1,
        }
    }

    #[test]
    fn photometric_values() {
        assert_eq!(photometric(&[0.3, 0.2, 0.1], &[0.3, 0.2, 0.1]).0, 0.0);
        assert_eq!(photometric(&[1.0; 3], &[0.0; 3]).0, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c: Vec<[f64; 3]> = (0..17).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let t: Vec<[f64; 3]> = (0..17).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let mut hand = 0.0;
        for i in 0..17 {
            for k in 0..3 {
                hand += (c[i][k] - t[i][k]).powi(2);
            }
        }
        assert!((photometric_loss(&c, &t) - hand / 17.0).abs() < 1e-14);
    }

    #[test]
    fn canonical_point_values() {
        let r = fake_result(vec![1.0], vec![Vector3::new(1.0, 2.0, 3.0)]);
        assert_eq!(canonical_point(&r), Vector3::new(1.0, 2.0, 3.0));
        let r = fake_result(vec![0.0; 3], vec![Vector3::new(4.0, 5.0, 6.0); 3]);
        assert_eq!(canonical_point(&r), Vector3::zeros());
        let w = vec![0.2, 0.1, 0.4];
        let p = vec![Vector3::new(1.0, 0.0, 2.0), Vector3::new(-1.0, 3.0, 0.5), Vector3::new(0.0, 1.0, 1.0)];
        let r = fake_result(w.clone(), p.clone());
        let hand = Vector3::new(
            0.2 * 1.0 + 0.1 * -1.0,
            0.1 * 3.0 + 0.4 * 1.0,
            0.2 * 2.0 + 0.1 * 0.5 + 0.4 * 1.0,
        );
        assert!((canonical_point(&r) - hand).norm() < 1e-15);
    }

    #[test]
    fn flow_loss_values() {
        let a = fake_result(vec![1.0], vec![Vector3::zeros()]);
        let b = fake_result(vec![1.0], vec![Vector3::new(1.0, 0.0, 0.0)]);
        assert_eq!(flow_pair(&a, &b, 1.0).0, 1.0);
        assert_eq!(flow_loss(&[(&a, &a)]), 0.0);
        assert_eq!(flow_loss(&[(&a, &b), (&a, &a)]), 0.5);
    }

    #[test]
    fn depth_values() {
        assert_eq!(depth(2.0, 2.0).0, 0.0);
        assert_eq!(depth(2.0, 3.0).0, 1.0);
        let z = [1.0, 2.0, 3.0, 4.0];
        let p = [1.5, 0.0, 3.0, 2.0];
        let m = [true, false, true, true];
        assert!((sparse_depth_loss(&z, &p, &m) - (0.25 + 0.0 + 4.0) / 3.0).abs() < 1e-15);
        assert_eq!(sparse_depth_loss(&z, &p, &[false; 4]), 0.0);
    }

    #[test]
    fn total_values() {
        let zero = LossWeights { sparse_flow: 0.0, dense_flow: 0.0, sparse_depth: 0.0 };
        assert_eq!(total_loss(1.5, 2.0, 3.0, 4.0, &zero), 1.5);
        assert_eq!(total_loss(1.0, 2.0, 3.0, 9.0, &LossWeights::default()), 6.0);
        let d = LossWeights::default();
        assert_eq!((d.sparse_flow, d.dense_flow, d.sparse_depth), (1.0, 1.0, 0.0));
        let b = LossBreakdown::new(1.0, f64::NAN, 0.0, 0.0, &d);
        assert_eq!(b.non_finite_term(), Some("L_sf"));
        assert_eq!(LossBreakdown::new(1.0, 2.0, 3.0, 0.0, &d).log_row(7), "7,1,2,3,0,6");
    }

    /// The weights are not detached: the gradient reaches σ and hence
    /// both fields, and matches finite differences.
    #[test]
    fn flow_gradient_matches_finite_differences() {
        let f = toy_fields(3);
        let ra = toy_ray(Vector3::new(0.05, 0.1, 1.0), 2);
        let rb = toy_ray(Vector3::new(-0.1, 0.05, 1.0), 4);
        let sampler = SamplerConfig { n_samples: 6, mode: SampleMode::Uniform };
        let objective = |g: &FieldBundle| {
            let a = render_ray(&ra, g, &sampler, 0).unwrap();
            let b = render_ray(&rb, g, &sampler, 0).unwrap();
            flow_pair(&a, &b, 1.0).0
        };
        let a = render_ray(&ra, &f, &sampler, 0).unwrap();
        let b = render_ray(&rb, &f, &sampler, 0).unwrap();
        let (_, ua, ub) = flow_pair(&a, &b, 1.0);
        let mut grads = f.zeros_like();
        render_ray_backward(&a, &f, &ua, &mut grads);
        render_ray_backward(&b, &f, &ub, &mut grads);
        let analytic: Vec<Vec<f64>> = grads.arrays().iter().map(|a| a.data.to_vec()).collect();
        let h = 1e-5;
        let mut density_grad_seen = false;
        for (ai, values) in analytic.iter().enumerate() {
            for (i, &g) in values.iter().enumerate() {
                let mut fp = f.clone();
                fp.arrays_mut()[ai].1[i] += h;
                let mut fm = f.clone();
                fm.arrays_mut()[ai].1[i] -= h;
                let fd = (objective(&fp) - objective(&fm)) / (2.0 * h);
                let err = (g - fd).abs();
                assert!(err <= 1e-4 * g.abs().max(fd.abs()) || err < 1e-8, "array {ai}[{i}]: {g} vs {fd}");
                if grads.arrays()[ai].name.starts_with("Gs") && g.abs() > 1e-6 {
                    density_grad_seen = true;
                }
            }
        }
        assert!(density_grad_seen);
    }

    #[test]
    fn exact_match_has_zero_gradient() {
        let a = fake_result(vec![0.3, 0.5], vec![Vector3::new(0.1, 0.2, 0.3), Vector3::new(0.0, 0.4, 0.2)]);
        let (l, ua, ub) = flow_pair(&a, &a.clone(), 1.0);
        assert_eq!(l, 0.0);
        assert!(ua.is_zero() && ub.is_zero());
    }

    proptest! {
        #[test]
        fn flow_loss_symmetric_and_translation_invariant(
            wa in prop::collection::vec(0.0..0.3f64, 3),
            wb in prop::collection::vec(0.0..0.3f64, 3),
            pts in prop::collection::vec(-2.0..2.0f64, 18),
            shift in prop::array::uniform3(-5.0..5.0f64),
        ) {
            let pa: Vec<_> = (0..3).map(|i| Vector3::new(pts[3 * i], pts[3 * i + 1], pts[3 * i + 2])).collect();
            let pb: Vec<_> = (3..6).map(|i| Vector3::new(pts[3 * i], pts[3 * i + 1], pts[3 * i + 2])).collect();
            let a = fake_result(wa.clone(), pa.clone());
            let b = fake_result(wb.clone(), pb.clone());
            let l = flow_pair(&a, &b, 1.0).0;
            prop_assert!((l - flow_pair(&b, &a, 1.0).0).abs() <= 1e-12 * l.max(1.0));
            // Shift both canonical point sums by the same vector.
            let s = Vector3::from(shift);
            let a2 = fake_result(vec![1.0, 0.0, 0.0, 0.0], vec![canonical_point(&a) + s, Vector3::zeros(), Vector3::zeros(), Vector3::zeros()]);
            let b2 = fake_result(vec![1.0, 0.0, 0.0, 0.0], vec![canonical_point(&b) + s, Vector3::zeros(), Vector3::zeros(), Vector3::zeros()]);
            prop_assert!((flow_pair(&a2, &b2, 1.0).0 - l).abs() < 1e-9);
        }
    }
}
