//! The motion field and the canonical radiance field.
//!
//! The motion field maps a point `p` at frame `t` to its scene flow towards
//! the canonical time; the deformed point `p' = p + flow(p, t)` is then
//! looked up in the canonical field, which yields a density (softplus of the
//! first latent channel) and a color decoded by a tiny MLP from the remaining
//! latent channels, the encoded view direction and the encoded time.

pub mod encoding;
pub mod mlp;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SceneBounds;
use crate::grids::{GridKind, GridTrace, LevelSpec, PlaneGridSet};
use crate::seed;

pub use encoding::FrequencyEncoding;
pub use mlp::{sigmoid, softplus, Activation, Dense, MlpTrace, TinyMlp};

/// Maps scene coordinates and frame indices to the unit cube.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub bounds: SceneBounds,
    pub n_frames: u32,
}

impl Domain {
    pub fn new(bounds: SceneBounds, n_frames: u32) -> Result<Self> {
        bounds.validate()?;
        if n_frames == 0 {
            return Err(Error::Validation("a scene needs at least one frame".into()));
        }
        Ok(Self { bounds, n_frames })
    }

    pub fn normalize(&self, p: &Vector3<f64>) -> [f64; 3] {
        let b = &self.bounds;
        std::array::from_fn(|a| (p[a] - b.min[a]) / (b.max[a] - b.min[a]))
    }

    /// `(t - 1) / (N_f - 1)`; a single-frame scene maps to 0.
    pub fn normalize_time(&self, t: u32) -> f64 {
        if self.n_frames <= 1 {
            0.0
        } else {
            (t as f64 - 1.0) / (self.n_frames as f64 - 1.0)
        }
    }

    fn inv_extent(&self) -> Vector3<f64> {
        self.bounds.extent().map(|e| 1.0 / e)
    }
}

/// Architecture of both fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub motion_levels: Vec<LevelSpec>,
    pub canonical_levels: Vec<LevelSpec>,
    pub motion_hidden: Vec<usize>,
    pub color_hidden: Vec<usize>,
    pub dir_encoding: FrequencyEncoding,
    pub time_encoding: FrequencyEncoding,
    /// Frame whose geometry the canonical field stores. Only recorded; the
    /// motion field is not constrained to vanish there.
    pub canonical_time: u32,
}

impl FieldConfig {
    /// Default sizes for a scene with `n_frames` frames.
    pub fn for_frames(n_frames: u32) -> Self {
        let t = |div: u32| ((n_frames / div) as usize).max(2);
        Self {
            motion_levels: vec![
                LevelSpec { spatial_res: 32, time_res: t(4), feature_dim: 8 },
                LevelSpec { spatial_res: 64, time_res: t(2), feature_dim: 8 },
            ],
            canonical_levels: vec![
                LevelSpec { spatial_res: 64, time_res: 2, feature_dim: 16 },
                LevelSpec { spatial_res: 128, time_res: 2, feature_dim: 16 },
            ],
            motion_hidden: vec![64, 64],
            color_hidden: vec![64, 64],
            dir_encoding: FrequencyEncoding::new(4, true),
            time_encoding: FrequencyEncoding::new(6, true),
            canonical_time: 1,
        }
    }

    pub fn validate(&self, n_frames: u32) -> Result<()> {
        if self.motion_levels.is_empty() || self.canonical_levels.is_empty() {
            return Err(Error::Validation("both grids need at least one level".into()));
        }
        let latent: usize = self.canonical_levels.iter().map(|l| l.feature_dim).sum();
        if latent < 1 {
            return Err(Error::Validation("canonical latent is empty".into()));
        }
        if self.canonical_time < 1 || self.canonical_time > n_frames {
            return Err(Error::Validation(format!(
                "canonical time {} outside 1..={n_frames}",
                self.canonical_time
            )));
        }
        Ok(())
    }

    fn color_input_dim(&self) -> usize {
        let latent: usize = self.canonical_levels.iter().map(|l| l.feature_dim).sum();
        latent - 1 + self.dir_encoding.output_dim(3) + self.time_encoding.output_dim(1)
    }
}

/// Scene flow towards the canonical time: a hex-plane grid followed by an
/// MLP with a 3-vector output in scene units.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionField {
    pub grid: PlaneGridSet,
    pub mlp: TinyMlp,
}

impl MotionField {
    pub fn flow(&self, domain: &Domain, p: &Vector3<f64>, t: u32) -> Vector3<f64> {
        let u = domain.normalize(p);
        let h = self
            .grid
            .combine_features(&[u[0], u[1], u[2], domain.normalize_time(t)]);
        Vector3::from_column_slice(&self.mlp.forward(&h))
    }
}

/// The scene at the canonical time.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalField {
    pub grid: PlaneGridSet,
    pub color_mlp: TinyMlp,
    pub dir_encoding: FrequencyEncoding,
    pub time_encoding: FrequencyEncoding,
}

impl CanonicalField {
    /// Density and color at a canonical point seen along `view_dir` at frame `t`.
    pub fn query(&self, domain: &Domain, p_canonical: &Vector3<f64>, view_dir: &Vector3<f64>, t: u32) -> (f64, [f64; 3]) {
        let enc = RayEncoding::new(self, domain, view_dir, t);
        let (sigma, color, _) = self.eval(domain, p_canonical, &enc);
        (sigma, color)
    }

    fn eval(&self, domain: &Domain, p: &Vector3<f64>, enc: &RayEncoding) -> (f64, [f64; 3], (GridTrace, MlpTrace, f64)) {
        let (h, grid_trace) = self.grid.forward(&domain.normalize(p));
        let sigma = softplus(h[0]);
        let mut input = Vec::with_capacity(self.color_mlp.input_dim());
        input.extend_from_slice(&h[1..]);
        input.extend_from_slice(&enc.direction);
        input.extend_from_slice(&enc.time);
        let (c, mlp_trace) = self.color_mlp.forward_traced(&input);
        (sigma, [c[0], c[1], c[2]], (grid_trace, mlp_trace, h[0]))
    }
}

/// Encoded view direction and time shared by all samples of a ray.
#[derive(Clone, Debug)]
pub struct RayEncoding {
    pub time_normalized: f64,
    pub direction: Vec<f64>,
    pub time: Vec<f64>,
}

impl RayEncoding {
    pub fn new(field: &CanonicalField, domain: &Domain, view_dir: &Vector3<f64>, t: u32) -> Self {
        let tau = domain.normalize_time(t);
        Self {
            time_normalized: tau,
            direction: field.dir_encoding.encode(view_dir.as_slice()),
            time: field.time_encoding.encode(&[tau]),
        }
    }
}

/// Outputs of one sample evaluation.
#[derive(Clone, Debug)]
pub struct SampleEval {
    pub flow: Vector3<f64>,
    pub p_canonical: Vector3<f64>,
    pub sigma: f64,
    pub color: [f64; 3],
    pub trace: SampleTrace,
}

/// Forward intermediates needed by [`FieldBundle::backward_sample`].
#[derive(Clone, Debug)]
pub struct SampleTrace {
    motion_grid: GridTrace,
    motion_mlp: MlpTrace,
    canonical_grid: GridTrace,
    color_mlp: MlpTrace,
    density_logit: f64,
}

/// Named view of one learnable array.
#[derive(Debug)]
pub struct ArrayView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
    pub touched: bool,
}

/// Both fields plus the coordinate domain they live in. Gradient buffers use
/// the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldBundle {
    pub domain: Domain,
    pub config: FieldConfig,
    pub motion: MotionField,
    pub canonical: CanonicalField,
}

impl FieldBundle {
    /// Randomly initialized fields. The motion output layer is zero, so the
    /// initial deformation is the identity, and the color MLP ignores time.
    pub fn new(config: FieldConfig, domain: Domain, seed_value: u64) -> Result<Self> {
        config.validate(domain.n_frames)?;
        let mut rng = seed::rng(&[seed_value, 0xF1E1D]);
        let motion_grid = PlaneGridSet::new_random(GridKind::SpatioTemporal4, &config.motion_levels, &mut rng)?;
        let mut widths = vec![motion_grid.output_dim()];
        widths.extend(&config.motion_hidden);
        widths.push(3);
        let mut motion_mlp = TinyMlp::new(&widths, Activation::Identity, &mut rng);
        motion_mlp.layers.last_mut().unwrap().clear();

        let canonical_grid = PlaneGridSet::new_random(GridKind::Spatial3, &config.canonical_levels, &mut rng)?;
        let mut widths = vec![config.color_input_dim()];
        widths.extend(&config.color_hidden);
        widths.push(3);
        let mut color_mlp = TinyMlp::new(&widths, Activation::Sigmoid, &mut rng);
        let time_cols = config.time_encoding.output_dim(1);
        let first = &mut color_mlp.layers[0];
        for row in first.weight.chunks_exact_mut(first.in_dim) {
            let n = row.len();
            row[n - time_cols..].iter_mut().for_each(|w| *w = 0.0);
        }
        Ok(Self {
            domain,
            motion: MotionField { grid: motion_grid, mlp: motion_mlp },
            canonical: CanonicalField {
                grid: canonical_grid,
                color_mlp,
                dir_encoding: config.dir_encoding,
                time_encoding: config.time_encoding,
            },
            config,
        })
    }

    /// Replaces every parameter with a random value; used to exercise
    /// gradients away from the special initial state.
    pub fn randomize<R: Rng>(&mut self, rng: &mut R, scale: f64) {
        for (_, data) in self.arrays_mut() {
            data.iter_mut().for_each(|x| *x = rng.gen_range(-scale..scale));
        }
    }

    pub fn ray_encoding(&self, view_dir: &Vector3<f64>, t: u32) -> RayEncoding {
        RayEncoding::new(&self.canonical, &self.domain, view_dir, t)
    }

    /// Deforms `p` to the canonical time and queries the canonical field.
    pub fn eval_sample(&self, p: &Vector3<f64>, enc: &RayEncoding) -> SampleEval {
        let u = self.domain.normalize(p);
        let (h_motion, motion_grid) = self
            .motion
            .grid
            .forward(&[u[0], u[1], u[2], enc.time_normalized]);
        let (flow, motion_mlp) = self.motion.mlp.forward_traced(&h_motion);
        let flow = Vector3::new(flow[0], flow[1], flow[2]);
        let p_canonical = p + flow;
        let (sigma, color, (canonical_grid, color_mlp, density_logit)) =
            self.canonical.eval(&self.domain, &p_canonical, enc);
        SampleEval {
            flow,
            p_canonical,
            sigma,
            color,
            trace: SampleTrace {
                motion_grid,
                motion_mlp,
                canonical_grid,
                color_mlp,
                density_logit,
            },
        }
    }

    /// Backpropagates `dL/dσ`, `dL/dc` and a direct `dL/dp'` of one sample
    /// into `grads`. Gradients reach the motion field through `p'`.
    pub fn backward_sample(
        &self,
        trace: &SampleTrace,
        d_sigma: f64,
        d_color: &[f64; 3],
        d_canonical: &Vector3<f64>,
        grads: &mut FieldBundle,
    ) {
        let d_color_in = self
            .canonical
            .color_mlp
            .backward(&trace.color_mlp, d_color, &mut grads.canonical.color_mlp);
        let latent = self.canonical.grid.output_dim();
        let mut d_latent = Vec::with_capacity(latent);
        d_latent.push(d_sigma * sigmoid(trace.density_logit));
        d_latent.extend_from_slice(&d_color_in[..latent - 1]);
        let mut d_u = [0.0; 3];
        self.canonical.grid.backward(
            &trace.canonical_grid,
            &d_latent,
            &mut grads.canonical.grid,
            Some(&mut d_u),
        );
        let d_p = d_canonical + Vector3::from(d_u).component_mul(&self.domain.inv_extent());
        let d_h_motion = self
            .motion
            .mlp
            .backward(&trace.motion_mlp, d_p.as_slice(), &mut grads.motion.mlp);
        self.motion
            .grid
            .backward(&trace.motion_grid, &d_h_motion, &mut grads.motion.grid, None);
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.clear();
        z
    }

    /// Zeroes every array and resets the touched flags.
    pub fn clear(&mut self) {
        self.motion.grid.clear();
        self.canonical.grid.clear();
        self.motion.mlp.layers.iter_mut().for_each(Dense::clear);
        self.canonical.color_mlp.layers.iter_mut().for_each(Dense::clear);
    }

    /// All learnable arrays in a fixed order.
    pub fn arrays(&self) -> Vec<ArrayView<'_>> {
        let mut out = Vec::new();
        for (name, plane) in self.motion.grid.named_planes() {
            out.push(ArrayView {
                name: format!("Gf/{name}"),
                shape: plane.shape().to_vec(),
                data: &plane.data,
                touched: plane.touched(),
            });
        }
        push_mlp(&mut out, "Mf", &self.motion.mlp);
        for (name, plane) in self.canonical.grid.named_planes() {
            out.push(ArrayView {
                name: format!("Gs/{name}"),
                shape: plane.shape().to_vec(),
                data: &plane.data,
                touched: plane.touched(),
            });
        }
        push_mlp(&mut out, "Ms", &self.canonical.color_mlp);
        out
    }

    /// Mutable data of every array, same order as [`Self::arrays`].
    pub fn arrays_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let names: Vec<String> = self.arrays().into_iter().map(|a| a.name).collect();
        let mut slices: Vec<&mut [f64]> = Vec::with_capacity(names.len());
        slices.extend(self.motion.grid.planes_mut().map(|p| p.data.as_mut_slice()));
        for l in &mut self.motion.mlp.layers {
            slices.push(&mut l.weight);
            slices.push(&mut l.bias);
        }
        slices.extend(self.canonical.grid.planes_mut().map(|p| p.data.as_mut_slice()));
        for l in &mut self.canonical.color_mlp.layers {
            slices.push(&mut l.weight);
            slices.push(&mut l.bias);
        }
        names.into_iter().zip(slices).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.arrays().iter().map(|a| a.data.len()).sum()
    }

    /// Elementwise `self += other`, merging touched flags.
    pub fn add_assign(&mut self, other: &FieldBundle) {
        for (a, b) in self.motion.grid.planes_mut().zip(other.motion.grid.planes()) {
            a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
            a.mark_touched(b.touched());
        }
        for (a, b) in self.canonical.grid.planes_mut().zip(other.canonical.grid.planes()) {
            a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
            a.mark_touched(b.touched());
        }
        let layers = self
            .motion
            .mlp
            .layers
            .iter_mut()
            .zip(&other.motion.mlp.layers)
            .chain(self.canonical.color_mlp.layers.iter_mut().zip(&other.canonical.color_mlp.layers));
        for (a, b) in layers {
            a.weight.iter_mut().zip(&b.weight).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
            a.mark_touched(b.touched());
        }
    }

    /// Names of arrays whose gradient buffer was never written.
    pub fn untouched(&self) -> Vec<String> {
        self.arrays()
            .into_iter()
            .filter(|a| !a.touched)
            .map(|a| a.name)
            .collect()
    }

    /// Largest absolute entry (NaN if any entry is NaN).
    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for a in self.arrays() {
            for &x in a.data {
                if x.is_nan() {
                    return f64::NAN;
                }
                m = m.max(x.abs());
            }
        }
        m
    }

    /// Checks that `other` has the same array names and shapes.
    pub fn check_compatible(&self, other: &FieldBundle) -> Result<()> {
        let (a, b) = (self.arrays(), other.arrays());
        if a.len() != b.len() {
            return Err(Error::Validation(format!(
                "array count mismatch: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        for (x, y) in a.iter().zip(&b) {
            if x.name != y.name || x.shape != y.shape {
                return Err(Error::Validation(format!(
                    "array {} {:?} does not match {} {:?}",
                    x.name, x.shape, y.name, y.shape
                )));
            }
        }
        Ok(())
    }
}

fn push_mlp<'a>(out: &mut Vec<ArrayView<'a>>, prefix: &str, mlp: &'a TinyMlp) {
    for (i, l) in mlp.layers.iter().enumerate() {
        out.push(ArrayView {
            name: format!("{prefix}/W{i}"),
            shape: vec![l.out_dim, l.in_dim],
            data: &l.weight,
            touched: l.touched(),
        });
        out.push(ArrayView {
            name: format!("{prefix}/b{i}"),
            shape: vec![l.out_dim],
            data: &l.bias,
            touched: l.touched(),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn domain() -> Domain {
        Domain::new(
            SceneBounds { min: [-1.0, -1.0, -1.0], max: [1.0, 1.0, 1.0], near: 0.1, far: 8.0 },
            10,
        )
        .unwrap()
    }

    fn tiny_config() -> FieldConfig {
        FieldConfig {
            motion_levels: vec![
                LevelSpec { spatial_res: 4, time_res: 3, feature_dim: 3 },
                LevelSpec { spatial_res: 5, time_res: 4, feature_dim: 2 },
            ],
            canonical_levels: vec![
                LevelSpec { spatial_res: 5, time_res: 2, feature_dim: 4 },
                LevelSpec { spatial_res: 7, time_res: 2, feature_dim: 3 },
            ],
            motion_hidden: vec![6],
            color_hidden: vec![5, 4],
            dir_encoding: FrequencyEncoding::new(1, true),
            time_encoding: FrequencyEncoding::new(2, true),
            canonical_time: 1,
        }
    }

    fn random_bundle(seed_value: u64) -> FieldBundle {
        let mut f = FieldBundle::new(tiny_config(), domain(), seed_value).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed_value);
        f.randomize(&mut rng, 0.6);
        f
    }

    #[test]
    fn identity_deformation_at_init() {
        let f = FieldBundle::new(FieldConfig::for_frames(10), domain(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let p = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let t = rng.gen_range(1..=10);
            assert_eq!(f.motion.flow(&f.domain, &p, t), Vector3::zeros());
        }
    }

    #[test]
    fn flow_matches_layer_by_layer_oracle() {
        let f = random_bundle(4);
        let p = Vector3::new(0.2, -0.4, 0.7);
        let t = 7;
        let u = [(0.2 + 1.0) / 2.0, (-0.4 + 1.0) / 2.0, (0.7 + 1.0) / 2.0];
        let tau = 6.0 / 9.0;
        let h = f.motion.grid.combine_features(&[u[0], u[1], u[2], tau]);
        let mut x = h;
        for (i, l) in f.motion.mlp.layers.iter().enumerate() {
            let mut y = l.bias.clone();
            for o in 0..l.out_dim {
                for j in 0..l.in_dim {
                    y[o] += l.weight[o * l.in_dim + j] * x[j];
                }
            }
            if i + 1 < f.motion.mlp.layers.len() {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            x = y;
        }
        let got = f.motion.flow(&f.domain, &p, t);
        for a in 0..3 {
            assert!((got[a] - x[a]).abs() < 1e-14);
        }
    }

    #[test]
    fn canonical_query_matches_oracle_and_limits() {
        let f = random_bundle(5);
        let p = Vector3::new(-0.3, 0.1, 0.5);
        let dir = Vector3::new(1.0, 2.0, -2.0).normalize();
        let (sigma, color) = f.canonical.query(&f.domain, &p, &dir, 4);
        let h = f.canonical.grid.combine_features(&f.domain.normalize(&p));
        let mut input = h[1..].to_vec();
        input.extend(f.config.dir_encoding.encode(dir.as_slice()));
        input.extend(f.config.time_encoding.encode(&[3.0 / 9.0]));
        let logits = {
            let mut m = f.canonical.color_mlp.clone();
            m.output = Activation::Identity;
            m.forward(&input)
        };
        assert!((sigma - (1.0 + h[0].exp()).ln()).abs() < 1e-14);
        for c in 0..3 {
            assert!((color[c] - 1.0 / (1.0 + (-logits[c]).exp())).abs() < 1e-14);
        }

        let mut gray = f.clone();
        gray.canonical.color_mlp.layers.iter_mut().for_each(Dense::clear);
        assert_eq!(gray.canonical.query(&f.domain, &p, &dir, 4).1, [0.5; 3]);

        let mut empty = f.clone();
        for plane in &mut empty.canonical.grid.levels[0].planes {
            plane.data.chunks_mut(4).for_each(|n| n[0] = 1e3);
        }
        empty.canonical.grid.levels[0].planes[0].data.chunks_mut(4).for_each(|n| n[0] = -1e3);
        assert!(empty.canonical.query(&f.domain, &p, &dir, 4).0 < 1e-300);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let f = random_bundle(6);
        let enc = f.ray_encoding(&Vector3::new(0.0, 0.0, 1.0), 3);
        let s = f.eval_sample(&Vector3::new(0.1, 0.2, 0.3), &enc);
        let mut g = f.zeros_like();
        f.backward_sample(&s.trace, 0.0, &[0.0; 3], &Vector3::zeros(), &mut g);
        assert_eq!(g.max_abs(), 0.0);
        assert!(g.untouched().is_empty());
    }

    /// Full stack check: σ, color and p' all receive upstream gradients.
    #[test]
    fn sample_backward_matches_finite_differences() {
        let f = random_bundle(7);
        let dir = Vector3::new(0.3, -0.5, 0.8).normalize();
        let enc = f.ray_encoding(&dir, 6);
        let p = Vector3::new(0.13, -0.27, 0.41);
        let (ds, dc, dp) = (0.8, [0.3, -0.6, 0.9], Vector3::new(-0.4, 0.25, 0.7));
        let objective = |g: &FieldBundle| {
            let s = g.eval_sample(&p, &enc);
            ds * s.sigma + dc[0] * s.color[0] + dc[1] * s.color[1] + dc[2] * s.color[2] + dp.dot(&s.p_canonical)
        };
        let s = f.eval_sample(&p, &enc);
        let mut grads = f.zeros_like();
        f.backward_sample(&s.trace, ds, &dc, &dp, &mut grads);
        let h = 1e-5;
        let analytic: Vec<(String, Vec<f64>)> = grads
            .arrays()
            .into_iter()
            .map(|a| (a.name, a.data.to_vec()))
            .collect();
        let mut worst: f64 = 0.0;
        for (ai, (name, values)) in analytic.iter().enumerate() {
            for (i, &a) in values.iter().enumerate() {
                let mut fp = f.clone();
                fp.arrays_mut()[ai].1[i] += h;
                let mut fm = f.clone();
                fm.arrays_mut()[ai].1[i] -= h;
                let fd = (objective(&fp) - objective(&fm)) / (2.0 * h);
                let err = (a - fd).abs();
                let ok = err <= 1e-4 * a.abs().max(fd.abs()) || err < 1e-8;
                assert!(ok, "{name}[{i}]: analytic {a} vs fd {fd}");
                worst = worst.max(err);
            }
        }
        assert!(worst.is_finite());
    }

    #[test]
    fn array_names_and_compatibility() {
        let mut f = random_bundle(8);
        let names: Vec<String> = f.arrays().into_iter().map(|a| a.name).collect();
        assert_eq!(names[0], "Gf/L0/xy");
        assert!(names.contains(&"Gf/L1/zt".to_string()));
        assert!(names.contains(&"Mf/W0".to_string()));
        assert!(names.contains(&"Ms/b2".to_string()));
        assert!(names.contains(&"Gs/L1/xz".to_string()));
        assert_eq!(f.arrays_mut().len(), names.len());
        assert!(f.check_compatible(&f.zeros_like()).is_ok());
        let mut other = tiny_config();
        other.color_hidden = vec![5];
        let g = FieldBundle::new(other, domain(), 1).unwrap();
        assert!(f.check_compatible(&g).is_err());
    }
}
