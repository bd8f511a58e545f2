//! Multi-resolution factorized plane grids.
//!
//! A 3D volume is factorized into the planes `{xy, yz, xz}` and a 4D volume
//! into `{xy, yz, xz, xt, yt, zt}`. A query point is projected onto every
//! plane of a level, each plane is bilinearly interpolated, and the plane
//! features are multiplied elementwise. Levels are concatenated.
//!
//! Query points are normalized to the unit cube. Coordinates outside
//! `[0, 1]` are clamped, and a clamped coordinate has zero derivative.

use std::sync::atomic::{AtomicBool, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static CLAMP_LOGGED: AtomicBool = AtomicBool::new(false);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
    T,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
            Axis::T => 3,
        }
    }

    fn letter(self) -> char {
        match self {
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Z => 'z',
            Axis::T => 't',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// Three spatial planes.
    Spatial3,
    /// Three spatial and three spatio-temporal planes.
    SpatioTemporal4,
}

const SPATIAL_PLANES: [(Axis, Axis); 3] = [(Axis::X, Axis::Y), (Axis::Y, Axis::Z), (Axis::X, Axis::Z)];
const HEX_PLANES: [(Axis, Axis); 6] = [
    (Axis::X, Axis::Y),
    (Axis::Y, Axis::Z),
    (Axis::X, Axis::Z),
    (Axis::X, Axis::T),
    (Axis::Y, Axis::T),
    (Axis::Z, Axis::T),
];

impl GridKind {
    pub fn dim(self) -> usize {
        match self {
            GridKind::Spatial3 => 3,
            GridKind::SpatioTemporal4 => 4,
        }
    }

    pub fn plane_axes(self) -> &'static [(Axis, Axis)] {
        match self {
            GridKind::Spatial3 => &SPATIAL_PLANES,
            GridKind::SpatioTemporal4 => &HEX_PLANES,
        }
    }
}

/// Bilinear cell lookup for one plane query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub i0: usize,
    pub j0: usize,
    /// Fractional offsets inside the cell along the two plane axes.
    pub fa: f64,
    pub fb: f64,
    /// `d(node coordinate)/d(normalized coordinate)`, zero when clamped.
    pub scale_a: f64,
    pub scale_b: f64,
}

/// One 2D feature plane, row-major `[res_a][res_b][feature_dim]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub axes: (Axis, Axis),
    pub res: (usize, usize),
    pub feature_dim: usize,
    pub data: Vec<f64>,
    touched: bool,
}

fn locate_axis(u: f64, res: usize) -> (usize, f64, f64) {
    let (u, live) = if (0.0..=1.0).contains(&u) {
        (u, true)
    } else {
        if !CLAMP_LOGGED.swap(true, Ordering::Relaxed) {
            log::warn!("grid query coordinate {u} outside [0, 1]; clamping (reported once)");
        }
        (if u.is_nan() { 0.0 } else { u.clamp(0.0, 1.0) }, false)
    };
    let span = (res - 1) as f64;
    let x = u * span;
    let i0 = (x.floor() as usize).min(res - 2);
    (i0, x - i0 as f64, if live { span } else { 0.0 })
}

impl Plane {
    pub fn filled(axes: (Axis, Axis), res: (usize, usize), feature_dim: usize, value: f64) -> Result<Self> {
        if res.0 < 2 || res.1 < 2 {
            return Err(Error::InvalidArgument(format!(
                "plane resolution {}x{} must be at least 2x2",
                res.0, res.1
            )));
        }
        if feature_dim == 0 {
            return Err(Error::InvalidArgument("feature_dim must be positive".into()));
        }
        Ok(Self {
            axes,
            res,
            feature_dim,
            data: vec![value; res.0 * res.1 * feature_dim],
            touched: false,
        })
    }

    pub fn name(&self) -> String {
        format!("{}{}", self.axes.0.letter(), self.axes.1.letter())
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.res.0, self.res.1, self.feature_dim]
    }

    fn offset(&self, ia: usize, ib: usize) -> usize {
        (ia * self.res.1 + ib) * self.feature_dim
    }

    pub fn node(&self, ia: usize, ib: usize) -> &[f64] {
        let o = self.offset(ia, ib);
        &self.data[o..o + self.feature_dim]
    }

    pub fn locate(&self, uv: [f64; 2]) -> Cell {
        let (i0, fa, scale_a) = locate_axis(uv[0], self.res.0);
        let (j0, fb, scale_b) = locate_axis(uv[1], self.res.1);
        Cell {
            i0,
            j0,
            fa,
            fb,
            scale_a,
            scale_b,
        }
    }

    pub fn interpolate_cell(&self, cell: &Cell, out: &mut [f64]) {
        let f = self.feature_dim;
        let o00 = self.offset(cell.i0, cell.j0);
        let o01 = o00 + f;
        let o10 = self.offset(cell.i0 + 1, cell.j0);
        let o11 = o10 + f;
        let w00 = (1.0 - cell.fa) * (1.0 - cell.fb);
        let w01 = (1.0 - cell.fa) * cell.fb;
        let w10 = cell.fa * (1.0 - cell.fb);
        let w11 = cell.fa * cell.fb;
        let d = &self.data;
        for k in 0..f {
            out[k] = w00 * d[o00 + k] + w01 * d[o01 + k] + w10 * d[o10 + k] + w11 * d[o11 + k];
        }
    }

    /// Bilinear interpolation at `uv` in the unit square (clamped).
    pub fn interpolate(&self, uv: [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; self.feature_dim];
        self.interpolate_cell(&self.locate(uv), &mut out);
        out
    }

    /// Adds `upstream ⊗ bilinear weights` into the four nodes of `cell`.
    pub fn scatter(&mut self, cell: &Cell, upstream: &[f64]) {
        let f = self.feature_dim;
        let weights = [
            (cell.i0, cell.j0, (1.0 - cell.fa) * (1.0 - cell.fb)),
            (cell.i0, cell.j0 + 1, (1.0 - cell.fa) * cell.fb),
            (cell.i0 + 1, cell.j0, cell.fa * (1.0 - cell.fb)),
            (cell.i0 + 1, cell.j0 + 1, cell.fa * cell.fb),
        ];
        for (ia, ib, w) in weights {
            let o = self.offset(ia, ib);
            for k in 0..f {
                self.data[o + k] += w * upstream[k];
            }
        }
        self.touched = true;
    }

    /// Derivative of `upstream · interpolate(uv)` with respect to `uv`.
    pub fn uv_gradient(&self, cell: &Cell, upstream: &[f64]) -> [f64; 2] {
        let f = self.feature_dim;
        let n00 = self.offset(cell.i0, cell.j0);
        let n01 = n00 + f;
        let n10 = self.offset(cell.i0 + 1, cell.j0);
        let n11 = n10 + f;
        let d = &self.data;
        let (mut ga, mut gb) = (0.0, 0.0);
        for k in 0..f {
            let da = (1.0 - cell.fb) * (d[n10 + k] - d[n00 + k]) + cell.fb * (d[n11 + k] - d[n01 + k]);
            let db = (1.0 - cell.fa) * (d[n01 + k] - d[n00 + k]) + cell.fa * (d[n11 + k] - d[n10 + k]);
            ga += upstream[k] * da;
            gb += upstream[k] * db;
        }
        [ga * cell.scale_a, gb * cell.scale_b]
    }

    pub fn touched(&self) -> bool {
        self.touched
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|x| *x = 0.0);
        self.touched = false;
    }

    pub(crate) fn mark_touched(&mut self, touched: bool) {
        self.touched |= touched;
    }
}

/// Resolution and width of one level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSpec {
    /// Nodes per spatial axis.
    pub spatial_res: usize,
    /// Nodes along the time axis (ignored for spatial grids).
    pub time_res: usize,
    pub feature_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridLevel {
    pub spec: LevelSpec,
    pub planes: Vec<Plane>,
}

/// Multi-resolution set of factorized planes.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneGridSet {
    pub kind: GridKind,
    pub levels: Vec<GridLevel>,
}

/// Forward intermediates of one [`PlaneGridSet::forward`] call.
#[derive(Clone, Debug, Default)]
pub struct GridTrace {
    cells: Vec<Cell>,
    /// Per level, per plane, `feature_dim` interpolated values.
    values: Vec<f64>,
}

/// Uniform initialization range of spatial planes.
pub const SPATIAL_INIT_RANGE: f64 = 0.2;

impl PlaneGridSet {
    /// Allocates a grid set filled with a constant.
    pub fn filled(kind: GridKind, levels: &[LevelSpec], value: f64) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidArgument("grid needs at least one level".into()));
        }
        let levels = levels
            .iter()
            .map(|spec| {
                let planes = kind
                    .plane_axes()
                    .iter()
                    .map(|&(a, b)| {
                        let res_of = |axis: Axis| {
                            if axis == Axis::T {
                                spec.time_res
                            } else {
                                spec.spatial_res
                            }
                        };
                        Plane::filled((a, b), (res_of(a), res_of(b)), spec.feature_dim, value)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(GridLevel { spec: *spec, planes })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { kind, levels })
    }

    /// Spatial planes uniform in `[-0.2, 0.2]`; planes spanning time are
    /// exactly 1 so the temporal factor starts as the multiplicative identity.
    pub fn new_random<R: Rng>(kind: GridKind, levels: &[LevelSpec], rng: &mut R) -> Result<Self> {
        let mut grid = Self::filled(kind, levels, 0.0)?;
        for level in &mut grid.levels {
            for plane in &mut level.planes {
                if plane.axes.1 == Axis::T {
                    plane.data.iter_mut().for_each(|x| *x = 1.0);
                } else {
                    plane
                        .data
                        .iter_mut()
                        .for_each(|x| *x = rng.gen_range(-SPATIAL_INIT_RANGE..SPATIAL_INIT_RANGE));
                }
            }
        }
        Ok(grid)
    }

    pub fn output_dim(&self) -> usize {
        self.levels.iter().map(|l| l.spec.feature_dim).sum()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.clear();
        z
    }

    pub fn clear(&mut self) {
        self.planes_mut().for_each(Plane::clear);
    }

    pub fn planes(&self) -> impl Iterator<Item = &Plane> {
        self.levels.iter().flat_map(|l| l.planes.iter())
    }

    pub fn planes_mut(&mut self) -> impl Iterator<Item = &mut Plane> {
        self.levels.iter_mut().flat_map(|l| l.planes.iter_mut())
    }

    /// `(name, plane)` pairs with names like `L0/xt`.
    pub fn named_planes(&self) -> Vec<(String, &Plane)> {
        self.levels
            .iter()
            .enumerate()
            .flat_map(|(li, l)| l.planes.iter().map(move |p| (format!("L{li}/{}", p.name()), p)))
            .collect()
    }

    fn check_point(&self, point: &[f64]) {
        assert_eq!(
            point.len(),
            self.kind.dim(),
            "query dimensionality does not match grid kind"
        );
    }

    /// Hadamard-combined features at a normalized point.
    pub fn combine_features(&self, point: &[f64]) -> Vec<f64> {
        self.forward(point).0
    }

    /// Forward pass keeping what [`Self::backward`] needs.
    pub fn forward(&self, point: &[f64]) -> (Vec<f64>, GridTrace) {
        self.check_point(point);
        let n_planes: usize = self.levels.iter().map(|l| l.planes.len()).sum();
        let mut trace = GridTrace {
            cells: Vec::with_capacity(n_planes),
            values: Vec::with_capacity(self.levels.iter().map(|l| l.planes.len() * l.spec.feature_dim).sum()),
        };
        let mut out = Vec::with_capacity(self.output_dim());
        for level in &self.levels {
            let f = level.spec.feature_dim;
            let start = out.len();
            out.resize(start + f, 1.0);
            for plane in &level.planes {
                let cell = plane.locate([point[plane.axes.0.index()], point[plane.axes.1.index()]]);
                let base = trace.values.len();
                trace.values.resize(base + f, 0.0);
                plane.interpolate_cell(&cell, &mut trace.values[base..]);
                for k in 0..f {
                    out[start + k] *= trace.values[base + k];
                }
                trace.cells.push(cell);
            }
        }
        (out, trace)
    }

    /// Accumulates `d(upstream · h)/d(plane entries)` into `grads` and, when
    /// requested, adds `d(upstream · h)/d(point)` into `point_grad`.
    pub fn backward(
        &self,
        trace: &GridTrace,
        upstream: &[f64],
        grads: &mut PlaneGridSet,
        mut point_grad: Option<&mut [f64]>,
    ) {
        assert_eq!(upstream.len(), self.output_dim());
        let mut plane_idx = 0;
        let mut value_off = 0;
        let mut out_off = 0;
        let mut scratch = Vec::new();
        let mut prefix = Vec::new();
        for (li, level) in self.levels.iter().enumerate() {
            let f = level.spec.feature_dim;
            let np = level.planes.len();
            let values = &trace.values[value_off..value_off + np * f];
            let g = &upstream[out_off..out_off + f];
            // prefix[c] = product of planes before c; multiplied by a running
            // suffix below to get the product of all other planes.
            prefix.clear();
            prefix.resize((np + 1) * f, 1.0);
            for c in 0..np {
                for k in 0..f {
                    prefix[(c + 1) * f + k] = prefix[c * f + k] * values[c * f + k];
                }
            }
            let mut suffix = vec![1.0; f];
            scratch.resize(f, 0.0);
            for c in (0..np).rev() {
                for k in 0..f {
                    scratch[k] = g[k] * prefix[c * f + k] * suffix[k];
                    suffix[k] *= values[c * f + k];
                }
                let cell = &trace.cells[plane_idx + c];
                let plane = &level.planes[c];
                grads.levels[li].planes[c].scatter(cell, &scratch);
                if let Some(pg) = point_grad.as_deref_mut() {
                    let [ga, gb] = plane.uv_gradient(cell, &scratch);
                    pg[plane.axes.0.index()] += ga;
                    pg[plane.axes.1.index()] += gb;
                }
            }
            plane_idx += np;
            value_off += np * f;
            out_off += f;
        }
    }
}
