//! Flow and depth priors: records, CSV files, the per-frame store and the
//! pairing rule used during training.
//!
//! Flow prior file:
//!
//! ```text
//! kind,t,v,x,y,s,u,xp,yp,conf
//! sparse,12,1,30.5,17.25,22,3,28.1,16.9,1
//! ```
//!
//! Depth prior file: `t,v,x,y,z,conf`. Frames and cameras are 1-based,
//! pixels use the pixel-center convention of [`crate::geometry`], floats are
//! written with 6 significant digits.

pub mod synthetic;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Camera;

pub const FLOW_HEADER: &str = "kind,t,v,x,y,s,u,xp,yp,conf";
pub const DEPTH_HEADER: &str = "t,v,x,y,z,conf";
pub const DEFAULT_PRIOR_OFFSET: u32 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    /// Keypoint matches, typically across cameras.
    Sparse,
    /// Optical flow within one camera.
    Dense,
}

impl PriorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PriorKind::Sparse => "sparse",
            PriorKind::Dense => "dense",
        }
    }
}

/// Pixel `(x, y)` of camera `v` at frame `t` matches `(xp, yp)` of camera
/// `u` at frame `s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowPrior {
    pub kind: PriorKind,
    pub t: u32,
    pub v: usize,
    pub x: f64,
    pub y: f64,
    pub s: u32,
    pub u: usize,
    pub xp: f64,
    pub yp: f64,
    pub conf: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthPrior {
    pub t: u32,
    pub v: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub conf: f64,
}

/// Formats like C's `%g`: 6 significant digits, trailing zeros removed,
/// exponent notation outside `[1e-4, 1e6)`.
pub fn format_g6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-4..6).contains(&exp) {
        return format!("{}e{exp}", trim_zeros(mantissa));
    }
    trim_zeros(&format!("{:.*}", (5 - exp) as usize, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// The value a prior file stores for `x`.
pub fn quantize6(x: f64) -> f64 {
    format_g6(x).parse().unwrap()
}

impl FlowPrior {
    pub fn quantized(&self) -> Self {
        Self {
            x: quantize6(self.x),
            y: quantize6(self.y),
            xp: quantize6(self.xp),
            yp: quantize6(self.yp),
            conf: quantize6(self.conf),
            ..*self
        }
    }
}

impl DepthPrior {
    pub fn quantized(&self) -> Self {
        Self {
            x: quantize6(self.x),
            y: quantize6(self.y),
            z: quantize6(self.z),
            conf: quantize6(self.conf),
            ..*self
        }
    }
}

/// Frame count and image size of every camera, for validating records.
#[derive(Clone, Debug, PartialEq)]
pub struct RigLimits {
    pub n_frames: u32,
    pub image_sizes: Vec<(u32, u32)>,
}

impl RigLimits {
    pub fn new(cameras: &[Camera], n_frames: u32) -> Self {
        Self {
            n_frames,
            image_sizes: cameras.iter().map(|c| (c.width(), c.height())).collect(),
        }
    }

    fn check_view(&self, t: u32, v: usize, x: f64, y: f64) -> std::result::Result<(), String> {
        if t < 1 || t > self.n_frames {
            return Err(format!("frame {t} outside 1..={}", self.n_frames));
        }
        let Some(&(w, h)) = v.checked_sub(1).and_then(|i| self.image_sizes.get(i)) else {
            return Err(format!("unknown camera {v} (rig has {})", self.image_sizes.len()));
        };
        if !(x >= -0.5 && x <= w as f64 - 0.5 && y >= -0.5 && y <= h as f64 - 0.5) {
            return Err(format!("pixel ({x}, {y}) outside {w}x{h} image of camera {v}"));
        }
        Ok(())
    }

    pub fn validate_flow(&self, r: &FlowPrior) -> std::result::Result<(), String> {
        self.check_view(r.t, r.v, r.x, r.y)?;
        self.check_view(r.s, r.u, r.xp, r.yp)?;
        if r.kind == PriorKind::Dense && r.u != r.v {
            return Err(format!("dense prior links cameras {} and {}", r.v, r.u));
        }
        check_conf(r.conf)
    }

    pub fn validate_depth(&self, r: &DepthPrior) -> std::result::Result<(), String> {
        self.check_view(r.t, r.v, r.x, r.y)?;
        if !(r.z > 0.0 && r.z.is_finite()) {
            return Err(format!("depth {} must be positive", r.z));
        }
        check_conf(r.conf)
    }
}

fn check_conf(c: f64) -> std::result::Result<(), String> {
    if (0.0..=1.0).contains(&c) {
        Ok(())
    } else {
        Err(format!("confidence {c} outside [0, 1]"))
    }
}

pub fn write_flow_priors(path: &Path, records: &[FlowPrior]) -> Result<()> {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(FLOW_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.kind.as_str(),
            r.t,
            r.v,
            format_g6(r.x),
            format_g6(r.y),
            r.s,
            r.u,
            format_g6(r.xp),
            format_g6(r.yp),
            format_g6(r.conf)
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_depth_priors(path: &Path, records: &[DepthPrior]) -> Result<()> {
    let mut out = String::with_capacity(48 * (records.len() + 1));
    out.push_str(DEPTH_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.t,
            r.v,
            format_g6(r.x),
            format_g6(r.y),
            format_g6(r.z),
            format_g6(r.conf)
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads the data rows of a CSV file, checking the header. Each row comes
/// with its 1-based line number.
fn read_rows(path: &Path, header: &str) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let found = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let expected: Vec<&str> = header.split(',').collect();
    if found.iter().collect::<Vec<_>>() != expected {
        return Err(Error::format(
            path,
            format!("line 1: expected header `{header}`, found `{}`", found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec));
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if let csv::ErrorKind::Io(_) = e.kind() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return Error::io(path, io);
        }
        unreachable!();
    }
    Error::format(path, e.to_string())
}

struct Row<'a> {
    rec: &'a csv::StringRecord,
    names: &'static [&'static str],
}

impl Row<'_> {
    fn field<T: std::str::FromStr>(&self, i: usize) -> std::result::Result<T, String> {
        let raw = self.rec.get(i).unwrap_or("");
        raw.parse()
            .map_err(|_| format!("bad value `{raw}` for column {}", self.names[i]))
    }
}

const FLOW_COLUMNS: &[&str] = &["kind", "t", "v", "x", "y", "s", "u", "xp", "yp", "conf"];
const DEPTH_COLUMNS: &[&str] = &["t", "v", "x", "y", "z", "conf"];

fn parse_flow(rec: &csv::StringRecord) -> std::result::Result<FlowPrior, String> {
    if rec.len() != FLOW_COLUMNS.len() {
        return Err(format!("expected {} fields, found {}", FLOW_COLUMNS.len(), rec.len()));
    }
    let row = Row { rec, names: FLOW_COLUMNS };
    let kind = match &rec[0] {
        "sparse" => PriorKind::Sparse,
        "dense" => PriorKind::Dense,
        other => return Err(format!("unknown prior kind `{other}`")),
    };
    let r = FlowPrior {
        kind,
        t: row.field(1)?,
        v: row.field(2)?,
        x: row.field(3)?,
        y: row.field(4)?,
        s: row.field(5)?,
        u: row.field(6)?,
        xp: row.field(7)?,
        yp: row.field(8)?,
        conf: row.field(9)?,
    };
    Ok(r)
}

fn parse_depth(rec: &csv::StringRecord) -> std::result::Result<DepthPrior, String> {
    if rec.len() != DEPTH_COLUMNS.len() {
        return Err(format!("expected {} fields, found {}", DEPTH_COLUMNS.len(), rec.len()));
    }
    let row = Row { rec, names: DEPTH_COLUMNS };
    Ok(DepthPrior {
        t: row.field(0)?,
        v: row.field(1)?,
        x: row.field(2)?,
        y: row.field(3)?,
        z: row.field(4)?,
        conf: row.field(5)?,
    })
}

/// Loads and validates flow priors. Every bad row is reported, with its line.
pub fn read_flow_priors(path: &Path, limits: &RigLimits) -> Result<Vec<FlowPrior>> {
    let rows = read_rows(path, FLOW_HEADER)?;
    collect_rows(path, rows, |rec| {
        let r = parse_flow(rec)?;
        limits.validate_flow(&r)?;
        Ok(r)
    })
}

pub fn read_depth_priors(path: &Path, limits: &RigLimits) -> Result<Vec<DepthPrior>> {
    let rows = read_rows(path, DEPTH_HEADER)?;
    collect_rows(path, rows, |rec| {
        let r = parse_depth(rec)?;
        limits.validate_depth(&r)?;
        Ok(r)
    })
}

fn collect_rows<T>(
    path: &Path,
    rows: Vec<(u64, csv::StringRecord)>,
    parse: impl Fn(&csv::StringRecord) -> std::result::Result<T, String>,
) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(rows.len());
    let mut problems = Vec::new();
    for (line, rec) in &rows {
        match parse(rec) {
            Ok(r) => out.push(r),
            Err(msg) => problems.push(format!("line {line}: {msg}")),
        }
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        let shown = problems.len().min(20);
        let mut msg = problems[..shown].join("; ");
        if problems.len() > shown {
            let _ = write!(msg, "; and {} more", problems.len() - shown);
        }
        Err(Error::format(path, msg))
    }
}

/// Picks the partner frame `s ∈ {t − offset, t + offset}` uniformly, keeping
/// only offsets inside `1..=n_frames`. `None` when neither is valid.
pub fn choose_partner_frame<R: Rng>(t: u32, n_frames: u32, offset: u32, rng: &mut R) -> Option<u32> {
    let before = t.checked_sub(offset).filter(|&s| s >= 1);
    let after = Some(t + offset).filter(|&s| s <= n_frames);
    match (before, after) {
        (Some(a), Some(b)) => Some(if rng.gen_bool(0.5) { a } else { b }),
        (a, b) => a.or(b),
    }
}

/// Immutable prior collection indexed by source view `(t, v)`.
#[derive(Clone, Debug, Default)]
pub struct PriorStore {
    n_frames: u32,
    flows: BTreeMap<(u32, usize), Vec<FlowPrior>>,
    depths: BTreeMap<(u32, usize), Vec<DepthPrior>>,
    sparse_keys: Vec<(u32, usize)>,
    dense_keys: Vec<(u32, usize)>,
    depth_keys: Vec<(u32, usize)>,
}

impl PriorStore {
    pub fn new(n_frames: u32, flows: Vec<FlowPrior>, depths: Vec<DepthPrior>) -> Self {
        let mut store = Self {
            n_frames,
            ..Self::default()
        };
        for r in flows {
            store.flows.entry((r.t, r.v)).or_default().push(r);
        }
        for r in depths {
            store.depths.entry((r.t, r.v)).or_default().push(r);
        }
        for (key, recs) in &store.flows {
            if recs.iter().any(|r| r.kind == PriorKind::Sparse) {
                store.sparse_keys.push(*key);
            }
            if recs.iter().any(|r| r.kind == PriorKind::Dense) {
                store.dense_keys.push(*key);
            }
        }
        store.depth_keys = store.depths.keys().copied().collect();
        store
    }

    pub fn n_frames(&self) -> u32 {
        self.n_frames
    }

    pub fn flow_count(&self) -> usize {
        self.flows.values().map(Vec::len).sum()
    }

    pub fn depth_count(&self) -> usize {
        self.depths.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.flow_count() == 0 && self.depth_count() == 0
    }

    pub fn flows_at(&self, t: u32, v: usize) -> &[FlowPrior] {
        self.flows.get(&(t, v)).map_or(&[], Vec::as_slice)
    }

    pub fn depths_at(&self, t: u32, v: usize) -> &[DepthPrior] {
        self.depths.get(&(t, v)).map_or(&[], Vec::as_slice)
    }

    /// Source views holding at least one prior of `kind`.
    pub fn views_with(&self, kind: PriorKind) -> &[(u32, usize)] {
        match kind {
            PriorKind::Sparse => &self.sparse_keys,
            PriorKind::Dense => &self.dense_keys,
        }
    }

    pub fn views_with_depth(&self) -> &[(u32, usize)] {
        &self.depth_keys
    }

    /// Restricts the store to priors whose views all use the given cameras.
    pub fn restricted_to(&self, cameras: &[usize]) -> Self {
        let flows = self
            .flows
            .values()
            .flatten()
            .filter(|r| cameras.contains(&r.v) && cameras.contains(&r.u))
            .copied()
            .collect();
        let depths = self
            .depths
            .values()
            .flatten()
            .filter(|r| cameras.contains(&r.v))
            .copied()
            .collect();
        Self::new(self.n_frames, flows, depths)
    }

    /// Matched pairs for source view `(t, v)`: one partner frame is drawn
    /// with [`choose_partner_frame`] and every prior towards it is returned,
    /// sparse (any camera) and dense (same camera) alike.
    pub fn select_pairs<R: Rng>(&self, t: u32, v: usize, offset: u32, rng: &mut R) -> Vec<FlowPrior> {
        let recs = self.flows_at(t, v);
        if recs.is_empty() {
            return Vec::new();
        }
        let Some(s) = choose_partner_frame(t, self.n_frames, offset, rng) else {
            return Vec::new();
        };
        recs.iter().filter(|r| r.s == s).copied().collect()
    }
}

/// Loads whichever of the three prior files exist in `dir`.
pub fn load_priors(dir: &Path, limits: &RigLimits) -> Result<PriorStore> {
    let mut flows = Vec::new();
    for name in [SPARSE_FILE, DENSE_FILE] {
        let p = dir.join(name);
        if p.exists() {
            flows.extend(read_flow_priors(&p, limits)?);
        }
    }
    let p = dir.join(DEPTH_FILE);
    let depths = if p.exists() {
        read_depth_priors(&p, limits)?
    } else {
        Vec::new()
    };
    Ok(PriorStore::new(limits.n_frames, flows, depths))
}

pub const SPARSE_FILE: &str = "priors_sparse.csv";
pub const DENSE_FILE: &str = "priors_dense.csv";
pub const DEPTH_FILE: &str = "priors_depth.csv";

/// Replaces a fraction `rate` of the records by outliers: the matched pixel
/// is moved `magnitude` pixels in a random direction, kept inside the image.
pub fn inject_outliers<R: Rng>(
    records: &mut [FlowPrior],
    rate: f64,
    magnitude: f64,
    limits: &RigLimits,
    rng: &mut R,
) -> usize {
    let mut changed = 0;
    for r in records.iter_mut() {
        if !rng.gen_bool(rate.clamp(0.0, 1.0)) {
            continue;
        }
        let (w, h) = limits.image_sizes[r.u - 1];
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        r.xp = (r.xp + magnitude * angle.cos()).clamp(-0.5, w as f64 - 0.5);
        r.yp = (r.yp + magnitude * angle.sin()).clamp(-0.5, h as f64 - 0.5);
        *r = r.quantized();
        changed += 1;
    }
    changed
}
