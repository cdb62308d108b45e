//! Transfer-strategy model.
//!
//! Three ways to move a strided object between ranks are compared:
//!
//! ```text
//! device  = gpu-pack  + gpu-gpu + gpu-unpack
//! oneshot = host-pack + cpu-cpu + host-unpack
//! staged  = gpu-pack  + d2h + cpu-cpu + h2d + gpu-unpack
//! ```
//!
//! Transfer terms are curves over the object size; pack terms are surfaces
//! over (object size, contiguous block size). Both are interpolated
//! piecewise-linearly in log-log space and clamped at the sampled edges.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use dashmap::DashMap;

use crate::error::{Error, Result};

/// Sampled (size bytes, seconds) points, sizes strictly increasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Curve {
    points: Vec<(f64, f64)>,
}

/// Log-axis interpolation; values stay in log space when both ends are
/// positive and fall back to linear values otherwise (zeroed terms).
fn lerp_value(y0: f64, y1: f64, t: f64) -> f64 {
    if t <= 0.0 {
        y0
    } else if t >= 1.0 {
        y1
    } else if y0 > 0.0 && y1 > 0.0 {
        (y0.ln() + t * (y1.ln() - y0.ln())).exp()
    } else {
        y0 + t * (y1 - y0)
    }
}

/// Bracketing indices and log-space weight of `x` on a sorted axis of
/// `len` points read through `at`.
fn locate_by(len: usize, at: impl Fn(usize) -> f64, x: f64) -> (usize, usize, f64) {
    let last = len - 1;
    if x <= at(0) {
        return (0, 0, 0.0);
    }
    if x >= at(last) {
        return (last, last, 0.0);
    }
    // First index with a sample above x; 1 <= hi <= last.
    let (mut lo, mut hi) = (0, last);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if at(mid) <= x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (a, b) = (at(lo), at(hi));
    if a == x {
        return (lo, lo, 0.0);
    }
    (lo, hi, (x.ln() - a.ln()) / (b.ln() - a.ln()))
}

fn locate(axis: &[f64], x: f64) -> (usize, usize, f64) {
    locate_by(axis.len(), |i| axis[i], x)
}

impl Curve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        validate_axis(points.iter().map(|p| p.0), "curve")?;
        if points.iter().any(|p| p.1.is_nan() || p.1 < 0.0 || !p.1.is_finite()) {
            return Err(Error::invalid("curve times must be finite and non-negative"));
        }
        Ok(Curve { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn interp(&self, size: f64) -> Option<f64> {
        if self.points.is_empty() {
            return None;
        }
        let (lo, hi, t) = locate_by(self.points.len(), |i| self.points[i].0, size);
        Some(lerp_value(self.points[lo].1, self.points[hi].1, t))
    }

    fn scaled(&self, k: f64) -> Curve {
        Curve {
            points: self.points.iter().map(|&(s, t)| (s, t * k)).collect(),
        }
    }
}

fn validate_axis(xs: impl Iterator<Item = f64>, what: &str) -> Result<()> {
    let mut prev: Option<f64> = None;
    for x in xs {
        if x.is_nan() || x <= 0.0 || !x.is_finite() {
            return Err(Error::invalid(format!("{what} sizes must be positive, got {x}")));
        }
        if prev.is_some_and(|p| x <= p) {
            return Err(Error::invalid(format!("{what} sizes must be strictly increasing")));
        }
        prev = Some(x);
    }
    Ok(())
}

/// Rectangular grid of times over (object bytes, block bytes).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Surface {
    objects: Vec<f64>,
    blocks: Vec<f64>,
    /// Row-major: `values[i * blocks.len() + j]` for `objects[i]`, `blocks[j]`.
    values: Vec<f64>,
}

impl Surface {
    pub fn new(objects: Vec<f64>, blocks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        validate_axis(objects.iter().copied(), "surface object")?;
        validate_axis(blocks.iter().copied(), "surface block")?;
        if values.len() != objects.len() * blocks.len() {
            return Err(Error::invalid("surface grid is not rectangular"));
        }
        if values.iter().any(|v| v.is_nan() || *v < 0.0 || !v.is_finite()) {
            return Err(Error::invalid("surface times must be finite and non-negative"));
        }
        Ok(Surface { objects, blocks, values })
    }

    /// Builds the grid from unordered points; every (object, block) pair of
    /// the axes must appear exactly once.
    pub fn from_points(points: &[(f64, f64, f64)]) -> Result<Self> {
        let mut objects: Vec<f64> = points.iter().map(|p| p.0).collect();
        let mut blocks: Vec<f64> = points.iter().map(|p| p.1).collect();
        objects.sort_by(f64::total_cmp);
        objects.dedup();
        blocks.sort_by(f64::total_cmp);
        blocks.dedup();
        let mut values = vec![f64::NAN; objects.len() * blocks.len()];
        for &(o, b, t) in points {
            let i = objects.partition_point(|&x| x < o);
            let j = blocks.partition_point(|&x| x < b);
            let slot = &mut values[i * blocks.len() + j];
            if !slot.is_nan() {
                return Err(Error::invalid(format!("duplicate surface point ({o}, {b})")));
            }
            *slot = t;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("surface grid is incomplete"));
        }
        Surface::new(objects, blocks, values)
    }

    pub fn objects(&self) -> &[f64] {
        &self.objects
    }

    pub fn blocks(&self) -> &[f64] {
        &self.blocks
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.blocks.len() + j]
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Log-log bilinear interpolation.
    pub fn interp(&self, object: f64, block: f64) -> Option<f64> {
        if self.values.is_empty() {
            return None;
        }
        let (i0, i1, u) = locate(&self.objects, object);
        let (j0, j1, v) = locate(&self.blocks, block);
        let lo = lerp_value(self.value(i0, j0), self.value(i0, j1), v);
        let hi = lerp_value(self.value(i1, j0), self.value(i1, j1), v);
        Some(lerp_value(lo, hi, u))
    }

    fn scaled(&self, k: f64) -> Surface {
        Surface {
            values: self.values.iter().map(|v| v * k).collect(),
            ..self.clone()
        }
    }
}

pub const CURVE_NAMES: [&str; 4] = ["cpu-cpu", "gpu-gpu", "d2h", "h2d"];
pub const SURFACE_NAMES: [&str; 4] = ["gpu-pack", "gpu-unpack", "host-pack", "host-unpack"];

const DEFAULT_PROFILE: &str = include_str!("../profiles/default.profile");

/// Sampled machine characteristics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MachineProfile {
    pub cpu_cpu: Curve,
    pub gpu_gpu: Curve,
    pub d2h: Curve,
    pub h2d: Curve,
    pub gpu_pack: Surface,
    pub gpu_unpack: Surface,
    pub host_pack: Surface,
    pub host_unpack: Surface,
}

/// Sample axes of the synthetic profile.
pub fn synthetic_object_sizes() -> Vec<f64> {
    (6..=22).map(|p| (1u64 << p) as f64).collect()
}

pub fn synthetic_block_sizes() -> Vec<f64> {
    (0..=12).map(|p| (1u64 << p) as f64).collect()
}

fn latency_bandwidth(floor: f64, bytes_per_s: f64) -> impl Fn(f64) -> f64 {
    move |s| floor + s / bytes_per_s
}

/// Pack time with throughput growing linearly with block size up to `knee`.
fn pack_model(launch: f64, peak: f64, knee: f64, write_penalty: f64) -> impl Fn(f64, f64) -> f64 {
    move |object, block| {
        let b = block.min(object).min(knee);
        launch + write_penalty * object / (peak * b / knee)
    }
}

impl MachineProfile {
    /// The profile shipped with the crate.
    pub fn shipped() -> MachineProfile {
        DEFAULT_PROFILE.parse().expect("shipped profile parses")
    }

    /// Synthetic profile: 1.3 us / 6 us network floors for host and device
    /// buffers, bandwidth-dominated tails, and pack surfaces that saturate
    /// at 32 B (host) and 128 B (device) contiguous blocks. Unpacking costs
    /// 1.5x packing.
    pub fn synthetic() -> MachineProfile {
        let sizes = synthetic_object_sizes();
        let blocks = synthetic_block_sizes();
        let curve = |f: &dyn Fn(f64) -> f64| Curve::new(sizes.iter().map(|&s| (s, f(s))).collect()).unwrap();
        let surface = |f: &dyn Fn(f64, f64) -> f64| {
            let values = sizes.iter().flat_map(|&o| blocks.iter().map(move |&b| (o, b))).map(|(o, b)| f(o, b));
            Surface::new(sizes.clone(), blocks.clone(), values.collect()).unwrap()
        };
        MachineProfile {
            cpu_cpu: curve(&latency_bandwidth(1.3e-6, 12e9)),
            gpu_gpu: curve(&latency_bandwidth(6.0e-6, 10e9)),
            d2h: curve(&latency_bandwidth(5.0e-6, 20e9)),
            h2d: curve(&latency_bandwidth(5.0e-6, 20e9)),
            gpu_pack: surface(&pack_model(5.0e-6, 200e9, 128.0, 1.0)),
            gpu_unpack: surface(&pack_model(5.0e-6, 200e9, 128.0, 1.5)),
            host_pack: surface(&pack_model(4.0e-6, 20e9, 32.0, 1.0)),
            host_unpack: surface(&pack_model(4.0e-6, 20e9, 32.0, 1.5)),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MachineProfile> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read profile {}: {e}", path.display())))?;
        text.parse()
    }

    pub fn curve(&self, name: &str) -> Option<&Curve> {
        match name {
            "cpu-cpu" => Some(&self.cpu_cpu),
            "gpu-gpu" => Some(&self.gpu_gpu),
            "d2h" => Some(&self.d2h),
            "h2d" => Some(&self.h2d),
            _ => None,
        }
    }

    fn curve_mut(&mut self, name: &str) -> Option<&mut Curve> {
        match name {
            "cpu-cpu" => Some(&mut self.cpu_cpu),
            "gpu-gpu" => Some(&mut self.gpu_gpu),
            "d2h" => Some(&mut self.d2h),
            "h2d" => Some(&mut self.h2d),
            _ => None,
        }
    }

    pub fn surface(&self, name: &str) -> Option<&Surface> {
        match name {
            "gpu-pack" => Some(&self.gpu_pack),
            "gpu-unpack" => Some(&self.gpu_unpack),
            "host-pack" => Some(&self.host_pack),
            "host-unpack" => Some(&self.host_unpack),
            _ => None,
        }
    }

    fn surface_mut(&mut self, name: &str) -> Option<&mut Surface> {
        match name {
            "gpu-pack" => Some(&mut self.gpu_pack),
            "gpu-unpack" => Some(&mut self.gpu_unpack),
            "host-pack" => Some(&mut self.host_pack),
            "host-unpack" => Some(&mut self.host_unpack),
            _ => None,
        }
    }

    /// Every time multiplied by `k`.
    pub fn scaled(&self, k: f64) -> MachineProfile {
        MachineProfile {
            cpu_cpu: self.cpu_cpu.scaled(k),
            gpu_gpu: self.gpu_gpu.scaled(k),
            d2h: self.d2h.scaled(k),
            h2d: self.h2d.scaled(k),
            gpu_pack: self.gpu_pack.scaled(k),
            gpu_unpack: self.gpu_unpack.scaled(k),
            host_pack: self.host_pack.scaled(k),
            host_unpack: self.host_unpack.scaled(k),
        }
    }

    /// Same profile with every pack and unpack surface set to zero.
    pub fn without_pack_costs(&self) -> MachineProfile {
        MachineProfile {
            gpu_pack: self.gpu_pack.scaled(0.0),
            gpu_unpack: self.gpu_unpack.scaled(0.0),
            host_pack: self.host_pack.scaled(0.0),
            host_unpack: self.host_unpack.scaled(0.0),
            ..self.clone()
        }
    }

    /// Serializes to the line-oriented profile format, `header` lines first
    /// as comments.
    pub fn to_text(&self, header: &[&str]) -> String {
        let mut out = String::new();
        for line in header {
            let _ = writeln!(out, "# {line}");
        }
        for name in CURVE_NAMES {
            let c = self.curve(name).unwrap();
            if c.is_empty() {
                continue;
            }
            let _ = writeln!(out, "\ncurve {name}");
            for (s, t) in c.points() {
                let _ = writeln!(out, "{s} {t:e}");
            }
        }
        for name in SURFACE_NAMES {
            let sf = self.surface(name).unwrap();
            if sf.is_empty() {
                continue;
            }
            let _ = writeln!(out, "\nsurface {name}");
            for (i, o) in sf.objects().iter().enumerate() {
                for (j, b) in sf.blocks().iter().enumerate() {
                    let _ = writeln!(out, "{o} {b} {:e}", sf.value(i, j));
                }
            }
        }
        out
    }
}

enum Section {
    None,
    Curve(&'static str, Vec<(f64, f64)>),
    Surface(&'static str, Vec<(f64, f64, f64)>),
}

fn parse_num(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| Error::ProfileFormat {
        line,
        msg: format!("not a number: {tok:?}"),
    })
}

impl FromStr for MachineProfile {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut profile = MachineProfile::default();
        let mut seen: Vec<&'static str> = Vec::new();
        let mut section = Section::None;
        let mut section_line = 0;

        let finish = |section: Section, line: usize, profile: &mut MachineProfile| -> Result<()> {
            let wrap = |e: Error| Error::ProfileFormat { line, msg: e.to_string() };
            match section {
                Section::None => Ok(()),
                Section::Curve(name, pts) => {
                    *profile.curve_mut(name).unwrap() = Curve::new(pts).map_err(wrap)?;
                    Ok(())
                }
                Section::Surface(name, pts) => {
                    *profile.surface_mut(name).unwrap() = Surface::from_points(&pts).map_err(wrap)?;
                    Ok(())
                }
            }
        };

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks[0] {
                "curve" | "surface" => {
                    if toks.len() != 2 {
                        return Err(Error::ProfileFormat {
                            line: lineno,
                            msg: format!("expected `{} <name>`", toks[0]),
                        });
                    }
                    let names: &[&'static str] = if toks[0] == "curve" { &CURVE_NAMES } else { &SURFACE_NAMES };
                    let Some(&name) = names.iter().find(|n| **n == toks[1]) else {
                        return Err(Error::ProfileFormat {
                            line: lineno,
                            msg: format!("unknown {} {:?}", toks[0], toks[1]),
                        });
                    };
                    if seen.contains(&name) {
                        return Err(Error::ProfileFormat {
                            line: lineno,
                            msg: format!("section {name} defined twice"),
                        });
                    }
                    seen.push(name);
                    let prev = std::mem::replace(
                        &mut section,
                        if toks[0] == "curve" {
                            Section::Curve(name, Vec::new())
                        } else {
                            Section::Surface(name, Vec::new())
                        },
                    );
                    finish(prev, section_line, &mut profile)?;
                    section_line = lineno;
                }
                _ => match &mut section {
                    Section::None => {
                        return Err(Error::ProfileFormat {
                            line: lineno,
                            msg: "data row outside a section".into(),
                        })
                    }
                    Section::Curve(_, pts) => {
                        if toks.len() != 2 {
                            return Err(Error::ProfileFormat {
                                line: lineno,
                                msg: "curve rows are `size_bytes time_seconds`".into(),
                            });
                        }
                        pts.push((parse_num(toks[0], lineno)?, parse_num(toks[1], lineno)?));
                    }
                    Section::Surface(_, pts) => {
                        if toks.len() != 3 {
                            return Err(Error::ProfileFormat {
                                line: lineno,
                                msg: "surface rows are `object_bytes block_bytes time_seconds`".into(),
                            });
                        }
                        pts.push((
                            parse_num(toks[0], lineno)?,
                            parse_num(toks[1], lineno)?,
                            parse_num(toks[2], lineno)?,
                        ));
                    }
                },
            }
        }
        finish(section, section_line, &mut profile)?;
        Ok(profile)
    }
}

/// A model lookup: total object bytes and contiguous block bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelQuery {
    pub object_size: u64,
    pub block_size: u64,
}

impl ModelQuery {
    pub fn new(object_size: u64, block_size: u64) -> Result<Self> {
        if object_size == 0 || block_size == 0 || block_size > object_size {
            return Err(Error::invalid(format!(
                "query needs 0 < block ({block_size}) <= object ({object_size})"
            )));
        }
        Ok(ModelQuery {
            object_size,
            block_size,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodChoice {
    OneShot,
    Device,
    Staged,
}

impl MethodChoice {
    pub fn name(self) -> &'static str {
        match self {
            MethodChoice::OneShot => "oneshot",
            MethodChoice::Device => "device",
            MethodChoice::Staged => "staged",
        }
    }
}

impl fmt::Display for MethodChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Modeled seconds for each method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodTimes {
    pub device: f64,
    pub oneshot: f64,
    pub staged: f64,
}

impl MethodTimes {
    /// Argmin; ties prefer device, then one-shot, then staged.
    pub fn best(&self) -> MethodChoice {
        let mut best = (MethodChoice::Device, self.device);
        for (m, t) in [(MethodChoice::OneShot, self.oneshot), (MethodChoice::Staged, self.staged)] {
            if t < best.1 {
                best = (m, t);
            }
        }
        best.0
    }

    pub fn of(&self, m: MethodChoice) -> f64 {
        match m {
            MethodChoice::Device => self.device,
            MethodChoice::OneShot => self.oneshot,
            MethodChoice::Staged => self.staged,
        }
    }
}

/// A profile plus a memo of past selections.
#[derive(Debug, Default)]
pub struct PerfModel {
    profile: MachineProfile,
    cache: DashMap<ModelQuery, MethodChoice>,
}

impl PerfModel {
    pub fn new(profile: MachineProfile) -> Self {
        PerfModel {
            profile,
            cache: DashMap::new(),
        }
    }

    pub fn profile(&self) -> &MachineProfile {
        &self.profile
    }

    fn curve(&self, name: &str, q: &ModelQuery) -> Result<f64> {
        self.profile
            .curve(name)
            .and_then(|c| c.interp(q.object_size as f64))
            .ok_or_else(|| Error::EmptyProfile(format!("curve {name} has no samples")))
    }

    fn surface(&self, name: &str, q: &ModelQuery) -> Result<f64> {
        self.profile
            .surface(name)
            .and_then(|s| s.interp(q.object_size as f64, q.block_size as f64))
            .ok_or_else(|| Error::EmptyProfile(format!("surface {name} has no samples")))
    }

    /// Interpolated value of one named curve or surface.
    pub fn component(&self, name: &str, q: &ModelQuery) -> Result<f64> {
        if CURVE_NAMES.contains(&name) {
            self.curve(name, q)
        } else {
            self.surface(name, q)
        }
    }

    pub fn t_device(&self, q: &ModelQuery) -> Result<f64> {
        Ok(self.surface("gpu-pack", q)? + self.curve("gpu-gpu", q)? + self.surface("gpu-unpack", q)?)
    }

    pub fn t_oneshot(&self, q: &ModelQuery) -> Result<f64> {
        Ok(self.surface("host-pack", q)? + self.curve("cpu-cpu", q)? + self.surface("host-unpack", q)?)
    }

    pub fn t_staged(&self, q: &ModelQuery) -> Result<f64> {
        Ok(self.surface("gpu-pack", q)?
            + self.curve("d2h", q)?
            + self.curve("cpu-cpu", q)?
            + self.curve("h2d", q)?
            + self.surface("gpu-unpack", q)?)
    }

    pub fn times(&self, q: &ModelQuery) -> Result<MethodTimes> {
        Ok(MethodTimes {
            device: self.t_device(q)?,
            oneshot: self.t_oneshot(q)?,
            staged: self.t_staged(q)?,
        })
    }

    pub fn choose_method(&self, q: &ModelQuery) -> Result<MethodChoice> {
        Ok(self.times(q)?.best())
    }

    /// [`Self::choose_method`] memoized per query.
    pub fn cached_choose(&self, q: &ModelQuery) -> Result<MethodChoice> {
        if let Some(hit) = self.cache.get(q) {
            return Ok(*hit);
        }
        let choice = self.choose_method(q)?;
        self.cache.insert(*q, choice);
        Ok(choice)
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }
}
