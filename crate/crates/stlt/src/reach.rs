//! Maximal and minimal reachable sets.
//!
//! Two engines: closed-form disks for single integrators with a ball input,
//! and a grid level-set solver for general control-affine dynamics.
//!
//! The grid solver integrates the HJB equation backward in time with a
//! first-order Lax-Friedrichs scheme. Two value functions are supported:
//!
//! * [`Mode::Max`]: `V(x,t) = max_u max_{s in window} h(x(s))`, whose
//!   superlevel set is the maximal reachable set.
//! * [`Mode::Min`]: `V(x,t) = max_u min_{s in window} h(x(s))`, whose
//!   superlevel set is the complement of the minimal reachable set of the
//!   complement, i.e. the states that can stay inside for the whole window.

use std::fs;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{debug, warn};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use crate::dynamics::{Dynamics, InputSet, Model};
use crate::formula::Interval;
use crate::regions::{dist, read_f64, read_u64, strides, Axis, Region, RegionError, ValueField};

/// Values of sampled regions are clipped to this magnitude so the solver never sees infinities.
pub const VALUE_CLIP: f64 = 1.0e4;

#[derive(Debug, Error)]
pub enum ReachError {
    #[error("analytic engine requires {0}")]
    Unsupported(String),
    #[error("empty intersection cannot be approximated by a disk")]
    EmptyIntersection,
    #[error("time step subdivision exceeded {0} substeps")]
    TooManySubsteps(usize),
    #[error("invalid time span [{0},{1}]")]
    BadSpan(f64, f64),
    #[error("grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemporalOp {
    Eventually,
    Always,
}

// Analytic engine

/// Disk-shaped sets handled in closed form.
#[derive(Debug, Clone, PartialEq)]
pub enum DiskSet {
    Inside { center: Vec<f64>, radius: f64 },
    Outside { center: Vec<f64>, radius: f64 },
    Everything,
}

impl DiskSet {
    pub fn to_region(&self) -> Region {
        match self {
            DiskSet::Inside { center, radius } => Region::disk(center, *radius),
            DiskSet::Outside { center, radius } => Region::disk(center, *radius).complement(),
            DiskSet::Everything => Region::Universe,
        }
    }

    /// Closed-form disk approximation from inside of `region`.
    ///
    /// Rectangles become their largest inscribed disk, intersections of disks
    /// the largest disk inside the lens, and complements of rectangles the
    /// outside of the circumscribed disk.
    pub fn inner_approximation(region: &Region) -> Result<DiskSet, ReachError> {
        match region {
            Region::Disk { center, radius } => Ok(DiskSet::Inside { center: center.clone(), radius: *radius }),
            Region::AxisRect { lo, hi } => {
                let center: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
                let radius = lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)).fold(f64::INFINITY, f64::min);
                Ok(DiskSet::Inside { center, radius })
            }
            Region::Universe => Ok(DiskSet::Everything),
            Region::Projected(inner) => DiskSet::inner_approximation(inner),
            Region::Complement(inner) => match inner.as_ref() {
                Region::Disk { center, radius } => Ok(DiskSet::Outside { center: center.clone(), radius: *radius }),
                Region::AxisRect { lo, hi } => {
                    let center: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
                    Ok(DiskSet::Outside { center, radius: 0.5 * dist(lo, hi) })
                }
                Region::Projected(p) => DiskSet::inner_approximation(&Region::Complement(p.clone())),
                _ => Err(ReachError::Unsupported("a disk, rectangle or their complement".into())),
            },
            Region::Intersection(rs) => {
                let mut acc: Option<DiskSet> = None;
                for r in rs {
                    let d = DiskSet::inner_approximation(r)?;
                    acc = Some(match acc {
                        None => d,
                        Some(prev) => intersect_disks(prev, d)?,
                    });
                }
                acc.ok_or(ReachError::EmptyIntersection)
            }
            _ => Err(ReachError::Unsupported("a disk-like set node".into())),
        }
    }

    /// Set-node region for `F[a,b]` or `G[a,b]` under a speed-`v` integrator that can hover.
    pub fn temporal(&self, op: TemporalOp, window: Interval, v: f64) -> DiskSet {
        let reach = match op {
            TemporalOp::Eventually => v * window.hi,
            TemporalOp::Always => v * window.lo,
        };
        match self {
            DiskSet::Inside { center, radius } => DiskSet::Inside { center: center.clone(), radius: radius + reach },
            DiskSet::Outside { center, radius } => {
                if radius - reach <= 0.0 {
                    DiskSet::Everything
                } else {
                    DiskSet::Outside { center: center.clone(), radius: radius - reach }
                }
            }
            DiskSet::Everything => DiskSet::Everything,
        }
    }
}

fn intersect_disks(a: DiskSet, b: DiskSet) -> Result<DiskSet, ReachError> {
    match (a, b) {
        (DiskSet::Everything, other) | (other, DiskSet::Everything) => Ok(other),
        (DiskSet::Inside { center: c1, radius: r1 }, DiskSet::Inside { center: c2, radius: r2 }) => {
            let d = dist(&c1, &c2);
            if d + r1 <= r2 {
                return Ok(DiskSet::Inside { center: c1, radius: r1 });
            }
            if d + r2 <= r1 {
                return Ok(DiskSet::Inside { center: c2, radius: r2 });
            }
            if d >= r1 + r2 {
                return Err(ReachError::EmptyIntersection);
            }
            let left = (-r1).max(d - r2);
            let right = r1.min(d + r2);
            let s = 0.5 * (left + right);
            let center = c1.iter().zip(&c2).map(|(p, q)| p + s * (q - p) / d).collect();
            Ok(DiskSet::Inside { center, radius: 0.5 * (right - left) })
        }
        (DiskSet::Inside { center, radius }, DiskSet::Outside { center: hc, radius: hr })
        | (DiskSet::Outside { center: hc, radius: hr }, DiskSet::Inside { center, radius }) => {
            if dist(&center, &hc) >= radius + hr {
                Ok(DiskSet::Inside { center, radius })
            } else {
                Err(ReachError::Unsupported("a disk that avoids the excluded disk".into()))
            }
        }
        _ => Err(ReachError::Unsupported("at most one excluded disk in an intersection".into())),
    }
}

fn analytic_speed(dynamics: &Dynamics) -> Result<f64, ReachError> {
    if !dynamics.is_integrator() {
        return Err(ReachError::Unsupported("single-integrator dynamics".into()));
    }
    Ok(dynamics.input.inscribed_radius())
}

fn require_disk(s: &Region) -> Result<(&[f64], f64), ReachError> {
    match s {
        Region::Disk { center, radius } => Ok((center, *radius)),
        _ => Err(ReachError::Unsupported("a disk".into())),
    }
}

/// `R^M(S, [a,b])` for a disk under a speed-`vmax` ball input: the disk grown by `vmax * b`.
pub fn max_reach_analytic(s: &Region, window: Interval, vmax: f64) -> Result<Region, ReachError> {
    let (c, r) = require_disk(s)?;
    Ok(Region::disk(c, r + vmax * window.hi))
}

/// Complement of `R^m(complement S, [a,b])` for a disk: the disk grown by `vmax * a`.
pub fn always_set_analytic(s: &Region, window: Interval, vmax: f64) -> Result<Region, ReachError> {
    let (c, r) = require_disk(s)?;
    let radius = r + vmax * window.lo;
    if radius < 0.0 {
        return Err(ReachError::Unsupported("a non-negative radius".into()));
    }
    Ok(Region::disk(c, radius))
}

// Grid engine

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
    /// Spacing of stored time slices.
    pub slice_dt: f64,
    pub cfl: f64,
    pub max_substeps: usize,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>, slice_dt: f64) -> Self {
        GridSpec { axes, slice_dt, cfl: 0.5, max_substeps: 100_000 }
    }

    /// 81 x 81 x 41 over `[-25,25]^2 x [-pi,pi)`, heading periodic.
    pub fn unicycle_default(slice_dt: f64) -> Self {
        use std::f64::consts::PI;
        GridSpec::new(
            vec![Axis::new(-25.0, 25.0, 81), Axis::new(-25.0, 25.0, 81), Axis::periodic(-PI, PI, 41)],
            slice_dt,
        )
    }

    /// 161 x 161 over `[-25,25]^2`.
    pub fn integrator_default(slice_dt: f64) -> Self {
        GridSpec::new(vec![Axis::new(-25.0, 25.0, 161), Axis::new(-25.0, 25.0, 161)], slice_dt)
    }

    fn fingerprint(&self, h: &mut Sha256) {
        for a in &self.axes {
            for v in [a.min, a.max, a.count as f64, a.periodic as u8 as f64] {
                h.update(v.to_le_bytes());
            }
        }
        for v in [self.slice_dt, self.cfl, self.max_substeps as f64] {
            h.update(v.to_le_bytes());
        }
    }
}

/// Value function slices `V(., t_k)` on one shared grid.
#[derive(Debug, Clone)]
pub struct TimeValueFunction {
    pub mode: Mode,
    pub times: Vec<f64>,
    pub fields: Vec<ValueField>,
}

/// Value, spatial gradient and time derivative at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub value: f64,
    pub grad: Vec<f64>,
    pub d_dt: f64,
}

impl TimeValueFunction {
    pub fn earliest(&self) -> &ValueField {
        &self.fields[0]
    }

    pub fn latest(&self) -> &ValueField {
        self.fields.last().expect("at least one slice")
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Linear interpolation in time between adjacent slices; the time
    /// derivative is the forward difference of the bracketing slices
    /// (backward difference at the last slice).
    pub fn eval(&self, x: &[f64], t: f64) -> Result<Sample, RegionError> {
        let k = self.times.len();
        if k == 1 {
            let f = &self.fields[0];
            return Ok(Sample { value: f.interpolate(x)?, grad: f.gradient(x)?, d_dt: 0.0 });
        }
        let t = t.clamp(self.times[0], self.times[k - 1]);
        let i = match self.times.partition_point(|&s| s <= t) {
            0 => 0,
            p => (p - 1).min(k - 2),
        };
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        let (f0, f1) = (&self.fields[i], &self.fields[i + 1]);
        let (v0, v1) = (f0.interpolate(x)?, f1.interpolate(x)?);
        let (g0, g1) = (f0.gradient(x)?, f1.gradient(x)?);
        Ok(Sample {
            value: (1.0 - w) * v0 + w * v1,
            grad: g0.iter().zip(&g1).map(|(a, b)| (1.0 - w) * a + w * b).collect(),
            d_dt: (v1 - v0) / (t1 - t0),
        })
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(b"TV01")?;
        w.write_all(&(matches!(self.mode, Mode::Min) as u64).to_le_bytes())?;
        w.write_all(&(self.times.len() as u64).to_le_bytes())?;
        for t in &self.times {
            w.write_all(&t.to_le_bytes())?;
        }
        for f in &self.fields {
            f.write_to(w)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, ReachError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"TV01" {
            return Err(ReachError::Grid("bad TV01 magic".into()));
        }
        let mode = if read_u64(r)? == 0 { Mode::Max } else { Mode::Min };
        let count = read_u64(r)? as usize;
        if count == 0 || count > 1 << 20 {
            return Err(ReachError::Grid(format!("implausible slice count {count}")));
        }
        let times = (0..count).map(|_| read_f64(r)).collect::<io::Result<Vec<_>>>()?;
        let mut fields = Vec::with_capacity(count);
        for _ in 0..count {
            fields.push(ValueField::read_from(r)?);
        }
        if fields.iter().any(|f| !f.same_grid(&fields[0])) || times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(ReachError::Grid("inconsistent slices".into()));
        }
        Ok(TimeValueFunction { mode, times, fields })
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()
    }

    pub fn load(path: &Path) -> Result<Self, ReachError> {
        TimeValueFunction::read_from(&mut BufReader::new(fs::File::open(path)?))
    }
}

/// Precomputed per-node dynamics for the Lax-Friedrichs sweep.
struct Stencil {
    axes: Vec<Axis>,
    strides: Vec<usize>,
    inv_dx: Vec<f64>,
    /// `|d H / d p_i|` bounds
    alpha: Vec<f64>,
    drift: Vec<f64>,
    gmat: Vec<f64>,
    input: InputSet,
    n: usize,
    m: usize,
}

const MAX_DIM: usize = 4;

impl Stencil {
    fn new(axes: &[Axis], dynamics: &Dynamics) -> Result<Self, ReachError> {
        let n = axes.len();
        if n != dynamics.state_dim() {
            return Err(ReachError::Grid(format!("grid has {n} axes, dynamics state has {}", dynamics.state_dim())));
        }
        if n > MAX_DIM {
            return Err(ReachError::Grid(format!("at most {MAX_DIM} dimensions supported")));
        }
        let m = dynamics.input_dim();
        let len: usize = axes.iter().map(|a| a.count).product();
        let mut drift = Vec::with_capacity(len * n);
        let mut gmat = Vec::with_capacity(len * n * m);
        let mut alpha = vec![0.0f64; n];
        let mut x = vec![0.0; n];
        for flat in 0..len {
            crate::regions::node_coords(axes, flat, &mut x);
            let f = dynamics.drift(&x);
            let g = dynamics.input_matrix(&x);
            for i in 0..n {
                let row = &g[i * m..(i + 1) * m];
                let bound = f[i].abs()
                    + match &dynamics.input {
                        InputSet::Box { bounds } => row.iter().zip(bounds).map(|(a, b)| a.abs() * b).sum::<f64>(),
                        InputSet::Ball { radius, .. } => radius * row.iter().map(|a| a * a).sum::<f64>().sqrt(),
                    };
                alpha[i] = alpha[i].max(bound);
            }
            drift.extend_from_slice(&f);
            gmat.extend_from_slice(&g);
        }
        Ok(Stencil {
            axes: axes.to_vec(),
            strides: strides(axes),
            inv_dx: axes.iter().map(|a| 1.0 / a.spacing()).collect(),
            alpha,
            drift,
            gmat,
            input: dynamics.input.clone(),
            n,
            m,
        })
    }

    fn stable_dt(&self, cfl: f64) -> f64 {
        let rate: f64 = self.alpha.iter().zip(&self.inv_dx).map(|(a, i)| a * i).sum();
        if rate == 0.0 {
            f64::INFINITY
        } else {
            cfl / rate
        }
    }

    /// `out = v + dt * (H(x, p_mean) + sum_i alpha_i (p+_i - p-_i) / 2)`
    fn step(&self, v: &[f64], out: &mut [f64], dt: f64) {
        let n = self.n;
        let m = self.m;
        let mut idx = [0usize; MAX_DIM];
        let mut p = [0.0f64; MAX_DIM];
        let mut gtp = [0.0f64; MAX_DIM];
        for flat in 0..v.len() {
            let vc = v[flat];
            let mut diss = 0.0;
            for k in 0..n {
                let a = &self.axes[k];
                let s = self.strides[k];
                let i = idx[k];
                let (dm, dp) = if a.periodic {
                    let lo = if i == 0 { flat + (a.count - 1) * s } else { flat - s };
                    let hi = if i + 1 == a.count { flat - (a.count - 1) * s } else { flat + s };
                    ((vc - v[lo]) * self.inv_dx[k], (v[hi] - vc) * self.inv_dx[k])
                } else if i == 0 {
                    let d = (v[flat + s] - vc) * self.inv_dx[k];
                    (d, d)
                } else if i + 1 == a.count {
                    let d = (vc - v[flat - s]) * self.inv_dx[k];
                    (d, d)
                } else {
                    ((vc - v[flat - s]) * self.inv_dx[k], (v[flat + s] - vc) * self.inv_dx[k])
                };
                p[k] = 0.5 * (dm + dp);
                diss += self.alpha[k] * 0.5 * (dp - dm);
            }
            let f = &self.drift[flat * n..flat * n + n];
            let g = &self.gmat[flat * n * m..(flat + 1) * n * m];
            let mut ham = 0.0;
            for i in 0..n {
                ham += f[i] * p[i];
            }
            for j in 0..m {
                let mut s = 0.0;
                for i in 0..n {
                    s += g[i * m + j] * p[i];
                }
                gtp[j] = s;
            }
            ham += self.input.support(&gtp[..m]);
            out[flat] = vc + dt * (ham + diss);
            // advance the multi-index, last axis fastest
            let mut k = n;
            while k > 0 {
                k -= 1;
                idx[k] += 1;
                if idx[k] < self.axes[k].count {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

struct Solver<'a> {
    stencil: Stencil,
    grid: &'a GridSpec,
    terminal: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn new(terminal: &Region, dynamics: &Dynamics, grid: &'a GridSpec) -> Result<Self, ReachError> {
        let stencil = Stencil::new(&grid.axes, dynamics)?;
        let field = terminal.sample(&grid.axes, VALUE_CLIP)?;
        warn_if_touching_boundary(&field);
        Ok(Solver { stencil, grid, terminal: field.values().to_vec() })
    }

    /// Integrates `v` backward by `duration`, applying the window envelope when `mode` is set.
    fn advance(&self, v: &mut Vec<f64>, scratch: &mut Vec<f64>, duration: f64, mode: Option<Mode>) -> Result<(), ReachError> {
        if duration <= 0.0 {
            return Ok(());
        }
        let limit = self.stencil.stable_dt(self.grid.cfl);
        let substeps = if limit.is_finite() { (duration / limit).ceil().max(1.0) } else { 1.0 };
        if substeps > self.grid.max_substeps as f64 {
            return Err(ReachError::TooManySubsteps(self.grid.max_substeps));
        }
        let dt = duration / substeps;
        for _ in 0..substeps as usize {
            self.stencil.step(v, scratch, dt);
            match mode {
                Some(Mode::Max) => scratch.iter_mut().zip(&self.terminal).for_each(|(a, h)| *a = a.max(*h)),
                Some(Mode::Min) => scratch.iter_mut().zip(&self.terminal).for_each(|(a, h)| *a = a.min(*h)),
                None => {}
            }
            std::mem::swap(v, scratch);
        }
        Ok(())
    }

    fn field(&self, values: Vec<f64>) -> ValueField {
        ValueField::new(self.grid.axes.clone(), values).expect("grid-consistent values")
    }
}

fn warn_if_touching_boundary(field: &ValueField) {
    let axes = field.axes();
    let st = strides(axes);
    let mut touching = false;
    for (flat, v) in field.values().iter().enumerate() {
        if *v < 0.0 {
            continue;
        }
        for (k, a) in axes.iter().enumerate() {
            let i = flat / st[k] % a.count;
            if !a.periodic && (i == 0 || i + 1 == a.count) {
                touching = true;
            }
        }
    }
    if touching {
        warn!("terminal region reaches the grid boundary; the grid may be too small");
    }
}

fn slice_times(t_start: f64, t_end: f64, slice_dt: f64) -> Vec<f64> {
    let span = t_end - t_start;
    if span <= 0.0 {
        return vec![t_end];
    }
    let k = ((span / slice_dt) - 1e-9).ceil().max(1.0) as usize;
    let mut times: Vec<f64> = (0..=k).map(|i| t_start + span * i as f64 / k as f64).collect();
    times[k] = t_end;
    times
}

/// Solves backward from `V(., t_end) = h_terminal` to `t_start`, with the
/// envelope of `mode` active over the whole span, storing slices every
/// `grid.slice_dt`.
pub fn hjb_solve(
    terminal: &Region,
    dynamics: &Dynamics,
    t_start: f64,
    t_end: f64,
    mode: Mode,
    grid: &GridSpec,
) -> Result<TimeValueFunction, ReachError> {
    if !(t_start <= t_end) {
        return Err(ReachError::BadSpan(t_start, t_end));
    }
    let solver = Solver::new(terminal, dynamics, grid)?;
    let times = slice_times(t_start, t_end, grid.slice_dt);
    let mut v = solver.terminal.clone();
    let mut scratch = v.clone();
    let mut fields = vec![solver.field(v.clone())];
    for w in times.windows(2).rev() {
        solver.advance(&mut v, &mut scratch, w[1] - w[0], Some(mode))?;
        fields.push(solver.field(v.clone()));
    }
    fields.reverse();
    debug!("hjb solve over [{t_start},{t_end}] stored {} slices", fields.len());
    Ok(TimeValueFunction { mode, times, fields })
}

/// Value at time 0 of the windowed problem: envelope active on `[a, b]`, free propagation on `[0, a]`.
pub fn hjb_window_value(
    terminal: &Region,
    dynamics: &Dynamics,
    window: Interval,
    mode: Mode,
    grid: &GridSpec,
) -> Result<ValueField, ReachError> {
    let solver = Solver::new(terminal, dynamics, grid)?;
    let mut v = solver.terminal.clone();
    let mut scratch = v.clone();
    solver.advance(&mut v, &mut scratch, window.width(), Some(mode))?;
    solver.advance(&mut v, &mut scratch, window.lo, None)?;
    Ok(solver.field(v))
}

// Caching

/// Disk cache for solver results, keyed by a hash of every solver input.
#[derive(Debug, Clone, Default)]
pub struct ReachCache {
    dir: Option<PathBuf>,
}

impl ReachCache {
    pub fn none() -> Self {
        ReachCache { dir: None }
    }

    pub fn at(dir: impl Into<PathBuf>) -> Self {
        ReachCache { dir: Some(dir.into()) }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("tv_{key}.tv01")))
    }

    pub fn get_or_solve(
        &self,
        key: &str,
        solve: impl FnOnce() -> Result<TimeValueFunction, ReachError>,
    ) -> Result<(TimeValueFunction, bool), ReachError> {
        let Some(path) = self.path(key) else {
            return Ok((solve()?, false));
        };
        if path.exists() {
            match TimeValueFunction::load(&path) {
                Ok(tv) => return Ok((tv, true)),
                Err(e) => warn!("discarding unreadable cache file {}: {e}", path.display()),
            }
        }
        let tv = solve()?;
        fs::create_dir_all(path.parent().unwrap())?;
        let tmp = path.with_extension("tmp");
        tv.save(&tmp)?;
        fs::rename(&tmp, &path)?;
        Ok((tv, false))
    }
}

pub fn solve_key(tag: &str, terminal: &Region, dynamics: &Dynamics, span: [f64; 2], mode: Mode, grid: &GridSpec) -> String {
    let mut h = Sha256::new();
    h.update(tag.as_bytes());
    terminal.fingerprint(&mut h);
    h.update(format!("{dynamics}").as_bytes());
    h.update(span[0].to_le_bytes());
    h.update(span[1].to_le_bytes());
    h.update([matches!(mode, Mode::Min) as u8]);
    grid.fingerprint(&mut h);
    h.finalize().iter().take(12).map(|b| format!("{b:02x}")).collect()
}

/// How set nodes and barrier functions are computed.
#[derive(Debug, Clone)]
pub enum ReachEngine {
    Analytic,
    Grid { spec: GridSpec, cache: ReachCache },
}

/// Region of the set node created by `F[a,b]` or `G[a,b]` over `child`.
///
/// `F` yields `R^M(child, [a,b])`; `G` yields the complement of
/// `R^m(complement child, [a,b])`. The grid engine returns the value at the
/// earliest time as a grid region.
pub fn set_node_region(
    op: TemporalOp,
    child: &Region,
    window: Interval,
    dynamics: &Dynamics,
    engine: &ReachEngine,
) -> Result<Region, ReachError> {
    match engine {
        ReachEngine::Analytic => {
            let v = analytic_speed(dynamics)?;
            Ok(DiskSet::inner_approximation(child)?.temporal(op, window, v).to_region())
        }
        ReachEngine::Grid { spec, cache } => {
            let mode = match op {
                TemporalOp::Eventually => Mode::Max,
                TemporalOp::Always => Mode::Min,
            };
            let key = solve_key("node", child, dynamics, [window.lo, window.hi], mode, spec);
            let (tv, hit) = cache.get_or_solve(&key, || {
                let field = hjb_window_value(child, dynamics, window, mode, spec)?;
                Ok(TimeValueFunction { mode, times: vec![0.0], fields: vec![field] })
            })?;
            debug!("set node {op:?}{window} cache {}", if hit { "hit" } else { "miss" });
            Ok(Region::grid(tv.fields.into_iter().next().unwrap()))
        }
    }
}

/// Cached wrapper around [`hjb_solve`].
pub fn hjb_solve_cached(
    terminal: &Region,
    dynamics: &Dynamics,
    t_start: f64,
    t_end: f64,
    mode: Mode,
    grid: &GridSpec,
    cache: &ReachCache,
) -> Result<Arc<TimeValueFunction>, ReachError> {
    let key = solve_key("slices", terminal, dynamics, [t_start, t_end], mode, grid);
    let (tv, _) = cache.get_or_solve(&key, || hjb_solve(terminal, dynamics, t_start, t_end, mode, grid))?;
    Ok(Arc::new(tv))
}
