//! State-space sets as superlevel sets of value functions, `S = {x : h(x) >= 0}`.
//!
//! Analytic shapes return the negated signed distance, so `h` is positive
//! inside and equals the distance to the boundary there.

use std::fmt;
use std::io::{self, Read, Write};
use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegionError {
    #[error("dimension mismatch: region expects {expected}, state has {got}")]
    Dimension { expected: usize, got: usize },
    #[error("query coordinate {value} outside grid axis {axis} range [{min},{max}]")]
    OutOfBounds { axis: usize, value: f64, min: f64, max: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid region: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub periodic: bool,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        Axis { min, max, count, periodic: false }
    }

    pub fn periodic(min: f64, max: f64, count: usize) -> Self {
        Axis { min, max, count, periodic: true }
    }

    /// Node spacing. Periodic axes cover `[min, max)` without repeating the endpoint.
    pub fn spacing(&self) -> f64 {
        if self.periodic {
            (self.max - self.min) / self.count as f64
        } else {
            (self.max - self.min) / (self.count - 1) as f64
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.min + i as f64 * self.spacing()
    }

    /// Lower node index and fractional offset of `x`. Fails off-grid on non-periodic axes.
    fn locate(&self, axis: usize, x: f64) -> Result<(usize, usize, f64), RegionError> {
        let h = self.spacing();
        if self.periodic {
            let period = self.max - self.min;
            let s = (x - self.min).rem_euclid(period) / h;
            let i = (s.floor() as usize).min(self.count - 1);
            let frac = (s - i as f64).clamp(0.0, 1.0);
            return Ok((i, (i + 1) % self.count, frac));
        }
        let tol = 1e-9 * (1.0 + self.max.abs().max(self.min.abs()));
        if !(x >= self.min - tol && x <= self.max + tol) {
            return Err(RegionError::OutOfBounds { axis, value: x, min: self.min, max: self.max });
        }
        let s = ((x - self.min) / h).clamp(0.0, (self.count - 1) as f64);
        let i = (s.floor() as usize).min(self.count - 2);
        Ok((i, i + 1, s - i as f64))
    }
}

/// A scalar field sampled on a regular grid, stored row-major (last axis fastest).
#[derive(Clone, PartialEq)]
pub struct ValueField {
    axes: Vec<Axis>,
    values: Vec<f64>,
}

impl fmt::Debug for ValueField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ValueField").field("axes", &self.axes).field("len", &self.values.len()).finish()
    }
}

impl ValueField {
    pub fn new(axes: Vec<Axis>, values: Vec<f64>) -> Result<Self, RegionError> {
        if axes.is_empty() {
            return Err(RegionError::InvalidGrid("no axes".into()));
        }
        for (k, a) in axes.iter().enumerate() {
            if a.count < 2 {
                return Err(RegionError::InvalidGrid(format!("axis {k} has fewer than 2 nodes")));
            }
            if !(a.max > a.min) {
                return Err(RegionError::InvalidGrid(format!("axis {k} has empty range")));
            }
        }
        let n: usize = axes.iter().map(|a| a.count).product();
        if n != values.len() {
            return Err(RegionError::InvalidGrid(format!("expected {n} values, got {}", values.len())));
        }
        Ok(ValueField { axes, values })
    }

    /// Samples `f` at every grid node.
    pub fn from_fn(axes: Vec<Axis>, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self, RegionError> {
        let n: usize = axes.iter().map(|a| a.count).product();
        let mut values = Vec::with_capacity(n);
        let mut x = vec![0.0; axes.len()];
        for flat in 0..n {
            node_coords(&axes, flat, &mut x);
            values.push(f(&x));
        }
        ValueField::new(axes, values)
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.axes)
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.axes.len()];
        node_coords(&self.axes, flat, &mut x);
        x
    }

    pub fn same_grid(&self, other: &ValueField) -> bool {
        self.axes == other.axes
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), RegionError> {
        if x.len() != self.axes.len() {
            return Err(RegionError::Dimension { expected: self.axes.len(), got: x.len() });
        }
        Ok(())
    }

    /// Corner indices and multilinear weights of the cell containing `x`.
    fn cell(&self, x: &[f64]) -> Result<Vec<(usize, usize, f64)>, RegionError> {
        self.check_dim(x)?;
        self.axes.iter().enumerate().map(|(k, a)| a.locate(k, x[k])).collect()
    }

    fn blend(&self, cell: &[(usize, usize, f64)], mut at: impl FnMut(&[usize]) -> f64) -> f64 {
        let d = cell.len();
        let mut idx = vec![0usize; d];
        let mut total = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            for (k, &(i0, i1, frac)) in cell.iter().enumerate() {
                if corner >> k & 1 == 1 {
                    idx[k] = i1;
                    w *= frac;
                } else {
                    idx[k] = i0;
                    w *= 1.0 - frac;
                }
            }
            if w != 0.0 {
                total += w * at(&idx);
            }
        }
        total
    }

    fn flat(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (k, a) in self.axes.iter().enumerate() {
            flat = flat * a.count + idx[k];
        }
        flat
    }

    pub fn interpolate(&self, x: &[f64]) -> Result<f64, RegionError> {
        let cell = self.cell(x)?;
        Ok(self.blend(&cell, |idx| self.values[self.flat(idx)]))
    }

    /// Central difference along `axis` at a node, one-sided at non-periodic ends.
    pub fn node_derivative(&self, idx: &[usize], axis: usize) -> f64 {
        let a = &self.axes[axis];
        let h = a.spacing();
        let i = idx[axis];
        let mut j = idx.to_vec();
        let (lo, hi, span) = if a.periodic {
            ((i + a.count - 1) % a.count, (i + 1) % a.count, 2.0 * h)
        } else if i == 0 {
            (0, 1, h)
        } else if i == a.count - 1 {
            (i - 1, i, h)
        } else {
            (i - 1, i + 1, 2.0 * h)
        };
        j[axis] = hi;
        let vh = self.values[self.flat(&j)];
        j[axis] = lo;
        let vl = self.values[self.flat(&j)];
        (vh - vl) / span
    }

    /// Gradient from central differences at grid nodes, interpolated multilinearly.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, RegionError> {
        let cell = self.cell(x)?;
        Ok((0..self.axes.len()).map(|axis| self.blend(&cell, |idx| self.node_derivative(idx, axis))).collect())
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(b"VF01")?;
        w.write_all(&(self.axes.len() as u64).to_le_bytes())?;
        for a in &self.axes {
            w.write_all(&a.min.to_le_bytes())?;
            w.write_all(&a.max.to_le_bytes())?;
            w.write_all(&(a.count as u64).to_le_bytes())?;
            w.write_all(&(a.periodic as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, RegionError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"VF01" {
            return Err(RegionError::InvalidGrid("bad magic".into()));
        }
        let dims = read_u64(r)? as usize;
        if dims == 0 || dims > 16 {
            return Err(RegionError::InvalidGrid(format!("implausible dimension count {dims}")));
        }
        let mut axes = Vec::with_capacity(dims);
        for _ in 0..dims {
            let min = read_f64(r)?;
            let max = read_f64(r)?;
            let count = read_u64(r)? as usize;
            let periodic = read_u64(r)? != 0;
            if count > 1 << 24 {
                return Err(RegionError::InvalidGrid(format!("implausible axis size {count}")));
            }
            axes.push(Axis { min, max, count, periodic });
        }
        let n: usize = axes.iter().map(|a| a.count).product();
        let mut buf = vec![0u8; n * 8];
        r.read_exact(&mut buf)?;
        let values = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        ValueField::new(axes, values)
    }

    pub fn save(&self, path: &std::path::Path) -> io::Result<()> {
        let mut w = io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()
    }

    pub fn load(path: &std::path::Path) -> Result<Self, RegionError> {
        let mut r = io::BufReader::new(std::fs::File::open(path)?);
        ValueField::read_from(&mut r)
    }
}

pub(crate) fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64(r: &mut impl Read) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn strides(axes: &[Axis]) -> Vec<usize> {
    let mut s = vec![1; axes.len()];
    for k in (0..axes.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * axes[k + 1].count;
    }
    s
}

pub fn node_coords(axes: &[Axis], mut flat: usize, out: &mut [f64]) {
    for k in (0..axes.len()).rev() {
        let i = flat % axes[k].count;
        flat /= axes[k].count;
        out[k] = axes[k].coord(i);
    }
}

/// A set given by its value function.
///
/// `Projected` wraps a region defined on the leading coordinates of a larger
/// state, e.g. a planar disk for a robot whose state also carries a heading.
#[derive(Debug, Clone)]
pub enum Region {
    Disk { center: Vec<f64>, radius: f64 },
    AxisRect { lo: Vec<f64>, hi: Vec<f64> },
    /// `{x : normal . x <= offset}`
    HalfPlane { normal: Vec<f64>, offset: f64 },
    Complement(Box<Region>),
    Intersection(Vec<Region>),
    Union(Vec<Region>),
    Universe,
    Grid(Arc<ValueField>),
    Projected(Box<Region>),
}

impl Region {
    pub fn disk(center: &[f64], radius: f64) -> Region {
        Region::Disk { center: center.to_vec(), radius }
    }

    pub fn rect(lo: &[f64], hi: &[f64]) -> Region {
        Region::AxisRect { lo: lo.to_vec(), hi: hi.to_vec() }
    }

    pub fn half_plane(normal: &[f64], offset: f64) -> Region {
        Region::HalfPlane { normal: normal.to_vec(), offset }
    }

    pub fn complement(self) -> Region {
        match self {
            Region::Complement(inner) => *inner,
            other => Region::Complement(Box::new(other)),
        }
    }

    pub fn projected(self) -> Region {
        match self {
            Region::Projected(_) => self,
            other => Region::Projected(Box::new(other)),
        }
    }

    pub fn grid(field: ValueField) -> Region {
        Region::Grid(Arc::new(field))
    }

    pub fn validate(&self) -> Result<(), RegionError> {
        match self {
            Region::Disk { center, radius } => {
                if !(*radius >= 0.0) || center.is_empty() {
                    return Err(RegionError::Invalid(format!("disk radius {radius} / center {center:?}")));
                }
            }
            Region::AxisRect { lo, hi } => {
                if lo.len() != hi.len() || lo.is_empty() || lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
                    return Err(RegionError::Invalid("rectangle bounds".into()));
                }
            }
            Region::HalfPlane { normal, .. } => {
                if normal.iter().all(|v| *v == 0.0) {
                    return Err(RegionError::Invalid("zero half-plane normal".into()));
                }
            }
            Region::Complement(r) | Region::Projected(r) => r.validate()?,
            Region::Intersection(rs) | Region::Union(rs) => {
                if rs.is_empty() {
                    return Err(RegionError::Invalid("empty set combination".into()));
                }
                for r in rs {
                    r.validate()?;
                }
            }
            Region::Universe | Region::Grid(_) => {}
        }
        Ok(())
    }

    /// Intrinsic state dimension, `None` when any dimension is accepted.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Region::Disk { center, .. } => Some(center.len()),
            Region::AxisRect { lo, .. } => Some(lo.len()),
            Region::HalfPlane { normal, .. } => Some(normal.len()),
            Region::Grid(f) => Some(f.dim()),
            Region::Complement(r) => r.dim(),
            Region::Intersection(rs) | Region::Union(rs) => rs.iter().find_map(|r| r.dim()),
            Region::Universe | Region::Projected(_) => None,
        }
    }

    fn check(&self, expected: usize, x: &[f64]) -> Result<(), RegionError> {
        if x.len() != expected {
            Err(RegionError::Dimension { expected, got: x.len() })
        } else {
            Ok(())
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, RegionError> {
        match self {
            Region::Disk { center, radius } => {
                self.check(center.len(), x)?;
                Ok(radius - dist(x, center))
            }
            Region::AxisRect { lo, hi } => {
                self.check(lo.len(), x)?;
                Ok(rect_value(lo, hi, x))
            }
            Region::HalfPlane { normal, offset } => {
                self.check(normal.len(), x)?;
                let n = norm(normal);
                Ok((offset - dot(normal, x)) / n)
            }
            Region::Complement(r) => Ok(-r.eval(x)?),
            Region::Intersection(rs) => {
                let mut v = f64::INFINITY;
                for r in rs {
                    v = v.min(r.eval(x)?);
                }
                Ok(v)
            }
            Region::Union(rs) => {
                let mut v = f64::NEG_INFINITY;
                for r in rs {
                    v = v.max(r.eval(x)?);
                }
                Ok(v)
            }
            Region::Universe => Ok(f64::INFINITY),
            Region::Grid(f) => f.interpolate(x),
            Region::Projected(r) => match r.dim() {
                Some(k) if k <= x.len() => r.eval(&x[..k]),
                Some(k) => Err(RegionError::Dimension { expected: k, got: x.len() }),
                None => r.eval(x),
            },
        }
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool, RegionError> {
        Ok(self.eval(x)? >= 0.0)
    }

    /// A (sub)gradient of the value function, same length as `x`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, RegionError> {
        match self {
            Region::Disk { center, .. } => {
                self.check(center.len(), x)?;
                let d = dist(x, center);
                if d == 0.0 {
                    return Ok(vec![0.0; x.len()]);
                }
                Ok(x.iter().zip(center).map(|(xi, ci)| -(xi - ci) / d).collect())
            }
            Region::AxisRect { lo, hi } => {
                self.check(lo.len(), x)?;
                Ok(rect_gradient(lo, hi, x))
            }
            Region::HalfPlane { normal, .. } => {
                self.check(normal.len(), x)?;
                let n = norm(normal);
                Ok(normal.iter().map(|v| -v / n).collect())
            }
            Region::Complement(r) => Ok(r.gradient(x)?.into_iter().map(|g| -g).collect()),
            Region::Intersection(rs) | Region::Union(rs) => {
                let take_min = matches!(self, Region::Intersection(_));
                let mut best: Option<(f64, &Region)> = None;
                for r in rs {
                    let v = r.eval(x)?;
                    let better = match best {
                        None => true,
                        Some((b, _)) => (take_min && v < b) || (!take_min && v > b),
                    };
                    if better {
                        best = Some((v, r));
                    }
                }
                best.expect("non-empty combination").1.gradient(x)
            }
            Region::Universe => Ok(vec![0.0; x.len()]),
            Region::Grid(f) => f.gradient(x),
            Region::Projected(r) => {
                let k = r.dim().unwrap_or(x.len()).min(x.len());
                let mut g = r.gradient(&x[..k])?;
                g.resize(x.len(), 0.0);
                Ok(g)
            }
        }
    }

    /// Samples the value function on a grid. Infinite values are clipped to `±clip`.
    pub fn sample(&self, axes: &[Axis], clip: f64) -> Result<ValueField, RegionError> {
        let mut err = None;
        let field = ValueField::from_fn(axes.to_vec(), |x| match self.eval(x) {
            Ok(v) => v.clamp(-clip, clip),
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        })?;
        match err {
            Some(e) => Err(e),
            None => Ok(field),
        }
    }

    /// Stable content hash, used to key cached reachability results.
    pub fn fingerprint(&self, h: &mut Sha256) {
        fn floats(h: &mut Sha256, v: &[f64]) {
            h.update((v.len() as u64).to_le_bytes());
            for x in v {
                h.update(x.to_le_bytes());
            }
        }
        match self {
            Region::Disk { center, radius } => {
                h.update(b"disk");
                floats(h, center);
                floats(h, &[*radius]);
            }
            Region::AxisRect { lo, hi } => {
                h.update(b"rect");
                floats(h, lo);
                floats(h, hi);
            }
            Region::HalfPlane { normal, offset } => {
                h.update(b"half");
                floats(h, normal);
                floats(h, &[*offset]);
            }
            Region::Complement(r) => {
                h.update(b"not");
                r.fingerprint(h);
            }
            Region::Projected(r) => {
                h.update(b"proj");
                r.fingerprint(h);
            }
            Region::Intersection(rs) | Region::Union(rs) => {
                h.update(if matches!(self, Region::Intersection(_)) { b"and" } else { b"or_" });
                h.update((rs.len() as u64).to_le_bytes());
                for r in rs {
                    r.fingerprint(h);
                }
            }
            Region::Universe => h.update(b"univ"),
            Region::Grid(f) => {
                h.update(b"grid");
                for a in f.axes() {
                    floats(h, &[a.min, a.max, a.count as f64, a.periodic as u8 as f64]);
                }
                floats(h, f.values());
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn rect_value(lo: &[f64], hi: &[f64], x: &[f64]) -> f64 {
    let mut outside = 0.0;
    let mut inside = f64::INFINITY;
    for k in 0..x.len() {
        let below = lo[k] - x[k];
        let above = x[k] - hi[k];
        let o = below.max(above).max(0.0);
        outside += o * o;
        inside = inside.min((x[k] - lo[k]).min(hi[k] - x[k]));
    }
    if outside > 0.0 {
        -outside.sqrt()
    } else {
        inside
    }
}

fn rect_gradient(lo: &[f64], hi: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut g = vec![0.0; n];
    let out: Vec<f64> = (0..n)
        .map(|k| {
            if x[k] < lo[k] {
                x[k] - lo[k]
            } else if x[k] > hi[k] {
                x[k] - hi[k]
            } else {
                0.0
            }
        })
        .collect();
    let d = norm(&out);
    if d > 0.0 {
        for k in 0..n {
            g[k] = -out[k] / d;
        }
        return g;
    }
    let mut best = (f64::INFINITY, 0, 0.0);
    for k in 0..n {
        let to_lo = x[k] - lo[k];
        let to_hi = hi[k] - x[k];
        if to_lo < best.0 {
            best = (to_lo, k, 1.0);
        }
        if to_hi < best.0 {
            best = (to_hi, k, -1.0);
        }
    }
    g[best.1] = best.2;
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn disk_values() {
        let d = Region::disk(&[-4.0, -4.0], 1.0);
        assert_eq!(d.eval(&[-4.0, -4.0]).unwrap(), 1.0);
        assert_eq!(d.eval(&[-4.0, -2.0]).unwrap(), -1.0);
        assert!(matches!(d.eval(&[0.0, 0.0, 0.0]), Err(RegionError::Dimension { expected: 2, got: 3 })));
    }

    #[test]
    fn intersection_takes_minimum() {
        let r = Region::Intersection(vec![Region::disk(&[4.0, 0.0], 4.0), Region::disk(&[1.0, -4.0], 12.0)]);
        // distances: 0 from the first centre, 5 from the second
        assert!((r.eval(&[4.0, 0.0]).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rectangle_signed_distance() {
        let r = Region::rect(&[0.0, 0.0], &[2.0, 4.0]);
        assert!((r.eval(&[1.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((r.eval(&[1.0, 3.5]).unwrap() - 0.5).abs() < 1e-12);
        assert!((r.eval(&[3.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        // corner region: Euclidean distance to the corner (2,4)
        assert!((r.eval(&[5.0, 8.0]).unwrap() + 5.0).abs() < 1e-12);
        assert_eq!(r.gradient(&[5.0, 8.0]).unwrap(), vec![-0.6, -0.8]);
        assert_eq!(r.gradient(&[1.0, 3.5]).unwrap(), vec![0.0, -1.0]);
    }

    #[test]
    fn half_plane_is_normalised() {
        let r = Region::half_plane(&[3.0, 4.0], 5.0);
        assert!((r.eval(&[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((r.eval(&[3.0, 4.0]).unwrap() + 4.0).abs() < 1e-12);
    }

    #[test]
    fn projection_ignores_heading() {
        let r = Region::disk(&[1.0, -4.0], 2.0).projected();
        assert_eq!(r.eval(&[1.0, -4.0, 2.5]).unwrap(), 2.0);
        assert_eq!(r.gradient(&[1.0, -2.0, 0.3]).unwrap(), vec![0.0, -1.0, 0.0]);
        assert!(r.eval(&[1.0]).is_err());
    }

    #[test]
    fn universe_and_complement() {
        assert_eq!(Region::Universe.eval(&[1.0]).unwrap(), f64::INFINITY);
        let d = Region::disk(&[0.0, 0.0], 1.0);
        let c = d.clone().complement();
        assert_eq!(c.eval(&[3.0, 0.0]).unwrap(), 2.0);
        assert!(matches!(c.complement(), Region::Disk { .. }));
    }

    fn unit_axes(n: usize) -> Vec<Axis> {
        vec![Axis::new(-2.0, 2.0, n), Axis::new(-2.0, 2.0, n)]
    }

    #[test]
    fn linear_field_is_exact() {
        let f = ValueField::from_fn(vec![Axis::new(-1.0, 3.0, 7), Axis::new(0.0, 1.0, 5)], |x| x[0]).unwrap();
        for &q in &[[0.123, 0.77], [2.9, 0.01], [-1.0, 1.0]] {
            assert!((f.interpolate(&q).unwrap() - q[0]).abs() < 1e-12);
            let g = f.gradient(&q).unwrap();
            assert!((g[0] - 1.0).abs() < 1e-12 && g[1].abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_disk_on_fine_grid() {
        let disk = Region::disk(&[0.0, 0.0], 1.0);
        let f = disk.sample(&unit_axes(101), 1e6).unwrap();
        assert!((f.interpolate(&[0.5, 0.0]).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn out_of_bounds_and_periodic_wrap() {
        let f = ValueField::from_fn(vec![Axis::new(0.0, 1.0, 3), Axis::periodic(-1.0, 1.0, 4)], |x| x[1]).unwrap();
        assert!(matches!(f.interpolate(&[1.5, 0.0]), Err(RegionError::OutOfBounds { axis: 0, .. })));
        // periodic axis: nodes at -1, -0.5, 0, 0.5; query 2.5 wraps to 0.5
        assert!((f.interpolate(&[0.5, 2.5]).unwrap() - 0.5).abs() < 1e-12);
        // between the last node (0.5) and the wrapped first node (-1)
        assert!((f.interpolate(&[0.5, 0.75]).unwrap() - (-0.25)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(ValueField::new(vec![Axis::new(0.0, 1.0, 1)], vec![0.0]).is_err());
        assert!(ValueField::new(vec![Axis::new(0.0, 1.0, 2)], vec![0.0]).is_err());
    }

    #[test]
    fn cache_format_round_trip_and_layout() {
        let f = ValueField::from_fn(vec![Axis::new(-1.0, 1.0, 3), Axis::periodic(0.0, 6.0, 4)], |x| x[0] * 10.0 + x[1])
            .unwrap();
        let mut buf = Vec::new();
        f.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"VF01");
        assert_eq!(u64::from_le_bytes(buf[4..12].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(buf[12..20].try_into().unwrap()), -1.0);
        assert_eq!(u64::from_le_bytes(buf[36..44].try_into().unwrap()), 0);
        assert_eq!(u64::from_le_bytes(buf[68..76].try_into().unwrap()), 1);
        assert_eq!(buf.len(), 4 + 8 + 2 * 32 + 12 * 8);
        // row-major: second value is axis-1 node 1 => -10 + 1.5
        assert_eq!(f64::from_le_bytes(buf[84..92].try_into().unwrap()), -8.5);
        let back = ValueField::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, f);
        buf[0] = b'X';
        assert!(ValueField::read_from(&mut buf.as_slice()).is_err());
    }

    fn arb_disk() -> impl Strategy<Value = Region> {
        (-5.0..5.0f64, -5.0..5.0f64, 0.0..4.0f64).prop_map(|(a, b, r)| Region::disk(&[a, b], r))
    }

    fn arb_point() -> impl Strategy<Value = [f64; 2]> {
        (-8.0..8.0f64, -8.0..8.0f64).prop_map(|(a, b)| [a, b])
    }

    proptest! {
        #[test]
        fn de_morgan(a in arb_disk(), b in arb_disk(), x in arb_point()) {
            let lhs = Region::Union(vec![a.clone(), b.clone()]).complement();
            let rhs = Region::Intersection(vec![a.complement(), b.complement()]);
            prop_assert_eq!(lhs.eval(&x).unwrap(), rhs.eval(&x).unwrap());
        }

        #[test]
        fn complement_negates(a in arb_disk(), x in arb_point()) {
            prop_assert_eq!(Region::Complement(Box::new(a.clone())).eval(&x).unwrap(), -a.eval(&x).unwrap());
        }

        #[test]
        fn interpolation_hits_nodes_exactly(i in 0usize..9, j in 0usize..6, seed in 0u64..1000) {
            let axes = vec![Axis::new(-1.0, 2.0, 9), Axis::periodic(0.0, 3.0, 6)];
            let f = ValueField::from_fn(axes.clone(), |x| (x[0] * 7.3 + x[1] * 1.1 + seed as f64).sin()).unwrap();
            let x = [axes[0].coord(i), axes[1].coord(j)];
            let flat = i * 6 + j;
            prop_assert_eq!(f.interpolate(&x).unwrap(), f.values()[flat]);
        }

        #[test]
        fn gradient_matches_differences_of_interpolant(
            i in 1usize..20, j in 1usize..20, a in -2.0..2.0f64, b in -2.0..2.0f64, c in -1.0..1.0f64,
        ) {
            // smooth field; at interior nodes a spacing-wide central difference of the
            // interpolant equals the stored node derivative
            let axes = unit_axes(21);
            let f = ValueField::from_fn(axes.clone(), |x| (a * x[0]).sin() + b * x[1] * x[1] + c * x[0] * x[1]).unwrap();
            let (hx, hy) = (axes[0].spacing(), axes[1].spacing());
            let x = [axes[0].coord(i), axes[1].coord(j)];
            let g = f.gradient(&x).unwrap();
            let fd0 = (f.interpolate(&[x[0] + hx, x[1]]).unwrap() - f.interpolate(&[x[0] - hx, x[1]]).unwrap()) / (2.0 * hx);
            let fd1 = (f.interpolate(&[x[0], x[1] + hy]).unwrap() - f.interpolate(&[x[0], x[1] - hy]).unwrap()) / (2.0 * hy);
            prop_assert!((g[0] - fd0).abs() < 1e-4 && (g[1] - fd1).abs() < 1e-4);
        }

        #[test]
        fn gradient_of_affine_field_matches_small_step_differences(
            x0 in -1.9..1.9f64, y0 in -1.9..1.9f64, a in -3.0..3.0f64, b in -3.0..3.0f64,
        ) {
            let f = ValueField::from_fn(unit_axes(17), |x| a * x[0] + b * x[1] + 0.5).unwrap();
            let g = f.gradient(&[x0, y0]).unwrap();
            let e = 1e-5;
            let fd0 = (f.interpolate(&[x0 + e, y0]).unwrap() - f.interpolate(&[x0 - e, y0]).unwrap()) / (2.0 * e);
            let fd1 = (f.interpolate(&[x0, y0 + e]).unwrap() - f.interpolate(&[x0, y0 - e]).unwrap()) / (2.0 * e);
            prop_assert!((g[0] - fd0).abs() < 1e-4 && (g[1] - fd1).abs() < 1e-4);
        }
    }
}
