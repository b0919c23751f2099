//! Satisfaction checking of sampled trajectories against STL formulas, complete paths and trees.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::controller::Trajectory;
use crate::formula::{horizon, Formula, Interval, PredicateDecl};
use crate::regions::Region;
use crate::tree::{CompletePath, NodeId, NodeKind, OpKind, Stlt};

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonitorError {
    #[error("trajectory covers [{start},{end}] but [{needed_from},{needed_to}] is required")]
    TooShort { start: f64, end: f64, needed_from: f64, needed_to: f64 },
    #[error("unknown predicate {0}")]
    UnknownPredicate(String),
    #[error("trajectory has no samples")]
    Empty,
    #[error("sample times must be strictly increasing (at index {0})")]
    NonMonotone(usize),
    #[error("bad trajectory csv: {0}")]
    Csv(String),
}

/// Timestamped states, linearly interpolated between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Signal {
    pub fn new(times: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self, MonitorError> {
        if times.is_empty() || times.len() != states.len() {
            return Err(MonitorError::Empty);
        }
        if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(MonitorError::NonMonotone(i + 1));
        }
        Ok(Signal { times, states })
    }

    pub fn from_trajectory(traj: &Trajectory) -> Result<Self, MonitorError> {
        Signal::new(traj.times(), traj.states())
    }

    /// Parses the trajectory CSV layout `t,x1..xn,...`; columns after the states are ignored.
    pub fn from_csv(text: &str) -> Result<Self, MonitorError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or(MonitorError::Empty)?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"t") {
            return Err(MonitorError::Csv("first column must be t".into()));
        }
        let n = cols[1..].iter().take_while(|c| c.starts_with('x')).count();
        if n == 0 {
            return Err(MonitorError::Csv("no state columns".into()));
        }
        let mut times = Vec::new();
        let mut states = Vec::new();
        for (row, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < n + 1 {
                return Err(MonitorError::Csv(format!("row {} has {} fields", row + 1, fields.len())));
            }
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| MonitorError::Csv(format!("row {}: {e}", row + 1)));
            times.push(parse(fields[0])?);
            states.push(fields[1..=n].iter().map(|f| parse(f)).collect::<Result<Vec<_>, _>>()?);
        }
        Signal::new(times, states)
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_step(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    fn covers(&self, from: f64, to: f64) -> bool {
        from >= self.start() - TIME_EPS && to <= self.end() + TIME_EPS
    }
}

/// Scalar values at the sample times of a signal, linear in between.
#[derive(Debug, Clone)]
struct Track<'a> {
    times: &'a [f64],
    values: Vec<f64>,
}

impl Track<'_> {
    fn at(&self, t: f64) -> f64 {
        let ts = self.times;
        let k = ts.partition_point(|&s| s < t - TIME_EPS);
        if k < ts.len() && (ts[k] - t).abs() <= TIME_EPS {
            return self.values[k];
        }
        if k == 0 {
            return self.values[0];
        }
        if k == ts.len() {
            return self.values[k - 1];
        }
        let (t0, t1) = (ts[k - 1], ts[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        if !v0.is_finite() || !v1.is_finite() {
            return if t - t0 < t1 - t { v0 } else { v1 };
        }
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// Evaluation points of `[lo, hi]`: the endpoints and every sample strictly inside.
    fn points(&self, lo: f64, hi: f64) -> Vec<f64> {
        let ts = self.times;
        let mut pts = vec![lo];
        let first = ts.partition_point(|&s| s <= lo + TIME_EPS);
        for &s in &ts[first..] {
            if s >= hi - TIME_EPS {
                break;
            }
            pts.push(s);
        }
        if hi > lo + TIME_EPS {
            pts.push(hi);
        }
        pts
    }
}

/// Verdict of the STL monitor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub satisfied: bool,
    /// Min/max combination of predicate values at the binding times; a robustness surrogate.
    pub margin: f64,
    /// Interpolation tolerance `Lip * dt / 2` of the sampled check.
    pub tolerance: f64,
    pub witnesses: Vec<Witness>,
}

/// Chosen time of an F or U operator along the binding chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub formula: String,
    pub at: f64,
    pub time: f64,
}

/// Evaluates a region on a state, projecting onto the leading coordinates when the region is lower dimensional.
pub fn region_value(region: &Region, x: &[f64]) -> f64 {
    let x = match region.dim() {
        Some(k) if k < x.len() => &x[..k],
        _ => x,
    };
    region.eval(x).unwrap_or(f64::NEG_INFINITY)
}

struct Evaluator<'a> {
    sig: &'a Signal,
    preds: HashMap<&'a str, Track<'a>>,
}

impl<'a> Evaluator<'a> {
    fn new(sig: &'a Signal, phi: &Formula, decls: &'a [PredicateDecl]) -> Result<Self, MonitorError> {
        let mut preds = HashMap::new();
        for name in phi.predicates() {
            let decl = decls.iter().find(|d| d.name == name).ok_or_else(|| MonitorError::UnknownPredicate(name.clone()))?;
            let values = sig.states.iter().map(|x| region_value(&decl.region, x)).collect();
            preds.insert(decl.name.as_str(), Track { times: &sig.times, values });
        }
        Ok(Evaluator { sig, preds })
    }

    fn lipschitz(&self) -> f64 {
        let ts = &self.sig.times;
        let mut lip: f64 = 0.0;
        for tr in self.preds.values() {
            for k in 1..ts.len() {
                let dv = tr.values[k] - tr.values[k - 1];
                if dv.is_finite() {
                    lip = lip.max(dv.abs() / (ts[k] - ts[k - 1]));
                }
            }
        }
        lip
    }

    /// Robustness surrogate of `phi` at time `t`.
    fn rho(&self, phi: &Formula, t: f64) -> f64 {
        match phi {
            Formula::True => f64::INFINITY,
            Formula::Pred(p) => self.preds[p.as_str()].at(t),
            Formula::NegPred(p) => -self.preds[p.as_str()].at(t),
            Formula::And(cs) => cs.iter().map(|c| self.rho(c, t)).fold(f64::INFINITY, f64::min),
            Formula::Or(cs) => cs.iter().map(|c| self.rho(c, t)).fold(f64::NEG_INFINITY, f64::max),
            Formula::Eventually(c, i) => self.window(t, i).into_iter().map(|s| self.rho(c, s)).fold(f64::NEG_INFINITY, f64::max),
            Formula::Always(c, i) => self.window(t, i).into_iter().map(|s| self.rho(c, s)).fold(f64::INFINITY, f64::min),
            Formula::Until(l, r, i) => self.until_best(l, r, i, t).1,
        }
    }

    fn window(&self, t: f64, i: &Interval) -> Vec<f64> {
        self.track_points(t + i.lo, t + i.hi)
    }

    fn track_points(&self, lo: f64, hi: f64) -> Vec<f64> {
        Track { times: &self.sig.times, values: vec![] }.points(lo, hi)
    }

    /// Best witness of `l U[a,b] r` at `t`: `exists t' in [t+a,t+b]` with `r` at `t'` and `l` on all of `[t,t']`.
    fn until_best(&self, l: &Formula, r: &Formula, i: &Interval, t: f64) -> (f64, f64) {
        let pts = self.track_points(t, t + i.hi);
        let mut running = f64::INFINITY;
        let mut best = (t + i.lo, f64::NEG_INFINITY);
        let mut all: Vec<f64> = pts;
        all.push(t + i.lo);
        all.sort_by(f64::total_cmp);
        all.dedup_by(|a, b| (*a - *b).abs() <= TIME_EPS);
        for s in all {
            running = running.min(self.rho(l, s));
            if s >= t + i.lo - TIME_EPS {
                let v = running.min(self.rho(r, s));
                if v > best.1 {
                    best = (s, v);
                }
            }
        }
        best
    }

    fn argbest(&self, c: &Formula, pts: Vec<f64>, maximize: bool) -> (f64, f64) {
        let mut best = (pts[0], self.rho(c, pts[0]));
        for s in pts.into_iter().skip(1) {
            let v = self.rho(c, s);
            if (maximize && v > best.1) || (!maximize && v < best.1) {
                best = (s, v);
            }
        }
        best
    }

    fn witnesses(&self, phi: &Formula, t: f64, out: &mut Vec<Witness>) {
        match phi {
            Formula::True | Formula::Pred(_) | Formula::NegPred(_) => {}
            Formula::And(cs) => cs.iter().for_each(|c| self.witnesses(c, t, out)),
            Formula::Or(cs) => {
                if let Some(c) = cs.iter().max_by(|a, b| self.rho(a, t).total_cmp(&self.rho(b, t))) {
                    self.witnesses(c, t, out);
                }
            }
            Formula::Eventually(c, i) => {
                let (s, _) = self.argbest(c, self.window(t, i), true);
                out.push(Witness { formula: phi.to_string(), at: t, time: s });
                self.witnesses(c, s, out);
            }
            Formula::Always(c, i) => {
                let (s, _) = self.argbest(c, self.window(t, i), false);
                self.witnesses(c, s, out);
            }
            Formula::Until(l, r, i) => {
                let (s, _) = self.until_best(l, r, i, t);
                out.push(Witness { formula: phi.to_string(), at: t, time: s });
                self.witnesses(r, s, out);
            }
        }
    }
}

/// Checks `(x, t) |= phi` with quantifiers over sample times and interval endpoints.
pub fn stl_satisfied(sig: &Signal, phi: &Formula, preds: &[PredicateDecl], t: f64) -> Result<Verdict, MonitorError> {
    let needed_to = t + horizon(phi);
    if !sig.covers(t, needed_to) {
        return Err(MonitorError::TooShort { start: sig.start(), end: sig.end(), needed_from: t, needed_to });
    }
    let ev = Evaluator::new(sig, phi, preds)?;
    let margin = ev.rho(phi, t);
    let mut witnesses = Vec::new();
    ev.witnesses(phi, t, &mut witnesses);
    Ok(Verdict { satisfied: margin >= 0.0, margin, tolerance: ev.lipschitz() * sig.max_step() / 2.0, witnesses })
}

/// Set-node value functions sampled along a signal.
struct NodeTracks<'a> {
    sig: &'a Signal,
    tracks: HashMap<NodeId, Track<'a>>,
}

impl<'a> NodeTracks<'a> {
    fn new(sig: &'a Signal, tree: &Stlt, nodes: impl IntoIterator<Item = NodeId>) -> Self {
        let mut tracks = HashMap::new();
        for id in nodes {
            tracks.entry(id).or_insert_with(|| {
                let region = &tree.set(id).region;
                Track { times: &sig.times, values: sig.states.iter().map(|x| region_value(region, x)).collect() }
            });
        }
        NodeTracks { sig, tracks }
    }

    /// `x(tau)` in the node's set for every `tau` in `[lo, hi]`.
    fn holds(&self, id: NodeId, lo: f64, hi: f64) -> bool {
        if !self.sig.covers(lo, hi) {
            return false;
        }
        let tr = &self.tracks[&id];
        tr.points(lo, hi).into_iter().all(|s| tr.at(s) >= 0.0)
    }
}

fn path_search(tree: &Stlt, p: &CompletePath, nt: &NodeTracks, t: f64) -> bool {
    // remaining[i]: largest total offset the operators after set position i can add
    let sets: Vec<NodeId> = p.nodes.iter().copied().filter(|&n| tree.is_set(n)).collect();
    let ops: Vec<OpKind> = p.nodes.iter().copied().filter(|&n| !tree.is_set(n)).map(|n| tree.op(n)).collect();
    let mut remaining = vec![0.0; sets.len()];
    for i in (0..ops.len()).rev() {
        let add = match ops[i] {
            OpKind::Eventually(iv) | OpKind::Always(iv) => iv.hi,
            OpKind::And | OpKind::Or => 0.0,
        };
        remaining[i] = remaining[i + 1] + add;
    }
    let mut memo: HashMap<(usize, u64), bool> = HashMap::new();
    search(0, t, t, &sets, &ops, &remaining, nt, &mut memo)
}

#[allow(clippy::too_many_arguments)]
fn search(
    i: usize,
    lo: f64,
    hi: f64,
    sets: &[NodeId],
    ops: &[OpKind],
    remaining: &[f64],
    nt: &NodeTracks,
    memo: &mut HashMap<(usize, u64), bool>,
) -> bool {
    if hi + remaining[i] > nt.sig.end() + TIME_EPS {
        return false;
    }
    let key = (i, lo.to_bits());
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let ok = nt.holds(sets[i], lo, hi)
        && (i == ops.len()
            || match ops[i] {
                OpKind::And | OpKind::Or => search(i + 1, lo, hi, sets, ops, remaining, nt, memo),
                OpKind::Always(iv) => search(i + 1, lo + iv.lo, hi + iv.hi, sets, ops, remaining, nt, memo),
                OpKind::Eventually(iv) => {
                    // shifts landing the coded interval start on a sample, plus both ends of [a, b]
                    let mut shifts: Vec<f64> = nt
                        .sig
                        .times
                        .iter()
                        .map(|s| s - lo)
                        .filter(|d| *d > iv.lo + TIME_EPS && *d < iv.hi - TIME_EPS)
                        .collect();
                    shifts.push(iv.lo);
                    shifts.push(iv.hi);
                    shifts.into_iter().any(|d| search(i + 1, lo + d, hi + d, sets, ops, remaining, nt, memo))
                }
            });
    memo.insert(key, ok);
    ok
}

/// Checks `(x, t)` satisfies a complete path: some time interval coding meets every membership condition.
pub fn path_satisfied(sig: &Signal, p: &CompletePath, tree: &Stlt, t: f64) -> bool {
    let nt = NodeTracks::new(sig, tree, p.nodes.iter().copied().filter(|&n| tree.is_set(n)));
    path_search(tree, p, &nt, t)
}

/// Tree satisfaction from time 0: leaves take their path verdicts and the compressed tree is folded bottom-up.
pub fn tree_satisfied(sig: &Signal, tree: &Stlt) -> bool {
    tree_satisfied_at(sig, tree, 0.0)
}

pub fn tree_satisfied_at(sig: &Signal, tree: &Stlt, t: f64) -> bool {
    let paths = tree.complete_paths();
    let nt = NodeTracks::new(sig, tree, tree.set_nodes().iter().copied());
    let leaf_value: HashMap<NodeId, bool> =
        paths.iter().map(|p| (*p.nodes.last().unwrap(), path_search(tree, p, &nt, t))).collect();
    fold(tree, tree.root(), &leaf_value)
}

fn fold(tree: &Stlt, set: NodeId, leaves: &HashMap<NodeId, bool>) -> bool {
    let node = tree.node(set);
    let Some(&op) = node.children.first() else {
        return leaves[&set];
    };
    let kids = &tree.node(op).children;
    match &tree.node(op).kind {
        NodeKind::Op(OpKind::And) => kids.iter().all(|&c| fold(tree, c, leaves)),
        NodeKind::Op(OpKind::Or) => kids.iter().any(|&c| fold(tree, c, leaves)),
        _ => fold(tree, kids[0], leaves),
    }
}
