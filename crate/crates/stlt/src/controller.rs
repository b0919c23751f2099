//! Online barrier-function program and the closed-loop simulation.

use std::fmt::Write as _;

use log::{info, warn};
use serde::Serialize;
use thiserror::Error;

use crate::cbf::{apply_shifts, Cbf, CbfError};
use crate::dynamics::Dynamics;
use crate::qp::{scale, solve_qp, solve_qp_soft, QpOutcome, QpProblem, Row, FEAS_TOL};
use crate::regions::{dot, RegionError};
use crate::tree::Stlt;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("barrier for fragment f{fragment} at t={t}: {source}")]
    Barrier {
        fragment: usize,
        t: f64,
        #[source]
        source: CbfError,
    },
    #[error("trigger check at t={t}: {source}")]
    Trigger {
        t: f64,
        #[source]
        source: RegionError,
    },
    #[error("invalid run configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchChoice {
    Auto,
    Index(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Rk4,
    Euler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dt: f64,
    pub t_end: f64,
    pub branch: BranchChoice,
    pub soft: bool,
    pub integrator: Integrator,
}

impl RunConfig {
    pub fn new(t_end: f64) -> Self {
        RunConfig { dt: 0.05, t_end, branch: BranchChoice::Auto, soft: false, integrator: Integrator::Rk4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum QpStatus {
    Optimal,
    /// Solved with a non-zero slack in soft mode.
    Relaxed,
    Infeasible,
}

impl QpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Relaxed => "relaxed",
            QpStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub active: Vec<usize>,
    pub status: QpStatus,
    /// `(fragment, b(x, t))` for every active barrier.
    pub values: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub samples: Vec<StepRecord>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn states(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.x.clone()).collect()
    }

    pub fn to_csv(&self) -> String {
        let Some(first) = self.samples.first() else { return String::from("t\n") };
        let mut s = String::from("t");
        for i in 0..first.x.len() {
            let _ = write!(s, ",x{}", i + 1);
        }
        for i in 0..first.u.len() {
            let _ = write!(s, ",u{}", i + 1);
        }
        s.push_str(",qp_status,active_fragments\n");
        for r in &self.samples {
            let _ = write!(s, "{}", r.t);
            for v in r.x.iter().chain(&r.u) {
                let _ = write!(s, ",{v}");
            }
            let active: Vec<String> = r.active.iter().map(|f| format!("f{}", f + 1)).collect();
            let _ = writeln!(s, ",{},{}", r.status.as_str(), active.join(";"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriggerEvent {
    pub t: f64,
    pub node_id: String,
    pub fixed_to: [f64; 2],
    pub triggered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Completed,
    Infeasible { t: f64, active: Vec<usize>, rows: Vec<Row> },
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trajectory: Trajectory,
    pub events: Vec<TriggerEvent>,
    pub outcome: RunOutcome,
    pub branch: usize,
    /// False when soft mode relaxed any constraint.
    pub certified: bool,
}

impl RunResult {
    pub fn feasible(&self) -> bool {
        matches!(self.outcome, RunOutcome::Completed)
    }

    pub fn events_jsonl(&self) -> String {
        self.events.iter().map(|e| serde_json::to_string(e).expect("serialisable") + "\n").collect()
    }

    /// Smallest logged barrier value per fragment.
    pub fn min_barrier_values(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::new();
        for s in &self.trajectory.samples {
            for &(f, v) in &s.values {
                match out.iter_mut().find(|(g, _)| *g == f) {
                    Some(e) => e.1 = e.1.min(v),
                    None => out.push((f, v)),
                }
            }
        }
        out.sort_by_key(|e| e.0);
        out
    }
}

/// `a = g^T grad b`, `c = -(grad b . f + db/dt + alpha b)`
pub fn cbf_row(b: &Cbf, dynamics: &Dynamics, x: &[f64], t: f64) -> Result<(Row, f64), CbfError> {
    let v = b.eval(x, t)?;
    let a = dynamics.g_transpose(x, &v.grad);
    let c = -(dot(&v.grad, &dynamics.drift(x)) + v.d_dt + b.alpha * v.value);
    Ok((Row { a, c }, v.value))
}

/// Analytic disk in force at `t` for a single integrator, as `(outside, radius rate)`.
fn hold_terms(b: &Cbf, dynamics: &Dynamics, t: f64) -> Option<(bool, f64)> {
    if !dynamics.is_integrator() {
        return None;
    }
    let (disk, tau) = b.disk_at(t)?;
    Some((disk.outside, if tau < disk.t_reach { disk.speed } else { 0.0 }))
}

/// Second-order change of an analytic barrier over one zero-order-hold step of a single
/// integrator whose input has squared norm `u2`, counted as a loss.
///
/// Adding it to the row's right-hand side makes `b(t + dt) >= (1 - alpha dt) b(t)` hold exactly;
/// outside a disk the loss is bounded by its value at `u2 = 0`.
pub fn sampling_loss(b: &Cbf, dynamics: &Dynamics, t: f64, dt: f64, u2: f64) -> f64 {
    match hold_terms(b, dynamics, t) {
        None => 0.0,
        Some((true, rate)) => dt * rate * rate,
        Some((false, rate)) => dt * (u2 - rate * rate),
    }
}

/// Solves the step QP under the exact one-step barrier conditions.
///
/// The losses are first bounded by their worst case over the input box. If that is infeasible in
/// hard mode, inside-disk conditions are handled by tangent cuts of `a.u - dt |u|^2`, which only
/// outer-approximate them, so an infeasible cut problem is infeasible for the exact conditions too.
fn solve_step(base: &[Row], active: &[&Cbf], dynamics: &Dynamics, t: f64, cfg: &RunConfig, u_nom: Vec<f64>) -> (QpProblem, QpOutcome) {
    let h = cfg.dt;
    let bounds = dynamics.input.box_bounds();
    let worst: f64 = bounds.iter().map(|u| u * u).sum();
    let shifted = |u2: f64| -> Vec<Row> {
        base.iter().zip(active).map(|(r, b)| Row { a: r.a.clone(), c: r.c + sampling_loss(b, dynamics, t, h, u2) }).collect()
    };
    let problem = QpProblem::identity(u_nom.clone(), shifted(worst), bounds.clone());
    if cfg.soft {
        let outcome = solve_qp_soft(&problem);
        return (problem, outcome);
    }
    let outcome = solve_qp(&problem);
    let terms: Vec<Option<(bool, f64)>> = active.iter().map(|b| hold_terms(b, dynamics, t)).collect();
    let curved: Vec<usize> = (0..base.len()).filter(|&i| matches!(terms[i], Some((false, _)))).collect();
    if !matches!(outcome, QpOutcome::Infeasible) || curved.is_empty() {
        return (problem, outcome);
    }
    let mut problem = QpProblem::identity(u_nom, shifted(0.0), bounds);
    for _ in 0..64 {
        let QpOutcome::Optimal(s) = solve_qp(&problem) else {
            return (problem, QpOutcome::Infeasible);
        };
        let u2 = dot(&s.u, &s.u);
        let mut cut = false;
        for &i in &curved {
            let Some((_, rate)) = terms[i] else { continue };
            let r = &base[i];
            let exact = Row { a: r.a.clone(), c: r.c - h * rate * rate };
            if dot(&r.a, &s.u) - h * u2 < exact.c - 2.0 * FEAS_TOL * scale(&exact) {
                let a = r.a.iter().zip(&s.u).map(|(ai, ui)| ai - 2.0 * h * ui).collect();
                problem.rows.push(Row { a, c: r.c - h * (u2 + rate * rate) });
                cut = true;
            }
        }
        if !cut {
            return (problem, QpOutcome::Optimal(s));
        }
    }
    (problem, QpOutcome::Infeasible)
}

/// Input pushing hardest up the gradient of the most urgent active barrier.
///
/// Ties on the latest active time go to the barrier with the earlier latest start time.
pub fn nominal_control(active: &[&Cbf], dynamics: &Dynamics, x: &[f64], t: f64) -> Result<Vec<f64>, CbfError> {
    let Some(urgent) = active
        .iter()
        .filter(|b| !b.is_trivial())
        .min_by(|a, b| a.t_bar().total_cmp(&b.t_bar()).then(a.latest_start().total_cmp(&b.latest_start())))
    else {
        return Ok(vec![0.0; dynamics.input_dim()]);
    };
    let v = urgent.eval(x, t)?;
    let dir = dynamics.g_transpose(x, &v.grad);
    Ok(dynamics.input.argmax(&dir))
}

/// Index of the first branch whose gate contains `x0`.
pub fn choose_branch(tree: &Stlt, x0: &[f64]) -> Result<Option<usize>, RegionError> {
    for (i, b) in tree.branches().iter().enumerate() {
        if tree.set(b.gate).region.eval(x0)? >= 0.0 {
            return Ok(Some(i));
        }
    }
    Ok(None)
}

pub fn run_closed_loop(
    tree: &mut Stlt,
    cbfs: &mut [Cbf],
    dynamics: &Dynamics,
    x0: &[f64],
    cfg: &RunConfig,
) -> Result<RunResult, ControlError> {
    if !(cfg.dt > 0.0) || !(cfg.t_end >= 0.0) {
        return Err(ControlError::Config(format!("dt={} t_end={}", cfg.dt, cfg.t_end)));
    }
    if x0.len() != dynamics.state_dim() {
        return Err(ControlError::Config(format!("x0 has {} components, state has {}", x0.len(), dynamics.state_dim())));
    }
    let branches = tree.branches();
    let branch = match cfg.branch {
        BranchChoice::Index(i) if i < branches.len() => i,
        BranchChoice::Index(i) => return Err(ControlError::Config(format!("branch {i} of {}", branches.len()))),
        BranchChoice::Auto => match choose_branch(tree, x0).map_err(|source| ControlError::Trigger { t: 0.0, source })? {
            Some(i) => i,
            None => {
                warn!("no branch gate contains x0; using branch 0");
                0
            }
        },
    };
    let root = tree.set(tree.root()).region.eval(x0).map_err(|source| ControlError::Trigger { t: 0.0, source })?;
    if root < 0.0 {
        warn!("x0 lies outside the root set node (h = {root:.4}); no guarantee applies");
    }
    let fragments = tree.branch_fragments(&branches[branch]);
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    let mut x = x0.to_vec();
    dynamics.normalize(&mut x);
    let mut out = RunResult { trajectory: Trajectory::default(), events: vec![], outcome: RunOutcome::Completed, branch, certified: true };

    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        let changes = tree.online_update(t, &x).map_err(|source| ControlError::Trigger { t, source })?;
        if !changes.is_empty() {
            apply_shifts(tree, cbfs, &changes, t);
            for c in &changes {
                if c.triggered {
                    info!("t={t:.3}: {} fixed at {}", tree.label(c.node), c.new.0);
                }
                out.events.push(TriggerEvent { t, node_id: tree.label(c.node), fixed_to: [c.new.0, c.new.1], triggered: c.triggered });
            }
        }

        let active: Vec<usize> = fragments.iter().copied().filter(|&f| cbfs[f].is_active(t) && !cbfs[f].is_trivial()).collect();
        let mut rows = Vec::with_capacity(active.len());
        let mut values = Vec::with_capacity(active.len());
        for &f in &active {
            let (row, value) = cbf_row(&cbfs[f], dynamics, &x, t).map_err(|source| ControlError::Barrier { fragment: f + 1, t, source })?;
            rows.push(row);
            values.push((f, value));
        }
        let refs: Vec<&Cbf> = active.iter().map(|&f| &cbfs[f]).collect();
        let u_nom = nominal_control(&refs, dynamics, &x, t).map_err(|source| ControlError::Barrier { fragment: 0, t, source })?;
        let (problem, outcome) = solve_step(&rows, &refs, dynamics, t, cfg, u_nom);
        let (u, status) = match outcome {
            QpOutcome::Optimal(s) if s.slack > 1e-9 => {
                out.certified = false;
                (s.u, QpStatus::Relaxed)
            }
            QpOutcome::Optimal(s) => (s.u, QpStatus::Optimal),
            QpOutcome::Infeasible => (vec![0.0; dynamics.input_dim()], QpStatus::Infeasible),
        };
        out.trajectory.samples.push(StepRecord { t, x: x.clone(), u: u.clone(), active: active.clone(), status, values });
        if status == QpStatus::Infeasible {
            warn!("QP infeasible at t={t:.3} with {} active barriers", active.len());
            out.outcome = RunOutcome::Infeasible { t, active, rows: problem.rows };
            break;
        }
        if k == steps {
            break;
        }
        x = match cfg.integrator {
            Integrator::Rk4 => dynamics.rk4_step(&x, &u, cfg.dt),
            Integrator::Euler => dynamics.euler_step(&x, &u, cfg.dt),
        };
        dynamics.normalize(&mut x);
    }
    Ok(out)
}
