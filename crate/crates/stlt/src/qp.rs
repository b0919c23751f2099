//! Small dense quadratic programs over a box.
//!
//! Minimises `(u - u_nom)^T Q (u - u_nom)` subject to rows `a^T u >= c` and
//! `|u_i| <= bound_i`. The problems here have two or three variables and a
//! handful of rows, so every active set of at most `m` constraints is tried
//! and the best KKT point is returned. This is exact for strictly convex
//! objectives.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub a: Vec<f64>,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    /// Row-major `m x m`, symmetric positive definite.
    pub q: Vec<f64>,
    pub u_nom: Vec<f64>,
    pub rows: Vec<Row>,
    pub bounds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: Vec<f64>,
    /// One multiplier per row followed by the lower and upper box constraints of each variable.
    pub multipliers: Vec<f64>,
    pub objective: f64,
    /// Shared slack added to every row in soft mode.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QpOutcome {
    Optimal(QpSolution),
    Infeasible,
}

impl QpOutcome {
    pub fn solution(&self) -> Option<&QpSolution> {
        match self {
            QpOutcome::Optimal(s) => Some(s),
            QpOutcome::Infeasible => None,
        }
    }
}

/// Penalty on the shared slack in soft mode.
pub const SLACK_WEIGHT: f64 = 1.0e6;

impl QpProblem {
    pub fn identity(u_nom: Vec<f64>, rows: Vec<Row>, bounds: Vec<f64>) -> Self {
        let m = u_nom.len();
        let mut q = vec![0.0; m * m];
        for i in 0..m {
            q[i * m + i] = 1.0;
        }
        QpProblem { q, u_nom, rows, bounds }
    }

    pub fn dim(&self) -> usize {
        self.u_nom.len()
    }

    pub fn objective(&self, u: &[f64]) -> f64 {
        let m = self.dim();
        let d: Vec<f64> = u.iter().zip(&self.u_nom).map(|(a, b)| a - b).collect();
        (0..m).map(|i| (0..m).map(|j| d[i] * self.q[i * m + j] * d[j]).sum::<f64>()).sum()
    }

    /// All constraints as `a^T u >= c`: rows, then `u_i >= -bound_i`, `-u_i >= -bound_i`.
    fn constraints(&self) -> Vec<Row> {
        let m = self.dim();
        let mut out = self.rows.clone();
        for i in 0..m {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            out.push(Row { a: e.clone(), c: -self.bounds[i] });
            e[i] = -1.0;
            out.push(Row { a: e, c: -self.bounds[i] });
        }
        out
    }

    pub fn is_feasible(&self, u: &[f64], tol: f64) -> bool {
        self.constraints().iter().all(|r| dot(&r.a, u) >= r.c - tol * scale(r))
    }

    /// Stationarity residual `|2Q(u - u_nom) - sum lambda_i a_i|_inf`.
    pub fn kkt_residual(&self, sol: &QpSolution) -> f64 {
        let m = self.dim();
        let cons = self.constraints();
        (0..m)
            .map(|i| {
                let grad: f64 = (0..m).map(|j| 2.0 * self.q[i * m + j] * (sol.u[j] - self.u_nom[j])).sum();
                let pull: f64 = cons.iter().zip(&sol.multipliers).map(|(r, l)| l * r.a[i]).sum();
                (grad - pull).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn scale(r: &Row) -> f64 {
    1.0 + r.c.abs() + r.a.iter().map(|v| v.abs()).sum::<f64>()
}

pub(crate) const FEAS_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;

fn subsets(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), f);
}

/// Exact minimiser by active-set enumeration.
fn solve_exact(q: &DMatrix<f64>, u_nom: &DVector<f64>, cons: &[Row]) -> Option<(DVector<f64>, Vec<f64>)> {
    let m = u_nom.len();
    let h = q * 2.0;
    let hu = &h * u_nom;
    let mut best: Option<(f64, DVector<f64>, Vec<f64>)> = None;
    for k in 0..=m.min(cons.len()) {
        subsets(cons.len(), k, &mut |s: &[usize]| {
            // [H -A^T; A 0] [u; lambda] = [H u_nom; c]
            let n = m + k;
            let mut kkt = DMatrix::zeros(n, n);
            let mut rhs = DVector::zeros(n);
            kkt.view_mut((0, 0), (m, m)).copy_from(&h);
            rhs.rows_mut(0, m).copy_from(&hu);
            for (r, &i) in s.iter().enumerate() {
                for c in 0..m {
                    kkt[(c, m + r)] = -cons[i].a[c];
                    kkt[(m + r, c)] = cons[i].a[c];
                }
                rhs[m + r] = cons[i].c;
            }
            let lu = kkt.clone().full_piv_lu();
            if !lu.is_invertible() {
                return;
            }
            let Some(mut z) = lu.solve(&rhs) else { return };
            for _ in 0..3 {
                let r = &rhs - &kkt * &z;
                let Some(dz) = lu.solve(&r) else { return };
                z += dz;
            }
            let u = z.rows(0, m).into_owned();
            let lam = z.rows(m, k).into_owned();
            if lam.iter().any(|l| *l < -DUAL_TOL * (1.0 + l.abs()) || !l.is_finite()) {
                return;
            }
            let us = u.as_slice();
            if !cons.iter().all(|r| dot(&r.a, us) >= r.c - FEAS_TOL * scale(r)) {
                return;
            }
            let d = &u - u_nom;
            let obj = d.dot(&(q * &d));
            if best.as_ref().is_none_or(|(b, _, _)| obj < *b) {
                let mut mult = vec![0.0; cons.len()];
                for (r, &i) in s.iter().enumerate() {
                    mult[i] = lam[r].max(0.0);
                }
                best = Some((obj, u, mult));
            }
        });
    }
    best.map(|(_, u, l)| (u, l))
}

/// Phase 1: the box makes the feasible set bounded, so it is empty iff it has no vertex.
fn has_vertex(m: usize, cons: &[Row]) -> bool {
    let mut found = false;
    subsets(cons.len(), m, &mut |s: &[usize]| {
        if found {
            return;
        }
        let a = DMatrix::from_fn(m, m, |r, c| cons[s[r]].a[c]);
        let c = DVector::from_fn(m, |r, _| cons[s[r]].c);
        if let Some(u) = a.full_piv_lu().solve(&c) {
            let us = u.as_slice();
            if cons.iter().all(|r| dot(&r.a, us) >= r.c - FEAS_TOL * scale(r)) {
                found = true;
            }
        }
    });
    found
}

pub fn solve_qp(p: &QpProblem) -> QpOutcome {
    let m = p.dim();
    let cons = p.constraints();
    let q = DMatrix::from_row_slice(m, m, &p.q);
    let u_nom = DVector::from_column_slice(&p.u_nom);
    match solve_exact(&q, &u_nom, &cons) {
        Some((u, multipliers)) => {
            let u: Vec<f64> = u.iter().zip(&p.bounds).map(|(v, b)| v.clamp(-b, *b)).collect();
            let objective = p.objective(&u);
            QpOutcome::Optimal(QpSolution { u, multipliers, objective, slack: 0.0 })
        }
        None => {
            if has_vertex(m, &cons) {
                log::warn!("feasible program without an optimal active set; reporting infeasible");
            }
            QpOutcome::Infeasible
        }
    }
}

/// Adds one shared slack `s >= 0` to every row with penalty [`SLACK_WEIGHT`]`* s^2`.
pub fn solve_qp_soft(p: &QpProblem) -> QpOutcome {
    let m = p.dim();
    let n = m + 1;
    let mut q = DMatrix::zeros(n, n);
    for i in 0..m {
        for j in 0..m {
            q[(i, j)] = p.q[i * m + j];
        }
    }
    q[(m, m)] = SLACK_WEIGHT;
    let mut u_nom = DVector::zeros(n);
    for i in 0..m {
        u_nom[i] = p.u_nom[i];
    }
    let mut cons: Vec<Row> = p
        .rows
        .iter()
        .map(|r| {
            let mut a = r.a.clone();
            a.push(1.0);
            Row { a, c: r.c }
        })
        .collect();
    for i in 0..m {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        cons.push(Row { a: e.clone(), c: -p.bounds[i] });
        e[i] = -1.0;
        cons.push(Row { a: e, c: -p.bounds[i] });
    }
    let mut e = vec![0.0; n];
    e[m] = 1.0;
    cons.push(Row { a: e, c: 0.0 });
    match solve_exact(&q, &u_nom, &cons) {
        Some((z, mult)) => {
            let u: Vec<f64> = (0..m).map(|i| z[i].clamp(-p.bounds[i], p.bounds[i])).collect();
            let rows = p.rows.len();
            let mut multipliers = mult[..rows].to_vec();
            multipliers.extend_from_slice(&mult[rows..rows + 2 * m]);
            let slack = z[m].max(0.0);
            QpOutcome::Optimal(QpSolution { objective: p.objective(&u) + SLACK_WEIGHT * slack * slack, u, multipliers, slack })
        }
        None => QpOutcome::Infeasible,
    }
}
