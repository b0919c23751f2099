//! Control-affine dynamics `xdot = f(x) + g(x) u` with box or ball input sets.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum InputSet {
    /// `|u_i| <= bounds[i]`
    Box { bounds: Vec<f64> },
    /// `|u| <= radius`
    Ball { dim: usize, radius: f64 },
}

impl InputSet {
    pub fn dim(&self) -> usize {
        match self {
            InputSet::Box { bounds } => bounds.len(),
            InputSet::Ball { dim, .. } => *dim,
        }
    }

    pub fn scaled(&self, factor: f64) -> InputSet {
        match self {
            InputSet::Box { bounds } => InputSet::Box { bounds: bounds.iter().map(|b| b * factor).collect() },
            InputSet::Ball { dim, radius } => InputSet::Ball { dim: *dim, radius: radius * factor },
        }
    }

    /// `max_{u in U} a . u`
    pub fn support(&self, a: &[f64]) -> f64 {
        match self {
            InputSet::Box { bounds } => a.iter().zip(bounds).map(|(ai, b)| ai.abs() * b).sum(),
            InputSet::Ball { radius, .. } => radius * a.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    /// A maximiser of `a . u` over the input set (zero where `a` vanishes).
    pub fn argmax(&self, a: &[f64]) -> Vec<f64> {
        match self {
            InputSet::Box { bounds } => a
                .iter()
                .zip(bounds)
                .map(|(ai, b)| if *ai > 0.0 { *b } else if *ai < 0.0 { -b } else { 0.0 })
                .collect(),
            InputSet::Ball { radius, .. } => {
                let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n == 0.0 {
                    vec![0.0; a.len()]
                } else {
                    a.iter().map(|v| radius * v / n).collect()
                }
            }
        }
    }

    /// Radius of the largest centred ball inside the set.
    pub fn inscribed_radius(&self) -> f64 {
        match self {
            InputSet::Box { bounds } => bounds.iter().cloned().fold(f64::INFINITY, f64::min),
            InputSet::Ball { radius, .. } => *radius,
        }
    }

    /// Per-component bounds of a box contained in the set.
    pub fn box_bounds(&self) -> Vec<f64> {
        match self {
            InputSet::Box { bounds } => bounds.clone(),
            InputSet::Ball { dim, radius } => vec![radius / (*dim as f64).sqrt(); *dim],
        }
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        match self {
            InputSet::Box { bounds } => u.iter().zip(bounds).all(|(v, b)| v.abs() <= b + tol),
            InputSet::Ball { radius, .. } => u.iter().map(|v| v * v).sum::<f64>().sqrt() <= radius + tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    SingleIntegrator { dim: usize },
    /// State `(x1, x2, theta)`, input `(v, omega)`.
    Unicycle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dynamics {
    pub model: Model,
    pub input: InputSet,
}

impl fmt::Display for Dynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}/{:?}", self.model, self.input)
    }
}

impl Dynamics {
    pub fn single_integrator(dim: usize, vmax: f64) -> Dynamics {
        Dynamics { model: Model::SingleIntegrator { dim }, input: InputSet::Box { bounds: vec![vmax; dim] } }
    }

    pub fn single_integrator_ball(dim: usize, vmax: f64) -> Dynamics {
        Dynamics { model: Model::SingleIntegrator { dim }, input: InputSet::Ball { dim, radius: vmax } }
    }

    pub fn unicycle(vmax: f64, wmax: f64) -> Dynamics {
        Dynamics { model: Model::Unicycle, input: InputSet::Box { bounds: vec![vmax, wmax] } }
    }

    pub fn with_input(&self, input: InputSet) -> Dynamics {
        Dynamics { model: self.model, input }
    }

    /// Same model with every input bound multiplied by `factor`.
    pub fn shrunk(&self, factor: f64) -> Dynamics {
        self.with_input(self.input.scaled(factor))
    }

    pub fn state_dim(&self) -> usize {
        match self.model {
            Model::SingleIntegrator { dim } => dim,
            Model::Unicycle => 3,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self.model {
            Model::SingleIntegrator { dim } => dim,
            Model::Unicycle => 2,
        }
    }

    pub fn is_integrator(&self) -> bool {
        matches!(self.model, Model::SingleIntegrator { .. })
    }

    /// Number of leading state components that are planar position.
    pub fn position_dims(&self) -> usize {
        match self.model {
            Model::SingleIntegrator { dim } => dim,
            Model::Unicycle => 2,
        }
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }

    /// `g(x)` in row-major order, `state_dim x input_dim`.
    pub fn input_matrix(&self, x: &[f64]) -> Vec<f64> {
        match self.model {
            Model::SingleIntegrator { dim } => {
                let mut g = vec![0.0; dim * dim];
                for i in 0..dim {
                    g[i * dim + i] = 1.0;
                }
                g
            }
            Model::Unicycle => {
                let (s, c) = x[2].sin_cos();
                vec![c, 0.0, s, 0.0, 0.0, 1.0]
            }
        }
    }

    /// `g(x)^T p`
    pub fn g_transpose(&self, x: &[f64], p: &[f64]) -> Vec<f64> {
        let n = self.state_dim();
        let m = self.input_dim();
        let g = self.input_matrix(x);
        (0..m).map(|j| (0..n).map(|i| g[i * m + j] * p[i]).sum()).collect()
    }

    pub fn xdot(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let n = self.state_dim();
        let m = self.input_dim();
        let g = self.input_matrix(x);
        let mut out = self.drift(x);
        for i in 0..n {
            for j in 0..m {
                out[i] += g[i * m + j] * u[j];
            }
        }
        out
    }

    /// One zero-order-hold step of classical Runge-Kutta.
    pub fn rk4_step(&self, x: &[f64], u: &[f64], dt: f64) -> Vec<f64> {
        let add = |a: &[f64], b: &[f64], s: f64| a.iter().zip(b).map(|(p, q)| p + s * q).collect::<Vec<_>>();
        let k1 = self.xdot(x, u);
        let k2 = self.xdot(&add(x, &k1, dt / 2.0), u);
        let k3 = self.xdot(&add(x, &k2, dt / 2.0), u);
        let k4 = self.xdot(&add(x, &k3, dt), u);
        (0..x.len()).map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
    }

    pub fn euler_step(&self, x: &[f64], u: &[f64], dt: f64) -> Vec<f64> {
        let d = self.xdot(x, u);
        x.iter().zip(&d).map(|(a, b)| a + dt * b).collect()
    }

    /// `max_u <p, f + g u>`
    pub fn hamiltonian(&self, x: &[f64], p: &[f64]) -> f64 {
        let drift: f64 = self.drift(x).iter().zip(p).map(|(a, b)| a * b).sum();
        drift + self.input.support(&self.g_transpose(x, p))
    }

    /// Wraps angular components into `[-pi, pi)`.
    pub fn normalize(&self, x: &mut [f64]) {
        if let Model::Unicycle = self.model {
            x[2] = wrap_angle(x[2]);
        }
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    (a + PI).rem_euclid(2.0 * PI) - PI
}
