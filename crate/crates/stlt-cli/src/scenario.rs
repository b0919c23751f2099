//! Scenario files: TOML with `schema = 1`.
//!
//! ```toml
//! schema = 1
//! name = "example1_integrator"
//! formula = "F[0,15](G[2,10] mu1 | (mu2 U[5,10] mu3))"
//!
//! [dynamics]
//! model = "single_integrator"   # or "unicycle"
//! input = "box"                 # or "ball"
//! vmax = 1.0
//! wmax = 1.0                    # unicycle turn rate bound
//! shrink = 1.0                  # input scaling used for reachability and barriers
//!
//! [[predicates]]
//! name = "mu1"
//! shape = "disk"                # "rect" takes lo/hi, "half_plane" takes normal/offset
//! center = [-4.0, -4.0]
//! radius = 1.0
//!
//! [reach]
//! engine = "analytic"           # or "grid"
//! slice_dt = 0.05
//! cache_dir = "cache"
//!
//! [run]
//! x0 = [[-6.0, 2.0], [-2.0, 3.5]]
//! dt = 0.05
//! alpha = 1.0
//! branch = "auto"               # or a branch index
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use stlt::controller::{BranchChoice, Integrator, RunConfig};
use stlt::formula::{horizon, to_desired_form};
use stlt::reach::{GridSpec, ReachCache, ReachEngine};
use stlt::{parse_formula, Axis, Dynamics, Formula, PredicateDecl, Region};

pub const SCHEMA: u32 = 1;

/// Malformed or inconsistent user input.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema: u32,
    pub name: String,
    pub formula: String,
    pub dynamics: DynamicsSpec,
    pub predicates: Vec<PredicateSpec>,
    #[serde(default)]
    pub reach: ReachSpec,
    pub run: RunSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    SingleIntegrator,
    Unicycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputShape {
    #[default]
    Box,
    Ball,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    pub model: ModelName,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub input: InputShape,
    #[serde(default = "one")]
    pub vmax: f64,
    #[serde(default = "one")]
    pub wmax: f64,
    #[serde(default = "one")]
    pub shrink: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredicateSpec {
    Disk { name: String, center: Vec<f64>, radius: f64 },
    Rect { name: String, lo: Vec<f64>, hi: Vec<f64> },
    HalfPlane { name: String, normal: Vec<f64>, offset: f64 },
}

impl PredicateSpec {
    pub fn name(&self) -> &str {
        match self {
            PredicateSpec::Disk { name, .. } | PredicateSpec::Rect { name, .. } | PredicateSpec::HalfPlane { name, .. } => name,
        }
    }

    pub fn region(&self) -> Region {
        match self {
            PredicateSpec::Disk { center, radius, .. } => Region::disk(center, *radius),
            PredicateSpec::Rect { lo, hi, .. } => Region::rect(lo, hi),
            PredicateSpec::HalfPlane { normal, offset, .. } => Region::half_plane(normal, *offset),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineName {
    #[default]
    Analytic,
    Grid,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default)]
    pub periodic: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReachSpec {
    #[serde(default)]
    pub engine: EngineName,
    #[serde(default = "default_slice_dt")]
    pub slice_dt: f64,
    /// Overrides the default grid for the model.
    #[serde(default)]
    pub axes: Option<Vec<AxisSpec>>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl Default for ReachSpec {
    fn default() -> Self {
        ReachSpec { engine: EngineName::Analytic, slice_dt: default_slice_dt(), axes: None, cache_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum BranchSpec {
    Index(usize),
    Name(String),
}

impl Default for BranchSpec {
    fn default() -> Self {
        BranchSpec::Name("auto".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorName {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default)]
    pub x0: Vec<Vec<f64>>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Defaults to the formula horizon.
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default)]
    pub branch: BranchSpec,
    #[serde(default)]
    pub soft: bool,
    #[serde(default)]
    pub integrator: IntegratorName,
    /// Extra initial states drawn from the root set node with the run seed.
    #[serde(default)]
    pub random_x0: usize,
    /// Position box `[[x_lo, x_hi], [y_lo, y_hi]]` for random initial states.
    #[serde(default = "default_sample_box")]
    pub sample_box: [[f64; 2]; 2],
    #[serde(default)]
    pub seed: u64,
}

fn default_dim() -> usize {
    2
}

fn one() -> f64 {
    1.0
}

fn default_slice_dt() -> f64 {
    0.05
}

fn default_dt() -> f64 {
    0.05
}

fn default_sample_box() -> [[f64; 2]; 2] {
    [[-25.0, 25.0], [-25.0, 25.0]]
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub branch: Option<BranchChoice>,
    pub soft: bool,
    pub cache_dir: Option<PathBuf>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
}

/// A validated scenario ready for the pipeline.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub formula: Formula,
    pub desired: Formula,
    pub preds: Vec<PredicateDecl>,
    /// Predicates as declared, before projection onto the state.
    pub shapes: Vec<PredicateSpec>,
    pub dynamics: Dynamics,
    /// Input scaling for reachability and barrier construction.
    pub shrink: f64,
    pub engine: ReachEngine,
    pub x0: Vec<Vec<f64>>,
    pub random_x0: usize,
    pub sample_box: [[f64; 2]; 2],
    pub seed: u64,
    pub alpha: f64,
    pub run: RunConfig,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|e| input_error(format!("reading {}: {e}", path.display())))?;
        Scenario::from_toml(&text).with_context(|| format!("scenario {}", path.display()))
    }

    pub fn from_toml(text: &str) -> Result<Scenario> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| input_error(e.to_string()))?;
        Scenario::from_file(file)
    }

    pub fn from_file(file: ScenarioFile) -> Result<Scenario> {
        if file.schema != SCHEMA {
            bail!(input_error(format!("unsupported schema {} (expected {SCHEMA})", file.schema)));
        }
        let d = &file.dynamics;
        if !(d.vmax > 0.0 && d.wmax > 0.0 && d.shrink > 0.0 && d.shrink <= 1.0) {
            bail!(input_error("dynamics bounds must be positive and shrink in (0, 1]"));
        }
        let dynamics = match (d.model, d.input) {
            (ModelName::SingleIntegrator, InputShape::Box) => Dynamics::single_integrator(d.dim, d.vmax),
            (ModelName::SingleIntegrator, InputShape::Ball) => Dynamics::single_integrator_ball(d.dim, d.vmax),
            (ModelName::Unicycle, InputShape::Box) => Dynamics::unicycle(d.vmax, d.wmax),
            (ModelName::Unicycle, InputShape::Ball) => bail!(input_error("unicycle inputs are a box")),
        };
        let n = dynamics.state_dim();

        let formula = parse_formula(&file.formula).map_err(|e| input_error(format!("formula: {e}")))?;
        let desired = to_desired_form(&formula).map_err(|e| input_error(format!("desired form: {e}")))?;
        let mut preds = Vec::with_capacity(file.predicates.len());
        for p in &file.predicates {
            if preds.iter().any(|q: &PredicateDecl| q.name == p.name()) {
                bail!(input_error(format!("predicate {} declared twice", p.name())));
            }
            let region = p.region();
            region.validate().map_err(|e| input_error(format!("predicate {}: {e}", p.name())))?;
            let region = match region.dim() {
                Some(k) if k == n => region,
                Some(2) if n > 2 => region.projected(),
                Some(k) => bail!(input_error(format!("predicate {} has dimension {k}, state has {n}", p.name()))),
                None => region,
            };
            preds.push(PredicateDecl { name: p.name().to_string(), region });
        }
        for name in formula.predicates() {
            if !preds.iter().any(|p| p.name == name) {
                bail!(input_error(format!("predicate {name} is not declared")));
            }
        }

        let r = &file.run;
        for x in &r.x0 {
            if x.len() != n {
                bail!(input_error(format!("x0 {x:?} has {} components, state has {n}", x.len())));
            }
        }
        if r.x0.is_empty() && r.random_x0 == 0 {
            bail!(input_error("no initial states: set run.x0 or run.random_x0"));
        }
        if !(r.dt > 0.0 && r.alpha > 0.0) {
            bail!(input_error("run.dt and run.alpha must be positive"));
        }
        let branch = match &r.branch {
            BranchSpec::Index(i) => BranchChoice::Index(*i),
            BranchSpec::Name(s) => parse_branch(s)?,
        };
        let run = RunConfig {
            dt: r.dt,
            t_end: r.t_end.unwrap_or_else(|| horizon(&formula)),
            branch,
            soft: r.soft,
            integrator: match r.integrator {
                IntegratorName::Rk4 => Integrator::Rk4,
                IntegratorName::Euler => Integrator::Euler,
            },
        };

        let engine = match file.reach.engine {
            EngineName::Analytic => ReachEngine::Analytic,
            EngineName::Grid => {
                let spec = match &file.reach.axes {
                    Some(axes) => {
                        if axes.len() != n {
                            bail!(input_error(format!("reach.axes has {} axes, state has {n}", axes.len())));
                        }
                        let axes = axes
                            .iter()
                            .map(|a| if a.periodic { Axis::periodic(a.min, a.max, a.count) } else { Axis::new(a.min, a.max, a.count) })
                            .collect();
                        GridSpec::new(axes, file.reach.slice_dt)
                    }
                    None if dynamics.is_integrator() && n == 2 => GridSpec::integrator_default(file.reach.slice_dt),
                    None if !dynamics.is_integrator() => GridSpec::unicycle_default(file.reach.slice_dt),
                    None => bail!(input_error(format!("no default grid for a {n}-dimensional integrator; set reach.axes"))),
                };
                let cache = file.reach.cache_dir.as_ref().map(ReachCache::at).unwrap_or_default();
                ReachEngine::Grid { spec, cache }
            }
        };

        Ok(Scenario {
            name: file.name,
            formula,
            desired,
            preds,
            shapes: file.predicates,
            dynamics,
            shrink: d.shrink,
            engine,
            x0: r.x0.clone(),
            random_x0: r.random_x0,
            sample_box: r.sample_box,
            seed: r.seed,
            alpha: r.alpha,
            run,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(b) = o.branch {
            self.run.branch = b;
        }
        if o.soft {
            self.run.soft = true;
        }
        if let Some(dt) = o.dt {
            self.run.dt = dt;
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let (Some(dir), ReachEngine::Grid { cache, .. }) = (&o.cache_dir, &mut self.engine) {
            *cache = ReachCache::at(dir);
        }
    }

    /// Dynamics used for reachability and barrier construction.
    pub fn design_dynamics(&self) -> Dynamics {
        self.dynamics.shrunk(self.shrink)
    }

    /// Shipped initial states followed by `random_x0` draws inside `root`.
    pub fn initial_states(&self, root: &Region) -> Result<Vec<Vec<f64>>> {
        let mut out = self.x0.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.dynamics.state_dim();
        let mut attempts = 0;
        let mut drawn = 0;
        while drawn < self.random_x0 {
            attempts += 1;
            if attempts > 10_000 * self.random_x0.max(1) {
                bail!(input_error("could not draw initial states inside the root set node"));
            }
            let mut x: Vec<f64> = (0..n.min(2)).map(|k| rng.gen_range(self.sample_box[k][0]..=self.sample_box[k][1])).collect();
            while x.len() < n {
                x.push(if self.dynamics.is_integrator() { 0.0 } else { rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI) });
            }
            if root.contains(&x)? {
                out.push(x);
                drawn += 1;
            }
        }
        Ok(out)
    }
}

/// `auto` or a branch index.
pub fn parse_branch(s: &str) -> Result<BranchChoice> {
    match s.trim() {
        "auto" => Ok(BranchChoice::Auto),
        other => other.parse().map(BranchChoice::Index).map_err(|_| input_error(format!("branch must be `auto` or an index, got {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema = 1
name = "one"
formula = "F[0,5] a"
[dynamics]
model = "single_integrator"
[[predicates]]
name = "a"
shape = "disk"
center = [1.0, 0.0]
radius = 1.0
[run]
x0 = [[0.0, 0.0]]
"#;

    #[test]
    fn defaults_fill_in() {
        let s = Scenario::from_toml(MINIMAL).unwrap();
        assert_eq!(s.run.dt, 0.05);
        assert_eq!(s.run.t_end, 5.0);
        assert_eq!(s.run.branch, BranchChoice::Auto);
        assert_eq!(s.alpha, 1.0);
        assert!(matches!(s.engine, ReachEngine::Analytic));
    }

    fn err(text: &str) -> String {
        let e = Scenario::from_toml(text).unwrap_err();
        assert!(e.downcast_ref::<InputError>().is_some(), "{e:#}");
        format!("{e:#}")
    }

    #[test]
    fn undeclared_predicate_is_rejected() {
        assert!(err(&MINIMAL.replace("F[0,5] a", "F[0,5] b")).contains("b is not declared"));
    }

    #[test]
    fn wrong_x0_dimension_is_rejected() {
        assert!(err(&MINIMAL.replace("[[0.0, 0.0]]", "[[0.0, 0.0, 1.0]]")).contains("3 components"));
    }

    #[test]
    fn wrong_schema_is_rejected() {
        assert!(err(&MINIMAL.replace("schema = 1", "schema = 2")).contains("schema 2"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        err(&MINIMAL.replace("[run]", "[run]\nspeed = 3"));
    }

    #[test]
    fn unicycle_predicates_are_projected() {
        let text = MINIMAL.replace("single_integrator", "unicycle").replace("[[0.0, 0.0]]", "[[0.0, 0.0, 0.5]]");
        let s = Scenario::from_toml(&text).unwrap();
        assert!(matches!(s.preds[0].region, Region::Projected(_)));
        assert!(s.preds[0].region.contains(&[1.0, 0.5, 3.0]).unwrap());
    }

    #[test]
    fn branch_accepts_index_or_auto() {
        let s = Scenario::from_toml(&MINIMAL.replace("[run]", "[run]\nbranch = 1")).unwrap();
        assert_eq!(s.run.branch, BranchChoice::Index(1));
        assert!(parse_branch("first").is_err());
    }

    #[test]
    fn random_states_are_seeded_and_inside_the_root() {
        let mut s = Scenario::from_toml(&MINIMAL.replace("[run]", "[run]\nrandom_x0 = 4\nseed = 3")).unwrap();
        let root = Region::disk(&[0.0, 0.0], 6.0);
        let a = s.initial_states(&root).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(a, s.initial_states(&root).unwrap());
        assert!(a.iter().all(|x| root.contains(x).unwrap()));
        s.seed = 4;
        assert_ne!(a, s.initial_states(&root).unwrap());
    }
}
