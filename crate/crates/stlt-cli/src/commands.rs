//! The `tree`, `reach`, `synth` and `monitor` commands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use log::{info, warn};
use serde::Serialize;
use stlt::cbf::{build_cbfs, Cbf};
use stlt::controller::{run_closed_loop, RunOutcome, RunResult};
use stlt::monitor::{stl_satisfied, Signal, Verdict};
use stlt::reach::ReachEngine;
use stlt::tree::{build_tree, Stlt};

use crate::scenario::{input_error, Scenario};
use crate::svg::{self, Track};

/// Overall result of a command, mapped to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Unsat,
    Infeasible,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Unsat => 2,
            Outcome::Infeasible => 3,
        }
    }
}

pub fn build(sc: &Scenario) -> Result<Stlt> {
    let t0 = Instant::now();
    let tree = build_tree(&sc.desired, &sc.preds, &sc.design_dynamics(), &sc.engine).with_context(|| format!("tree: building {}", sc.desired))?;
    info!("tree: {} set nodes, {} operators in {:.2?}", tree.set_nodes().len(), tree.op_count(), t0.elapsed());
    Ok(tree)
}

pub fn barriers(sc: &Scenario, tree: &Stlt) -> Result<Vec<Cbf>> {
    let t0 = Instant::now();
    let cbfs = build_cbfs(tree, &sc.design_dynamics(), &sc.engine, sc.alpha).context("cbf: building barrier functions")?;
    info!("cbf: {} barriers in {:.2?}", cbfs.len(), t0.elapsed());
    Ok(cbfs)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[derive(Debug, Clone, Serialize)]
pub struct TreeReport {
    pub set_nodes: usize,
    pub operators: usize,
    pub paths: usize,
    pub fragments: usize,
    pub dot: PathBuf,
    pub codes: PathBuf,
}

/// Writes `tree.dot` and `time_codes.csv` into `out`.
pub fn cmd_tree(sc: &Scenario, out: &Path) -> Result<TreeReport> {
    let tree = build(sc)?;
    create_dir(out)?;
    let dot = out.join("tree.dot");
    let codes = out.join("time_codes.csv");
    write(&dot, &tree.to_dot())?;
    write(&codes, &tree.codes_csv())?;
    Ok(TreeReport {
        set_nodes: tree.set_nodes().len(),
        operators: tree.op_count(),
        paths: tree.complete_paths().len(),
        fragments: tree.temporal_fragments().len(),
        dot,
        codes,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ReachReport {
    pub dir: Option<PathBuf>,
    pub written: usize,
    pub reused: usize,
}

fn cache_files(dir: &Path) -> Vec<PathBuf> {
    let Ok(entries) = fs::read_dir(dir) else { return Vec::new() };
    let mut files: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "tv01")).collect();
    files.sort();
    files
}

/// Solves and caches every grid value function the scenario needs.
pub fn cmd_reach(sc: &Scenario) -> Result<ReachReport> {
    let dir = match &sc.engine {
        ReachEngine::Analytic => {
            info!("reach: analytic engine, nothing to cache");
            return Ok(ReachReport { dir: None, written: 0, reused: 0 });
        }
        ReachEngine::Grid { cache, .. } => cache.dir().map(Path::to_path_buf).ok_or_else(|| input_error("reach: grid engine needs a cache directory (reach.cache_dir or --cache-dir)"))?,
    };
    let before = cache_files(&dir);
    let tree = build(sc)?;
    barriers(sc, &tree)?;
    let after = cache_files(&dir);
    let written = after.iter().filter(|p| !before.contains(p)).count();
    Ok(ReachReport { reused: after.len() - written, written, dir: Some(dir) })
}

/// One closed-loop run with its monitor verdict.
#[derive(Debug, Clone)]
pub struct Run {
    pub x0: Vec<f64>,
    pub result: RunResult,
    pub verdict: Option<Verdict>,
    pub seconds: f64,
}

impl Run {
    pub fn outcome(&self) -> Outcome {
        match (&self.result.outcome, &self.verdict) {
            (RunOutcome::Infeasible { .. }, _) => Outcome::Infeasible,
            (RunOutcome::Completed, Some(v)) if v.satisfied => Outcome::Success,
            _ => Outcome::Unsat,
        }
    }

    pub fn diagnostic(&self) -> Option<String> {
        match &self.result.outcome {
            RunOutcome::Completed => None,
            RunOutcome::Infeasible { t, active, rows } => {
                let frags: Vec<String> = active.iter().map(|f| format!("f{}", f + 1)).collect();
                Some(format!("QP infeasible at t={t} with {} constraint rows from fragments {}", rows.len(), frags.join(",")))
            }
        }
    }
}

/// Worst outcome over all runs.
pub fn overall(runs: &[Run]) -> Outcome {
    let outcomes: Vec<Outcome> = runs.iter().map(Run::outcome).collect();
    if outcomes.contains(&Outcome::Infeasible) {
        Outcome::Infeasible
    } else if outcomes.contains(&Outcome::Unsat) {
        Outcome::Unsat
    } else {
        Outcome::Success
    }
}

/// Runs the closed loop from every initial state and monitors the results.
pub fn synthesize(sc: &Scenario) -> Result<Vec<Run>> {
    let template = build(sc)?;
    let cbfs = barriers(sc, &template)?;
    let root = template.set(template.root()).region.clone();
    let starts = sc.initial_states(&root)?;
    let mut runs = Vec::with_capacity(starts.len());
    for x0 in starts {
        let t0 = Instant::now();
        let mut tree = template.clone();
        let mut run_cbfs = cbfs.clone();
        let result = run_closed_loop(&mut tree, &mut run_cbfs, &sc.dynamics, &x0, &sc.run).with_context(|| format!("control: run from {x0:?}"))?;
        let verdict = if result.feasible() {
            let sig = Signal::from_trajectory(&result.trajectory).context("monitor: trajectory")?;
            Some(stl_satisfied(&sig, &sc.formula, &sc.preds, 0.0).context("monitor: evaluating the formula")?)
        } else {
            None
        };
        let run = Run { x0, result, verdict, seconds: t0.elapsed().as_secs_f64() };
        match (&run.verdict, run.diagnostic()) {
            (_, Some(d)) => warn!("run from {:?}: {d}", run.x0),
            (Some(v), None) => info!("run from {:?}: branch {} satisfied={} margin={:.4} in {:.2}s", run.x0, run.result.branch, v.satisfied, v.margin, run.seconds),
            (None, None) => {}
        }
        runs.push(run);
    }
    Ok(runs)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub index: usize,
    pub x0: Vec<f64>,
    pub branch: usize,
    pub outcome: Outcome,
    pub certified: bool,
    pub diagnostic: Option<String>,
    pub min_barrier: Vec<(String, f64)>,
    pub verdict: Option<Verdict>,
    pub trajectory: String,
    pub events: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthReport {
    pub scenario: String,
    pub formula: String,
    pub outcome: Outcome,
    pub runs: Vec<RunSummary>,
}

/// Writes per-run trajectory CSV and event logs, `trajectories.svg` and `verdicts.json`.
pub fn cmd_synth(sc: &Scenario, out: &Path) -> Result<SynthReport> {
    let runs = synthesize(sc)?;
    create_dir(out)?;
    let mut summaries = Vec::with_capacity(runs.len());
    let mut tracks = Vec::with_capacity(runs.len());
    for (i, run) in runs.iter().enumerate() {
        let trajectory = format!("run{i}.csv");
        let events = format!("run{i}_events.jsonl");
        write(&out.join(&trajectory), &run.result.trajectory.to_csv())?;
        write(&out.join(&events), &run.result.events_jsonl())?;
        tracks.push(Track {
            label: format!("run{i}"),
            times: run.result.trajectory.times(),
            points: run.result.trajectory.states().iter().map(|x| [x[0], x[1]]).collect(),
        });
        summaries.push(RunSummary {
            index: i,
            x0: run.x0.clone(),
            branch: run.result.branch,
            outcome: run.outcome(),
            certified: run.result.certified,
            diagnostic: run.diagnostic(),
            min_barrier: run.result.min_barrier_values().into_iter().map(|(f, v)| (format!("f{}", f + 1), v)).collect(),
            verdict: run.verdict.clone(),
            trajectory,
            events,
        });
    }
    write(&out.join("trajectories.svg"), &svg::render(&sc.name, &sc.shapes, &tracks, 5.0))?;
    let report = SynthReport { scenario: sc.name.clone(), formula: sc.formula.to_string(), outcome: overall(&runs), runs: summaries };
    write(&out.join("verdicts.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(report)
}

/// Checks a trajectory CSV against the scenario formula.
pub fn cmd_monitor(sc: &Scenario, trajectory: &Path) -> Result<Verdict> {
    let text = fs::read_to_string(trajectory).map_err(|e| input_error(format!("reading {}: {e}", trajectory.display())))?;
    let sig = Signal::from_csv(&text).map_err(|e| input_error(format!("{}: {e}", trajectory.display())))?;
    let n = sig.states[0].len();
    if n != sc.dynamics.state_dim() {
        return Err(input_error(format!("{} has {n} state columns, scenario state has {}", trajectory.display(), sc.dynamics.state_dim())));
    }
    stl_satisfied(&sig, &sc.formula, &sc.preds, 0.0).map_err(|e| input_error(format!("monitor: {e}")))
}
