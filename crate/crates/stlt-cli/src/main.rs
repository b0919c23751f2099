use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use stlt::controller::BranchChoice;
use stlt_cli::commands::{cmd_monitor, cmd_reach, cmd_synth, cmd_tree, Outcome};
use stlt_cli::scenario::{parse_branch, Overrides, Scenario};

/// Controller synthesis and monitoring for signal temporal logic scenarios.
#[derive(Debug, Parser)]
#[command(name = "stlt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the tree and write tree.dot and time_codes.csv.
    Tree(Common),
    /// Solve and cache the grid value functions of a scenario.
    Reach(Common),
    /// Run the closed loop from every initial state and monitor the results.
    Synth(Common),
    /// Check a trajectory CSV against the scenario formula.
    Monitor {
        #[command(flatten)]
        common: Common,
        /// Trajectory CSV with columns t,x1..xn.
        #[arg(long)]
        trajectory: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario TOML file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (default out/<scenario name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Branch index or `auto`.
    #[arg(long, value_parser = branch_arg)]
    branch: Option<BranchChoice>,
    /// Relax barrier constraints instead of stopping when the QP is infeasible.
    #[arg(long)]
    soft: bool,
    /// Cache directory for grid value functions.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Controller time step in seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Seed for randomly drawn initial states.
    #[arg(long)]
    seed: Option<u64>,
}

fn branch_arg(s: &str) -> Result<BranchChoice, String> {
    parse_branch(s).map_err(|e| e.to_string())
}

impl Common {
    fn load(&self) -> Result<Scenario> {
        let mut sc = Scenario::load(&self.scenario)?;
        sc.apply(&Overrides { branch: self.branch, soft: self.soft, cache_dir: self.cache_dir.clone(), dt: self.dt, seed: self.seed });
        Ok(sc)
    }

    fn out(&self, sc: &Scenario) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out").join(&sc.name))
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Tree(c) => {
            let sc = c.load()?;
            let r = cmd_tree(&sc, &c.out(&sc))?;
            println!("{} set nodes, {} operators, {} paths, {} fragments", r.set_nodes, r.operators, r.paths, r.fragments);
            println!("wrote {} and {}", r.dot.display(), r.codes.display());
            Ok(Outcome::Success)
        }
        Command::Reach(c) => {
            let sc = c.load()?;
            let r = cmd_reach(&sc)?;
            match r.dir {
                Some(dir) => println!("{}: {} files written, {} reused", dir.display(), r.written, r.reused),
                None => println!("analytic engine: nothing to cache"),
            }
            Ok(Outcome::Success)
        }
        Command::Synth(c) => {
            let sc = c.load()?;
            let out = c.out(&sc);
            let r = cmd_synth(&sc, &out)?;
            for run in &r.runs {
                let margin = run.verdict.as_ref().map(|v| format!(" margin {:.4}", v.margin)).unwrap_or_default();
                println!("run{} x0={:?} branch {}: {:?}{margin}", run.index, run.x0, run.branch, run.outcome);
                if let Some(d) = &run.diagnostic {
                    println!("  {d}");
                }
            }
            println!("wrote {}", out.display());
            Ok(r.outcome)
        }
        Command::Monitor { common, trajectory } => {
            let sc = common.load()?;
            let v = cmd_monitor(&sc, &trajectory)?;
            println!("{}", serde_json::to_string_pretty(&v)?);
            Ok(if v.satisfied { Outcome::Success } else { Outcome::Unsat })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(outcome) => ExitCode::from(outcome.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(4)
        }
    }
}
