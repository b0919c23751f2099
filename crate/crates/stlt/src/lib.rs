//! Controller synthesis for nested signal temporal logic specifications.
//!
//! A formula is rewritten into desired form, turned into a signal temporal
//! logic tree whose set nodes come from reachability analysis, and each
//! temporal fragment of the tree gets a time-varying control barrier function.
//! An online quadratic program then tracks the barriers while set-node start
//! times are fixed by event triggers. [`monitor`] checks the resulting
//! trajectories independently.

pub mod cbf;
pub mod controller;
pub mod dynamics;
pub mod formula;
pub mod monitor;
pub mod qp;
pub mod reach;
pub mod regions;
pub mod tree;

pub use dynamics::{Dynamics, InputSet, Model};
pub use formula::{parse_formula, Formula, FormulaError, Interval, PredicateDecl};
pub use regions::{Axis, Region, RegionError, ValueField};
