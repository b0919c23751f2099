//! Scenario files and the commands behind the `stlt` binary.

pub mod commands;
pub mod scenario;
pub mod svg;

pub use commands::{cmd_monitor, cmd_reach, cmd_synth, cmd_tree, Outcome};
pub use scenario::{InputError, Overrides, Scenario};
