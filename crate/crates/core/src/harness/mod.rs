//! Experiment orchestration behind the `mllfc` command-line tool.

pub mod commands;
pub mod config;
pub mod svg;

pub use commands::{
    cmd_lattice, cmd_regions, cmd_simulate, cmd_verify_reduction, Check, CommandOutput, Probability,
    TrialAggregate, TrialResult,
};
pub use config::ExperimentConfig;
