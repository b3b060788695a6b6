//! File formats and command implementations behind the CLI.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod ingest;

pub use artifact::{ChartArtifact, Provenance};
pub use commands::{MonitorSummary, SimulateOutputs, cmd_monitor, cmd_phase1, cmd_qq, cmd_simulate};
pub use config::{ChartConfig, RunConfig, SimulateConfig};
pub use ingest::{Dataset, load_dataset, read_dataset, write_dataset};
