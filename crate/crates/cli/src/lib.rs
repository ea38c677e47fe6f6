//! Experiment runner for pmelab: configuration parsing, pipeline dispatch and
//! deterministic CSV/JSON artifacts with a digest manifest.

pub mod config;
pub mod error;
pub mod run;

pub use config::{parse_config, parse_config_list, ExperimentConfig, ExperimentKind, InitialData};
pub use error::CliError;
pub use run::{emit_csv, emit_manifest, read_manifest, run_experiment, verify_manifest, Manifest, Status};
