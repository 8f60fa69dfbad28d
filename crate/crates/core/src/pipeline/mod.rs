//! Experiment orchestration: configuration, artifact persistence, staged
//! execution with caching, and report emission.

pub mod artifacts;
pub mod config;
pub mod report_io;
pub mod run;

pub use artifacts::{config_hash, Artifact, ArtifactStore};
pub use config::{
    load_config, load_config_with, parse_config, save_config, EvalMode, EvalTarget,
    ExperimentConfig,
};
pub use report_io::{parse_csv, render_csv, render_json, write_report_files};
pub use run::{run_pipeline, AblationOutcome, AdaptedArtifacts, Pipeline, SeedGap};
