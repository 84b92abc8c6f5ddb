//! Experiment harness for the CEP load-shedding engine: synthetic stream
//! generation, deterministic rate-controlled replay, QoR accounting against
//! unshed ground truth, and the `hspice` CLI.

pub mod cli;
pub mod config;
pub mod enumerate;
pub mod error;
pub mod model;
pub mod profile;
pub mod qor;
pub mod replay;
pub mod report;
pub mod runner;
pub mod truth;

pub use config::{ClockKind, ExperimentConfig};
pub use error::{HarnessError, Result};
pub use model::{train, TrainSettings, TrainedModel};
pub use profile::{generate_events, generate_stream, StreamProfile};
pub use qor::{compute_qor, LatencySummary, QoRReport};
pub use replay::{replay_virtual, LatencySample, PlanTraceEntry, ReplaySettings, RunOutput};
pub use runner::{
    calibrate, drop_ratio, load_inputs, run_experiment, run_experiment_with_model, RunArtifacts,
};
pub use truth::oracle_run;
