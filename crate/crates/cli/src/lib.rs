//! Experiment driver: scenario files, batch runs, CSV tables.

pub mod experiment;
pub mod schema;

pub use experiment::{
    aggregate, run_experiment, run_scenario, Aggregate, Axis, ExperimentConfig, ResultWriter,
    ScenarioResult, ScenarioSource,
};
pub use schema::ScenarioFile;
