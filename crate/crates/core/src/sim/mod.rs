//! Experiment harness: configuration, data generation, training runs,
//! online replay and file I/O.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod io;
pub mod mixture_check;
pub mod online;

pub use config::ExperimentConfig;
pub use experiment::{run_method, Experiment, Method, MethodOutcome, TrainedModels, Window};
