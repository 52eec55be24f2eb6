//! Federated LSTM auto-encoder simulator for edge content popularity prediction.

pub mod baselines;
pub mod checkpoint;
pub mod error;
pub mod fedcore;
pub mod fuzzing;
pub mod hexfloat;
pub mod lstm_ae;
pub mod metrics;
pub mod model;
pub mod popdyn;
pub mod rng;
pub mod sim;
pub mod tensor;

pub use error::{Error, Result};
