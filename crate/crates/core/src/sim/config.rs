use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedcore::{AggregationScheme, LossWeighting};
use crate::lstm_ae::LayerSpec;
use crate::model::TrainSettings;
use crate::popdyn::ProfileGenConfig;

/// All experiment settings. Serialized as flat TOML; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_contents: usize,
    pub n_users: usize,
    /// History length H; models see windows of H+1 slots.
    pub window: usize,
    /// Local epochs (mini-batch steps) per round.
    pub epochs: usize,
    /// Windows extracted per user for training.
    pub samples: usize,
    pub batch: usize,
    pub rounds: usize,
    /// Encoder widths; empty means `[128, 64, n_contents]`.
    pub encoder_widths: Vec<usize>,
    pub lr: f64,
    pub dropout: f64,
    /// Gradient-norm cap; 0 disables clipping.
    pub clip_norm: f64,
    pub scheme: AggregationScheme,
    pub loss_weighting: LossWeighting,
    /// Clients sampled per round; 0 means all.
    pub sample_k: usize,
    pub seed: u64,
    pub lambda_range: [f64; 2],
    pub alpha_range: [f64; 2],
    /// Inclusive range for the number of Markov states per user.
    pub g_range: [usize; 2],
    /// Slots available for training-window extraction.
    pub train_slots: usize,
    /// Held-out slots used for evaluation.
    pub eval_slots: usize,
    /// Slots replayed by the online command.
    pub online_slots: usize,
    pub eval_every: usize,
    /// Write checkpoints every this many rounds; 0 only at the end.
    pub checkpoint_every: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_contents: 24,
            n_users: 10,
            window: 10,
            epochs: 32,
            samples: 1000,
            batch: 32,
            rounds: 100,
            encoder_widths: Vec::new(),
            lr: 1e-4,
            dropout: 0.35,
            clip_norm: 0.0,
            scheme: AggregationScheme::FedAvg,
            loss_weighting: LossWeighting::Proportional,
            sample_k: 0,
            seed: 0,
            lambda_range: [0.5, 1.0],
            alpha_range: [0.0, 2.5],
            g_range: [2, 6],
            train_slots: 2000,
            eval_slots: 200,
            online_slots: 20,
            eval_every: 1,
            checkpoint_every: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_contents", self.n_contents),
            ("n_users", self.n_users),
            ("window", self.window),
            ("epochs", self.epochs),
            ("samples", self.samples),
            ("batch", self.batch),
            ("train_slots", self.train_slots),
            ("eval_slots", self.eval_slots),
            ("online_slots", self.online_slots),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.sample_k > self.n_users {
            return Err(Error::Config(format!(
                "sample_k {} exceeds n_users {}",
                self.sample_k, self.n_users
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0,1)".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm < 0.0 {
            return Err(Error::Config("clip_norm must be >= 0".into()));
        }
        if self.train_slots < self.window + 1 {
            return Err(Error::Config("train_slots must cover at least one window".into()));
        }
        self.layer_spec()?;
        let [l0, l1] = self.lambda_range;
        if !(0.0 <= l0 && l0 <= l1 && l1 <= 1.0) {
            return Err(Error::Config(format!("bad lambda_range {:?}", self.lambda_range)));
        }
        let [a0, a1] = self.alpha_range;
        if !(0.0 <= a0 && a0 <= a1 && a1.is_finite()) {
            return Err(Error::Config(format!("bad alpha_range {:?}", self.alpha_range)));
        }
        let [g0, g1] = self.g_range;
        if g0 == 0 || g0 > g1 {
            return Err(Error::Config(format!("bad g_range {:?}", self.g_range)));
        }
        Ok(())
    }

    pub fn layer_spec(&self) -> Result<LayerSpec> {
        if self.encoder_widths.is_empty() {
            LayerSpec::default_for(self.n_contents)
        } else {
            LayerSpec::new(self.n_contents, self.encoder_widths.clone())
        }
        .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn sampled_per_round(&self) -> usize {
        if self.sample_k == 0 {
            self.n_users
        } else {
            self.sample_k
        }
    }

    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            lr: self.lr,
            dropout: self.dropout,
            clip_norm: if self.clip_norm > 0.0 {
                self.clip_norm
            } else {
                f64::INFINITY
            },
        }
    }

    pub fn profile_gen(&self) -> ProfileGenConfig {
        ProfileGenConfig {
            n_states: (self.g_range[0], self.g_range[1]),
            alpha_range: (self.alpha_range[0], self.alpha_range[1]),
            lambda_range: (self.lambda_range[0], self.lambda_range[1]),
        }
    }

    /// Total simulated slots per user: training, held-out, online.
    pub fn total_slots(&self) -> usize {
        self.train_slots + self.eval_slots + self.online_slots
    }
}
