use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::baselines::{run_centralized, run_dense_fl, run_self_train, DenseAutoencoder, DenseEncoder};
use crate::error::{Error, Result};
use crate::fedcore::{run_training, AggregationScheme, ClientState, RoundReport, RunConfig};
use crate::lstm_ae::{ModelParams, StackParams};
use crate::metrics::{EvalSet, Evaluation};
use crate::model::Autoencoder;
use crate::popdyn::{
    generate_trace, mixture_global, random_profile, ContentId, PopularityVector, RequestTrace, UserProfile,
};
use crate::rng::{stream, SimRng, Stream};

pub type Window = Vec<Option<ContentId>>;

/// Profiles and simulated traces for every user.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub config: ExperimentConfig,
    /// Profiles as drawn, before their chains were stepped.
    pub profiles: Vec<UserProfile>,
    pub traces: Vec<RequestTrace>,
}

impl Experiment {
    pub fn generate(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let gen = config.profile_gen();
        let mut prng = stream(config.seed, Stream::ProfileGen);
        let mut profiles = Vec::with_capacity(config.n_users);
        let mut traces = Vec::with_capacity(config.n_users);
        for i in 0..config.n_users as u32 {
            let profile = random_profile(i, &gen, &mut prng)?;
            let mut running = profile.clone();
            let mut trng = stream(config.seed, Stream::Trace(i));
            traces.push(generate_trace(
                &mut running,
                config.n_contents,
                config.total_slots(),
                &mut trng,
            )?);
            profiles.push(profile);
        }
        Ok(Experiment {
            config: config.clone(),
            profiles,
            traces,
        })
    }

    /// Reassembles an experiment from stored parts, checking they fit the config.
    pub fn from_parts(config: ExperimentConfig, profiles: Vec<UserProfile>, traces: Vec<RequestTrace>) -> Result<Self> {
        config.validate()?;
        if profiles.len() != config.n_users || traces.len() != config.n_users {
            return Err(Error::Mismatch(format!(
                "config has {} users but found {} profiles and {} traces",
                config.n_users,
                profiles.len(),
                traces.len()
            )));
        }
        for t in &traces {
            if t.n_contents() != config.n_contents {
                return Err(Error::Mismatch(format!(
                    "trace has {} contents, config {}",
                    t.n_contents(),
                    config.n_contents
                )));
            }
            if t.len() < config.total_slots() {
                return Err(Error::Mismatch(format!(
                    "trace has {} slots, config needs {}",
                    t.len(),
                    config.total_slots()
                )));
            }
        }
        Ok(Experiment {
            config,
            profiles,
            traces,
        })
    }

    pub fn window_len(&self) -> usize {
        self.config.window + 1
    }

    /// `samples` training windows for one user, drawn from the training
    /// slots without replacement when there are enough of them.
    pub fn training_windows(&self, user: usize) -> Vec<Window> {
        let cfg = &self.config;
        let first_end = cfg.window;
        let n_ends = cfg.train_slots - first_end;
        let mut rng = stream(cfg.seed, Stream::ClientData(user as u32));
        let ends: Vec<usize> = if cfg.samples <= n_ends {
            sample(&mut rng, n_ends, cfg.samples)
                .into_iter()
                .map(|e| e + first_end)
                .collect()
        } else {
            (0..cfg.samples)
                .map(|_| first_end + rng.random_range(0..n_ends))
                .collect()
        };
        ends.into_iter()
            .map(|e| self.traces[user].window(e, self.window_len()).to_vec())
            .collect()
    }

    /// Slots used for evaluation.
    pub fn eval_range(&self) -> std::ops::Range<usize> {
        self.config.train_slots..self.config.train_slots + self.config.eval_slots
    }

    /// Slots replayed online.
    pub fn online_range(&self) -> std::ops::Range<usize> {
        let start = self.config.train_slots + self.config.eval_slots;
        start..start + self.config.online_slots
    }

    /// Every user's request in slot `t`, in user order.
    pub fn joint_requests(&self, t: usize) -> Window {
        self.traces.iter().map(|tr| tr.requests[t]).collect()
    }

    /// Arrival-weighted mixture of the true local popularities at `t`.
    pub fn global_truth(&self, t: usize) -> Result<PopularityVector> {
        let locals: Vec<PopularityVector> = self.traces.iter().map(|tr| tr.truth_popularity[t].clone()).collect();
        let rates: Vec<f64> = self.profiles.iter().map(|p| p.arrival_rate.rate_at(t)).collect();
        mixture_global(&locals, &rates)
    }

    pub fn local_eval(&self, user: usize) -> Result<EvalSet> {
        let tr = &self.traces[user];
        let (windows, truth) = self
            .eval_range()
            .map(|t| (tr.window(t, self.window_len()).to_vec(), tr.truth_popularity[t].clone()))
            .unzip();
        EvalSet::new(windows, truth)
    }

    pub fn global_eval(&self) -> Result<EvalSet> {
        let mut windows = Vec::new();
        let mut truth = Vec::new();
        for t in self.eval_range() {
            windows.push(self.joint_requests(t));
            truth.push(self.global_truth(t)?);
        }
        EvalSet::new(windows, truth)
    }

    pub fn evaluation(&self) -> Result<Evaluation> {
        Ok(Evaluation {
            local: (0..self.config.n_users)
                .map(|i| self.local_eval(i))
                .collect::<Result<_>>()?,
            global: Some(self.global_eval()?),
        })
    }
}

/// Training method selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Urfl,
    FedLwa,
    SelfTrain,
    Sdaefl,
    Ddaefl,
    Drael,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Urfl,
        Method::FedLwa,
        Method::SelfTrain,
        Method::Sdaefl,
        Method::Ddaefl,
        Method::Drael,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Urfl => "urfl",
            Method::FedLwa => "fedlwa",
            Method::SelfTrain => "selftrain",
            Method::Sdaefl => "sdaefl",
            Method::Ddaefl => "ddaefl",
            Method::Drael => "drael",
        }
    }

    /// The method implied by the config's aggregation scheme.
    pub fn from_scheme(scheme: AggregationScheme) -> Self {
        match scheme {
            AggregationScheme::FedAvg => Method::Urfl,
            AggregationScheme::FedLwa => Method::FedLwa,
        }
    }

    pub fn is_dense(self) -> bool {
        matches!(self, Method::Sdaefl | Method::Ddaefl)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Final parameters produced by a method.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModels {
    Lstm {
        clients: Vec<ModelParams>,
        global: Option<StackParams>,
    },
    Dense {
        clients: Vec<DenseAutoencoder>,
        global: Option<DenseEncoder>,
    },
}

impl TrainedModels {
    /// Per-user local predictions over a batch of windows.
    pub fn predict_local(&self, user: usize, windows: &[&[Option<ContentId>]]) -> Result<Vec<PopularityVector>> {
        match self {
            TrainedModels::Lstm { clients, .. } => {
                let m = clients
                    .get(user)
                    .or(clients.first())
                    .ok_or(Error::Empty("client models"))?;
                ModelParams::predict(&m.encoder, windows)
            }
            TrainedModels::Dense { clients, .. } => {
                let m = clients
                    .get(user)
                    .or(clients.first())
                    .ok_or(Error::Empty("client models"))?;
                DenseAutoencoder::predict(&m.encoder, windows)
            }
        }
    }

    /// Global predictions, if the method has a global model.
    pub fn predict_global(&self, windows: &[&[Option<ContentId>]]) -> Result<Option<Vec<PopularityVector>>> {
        match self {
            TrainedModels::Lstm { global: Some(g), .. } => ModelParams::predict(g, windows).map(Some),
            TrainedModels::Dense { global: Some(g), .. } => DenseAutoencoder::predict(g, windows).map(Some),
            _ => Ok(None),
        }
    }
}

/// Reports and final models of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    pub reports: Vec<RoundReport>,
    pub models: TrainedModels,
}

impl MethodOutcome {
    pub fn final_global_rmse(&self) -> Option<f64> {
        self.reports.last().and_then(|r| r.global_rmse)
    }

    pub fn final_local_rmse(&self) -> Option<f64> {
        self.reports.last().and_then(|r| r.mean_local_rmse())
    }
}

/// Called with the round index and a snapshot of the models when a
/// periodic checkpoint is due.
pub type CheckpointHook<'a> = &'a mut dyn FnMut(usize, &TrainedModels) -> Result<()>;

fn run_config(cfg: &ExperimentConfig, aggregation: Option<AggregationScheme>) -> RunConfig {
    RunConfig {
        rounds: cfg.rounds,
        epochs: cfg.epochs,
        batch: cfg.batch,
        settings: cfg.train_settings(),
        sample_k: cfg.sampled_per_round(),
        aggregation,
        weighting: cfg.loss_weighting,
        eval_every: cfg.eval_every,
    }
}

fn make_clients<M: Autoencoder>(exp: &Experiment, init: &M) -> Result<Vec<ClientState<M>>> {
    (0..exp.config.n_users)
        .map(|i| {
            ClientState::new(
                i as u32,
                init.clone(),
                exp.training_windows(i),
                stream(exp.config.seed, Stream::ClientDropout(i as u32)),
            )
        })
        .collect()
}

fn due(cfg: &ExperimentConfig, round: usize) -> bool {
    cfg.checkpoint_every > 0 && round.is_multiple_of(cfg.checkpoint_every) && round < cfg.rounds
}

fn lstm_snapshot(clients: &[ClientState<ModelParams>], federated: bool) -> TrainedModels {
    let params: Vec<ModelParams> = clients.iter().map(|c| c.params.clone()).collect();
    let global = federated.then(|| params[0].encoder.clone());
    TrainedModels::Lstm {
        clients: params,
        global,
    }
}

fn dense_snapshot(clients: &[ClientState<DenseAutoencoder>]) -> TrainedModels {
    let params: Vec<DenseAutoencoder> = clients.iter().map(|c| c.params.clone()).collect();
    let global = Some(params[0].encoder.clone());
    TrainedModels::Dense {
        clients: params,
        global,
    }
}

/// Trains `method` on the experiment. Every method starts from parameters
/// drawn from the same initialization stream.
pub fn run_method(exp: &Experiment, method: Method, hook: Option<CheckpointHook<'_>>) -> Result<MethodOutcome> {
    let cfg = &exp.config;
    let eval = exp.evaluation()?;
    let mut init_rng: SimRng = stream(cfg.seed, Stream::Init);
    let mut sampler = stream(cfg.seed, Stream::Sampler);
    let mut hook = hook;
    let (reports, models) = match method {
        Method::Urfl | Method::FedLwa | Method::SelfTrain => {
            let init = ModelParams::init(&cfg.layer_spec()?, &mut init_rng);
            let mut clients = make_clients(exp, &init)?;
            let aggregation = match method {
                Method::Urfl => Some(AggregationScheme::FedAvg),
                Method::FedLwa => Some(AggregationScheme::FedLwa),
                _ => None,
            };
            let rc = run_config(cfg, aggregation);
            let reports = if aggregation.is_some() {
                run_training(&mut clients, &rc, &eval, &mut sampler, |r, cl| match hook.as_mut() {
                    Some(h) if due(cfg, r.round) => h(r.round, &lstm_snapshot(cl, true)),
                    _ => Ok(()),
                })?
            } else {
                run_self_train(&mut clients, &rc, &eval, &mut sampler)?
            };
            (reports, lstm_snapshot(&clients, aggregation.is_some()))
        }
        Method::Sdaefl | Method::Ddaefl => {
            let widths = if method == Method::Sdaefl {
                vec![cfg.n_contents]
            } else {
                cfg.layer_spec()?.encoder_widths().to_vec()
            };
            let init = DenseAutoencoder::init(cfg.n_contents, cfg.window + 1, &widths, &mut init_rng)?;
            let mut clients = make_clients(exp, &init)?;
            let rc = run_config(cfg, Some(AggregationScheme::FedAvg));
            let reports = if hook.is_some() {
                run_training(&mut clients, &rc, &eval, &mut sampler, |r, cl| match hook.as_mut() {
                    Some(h) if due(cfg, r.round) => h(r.round, &dense_snapshot(cl)),
                    _ => Ok(()),
                })?
            } else {
                run_dense_fl(&mut clients, &rc, &eval, &mut sampler)?
            };
            (reports, dense_snapshot(&clients))
        }
        Method::Drael => {
            let init = ModelParams::init(&cfg.layer_spec()?, &mut init_rng);
            let pooled: Vec<Window> = (0..cfg.n_users).flat_map(|i| exp.training_windows(i)).collect();
            let mut central = ClientState::new(0, init, pooled, stream(cfg.seed, Stream::Central))?;
            let ids: Vec<u32> = (0..cfg.n_users as u32).collect();
            let reports = run_centralized(&mut central, &ids, &run_config(cfg, None), &eval)?;
            let models = TrainedModels::Lstm {
                clients: vec![central.params.clone()],
                global: Some(central.params.encoder.clone()),
            };
            (reports, models)
        }
    };
    Ok(MethodOutcome {
        method,
        reports,
        models,
    })
}
