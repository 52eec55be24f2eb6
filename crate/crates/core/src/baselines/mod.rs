//! Comparison methods: isolated local training, dense federated
//! auto-encoders, and a centrally trained LSTM auto-encoder.

mod dense_ae;

pub use dense_ae::{DenseAutoencoder, DenseEncoder};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedcore::{local_train_round, run_training, ClientRecord, ClientState, RoundReport, RunConfig};
use crate::metrics::Evaluation;
use crate::model::Autoencoder;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    SelfTrain,
    Sdaefl,
    Ddaefl,
    Drael,
}

/// Every client trains its own model; nothing is exchanged.
pub fn run_self_train<M: Autoencoder>(
    clients: &mut [ClientState<M>],
    cfg: &RunConfig,
    eval: &Evaluation,
    sampler: &mut SimRng,
) -> Result<Vec<RoundReport>> {
    let cfg = RunConfig {
        aggregation: None,
        ..cfg.clone()
    };
    run_training(clients, &cfg, eval, sampler, |_, _| Ok(()))
}

/// The federated loop with dense auto-encoders.
pub fn run_dense_fl(
    clients: &mut [ClientState<DenseAutoencoder>],
    cfg: &RunConfig,
    eval: &Evaluation,
    sampler: &mut SimRng,
) -> Result<Vec<RoundReport>> {
    if cfg.aggregation.is_none() {
        return Err(Error::InvalidParameter(
            "dense federated baselines need an aggregation scheme".into(),
        ));
    }
    run_training(clients, cfg, eval, sampler, |_, _| Ok(()))
}

/// One model trained on every user's pooled windows. Each round runs
/// `cfg.epochs` steps; the report carries one record per user with the
/// central loss and that user's local RMSE under the central model.
pub fn run_centralized<M: Autoencoder>(
    central: &mut ClientState<M>,
    user_ids: &[u32],
    cfg: &RunConfig,
    eval: &Evaluation,
) -> Result<Vec<RoundReport>> {
    if !eval.local.is_empty() && eval.local.len() != user_ids.len() {
        return Err(Error::Mismatch("one local evaluation set per user expected".into()));
    }
    let eval_every = cfg.eval_every.max(1);
    let mut reports = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let avg = local_train_round(central, cfg.epochs, cfg.batch, &cfg.settings)?;
        let evaluate = round % eval_every == 0 || round == cfg.rounds;
        let encoder = central.params.encoder();
        let mut clients = Vec::with_capacity(user_ids.len());
        for (i, &id) in user_ids.iter().enumerate() {
            let local_rmse = match (evaluate, eval.local.get(i)) {
                (true, Some(set)) => Some(set.model_rmse::<M>(&encoder)?),
                _ => None,
            };
            clients.push(ClientRecord {
                client_id: id,
                sampled: true,
                avg_loss: Some(avg),
                gamma: None,
                first_loss: central.loss_log.first().copied(),
                last_loss: central.loss_log.last().copied(),
                local_rmse,
            });
        }
        let global_rmse = match (evaluate, &eval.global) {
            (true, Some(set)) => Some(set.model_rmse::<M>(&encoder)?),
            _ => None,
        };
        reports.push(RoundReport {
            round,
            clients,
            global_rmse,
            bytes_cum: 0,
        });
    }
    Ok(reports)
}
