//! Federated training: local rounds on clients, server aggregation, broadcast.

pub mod aggregate;
pub mod comm;

pub use aggregate::{fedavg_aggregate, fedlwa_aggregate, loss_gammas, weighted_sum, LossWeighting};
pub use comm::{comm_accounting, round_bytes, CommMeter, BYTES_PER_LOSS, BYTES_PER_PARAM};

use log::warn;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Evaluation;
use crate::model::{train_step, Autoencoder, TrainSettings};
use crate::popdyn::ContentId;
use crate::rng::SimRng;
use crate::tensor::AdamState;

/// Server-side aggregation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AggregationScheme {
    #[default]
    FedAvg,
    FedLwa,
}

/// One client: its model, private windows, optimizer and random stream.
#[derive(Debug, Clone)]
pub struct ClientState<M: Autoencoder> {
    pub user_id: u32,
    pub params: M,
    dataset: Vec<Vec<Option<ContentId>>>,
    opt: AdamState,
    rng: SimRng,
    pub loss_log: Vec<f64>,
}

impl<M: Autoencoder> ClientState<M> {
    pub fn new(user_id: u32, params: M, dataset: Vec<Vec<Option<ContentId>>>, rng: SimRng) -> Result<Self> {
        let len = dataset.first().ok_or(Error::Empty("client dataset"))?.len();
        if len == 0 || dataset.iter().any(|w| w.len() != len) {
            return Err(Error::InvalidParameter(
                "client windows must share a positive length".into(),
            ));
        }
        let opt = AdamState::new(params.tensors());
        Ok(ClientState {
            user_id,
            params,
            dataset,
            opt,
            rng,
            loss_log: Vec::new(),
        })
    }

    pub fn dataset_len(&self) -> usize {
        self.dataset.len()
    }

    pub fn window_len(&self) -> usize {
        self.dataset[0].len()
    }
}

/// Runs `epochs` mini-batch steps, each on `batch` windows drawn with
/// replacement, and returns the mean of the step losses.
pub fn local_train_round<M: Autoencoder>(
    client: &mut ClientState<M>,
    epochs: usize,
    batch: usize,
    settings: &TrainSettings,
) -> Result<f64> {
    if epochs == 0 || batch == 0 {
        return Err(Error::InvalidParameter("epochs and batch size must be >= 1".into()));
    }
    client.loss_log.clear();
    let n = client.dataset.len();
    for _ in 0..epochs {
        let picks: Vec<usize> = (0..batch).map(|_| client.rng.random_range(0..n)).collect();
        let windows: Vec<&[Option<ContentId>]> = picks.iter().map(|&i| client.dataset[i].as_slice()).collect();
        let loss = train_step(&mut client.params, &windows, &mut client.opt, settings, &mut client.rng)?;
        client.loss_log.push(loss);
    }
    Ok(client.loss_log.iter().sum::<f64>() / epochs as f64)
}

/// `k` distinct client indices, uniformly at random, in ascending order.
pub fn sample_clients<R: Rng + ?Sized>(n_clients: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k == 0 || k > n_clients {
        return Err(Error::InvalidParameter(format!(
            "cannot sample {k} of {n_clients} clients"
        )));
    }
    let mut idx = sample(rng, n_clients, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Loop settings shared by every federated method.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub rounds: usize,
    pub epochs: usize,
    pub batch: usize,
    pub settings: TrainSettings,
    pub sample_k: usize,
    /// `None` disables aggregation: every client trains alone.
    pub aggregation: Option<AggregationScheme>,
    pub weighting: LossWeighting,
    /// Evaluate every this many rounds; the last round is always evaluated.
    pub eval_every: usize,
}

/// Per-client entry of a round report.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClientRecord {
    pub client_id: u32,
    pub sampled: bool,
    pub avg_loss: Option<f64>,
    pub gamma: Option<f64>,
    pub first_loss: Option<f64>,
    pub last_loss: Option<f64>,
    pub local_rmse: Option<f64>,
}

/// What happened in one communication round.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundReport {
    pub round: usize,
    pub clients: Vec<ClientRecord>,
    pub global_rmse: Option<f64>,
    pub bytes_cum: u64,
}

impl RoundReport {
    /// Mean training loss over the clients that trained this round.
    pub fn mean_loss(&self) -> Option<f64> {
        let v: Vec<f64> = self.clients.iter().filter_map(|c| c.avg_loss).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Mean local RMSE over evaluated clients.
    pub fn mean_local_rmse(&self) -> Option<f64> {
        let v: Vec<f64> = self.clients.iter().filter_map(|c| c.local_rmse).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// What a client sends to the server: parameters and one scalar.
struct ClientUpload<M> {
    params: M,
    avg_loss: f64,
}

/// Server half of a round: aggregate the uploads into the broadcast model.
fn server_aggregate<M: Autoencoder>(
    uploads: &[ClientUpload<M>],
    scheme: AggregationScheme,
    weighting: LossWeighting,
) -> Result<(M, Option<Vec<f64>>)> {
    let params: Vec<&M> = uploads.iter().map(|u| &u.params).collect();
    let omegas = vec![1.0; uploads.len()];
    match scheme {
        AggregationScheme::FedAvg => Ok((fedavg_aggregate(&params, &omegas)?.0, None)),
        AggregationScheme::FedLwa => {
            let losses: Vec<f64> = uploads.iter().map(|u| u.avg_loss).collect();
            match fedlwa_aggregate(&params, &losses, &omegas, weighting) {
                Ok((ae, _, gammas)) => Ok((ae, Some(gammas))),
                Err(Error::ZeroLosses) => {
                    warn!("all client losses are zero; falling back to plain averaging this round");
                    Ok((fedavg_aggregate(&params, &omegas)?.0, None))
                }
                Err(e) => Err(e),
            }
        }
    }
}

/// The communication-round loop. `on_round` sees each report and the
/// clients right after it is produced (after the broadcast, if any).
pub fn run_training<M, F>(
    clients: &mut [ClientState<M>],
    cfg: &RunConfig,
    eval: &Evaluation,
    sampler: &mut SimRng,
    mut on_round: F,
) -> Result<Vec<RoundReport>>
where
    M: Autoencoder,
    F: FnMut(&RoundReport, &[ClientState<M>]) -> Result<()>,
{
    let n = clients.len();
    if n == 0 {
        return Err(Error::Empty("client list"));
    }
    if clients.iter().any(|c| !c.params.same_shape(&clients[0].params)) {
        return Err(Error::InvalidParameter("clients must share one model structure".into()));
    }
    if !eval.local.is_empty() && eval.local.len() != n {
        return Err(Error::Mismatch(format!(
            "{} local eval sets for {n} clients",
            eval.local.len()
        )));
    }
    let param_count = clients[0].params.param_count() as u64;
    let eval_every = cfg.eval_every.max(1);
    let mut meter = CommMeter::default();
    let mut reports = Vec::with_capacity(cfg.rounds);

    for round in 1..=cfg.rounds {
        let evaluate = round % eval_every == 0 || round == cfg.rounds;
        let selected = match cfg.aggregation {
            Some(_) => sample_clients(n, cfg.sample_k, sampler)?,
            None => (0..n).collect(),
        };
        let mut records: Vec<ClientRecord> = clients
            .iter()
            .map(|c| ClientRecord {
                client_id: c.user_id,
                ..Default::default()
            })
            .collect();
        let mut uploads = Vec::with_capacity(selected.len());
        for &i in &selected {
            let avg = local_train_round(&mut clients[i], cfg.epochs, cfg.batch, &cfg.settings)?;
            let rec = &mut records[i];
            rec.sampled = true;
            rec.avg_loss = Some(avg);
            rec.first_loss = clients[i].loss_log.first().copied();
            rec.last_loss = clients[i].loss_log.last().copied();
            if cfg.aggregation.is_some() {
                uploads.push(ClientUpload {
                    params: clients[i].params.clone(),
                    avg_loss: avg,
                });
            }
        }
        if evaluate && !eval.local.is_empty() {
            for (rec, (c, set)) in records.iter_mut().zip(clients.iter().zip(&eval.local)) {
                rec.local_rmse = Some(set.model_rmse::<M>(&c.params.encoder())?);
            }
        }

        let mut global_rmse = None;
        if let Some(scheme) = cfg.aggregation {
            let (ae, gammas) = server_aggregate(&uploads, scheme, cfg.weighting)?;
            if let Some(g) = gammas {
                for (&i, g) in selected.iter().zip(g) {
                    records[i].gamma = Some(g);
                }
            }
            meter.record_round(
                n as u64,
                selected.len() as u64,
                param_count,
                scheme == AggregationScheme::FedLwa,
            );
            if evaluate {
                if let Some(set) = &eval.global {
                    global_rmse = Some(set.model_rmse::<M>(&ae.encoder())?);
                }
            }
            for c in clients.iter_mut() {
                c.params = ae.clone();
            }
        }

        let report = RoundReport {
            round,
            clients: records,
            global_rmse,
            bytes_cum: meter.total(),
        };
        on_round(&report, clients)?;
        reports.push(report);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests;
