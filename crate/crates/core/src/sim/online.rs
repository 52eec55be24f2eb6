use std::ops::Range;

use super::experiment::{Experiment, TrainedModels, Window};
use crate::error::{Error, Result};
use crate::popdyn::{ContentId, PopularityVector};

/// Server-side holding area for the current slot's requests. Reading the
/// joint request sequence empties it; nothing survives to the next slot.
#[derive(Debug)]
pub struct ServerBuffer {
    n_users: usize,
    received: Vec<(usize, ContentId)>,
}

impl ServerBuffer {
    pub fn new(n_users: usize) -> Self {
        ServerBuffer {
            n_users,
            received: Vec::new(),
        }
    }

    /// Accepts one upload; each user may upload at most once per slot.
    pub fn receive(&mut self, user: usize, content: ContentId) -> Result<()> {
        if user >= self.n_users {
            return Err(Error::InvalidParameter(format!("unknown user {user}")));
        }
        if self.received.iter().any(|(u, _)| *u == user) {
            return Err(Error::InvalidParameter(format!(
                "user {user} already uploaded this slot"
            )));
        }
        self.received.push((user, content));
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.received.is_empty()
    }

    pub fn len(&self) -> usize {
        self.received.len()
    }

    /// The slot's requests in user order (empty slots for silent users),
    /// erasing them from the buffer.
    pub fn take_sequence(&mut self) -> Window {
        let mut seq = vec![None; self.n_users];
        for (u, c) in self.received.drain(..) {
            seq[u] = Some(c);
        }
        seq
    }
}

pub trait LocalPredictor {
    fn predict_local(&self, user: usize, slot: usize, window: &[Option<ContentId>]) -> Result<PopularityVector>;
}

pub trait GlobalPredictor {
    fn predict_global(&self, slot: usize, sequence: &[Option<ContentId>]) -> Result<PopularityVector>;
}

impl LocalPredictor for TrainedModels {
    fn predict_local(&self, user: usize, _slot: usize, window: &[Option<ContentId>]) -> Result<PopularityVector> {
        Ok(self.predict_local(user, &[window])?.remove(0))
    }
}

impl GlobalPredictor for TrainedModels {
    fn predict_global(&self, _slot: usize, sequence: &[Option<ContentId>]) -> Result<PopularityVector> {
        self.predict_global(&[sequence])?
            .map(|mut v| v.remove(0))
            .ok_or(Error::Empty("global model"))
    }
}

/// Returns the true popularity regardless of input.
pub struct OraclePredictor<'a> {
    pub experiment: &'a Experiment,
}

impl LocalPredictor for OraclePredictor<'_> {
    fn predict_local(&self, user: usize, slot: usize, _: &[Option<ContentId>]) -> Result<PopularityVector> {
        Ok(self.experiment.traces[user].truth_popularity[slot].clone())
    }
}

impl GlobalPredictor for OraclePredictor<'_> {
    fn predict_global(&self, slot: usize, _: &[Option<ContentId>]) -> Result<PopularityVector> {
        self.experiment.global_truth(slot)
    }
}

/// Predictions and per-content absolute errors for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineSlot {
    pub slot: usize,
    pub local_pred: Vec<PopularityVector>,
    pub local_errors: Vec<Vec<f64>>,
    pub global_pred: Option<PopularityVector>,
    pub global_errors: Option<Vec<f64>>,
    pub global_truth: PopularityVector,
    /// Whether the server buffer was empty once the slot finished.
    pub buffer_cleared: bool,
}

impl OnlineSlot {
    pub fn all_errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.local_errors
            .iter()
            .flatten()
            .chain(self.global_errors.iter().flatten())
            .copied()
    }
}

fn abs_errors(pred: &PopularityVector, truth: &PopularityVector) -> Vec<f64> {
    pred.as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(p, t)| (p - t).abs())
        .collect()
}

/// Replays `slots`: users upload non-empty requests, every user predicts
/// from its own window, the server predicts from the joint sequence and
/// discards it.
pub fn run_online(
    exp: &Experiment,
    local: &dyn LocalPredictor,
    global: Option<&dyn GlobalPredictor>,
    slots: Range<usize>,
) -> Result<Vec<OnlineSlot>> {
    let window = exp.window_len();
    if slots.start + 1 < window || slots.end > exp.traces[0].len() {
        return Err(Error::InvalidParameter(format!(
            "online slots {slots:?} outside the trace"
        )));
    }
    let mut buffer = ServerBuffer::new(exp.config.n_users);
    let mut out = Vec::with_capacity(slots.len());
    for t in slots {
        let mut local_pred = Vec::with_capacity(exp.traces.len());
        let mut local_errors = Vec::with_capacity(exp.traces.len());
        for (i, tr) in exp.traces.iter().enumerate() {
            if let Some(c) = tr.requests[t] {
                buffer.receive(i, c)?;
            }
            let p = local.predict_local(i, t, tr.window(t, window))?;
            local_errors.push(abs_errors(&p, &tr.truth_popularity[t]));
            local_pred.push(p);
        }
        let sequence = buffer.take_sequence();
        let global_truth = exp.global_truth(t)?;
        let (global_pred, global_errors) = match global {
            Some(g) => {
                let p = g.predict_global(t, &sequence)?;
                let e = abs_errors(&p, &global_truth);
                (Some(p), Some(e))
            }
            None => (None, None),
        };
        drop(sequence);
        out.push(OnlineSlot {
            slot: t,
            local_pred,
            local_errors,
            global_pred,
            global_errors,
            global_truth,
            buffer_cleared: buffer.is_empty(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ExperimentConfig;

    fn exp() -> Experiment {
        Experiment::generate(&ExperimentConfig {
            n_contents: 5,
            n_users: 3,
            window: 3,
            samples: 10,
            encoder_widths: vec![5],
            train_slots: 30,
            eval_slots: 10,
            online_slots: 6,
            seed: 2,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn buffer_burns_after_read() {
        let mut b = ServerBuffer::new(3);
        b.receive(2, ContentId::new(1, 4).unwrap()).unwrap();
        assert!(b.receive(2, ContentId::new(2, 4).unwrap()).is_err());
        assert!(b.receive(3, ContentId::new(2, 4).unwrap()).is_err());
        assert_eq!(b.len(), 1);
        let s = b.take_sequence();
        assert_eq!(s, vec![None, None, ContentId::new(1, 4).ok()]);
        assert!(b.is_empty());
    }

    #[test]
    fn oracle_has_zero_error() {
        let e = exp();
        let oracle = OraclePredictor { experiment: &e };
        let slots = run_online(&e, &oracle, Some(&oracle), e.online_range()).unwrap();
        assert_eq!(slots.len(), 6);
        for s in &slots {
            assert!(s.buffer_cleared);
            assert!(s.all_errors().all(|x| x == 0.0));
            assert_eq!(s.all_errors().count(), 4 * 5);
        }
    }

    #[test]
    fn out_of_range_slots_rejected() {
        let e = exp();
        let oracle = OraclePredictor { experiment: &e };
        assert!(run_online(&e, &oracle, None, 40..47).is_err());
        assert!(run_online(&e, &oracle, None, 0..2).is_err());
    }
}
