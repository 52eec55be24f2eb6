//! The interface the federated loop needs from an auto-encoder.

use rand::Rng;

use crate::error::{Error, Result};
use crate::popdyn::{ContentId, PopularityVector};
use crate::tensor::{adam_step, clip_global_norm, AdamState, Tensor};

/// An ordered collection of parameter tensors.
pub trait ParamSet: Clone + Send + Sync {
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Every tensor reset to zero, keeping shapes.
    fn zeroed(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    fn same_shape(&self, other: &Self) -> bool {
        let (a, b) = (self.tensors(), other.tensors());
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.shape() == y.shape())
    }
}

/// A request-sequence auto-encoder whose encoder doubles as a popularity predictor.
pub trait Autoencoder: ParamSet {
    type Encoder: ParamSet;

    fn encoder(&self) -> Self::Encoder;
    fn n_contents(&self) -> usize;

    /// Reconstruction loss on a batch of equal-length windows, with the
    /// gradient of that loss for every parameter.
    fn loss_and_gradients<R: Rng + ?Sized>(
        &self,
        windows: &[&[Option<ContentId>]],
        dropout: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<(f64, Self)>;

    /// Predicted popularity for each window, in inference mode.
    fn predict(encoder: &Self::Encoder, windows: &[&[Option<ContentId>]]) -> Result<Vec<PopularityVector>>;
}

/// Optimizer settings shared by every method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub lr: f64,
    pub dropout: f64,
    /// Global gradient-norm cap; `f64::INFINITY` disables clipping.
    pub clip_norm: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            lr: 1e-4,
            dropout: 0.35,
            clip_norm: f64::INFINITY,
        }
    }
}

/// One mini-batch step: loss and gradients, optional clipping, Adam update.
/// Returns the loss measured before the update.
pub fn train_step<M: Autoencoder, R: Rng + ?Sized>(
    model: &mut M,
    windows: &[&[Option<ContentId>]],
    opt: &mut AdamState,
    settings: &TrainSettings,
    rng: &mut R,
) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Empty("mini-batch"));
    }
    let (loss, mut grads) = model.loss_and_gradients(windows, settings.dropout, true, rng)?;
    if settings.clip_norm.is_finite() {
        clip_global_norm(&mut grads.tensors_mut(), settings.clip_norm);
    }
    let g = grads.tensors();
    adam_step(&mut model.tensors_mut(), &g, opt, settings.lr)?;
    Ok(loss)
}

/// One-hot encoding of a batch of equal-length windows, one `[batch, n]`
/// tensor per time step. Empty requests become zero rows.
pub fn one_hot_steps(windows: &[&[Option<ContentId>]], n_contents: usize) -> Result<Vec<Tensor>> {
    let batch = windows.len();
    if batch == 0 {
        return Err(Error::Empty("window batch"));
    }
    let len = windows[0].len();
    if len == 0 {
        return Err(Error::Empty("request window"));
    }
    if windows.iter().any(|w| w.len() != len) {
        return Err(Error::InvalidParameter("windows in a batch must share a length".into()));
    }
    (0..len)
        .map(|t| {
            let mut data = vec![0.0; batch * n_contents];
            for (b, w) in windows.iter().enumerate() {
                if let Some(c) = w[t] {
                    if c.get() > n_contents {
                        return Err(Error::ContentOutOfRange {
                            id: c.get(),
                            n_contents,
                        });
                    }
                    data[b * n_contents + c.index()] = 1.0;
                }
            }
            Tensor::from_vec(&[batch, n_contents], data)
        })
        .collect()
}

/// One-hot vectors for a single window: `[1, n]` per slot.
pub fn encode_requests(window: &[Option<ContentId>], n_contents: usize) -> Result<Vec<Tensor>> {
    one_hot_steps(&[window], n_contents)
}
