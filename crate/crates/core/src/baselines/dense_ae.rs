use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{one_hot_steps, Autoencoder, ParamSet};
use crate::popdyn::{ContentId, PopularityVector};
use crate::tensor::{
    dense_backward, dense_forward, dropout_forward, softmax, Activation, DenseCache, DenseLayer, Tensor,
};

/// Dense encoder over a flattened window of `window` one-hot slots.
/// Hidden layers and the output use tanh.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseEncoder {
    window: usize,
    n_contents: usize,
    pub layers: Vec<DenseLayer>,
}

/// Dense auto-encoder: the decoder mirrors the encoder's hidden widths and
/// ends in an identity layer of width `window * N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseAutoencoder {
    pub encoder: DenseEncoder,
    pub decoder: Vec<DenseLayer>,
}

impl DenseEncoder {
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn n_contents(&self) -> usize {
        self.n_contents
    }

    /// Flattened `[batch, window * N]` input. Longer windows keep their
    /// last `window` slots; shorter ones are padded with empty slots in front.
    fn flatten(&self, windows: &[&[Option<ContentId>]]) -> Result<Tensor> {
        let fitted: Vec<Vec<Option<ContentId>>> = windows.iter().map(|w| fit_window(w, self.window)).collect();
        let refs: Vec<&[Option<ContentId>]> = fitted.iter().map(|w| w.as_slice()).collect();
        let steps = one_hot_steps(&refs, self.n_contents)?;
        let (batch, n) = (windows.len(), self.n_contents);
        let mut flat = vec![0.0; batch * self.window * n];
        for (t, step) in steps.iter().enumerate() {
            for b in 0..batch {
                let dst = b * self.window * n + t * n;
                flat[dst..dst + n].copy_from_slice(step.row(b));
            }
        }
        Tensor::from_vec(&[batch, self.window * n], flat)
    }
}

fn fit_window(w: &[Option<ContentId>], len: usize) -> Vec<Option<ContentId>> {
    if w.len() >= len {
        w[w.len() - len..].to_vec()
    } else {
        let mut out = vec![None; len - w.len()];
        out.extend_from_slice(w);
        out
    }
}

impl DenseAutoencoder {
    /// `encoder_widths` ends in N; `[N]` alone gives the single-layer variant.
    pub fn init<R: Rng + ?Sized>(
        n_contents: usize,
        window: usize,
        encoder_widths: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        if n_contents == 0 || window == 0 {
            return Err(Error::InvalidParameter(
                "content count and window must be positive".into(),
            ));
        }
        if encoder_widths.last() != Some(&n_contents) || encoder_widths.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "encoder widths {encoder_widths:?} must be positive and end in {n_contents}"
            )));
        }
        let flat = window * n_contents;
        let mut input = flat;
        let mut enc = Vec::new();
        for &w in encoder_widths {
            enc.push(DenseLayer::init(w, input, rng));
            input = w;
        }
        let mut dec = Vec::new();
        let mut dec_widths: Vec<usize> = encoder_widths[..encoder_widths.len() - 1]
            .iter()
            .rev()
            .cloned()
            .collect();
        dec_widths.push(flat);
        for w in dec_widths {
            dec.push(DenseLayer::init(w, input, rng));
            input = w;
        }
        Ok(DenseAutoencoder {
            encoder: DenseEncoder {
                window,
                n_contents,
                layers: enc,
            },
            decoder: dec,
        })
    }
}

impl ParamSet for DenseEncoder {
    fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.w, &mut l.b]).collect()
    }
}

impl ParamSet for DenseAutoencoder {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.encoder.tensors();
        v.extend(self.decoder.iter().flat_map(|l| [&l.w, &l.b]));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.encoder.tensors_mut();
        v.extend(self.decoder.iter_mut().flat_map(|l| [&mut l.w, &mut l.b]));
        v
    }
}

impl Autoencoder for DenseAutoencoder {
    type Encoder = DenseEncoder;

    fn encoder(&self) -> DenseEncoder {
        self.encoder.clone()
    }

    fn n_contents(&self) -> usize {
        self.encoder.n_contents
    }

    fn loss_and_gradients<R: Rng + ?Sized>(
        &self,
        windows: &[&[Option<ContentId>]],
        dropout: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<(f64, Self)> {
        let x = self.encoder.flatten(windows)?;
        let layers: Vec<&DenseLayer> = self.encoder.layers.iter().chain(&self.decoder).collect();
        let last = layers.len() - 1;
        let mut caches: Vec<DenseCache> = Vec::with_capacity(layers.len());
        let mut masks: Vec<Tensor> = Vec::with_capacity(last);
        let mut h = x.clone();
        for (l, layer) in layers.iter().enumerate() {
            let act = if l == last {
                Activation::Identity
            } else {
                Activation::Tanh
            };
            let (y, cache) = dense_forward(&h, layer, act)?;
            caches.push(cache);
            h = if l == last {
                y
            } else {
                let (d, m) = dropout_forward(&y, dropout, training, rng)?;
                masks.push(m);
                d
            };
        }

        let count = x.len() as f64;
        let mut loss = 0.0;
        let g: Vec<f64> = h
            .data()
            .iter()
            .zip(x.data())
            .map(|(p, t)| {
                let d = p - t;
                loss += d * d;
                2.0 * d / count
            })
            .collect();
        loss /= count;

        let mut grads = self.zeroed();
        let mut grad_layers: Vec<&mut DenseLayer> = grads
            .encoder
            .layers
            .iter_mut()
            .chain(grads.decoder.iter_mut())
            .collect();
        let mut dy = Tensor::from_vec(h.shape(), g)?;
        for l in (0..layers.len()).rev() {
            if l < last {
                dy.data_mut().iter_mut().zip(masks[l].data()).for_each(|(a, m)| *a *= m);
            }
            dy = dense_backward(&caches[l], layers[l], &dy, grad_layers[l])?;
        }
        drop(grad_layers);
        Ok((loss, grads))
    }

    fn predict(encoder: &DenseEncoder, windows: &[&[Option<ContentId>]]) -> Result<Vec<PopularityVector>> {
        let mut h = encoder.flatten(windows)?;
        for layer in &encoder.layers {
            h = dense_forward(&h, layer, Activation::Tanh)?.0;
        }
        (0..h.rows())
            .map(|b| PopularityVector::from_weights(softmax(h.row(b))))
            .collect()
    }
}
