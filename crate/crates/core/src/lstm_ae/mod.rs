//! Stacked LSTM auto-encoder over one-hot request sequences.
//!
//! The encoder is a stack of LSTM layers whose top layer has one unit per
//! content; the decoder mirrors the hidden widths and ends in a width-N
//! layer that reconstructs the input. Softmax over the encoder's last-step
//! output is the popularity prediction; it is applied only at that
//! interface and never inside the network.

mod stack;

pub use stack::{decode_sequence, encode_sequence, EncodedSequence, StackCache, StackParams};

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{one_hot_steps, Autoencoder, ParamSet};
use crate::popdyn::{ContentId, PopularityVector};
use crate::tensor::{dropout_forward, softmax, AdamState, Tensor, GATE_NAMES};

/// Layer widths of the auto-encoder. The last encoder width equals the
/// content count; the decoder mirrors the encoder's hidden widths and ends
/// in a width-N output layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    input_width: usize,
    encoder_widths: Vec<usize>,
}

impl LayerSpec {
    pub fn new(input_width: usize, encoder_widths: Vec<usize>) -> Result<Self> {
        if input_width == 0 {
            return Err(Error::InvalidParameter("input width must be positive".into()));
        }
        if encoder_widths.is_empty() || encoder_widths.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "bad encoder widths {encoder_widths:?}"
            )));
        }
        if *encoder_widths.last().unwrap() != input_width {
            return Err(Error::InvalidParameter(format!(
                "top encoder width {} must equal the content count {input_width}",
                encoder_widths.last().unwrap()
            )));
        }
        Ok(LayerSpec {
            input_width,
            encoder_widths,
        })
    }

    /// Encoder widths `[128, 64, N]`.
    pub fn default_for(n_contents: usize) -> Result<Self> {
        Self::new(n_contents, vec![128, 64, n_contents])
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn encoder_widths(&self) -> &[usize] {
        &self.encoder_widths
    }

    pub fn decoder_widths(&self) -> Vec<usize> {
        let l = self.encoder_widths.len();
        let mut w: Vec<usize> = self.encoder_widths[..l - 1].iter().rev().cloned().collect();
        w.push(self.input_width);
        w
    }

    fn encoder_shapes(&self) -> Vec<(usize, usize)> {
        let mut input = self.input_width;
        self.encoder_widths
            .iter()
            .map(|&h| {
                let s = (h, input);
                input = h;
                s
            })
            .collect()
    }

    fn decoder_shapes(&self) -> Vec<(usize, usize)> {
        let mut input = *self.encoder_widths.last().unwrap();
        self.decoder_widths()
            .into_iter()
            .map(|h| {
                let s = (h, input);
                input = h;
                s
            })
            .collect()
    }
}

/// Encoder and decoder weights of one auto-encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub encoder: StackParams,
    pub decoder: StackParams,
}

impl ModelParams {
    pub fn zeros(spec: &LayerSpec) -> Self {
        ModelParams {
            encoder: StackParams::zeros(&spec.encoder_shapes()),
            decoder: StackParams::zeros(&spec.decoder_shapes()),
        }
    }

    pub fn init<R: Rng + ?Sized>(spec: &LayerSpec, rng: &mut R) -> Self {
        ModelParams {
            encoder: StackParams::init(&spec.encoder_shapes(), rng),
            decoder: StackParams::init(&spec.decoder_shapes(), rng),
        }
    }

    /// Recovers the layer spec from the weight shapes.
    pub fn layer_spec(&self) -> Result<LayerSpec> {
        let widths = self.encoder.widths();
        let input = self
            .encoder
            .layers
            .first()
            .ok_or(Error::Empty("encoder layers"))?
            .input();
        let spec = LayerSpec::new(input, widths)?;
        if self.decoder.shapes() != spec.decoder_shapes() || self.encoder.shapes() != spec.encoder_shapes() {
            return Err(Error::InvalidParameter("decoder does not mirror the encoder".into()));
        }
        Ok(spec)
    }

    pub fn named_tensors(&self) -> Vec<(String, &crate::tensor::Tensor)> {
        let mut out = Vec::new();
        for (part, stack) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (l, layer) in stack.layers.iter().enumerate() {
                for (name, t) in GATE_NAMES.iter().zip(layer.tensors()) {
                    out.push((format!("{part}.{l}.{name}"), t));
                }
            }
        }
        out
    }

    /// Full forward pass used in training: encode, drop out the code, decode.
    pub fn reconstruct<R: Rng + ?Sized>(
        &self,
        inputs: &[Tensor],
        dropout: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Vec<Tensor>> {
        let encoded = encode_sequence(&self.encoder, inputs, dropout, training, rng)?;
        let code = drop_code(encoded, dropout, training, rng)?.0;
        decode_sequence(&self.decoder, &code, dropout, training, rng)
    }

    /// Mini-batch reconstruction loss (mean squared error over every
    /// element of every step) and its exact gradient by BPTT.
    pub fn loss_and_gradients_steps<R: Rng + ?Sized>(
        &self,
        inputs: &[Tensor],
        dropout: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<(f64, ModelParams)> {
        if inputs.is_empty() {
            return Err(Error::Empty("input sequence"));
        }
        let (enc_out, enc_cache) = self.encoder.forward(inputs, dropout, training, rng)?;
        let (code, masks) = drop_code(EncodedSequence(enc_out), dropout, training, rng)?;
        let (dec_out, dec_cache) = self.decoder.forward(&code.0, dropout, training, rng)?;

        let count = (inputs.len() * inputs[0].len()) as f64;
        let mut loss = 0.0;
        let mut d_out = Vec::with_capacity(dec_out.len());
        for (pred, target) in dec_out.iter().zip(inputs) {
            target.ensure_shape(pred.shape())?;
            let g: Vec<f64> = pred
                .data()
                .iter()
                .zip(target.data())
                .map(|(p, t)| {
                    let d = p - t;
                    loss += d * d;
                    2.0 * d / count
                })
                .collect();
            d_out.push(Tensor::from_vec(pred.shape(), g)?);
        }
        loss /= count;

        let mut grads = self.zeroed();
        let d_code = self.decoder.backward(&dec_cache, d_out, &mut grads.decoder)?;
        let d_enc: Vec<Tensor> = d_code
            .into_iter()
            .zip(&masks)
            .map(|(d, m)| {
                let v = d.data().iter().zip(m.data()).map(|(a, b)| a * b).collect();
                Tensor::from_vec(d.shape(), v)
            })
            .collect::<Result<_>>()?;
        self.encoder.backward(&enc_cache, d_enc, &mut grads.encoder)?;
        Ok((loss, grads))
    }
}

fn drop_code<R: Rng + ?Sized>(
    encoded: EncodedSequence,
    dropout: f64,
    training: bool,
    rng: &mut R,
) -> Result<(EncodedSequence, Vec<Tensor>)> {
    let mut out = Vec::with_capacity(encoded.0.len());
    let mut masks = Vec::with_capacity(encoded.0.len());
    for z in &encoded.0 {
        let (y, m) = dropout_forward(z, dropout, training, rng)?;
        out.push(y);
        masks.push(m);
    }
    Ok((EncodedSequence(out), masks))
}

impl ParamSet for ModelParams {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.encoder.tensors();
        v.extend(self.decoder.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.encoder.tensors_mut();
        v.extend(self.decoder.tensors_mut());
        v
    }
}

impl Autoencoder for ModelParams {
    type Encoder = StackParams;

    fn encoder(&self) -> StackParams {
        self.encoder.clone()
    }

    fn n_contents(&self) -> usize {
        self.encoder.layers.first().map_or(0, |l| l.input())
    }

    fn loss_and_gradients<R: Rng + ?Sized>(
        &self,
        windows: &[&[Option<ContentId>]],
        dropout: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<(f64, Self)> {
        let steps = one_hot_steps(windows, self.n_contents())?;
        self.loss_and_gradients_steps(&steps, dropout, training, rng)
    }

    fn predict(encoder: &StackParams, windows: &[&[Option<ContentId>]]) -> Result<Vec<PopularityVector>> {
        let n = encoder.layers.first().ok_or(Error::Empty("encoder layers"))?.input();
        let steps = one_hot_steps(windows, n)?;
        predict_popularity_batch(encoder, &steps)
    }
}

/// One Adam step on a batch of one-hot sequences; returns the pre-update loss.
pub fn reconstruction_step<R: Rng + ?Sized>(
    params: &mut ModelParams,
    batch: &[Tensor],
    opt: &mut AdamState,
    settings: &crate::model::TrainSettings,
    rng: &mut R,
) -> Result<f64> {
    let (loss, mut grads) = params.loss_and_gradients_steps(batch, settings.dropout, true, rng)?;
    if settings.clip_norm.is_finite() {
        crate::tensor::clip_global_norm(&mut grads.tensors_mut(), settings.clip_norm);
    }
    let g = grads.tensors();
    crate::tensor::adam_step(&mut params.tensors_mut(), &g, opt, settings.lr)?;
    Ok(loss)
}

/// Softmax of the top encoder layer's output at the last step, for each
/// row of the batch.
pub fn predict_popularity_batch(encoder: &StackParams, inputs: &[Tensor]) -> Result<Vec<PopularityVector>> {
    let mut rng = crate::rng::stream(0, crate::rng::Stream::Init);
    let encoded = encode_sequence(encoder, inputs, 0.0, false, &mut rng)?;
    let last = encoded.0.last().ok_or(Error::Empty("input sequence"))?;
    (0..last.rows())
        .map(|b| PopularityVector::from_weights(softmax(last.row(b))))
        .collect()
}

/// Popularity predicted from a single sequence of `[1, N]` inputs.
pub fn predict_popularity(encoder: &StackParams, inputs: &[Tensor]) -> Result<PopularityVector> {
    if inputs.iter().any(|t| t.rows() != 1) {
        return Err(Error::InvalidParameter("expected a single sequence".into()));
    }
    Ok(predict_popularity_batch(encoder, inputs)?.remove(0))
}

#[cfg(test)]
mod tests;
