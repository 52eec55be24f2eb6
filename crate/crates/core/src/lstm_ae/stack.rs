use rand::Rng;

use crate::error::{Error, Result};
use crate::model::ParamSet;
use crate::tensor::{
    dropout_forward, lstm_cell_backward_into, lstm_cell_forward, CellCache, LstmCellWeights, LstmState, Tensor,
};

/// A stack of LSTM layers, bottom first.
#[derive(Debug, Clone, PartialEq)]
pub struct StackParams {
    pub layers: Vec<LstmCellWeights>,
}

/// Output sequence of the top encoder layer, one `[batch, width]` per step.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSequence(pub Vec<Tensor>);

/// Per-layer, per-step caches plus the dropout masks applied between layers.
#[derive(Debug, Clone)]
pub struct StackCache {
    cells: Vec<Vec<CellCache>>,
    masks: Vec<Vec<Tensor>>,
}

impl StackParams {
    /// `shapes` lists `(hidden, input)` per layer.
    pub fn zeros(shapes: &[(usize, usize)]) -> Self {
        StackParams {
            layers: shapes.iter().map(|&(h, i)| LstmCellWeights::zeros(h, i)).collect(),
        }
    }

    pub fn init<R: Rng + ?Sized>(shapes: &[(usize, usize)], rng: &mut R) -> Self {
        StackParams {
            layers: shapes.iter().map(|&(h, i)| LstmCellWeights::init(h, i, rng)).collect(),
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.hidden()).collect()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.hidden(), l.input())).collect()
    }

    /// Runs every layer over the whole sequence from zero state. Dropout is
    /// applied to the outputs of all but the top layer.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        inputs: &[Tensor],
        dropout: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<(Vec<Tensor>, StackCache)> {
        if self.layers.is_empty() {
            return Err(Error::Empty("layer stack"));
        }
        if inputs.is_empty() {
            return Err(Error::Empty("input sequence"));
        }
        let batch = inputs[0].rows();
        let mut seq: Vec<Tensor> = inputs.to_vec();
        let mut cells = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        for (l, w) in self.layers.iter().enumerate() {
            let mut state = LstmState::zeros(batch, w.hidden());
            let mut caches = Vec::with_capacity(seq.len());
            let mut out = Vec::with_capacity(seq.len());
            for x in &seq {
                let (next, cache) = lstm_cell_forward(x, &state, w)?;
                out.push(next.y.clone());
                caches.push(cache);
                state = next;
            }
            cells.push(caches);
            if l + 1 < self.layers.len() {
                let mut layer_masks = Vec::with_capacity(out.len());
                for y in out.iter_mut() {
                    let (d, m) = dropout_forward(y, dropout, training, rng)?;
                    *y = d;
                    layer_masks.push(m);
                }
                masks.push(layer_masks);
            }
            seq = out;
        }
        Ok((seq, StackCache { cells, masks }))
    }

    /// Backpropagation through time. `d_out` is the loss gradient for each
    /// step's top-layer output. Weight gradients accumulate into `grads`;
    /// the returned vector holds the gradient for each input step.
    pub fn backward(&self, cache: &StackCache, d_out: Vec<Tensor>, grads: &mut StackParams) -> Result<Vec<Tensor>> {
        if grads.layers.len() != self.layers.len() || cache.cells.len() != self.layers.len() {
            return Err(Error::Mismatch("stack depth differs from cache or gradient".into()));
        }
        let mut d_seq = d_out;
        for l in (0..self.layers.len()).rev() {
            let w = &self.layers[l];
            let steps = &cache.cells[l];
            if d_seq.len() != steps.len() {
                return Err(Error::Mismatch(
                    "gradient sequence length differs from forward pass".into(),
                ));
            }
            let batch = d_seq[0].rows();
            let mut carry = LstmState::zeros(batch, w.hidden());
            let mut d_in = Vec::with_capacity(steps.len());
            for t in (0..steps.len()).rev() {
                let mut dy = d_seq[t].clone();
                dy.add_assign(&carry.y)?;
                let (dx, d_prev) = lstm_cell_backward_into(&steps[t], w, &dy, &carry.c, &mut grads.layers[l])?;
                d_in.push(dx);
                carry = d_prev;
            }
            d_in.reverse();
            if l > 0 {
                for (d, m) in d_in.iter_mut().zip(&cache.masks[l - 1]) {
                    d.data_mut().iter_mut().zip(m.data()).for_each(|(a, b)| *a *= b);
                }
            }
            d_seq = d_in;
        }
        Ok(d_seq)
    }
}

impl ParamSet for StackParams {
    fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.tensors()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }
}

/// Encoder forward pass: input steps to top-layer outputs.
pub fn encode_sequence<R: Rng + ?Sized>(
    encoder: &StackParams,
    inputs: &[Tensor],
    dropout: f64,
    training: bool,
    rng: &mut R,
) -> Result<EncodedSequence> {
    Ok(EncodedSequence(encoder.forward(inputs, dropout, training, rng)?.0))
}

/// Decoder forward pass: encoded steps to reconstructed one-hot steps.
pub fn decode_sequence<R: Rng + ?Sized>(
    decoder: &StackParams,
    encoded: &EncodedSequence,
    dropout: f64,
    training: bool,
    rng: &mut R,
) -> Result<Vec<Tensor>> {
    Ok(decoder.forward(&encoded.0, dropout, training, rng)?.0)
}
