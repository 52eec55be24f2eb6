use rand::Rng;

use super::{acc_outer, matmul_nn, matmul_nt, Tensor};
use crate::error::{Error, Result};

/// Gate weights over the concatenation `[y_prev, x]`, each `[hidden, hidden + input]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellWeights {
    pub w_f: Tensor,
    pub w_i: Tensor,
    pub w_c: Tensor,
    pub w_o: Tensor,
    pub b_f: Tensor,
    pub b_i: Tensor,
    pub b_c: Tensor,
    pub b_o: Tensor,
}

pub const GATE_NAMES: [&str; 8] = ["w_f", "w_i", "w_c", "w_o", "b_f", "b_i", "b_c", "b_o"];

impl LstmCellWeights {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        let w = Tensor::zeros(&[hidden, hidden + input]);
        let b = Tensor::zeros(&[hidden]);
        LstmCellWeights {
            w_f: w.clone(),
            w_i: w.clone(),
            w_c: w.clone(),
            w_o: w,
            b_f: b.clone(),
            b_i: b.clone(),
            b_c: b.clone(),
            b_o: b,
        }
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights, zero biases, forget bias 1.
    pub fn init<R: Rng + ?Sized>(hidden: usize, input: usize, rng: &mut R) -> Self {
        let fan_in = hidden + input;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let shape = [hidden, fan_in];
        LstmCellWeights {
            w_f: Tensor::uniform(&shape, bound, rng),
            w_i: Tensor::uniform(&shape, bound, rng),
            w_c: Tensor::uniform(&shape, bound, rng),
            w_o: Tensor::uniform(&shape, bound, rng),
            b_f: Tensor::filled(&[hidden], 1.0),
            b_i: Tensor::zeros(&[hidden]),
            b_c: Tensor::zeros(&[hidden]),
            b_o: Tensor::zeros(&[hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_f.rows()
    }

    pub fn input(&self) -> usize {
        self.w_f.cols() - self.hidden()
    }

    pub fn tensors(&self) -> [&Tensor; 8] {
        [
            &self.w_f, &self.w_i, &self.w_c, &self.w_o, &self.b_f, &self.b_i, &self.b_c, &self.b_o,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.w_f,
            &mut self.w_i,
            &mut self.w_c,
            &mut self.w_o,
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_c,
            &mut self.b_o,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.b_f.len();
        let shape = self.w_f.shape().to_vec();
        if shape.len() != 2 || shape[0] != h || shape[1] <= h {
            return Err(Error::ShapeMismatch {
                expected: vec![h, h + 1],
                actual: shape,
            });
        }
        for w in [&self.w_i, &self.w_c, &self.w_o] {
            w.ensure_shape(&shape)?;
        }
        for b in [&self.b_i, &self.b_c, &self.b_o] {
            b.ensure_shape(&[h])?;
        }
        Ok(())
    }
}

/// Output and memory of a batch of cells, each `[batch, hidden]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub y: Tensor,
    pub c: Tensor,
}

impl LstmState {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        LstmState {
            y: Tensor::zeros(&[batch, hidden]),
            c: Tensor::zeros(&[batch, hidden]),
        }
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct CellCache {
    xcat: Vec<f64>,
    c_prev: Vec<f64>,
    f: Vec<f64>,
    i: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
    batch: usize,
    hidden: usize,
    input: usize,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM step on a batch: `x` is `[batch, input]`.
pub fn lstm_cell_forward(x: &Tensor, prev: &LstmState, w: &LstmCellWeights) -> Result<(LstmState, CellCache)> {
    let (hidden, input) = (w.hidden(), w.input());
    let batch = x.rows();
    x.ensure_shape(&[batch, input])?;
    prev.y.ensure_shape(&[batch, hidden])?;
    prev.c.ensure_shape(&[batch, hidden])?;

    let k = hidden + input;
    let mut xcat = vec![0.0; batch * k];
    for b in 0..batch {
        xcat[b * k..b * k + hidden].copy_from_slice(prev.y.row(b));
        xcat[b * k + hidden..(b + 1) * k].copy_from_slice(x.row(b));
    }
    let pre = |wt: &Tensor, bt: &Tensor| {
        let mut z = vec![0.0; batch * hidden];
        for row in z.chunks_mut(hidden) {
            row.copy_from_slice(bt.data());
        }
        matmul_nt(&xcat, batch, k, wt.data(), hidden, &mut z);
        z
    };
    let f: Vec<f64> = pre(&w.w_f, &w.b_f).into_iter().map(sigmoid).collect();
    let i: Vec<f64> = pre(&w.w_i, &w.b_i).into_iter().map(sigmoid).collect();
    let g: Vec<f64> = pre(&w.w_c, &w.b_c).into_iter().map(f64::tanh).collect();
    let o: Vec<f64> = pre(&w.w_o, &w.b_o).into_iter().map(sigmoid).collect();

    let c_prev = prev.c.data();
    let n = batch * hidden;
    let mut c = vec![0.0; n];
    let mut tanh_c = vec![0.0; n];
    let mut y = vec![0.0; n];
    for j in 0..n {
        c[j] = f[j] * c_prev[j] + i[j] * g[j];
        tanh_c[j] = c[j].tanh();
        y[j] = o[j] * tanh_c[j];
    }
    let state = LstmState {
        y: Tensor::from_vec(&[batch, hidden], y)?,
        c: Tensor::from_vec(&[batch, hidden], c)?,
    };
    let cache = CellCache {
        xcat,
        c_prev: c_prev.to_vec(),
        f,
        i,
        g,
        o,
        tanh_c,
        batch,
        hidden,
        input,
    };
    Ok((state, cache))
}

/// Backward step accumulating weight gradients into `grads`.
/// Returns `(dx, d_prev)` where `d_prev` holds gradients for `y_prev` and `c_prev`.
pub fn lstm_cell_backward_into(
    cache: &CellCache,
    w: &LstmCellWeights,
    dy: &Tensor,
    dc: &Tensor,
    grads: &mut LstmCellWeights,
) -> Result<(Tensor, LstmState)> {
    let (batch, hidden, input) = (cache.batch, cache.hidden, cache.input);
    if w.hidden() != hidden || w.input() != input {
        return Err(Error::ShapeMismatch {
            expected: vec![hidden, hidden + input],
            actual: w.w_f.shape().to_vec(),
        });
    }
    dy.ensure_shape(&[batch, hidden])?;
    dc.ensure_shape(&[batch, hidden])?;
    grads.w_f.ensure_shape(w.w_f.shape())?;

    let n = batch * hidden;
    let (dyd, dcd) = (dy.data(), dc.data());
    let mut dz_f = vec![0.0; n];
    let mut dz_i = vec![0.0; n];
    let mut dz_g = vec![0.0; n];
    let mut dz_o = vec![0.0; n];
    let mut dc_prev = vec![0.0; n];
    for j in 0..n {
        let (f, i, g, o, tc) = (cache.f[j], cache.i[j], cache.g[j], cache.o[j], cache.tanh_c[j]);
        let d_o = dyd[j] * tc;
        let dct = dcd[j] + dyd[j] * o * (1.0 - tc * tc);
        dz_f[j] = dct * cache.c_prev[j] * f * (1.0 - f);
        dz_i[j] = dct * g * i * (1.0 - i);
        dz_g[j] = dct * i * (1.0 - g * g);
        dz_o[j] = d_o * o * (1.0 - o);
        dc_prev[j] = dct * f;
    }

    let k = hidden + input;
    let mut dxcat = vec![0.0; batch * k];
    let gates = [
        (&dz_f, &w.w_f, 0usize),
        (&dz_i, &w.w_i, 1),
        (&dz_g, &w.w_c, 2),
        (&dz_o, &w.w_o, 3),
    ];
    for (dz, wt, gi) in gates {
        let (gw, gb) = match gi {
            0 => (&mut grads.w_f, &mut grads.b_f),
            1 => (&mut grads.w_i, &mut grads.b_i),
            2 => (&mut grads.w_c, &mut grads.b_c),
            _ => (&mut grads.w_o, &mut grads.b_o),
        };
        acc_outer(dz, batch, hidden, &cache.xcat, k, gw.data_mut());
        for row in dz.chunks(hidden) {
            for (b, d) in gb.data_mut().iter_mut().zip(row) {
                *b += d;
            }
        }
        matmul_nn(dz, batch, hidden, wt.data(), k, &mut dxcat);
    }

    let mut dy_prev = vec![0.0; n];
    let mut dx = vec![0.0; batch * input];
    for b in 0..batch {
        dy_prev[b * hidden..(b + 1) * hidden].copy_from_slice(&dxcat[b * k..b * k + hidden]);
        dx[b * input..(b + 1) * input].copy_from_slice(&dxcat[b * k + hidden..(b + 1) * k]);
    }
    Ok((
        Tensor::from_vec(&[batch, input], dx)?,
        LstmState {
            y: Tensor::from_vec(&[batch, hidden], dy_prev)?,
            c: Tensor::from_vec(&[batch, hidden], dc_prev)?,
        },
    ))
}

/// Backward step returning fresh weight gradients.
pub fn lstm_cell_backward(
    cache: &CellCache,
    w: &LstmCellWeights,
    dy: &Tensor,
    dc: &Tensor,
) -> Result<(LstmCellWeights, Tensor, LstmState)> {
    let mut grads = LstmCellWeights::zeros(w.hidden(), w.input());
    let (dx, d_prev) = lstm_cell_backward_into(cache, w, dy, dc, &mut grads)?;
    Ok((grads, dx, d_prev))
}
