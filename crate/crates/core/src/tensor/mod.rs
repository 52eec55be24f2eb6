//! Dense double-precision tensors and the small set of layers the models need.

mod adam;
mod dense;
mod lstm;
mod ops;

pub use adam::{adam_step, clip_global_norm, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use dense::{dense_backward, dense_forward, Activation, DenseCache, DenseLayer};
pub use lstm::{
    lstm_cell_backward, lstm_cell_backward_into, lstm_cell_forward, CellCache, LstmCellWeights, LstmState, GATE_NAMES,
};
pub use ops::{dropout_forward, mse_loss, softmax};

use rand::Rng;

use crate::error::{Error, Result};

/// Row-major tensor. Two-dimensional tensors are `[rows, cols]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::InvalidParameter(format!("zero-sized dimension in {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch {
                expected: shape.to_vec(),
                actual: vec![data.len()],
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Entries drawn uniformly from `[-bound, bound]`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| bound * (2.0 * rng.random::<f64>() - 1.0)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn ensure_shape(&self, expected: &[usize]) -> Result<()> {
        if self.shape != expected {
            return Err(Error::ShapeMismatch {
                expected: expected.to_vec(),
                actual: self.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        other.ensure_shape(&self.shape)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

/// `out[r, h] += sum_k a[r, k] * w[h, k]`.
pub(crate) fn matmul_nt(a: &[f64], rows: usize, k: usize, w: &[f64], out_cols: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), rows * k);
    debug_assert_eq!(w.len(), out_cols * k);
    debug_assert_eq!(out.len(), rows * out_cols);
    for r in 0..rows {
        let ar = &a[r * k..(r + 1) * k];
        let or = &mut out[r * out_cols..(r + 1) * out_cols];
        for (h, o) in or.iter_mut().enumerate() {
            let wr = &w[h * k..(h + 1) * k];
            *o += ar.iter().zip(wr).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `dw[h, k] += sum_r g[r, h] * x[r, k]`.
pub(crate) fn acc_outer(g: &[f64], rows: usize, h_cols: usize, x: &[f64], k: usize, dw: &mut [f64]) {
    for r in 0..rows {
        let xr = &x[r * k..(r + 1) * k];
        for h in 0..h_cols {
            let gv = g[r * h_cols + h];
            if gv == 0.0 {
                continue;
            }
            let dr = &mut dw[h * k..(h + 1) * k];
            for (d, xv) in dr.iter_mut().zip(xr) {
                *d += gv * xv;
            }
        }
    }
}

/// `dx[r, k] += sum_h g[r, h] * w[h, k]`.
pub(crate) fn matmul_nn(g: &[f64], rows: usize, h_cols: usize, w: &[f64], k: usize, dx: &mut [f64]) {
    for r in 0..rows {
        let dr = &mut dx[r * k..(r + 1) * k];
        for h in 0..h_cols {
            let gv = g[r * h_cols + h];
            if gv == 0.0 {
                continue;
            }
            let wr = &w[h * k..(h + 1) * k];
            for (d, wv) in dr.iter_mut().zip(wr) {
                *d += gv * wv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::from_vec(&[0, 3], vec![]).is_err());
    }

    #[test]
    fn kernels_agree_with_naive_products() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let w = [1.0, 0.0, -1.0, 2.0, 1.0, 0.5]; // 2x3
        let mut out = [0.0; 4];
        matmul_nt(&a, 2, 3, &w, 2, &mut out);
        assert_eq!(out, [-2.0, 5.5, -2.0, 16.0]);

        let g = [1.0, 2.0, 3.0, 4.0]; // 2x2
        let mut dw = [0.0; 6];
        acc_outer(&g, 2, 2, &a, 3, &mut dw);
        // dw = g^T a
        assert_eq!(dw, [13.0, 17.0, 21.0, 18.0, 24.0, 30.0]);

        let mut dx = [0.0; 6];
        matmul_nn(&g, 2, 2, &w, 3, &mut dx);
        // dx = g w
        assert_eq!(dx, [5.0, 2.0, 0.0, 11.0, 4.0, -1.0]);
    }
}
