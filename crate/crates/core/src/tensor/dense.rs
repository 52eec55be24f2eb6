use rand::Rng;

use super::{acc_outer, matmul_nn, matmul_nt, Tensor};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

/// Fully connected layer `y = act(x W^T + b)` with `W` of shape `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: Tensor,
    pub b: Tensor,
}

impl DenseLayer {
    pub fn zeros(out: usize, input: usize) -> Self {
        DenseLayer {
            w: Tensor::zeros(&[out, input]),
            b: Tensor::zeros(&[out]),
        }
    }

    pub fn init<R: Rng + ?Sized>(out: usize, input: usize, rng: &mut R) -> Self {
        DenseLayer {
            w: Tensor::uniform(&[out, input], 1.0 / (input as f64).sqrt(), rng),
            b: Tensor::zeros(&[out]),
        }
    }

    pub fn out_width(&self) -> usize {
        self.w.rows()
    }

    pub fn in_width(&self) -> usize {
        self.w.cols()
    }
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    x: Tensor,
    y: Tensor,
    act: Activation,
}

pub fn dense_forward(x: &Tensor, layer: &DenseLayer, act: Activation) -> Result<(Tensor, DenseCache)> {
    let (out, input) = (layer.out_width(), layer.in_width());
    let batch = x.rows();
    x.ensure_shape(&[batch, input])?;
    let mut z = vec![0.0; batch * out];
    for row in z.chunks_mut(out) {
        row.copy_from_slice(layer.b.data());
    }
    matmul_nt(x.data(), batch, input, layer.w.data(), out, &mut z);
    if act == Activation::Tanh {
        z.iter_mut().for_each(|v| *v = v.tanh());
    }
    let y = Tensor::from_vec(&[batch, out], z)?;
    Ok((y.clone(), DenseCache { x: x.clone(), y, act }))
}

/// Accumulates parameter gradients into `grads` and returns `dx`.
pub fn dense_backward(cache: &DenseCache, layer: &DenseLayer, dy: &Tensor, grads: &mut DenseLayer) -> Result<Tensor> {
    let (out, input) = (layer.out_width(), layer.in_width());
    let batch = cache.x.rows();
    dy.ensure_shape(&[batch, out])?;
    let dz: Vec<f64> = match cache.act {
        Activation::Tanh => dy
            .data()
            .iter()
            .zip(cache.y.data())
            .map(|(d, y)| d * (1.0 - y * y))
            .collect(),
        Activation::Identity => dy.data().to_vec(),
    };
    acc_outer(&dz, batch, out, cache.x.data(), input, grads.w.data_mut());
    for row in dz.chunks(out) {
        for (b, d) in grads.b.data_mut().iter_mut().zip(row) {
            *b += d;
        }
    }
    let mut dx = vec![0.0; batch * input];
    matmul_nn(&dz, batch, out, layer.w.data(), input, &mut dx);
    Tensor::from_vec(&[batch, input], dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn dense_gradients_match_finite_differences() {
        let mut rng = stream(31, Stream::Init);
        for act in [Activation::Tanh, Activation::Identity] {
            let mut layer = DenseLayer::init(3, 4, &mut rng);
            let x = Tensor::uniform(&[2, 4], 1.0, &mut rng);
            let r = Tensor::uniform(&[2, 3], 1.0, &mut rng);
            let obj = |l: &DenseLayer| {
                let (y, _) = dense_forward(&x, l, act).unwrap();
                y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum::<f64>()
            };
            let (_, cache) = dense_forward(&x, &layer, act).unwrap();
            let mut g = DenseLayer::zeros(3, 4);
            dense_backward(&cache, &layer, &r, &mut g).unwrap();
            for j in 0..layer.w.len() {
                let o = layer.w.data()[j];
                layer.w.data_mut()[j] = o + 1e-5;
                let up = obj(&layer);
                layer.w.data_mut()[j] = o - 1e-5;
                let dn = obj(&layer);
                layer.w.data_mut()[j] = o;
                let fd = (up - dn) / 2e-5;
                assert!((fd - g.w.data()[j]).abs() / (fd.abs() + g.w.data()[j].abs()).max(1e-8) < 1e-4);
            }
        }
    }
}
