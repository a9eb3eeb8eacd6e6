//! Dense layers with explicit backward passes, shared by the MLP classifier and
//! the autoencoder baseline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    pub fn apply(self, m: &mut Matrix) {
        if self == Activation::Relu {
            for i in 0..m.rows() {
                for v in m.row_mut(i) {
                    *v = v.max(0.0);
                }
            }
        }
    }

    /// Multiplies `grad` by the derivative evaluated at the pre-activation `pre`.
    pub fn backprop(self, pre: &Matrix, grad: &mut Matrix) {
        if self == Activation::Relu {
            for i in 0..grad.rows() {
                let p = pre.row(i);
                for (g, &z) in grad.row_mut(i).iter_mut().zip(p) {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out x n_in`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        let weights = (0..n_in * n_out).map(|_| rng.random_range(-limit..limit)).collect();
        Self {
            n_in,
            n_out,
            weights,
            bias: vec![0.0; n_out],
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        debug_assert_eq!(x.cols(), self.n_in);
        let mut out = Matrix::zeros(x.rows(), self.n_out);
        for i in 0..x.rows() {
            let xi = x.row(i);
            let oi = out.row_mut(i);
            for (o, dst) in oi.iter_mut().enumerate() {
                let w = &self.weights[o * self.n_in..(o + 1) * self.n_in];
                *dst = self.bias[o] + w.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grad_params` (weights then bias) and
    /// returns the gradient with respect to the input.
    pub fn backward(&self, x: &Matrix, grad_out: &Matrix, grad_params: &mut [f64]) -> Matrix {
        let (gw, gb) = grad_params.split_at_mut(self.weights.len());
        let mut grad_in = Matrix::zeros(x.rows(), self.n_in);
        for i in 0..x.rows() {
            let xi = x.row(i);
            let go = grad_out.row(i);
            let gi = grad_in.row_mut(i);
            for o in 0..self.n_out {
                let g = go[o];
                if g == 0.0 {
                    continue;
                }
                gb[o] += g;
                let w = &self.weights[o * self.n_in..(o + 1) * self.n_in];
                let gwo = &mut gw[o * self.n_in..(o + 1) * self.n_in];
                for k in 0..self.n_in {
                    gwo[k] += g * xi[k];
                    gi[k] += g * w[k];
                }
            }
        }
        grad_in
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.weights);
        out.extend_from_slice(&self.bias);
    }

    /// Reads this layer's parameters from the front of `src`; returns the rest.
    pub fn read_params<'a>(&mut self, src: &'a [f64]) -> &'a [f64] {
        let (w, rest) = src.split_at(self.weights.len());
        let (b, rest) = rest.split_at(self.bias.len());
        self.weights.copy_from_slice(w);
        self.bias.copy_from_slice(b);
        rest
    }

    pub fn step(&mut self, grad: &[f64], lr: f64) {
        let (gw, gb) = grad.split_at(self.weights.len());
        for (w, g) in self.weights.iter_mut().zip(gw) {
            *w -= lr * g;
        }
        for (b, g) in self.bias.iter_mut().zip(gb) {
            *b -= lr * g;
        }
    }
}

/// Mini-batches of a shuffled row order.
pub fn batches(order: &[usize], batch_size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(batch_size.max(1))
}

/// Largest relative disagreement between `analytic` and a central finite
/// difference of `loss` around `params`. Components are compared against
/// `max(|a|, |n|, floor)` so vanishing gradients do not blow up the ratio.
pub fn finite_difference_error(
    loss: impl Fn(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    step: f64,
    floor: f64,
) -> f64 {
    let mut p = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + step;
        let up = loss(&p);
        p[i] = orig - step;
        let down = loss(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let scale = analytic[i].abs().max(numeric.abs()).max(floor);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    worst
}
