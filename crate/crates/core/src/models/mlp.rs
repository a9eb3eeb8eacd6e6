//! One-hidden-layer perceptron trained by mini-batch SGD on softmax cross-entropy.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::nn::{batches, Activation, Dense};
use super::{check_training_set, ModelError};
use crate::matrix::{Matrix, Standardizer};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub hidden_units: usize,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden_units: 100,
            activation: Activation::Relu,
            epochs: 200,
            batch_size: 32,
            learning_rate: 0.001,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    standardizer: Standardizer,
    hidden: Dense,
    output: Dense,
    activation: Activation,
}

impl MlpModel {
    fn init(x: &Matrix, n_classes: usize, params: &MlpParams) -> Self {
        let mut rng = seed::rng_from(params.seed);
        Self {
            standardizer: Standardizer::fit(x),
            hidden: Dense::glorot(x.cols(), params.hidden_units, &mut rng),
            output: Dense::glorot(params.hidden_units, n_classes, &mut rng),
            activation: params.activation,
        }
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn n_params(&self) -> usize {
        self.hidden.n_params() + self.output.n_params()
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        self.hidden.write_params(&mut out);
        self.output.write_params(&mut out);
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.n_params());
        let rest = self.hidden.read_params(params);
        self.output.read_params(rest);
    }

    /// Class scores before softmax, for already standardized inputs.
    fn logits(&self, z: &Matrix) -> (Matrix, Matrix, Matrix) {
        let pre = self.hidden.forward(z);
        let mut act = pre.clone();
        self.activation.apply(&mut act);
        let logits = self.output.forward(&act);
        (pre, act, logits)
    }

    /// Mean cross-entropy over the rows of `z` (standardized inputs) and its
    /// gradient with respect to [`MlpModel::parameters`].
    pub fn loss_and_gradient(&self, z: &Matrix, y: &[usize]) -> (f64, Vec<f64>) {
        let n = z.rows() as f64;
        let (pre, act, logits) = self.logits(z);
        let mut grad_logits = Matrix::zeros(logits.rows(), logits.cols());
        let mut loss = 0.0;
        for i in 0..logits.rows() {
            let l = logits.row(i);
            let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = l.iter().map(|v| (v - m).exp()).sum();
            let log_norm = m + sum.ln();
            loss -= l[y[i]] - log_norm;
            let g = grad_logits.row_mut(i);
            for (k, gk) in g.iter_mut().enumerate() {
                let p = (l[k] - log_norm).exp();
                *gk = (p - f64::from(u8::from(k == y[i]))) / n;
            }
        }
        let mut grad = vec![0.0; self.n_params()];
        let (gh, go) = grad.split_at_mut(self.hidden.n_params());
        let mut grad_act = self.output.backward(&act, &grad_logits, go);
        self.activation.backprop(&pre, &mut grad_act);
        self.hidden.backward(z, &grad_act, gh);
        (loss / n, grad)
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        let z = self.standardizer.transform(x);
        let (_, _, logits) = self.logits(&z);
        logits
            .iter_rows()
            .map(|l| {
                let mut best = 0;
                for k in 1..l.len() {
                    if l[k] > l[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

pub fn fit_mlp(x: &Matrix, y: &[usize], params: &MlpParams) -> Result<MlpModel, ModelError> {
    check_training_set(x, y.len())?;
    if params.hidden_units == 0 {
        return Err(ModelError::InvalidParams("hidden_units must be at least 1".into()));
    }
    let n_classes = y.iter().max().map_or(2, |m| (m + 1).max(2));
    let mut model = MlpModel::init(x, n_classes, params);
    let z = model.standardizer.transform(x);
    let mut rng = seed::rng_from(seed::mix(&[params.seed, 0x5eed]));
    let mut order: Vec<usize> = (0..x.rows()).collect();
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for batch in batches(&order, params.batch_size) {
            let zb = z.select_rows(batch);
            let yb: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
            let (_, grad) = model.loss_and_gradient(&zb, &yb);
            let (gh, go) = grad.split_at(model.hidden.n_params());
            model.hidden.step(gh, params.learning_rate);
            model.output.step(go, params.learning_rate);
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::balanced_accuracy;

    #[test]
    fn zero_epochs_is_deterministic() {
        let x = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0], [2.0, 2.0], [3.0, 1.0]]);
        let y = [0, 1, 0, 1];
        let params = MlpParams {
            epochs: 0,
            seed: 4,
            ..MlpParams::default()
        };
        let a = fit_mlp(&x, &y, &params).unwrap();
        let b = fit_mlp(&x, &y, &params).unwrap();
        assert_eq!(a, b);
        let c = fit_mlp(&x, &y, &MlpParams { seed: 5, ..params }).unwrap();
        assert_ne!(a.parameters(), c.parameters());
    }

    #[test]
    fn learns_xor() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]);
        let y = [0, 1, 1, 0];
        let params = MlpParams {
            hidden_units: 16,
            epochs: 2000,
            batch_size: 4,
            learning_rate: 0.1,
            seed: 1,
            ..MlpParams::default()
        };
        let m = fit_mlp(&x, &y, &params).unwrap();
        assert_eq!(balanced_accuracy(&y, &m.predict(&x)).unwrap(), 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let x = Matrix::from_rows(&[[0.0, 0.3], [0.4, 1.0], [1.0, 0.1], [1.2, 1.1], [0.5, 0.5]]);
        let y = [0, 1, 1, 0, 1];
        let params = MlpParams {
            epochs: 5,
            batch_size: 2,
            ..MlpParams::default()
        };
        assert_eq!(fit_mlp(&x, &y, &params).unwrap(), fit_mlp(&x, &y, &params).unwrap());
    }

    #[test]
    fn zero_hidden_units_rejected() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]);
        let params = MlpParams {
            hidden_units: 0,
            ..MlpParams::default()
        };
        assert!(fit_mlp(&x, &[0, 1], &params).is_err());
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = crate::seed::rng_from(11);
        let x = Matrix::from_vec(
            12,
            4,
            (0..48).map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0)).collect(),
        );
        let y: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let params = MlpParams {
            hidden_units: 7,
            epochs: 3,
            batch_size: 4,
            learning_rate: 0.05,
            seed: 2,
            ..MlpParams::default()
        };
        let model = fit_mlp(&x, &y, &params).unwrap();
        let z = model.standardizer().transform(&x);
        let (_, grad) = model.loss_and_gradient(&z, &y);
        let loss = |p: &[f64]| {
            let mut m = model.clone();
            m.set_parameters(p);
            m.loss_and_gradient(&z, &y).0
        };
        let err = crate::models::nn::finite_difference_error(loss, &model.parameters(), &grad, 1e-6, 1e-4);
        assert!(err < 1e-4, "relative error {err}");
    }
}
