use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::matrix::{Matrix, Standardizer};
use crate::models::nn::{batches, Dense};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeParams {
    pub hidden_units: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for AeParams {
    fn default() -> Self {
        Self {
            hidden_units: 50,
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.01,
        }
    }
}

/// Linear autoencoder `d -> h -> k -> h -> d` on z-scored inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeModel {
    standardizer: Standardizer,
    layers: [Dense; 4],
    /// Full-data reconstruction MSE after each epoch.
    pub loss_history: Vec<f64>,
}

impl AeModel {
    fn init(x: &Matrix, k: usize, params: &AeParams, seed: u64) -> Self {
        let mut rng = seed::rng_from(seed);
        let (d, h) = (x.cols(), params.hidden_units);
        Self {
            standardizer: Standardizer::fit(x),
            layers: [
                Dense::glorot(d, h, &mut rng),
                Dense::glorot(h, k, &mut rng),
                Dense::glorot(k, h, &mut rng),
                Dense::glorot(h, d, &mut rng),
            ],
            loss_history: Vec::new(),
        }
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn k(&self) -> usize {
        self.layers[1].n_out
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            l.write_params(&mut out);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        let mut rest = params;
        for l in &mut self.layers {
            rest = l.read_params(rest);
        }
    }

    fn forward(&self, z: &Matrix) -> Vec<Matrix> {
        let mut acts = vec![z.clone()];
        for l in &self.layers {
            let next = l.forward(acts.last().expect("input is present"));
            acts.push(next);
        }
        acts
    }

    /// Reconstruction MSE (mean over all entries of standardized `z`) and its
    /// gradient with respect to [`AeModel::parameters`].
    pub fn loss_and_gradient(&self, z: &Matrix) -> (f64, Vec<f64>) {
        let acts = self.forward(z);
        let out = &acts[4];
        let count = (z.rows() * z.cols()) as f64;
        let mut grad_out = Matrix::zeros(out.rows(), out.cols());
        let mut loss = 0.0;
        for i in 0..z.rows() {
            let g = grad_out.row_mut(i);
            for (j, (o, t)) in out.row(i).iter().zip(z.row(i)).enumerate() {
                let diff = o - t;
                loss += diff * diff;
                g[j] = 2.0 * diff / count;
            }
        }
        let mut grad = vec![0.0; self.n_params()];
        let mut offsets = Vec::with_capacity(4);
        let mut acc = 0;
        for l in &self.layers {
            offsets.push(acc);
            acc += l.n_params();
        }
        for idx in (0..4).rev() {
            let layer = &self.layers[idx];
            let slice = &mut grad[offsets[idx]..offsets[idx] + layer.n_params()];
            grad_out = layer.backward(&acts[idx], &grad_out, slice);
        }
        (loss / count, grad)
    }

    fn reconstruction_mse(&self, z: &Matrix) -> f64 {
        let acts = self.forward(z);
        let out = &acts[4];
        let count = (z.rows() * z.cols()) as f64;
        out.as_slice()
            .iter()
            .zip(z.as_slice())
            .map(|(o, t)| (o - t) * (o - t))
            .sum::<f64>()
            / count
    }

    /// Code-layer activations (n x k).
    pub fn transform(&self, x: &Matrix) -> Matrix {
        let z = self.standardizer.transform(x);
        self.layers[1].forward(&self.layers[0].forward(&z))
    }

    /// Reconstruction in standardized units.
    pub fn reconstruct_standardized(&self, x: &Matrix) -> Matrix {
        let z = self.standardizer.transform(x);
        self.forward(&z).pop().expect("output is present")
    }
}

pub fn fit_autoencoder(x: &Matrix, k: usize, params: &AeParams, seed: u64) -> Result<AeModel, BaselineError> {
    if k == 0 || params.hidden_units == 0 {
        return Err(BaselineError::ZeroDimension);
    }
    if x.rows() == 0 || x.cols() == 0 {
        return Err(BaselineError::EmptyInput);
    }
    if !x.is_finite() {
        return Err(BaselineError::NonFiniteInput);
    }
    let mut model = AeModel::init(x, k, params, seed);
    let z = model.standardizer.transform(x);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut rng = seed::rng_from(seed::mix(&[seed, 0xae]));
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        for batch in batches(&order, params.batch_size) {
            let zb = z.select_rows(batch);
            let (_, grad) = model.loss_and_gradient(&zb);
            let mut rest = grad.as_slice();
            for l in &mut model.layers {
                let (mine, tail) = rest.split_at(l.n_params());
                l.step(mine, params.learning_rate);
                rest = tail;
            }
        }
        let mse = model.reconstruction_mse(&z);
        if !mse.is_finite() {
            return Err(BaselineError::DivergenceDetected {
                epoch,
                learning_rate: params.learning_rate,
            });
        }
        model.loss_history.push(mse);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::nn::finite_difference_error;
    use rand::Rng;

    /// n x d data lying on a random rank-r subspace.
    fn low_rank(n: usize, d: usize, r: usize, seed: u64) -> Matrix {
        let mut rng = seed::rng_from(seed);
        let basis: Vec<Vec<f64>> = (0..r).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let mut x = Matrix::zeros(n, d);
        for i in 0..n {
            let coef: Vec<f64> = (0..r).map(|_| rng.random_range(-2.0..2.0)).collect();
            for j in 0..d {
                x.set(i, j, (0..r).map(|c| coef[c] * basis[c][j]).sum());
            }
        }
        x
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = low_rank(20, 5, 5, 1);
        let params = AeParams {
            hidden_units: 6,
            epochs: 2,
            batch_size: 8,
            ..AeParams::default()
        };
        let model = fit_autoencoder(&x, 2, &params, 3).unwrap();
        let z = model.standardizer().transform(&x);
        let (_, grad) = model.loss_and_gradient(&z);
        let loss = |p: &[f64]| {
            let mut m = model.clone();
            m.set_parameters(p);
            m.loss_and_gradient(&z).0
        };
        let err = finite_difference_error(loss, &model.parameters(), &grad, 1e-5, 1e-4);
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn loss_is_non_increasing_with_small_steps() {
        let x = low_rank(64, 6, 6, 2);
        let params = AeParams {
            hidden_units: 8,
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.01,
        };
        let m = fit_autoencoder(&x, 3, &params, 4).unwrap();
        for w in m.loss_history.windows(2) {
            assert!(w[1] <= w[0], "{:?}", m.loss_history);
        }
    }

    #[test]
    fn recovers_low_rank_subspace() {
        let x = low_rank(200, 8, 2, 5);
        let params = AeParams {
            hidden_units: 16,
            epochs: 300,
            learning_rate: 0.02,
            ..AeParams::default()
        };
        let m = fit_autoencoder(&x, 2, &params, 6).unwrap();
        let mse = *m.loss_history.last().unwrap();
        // standardized inputs have unit variance per column
        assert!(mse < 0.01, "mse {mse}");
        assert_eq!(m.transform(&x).cols(), 2);
    }

    #[test]
    fn divergence_is_reported() {
        let x = low_rank(64, 6, 6, 7);
        let params = AeParams {
            learning_rate: 1e3,
            ..AeParams::default()
        };
        assert!(matches!(
            fit_autoencoder(&x, 2, &params, 1),
            Err(BaselineError::DivergenceDetected { .. })
        ));
    }

    #[test]
    fn default_architecture_and_determinism() {
        let x = low_rank(50, 4, 4, 8);
        let a = fit_autoencoder(&x, 3, &AeParams::default(), 9).unwrap();
        let b = fit_autoencoder(&x, 3, &AeParams::default(), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.loss_history.len(), 50);
        assert_eq!(a.n_params(), (4 * 50 + 50) + (50 * 3 + 3) + (3 * 50 + 50) + (50 * 4 + 4));
    }
}
