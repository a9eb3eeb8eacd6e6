use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SomParams {
    pub epochs: usize,
    pub initial_learning_rate: f64,
    /// Initial neighbourhood radius as a fraction of the grid length.
    pub initial_radius_fraction: f64,
}

impl Default for SomParams {
    fn default() -> Self {
        Self {
            epochs: 100,
            initial_learning_rate: 0.5,
            initial_radius_fraction: 0.5,
        }
    }
}

/// A k x 1 self-organising map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomModel {
    codebook: Matrix,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn best_matching_unit(codebook: &Matrix, row: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (u, w) in codebook.iter_rows().enumerate() {
        let d = sq_dist(row, w);
        if d < best_d {
            best = u;
            best_d = d;
        }
    }
    best
}

impl SomModel {
    pub fn codebook(&self) -> &Matrix {
        &self.codebook
    }

    pub fn k(&self) -> usize {
        self.codebook.rows()
    }

    pub fn best_matching_unit(&self, row: &[f64]) -> usize {
        best_matching_unit(&self.codebook, row)
    }

    /// Euclidean distance from every sample to every unit (n x k).
    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), self.k());
        for (i, row) in x.iter_rows().enumerate() {
            for (dst, w) in out.row_mut(i).iter_mut().zip(self.codebook.iter_rows()) {
                *dst = sq_dist(row, w).sqrt();
            }
        }
        out
    }
}

/// Online SOM training; `trace` receives the codebook after every epoch.
pub fn fit_som_traced<R: Rng + ?Sized>(
    x: &Matrix,
    k: usize,
    params: &SomParams,
    rng: &mut R,
    mut trace: impl FnMut(usize, &Matrix),
) -> Result<SomModel, BaselineError> {
    if k == 0 {
        return Err(BaselineError::ZeroDimension);
    }
    if x.rows() == 0 {
        return Err(BaselineError::EmptyInput);
    }
    if !x.is_finite() {
        return Err(BaselineError::NonFiniteInput);
    }
    let n = x.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let init: Vec<usize> = (0..k).map(|u| order[u % n]).collect();
    let mut codebook = x.select_rows(&init);

    let radius0 = params.initial_radius_fraction * k as f64;
    for epoch in 0..params.epochs {
        let remaining = 1.0 - epoch as f64 / params.epochs as f64;
        let lr = params.initial_learning_rate * remaining;
        let radius = (radius0 * remaining).max(1e-3);
        let denom = 2.0 * radius * radius;
        order.shuffle(rng);
        for &i in &order {
            let row = x.row(i);
            let bmu = best_matching_unit(&codebook, row);
            for u in 0..k {
                let grid = u as f64 - bmu as f64;
                let h = (-grid * grid / denom).exp();
                let w = codebook.row_mut(u);
                for (wj, xj) in w.iter_mut().zip(row) {
                    *wj += lr * h * (xj - *wj);
                }
            }
        }
        trace(epoch, &codebook);
    }
    Ok(SomModel { codebook })
}

pub fn fit_som<R: Rng + ?Sized>(
    x: &Matrix,
    k: usize,
    params: &SomParams,
    rng: &mut R,
) -> Result<SomModel, BaselineError> {
    fit_som_traced(x, k, params, rng, |_, _| {})
}
