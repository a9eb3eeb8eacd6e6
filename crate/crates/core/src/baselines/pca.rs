use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// k x d, one unit-norm component per row.
    components: Matrix,
    /// Sample variance (n - 1 denominator) along each component.
    explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn components(&self) -> &Matrix {
        &self.components
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn k(&self) -> usize {
        self.components.rows()
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let k = self.k();
        let mut out = Matrix::zeros(x.rows(), k);
        let mut centered = vec![0.0; x.cols()];
        for (i, row) in x.iter_rows().enumerate() {
            for ((c, v), m) in centered.iter_mut().zip(row).zip(&self.mean) {
                *c = v - m;
            }
            let dst = out.row_mut(i);
            for (c, d) in dst.iter_mut().enumerate() {
                *d = self.components.row(c).iter().zip(&centered).map(|(a, b)| a * b).sum();
            }
        }
        out
    }

    /// Maps component scores back to input space.
    pub fn inverse_transform(&self, scores: &Matrix) -> Matrix {
        let d = self.mean.len();
        let mut out = Matrix::zeros(scores.rows(), d);
        for (i, s) in scores.iter_rows().enumerate() {
            let dst = out.row_mut(i);
            dst.copy_from_slice(&self.mean);
            for (c, &w) in s.iter().enumerate() {
                for (o, v) in dst.iter_mut().zip(self.components.row(c)) {
                    *o += w * v;
                }
            }
        }
        out
    }
}

/// Flips `v` so that its largest-magnitude entry (first on ties) is positive.
fn orient(v: &mut [f64]) {
    let mut pivot = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[pivot].abs() {
            pivot = i;
        }
    }
    if v[pivot] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Extends `basis` with standard-basis directions orthogonalised against it.
fn complete_basis(basis: &mut Vec<Vec<f64>>, d: usize, k: usize) {
    for e in 0..d {
        if basis.len() >= k {
            break;
        }
        let mut v = vec![0.0; d];
        v[e] = 1.0;
        // two passes of Gram-Schmidt keep the result orthogonal to round-off
        for _ in 0..2 {
            for b in basis.iter() {
                let dot: f64 = b.iter().zip(&v).map(|(x, y)| x * y).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= dot * bi;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
}

/// Top-`k` principal components of `x` (rows are samples).
pub fn fit_pca(x: &Matrix, k: usize) -> Result<PcaModel, BaselineError> {
    let (n, d) = (x.rows(), x.cols());
    if k == 0 || k > d {
        return Err(BaselineError::KTooLarge { k, d });
    }
    if n == 0 {
        return Err(BaselineError::EmptyInput);
    }
    if !x.is_finite() {
        return Err(BaselineError::NonFiniteInput);
    }
    let mean: Vec<f64> = (0..d)
        .map(|j| x.iter_rows().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, d, |i, j| x.get(i, j) - mean[j]);
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors were requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let denom = (n.max(2) - 1) as f64;
    let mut basis = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &c in order.iter().take(k) {
        basis.push(v_t.row(c).iter().copied().collect::<Vec<f64>>());
        let s = svd.singular_values[c];
        explained_variance.push(s * s / denom);
    }
    // fewer samples than requested components: pad with zero-variance directions
    complete_basis(&mut basis, d, k);
    explained_variance.resize(k, 0.0);
    for b in basis.iter_mut() {
        orient(b);
    }
    Ok(PcaModel {
        mean,
        components: Matrix::from_rows(&basis),
        explained_variance,
    })
}
