//! First-order gradient boosting on the logistic loss.

use serde::{Deserialize, Serialize};

use super::tree::{fit_regression_tree, RegressionTreeModel, TreeParams};
use super::{check_training_set, ModelError};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_split: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            learning_rate: 0.3,
            max_depth: 6,
            min_samples_split: 2,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(ModelError::InvalidParams("learning_rate must be in (0, 1]".into()));
        }
        if self.max_depth == 0 {
            return Err(ModelError::InvalidParams("max_depth must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    base_score: f64,
    learning_rate: f64,
    trees: Vec<RegressionTreeModel>,
    /// Mean training logistic loss before the first round and after each round.
    pub train_loss: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logistic_loss(scores: &[f64], y: &[usize]) -> f64 {
    // log(1 + e^F) - y F, evaluated stably
    let total: f64 = scores
        .iter()
        .zip(y)
        .map(|(&f, &t)| {
            let softplus = if f > 0.0 { f + (-f).exp().ln_1p() } else { f.exp().ln_1p() };
            softplus - t as f64 * f
        })
        .sum();
    total / scores.len() as f64
}

impl BoostModel {
    pub fn decision_function(&self, row: &[f64]) -> f64 {
        self.base_score
            + self
                .trees
                .iter()
                .map(|t| self.learning_rate * t.predict_row(row))
                .sum::<f64>()
    }

    pub fn predict_proba_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.decision_function(row))
    }

    pub fn predict_row(&self, row: &[f64]) -> usize {
        usize::from(self.predict_proba_row(row) > 0.5)
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

/// Each round fits a least-squares regression tree to the negative gradient
/// `y - p` and adds it to the score with the learning rate.
pub fn fit_boost(x: &Matrix, y: &[usize], params: &BoostParams) -> Result<BoostModel, ModelError> {
    check_training_set(x, y.len())?;
    params.validate()?;
    if y.iter().any(|&c| c > 1) {
        return Err(ModelError::MulticlassUnsupported);
    }
    let n = y.len();
    let positive = y.iter().filter(|&&c| c == 1).count() as f64 / n as f64;
    let prior = positive.clamp(1e-6, 1.0 - 1e-6);
    let base_score = (prior / (1.0 - prior)).ln();
    let tree_params = TreeParams {
        max_depth: Some(params.max_depth),
        min_samples_split: params.min_samples_split,
        ..TreeParams::default()
    };

    let mut scores = vec![base_score; n];
    let mut train_loss = vec![logistic_loss(&scores, y)];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut residual = vec![0.0; n];
    for _ in 0..params.n_rounds {
        for i in 0..n {
            residual[i] = y[i] as f64 - sigmoid(scores[i]);
        }
        let tree = fit_regression_tree(x, &residual, &tree_params)?;
        for (i, row) in x.iter_rows().enumerate() {
            scores[i] += params.learning_rate * tree.predict_row(row);
        }
        train_loss.push(logistic_loss(&scores, y));
        trees.push(tree);
    }
    Ok(BoostModel {
        base_score,
        learning_rate: params.learning_rate,
        trees,
        train_loss,
    })
}
