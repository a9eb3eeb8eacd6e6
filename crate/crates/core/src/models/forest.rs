use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree_on_rows, DecisionTreeModel, TreeParams};
use super::{check_training_set, ModelError};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `floor(sqrt(d))`, at least one.
    Sqrt,
    All,
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((d as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::All => d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    pub max_features: MaxFeatures,
}

impl Default for ForestParams {
    /// The proxy configuration: five trees of depth at most five.
    fn default() -> Self {
        Self {
            n_estimators: 5,
            max_depth: Some(5),
            min_samples_split: 2,
            bootstrap: true,
            max_features: MaxFeatures::Sqrt,
        }
    }
}

impl ForestParams {
    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            ..TreeParams::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<DecisionTreeModel>,
    n_classes: usize,
}

impl ForestModel {
    pub fn trees(&self) -> &[DecisionTreeModel] {
        &self.trees
    }

    /// Majority vote; ties go to the lower class id.
    pub fn predict_row(&self, row: &[f64]) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for t in &self.trees {
            votes[t.predict_row(row)] += 1;
        }
        let mut best = 0;
        for (c, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = c;
            }
        }
        best
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }
}

/// Bagged ensemble of CART trees with per-split random feature subsets.
pub fn fit_forest<R: Rng + ?Sized>(
    x: &Matrix,
    y: &[usize],
    params: &ForestParams,
    rng: &mut R,
) -> Result<ForestModel, ModelError> {
    check_training_set(x, y.len())?;
    if params.n_estimators == 0 {
        return Err(ModelError::InvalidParams("n_estimators must be at least 1".into()));
    }
    let tree_params = params.tree_params();
    tree_params.validate()?;
    let n = x.rows();
    let max_features = params.max_features.resolve(x.cols());
    let mut trees = Vec::with_capacity(params.n_estimators);
    for _ in 0..params.n_estimators {
        let mut tree_rng = seed::rng_from(rng.next_u64());
        let rows: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| tree_rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        trees.push(fit_tree_on_rows(
            x,
            y,
            &tree_params,
            rows,
            Some(max_features),
            Some(&mut tree_rng),
        )?);
    }
    Ok(ForestModel {
        trees,
        n_classes: y.iter().max().map_or(1, |m| m + 1),
    })
}
