//! Classifiers used as proxies inside evolution and as testing models afterwards.

mod boost;
mod forest;
mod metrics;
mod mlp;
pub mod nn;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use boost::{fit_boost, BoostModel, BoostParams};
pub use forest::{fit_forest, ForestModel, ForestParams, MaxFeatures};
pub use metrics::balanced_accuracy;
pub use mlp::{fit_mlp, MlpModel, MlpParams};
pub use tree::{fit_regression_tree, fit_tree, DecisionTreeModel, RegressionTreeModel, SplitCriterion, TreeParams};

use crate::matrix::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("expected {expected} labels, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("boosting supports binary labels only")]
    MulticlassUnsupported,
    #[error("truth contains a single class; per-class recall is undefined")]
    SingleClassTruth,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("training data contains non-finite values")]
    NonFiniteInput,
}

pub(crate) fn check_training_set(x: &Matrix, n_labels: usize) -> Result<(), ModelError> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(ModelError::EmptyTrainingSet);
    }
    if x.rows() != n_labels {
        return Err(ModelError::LengthMismatch {
            expected: x.rows(),
            found: n_labels,
        });
    }
    if !x.is_finite() {
        return Err(ModelError::NonFiniteInput);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DecisionTree,
    RandomForest,
    BoostedTrees,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::DecisionTree,
        ModelKind::RandomForest,
        ModelKind::BoostedTrees,
        ModelKind::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::RandomForest => "random_forest",
            ModelKind::BoostedTrees => "boosted_trees",
            ModelKind::Mlp => "mlp",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hyperparameters for every model family.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub decision_tree: TreeParams,
    pub random_forest: ForestParams,
    pub boosted_trees: BoostParams,
    pub mlp: MlpParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Classifier {
    DecisionTree(DecisionTreeModel),
    RandomForest(ForestModel),
    BoostedTrees(BoostModel),
    Mlp(MlpModel),
}

impl Classifier {
    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        match self {
            Classifier::DecisionTree(m) => m.predict(x),
            Classifier::RandomForest(m) => m.predict(x),
            Classifier::BoostedTrees(m) => m.predict(x),
            Classifier::Mlp(m) => m.predict(x),
        }
    }
}

/// Fits the requested model family; `seed` drives every random choice.
pub fn fit_classifier(
    kind: ModelKind,
    settings: &ModelSettings,
    x: &Matrix,
    y: &[usize],
    seed: u64,
) -> Result<Classifier, ModelError> {
    Ok(match kind {
        ModelKind::DecisionTree => Classifier::DecisionTree(fit_tree(x, y, &settings.decision_tree)?),
        ModelKind::RandomForest => {
            let mut rng = crate::seed::rng_from(seed);
            Classifier::RandomForest(fit_forest(x, y, &settings.random_forest, &mut rng)?)
        }
        ModelKind::BoostedTrees => Classifier::BoostedTrees(fit_boost(x, y, &settings.boosted_trees)?),
        ModelKind::Mlp => {
            let params = MlpParams {
                seed: crate::seed::mix(&[settings.mlp.seed, seed]),
                ..settings.mlp
            };
            Classifier::Mlp(fit_mlp(x, y, &params)?)
        }
    })
}
