//! Greedy CART trees: Gini classification trees and squared-error regression
//! trees share one builder.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_training_set, ModelError};
use crate::matrix::Matrix;

/// Two candidate costs closer than this are treated as equal; the earlier
/// (lower feature index, lower threshold) split wins.
const COST_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    #[default]
    Gini,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub criterion: SplitCriterion,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
            criterion: SplitCriterion::Gini,
        }
    }
}

impl TreeParams {
    pub fn with_max_depth(depth: usize) -> Self {
        Self {
            max_depth: Some(depth),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.max_depth == Some(0) {
            return Err(ModelError::InvalidParams("max_depth must be at least 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(ModelError::InvalidParams("min_samples_split must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) enum Node<L> {
    Leaf(L),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Tree<L> {
    nodes: Vec<Node<L>>,
}

impl<L> Tree<L> {
    pub(crate) fn leaf_for(&self, row: &[f64]) -> &L {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub(crate) fn depth(&self) -> usize {
        fn walk<L>(nodes: &[Node<L>], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub(crate) fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

/// What a node is fitted to: class counts or sums of a real target.
pub(crate) trait Target {
    type Acc: Clone;
    type Leaf;
    fn empty(&self) -> Self::Acc;
    fn push(&self, acc: &mut Self::Acc, i: usize);
    fn pop(&self, acc: &mut Self::Acc, i: usize);
    /// Node size times impurity (Gini) or the sum of squared errors.
    fn cost(&self, acc: &Self::Acc, n: usize) -> f64;
    fn leaf(&self, acc: &Self::Acc, n: usize) -> Self::Leaf;
}

pub(crate) struct ClassTarget<'a> {
    pub y: &'a [usize],
    pub n_classes: usize,
}

impl Target for ClassTarget<'_> {
    type Acc = Vec<usize>;
    type Leaf = usize;

    fn empty(&self) -> Vec<usize> {
        vec![0; self.n_classes]
    }
    fn push(&self, acc: &mut Vec<usize>, i: usize) {
        acc[self.y[i]] += 1;
    }
    fn pop(&self, acc: &mut Vec<usize>, i: usize) {
        acc[self.y[i]] -= 1;
    }
    fn cost(&self, acc: &Vec<usize>, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let sq: f64 = acc.iter().map(|&c| (c * c) as f64).sum();
        n as f64 - sq / n as f64
    }
    fn leaf(&self, acc: &Vec<usize>, _n: usize) -> usize {
        // max_by_key keeps the last maximum; iterate in reverse so ties go to the lowest class
        acc.iter()
            .enumerate()
            .rev()
            .max_by_key(|&(_, c)| *c)
            .map_or(0, |(k, _)| k)
    }
}

pub(crate) struct RegressionTarget<'a> {
    pub y: &'a [f64],
}

impl Target for RegressionTarget<'_> {
    /// (sum, sum of squares)
    type Acc = (f64, f64);
    type Leaf = f64;

    fn empty(&self) -> (f64, f64) {
        (0.0, 0.0)
    }
    fn push(&self, acc: &mut (f64, f64), i: usize) {
        acc.0 += self.y[i];
        acc.1 += self.y[i] * self.y[i];
    }
    fn pop(&self, acc: &mut (f64, f64), i: usize) {
        acc.0 -= self.y[i];
        acc.1 -= self.y[i] * self.y[i];
    }
    fn cost(&self, acc: &(f64, f64), n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        (acc.1 - acc.0 * acc.0 / n as f64).max(0.0)
    }
    fn leaf(&self, acc: &(f64, f64), n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            acc.0 / n as f64
        }
    }
}

pub(crate) struct Builder<'a, T: Target, R> {
    pub x: &'a Matrix,
    pub target: T,
    pub params: TreeParams,
    /// Per-node random feature subset size; `None` evaluates every feature.
    pub max_features: Option<usize>,
    pub rng: Option<&'a mut R>,
}

struct Best {
    cost: f64,
    feature: usize,
    threshold: f64,
    n_left: usize,
}

impl<T: Target, R: Rng> Builder<'_, T, R> {
    pub(crate) fn build(mut self, rows: Vec<usize>) -> Tree<T::Leaf> {
        let mut nodes = Vec::new();
        self.grow(rows, 0, &mut nodes);
        Tree { nodes }
    }

    fn grow(&mut self, mut rows: Vec<usize>, depth: usize, nodes: &mut Vec<Node<T::Leaf>>) -> usize {
        let n = rows.len();
        let mut acc = self.target.empty();
        for &i in &rows {
            self.target.push(&mut acc, i);
        }
        let cost = self.target.cost(&acc, n);
        let at = nodes.len();
        nodes.push(Node::Leaf(self.target.leaf(&acc, n)));

        let depth_ok = self.params.max_depth.is_none_or(|m| depth < m);
        if !depth_ok || n < self.params.min_samples_split || cost <= COST_TOLERANCE * n as f64 {
            return at;
        }
        let Some(best) = self.best_split(&mut rows, &acc) else {
            return at;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.x.get(i, best.feature) <= best.threshold);
        debug_assert_eq!(left_rows.len(), best.n_left);
        let left = self.grow(left_rows, depth + 1, nodes);
        let right = self.grow(right_rows, depth + 1, nodes);
        nodes[at] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        at
    }

    fn candidate_features(&mut self, rows: &[usize]) -> Vec<usize> {
        let d = self.x.cols();
        let non_constant = |f: usize| {
            let first = self.x.get(rows[0], f);
            rows.iter().any(|&i| self.x.get(i, f) != first)
        };
        match (self.max_features, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < d => {
                // Draw features in random order until `m` usable ones are found
                // (constant features are inspected but do not count).
                let mut order: Vec<usize> = (0..d).collect();
                order.shuffle(rng);
                let mut chosen: Vec<usize> = order.into_iter().filter(|&f| non_constant(f)).take(m).collect();
                chosen.sort_unstable();
                chosen
            }
            _ => (0..d).filter(|&f| non_constant(f)).collect(),
        }
    }

    fn best_split(&mut self, rows: &mut [usize], total: &T::Acc) -> Option<Best> {
        let n = rows.len();
        let mut best: Option<Best> = None;
        for f in self.candidate_features(rows) {
            let x = self.x;
            rows.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)).then(a.cmp(&b)));
            let mut left = self.target.empty();
            let mut right = total.clone();
            for pos in 0..n - 1 {
                let i = rows[pos];
                self.target.push(&mut left, i);
                self.target.pop(&mut right, i);
                let (lo, hi) = (x.get(i, f), x.get(rows[pos + 1], f));
                if lo == hi {
                    continue;
                }
                let n_left = pos + 1;
                let cost = self.target.cost(&left, n_left) + self.target.cost(&right, n - n_left);
                if best.as_ref().is_none_or(|b| cost < b.cost - COST_TOLERANCE) {
                    let mut threshold = lo / 2.0 + hi / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(Best {
                        cost,
                        feature: f,
                        threshold,
                        n_left,
                    });
                }
            }
        }
        best
    }
}

/// Gini classification tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTreeModel {
    tree: Tree<usize>,
    n_features: usize,
}

impl DecisionTreeModel {
    pub fn predict_row(&self, row: &[f64]) -> usize {
        *self.tree.leaf_for(row)
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }

    /// Number of split levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.tree.depth()
    }

    pub fn n_leaves(&self) -> usize {
        self.tree.n_leaves()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }
}

/// Fits a CART classification tree on all rows, evaluating every feature.
pub fn fit_tree(x: &Matrix, y: &[usize], params: &TreeParams) -> Result<DecisionTreeModel, ModelError> {
    fit_tree_on_rows::<rand_chacha::ChaCha8Rng>(x, y, params, (0..x.rows()).collect(), None, None)
}

pub(crate) fn fit_tree_on_rows<R: Rng>(
    x: &Matrix,
    y: &[usize],
    params: &TreeParams,
    rows: Vec<usize>,
    max_features: Option<usize>,
    rng: Option<&mut R>,
) -> Result<DecisionTreeModel, ModelError> {
    check_training_set(x, y.len())?;
    params.validate()?;
    let n_classes = y.iter().max().map_or(1, |m| m + 1);
    let tree = Builder {
        x,
        target: ClassTarget { y, n_classes },
        params: *params,
        max_features,
        rng,
    }
    .build(rows);
    Ok(DecisionTreeModel {
        tree,
        n_features: x.cols(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTreeModel {
    tree: Tree<f64>,
}

impl RegressionTreeModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        *self.tree.leaf_for(row)
    }

    pub fn depth(&self) -> usize {
        self.tree.depth()
    }
}

/// Least-squares regression tree.
pub fn fit_regression_tree(x: &Matrix, y: &[f64], params: &TreeParams) -> Result<RegressionTreeModel, ModelError> {
    check_training_set(x, y.len())?;
    params.validate()?;
    let tree = Builder::<_, rand_chacha::ChaCha8Rng> {
        x,
        target: RegressionTarget { y },
        params: *params,
        max_features: None,
        rng: None,
    }
    .build((0..x.rows()).collect());
    Ok(RegressionTreeModel { tree })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_interaction;
    use crate::models::balanced_accuracy;

    #[test]
    fn single_class_gives_root_leaf() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0]]);
        let m = fit_tree(&x, &[1, 1, 1], &TreeParams::default()).unwrap();
        assert_eq!(m.depth(), 0);
        assert_eq!(m.predict(&Matrix::from_rows(&[[-100.0], [100.0]])), vec![1, 1]);
    }

    #[test]
    fn one_split_separates_sign() {
        let x = Matrix::from_rows(&[[-3.0], [-1.0], [-0.5], [0.0], [0.5], [2.0]]);
        let y = [0, 0, 0, 1, 1, 1];
        let m = fit_tree(&x, &y, &TreeParams::default()).unwrap();
        assert_eq!(m.depth(), 1);
        assert_eq!(m.predict(&x), y);
        // midpoint threshold between -0.5 and 0
        assert_eq!(m.predict_row(&[-0.25]), 0);
        assert_eq!(m.predict_row(&[-0.24]), 1);
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // Both columns separate the classes identically.
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]);
        let y = [0, 0, 1, 1];
        let m = fit_tree(&x, &y, &TreeParams::default()).unwrap();
        match &m.tree.nodes[0] {
            Node::Split { feature, threshold, .. } => assert_eq!((*feature, *threshold), (0, 1.5)),
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn zero_gain_splits_still_happen() {
        // XOR: no single split lowers Gini, yet depth-2 separates perfectly.
        let x = Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]);
        let y = [0, 1, 1, 0];
        let m = fit_tree(&x, &y, &TreeParams::default()).unwrap();
        assert_eq!(m.predict(&x), y);
    }

    #[test]
    fn max_depth_and_min_samples_respected() {
        let ds = synth_interaction(300, 0.0, 1);
        for depth in 1..5 {
            let m = fit_tree(&ds.features, &ds.labels, &TreeParams::with_max_depth(depth)).unwrap();
            assert!(m.depth() <= depth);
        }
        let params = TreeParams {
            min_samples_split: 400,
            ..TreeParams::default()
        };
        assert_eq!(fit_tree(&ds.features, &ds.labels, &params).unwrap().depth(), 0);
        assert!(TreeParams::with_max_depth(0).validate().is_err());
    }

    #[test]
    fn interaction_is_hard_for_shallow_trees() {
        let train = synth_interaction(600, 0.0, 2);
        let test = synth_interaction(600, 0.0, 3);
        let m = fit_tree(&train.features, &train.labels, &TreeParams::with_max_depth(5)).unwrap();
        let ba = balanced_accuracy(&test.labels, &m.predict(&test.features)).unwrap();
        assert!(ba > 0.5 && ba < 1.0, "balanced accuracy {ba}");
    }

    #[test]
    fn stump_on_raw_vs_product_feature() {
        let ds = synth_interaction(1000, 0.0, 4);
        let stump = TreeParams::with_max_depth(1);
        let m = fit_tree(&ds.features, &ds.labels, &stump).unwrap();
        let raw = balanced_accuracy(&ds.labels, &m.predict(&ds.features)).unwrap();
        assert!(raw <= 0.6, "raw stump {raw}");

        let product: Vec<f64> = ds.features.iter_rows().map(|r| r[0] * r[1]).collect();
        let px = Matrix::from_vec(product.len(), 1, product);
        let m = fit_tree(&px, &ds.labels, &stump).unwrap();
        let constructed = balanced_accuracy(&ds.labels, &m.predict(&px)).unwrap();
        assert!(constructed >= 0.95, "product stump {constructed}");
    }

    #[test]
    fn positive_scaling_metamorphic() {
        let ds = synth_interaction(200, 0.1, 5);
        let mut scaled = ds.features.clone();
        for i in 0..scaled.rows() {
            let v = scaled.get(i, 2) * 8.0;
            scaled.set(i, 2, v);
        }
        let a = fit_tree(&ds.features, &ds.labels, &TreeParams::default()).unwrap();
        let b = fit_tree(&scaled, &ds.labels, &TreeParams::default()).unwrap();
        assert_eq!(a.predict(&ds.features), b.predict(&scaled));
    }

    #[test]
    fn regression_tree_fits_steps() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]);
        let y = [1.0, 1.0, 5.0, 5.0];
        let m = fit_regression_tree(&x, &y, &TreeParams::default()).unwrap();
        assert_eq!(m.depth(), 1);
        assert_eq!(m.predict_row(&[0.2]), 1.0);
        assert_eq!(m.predict_row(&[2.7]), 5.0);
    }

    #[test]
    fn empty_training_set() {
        let x = Matrix::zeros(0, 2);
        assert!(matches!(fit_tree(&x, &[], &TreeParams::default()), Err(ModelError::EmptyTrainingSet)));
    }
}
