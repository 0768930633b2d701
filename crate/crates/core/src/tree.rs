//! CART-style decision tree classifier: Gini impurity, binary threshold
//! splits at midpoints between consecutive distinct sorted values, and
//! mean-decrease-in-impurity feature importances. Fully deterministic:
//! every tie has a fixed winner.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Stopping controls. Defaults grow the tree until purity or until no
/// candidate split exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default = "default_min_samples_leaf")]
    pub min_samples_leaf: usize,
    #[serde(default)]
    pub min_impurity_decrease: f64,
}

fn default_min_samples_leaf() -> usize {
    1
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: None, min_samples_leaf: 1, min_impurity_decrease: 0.0 }
    }
}

impl TreeParams {
    fn validate(&self) -> Result<()> {
        if self.max_depth == Some(0) {
            return Err(Error::InvalidParameter("max_depth must be >= 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidParameter("min_samples_leaf must be >= 1".into()));
        }
        if !(self.min_impurity_decrease >= 0.0 && self.min_impurity_decrease.is_finite()) {
            return Err(Error::InvalidParameter("min_impurity_decrease must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Tree node. Rows with `feature <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        samples: usize,
        impurity: f64,
        /// This node's weighted impurity decrease:
        /// impurity − (n_left·g_left + n_right·g_right)/n.
        decrease: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf {
        class: usize,
        histogram: Vec<usize>,
        samples: usize,
        impurity: f64,
    },
}

/// A fitted classifier mapping feature vectors to class indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub root: Node,
}

/// Gini impurity of a non-empty label multiset: 1 − Σ (count/total)².
pub fn gini(labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset("gini of an empty label multiset".into()));
    }
    let k = labels.iter().max().unwrap() + 1;
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    Ok(gini_of_counts(&counts, labels.len()))
}

fn gini_of_counts(counts: &[usize], total: usize) -> f64 {
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t) * (c as f64 / t)).sum::<f64>()
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    n_classes: usize,
    params: &'a TreeParams,
}

impl Builder<'_> {
    fn histogram(&self, rows: &[usize]) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for &i in rows {
            counts[self.y[i]] += 1;
        }
        counts
    }

    /// Best split of `rows`: the (feature, threshold) maximizing weighted
    /// impurity decrease over all midpoints between consecutive distinct
    /// sorted values, honoring `min_samples_leaf`. Features are scanned in
    /// ascending index order and thresholds in ascending value order, and a
    /// candidate replaces the incumbent only on a strictly larger decrease,
    /// so ties resolve to (lower feature index, lower threshold).
    fn best_split(&self, rows: &[usize], node_impurity: f64) -> Option<(usize, f64, f64)> {
        let n = rows.len();
        let min_leaf = self.params.min_samples_leaf;
        if n < 2 * min_leaf {
            return None;
        }
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order: Vec<usize> = Vec::with_capacity(n);
        for feature in 0..self.x.cols() {
            order.clear();
            order.extend_from_slice(rows);
            order.sort_by(|&a, &b| {
                self.x[(a, feature)]
                    .partial_cmp(&self.x[(b, feature)])
                    .unwrap_or(std::cmp::Ordering::Equal)
            });

            let mut left = vec![0usize; self.n_classes];
            let mut right = self.histogram(rows);
            for cut in 1..n {
                let moved = order[cut - 1];
                left[self.y[moved]] += 1;
                right[self.y[moved]] -= 1;

                let lo = self.x[(order[cut - 1], feature)];
                let hi = self.x[(order[cut], feature)];
                if lo == hi {
                    continue; // not a boundary between distinct values
                }
                if cut < min_leaf || n - cut < min_leaf {
                    continue;
                }
                let weighted = (cut as f64 * gini_of_counts(&left, cut)
                    + (n - cut) as f64 * gini_of_counts(&right, n - cut))
                    / n as f64;
                let decrease = node_impurity - weighted;
                if best.is_none_or(|(_, _, d)| decrease > d) {
                    // Midpoint threshold; fall back to the left value when
                    // rounding would land the midpoint on `hi` (adjacent
                    // floats), so `<= threshold` still routes exactly the
                    // left block.
                    let mid = (lo + hi) / 2.0;
                    let threshold = if mid > lo && mid < hi { mid } else { lo };
                    best = Some((feature, threshold, decrease));
                }
            }
        }
        best
    }

    fn build(&self, rows: &[usize], depth: usize) -> Node {
        let histogram = self.histogram(rows);
        let impurity = gini_of_counts(&histogram, rows.len());
        let leaf = |histogram: Vec<usize>| {
            // Majority class, ties to the lowest class index.
            let class = histogram
                .iter()
                .enumerate()
                .max_by(|(ia, ca), (ib, cb)| ca.cmp(cb).then(ib.cmp(ia)))
                .map(|(i, _)| i)
                .unwrap_or(0);
            Node::Leaf { class, histogram, samples: rows.len(), impurity }
        };

        if impurity == 0.0 {
            return leaf(histogram);
        }
        if let Some(limit) = self.params.max_depth {
            if depth >= limit {
                return leaf(histogram);
            }
        }
        let Some((feature, threshold, decrease)) = self.best_split(rows, impurity) else {
            return leaf(histogram);
        };
        // A zero-decrease split is still taken on an impure node (that is
        // what lets XOR-style data resolve one level down) unless the caller
        // demanded a strictly positive decrease.
        if self.params.min_impurity_decrease > 0.0 && decrease <= self.params.min_impurity_decrease {
            return leaf(histogram);
        }

        let (mut left_rows, mut right_rows) = (Vec::new(), Vec::new());
        for &i in rows {
            if self.x[(i, feature)] <= threshold {
                left_rows.push(i);
            } else {
                right_rows.push(i);
            }
        }
        Node::Split {
            feature,
            threshold,
            samples: rows.len(),
            impurity,
            decrease: decrease.max(0.0),
            left: Box::new(self.build(&left_rows, depth + 1)),
            right: Box::new(self.build(&right_rows, depth + 1)),
        }
    }
}

impl Tree {
    /// Fit with generated feature names (`f1..`) and class names taken from
    /// the label range.
    pub fn fit(x: &Matrix, y: &[usize], params: &TreeParams) -> Result<Tree> {
        let n_classes = y.iter().max().map_or(0, |m| m + 1);
        let feature_names: Vec<String> = (1..=x.cols()).map(|j| format!("f{j}")).collect();
        let class_names: Vec<String> = (0..n_classes).map(|c| c.to_string()).collect();
        Tree::fit_named(x, y, params, &feature_names, &class_names)
    }

    /// Fit with explicit names.
    pub fn fit_named(
        x: &Matrix,
        y: &[usize],
        params: &TreeParams,
        feature_names: &[String],
        class_names: &[String],
    ) -> Result<Tree> {
        params.validate()?;
        if x.rows() == 0 {
            return Err(Error::EmptyDataset("cannot fit a tree on zero rows".into()));
        }
        if x.rows() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.rows(), got: y.len() });
        }
        if feature_names.len() != x.cols() {
            return Err(Error::DimensionMismatch { expected: x.cols(), got: feature_names.len() });
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::SchemaMismatch(format!(
                "label index {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        let builder = Builder { x, y, n_classes: class_names.len(), params };
        let rows: Vec<usize> = (0..x.rows()).collect();
        Ok(Tree {
            feature_names: feature_names.to_vec(),
            class_names: class_names.to_vec(),
            root: builder.build(&rows, 0),
        })
    }

    /// Route one feature vector to its leaf class. Values exactly at a
    /// threshold go left.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.feature_names.len() {
            return Err(Error::DimensionMismatch { expected: self.feature_names.len(), got: x.len() });
        }
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { class, .. } => return Ok(*class),
                Node::Split { feature, threshold, left, right, .. } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Fraction of rows whose prediction matches `y`.
    pub fn accuracy(&self, x: &Matrix, y: &[usize]) -> Result<f64> {
        if x.rows() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.rows(), got: y.len() });
        }
        if y.is_empty() {
            return Err(Error::EmptyDataset("accuracy over zero rows".into()));
        }
        let mut correct = 0usize;
        for (i, &label) in y.iter().enumerate() {
            if self.predict(x.row(i))? == label {
                correct += 1;
            }
        }
        Ok(correct as f64 / y.len() as f64)
    }

    /// Mean decrease in impurity per feature: Σ over splits on feature k of
    /// (node samples / total samples) · decrease, normalized to sum to 1
    /// when the tree has any split (all-zero for a single leaf).
    pub fn importances(&self) -> Vec<f64> {
        let total = match &self.root {
            Node::Leaf { samples, .. } | Node::Split { samples, .. } => *samples,
        } as f64;
        let mut raw = vec![0.0; self.feature_names.len()];
        fn walk(node: &Node, total: f64, raw: &mut [f64]) {
            if let Node::Split { feature, samples, decrease, left, right, .. } = node {
                raw[*feature] += *samples as f64 / total * decrease;
                walk(left, total, raw);
                walk(right, total, raw);
            }
        }
        walk(&self.root, total, &mut raw);
        let sum: f64 = raw.iter().sum();
        if sum > 0.0 {
            for v in raw.iter_mut() {
                *v /= sum;
            }
        }
        raw
    }

    /// Human-readable decision rules with substituted feature and class
    /// names.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        self.describe_node(&self.root, 0, &mut out);
        out
    }

    fn describe_node(&self, node: &Node, indent: usize, out: &mut String) {
        let pad = "  ".repeat(indent);
        match node {
            Node::Leaf { class, histogram, samples, .. } => {
                out.push_str(&format!(
                    "{pad}predict {} ({} samples, counts {:?})\n",
                    self.class_names[*class], samples, histogram
                ));
            }
            Node::Split { feature, threshold, samples, impurity, left, right, .. } => {
                out.push_str(&format!(
                    "{pad}if {} <= {} ({} samples, impurity {:.4})\n",
                    self.feature_names[*feature], threshold, samples, impurity
                ));
                self.describe_node(left, indent + 1, out);
                out.push_str(&format!("{pad}else\n"));
                self.describe_node(right, indent + 1, out);
            }
        }
    }
}
