use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A node of a multi-output regression tree.
///
/// Routing: `x[feature] <= threshold` goes left, anything greater goes right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        prediction: Vec<f64>,
        samples: usize,
    },
}

/// One step of a root-to-leaf traversal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub feature: usize,
    pub threshold: f64,
    pub went_left: bool,
}

/// A regression tree over `n_features` inputs predicting `n_targets`
/// outputs. Node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    n_features: usize,
    leaf_min: Vec<f64>,
    leaf_max: Vec<f64>,
}

impl Tree {
    /// Validates the node array (single connected binary tree rooted at 0,
    /// uniform leaf width, in-range features) and caches per-target leaf
    /// extremes.
    pub fn new(nodes: Vec<Node>, n_features: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Corrupt("tree has no nodes".into()));
        }
        let mut parents = vec![0usize; nodes.len()];
        let mut n_targets = None;
        for node in &nodes {
            match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= n_features {
                        return Err(Error::Corrupt(format!("split on feature {feature} out of range")));
                    }
                    if threshold.is_nan() {
                        return Err(Error::Corrupt("NaN threshold".into()));
                    }
                    for &child in [left, right] {
                        if child == 0 || child >= nodes.len() {
                            return Err(Error::Corrupt(format!("child id {child} out of range")));
                        }
                        parents[child] += 1;
                    }
                }
                Node::Leaf { prediction, .. } => {
                    if prediction.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Corrupt("non-finite leaf prediction".into()));
                    }
                    match n_targets {
                        None => n_targets = Some(prediction.len()),
                        Some(m) if m != prediction.len() => {
                            return Err(Error::Corrupt("leaves disagree on target count".into()))
                        }
                        _ => {}
                    }
                }
            }
        }
        if parents.iter().skip(1).any(|&p| p != 1) {
            return Err(Error::Corrupt("node array is not a single binary tree".into()));
        }
        // With one parent per non-root node and n-1 edges, reachability of
        // every node from the root rules out detached cycles.
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id], true) {
                return Err(Error::Corrupt("cycle in node array".into()));
            }
            if let Node::Split { left, right, .. } = nodes[id] {
                stack.push(left);
                stack.push(right);
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Corrupt("unreachable nodes".into()));
        }
        let m = n_targets.ok_or_else(|| Error::Corrupt("tree has no leaves".into()))?;
        if m == 0 {
            return Err(Error::Corrupt("leaf predictions are empty".into()));
        }
        let mut leaf_min = vec![f64::INFINITY; m];
        let mut leaf_max = vec![f64::NEG_INFINITY; m];
        for node in &nodes {
            if let Node::Leaf { prediction, .. } = node {
                for (t, &v) in prediction.iter().enumerate() {
                    leaf_min[t] = leaf_min[t].min(v);
                    leaf_max[t] = leaf_max[t].max(v);
                }
            }
        }
        Ok(Self {
            nodes,
            n_features,
            leaf_min,
            leaf_max,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_targets(&self) -> usize {
        self.leaf_min.len()
    }

    /// Smallest leaf prediction per target.
    pub fn leaf_min(&self) -> &[f64] {
        &self.leaf_min
    }

    /// Largest leaf prediction per target.
    pub fn leaf_max(&self) -> &[f64] {
        &self.leaf_max
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Id of the leaf `x` lands in.
    pub fn leaf_id(&self, x: &[f64]) -> Result<usize> {
        self.check_dim(x)?;
        Ok(self.walk(x, |_| {}))
    }

    /// The leaf prediction for `x`.
    pub fn predict(&self, x: &[f64]) -> Result<&[f64]> {
        let leaf = self.leaf_id(x)?;
        match &self.nodes[leaf] {
            Node::Leaf { prediction, .. } => Ok(prediction),
            Node::Split { .. } => unreachable!("walk ends on a leaf"),
        }
    }

    /// The decisions taken from root to leaf, plus the leaf id.
    pub fn trace(&self, x: &[f64]) -> Result<(Vec<Decision>, usize)> {
        self.check_dim(x)?;
        let mut decisions = Vec::new();
        let leaf = self.walk(x, |d| decisions.push(d));
        Ok((decisions, leaf))
    }

    fn walk(&self, x: &[f64], mut visit: impl FnMut(Decision)) -> usize {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let went_left = x[feature] <= threshold;
                    visit(Decision {
                        feature,
                        threshold,
                        went_left,
                    });
                    id = if went_left { left } else { right };
                }
            }
        }
    }

    /// Longest root-to-leaf edge count; a single leaf has depth 0.
    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            match self.nodes[id] {
                Node::Leaf { .. } => best = best.max(depth),
                Node::Split { left, right, .. } => {
                    stack.push((left, depth + 1));
                    stack.push((right, depth + 1));
                }
            }
        }
        best
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}
