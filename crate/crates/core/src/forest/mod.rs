//! Multi-target regression random forest.
//!
//! Each tree is a CART regressor over all targets at once: splits maximise
//! the summed per-target variance reduction and leaves store the mean target
//! vector of their samples. The forest prediction is the per-target mean of
//! the tree predictions.
//!
//! Tree `i` draws all of its randomness from a ChaCha stream keyed by
//! `(config.seed, i)`, so a trained forest does not depend on how many
//! threads built it.

mod builder;
mod config;
mod io;
mod tree;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{ForestConfig, MaxFeatures};
pub use io::{load, save, save_with_header, MODEL_FORMAT, MODEL_VERSION};
pub use tree::{Decision, Node, Tree};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use builder::TreeBuilder;

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    config: ForestConfig,
    feature_names: Vec<String>,
    target_names: Vec<String>,
    feature_bounds: Vec<(f64, f64)>,
}

impl Forest {
    /// Assembles a forest from already-built trees.
    pub fn new(
        trees: Vec<Tree>,
        config: ForestConfig,
        feature_names: Vec<String>,
        target_names: Vec<String>,
        feature_bounds: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::Config("a forest needs at least one tree".into()));
        }
        let d = feature_names.len();
        let m = target_names.len();
        for (i, tree) in trees.iter().enumerate() {
            if tree.n_features() != d || tree.n_targets() != m {
                return Err(Error::Corrupt(format!(
                    "tree {i} has shape {}x{}, forest expects {d}x{m}",
                    tree.n_features(),
                    tree.n_targets()
                )));
            }
        }
        if feature_bounds.len() != d || feature_bounds.iter().any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::Corrupt("invalid feature bounds".into()));
        }
        Ok(Self {
            trees,
            config,
            feature_names,
            target_names,
            feature_bounds,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_targets(&self) -> usize {
        self.target_names.len()
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_names(&self) -> &[String] {
        &self.target_names
    }

    /// Per-feature `(min, max)` seen during training.
    pub fn feature_bounds(&self) -> &[(f64, f64)] {
        &self.feature_bounds
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("instance has non-finite values".into()));
        }
        Ok(())
    }

    /// Per-target mean of the tree predictions.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut sum = vec![0.0; self.n_targets()];
        for tree in &self.trees {
            for (s, v) in sum.iter_mut().zip(tree.predict(x)?) {
                *s += v;
            }
        }
        let n = self.trees.len() as f64;
        Ok(sum.into_iter().map(|s| s / n).collect())
    }

    /// Per-target mean absolute error on `data`, plus its average.
    pub fn evaluate_mae(&self, data: &Dataset) -> Result<(Vec<f64>, f64)> {
        if data.n_features() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                actual: data.n_features(),
            });
        }
        if data.n_targets() != self.n_targets() {
            return Err(Error::DimensionMismatch {
                expected: self.n_targets(),
                actual: data.n_targets(),
            });
        }
        let mut per_target = vec![0.0; self.n_targets()];
        for r in 0..data.n_rows() {
            let pred = self.predict(data.features(r))?;
            for (t, (p, y)) in pred.iter().zip(data.targets(r)).enumerate() {
                per_target[t] += (p - y).abs();
            }
        }
        let n = data.n_rows() as f64;
        per_target.iter_mut().for_each(|v| *v /= n);
        let mean = per_target.iter().sum::<f64>() / per_target.len() as f64;
        Ok((per_target, mean))
    }
}

/// Convenience wrapper for [`Forest::predict`].
pub fn predict(forest: &Forest, x: &[f64]) -> Result<Vec<f64>> {
    forest.predict(x)
}

/// Convenience wrapper for [`Tree::predict`].
pub fn predict_tree(tree: &Tree, x: &[f64]) -> Result<Vec<f64>> {
    tree.predict(x).map(<[f64]>::to_vec)
}

/// Trains a forest on `train`.
pub fn fit(train: &Dataset, config: &ForestConfig) -> Result<Forest> {
    config.validate()?;
    let n = train.n_rows();
    if n < config.min_samples_leaf {
        return Err(Error::Degenerate(format!(
            "{n} rows cannot fill a leaf of {} samples",
            config.min_samples_leaf
        )));
    }
    let weights = target_weights(train, config.normalize_targets);
    let trees = (0..config.n_estimators)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree_rng(config.seed, i);
            let rows: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            TreeBuilder::new(train, config, &weights).build(rows, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Forest::new(
        trees,
        config.clone(),
        train.feature_names().to_vec(),
        train.target_names().to_vec(),
        train.feature_bounds(),
    )
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

fn target_weights(data: &Dataset, normalize: bool) -> Vec<f64> {
    let m = data.n_targets();
    if !normalize {
        return vec![1.0; m];
    }
    let n = data.n_rows() as f64;
    (0..m)
        .map(|t| {
            let mean = (0..data.n_rows()).map(|r| data.target(r, t)).sum::<f64>() / n;
            let var = (0..data.n_rows())
                .map(|r| (data.target(r, t) - mean).powi(2))
                .sum::<f64>()
                / n;
            if var > 0.0 {
                1.0 / var.sqrt()
            } else {
                1.0
            }
        })
        .collect()
}
