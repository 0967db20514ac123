//! Multi-output CART induction.

use rand::seq::index;
use rand::Rng;

use super::config::ForestConfig;
use super::tree::{Node, Tree};
use crate::dataset::Dataset;
use crate::error::Result;

pub(crate) struct TreeBuilder<'a> {
    data: &'a Dataset,
    config: &'a ForestConfig,
    /// Per-target multiplier applied inside the split criterion.
    weights: &'a [f64],
    n_candidates: usize,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl<'a> TreeBuilder<'a> {
    pub(crate) fn new(data: &'a Dataset, config: &'a ForestConfig, weights: &'a [f64]) -> Self {
        Self {
            data,
            config,
            weights,
            n_candidates: config.max_features.candidates(data.n_features()),
            nodes: Vec::new(),
        }
    }

    /// Grows one tree over `rows` (which may contain repeats).
    pub(crate) fn build<R: Rng>(mut self, mut rows: Vec<usize>, rng: &mut R) -> Result<Tree> {
        self.grow(&mut rows, 0, rng);
        Tree::new(self.nodes, self.data.n_features())
    }

    fn grow<R: Rng>(&mut self, rows: &mut [usize], depth: usize, rng: &mut R) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            prediction: Vec::new(),
            samples: 0,
        });

        let can_split = rows.len() >= 2 * self.config.min_samples_leaf
            && self.config.max_depth.is_none_or(|max| depth < max);
        let split = if can_split {
            self.best_split(rows, rng)
        } else {
            None
        };

        match split {
            None => self.nodes[id] = self.leaf(rows),
            Some(best) => {
                let feature = best.feature;
                let threshold = best.threshold;
                let data = self.data;
                let mid = partition(rows, |&r| data.feature(r, feature) <= threshold);
                let (left_rows, right_rows) = rows.split_at_mut(mid);
                let left = self.grow(left_rows, depth + 1, rng);
                let right = self.grow(right_rows, depth + 1, rng);
                self.nodes[id] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
            }
        }
        id
    }

    fn leaf(&self, rows: &[usize]) -> Node {
        let m = self.data.n_targets();
        let mut sum = vec![0.0; m];
        for &r in rows {
            for (s, v) in sum.iter_mut().zip(self.data.targets(r)) {
                *s += v;
            }
        }
        let n = rows.len() as f64;
        Node::Leaf {
            prediction: sum.into_iter().map(|s| s / n).collect(),
            samples: rows.len(),
        }
    }

    fn best_split<R: Rng>(&self, rows: &[usize], rng: &mut R) -> Option<BestSplit> {
        let m = self.data.n_targets();
        let n = rows.len();

        // Centre the weighted targets on the node mean to keep the
        // sum-of-squares arithmetic well conditioned.
        let mut mean = vec![0.0; m];
        for &r in rows {
            for t in 0..m {
                mean[t] += self.data.target(r, t) * self.weights[t];
            }
        }
        mean.iter_mut().for_each(|v| *v /= n as f64);
        let centred = |r: usize, t: usize| self.data.target(r, t) * self.weights[t] - mean[t];

        let mut parent_sse = 0.0;
        let mut constant = true;
        for &r in rows {
            for t in 0..m {
                let c = centred(r, t);
                parent_sse += c * c;
                constant &= self.data.target(r, t) == self.data.target(rows[0], t);
            }
        }
        if constant || parent_sse <= 0.0 {
            return None;
        }

        let mut candidates = index::sample(rng, self.data.n_features(), self.n_candidates).into_vec();
        candidates.sort_unstable();

        let min_leaf = self.config.min_samples_leaf;
        let mut best: Option<BestSplit> = None;
        let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(n);
        let mut left_sum = vec![0.0; m];
        let mut total_sum = vec![0.0; m];
        for &r in rows {
            for t in 0..m {
                total_sum[t] += centred(r, t);
            }
        }

        for feature in candidates {
            sorted.clear();
            sorted.extend(rows.iter().map(|&r| (self.data.feature(r, feature), r)));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            if sorted[0].0 == sorted[n - 1].0 {
                continue;
            }
            left_sum.iter_mut().for_each(|v| *v = 0.0);
            for i in 1..n {
                let r = sorted[i - 1].1;
                for t in 0..m {
                    left_sum[t] += centred(r, t);
                }
                if i < min_leaf || n - i < min_leaf {
                    continue;
                }
                let (lo, hi) = (sorted[i - 1].0, sorted[i].0);
                if lo == hi {
                    continue;
                }
                let (nl, nr) = (i as f64, (n - i) as f64);
                // Parent SSE minus child SSEs: with centred values only the
                // between-group term survives.
                let gain: f64 = (0..m)
                    .map(|t| {
                        let ls = left_sum[t];
                        let rs = total_sum[t] - ls;
                        ls * ls / nl + rs * rs / nr - total_sum[t] * total_sum[t] / n as f64
                    })
                    .sum();
                if gain <= parent_sse * 1e-12 {
                    continue;
                }
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        feature,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }
}

/// In-place partition; returns the number of elements for
/// which `pred` holds (they end up first).
fn partition<T>(items: &mut [T], pred: impl Fn(&T) -> bool) -> usize {
    let mut next = 0;
    for i in 0..items.len() {
        if pred(&items[i]) {
            items.swap(i, next);
            next += 1;
        }
    }
    next
}
