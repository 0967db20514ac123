//! Decision-path extraction and pairwise association-rule scoring of path
//! features.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::Result;
use crate::forest::Forest;

/// Half-open range `(lower, upper]` matching the `<=`-goes-left routing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub const UNBOUNDED: Interval = Interval {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };

    pub fn contains(&self, v: f64) -> bool {
        self.lower < v && v <= self.upper
    }
}

/// The route one tree takes for an instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub tree_index: usize,
    pub leaf_id: usize,
    pub conditions: BTreeMap<usize, Interval>,
    pub leaf_prediction: Vec<f64>,
}

impl Path {
    pub fn features(&self) -> impl Iterator<Item = usize> + '_ {
        self.conditions.keys().copied()
    }

    /// True when every feature this path tests is in `set`.
    pub fn is_covered_by(&self, set: &BTreeSet<usize>) -> bool {
        self.features().all(|f| set.contains(&f))
    }

    pub fn satisfied_by(&self, x: &[f64]) -> bool {
        self.conditions.iter().all(|(&f, iv)| iv.contains(x[f]))
    }
}

/// One path per tree, indexed by tree.
pub fn extract_paths(forest: &Forest, x: &[f64]) -> Result<Vec<Path>> {
    forest.predict(x)?;
    forest
        .trees()
        .iter()
        .enumerate()
        .map(|(tree_index, tree)| {
            let (decisions, leaf_id) = tree.trace(x)?;
            let mut conditions: BTreeMap<usize, Interval> = BTreeMap::new();
            for d in decisions {
                let iv = conditions.entry(d.feature).or_insert(Interval::UNBOUNDED);
                if d.went_left {
                    iv.upper = iv.upper.min(d.threshold);
                } else {
                    iv.lower = iv.lower.max(d.threshold);
                }
            }
            Ok(Path {
                tree_index,
                leaf_id,
                conditions,
                leaf_prediction: tree.predict(x)?.to_vec(),
            })
        })
        .collect()
}

/// Single-antecedent, single-consequent association rule.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationRule {
    pub antecedent: usize,
    pub consequent: usize,
    pub confidence: f64,
}

/// Supports of frequent itemsets of size at most two, the rules derived from
/// the frequent pairs, and a per-feature score.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssociationModel {
    pub n_transactions: usize,
    /// Keys are sorted itemsets of length 1 or 2.
    pub itemset_supports: BTreeMap<Vec<usize>, f64>,
    pub rules: Vec<AssociationRule>,
    pub feature_scores: BTreeMap<usize, f64>,
}

impl AssociationModel {
    pub fn support(&self, itemset: &[usize]) -> Option<f64> {
        let mut key = itemset.to_vec();
        key.sort_unstable();
        self.itemset_supports.get(&key).copied()
    }

    pub fn confidence(&self, antecedent: usize, consequent: usize) -> Option<f64> {
        self.rules
            .iter()
            .find(|r| r.antecedent == antecedent && r.consequent == consequent)
            .map(|r| r.confidence)
    }
}

/// Mines the paths' feature sets as transactions.
///
/// Every singleton gets a support; pairs are kept when their support reaches
/// `min_support`, and each kept pair yields both directed rules. A feature's
/// score is the mean confidence of the rules it is the antecedent of, or its
/// own support when it has none.
pub fn mine(paths: &[Path], min_support: f64) -> AssociationModel {
    let n = paths.len();
    if n == 0 {
        return AssociationModel::default();
    }
    let mut singles: BTreeMap<usize, usize> = BTreeMap::new();
    let mut pairs: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for path in paths {
        let items: Vec<usize> = path.features().collect();
        for (i, &a) in items.iter().enumerate() {
            *singles.entry(a).or_default() += 1;
            for &b in &items[i + 1..] {
                *pairs.entry((a, b)).or_default() += 1;
            }
        }
    }

    let total = n as f64;
    let mut itemset_supports = BTreeMap::new();
    for (&f, &c) in &singles {
        itemset_supports.insert(vec![f], c as f64 / total);
    }
    let mut rules = Vec::new();
    for (&(a, b), &c) in &pairs {
        let support = c as f64 / total;
        if support < min_support {
            continue;
        }
        itemset_supports.insert(vec![a, b], support);
        rules.push(AssociationRule {
            antecedent: a,
            consequent: b,
            confidence: c as f64 / singles[&a] as f64,
        });
        rules.push(AssociationRule {
            antecedent: b,
            consequent: a,
            confidence: c as f64 / singles[&b] as f64,
        });
    }
    rules.sort_by_key(|r| (r.antecedent, r.consequent));

    let mut feature_scores = BTreeMap::new();
    for (&f, &c) in &singles {
        let confidences: Vec<f64> = rules
            .iter()
            .filter(|r| r.antecedent == f)
            .map(|r| r.confidence)
            .collect();
        let score = if confidences.is_empty() {
            c as f64 / total
        } else {
            confidences.iter().sum::<f64>() / confidences.len() as f64
        };
        feature_scores.insert(f, score);
    }

    AssociationModel {
        n_transactions: n,
        itemset_supports,
        rules,
        feature_scores,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankOrder {
    #[default]
    Ascending,
    Descending,
}

impl fmt::Display for RankOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RankOrder::Ascending => "asc",
            RankOrder::Descending => "desc",
        })
    }
}

impl FromStr for RankOrder {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "asc" | "ascending" => Ok(RankOrder::Ascending),
            "desc" | "descending" => Ok(RankOrder::Descending),
            other => Err(format!("expected `asc` or `desc`, got `{other}`")),
        }
    }
}

/// Features sorted by score; ties go to the lower feature index.
pub fn rank_features(model: &AssociationModel, order: RankOrder) -> Vec<usize> {
    let mut ranked: Vec<(usize, f64)> = model.feature_scores.iter().map(|(&f, &s)| (f, s)).collect();
    ranked.sort_by(|a, b| {
        let by_score = match order {
            RankOrder::Ascending => a.1.total_cmp(&b.1),
            RankOrder::Descending => b.1.total_cmp(&a.1),
        };
        by_score.then(a.0.cmp(&b.0))
    });
    ranked.into_iter().map(|(f, _)| f).collect()
}
