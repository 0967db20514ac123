//! Path reduction under an allowed-error budget and rule composition.
//!
//! Given the per-tree paths of an instance, reduction keeps only the trees
//! whose paths use features from a growing feature set. Every excluded tree
//! is treated as if it could output any of its leaf values, so the forest
//! prediction for inputs matching the final rule is only known up to the
//! excluded trees' leaf extremes. The *local error* measures how far those
//! extremes can move the prediction; reduction stops as soon as it fits the
//! allowed error.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{kfold, Dataset};
use crate::error::{Error, Result};
use crate::forest::{fit, Forest, ForestConfig};
use crate::pathminer::{rank_features, AssociationModel, Path, RankOrder};

/// Error budget for a reduction.
#[derive(Debug, Clone, PartialEq)]
pub enum AllowedError {
    /// The mean of the per-target local errors must not exceed this value.
    Global(f64),
    /// Each target's local error must not exceed its own value.
    PerTarget(Vec<f64>),
}

/// How local errors are compared against the budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    GlobalMean,
    PerTarget,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::GlobalMean => "global",
            Scheme::PerTarget => "per-target",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "global" | "global-mean" => Ok(Scheme::GlobalMean),
            "per-target" | "per_target" => Ok(Scheme::PerTarget),
            other => Err(format!("expected `global` or `per-target`, got `{other}`")),
        }
    }
}

impl AllowedError {
    pub fn scheme(&self) -> Scheme {
        match self {
            AllowedError::Global(_) => Scheme::GlobalMean,
            AllowedError::PerTarget(_) => Scheme::PerTarget,
        }
    }

    /// The single value for the global scheme, or the per-target average.
    pub fn mean(&self) -> f64 {
        match self {
            AllowedError::Global(v) => *v,
            AllowedError::PerTarget(v) => v.iter().sum::<f64>() / v.len().max(1) as f64,
        }
    }

    /// Collapses a per-target budget to a global one holding its mean.
    pub fn to_global(&self) -> AllowedError {
        AllowedError::Global(self.mean())
    }

    pub fn validate(&self, n_targets: usize) -> Result<()> {
        let values: &[f64] = match self {
            AllowedError::Global(v) => std::slice::from_ref(v),
            AllowedError::PerTarget(v) => {
                if v.len() != n_targets {
                    return Err(Error::AllowedError(format!(
                        "{} per-target values for {n_targets} targets",
                        v.len()
                    )));
                }
                v
            }
        };
        if values.iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::AllowedError("values must be non-negative".into()));
        }
        Ok(())
    }

    /// Acceptance test of the active scheme (non-strict).
    pub fn accepts(&self, local_errors: &[f64]) -> bool {
        match self {
            AllowedError::Global(v) => {
                let mean = local_errors.iter().sum::<f64>() / local_errors.len() as f64;
                mean <= *v
            }
            AllowedError::PerTarget(v) => local_errors.iter().zip(v).all(|(e, a)| e <= a),
        }
    }
}

impl fmt::Display for AllowedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AllowedError::Global(v) => write!(f, "{v}"),
            AllowedError::PerTarget(v) => {
                let parts: Vec<String> = v.iter().map(f64::to_string).collect();
                f.write_str(&parts.join(";"))
            }
        }
    }
}

/// Which leaf extreme stands in for an excluded tree's prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Substitution {
    /// Per target, every excluded tree takes its minimum leaf, or every one
    /// takes its maximum, whichever moves the forest prediction further.
    /// The local error is then the largest deviation the excluded trees can
    /// cause, and equals `|p'(x) - prediction|`.
    #[default]
    WorstSide,
    /// Each excluded tree independently takes the extreme farthest from its
    /// own prediction.
    PerTree,
    /// Each excluded tree takes the extreme farthest from the forest
    /// prediction.
    ForestReference,
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Substitution::WorstSide => "worst-side",
            Substitution::PerTree => "per-tree",
            Substitution::ForestReference => "forest",
        })
    }
}

impl FromStr for Substitution {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "worst-side" => Ok(Substitution::WorstSide),
            "per-tree" => Ok(Substitution::PerTree),
            "forest" => Ok(Substitution::ForestReference),
            other => Err(format!(
                "expected `worst-side`, `per-tree` or `forest`, got `{other}`"
            )),
        }
    }
}

/// Outcome of [`reduce`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionResult {
    pub kept: BTreeSet<usize>,
    pub excluded: BTreeSet<usize>,
    pub feature_set: BTreeSet<usize>,
    pub local_errors: Vec<f64>,
    pub adjusted_prediction: Vec<f64>,
    pub original_prediction: Vec<f64>,
    /// Feature order the loop walked.
    pub ranking: Vec<usize>,
}

/// Per-tree, per-target stand-in predictions: the tree's own prediction
/// when kept, a leaf extreme when excluded.
pub fn substituted_predictions(
    paths: &[Path],
    kept: &BTreeSet<usize>,
    forest: &Forest,
    substitution: Substitution,
) -> Result<Vec<Vec<f64>>> {
    if kept.is_empty() {
        return Err(Error::EmptyKeptSet);
    }
    if paths.len() != forest.n_trees() {
        return Err(Error::DimensionMismatch {
            expected: forest.n_trees(),
            actual: paths.len(),
        });
    }
    let m = forest.n_targets();
    let n_trees = paths.len() as f64;
    let mut out: Vec<Vec<f64>> = paths.iter().map(|p| p.leaf_prediction.clone()).collect();

    for t in 0..m {
        let excluded = || (0..paths.len()).filter(|i| !kept.contains(i));
        match substitution {
            Substitution::WorstSide => {
                let (mut up, mut down) = (0.0, 0.0);
                for i in excluded() {
                    let tree = &forest.trees()[i];
                    let p = paths[i].leaf_prediction[t];
                    up += tree.leaf_max()[t] - p;
                    down += p - tree.leaf_min()[t];
                }
                let use_max = up > down;
                for i in excluded() {
                    let tree = &forest.trees()[i];
                    out[i][t] = if use_max { tree.leaf_max()[t] } else { tree.leaf_min()[t] };
                }
            }
            Substitution::PerTree | Substitution::ForestReference => {
                let forest_pred =
                    paths.iter().map(|p| p.leaf_prediction[t]).sum::<f64>() / n_trees;
                for i in excluded() {
                    let tree = &forest.trees()[i];
                    let reference = match substitution {
                        Substitution::PerTree => paths[i].leaf_prediction[t],
                        _ => forest_pred,
                    };
                    let (lo, hi) = (tree.leaf_min()[t], tree.leaf_max()[t]);
                    out[i][t] = if (hi - reference).abs() > (reference - lo).abs() { hi } else { lo };
                }
            }
        }
    }
    Ok(out)
}

/// `mae(preds, r_preds)` per target under the default substitution.
pub fn local_error(paths: &[Path], kept: &BTreeSet<usize>, forest: &Forest) -> Result<Vec<f64>> {
    local_error_with(paths, kept, forest, Substitution::default())
}

pub fn local_error_with(
    paths: &[Path],
    kept: &BTreeSet<usize>,
    forest: &Forest,
    substitution: Substitution,
) -> Result<Vec<f64>> {
    let r_preds = substituted_predictions(paths, kept, forest, substitution)?;
    let n = paths.len() as f64;
    Ok((0..forest.n_targets())
        .map(|t| {
            paths
                .iter()
                .zip(&r_preds)
                .map(|(p, r)| (p.leaf_prediction[t] - r[t]).abs())
                .sum::<f64>()
                / n
        })
        .collect())
}

/// `p'(x)`: the forest mean with excluded trees replaced by their
/// substituted extremes.
pub fn adjusted_prediction(paths: &[Path], kept: &BTreeSet<usize>, forest: &Forest) -> Result<Vec<f64>> {
    adjusted_prediction_with(paths, kept, forest, Substitution::default())
}

pub fn adjusted_prediction_with(
    paths: &[Path],
    kept: &BTreeSet<usize>,
    forest: &Forest,
    substitution: Substitution,
) -> Result<Vec<f64>> {
    let r_preds = substituted_predictions(paths, kept, forest, substitution)?;
    let n = paths.len() as f64;
    Ok((0..forest.n_targets())
        .map(|t| r_preds.iter().map(|r| r[t]).sum::<f64>() / n)
        .collect())
}

/// Options shared by [`reduce`] and the explanation pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReduceOptions {
    pub rank_order: RankOrder,
    pub substitution: Substitution,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        Self {
            rank_order: RankOrder::Ascending,
            substitution: Substitution::WorstSide,
        }
    }
}

/// Grows a feature set one ranked feature at a time, starting from the
/// empty set. After each step the kept trees are those whose path features
/// all lie in the set; the first step with a non-empty kept set whose local
/// errors pass the budget wins. Adding every path feature keeps all trees
/// with zero local error, which always passes.
pub fn reduce(
    paths: &[Path],
    assoc: &AssociationModel,
    allowed: &AllowedError,
    forest: &Forest,
    options: &ReduceOptions,
) -> Result<ReductionResult> {
    allowed.validate(forest.n_targets())?;
    if paths.len() != forest.n_trees() {
        return Err(Error::DimensionMismatch {
            expected: forest.n_trees(),
            actual: paths.len(),
        });
    }
    let ranking = rank_features(assoc, options.rank_order);
    let original_prediction: Vec<f64> = (0..forest.n_targets())
        .map(|t| paths.iter().map(|p| p.leaf_prediction[t]).sum::<f64>() / paths.len() as f64)
        .collect();

    let finish = |feature_set: BTreeSet<usize>, kept: BTreeSet<usize>, local_errors: Vec<f64>| {
        let adjusted = adjusted_prediction_with(paths, &kept, forest, options.substitution)?;
        let excluded = (0..paths.len()).filter(|i| !kept.contains(i)).collect();
        Ok(ReductionResult {
            kept,
            excluded,
            feature_set,
            local_errors,
            adjusted_prediction: adjusted,
            original_prediction: original_prediction.clone(),
            ranking: ranking.clone(),
        })
    };

    let mut feature_set = BTreeSet::new();
    for step in 0..=ranking.len() {
        if step > 0 {
            feature_set.insert(ranking[step - 1]);
        }
        let kept: BTreeSet<usize> = paths
            .iter()
            .filter(|p| p.is_covered_by(&feature_set))
            .map(|p| p.tree_index)
            .collect();
        if kept.is_empty() {
            continue;
        }
        let errors = local_error_with(paths, &kept, forest, options.substitution)?;
        if allowed.accepts(&errors) {
            return finish(feature_set, kept, errors);
        }
    }

    // Only reached when the ranking misses some path feature.
    feature_set.extend(paths.iter().flat_map(|p| p.features()));
    let kept = (0..paths.len()).collect();
    finish(feature_set, kept, vec![0.0; forest.n_targets()])
}

/// Per-target cross-validated MAE of a forest trained with `config`, pooled
/// over all rows.
pub fn default_allowed_error(data: &Dataset, config: &ForestConfig, k: usize, seed: u64) -> Result<AllowedError> {
    let plan = kfold(data.n_rows(), k, seed)?;
    let m = data.n_targets();
    let mut abs_err = vec![0.0; m];
    for fold in 0..k {
        let train = data.subset(&plan.train_rows(fold))?;
        let forest = fit(&train, config)?;
        for r in plan.test_rows(fold) {
            let pred = forest.predict(data.features(r))?;
            for t in 0..m {
                abs_err[t] += (pred[t] - data.target(r, t)).abs();
            }
        }
    }
    let n = data.n_rows() as f64;
    Ok(AllowedError::PerTarget(abs_err.into_iter().map(|e| e / n).collect()))
}

/// One conjunct `lo <= x_f <= hi`; when `lower_strict` the lower end is
/// exclusive (it came from a split threshold).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleTerm {
    pub feature: usize,
    pub lo: f64,
    pub hi: f64,
    pub lower_strict: bool,
}

impl RuleTerm {
    pub fn contains(&self, v: f64) -> bool {
        let above = if self.lower_strict { v > self.lo } else { v >= self.lo };
        above && v <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Consequent {
    pub target: usize,
    pub value: f64,
    pub bound: f64,
}

/// A conjunction of feature ranges with per-target predictions and error
/// bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub antecedent: Vec<RuleTerm>,
    pub consequent: Vec<Consequent>,
    pub kept_path_count: usize,
}

impl Rule {
    pub fn covers(&self, x: &[f64]) -> bool {
        self.antecedent.iter().all(|term| term.contains(x[term.feature]))
    }

    pub fn len(&self) -> usize {
        self.antecedent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.antecedent.is_empty()
    }
}

/// Intersects the kept paths' ranges feature by feature. Unbounded sides
/// fall back to the training range, widened to include `x`.
pub fn compose_rule(reduction: &ReductionResult, paths: &[Path], x: &[f64], forest: &Forest) -> Result<Rule> {
    if x.len() != forest.n_features() {
        return Err(Error::DimensionMismatch {
            expected: forest.n_features(),
            actual: x.len(),
        });
    }
    let mut ranges: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for &i in &reduction.kept {
        let path = paths
            .get(i)
            .ok_or_else(|| Error::Internal(format!("kept tree {i} has no path")))?;
        for (&f, iv) in &path.conditions {
            let r = ranges.entry(f).or_insert((f64::NEG_INFINITY, f64::INFINITY));
            r.0 = r.0.max(iv.lower);
            r.1 = r.1.min(iv.upper);
        }
    }
    let bounds = forest.feature_bounds();
    let mut antecedent = Vec::with_capacity(ranges.len());
    for (f, (lower, upper)) in ranges {
        let (bmin, bmax) = bounds[f];
        let (lo, lower_strict) = if lower.is_finite() {
            (lower, true)
        } else {
            (bmin.min(x[f]), false)
        };
        let hi = if upper.is_finite() { upper } else { bmax.max(x[f]) };
        let term = RuleTerm {
            feature: f,
            lo,
            hi,
            lower_strict,
        };
        if !term.contains(x[f]) {
            return Err(Error::Internal(format!(
                "instance value {} outside composed range for feature {f}",
                x[f]
            )));
        }
        antecedent.push(term);
    }
    let consequent = reduction
        .original_prediction
        .iter()
        .zip(&reduction.local_errors)
        .enumerate()
        .map(|(target, (&value, &bound))| Consequent { target, value, bound })
        .collect();
    Ok(Rule {
        antecedent,
        consequent,
        kept_path_count: reduction.kept.len(),
    })
}

fn snap(v: f64, scale: f64) -> Option<f64> {
    let scaled = v * scale;
    let nearest = scaled.round();
    ((scaled - nearest).abs() <= 1e-9 * nearest.abs().max(1.0)).then_some(nearest)
}

fn tidy(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:?}")
}

/// Renders `if lo <= name <= hi & ... then target: value±bound, ...`.
///
/// Bounds are pulled inwards onto the `precision`-decimal grid (a strict
/// lower bound moves one grid step up), so the printed closed interval is
/// always inside the certified one. An empty antecedent renders as
/// `then ...`.
pub fn render_rule(rule: &Rule, feature_names: &[String], target_names: &[String], precision: usize) -> String {
    let scale = 10f64.powi(precision as i32);
    let terms: Vec<String> = rule
        .antecedent
        .iter()
        .map(|term| {
            let mut lo = snap(term.lo, scale).unwrap_or_else(|| (term.lo * scale).ceil());
            if term.lower_strict && lo / scale <= term.lo {
                lo += 1.0;
            }
            let hi = snap(term.hi, scale).unwrap_or_else(|| (term.hi * scale).floor());
            format!(
                "{} <= {} <= {}",
                tidy(lo / scale),
                feature_names[term.feature],
                tidy(hi / scale)
            )
        })
        .collect();
    let outputs: Vec<String> = rule
        .consequent
        .iter()
        .map(|c| {
            format!(
                "{}: {:.p$}±{:.p$}",
                target_names[c.target],
                c.value,
                c.bound,
                p = precision
            )
        })
        .collect();
    if terms.is_empty() {
        format!("then {}", outputs.join(", "))
    } else {
        format!("if {} then {}", terms.join(" & "), outputs.join(", "))
    }
}

/// Result of [`check_conclusive`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConclusiveReport {
    pub trials: usize,
    /// Largest `|predict(x') - predict(x)|` per target.
    pub max_deviation: Vec<f64>,
    /// Total (trial, target) pairs whose prediction left the envelope.
    pub envelope_violations: usize,
    pub violations_per_target: Vec<usize>,
    /// Trials in which some kept tree reached a different leaf than for `x`.
    pub kept_leaf_changes: usize,
}

/// Per-target range the forest prediction can take while every kept tree
/// stays on its path: kept trees contribute their own prediction, excluded
/// trees anything between their leaf extremes.
pub fn envelope(reduction: &ReductionResult, paths: &[Path], forest: &Forest) -> Vec<(f64, f64)> {
    let n = forest.n_trees() as f64;
    (0..forest.n_targets())
        .map(|t| {
            let (mut lo, mut hi) = (0.0, 0.0);
            for (i, tree) in forest.trees().iter().enumerate() {
                if reduction.kept.contains(&i) {
                    lo += paths[i].leaf_prediction[t];
                    hi += paths[i].leaf_prediction[t];
                } else {
                    lo += tree.leaf_min()[t];
                    hi += tree.leaf_max()[t];
                }
            }
            (lo / n, hi / n)
        })
        .collect()
}

/// Samples perturbations of `x` that satisfy the rule (antecedent features
/// uniform in their ranges, the rest uniform over the training range) and
/// checks each forest prediction against the reduction envelope.
pub fn check_conclusive(
    rule: &Rule,
    reduction: &ReductionResult,
    forest: &Forest,
    x: &[f64],
    trials: usize,
    seed: u64,
) -> Result<ConclusiveReport> {
    let paths = crate::pathminer::extract_paths(forest, x)?;
    let base = forest.predict(x)?;
    let env = envelope(reduction, &paths, forest);
    let m = forest.n_targets();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ConclusiveReport {
        trials,
        max_deviation: vec![0.0; m],
        envelope_violations: 0,
        violations_per_target: vec![0; m],
        kept_leaf_changes: 0,
    };
    let terms: BTreeMap<usize, &RuleTerm> = rule.antecedent.iter().map(|t| (t.feature, t)).collect();
    let mut probe = vec![0.0; x.len()];
    for _ in 0..trials {
        for (f, v) in probe.iter_mut().enumerate() {
            *v = match terms.get(&f) {
                Some(term) => {
                    let s = sample(&mut rng, term.lo, term.hi);
                    if term.lower_strict && s <= term.lo {
                        term.hi
                    } else {
                        s
                    }
                }
                None => {
                    let (lo, hi) = forest.feature_bounds()[f];
                    sample(&mut rng, lo, hi)
                }
            };
        }
        let pred = forest.predict(&probe)?;
        for t in 0..m {
            report.max_deviation[t] = report.max_deviation[t].max((pred[t] - base[t]).abs());
            let (lo, hi) = env[t];
            let tol = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
            if pred[t] < lo - tol || pred[t] > hi + tol {
                report.envelope_violations += 1;
                report.violations_per_target[t] += 1;
            }
        }
        let moved = reduction
            .kept
            .iter()
            .any(|&i| forest.trees()[i].leaf_id(&probe).ok() != Some(paths[i].leaf_id));
        if moved {
            report.kept_leaf_changes += 1;
        }
    }
    Ok(report)
}

fn sample<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo < hi {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{Node, Tree};
    use crate::pathminer::{extract_paths, mine, Interval};

    fn leaf(v: &[f64]) -> Node {
        Node::Leaf {
            prediction: v.to_vec(),
            samples: 1,
        }
    }

    fn split(feature: usize, threshold: f64, left: usize, right: usize) -> Node {
        Node::Split {
            feature,
            threshold,
            left,
            right,
        }
    }

    fn forest(trees: Vec<Tree>, d: usize, m: usize, bounds: (f64, f64)) -> Forest {
        Forest::new(
            trees,
            ForestConfig::default(),
            (0..d).map(|i| format!("f{i}")).collect(),
            (0..m).map(|i| format!("t{i}")).collect(),
            vec![bounds; d],
        )
        .unwrap()
    }

    /// Two 1-target trees: tree0 `f0 <= 5 ? 2 : 3`, tree1 splits f1 into
    /// leaves {1, 4, 5}; x = (1, 0.5) reaches 2 and 4.
    fn two_tree_forest() -> Forest {
        forest(
            vec![
                Tree::new(vec![split(0, 5.0, 1, 2), leaf(&[2.0]), leaf(&[3.0])], 2).unwrap(),
                Tree::new(
                    vec![split(1, 1.0, 1, 4), split(1, 0.0, 2, 3), leaf(&[1.0]), leaf(&[4.0]), leaf(&[5.0])],
                    2,
                )
                .unwrap(),
            ],
            2,
            1,
            (-10.0, 10.0),
        )
    }

    #[test]
    fn local_error_two_tree_example() {
        let f = two_tree_forest();
        let x = [1.0, 0.5];
        let paths = extract_paths(&f, &x).unwrap();
        assert_eq!(paths[1].leaf_prediction, vec![4.0]);
        let kept = BTreeSet::from([0]);
        for s in [Substitution::WorstSide, Substitution::PerTree] {
            assert_eq!(local_error_with(&paths, &kept, &f, s).unwrap(), vec![1.5]);
            assert_eq!(adjusted_prediction_with(&paths, &kept, &f, s).unwrap(), vec![1.5]);
        }
        let all = BTreeSet::from([0, 1]);
        assert_eq!(local_error(&paths, &all, &f).unwrap(), vec![0.0]);
        assert_eq!(adjusted_prediction(&paths, &all, &f).unwrap(), f.predict(&x).unwrap());
        assert!(matches!(
            local_error(&paths, &BTreeSet::new(), &f),
            Err(Error::EmptyKeptSet)
        ));
    }

    #[test]
    fn worst_side_keeps_signs_consistent() {
        // Two excluded trees pulling in opposite directions under per-tree
        // substitution: tree1 predicts 4, tree2 predicts 2, both span [1, 5].
        let stump = |l: f64, r: f64| Tree::new(vec![split(0, 0.0, 1, 2), leaf(&[l]), leaf(&[r])], 1).unwrap();
        let trees = vec![
            Tree::new(vec![leaf(&[3.0])], 1).unwrap(),
            Tree::new(vec![split(0, 0.0, 1, 2), leaf(&[1.0]), split(0, 1.0, 3, 4), leaf(&[4.0]), leaf(&[5.0])], 1)
                .unwrap(),
            Tree::new(vec![split(0, 0.0, 1, 2), leaf(&[5.0]), split(0, 1.0, 3, 4), leaf(&[2.0]), leaf(&[1.0])], 1)
                .unwrap(),
            stump(0.0, 0.0),
        ];
        let f = forest(trees, 1, 1, (-5.0, 5.0));
        let paths = extract_paths(&f, &[0.5]).unwrap();
        let kept = BTreeSet::from([0, 3]);
        let predict = f.predict(&[0.5]).unwrap()[0];

        let per_tree = local_error_with(&paths, &kept, &f, Substitution::PerTree).unwrap()[0];
        let p_adj = adjusted_prediction_with(&paths, &kept, &f, Substitution::PerTree).unwrap()[0];
        assert_eq!(per_tree, 6.0 / 4.0);
        assert_eq!(p_adj, predict);

        // up = (5-4) + (5-2) = 4, down = (4-1) + (2-1) = 4: tie goes to min.
        let worst = local_error(&paths, &kept, &f).unwrap()[0];
        let w_adj = adjusted_prediction(&paths, &kept, &f).unwrap()[0];
        assert_eq!(worst, 1.0);
        assert!(((w_adj - predict).abs() - worst).abs() < 1e-15);
    }

    #[test]
    fn zero_budget_keeps_everything() {
        let f = two_tree_forest();
        let x = [1.0, 0.5];
        let paths = extract_paths(&f, &x).unwrap();
        let assoc = mine(&paths, 0.1);
        let r = reduce(&paths, &assoc, &AllowedError::Global(0.0), &f, &ReduceOptions::default()).unwrap();
        assert_eq!(r.kept, BTreeSet::from([0, 1]));
        assert!(r.excluded.is_empty());
        assert_eq!(r.feature_set, BTreeSet::from([0, 1]));
        assert_eq!(r.local_errors, vec![0.0]);
        assert_eq!(r.adjusted_prediction, r.original_prediction);
    }

    #[test]
    fn huge_budget_stops_at_first_nonempty_kept_set() {
        let f = two_tree_forest();
        let x = [1.0, 0.5];
        let paths = extract_paths(&f, &x).unwrap();
        let assoc = mine(&paths, 0.1);
        let r = reduce(&paths, &assoc, &AllowedError::Global(1e18), &f, &ReduceOptions::default()).unwrap();
        // both features score 0.5 (support fallback); the tie-break adds f0 first
        assert_eq!(r.feature_set, BTreeSet::from([0]));
        assert_eq!(r.kept, BTreeSet::from([0]));
        assert_eq!(r.local_errors, vec![1.5]);
    }

    #[test]
    fn per_target_budget() {
        let f = forest(
            vec![
                Tree::new(vec![split(0, 0.0, 1, 2), leaf(&[0.0, 0.0]), leaf(&[1.0, 1.0])], 2).unwrap(),
                Tree::new(vec![split(1, 0.0, 1, 2), leaf(&[0.0, 0.0]), leaf(&[1.0, 9.0])], 2).unwrap(),
            ],
            2,
            2,
            (-1.0, 1.0),
        );
        let x = [0.5, -0.5];
        let paths = extract_paths(&f, &x).unwrap();
        let assoc = mine(&paths, 0.1);
        // Excluding tree1 costs (0.5, 4.5).
        let loose = AllowedError::PerTarget(vec![1.0, 5.0]);
        let r = reduce(&paths, &assoc, &loose, &f, &ReduceOptions::default()).unwrap();
        assert_eq!(r.kept, BTreeSet::from([0]));
        assert_eq!(r.local_errors, vec![0.5, 4.5]);
        let tight = AllowedError::PerTarget(vec![1.0, 4.0]);
        let r = reduce(&paths, &assoc, &tight, &f, &ReduceOptions::default()).unwrap();
        assert_eq!(r.kept.len(), 2);
        // mean(0.5, 4.5) = 2.5 passes a global 2.5 but not 2.4
        let r = reduce(&paths, &assoc, &AllowedError::Global(2.5), &f, &ReduceOptions::default()).unwrap();
        assert_eq!(r.kept.len(), 1);
        let r = reduce(&paths, &assoc, &AllowedError::Global(2.4), &f, &ReduceOptions::default()).unwrap();
        assert_eq!(r.kept.len(), 2);
        assert!(reduce(&paths, &assoc, &AllowedError::PerTarget(vec![1.0]), &f, &ReduceOptions::default()).is_err());
        assert!(reduce(&paths, &assoc, &AllowedError::Global(-1.0), &f, &ReduceOptions::default()).is_err());
    }

    fn reduction_for(kept: &[usize], n: usize, local: Vec<f64>, pred: Vec<f64>) -> ReductionResult {
        ReductionResult {
            kept: kept.iter().copied().collect(),
            excluded: (0..n).filter(|i| !kept.contains(i)).collect(),
            feature_set: BTreeSet::new(),
            local_errors: local,
            adjusted_prediction: pred.clone(),
            original_prediction: pred,
            ranking: vec![],
        }
    }

    fn path(conds: &[(usize, f64, f64)]) -> Path {
        Path {
            tree_index: 0,
            leaf_id: 0,
            conditions: conds
                .iter()
                .map(|&(f, lower, upper)| (f, Interval { lower, upper }))
                .collect(),
            leaf_prediction: vec![1.5],
        }
    }

    #[test]
    fn compose_single_path_and_intersection() {
        let f = forest(vec![Tree::new(vec![leaf(&[1.5])], 1).unwrap(); 2], 1, 1, (0.0, 10.0));
        let one = [path(&[(0, 2.0, 5.0)]), path(&[])];
        let rule = compose_rule(&reduction_for(&[0], 2, vec![0.0], vec![1.5]), &one, &[3.0], &f).unwrap();
        assert_eq!(
            rule.antecedent,
            vec![RuleTerm {
                feature: 0,
                lo: 2.0,
                hi: 5.0,
                lower_strict: true
            }]
        );

        let two = [path(&[(0, 2.0, 5.0)]), path(&[(0, 3.0, 7.0)])];
        let rule = compose_rule(&reduction_for(&[0, 1], 2, vec![0.0], vec![1.5]), &two, &[4.0], &f).unwrap();
        assert_eq!((rule.antecedent[0].lo, rule.antecedent[0].hi), (3.0, 5.0));
        assert_eq!(rule.kept_path_count, 2);
        assert_eq!(rule.consequent, vec![Consequent { target: 0, value: 1.5, bound: 0.0 }]);
    }

    #[test]
    fn compose_clamps_unbounded_sides() {
        let f = forest(vec![Tree::new(vec![leaf(&[1.5])], 1).unwrap()], 1, 1, (0.0, 10.0));
        let p = [path(&[(0, f64::NEG_INFINITY, 5.0)])];
        let rule = compose_rule(&reduction_for(&[0], 1, vec![0.0], vec![1.5]), &p, &[3.0], &f).unwrap();
        assert_eq!(rule.antecedent[0], RuleTerm { feature: 0, lo: 0.0, hi: 5.0, lower_strict: false });
        // instance below the training range widens the clamp
        let rule = compose_rule(&reduction_for(&[0], 1, vec![0.0], vec![1.5]), &p, &[-2.0], &f).unwrap();
        assert_eq!(rule.antecedent[0].lo, -2.0);
    }

    #[test]
    fn compose_detects_inconsistent_paths() {
        let f = forest(vec![Tree::new(vec![leaf(&[1.5])], 1).unwrap()], 1, 1, (0.0, 10.0));
        let p = [path(&[(0, 2.0, 5.0)])];
        let err = compose_rule(&reduction_for(&[0], 1, vec![0.0], vec![1.5]), &p, &[7.0], &f).unwrap_err();
        assert!(matches!(err, Error::Internal(_)));
    }

    #[test]
    fn render_examples() {
        let names = |p: &str, k: usize| (0..k).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        let rule = Rule {
            antecedent: vec![RuleTerm { feature: 0, lo: 2.0, hi: 5.0, lower_strict: false }],
            consequent: vec![Consequent { target: 0, value: 1.5, bound: 0.0 }],
            kept_path_count: 1,
        };
        assert_eq!(render_rule(&rule, &names("f", 1), &names("t", 1), 2), "if 2.0 <= f0 <= 5.0 then t0: 1.50±0.00");

        let strict = Rule {
            antecedent: vec![RuleTerm { feature: 0, lo: 2.0, hi: 5.0, lower_strict: true }],
            ..rule.clone()
        };
        assert_eq!(render_rule(&strict, &names("f", 1), &names("t", 1), 1), "if 2.1 <= f0 <= 5.0 then t0: 1.5±0.0");

        let inward = Rule {
            antecedent: vec![RuleTerm { feature: 0, lo: 0.123, hi: 0.987, lower_strict: false }],
            ..rule.clone()
        };
        assert_eq!(render_rule(&inward, &names("f", 1), &names("t", 1), 2), "if 0.13 <= f0 <= 0.98 then t0: 1.50±0.00");

        let empty = Rule { antecedent: vec![], ..rule };
        assert_eq!(render_rule(&empty, &names("f", 1), &names("t", 1), 2), "then t0: 1.50±0.00");
    }

    #[test]
    fn render_slump_shape() {
        let features: Vec<String> = ["Cement", "Slag", "Fly_ash", "Water", "SP", "Coarse_Aggr", "Fine_Aggr"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let targets: Vec<String> = ["Slump", "Flow", "Compressive_Strength"].iter().map(|s| s.to_string()).collect();
        let term = |feature, lo, hi| RuleTerm { feature, lo, hi, lower_strict: false };
        let rule = Rule {
            antecedent: vec![
                term(0, 137.0, 151.0),
                term(1, 100.0, 107.0),
                term(2, 126.0, 141.0),
                term(3, 207.0, 208.0),
                term(5, 708.0, 753.0),
            ],
            consequent: vec![
                Consequent { target: 0, value: 7.9, bound: 0.8 },
                Consequent { target: 1, value: 7.2, bound: 0.7 },
                Consequent { target: 2, value: 4.9, bound: 0.2 },
            ],
            kept_path_count: 10,
        };
        let text = render_rule(&rule, &features, &targets, 1);
        assert_eq!(
            text,
            "if 137.0 <= Cement <= 151.0 & 100.0 <= Slag <= 107.0 & 126.0 <= Fly_ash <= 141.0 & \
             207.0 <= Water <= 208.0 & 708.0 <= Coarse_Aggr <= 753.0 then Slump: 7.9±0.8, Flow: 7.2±0.7, \
             Compressive_Strength: 4.9±0.2"
        );
        assert_eq!(rule.len(), 5);
    }

    #[test]
    fn zero_reduction_is_fully_conclusive() {
        let f = two_tree_forest();
        let x = [1.0, 0.5];
        let paths = extract_paths(&f, &x).unwrap();
        let r = reduce(&paths, &mine(&paths, 0.1), &AllowedError::Global(0.0), &f, &ReduceOptions::default()).unwrap();
        let rule = compose_rule(&r, &paths, &x, &f).unwrap();
        let report = check_conclusive(&rule, &r, &f, &x, 500, 1).unwrap();
        assert_eq!(report.max_deviation, vec![0.0]);
        assert_eq!(report.envelope_violations, 0);
        assert_eq!(report.kept_leaf_changes, 0);

        // exhaustive grid over the rule's box
        let base = f.predict(&x).unwrap();
        for i in 0..=20 {
            for j in 0..=20 {
                let probe: Vec<f64> = rule
                    .antecedent
                    .iter()
                    .zip([i, j])
                    .map(|(t, k)| t.lo + (t.hi - t.lo) * k as f64 / 20.0)
                    .collect();
                if rule.covers(&probe) {
                    assert_eq!(f.predict(&probe).unwrap(), base);
                }
            }
        }
    }

    #[test]
    fn allowed_error_parsing_helpers() {
        assert_eq!("per-target".parse::<Scheme>().unwrap(), Scheme::PerTarget);
        assert_eq!(AllowedError::PerTarget(vec![1.0, 3.0]).to_global(), AllowedError::Global(2.0));
        assert_eq!(AllowedError::PerTarget(vec![0.5, 0.25]).to_string(), "0.5;0.25");
        assert_eq!("forest".parse::<Substitution>().unwrap(), Substitution::ForestReference);
    }

    #[test]
    fn default_allowed_error_constant_data() {
        let ds = Dataset::new(
            (0..12).map(|i| vec![i as f64]).collect(),
            vec![vec![2.0, -1.0]; 12],
            vec!["x".into()],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let cfg = ForestConfig { n_estimators: 5, ..ForestConfig::default() };
        let allowed = default_allowed_error(&ds, &cfg, 3, 0).unwrap();
        assert_eq!(allowed, AllowedError::PerTarget(vec![0.0, 0.0]));
    }
}
