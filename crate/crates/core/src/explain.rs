//! End-to-end explanation of one instance.

use crate::error::Result;
use crate::forest::Forest;
use crate::pathminer::{extract_paths, mine, AssociationModel, Path};
use crate::reducer::{compose_rule, reduce, AllowedError, ReduceOptions, ReductionResult, Rule};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplainOptions {
    /// Relative support a feature pair needs to produce association rules.
    pub min_support: f64,
    pub reduce: ReduceOptions,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        Self {
            min_support: 0.1,
            reduce: ReduceOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Explanation {
    pub paths: Vec<Path>,
    pub association: AssociationModel,
    pub reduction: ReductionResult,
    pub rule: Rule,
}

/// Extracts paths, mines them, reduces under `allowed` and composes the
/// rule.
pub fn explain(forest: &Forest, x: &[f64], allowed: &AllowedError, options: &ExplainOptions) -> Result<Explanation> {
    let paths = extract_paths(forest, x)?;
    let association = mine(&paths, options.min_support);
    let reduction = reduce(&paths, &association, allowed, forest, &options.reduce)?;
    let rule = compose_rule(&reduction, &paths, x, forest)?;
    Ok(Explanation {
        paths,
        association,
        reduction,
        rule,
    })
}
