//! Local, rule-based explanations for multi-target regression random
//! forests.
//!
//! The pipeline for one instance: extract the decision path it follows in
//! every tree ([`pathminer::extract_paths`]), score path features with
//! pairwise association rules ([`pathminer::mine`]), grow a feature set until
//! the trees whose paths it covers keep the prediction within an allowed
//! error ([`reducer::reduce`]), then intersect the covered paths into a
//! single rule ([`reducer::compose_rule`]).

pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod explain;
pub mod forest;
pub mod pathminer;
pub mod reducer;

pub use error::{Error, Result};

pub use explain::{explain, ExplainOptions, Explanation};
pub use forest::{fit, Forest, ForestConfig, MaxFeatures};
pub use reducer::{AllowedError, Rule, Scheme, Substitution};
