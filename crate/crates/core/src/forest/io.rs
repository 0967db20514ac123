//! Versioned JSON model files.
//!
//! Lines starting with `#` before the JSON body are treated as comments, so
//! callers can prepend an effective-configuration line.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Forest, ForestConfig, Node, Tree};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "xmtr-forest";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    config: ForestConfig,
    feature_names: Vec<String>,
    target_names: Vec<String>,
    feature_bounds: Vec<(f64, f64)>,
    trees: Vec<TreeRecord>,
}

#[derive(Serialize, Deserialize)]
struct TreeRecord {
    leaf_min: Vec<f64>,
    leaf_max: Vec<f64>,
    nodes: Vec<Node>,
}

pub fn save(forest: &Forest, path: impl AsRef<Path>) -> Result<()> {
    save_with_header(forest, path, None)
}

/// Writes the model, optionally preceded by a `# ...` comment line.
pub fn save_with_header(forest: &Forest, path: impl AsRef<Path>, header: Option<&str>) -> Result<()> {
    let file = ModelFile {
        format: MODEL_FORMAT.to_owned(),
        version: MODEL_VERSION,
        config: forest.config.clone(),
        feature_names: forest.feature_names.clone(),
        target_names: forest.target_names.clone(),
        feature_bounds: forest.feature_bounds.clone(),
        trees: forest
            .trees
            .iter()
            .map(|t| TreeRecord {
                leaf_min: t.leaf_min().to_vec(),
                leaf_max: t.leaf_max().to_vec(),
                nodes: t.nodes().to_vec(),
            })
            .collect(),
    };
    let mut text = String::new();
    if let Some(h) = header {
        for line in h.lines() {
            text.push_str("# ");
            text.push_str(line);
            text.push('\n');
        }
    }
    text.push_str(&serde_json::to_string(&file).map_err(|e| Error::Internal(e.to_string()))?);
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Forest> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    parse(&text)
}

fn parse(text: &str) -> Result<Forest> {
    let body: String = text
        .lines()
        .skip_while(|l| l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n");
    let value: Value = serde_json::from_str(&body).map_err(|e| Error::Corrupt(e.to_string()))?;
    match value.get("format").and_then(Value::as_str) {
        Some(MODEL_FORMAT) => {}
        _ => return Err(Error::Corrupt("missing or unknown format tag".into())),
    }
    let version = value.get("version").cloned().unwrap_or(Value::Null);
    if version.as_u64() != Some(u64::from(MODEL_VERSION)) {
        return Err(Error::Version {
            found: version.to_string(),
            expected: MODEL_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| Error::Corrupt(e.to_string()))?;
    file.config.validate().map_err(|e| Error::Corrupt(e.to_string()))?;
    let d = file.feature_names.len();
    let trees = file
        .trees
        .into_iter()
        .map(|rec| {
            let tree = Tree::new(rec.nodes, d)?;
            if tree.leaf_min() != rec.leaf_min.as_slice() || tree.leaf_max() != rec.leaf_max.as_slice() {
                return Err(Error::Corrupt("cached leaf extremes disagree with leaves".into()));
            }
            Ok(tree)
        })
        .collect::<Result<Vec<_>>>()?;
    Forest::new(
        trees,
        file.config,
        file.feature_names,
        file.target_names,
        file.feature_bounds,
    )
}
