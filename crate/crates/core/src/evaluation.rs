//! Rule metrics, the cross-validated explanation experiment, synthetic data
//! and the allowed-error scalability sweep.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dataset::{kfold, Dataset};
use crate::error::{Error, Result};
use crate::explain::{explain, ExplainOptions};
use crate::forest::{fit, Forest, ForestConfig};
use crate::reducer::{AllowedError, Rule};

/// Fraction of rows satisfying every antecedent term.
pub fn coverage(rule: &Rule, data: &Dataset) -> f64 {
    let covered = (0..data.n_rows()).filter(|&r| rule.covers(data.features(r))).count();
    covered as f64 / data.n_rows() as f64
}

/// Mean absolute difference between the rule's consequent and the forest
/// prediction, over covered rows and all targets. `None` when nothing is
/// covered.
pub fn rule_precision(rule: &Rule, data: &Dataset, forest: &Forest) -> Result<Option<f64>> {
    let mut preds = Vec::new();
    for r in 0..data.n_rows() {
        if rule.covers(data.features(r)) {
            preds.push((r, forest.predict(data.features(r))?));
        }
    }
    Ok(consequent_mae(rule, preds.iter().map(|(_, p)| p.as_slice())))
}

/// Like [`rule_precision`] but against the ground-truth targets.
pub fn rule_precision_truth(rule: &Rule, data: &Dataset) -> Option<f64> {
    consequent_mae(
        rule,
        (0..data.n_rows())
            .filter(|&r| rule.covers(data.features(r)))
            .map(|r| data.targets(r)),
    )
}

fn consequent_mae<'a>(rule: &Rule, rows: impl Iterator<Item = &'a [f64]>) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for values in rows {
        for c in &rule.consequent {
            total += (c.value - values[c.target]).abs();
        }
        count += 1;
    }
    (count > 0).then(|| total / (count * rule.consequent.len()) as f64)
}

pub fn rule_length(rule: &Rule) -> usize {
    rule.antecedent.len()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub coverage: f64,
    pub rule_precision_mae: Option<f64>,
    pub truth_mae: Option<f64>,
    pub rule_length: usize,
}

pub fn metrics(rule: &Rule, data: &Dataset, forest: &Forest) -> Result<MetricReport> {
    Ok(MetricReport {
        coverage: coverage(rule, data),
        rule_precision_mae: rule_precision(rule, data, forest)?,
        truth_mae: rule_precision_truth(rule, data),
        rule_length: rule_length(rule),
    })
}

/// Metrics averaged over every explained instance for one allowed error.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub allowed: AllowedError,
    pub coverage: f64,
    /// Mean over instances whose rule covered at least one test row.
    pub rule_precision_mae: f64,
    pub truth_mae: f64,
    pub rule_length: f64,
    pub kept_paths: f64,
    pub instances: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ExperimentRow>,
    /// Cross-validated forest MAE per target, pooled over all rows.
    pub forest_mae_per_target: Vec<f64>,
    pub forest_mae: f64,
    /// Number of times each row served as a test instance.
    pub test_counts: Vec<usize>,
}

struct InstanceMetrics {
    coverage: f64,
    precision: Option<f64>,
    truth: Option<f64>,
    length: usize,
    kept: usize,
}

/// k-fold experiment: train on each training split, explain every test
/// instance at every allowed error, score each rule against the test split
/// and average over all instances.
pub fn run_experiment(
    data: &Dataset,
    config: &ForestConfig,
    allowed_errors: &[AllowedError],
    k: usize,
    seed: u64,
    options: &ExplainOptions,
) -> Result<ExperimentReport> {
    for a in allowed_errors {
        a.validate(data.n_targets())?;
    }
    let plan = kfold(data.n_rows(), k, seed)?;
    let m = data.n_targets();
    let mut per_allowed: Vec<Vec<InstanceMetrics>> = allowed_errors.iter().map(|_| Vec::new()).collect();
    let mut abs_err = vec![0.0; m];
    let mut test_counts = vec![0; data.n_rows()];

    for fold in 0..k {
        let train = data.subset(&plan.train_rows(fold))?;
        let test_rows = plan.test_rows(fold);
        let test = data.subset(&test_rows)?;
        let forest = fit(&train, config)?;
        let test_preds = (0..test.n_rows())
            .map(|r| forest.predict(test.features(r)))
            .collect::<Result<Vec<_>>>()?;
        for (r, pred) in test_preds.iter().enumerate() {
            test_counts[test_rows[r]] += 1;
            for t in 0..m {
                abs_err[t] += (pred[t] - test.target(r, t)).abs();
            }
        }

        for (a, allowed) in allowed_errors.iter().enumerate() {
            let results = (0..test.n_rows())
                .into_par_iter()
                .map(|r| {
                    let explanation = explain(&forest, test.features(r), allowed, options)?;
                    let rule = &explanation.rule;
                    let covered: Vec<usize> = (0..test.n_rows())
                        .filter(|&q| rule.covers(test.features(q)))
                        .collect();
                    Ok(InstanceMetrics {
                        coverage: covered.len() as f64 / test.n_rows() as f64,
                        precision: consequent_mae(rule, covered.iter().map(|&q| test_preds[q].as_slice())),
                        truth: consequent_mae(rule, covered.iter().map(|&q| test.targets(q))),
                        length: rule_length(rule),
                        kept: rule.kept_path_count,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            per_allowed[a].extend(results);
        }
    }

    let rows = allowed_errors
        .iter()
        .zip(per_allowed)
        .map(|(allowed, items)| {
            let n = items.len() as f64;
            let defined_mean = |f: &dyn Fn(&InstanceMetrics) -> Option<f64>| {
                let vals: Vec<f64> = items.iter().filter_map(f).collect();
                if vals.is_empty() {
                    f64::NAN
                } else {
                    vals.iter().sum::<f64>() / vals.len() as f64
                }
            };
            ExperimentRow {
                allowed: allowed.clone(),
                coverage: items.iter().map(|i| i.coverage).sum::<f64>() / n,
                rule_precision_mae: defined_mean(&|i| i.precision),
                truth_mae: defined_mean(&|i| i.truth),
                rule_length: items.iter().map(|i| i.length as f64).sum::<f64>() / n,
                kept_paths: items.iter().map(|i| i.kept as f64).sum::<f64>() / n,
                instances: items.len(),
            }
        })
        .collect();

    let n = data.n_rows() as f64;
    let forest_mae_per_target: Vec<f64> = abs_err.into_iter().map(|e| e / n).collect();
    let forest_mae = forest_mae_per_target.iter().sum::<f64>() / m as f64;
    Ok(ExperimentReport {
        rows,
        forest_mae_per_target,
        forest_mae,
        test_counts,
    })
}

/// Standard-normal features; each target is a random linear combination of
/// the features (standard-normal weights) plus Gaussian noise of scale
/// `noise`.
pub fn make_synthetic(n: usize, d: usize, m: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 || m == 0 {
        return Err(Error::Config("synthetic data needs n, d, m >= 1".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Config("noise must be finite and non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let weights: Vec<f64> = (0..d * m).map(|_| normal()).collect();
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n * m);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| normal()).collect();
        for t in 0..m {
            let signal: f64 = row.iter().enumerate().map(|(f, v)| v * weights[f * m + t]).sum();
            y.push(signal + noise * normal());
        }
        x.extend(row);
    }
    Dataset::from_flat(
        x,
        y,
        n,
        (0..d).map(|i| format!("f{i}")).collect(),
        (0..m).map(|i| format!("t{i}")).collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub allowed_error: f64,
    pub mean_time_seconds: f64,
    pub mean_kept_paths: f64,
}

/// Fits once, then explains the same `instances` sampled rows at every
/// (global) allowed error, timing each explanation. Fitting is parallel;
/// explanations run one at a time on the calling thread.
pub fn scalability_bench(
    data: &Dataset,
    config: &ForestConfig,
    allowed_errors: &[f64],
    instances: usize,
    seed: u64,
    options: &ExplainOptions,
) -> Result<Vec<BenchRow>> {
    if allowed_errors.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("allowed errors must be ascending".into()));
    }
    let forest = fit(data, config)?;
    bench_forest(&forest, data, allowed_errors, instances, seed, options)
}

/// [`scalability_bench`] on an already trained forest.
pub fn bench_forest(
    forest: &Forest,
    data: &Dataset,
    allowed_errors: &[f64],
    instances: usize,
    seed: u64,
    options: &ExplainOptions,
) -> Result<Vec<BenchRow>> {
    let count = instances.min(data.n_rows()).max(1);
    let mut rows = index::sample(&mut ChaCha8Rng::seed_from_u64(seed), data.n_rows(), count).into_vec();
    rows.sort_unstable();
    allowed_errors
        .iter()
        .map(|&a| {
            let allowed = AllowedError::Global(a);
            let mut seconds = 0.0;
            let mut kept = 0usize;
            for &r in &rows {
                let start = Instant::now();
                let e = explain(forest, data.features(r), &allowed, options)?;
                seconds += start.elapsed().as_secs_f64();
                kept += e.reduction.kept.len();
            }
            Ok(BenchRow {
                allowed_error: a,
                mean_time_seconds: seconds / count as f64,
                mean_kept_paths: kept as f64 / count as f64,
            })
        })
        .collect()
}

fn write_lines(path: &Path, comment: Option<&str>, header: &str, lines: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{header}")?;
    for line in lines {
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn fmt_opt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.6}")
    }
}

pub const REPORT_HEADER: &str =
    "technique,allowed_error,coverage,rule_precision_mae,truth_mae,rule_length,kept_paths,instances";

/// One line per allowed error, in the order run.
pub fn report_lines(report: &ExperimentReport) -> Vec<String> {
    report
        .rows
        .iter()
        .map(|r| {
            format!(
                "XMTR,{},{:.6},{},{},{:.6},{:.6},{}",
                r.allowed,
                r.coverage,
                fmt_opt(r.rule_precision_mae),
                fmt_opt(r.truth_mae),
                r.rule_length,
                r.kept_paths,
                r.instances
            )
        })
        .collect()
}

pub fn write_report_csv(report: &ExperimentReport, path: impl AsRef<Path>, comment: Option<&str>) -> Result<()> {
    write_lines(path.as_ref(), comment, REPORT_HEADER, &report_lines(report))
}

pub const BENCH_HEADER: &str = "allowed_error,mean_time_seconds,mean_kept_paths";

pub fn bench_lines(rows: &[BenchRow]) -> Vec<String> {
    rows.iter()
        .map(|r| format!("{},{:.2},{:.2}", r.allowed_error, r.mean_time_seconds, r.mean_kept_paths))
        .collect()
}

pub fn write_bench_csv(rows: &[BenchRow], path: impl AsRef<Path>, comment: Option<&str>) -> Result<()> {
    write_lines(path.as_ref(), comment, BENCH_HEADER, &bench_lines(rows))
}
