//! Command-line front end: `train`, `explain`, `evaluate`, `bench`,
//! `inspect`.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or model errors.
//! Results go to stdout or `--out` files; diagnostics and the `#`-prefixed
//! effective-configuration line go to stderr (and head every output file).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::dataset::{load_csv_with, Dataset, MissingPolicy};
use crate::error::Error;
use crate::evaluation::{
    bench_lines, make_synthetic, report_lines, run_experiment, scalability_bench, write_bench_csv,
    write_report_csv, BENCH_HEADER, REPORT_HEADER,
};
use crate::explain::{explain, ExplainOptions};
use crate::forest::{self, Forest, ForestConfig, MaxFeatures};
use crate::pathminer::RankOrder;
use crate::reducer::{
    check_conclusive, default_allowed_error, render_rule, AllowedError, ReduceOptions, Scheme,
    Substitution,
};

#[derive(Debug, Parser)]
#[command(name = "xmtr", version, about = "Rule-based explanations for multi-target regression forests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a forest and write it to a model file.
    Train(TrainArgs),
    /// Explain one instance with a single rule.
    Explain(ExplainArgs),
    /// Cross-validated explanation metrics at several allowed errors.
    Evaluate(EvaluateArgs),
    /// Time rule generation across allowed errors.
    Bench(BenchArgs),
    /// Summarise a model file.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Missing {
    Zero,
    Drop,
    Error,
}

impl Missing {
    fn policy(self) -> MissingPolicy {
        match self {
            Missing::Zero => MissingPolicy::ZeroFill,
            Missing::Drop => MissingPolicy::DropRow,
            Missing::Error => MissingPolicy::Error,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Missing::Zero => "zero",
            Missing::Drop => "drop",
            Missing::Error => "error",
        }
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated target column names.
    #[arg(long, value_delimiter = ',', required = true)]
    pub targets: Vec<String>,
    /// Comma-separated columns to drop (e.g. row ids).
    #[arg(long, value_delimiter = ',')]
    pub ignore: Vec<String>,
    #[arg(long, value_enum, default_value = "zero")]
    pub missing: Missing,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset, CliError> {
        Ok(load_csv_with(&self.data, &self.targets, &self.ignore, self.missing.policy())?)
    }

    fn echo(&self) -> String {
        let mut s = format!(
            "--data {} --targets {} --missing {}",
            self.data.display(),
            self.targets.join(","),
            self.missing.name()
        );
        if !self.ignore.is_empty() {
            s.push_str(&format!(" --ignore {}", self.ignore.join(",")));
        }
        s
    }
}

#[derive(Debug, Args)]
pub struct ForestArgs {
    #[arg(long, default_value_t = 500)]
    pub estimators: usize,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub min_leaf: usize,
    /// `all`, `sqrt` or a fraction in (0, 1].
    #[arg(long, default_value = "sqrt")]
    pub max_features: MaxFeatures,
    #[arg(long)]
    pub no_bootstrap: bool,
    /// Scale targets to unit variance inside the split criterion.
    #[arg(long)]
    pub normalize_targets: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ForestArgs {
    fn config(&self) -> ForestConfig {
        ForestConfig {
            n_estimators: self.estimators,
            max_depth: self.max_depth,
            min_samples_leaf: self.min_leaf,
            max_features: self.max_features,
            bootstrap: !self.no_bootstrap,
            seed: self.seed,
            normalize_targets: self.normalize_targets,
        }
    }

    fn echo(&self) -> String {
        let mut s = format!(
            "--estimators {} --min-leaf {} --max-features {} --seed {}",
            self.estimators, self.min_leaf, self.max_features, self.seed
        );
        if let Some(d) = self.max_depth {
            s.push_str(&format!(" --max-depth {d}"));
        }
        if self.no_bootstrap {
            s.push_str(" --no-bootstrap");
        }
        if self.normalize_targets {
            s.push_str(" --normalize-targets");
        }
        s
    }
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    #[arg(long, default_value_t = 0.1)]
    pub min_support: f64,
    #[arg(long, default_value = "asc")]
    pub rank_order: RankOrder,
    /// `worst-side`, `per-tree` or `forest`.
    #[arg(long, default_value = "worst-side")]
    pub substitution: Substitution,
}

impl ReduceArgs {
    fn options(&self) -> Result<ExplainOptions, CliError> {
        if !(self.min_support > 0.0 && self.min_support <= 1.0) {
            return Err(CliError::Usage(format!(
                "--min-support must be in (0, 1], got {}",
                self.min_support
            )));
        }
        Ok(ExplainOptions {
            min_support: self.min_support,
            reduce: ReduceOptions {
                rank_order: self.rank_order,
                substitution: self.substitution,
            },
        })
    }

    fn echo(&self) -> String {
        format!(
            "--min-support {} --rank-order {} --substitution {}",
            self.min_support, self.rank_order, self.substitution
        )
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Inline comma-separated feature values.
    #[arg(long, conflicts_with = "row")]
    pub instance: Option<String>,
    /// CSV holding the instance (columns matched by feature name).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Zero-based data row of the instance.
    #[arg(long, requires = "data")]
    pub row: Option<usize>,
    /// One value (global), one per target (per-target), or `auto` for the
    /// cross-validated forest MAE on `--data`.
    #[arg(long)]
    pub allowed_error: String,
    #[arg(long)]
    pub scheme: Option<Scheme>,
    /// Folds used by `--allowed-error auto`.
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[command(flatten)]
    pub reduce: ReduceArgs,
    #[arg(long, default_value_t = 2)]
    pub precision: usize,
    /// Probe the rule with this many random perturbations.
    #[arg(long)]
    pub check_conclusive: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write a JSON report (counts, feature set, errors, p', timing).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    /// Comma-separated allowed errors; `a:b:c` gives per-target values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub allowed_errors: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[command(flatten)]
    pub reduce: ReduceArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Generate `n,d,m` synthetic data instead of reading a CSV.
    #[arg(long, value_delimiter = ',', num_args = 1, conflicts_with = "data")]
    pub synthetic: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<String>,
    /// Standardize targets to zero mean and unit variance first.
    #[arg(long)]
    pub standardize: bool,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.15,0.2,0.25,0.3")]
    pub allowed_errors: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    pub instances: usize,
    #[command(flatten)]
    pub reduce: ReduceArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(Error::Io(e))
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    1
                }
            };
        }
    };
    let result = match &cli.command {
        Command::Train(a) => train(a, out, err),
        Command::Explain(a) => explain_cmd(a, out, err),
        Command::Evaluate(a) => evaluate(a, out, err),
        Command::Bench(a) => bench(a, out, err),
        Command::Inspect(a) => inspect(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
        Err(CliError::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn train(a: &TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let config = a.forest.config();
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let echo = format!("xmtr train {} {} --out {}", a.data.echo(), a.forest.echo(), a.out.display());
    writeln!(err, "# {echo}")?;
    let data = a.data.load()?;
    let forest = forest::fit(&data, &config)?;
    forest::save_with_header(&forest, &a.out, Some(&echo))?;
    writeln!(
        out,
        "trained {} trees on {} rows ({} features, {} targets) -> {}",
        forest.n_trees(),
        data.n_rows(),
        data.n_features(),
        data.n_targets(),
        a.out.display()
    )?;
    Ok(())
}

fn parse_values(text: &str, sep: char) -> Result<Vec<f64>, CliError> {
    text.split(sep)
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Usage(format!("`{v}` is not a finite number")))
        })
        .collect()
}

/// Builds the budget from parsed values: one value selects the global
/// scheme, `m` values the per-target one, unless `scheme` overrides.
fn allowed_from(values: Vec<f64>, scheme: Option<Scheme>, m: usize) -> Result<AllowedError, CliError> {
    let allowed = match (scheme, values.len()) {
        (Some(Scheme::GlobalMean) | None, 1) => AllowedError::Global(values[0]),
        (Some(Scheme::PerTarget), n) if n == m => AllowedError::PerTarget(values),
        (None, n) if n == m => AllowedError::PerTarget(values),
        (Some(s), n) => {
            return Err(CliError::Usage(format!(
                "--scheme {s} does not match {n} allowed-error value(s) for {m} target(s)"
            )))
        }
        (None, n) => {
            return Err(CliError::Usage(format!(
                "expected 1 or {m} allowed-error values, got {n}"
            )))
        }
    };
    allowed
        .validate(m)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(allowed)
}

/// Reads row `row` of a CSV, picking the model's feature columns by name.
fn instance_from_csv(path: &Path, row: usize, forest: &Forest) -> Result<Vec<f64>, CliError> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()).into());
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(Error::from)?;
    let header: Vec<String> = reader.headers().map_err(Error::from)?.iter().map(str::to_owned).collect();
    let columns = forest
        .feature_names()
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::Data(Error::UnknownColumn(name.clone())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let record = reader
        .records()
        .nth(row)
        .ok_or_else(|| CliError::Usage(format!("row {row} is past the end of {}", path.display())))?
        .map_err(Error::from)?;
    columns
        .iter()
        .zip(forest.feature_names())
        .map(|(&c, name)| {
            let cell = record.get(c).unwrap_or("");
            if cell.is_empty() {
                // matches the zero-fill ingestion policy
                return Ok(0.0);
            }
            cell.parse::<f64>().map_err(|_| {
                CliError::Data(Error::NonNumeric {
                    column: name.clone(),
                    row,
                    value: cell.to_owned(),
                })
            })
        })
        .collect()
}

fn explain_cmd(a: &ExplainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let options = a.reduce.options()?;
    let forest = forest::load(&a.model)?;
    let d = forest.n_features();
    let m = forest.n_targets();

    let (x, instance_echo) = match (&a.instance, &a.data, a.row) {
        (Some(text), _, None) => {
            let x = parse_values(text, ',')?;
            if x.len() != d {
                return Err(CliError::Usage(format!(
                    "instance has {} values but the model expects {d} features",
                    x.len()
                )));
            }
            let echo = x.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
            (x, format!("--instance {echo}"))
        }
        (None, Some(path), Some(row)) => (
            instance_from_csv(path, row, &forest)?,
            format!("--data {} --row {row}", path.display()),
        ),
        _ => {
            return Err(CliError::Usage(
                "give either --instance v1,v2,... or --data FILE --row N".into(),
            ))
        }
    };

    let allowed = if a.allowed_error.trim() == "auto" {
        let path = a
            .data
            .as_ref()
            .ok_or_else(|| CliError::Usage("--allowed-error auto needs --data".into()))?;
        let data = training_view(path, &forest)?;
        let per_target = default_allowed_error(&data, forest.config(), a.folds, a.seed)?;
        match a.scheme {
            Some(Scheme::GlobalMean) => per_target.to_global(),
            _ if m == 1 => per_target.to_global(),
            _ => per_target,
        }
    } else {
        allowed_from(parse_values(&a.allowed_error, ',')?, a.scheme, m)?
    };

    let mut echo = format!(
        "xmtr explain --model {} {instance_echo} --allowed-error {} --scheme {} {} --precision {} --seed {}",
        a.model.display(),
        allowed.to_string().replace(';', ","),
        allowed.scheme(),
        a.reduce.echo(),
        a.precision,
        a.seed
    );
    if let Some(n) = a.check_conclusive {
        echo.push_str(&format!(" --check-conclusive {n}"));
    }
    writeln!(err, "# {echo}")?;

    let start = Instant::now();
    let explanation = explain(&forest, &x, &allowed, &options)?;
    let seconds = start.elapsed().as_secs_f64();
    let rule = &explanation.rule;
    writeln!(
        out,
        "{}",
        render_rule(rule, forest.feature_names(), forest.target_names(), a.precision)
    )?;

    let conclusive = match a.check_conclusive {
        Some(trials) if trials > 0 => {
            let report = check_conclusive(rule, &explanation.reduction, &forest, &x, trials, a.seed)?;
            writeln!(
                err,
                "# conclusive check: trials={} envelope_violations={} kept_leaf_changes={} max_deviation={:?}",
                report.trials, report.envelope_violations, report.kept_leaf_changes, report.max_deviation
            )?;
            Some(json!({
                "trials": report.trials,
                "envelope_violations": report.envelope_violations,
                "kept_leaf_changes": report.kept_leaf_changes,
                "max_deviation": report.max_deviation,
            }))
        }
        Some(_) => return Err(CliError::Usage("--check-conclusive needs at least 1 trial".into())),
        None => None,
    };

    if let Some(path) = &a.report {
        let r = &explanation.reduction;
        let names = |set: &std::collections::BTreeSet<usize>| -> Vec<String> {
            set.iter().map(|&f| forest.feature_names()[f].clone()).collect()
        };
        let report = json!({
            "kept_paths": r.kept.len(),
            "excluded_paths": r.excluded.len(),
            "feature_set": names(&r.feature_set),
            "rule_length": rule.len(),
            "allowed_error": allowed.to_string(),
            "scheme": allowed.scheme().to_string(),
            "local_errors": r.local_errors,
            "adjusted_prediction": r.adjusted_prediction,
            "original_prediction": r.original_prediction,
            "conclusive": conclusive,
            "timing_seconds": seconds,
        });
        let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Internal(e.to_string()))?;
        std::fs::write(path, format!("# {echo}\n{text}\n"))?;
    }
    Ok(())
}

/// Loads `path` restricted to the model's features and targets.
fn training_view(path: &Path, forest: &Forest) -> Result<Dataset, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(Error::from)?;
    let header: Vec<String> = reader.headers().map_err(Error::from)?.iter().map(str::to_owned).collect();
    let ignore: Vec<String> = header
        .iter()
        .filter(|h| !forest.feature_names().contains(h) && !forest.target_names().contains(h))
        .cloned()
        .collect();
    let data = load_csv_with(path, forest.target_names(), &ignore, MissingPolicy::ZeroFill)?;
    if data.feature_names() != forest.feature_names() {
        return Err(Error::InvalidDataset("CSV feature columns do not match the model".into()).into());
    }
    Ok(data)
}

fn evaluate(a: &EvaluateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let options = a.reduce.options()?;
    let config = a.forest.config();
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let data = a.data.load()?;
    let m = data.n_targets();
    let allowed = a
        .allowed_errors
        .iter()
        .map(|entry| allowed_from(parse_values(entry, ':')?, None, m))
        .collect::<Result<Vec<_>, _>>()?;
    let echo = format!(
        "xmtr evaluate {} {} --allowed-errors {} --folds {} {}",
        a.data.echo(),
        a.forest.echo(),
        a.allowed_errors.join(","),
        a.folds,
        a.reduce.echo()
    );
    writeln!(err, "# {echo}")?;
    if a.folds < 2 || a.folds > data.n_rows() {
        return Err(CliError::Usage(format!(
            "--folds must be in [2, {}], got {}",
            data.n_rows(),
            a.folds
        )));
    }
    let report = run_experiment(&data, &config, &allowed, a.folds, a.forest.seed, &options)?;
    writeln!(out, "{REPORT_HEADER}")?;
    for line in report_lines(&report) {
        writeln!(out, "{line}")?;
    }
    writeln!(out, "# forest cv mae: {:.6}", report.forest_mae)?;
    if let Some(path) = &a.out {
        write_report_csv(&report, path, Some(&echo))?;
    }
    Ok(())
}

fn bench(a: &BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let options = a.reduce.options()?;
    let config = a.forest.config();
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if a.allowed_errors.windows(2).any(|w| w[0] > w[1]) || a.allowed_errors.iter().any(|v| *v < 0.0) {
        return Err(CliError::Usage("--allowed-errors must be non-negative and ascending".into()));
    }
    let (data, source) = match (&a.synthetic, &a.data) {
        (Some(dims), None) => {
            let [n, d, m] = dims[..] else {
                return Err(CliError::Usage("--synthetic expects n,d,m".into()));
            };
            let data = make_synthetic(n, d, m, a.noise, a.forest.seed)?;
            (data, format!("--synthetic {n},{d},{m} --noise {}", a.noise))
        }
        (None, Some(path)) => {
            if a.targets.is_empty() {
                return Err(CliError::Usage("--data needs --targets".into()));
            }
            let data = load_csv_with(path, &a.targets, &[], MissingPolicy::ZeroFill)?;
            (data, format!("--data {} --targets {}", path.display(), a.targets.join(",")))
        }
        _ => return Err(CliError::Usage("give either --synthetic n,d,m or --data FILE".into())),
    };
    let data = if a.standardize { data.standardize_targets()? } else { data };
    let echo = format!(
        "xmtr bench {source}{} {} --allowed-errors {} --instances {} {}",
        if a.standardize { " --standardize" } else { "" },
        a.forest.echo(),
        a.allowed_errors.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
        a.instances,
        a.reduce.echo()
    );
    writeln!(err, "# {echo}")?;
    let rows = scalability_bench(&data, &config, &a.allowed_errors, a.instances, a.forest.seed, &options)?;
    writeln!(out, "{BENCH_HEADER}")?;
    for line in bench_lines(&rows) {
        writeln!(out, "{line}")?;
    }
    if let Some(path) = &a.out {
        write_bench_csv(&rows, path, Some(&echo))?;
    }
    Ok(())
}

fn inspect(a: &InspectArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let forest = forest::load(&a.model)?;
    let depths: Vec<usize> = forest.trees().iter().map(|t| t.depth()).collect();
    let leaves: usize = forest.trees().iter().map(|t| t.n_leaves()).sum();
    let c = forest.config();
    writeln!(out, "trees: {}", forest.n_trees())?;
    writeln!(
        out,
        "depth: min {} mean {:.2} max {}",
        depths.iter().min().unwrap_or(&0),
        depths.iter().sum::<usize>() as f64 / depths.len() as f64,
        depths.iter().max().unwrap_or(&0)
    )?;
    writeln!(out, "leaves: {leaves}")?;
    writeln!(
        out,
        "config: estimators={} max_depth={} min_leaf={} max_features={} bootstrap={} normalize_targets={} seed={}",
        c.n_estimators,
        c.max_depth.map_or("none".to_owned(), |d| d.to_string()),
        c.min_samples_leaf,
        c.max_features,
        c.bootstrap,
        c.normalize_targets,
        c.seed
    )?;
    writeln!(out, "targets (leaf value range over all trees):")?;
    for (t, name) in forest.target_names().iter().enumerate() {
        let lo = forest.trees().iter().map(|tr| tr.leaf_min()[t]).fold(f64::INFINITY, f64::min);
        let hi = forest.trees().iter().map(|tr| tr.leaf_max()[t]).fold(f64::NEG_INFINITY, f64::max);
        writeln!(out, "  {name}: [{lo}, {hi}]")?;
    }
    writeln!(out, "features (training range):")?;
    for (name, (lo, hi)) in forest.feature_names().iter().zip(forest.feature_bounds()) {
        writeln!(out, "  {name}: [{lo}, {hi}]")?;
    }
    Ok(())
}
