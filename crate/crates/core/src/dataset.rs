//! Tabular multi-target regression data: CSV ingestion, missing-value
//! policy and deterministic k-fold plans.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// How empty CSV cells are handled at load time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingPolicy {
    /// Replace the empty cell with `0.0`.
    ZeroFill,
    /// Drop every row that has an empty cell.
    DropRow,
    /// Reject the file.
    Error,
}

/// Row-major feature and target matrices with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    targets: Vec<f64>,
    n_rows: usize,
    feature_names: Vec<String>,
    target_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from per-row vectors, validating shape, finiteness
    /// and name uniqueness.
    pub fn new(
        features: Vec<Vec<f64>>,
        targets: Vec<Vec<f64>>,
        feature_names: Vec<String>,
        target_names: Vec<String>,
    ) -> Result<Self> {
        if features.len() != targets.len() {
            return Err(Error::InvalidDataset(format!(
                "{} feature rows but {} target rows",
                features.len(),
                targets.len()
            )));
        }
        let d = feature_names.len();
        let m = target_names.len();
        let n_rows = features.len();
        let mut flat_x = Vec::with_capacity(n_rows * d);
        let mut flat_y = Vec::with_capacity(n_rows * m);
        for (row, (x, y)) in features.into_iter().zip(targets).enumerate() {
            if x.len() != d || y.len() != m {
                return Err(Error::InvalidDataset(format!("row {row} has the wrong width")));
            }
            flat_x.extend(x);
            flat_y.extend(y);
        }
        Self::from_flat(flat_x, flat_y, n_rows, feature_names, target_names)
    }

    pub(crate) fn from_flat(
        features: Vec<f64>,
        targets: Vec<f64>,
        n_rows: usize,
        feature_names: Vec<String>,
        target_names: Vec<String>,
    ) -> Result<Self> {
        if n_rows == 0 {
            return Err(Error::EmptyDataset);
        }
        if feature_names.is_empty() || target_names.is_empty() {
            return Err(Error::InvalidDataset(
                "need at least one feature and one target".into(),
            ));
        }
        check_unique(&feature_names)?;
        check_unique(&target_names)?;
        if features.len() != n_rows * feature_names.len()
            || targets.len() != n_rows * target_names.len()
        {
            return Err(Error::InvalidDataset("matrix sizes do not match names".into()));
        }
        if features.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite value".into()));
        }
        Ok(Self {
            features,
            targets,
            n_rows,
            feature_names,
            target_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_targets(&self) -> usize {
        self.target_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_names(&self) -> &[String] {
        &self.target_names
    }

    pub fn features(&self, row: usize) -> &[f64] {
        let d = self.n_features();
        &self.features[row * d..(row + 1) * d]
    }

    pub fn targets(&self, row: usize) -> &[f64] {
        let m = self.n_targets();
        &self.targets[row * m..(row + 1) * m]
    }

    pub fn feature(&self, row: usize, feature: usize) -> f64 {
        self.features[row * self.n_features() + feature]
    }

    pub fn target(&self, row: usize, target: usize) -> f64 {
        self.targets[row * self.n_targets() + target]
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let mut x = Vec::with_capacity(rows.len() * self.n_features());
        let mut y = Vec::with_capacity(rows.len() * self.n_targets());
        for &r in rows {
            x.extend_from_slice(self.features(r));
            y.extend_from_slice(self.targets(r));
        }
        Self::from_flat(
            x,
            y,
            rows.len(),
            self.feature_names.clone(),
            self.target_names.clone(),
        )
    }

    /// Applies `f` to every target cell.
    pub fn map_targets(&self, f: impl Fn(usize, f64) -> f64) -> Result<Self> {
        let m = self.n_targets();
        let y = self
            .targets
            .iter()
            .enumerate()
            .map(|(i, &v)| f(i % m, v))
            .collect();
        Self::from_flat(
            self.features.clone(),
            y,
            self.n_rows,
            self.feature_names.clone(),
            self.target_names.clone(),
        )
    }

    /// Rescales every target column to zero mean and unit (population)
    /// standard deviation. Constant columns are only centred.
    pub fn standardize_targets(&self) -> Result<Self> {
        let m = self.n_targets();
        let n = self.n_rows as f64;
        let mut mean = vec![0.0; m];
        for r in 0..self.n_rows {
            for (t, v) in self.targets(r).iter().enumerate() {
                mean[t] += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= n);
        let mut var = vec![0.0; m];
        for r in 0..self.n_rows {
            for (t, v) in self.targets(r).iter().enumerate() {
                var[t] += (v - mean[t]).powi(2);
            }
        }
        let sd: Vec<f64> = var
            .iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        self.map_targets(|t, v| (v - mean[t]) / sd[t])
    }

    /// Per-feature `(min, max)` over all rows.
    pub fn feature_bounds(&self) -> Vec<(f64, f64)> {
        (0..self.n_features())
            .map(|f| {
                (0..self.n_rows).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                    let v = self.feature(r, f);
                    (lo.min(v), hi.max(v))
                })
            })
            .collect()
    }

    /// Writes features then targets, header first. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.feature_names.iter().chain(&self.target_names))?;
        for r in 0..self.n_rows {
            let record: Vec<String> = self
                .features(r)
                .iter()
                .chain(self.targets(r))
                .map(|v| v.to_string())
                .collect();
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for name in names {
        if !seen.insert(name.as_str()) {
            return Err(Error::DuplicateColumn(name.clone()));
        }
    }
    Ok(())
}

/// Loads a CSV with a header row. Target columns are taken in the order
/// given; every other column (minus `ignore`) becomes a feature, in header
/// order.
pub fn load_csv(
    path: impl AsRef<Path>,
    target_columns: &[String],
    missing: MissingPolicy,
) -> Result<Dataset> {
    load_csv_with(path, target_columns, &[], missing)
}

/// Like [`load_csv`], additionally skipping the named columns entirely.
pub fn load_csv_with(
    path: impl AsRef<Path>,
    target_columns: &[String],
    ignore: &[String],
    missing: MissingPolicy,
) -> Result<Dataset> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    check_unique(&header)?;

    let position = |name: &String| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.clone()))
    };
    let target_idx = target_columns
        .iter()
        .map(position)
        .collect::<Result<Vec<_>>>()?;
    let ignore_idx = ignore.iter().map(position).collect::<Result<Vec<_>>>()?;
    let feature_idx: Vec<usize> = (0..header.len())
        .filter(|i| !target_idx.contains(i) && !ignore_idx.contains(i))
        .collect();

    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut n_rows = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let mut row_x = Vec::with_capacity(feature_idx.len());
        let mut row_y = Vec::with_capacity(target_idx.len());
        let mut has_missing = false;
        for (cols, out) in [(&feature_idx, &mut row_x), (&target_idx, &mut row_y)] {
            for &c in cols.iter() {
                let cell = record.get(c).unwrap_or("");
                if cell.is_empty() {
                    if missing == MissingPolicy::Error {
                        return Err(Error::MissingValue {
                            column: header[c].clone(),
                            row,
                        });
                    }
                    has_missing = true;
                    out.push(0.0);
                    continue;
                }
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => out.push(v),
                    _ => {
                        return Err(Error::NonNumeric {
                            column: header[c].clone(),
                            row,
                            value: cell.to_owned(),
                        })
                    }
                }
            }
        }
        if has_missing && missing == MissingPolicy::DropRow {
            continue;
        }
        x.extend(row_x);
        y.extend(row_y);
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(Error::EmptyDataset);
    }
    Dataset::from_flat(
        x,
        y,
        n_rows,
        feature_idx.iter().map(|&i| header[i].clone()).collect(),
        target_idx.iter().map(|&i| header[i].clone()).collect(),
    )
}

/// Assignment of rows to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    /// Row indices of the test split of `fold`, ascending.
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        self.rows_where(|f| f == fold)
    }

    /// Row indices of the training split of `fold`, ascending.
    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        self.rows_where(|f| f != fold)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }

    fn rows_where(&self, pred: impl Fn(usize) -> bool) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &f)| pred(f))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Shuffles rows with a seeded generator and deals them round-robin into
/// `k` folds, so fold sizes differ by at most one.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(Error::FoldRange { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignments = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        assignments[row] = pos % k;
    }
    Ok(FoldPlan { k, assignments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn loads_complete_csv() {
        let f = write_tmp("a,b,t1,t2\n1,2,3,4\n5,6,7,8\n9,10,11,12\n");
        let ds = load_csv(f.path(), &names(&["t1", "t2"]), MissingPolicy::Error).unwrap();
        assert_eq!((ds.n_rows(), ds.n_features(), ds.n_targets()), (3, 2, 2));
        assert_eq!(ds.features(1), &[5.0, 6.0]);
        assert_eq!(ds.targets(2), &[11.0, 12.0]);
    }

    #[test]
    fn target_order_follows_request_and_features_follow_header() {
        let f = write_tmp("t1,a,t2,b\n1,2,3,4\n");
        let ds = load_csv(f.path(), &names(&["t2", "t1"]), MissingPolicy::Error).unwrap();
        assert_eq!(ds.feature_names(), &names(&["a", "b"])[..]);
        assert_eq!(ds.target_names(), &names(&["t2", "t1"])[..]);
        assert_eq!(ds.targets(0), &[3.0, 1.0]);
    }

    #[test]
    fn zero_fill_and_drop_row() {
        let f = write_tmp("a,b,t1,t2\n1,2,3,4\n,6,7,8\n9,10,11,12\n");
        let t = names(&["t1", "t2"]);
        let filled = load_csv(f.path(), &t, MissingPolicy::ZeroFill).unwrap();
        assert_eq!(filled.n_rows(), 3);
        assert_eq!(filled.feature(1, 0), 0.0);

        let dropped = load_csv(f.path(), &t, MissingPolicy::DropRow).unwrap();
        assert_eq!(dropped.n_rows(), 2);
        assert_eq!(dropped.n_features(), 2);

        let err = load_csv(f.path(), &t, MissingPolicy::Error).unwrap_err();
        assert!(matches!(err, Error::MissingValue { row: 1, .. }));
    }

    #[test]
    fn load_errors() {
        let err = load_csv("/nonexistent/x.csv", &names(&["t"]), MissingPolicy::Error).unwrap_err();
        assert!(matches!(err, Error::FileNotFound(_)));

        let f = write_tmp("a,t\n1,2\n");
        let err = load_csv(f.path(), &names(&["nope"]), MissingPolicy::Error).unwrap_err();
        assert!(matches!(err, Error::UnknownColumn(_)));

        let f = write_tmp("a,colour,t\n1,red,2\n");
        for policy in [MissingPolicy::Error, MissingPolicy::ZeroFill, MissingPolicy::DropRow] {
            let err = load_csv(f.path(), &names(&["t"]), policy).unwrap_err();
            assert!(matches!(err, Error::NonNumeric { .. }));
        }

        let f = write_tmp("a,t\n,2\n3,\n");
        let err = load_csv(f.path(), &names(&["t"]), MissingPolicy::DropRow).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset));
    }

    #[test]
    fn ignore_columns_are_skipped() {
        let f = write_tmp("No,a,t\n1,5,6\n2,7,8\n");
        let ds =
            load_csv_with(f.path(), &names(&["t"]), &names(&["No"]), MissingPolicy::Error).unwrap();
        assert_eq!(ds.feature_names(), &names(&["a"])[..]);
    }

    #[test]
    fn kfold_examples() {
        let plan = kfold(10, 10, 7).unwrap();
        assert!(plan.fold_sizes().iter().all(|&s| s == 1));

        let plan = kfold(103, 10, 0).unwrap();
        let mut sizes = plan.fold_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![10, 10, 10, 10, 10, 10, 10, 11, 11, 11]);

        assert_eq!(kfold(10, 3, 5).unwrap(), kfold(10, 3, 5).unwrap());
    }

    #[test]
    fn kfold_rejects_bad_k() {
        assert!(matches!(kfold(5, 1, 0), Err(Error::FoldRange { .. })));
        assert!(matches!(kfold(5, 6, 0), Err(Error::FoldRange { .. })));
    }

    #[test]
    fn standardized_targets_have_unit_scale() {
        let ds = Dataset::new(
            vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
            vec![vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0], vec![7.0, 5.0]],
            names(&["x"]),
            names(&["a", "b"]),
        )
        .unwrap();
        let s = ds.standardize_targets().unwrap();
        let col: Vec<f64> = (0..4).map(|r| s.target(r, 0)).collect();
        let mean: f64 = col.iter().sum::<f64>() / 4.0;
        let var: f64 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        assert!((0..4).all(|r| s.target(r, 1) == 0.0));
    }

    #[test]
    fn rejects_duplicate_names() {
        let err = Dataset::new(vec![vec![1.0, 2.0]], vec![vec![1.0]], names(&["a", "a"]), names(&["t"]))
            .unwrap_err();
        assert!(matches!(err, Error::DuplicateColumn(_)));
    }
}
