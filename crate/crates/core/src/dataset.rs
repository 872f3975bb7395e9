//! Binary-labelled tabular data: CSV ingestion, min-max scaling and stratified folds.

use std::fmt;
use std::io::Read;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class of an instance in a binary problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    /// `+1.0` or `-1.0`.
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    /// `1.0` for positives, `0.0` for negatives.
    #[inline]
    pub fn indicator(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => 0.0,
        }
    }

    #[inline]
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }

    pub fn from_sign(value: f64) -> Label {
        if value >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Positive => f.write_str("1"),
            Label::Negative => f.write_str("-1"),
        }
    }
}

/// Feature matrix (rows are instances) with one binary label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    features: Array2<f64>,
    labels: Vec<Label>,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset, checking that it has at least two rows, one feature, finite
    /// values and both classes.
    pub fn new(name: impl Into<String>, features: Array2<f64>, labels: Vec<Label>) -> Result<Self> {
        let (n, d) = features.dim();
        if n != labels.len() {
            return Err(Error::Shape(format!(
                "{n} feature rows but {} labels",
                labels.len()
            )));
        }
        if n < 2 {
            return Err(Error::Validation(format!("need at least 2 instances, got {n}")));
        }
        if d == 0 {
            return Err(Error::Validation("need at least 1 feature".into()));
        }
        if let Some(((row, column), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value at row {row}, column {column}"
            )));
        }
        let positives = labels.iter().filter(|l| l.is_positive()).count();
        if positives == 0 || positives == n {
            return Err(Error::Validation("single class: both labels must be present".into()));
        }
        Ok(Dataset {
            name: name.into(),
            features,
            labels,
            feature_names: None,
        })
    }

    /// Same as [`Dataset::new`] with labels given as signs (`>= 0` is positive).
    pub fn from_signs(name: impl Into<String>, features: Array2<f64>, signs: &[f64]) -> Result<Self> {
        Self::new(name, features, signs.iter().map(|&s| Label::from_sign(s)).collect())
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_features() {
            return Err(Error::Shape(format!(
                "{} feature names for {} features",
                names.len(),
                self.n_features()
            )));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn n_instances(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|l| l.is_positive()).count()
    }

    pub fn n_negative(&self) -> usize {
        self.n_instances() - self.n_positive()
    }

    /// Labels as `±1.0`.
    pub fn signs(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.sign()).collect()
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let features = self.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let mut out = Dataset::new(self.name.clone(), features, labels)?;
        out.feature_names = self.feature_names.clone();
        Ok(out)
    }

    /// Same labels, new feature matrix (e.g. an embedding of the same rows).
    pub fn with_features(&self, features: Array2<f64>) -> Result<Dataset> {
        Dataset::new(self.name.clone(), features, self.labels.clone())
    }

    /// Positive and negative rows swapped.
    pub fn flipped_labels(&self) -> Dataset {
        Dataset {
            name: self.name.clone(),
            features: self.features.clone(),
            labels: self.labels.iter().map(|l| l.flipped()).collect(),
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Reads a CSV file whose last column is the class. Rows whose class equals
/// `positive_label` become positives; everything else is negative.
pub fn load_csv(path: impl AsRef<Path>, positive_label: &str, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    read_csv(file, &name, positive_label, has_header)
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: Read>(reader: R, name: &str, positive_label: &str, has_header: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = if has_header {
        Some(rdr.headers()?.iter().map(str::to_owned).collect::<Vec<_>>())
    } else {
        None
    };

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("row {row}: {e}")))?;
        if record.len() < 2 {
            return Err(Error::Format(format!(
                "row {row}: need at least one feature column and a class column"
            )));
        }
        let d = record.len() - 1;
        if *width.get_or_insert(d) != d {
            return Err(Error::Format(format!("row {row}: expected {} columns, got {}", width.unwrap() + 1, d + 1)));
        }
        for (column, cell) in record.iter().take(d).enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column,
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column,
                    message: format!("'{cell}' is not finite"),
                });
            }
            values.push(v);
        }
        let class = &record[d];
        labels.push(if class == positive_label {
            Label::Positive
        } else {
            Label::Negative
        });
    }

    let Some(d) = width else {
        return Err(Error::Format("empty file".into()));
    };
    let n = labels.len();
    let features = Array2::from_shape_vec((n, d), values).map_err(|e| Error::Shape(e.to_string()))?;
    let ds = Dataset::new(name, features, labels)?;
    match header {
        Some(h) if h.len() == d + 1 => ds.with_feature_names(h[..d].to_vec()),
        _ => Ok(ds),
    }
}

/// Per-feature `(min, max)` recorded from a training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn fit(x: ArrayView2<'_, f64>) -> MinMax {
        let d = x.ncols();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for row in x.rows() {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        MinMax { min, max }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Rescales to `[0, 1]` using the stored statistics, clipping values outside the
    /// recorded range. Constant features map to 0.
    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::Shape(format!(
                "normalizer expects {} columns, got {}",
                self.dim(),
                x.ncols()
            )));
        }
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                let span = self.max[j] - self.min[j];
                *v = if span > 0.0 {
                    ((*v - self.min[j]) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                };
            }
        }
        Ok(out)
    }
}

/// Min-max scales every feature of `data` and returns the statistics used.
pub fn normalize_minmax(data: &Dataset) -> (Dataset, MinMax) {
    let stats = MinMax::fit(data.features.view());
    let features = stats.apply(data.features.view()).expect("own statistics");
    let out = Dataset {
        features,
        ..data.clone()
    };
    (out, stats)
}

/// Assignment of every instance to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }
}

/// Stratified k-fold assignment. Each class is shuffled with `seed` and dealt
/// round-robin, so per-fold class counts differ by at most one.
pub fn stratified_kfold(labels: &[Label], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Validation(format!("fold count must be at least 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0; labels.len()];
    let mut start = 0;
    for class in [Label::Positive, Label::Negative] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::Validation(format!(
                "class {class} has {} members, fewer than {k} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (i, &idx) in members.iter().enumerate() {
            assignments[idx] = (start + i) % k;
        }
        // continue where this class stopped so total fold sizes stay balanced
        start = (start + members.len()) % k;
    }
    Ok(FoldPlan { k, assignments, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn labels(pos: usize, neg: usize) -> Vec<Label> {
        let mut l = vec![Label::Positive; pos];
        l.extend(vec![Label::Negative; neg]);
        l
    }

    #[test]
    fn loads_two_rows() {
        let ds = read_csv("0.1,0.2,pos\n0.9,0.8,neg\n".as_bytes(), "t", "pos", false).unwrap();
        assert_eq!(ds.n_instances(), 2);
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.labels(), &[Label::Positive, Label::Negative]);
        assert_eq!(ds.features(), &array![[0.1, 0.2], [0.9, 0.8]]);
    }

    #[test]
    fn header_becomes_feature_names() {
        let ds = read_csv("a,b,class\n1,2,x\n3,4,y\n".as_bytes(), "t", "x", true).unwrap();
        assert_eq!(ds.feature_names().unwrap(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn single_class_rejected() {
        let err = read_csv("0.1,0.2,pos\n0.9,0.8,pos\n".as_bytes(), "t", "pos", false).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("single class"));
    }

    #[test]
    fn bad_cell_reports_position() {
        let err = read_csv("0.1,0.2,pos\nabc,0.8,neg\n".as_bytes(), "t", "pos", false).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => assert_eq!((row, column), (1, 0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_format_error() {
        let err = read_csv("".as_bytes(), "t", "pos", false).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn minmax_column() {
        let ds = Dataset::new("t", array![[2.0, 5.0], [4.0, 5.0], [6.0, 5.0]], labels(1, 2)).unwrap();
        let (norm, stats) = normalize_minmax(&ds);
        assert_eq!(norm.features().column(0).to_vec(), vec![0.0, 0.5, 1.0]);
        assert_eq!(norm.features().column(1).to_vec(), vec![0.0, 0.0, 0.0]);
        assert_eq!(stats.min, vec![2.0, 5.0]);
    }

    #[test]
    fn held_out_values_are_clipped() {
        let stats = MinMax {
            min: vec![0.0],
            max: vec![10.0],
        };
        let out = stats.apply(array![[12.0], [-3.0], [5.0]].view()).unwrap();
        assert_eq!(out.column(0).to_vec(), vec![1.0, 0.0, 0.5]);
    }

    #[test]
    fn exact_folds() {
        let plan = stratified_kfold(&labels(10, 10), 5, 7).unwrap();
        for f in 0..5 {
            let test = plan.test_indices(f);
            assert_eq!(test.iter().filter(|&&i| i < 10).count(), 2);
            assert_eq!(test.iter().filter(|&&i| i >= 10).count(), 2);
        }
    }

    #[test]
    fn uneven_positive_counts() {
        let l = labels(11, 10);
        let plan = stratified_kfold(&l, 5, 3).unwrap();
        let mut counts: Vec<usize> = (0..5)
            .map(|f| plan.test_indices(f).iter().filter(|&&i| l[i].is_positive()).count())
            .collect();
        counts.sort_unstable();
        assert_eq!(counts, vec![2, 2, 2, 2, 3]);
    }

    #[test]
    fn folds_are_deterministic() {
        let l = labels(13, 9);
        assert_eq!(stratified_kfold(&l, 4, 99).unwrap(), stratified_kfold(&l, 4, 99).unwrap());
    }

    #[test]
    fn too_few_members() {
        assert!(matches!(stratified_kfold(&labels(3, 10), 5, 0), Err(Error::Validation(_))));
    }

    proptest! {
        #[test]
        fn stratification_bound(pos in 2usize..40, neg in 2usize..40, k in 2usize..6, seed: u64) {
            prop_assume!(pos >= k && neg >= k);
            let l = labels(pos, neg);
            let plan = stratified_kfold(&l, k, seed).unwrap();
            let mut seen = vec![false; l.len()];
            for f in 0..k {
                let test = plan.test_indices(f);
                prop_assert!(!test.is_empty());
                for &i in &test {
                    prop_assert!(!seen[i]);
                    seen[i] = true;
                }
            }
            prop_assert!(seen.iter().all(|&s| s));
            for class in [Label::Positive, Label::Negative] {
                let counts: Vec<usize> = (0..k)
                    .map(|f| plan.test_indices(f).iter().filter(|&&i| l[i] == class).count())
                    .collect();
                let lo = *counts.iter().min().unwrap();
                let hi = *counts.iter().max().unwrap();
                prop_assert!(hi - lo <= 1);
            }
        }

        #[test]
        fn minmax_round_trip(rows in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 3), 2..20)) {
            let n = rows.len();
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            let x = Array2::from_shape_vec((n, 3), flat).unwrap();
            let mut l = vec![Label::Positive; n];
            l[0] = Label::Negative;
            let ds = Dataset::new("p", x, l).unwrap();
            let (norm, stats) = normalize_minmax(&ds);
            let again = stats.apply(ds.features().view()).unwrap();
            prop_assert_eq!(norm.features(), &again);
            prop_assert!(again.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
