//! Long-form benchmark records and their aggregation into per-metric average ranks
//! and win counts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::complexity::{metric_direction, Direction};
use crate::error::{Error, Result};
use crate::eval::cv::FoldOutcome;

pub const SCHEMA_VERSION: u32 = 1;

/// Placeholder in the classifier column of complexity records.
pub const NO_CLASSIFIER: &str = "-";

pub const RECORD_HEADER: [&str; 6] = ["dataset", "fold", "method", "classifier", "metric", "value"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub dataset: String,
    pub fold: usize,
    pub method: String,
    pub classifier: String,
    pub metric: String,
    pub value: Option<f64>,
}

/// Complexity records first (classifier `-`), then each classifier's metrics.
pub fn fold_records(dataset: &str, method: &str, outcome: &FoldOutcome) -> Vec<Record> {
    let record = |classifier: &str, metric: &str, value: Option<f64>| Record {
        dataset: dataset.to_string(),
        fold: outcome.fold,
        method: method.to_string(),
        classifier: classifier.to_string(),
        metric: metric.to_string(),
        value,
    };
    let mut out: Vec<Record> = outcome
        .complexity
        .metrics()
        .iter()
        .map(|&(m, v)| record(NO_CLASSIFIER, m, Some(v)))
        .collect();
    for (classifier, eval) in &outcome.evals {
        out.extend(eval.metrics().iter().map(|&(m, v)| record(classifier, m, v)));
    }
    out
}

fn format_value(v: Option<f64>) -> String {
    v.map(|v| format!("{v:?}")).unwrap_or_default()
}

pub fn write_records_csv<W: Write>(out: W, records: &[Record]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.write_record([
            r.dataset.as_str(),
            &r.fold.to_string(),
            &r.method,
            &r.classifier,
            &r.metric,
            &format_value(r.value),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<Record>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(RECORD_HEADER) {
        return Err(Error::Format(format!(
            "records header must be '{}', found '{}'",
            RECORD_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.records()
        .enumerate()
        .map(|(row, rec)| {
            let rec = rec?;
            let parse_err = |column: usize, message: String| Error::Parse { row, column, message };
            let fold = rec[1].parse().map_err(|_| parse_err(1, format!("bad fold '{}'", &rec[1])))?;
            let value = match rec[5].trim() {
                "" => None,
                s => Some(s.parse::<f64>().map_err(|_| parse_err(5, format!("bad value '{s}'")))?),
            };
            Ok(Record {
                dataset: rec[0].to_string(),
                fold,
                method: rec[2].to_string(),
                classifier: rec[3].to_string(),
                metric: rec[4].to_string(),
                value,
            })
        })
        .collect()
}

/// 1-based ranks, best first, ties sharing the mean of the positions they span.
pub fn average_ranks(values: &[f64], direction: Direction) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let c = values[a].total_cmp(&values[b]);
        match direction {
            Direction::HigherBetter => c.reverse(),
            Direction::LowerBetter => c,
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// `metric` for complexity records, `metric/classifier` otherwise.
pub fn row_key(metric: &str, classifier: &str) -> String {
    if classifier == NO_CLASSIFIER {
        metric.to_string()
    } else {
        format!("{metric}/{classifier}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rankings {
    pub schema_version: u32,
    pub methods: Vec<String>,
    /// Row key → method → average rank over datasets.
    pub rankings: BTreeMap<String, BTreeMap<String, f64>>,
    /// Row key → method → first places (shared on ties).
    pub wins_by_metric: BTreeMap<String, BTreeMap<String, usize>>,
    /// Method → first places over all rows.
    pub wins: BTreeMap<String, usize>,
    pub rows_ranked: usize,
    pub rows_skipped: usize,
}

/// Averages records over folds, ranks methods within every
/// (dataset, metric, classifier) row and averages the ranks per metric.
/// Rows lacking a value for some method are skipped with a warning.
pub fn aggregate_rankings(records: &[Record]) -> Result<Rankings> {
    let methods: BTreeSet<&str> = records.iter().map(|r| r.method.as_str()).collect();
    // (dataset, metric, classifier) → method → (sum, count)
    let mut cells: BTreeMap<(&str, &str, &str), BTreeMap<&str, (f64, usize)>> = BTreeMap::new();
    for r in records {
        let row = cells
            .entry((r.dataset.as_str(), r.metric.as_str(), r.classifier.as_str()))
            .or_default();
        let cell = row.entry(r.method.as_str()).or_insert((0.0, 0));
        if let Some(v) = r.value {
            cell.0 += v;
            cell.1 += 1;
        }
    }

    let mut rank_sums: BTreeMap<String, BTreeMap<String, (f64, usize)>> = BTreeMap::new();
    let mut wins_by_metric: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut wins: BTreeMap<String, usize> = methods.iter().map(|m| (m.to_string(), 0)).collect();
    let (mut ranked, mut skipped) = (0, 0);
    for ((dataset, metric, classifier), row) in &cells {
        let Some(direction) = metric_direction(metric) else {
            log::warn!("no direction known for metric '{metric}'; row skipped");
            skipped += 1;
            continue;
        };
        let means: Option<Vec<f64>> = methods
            .iter()
            .map(|m| row.get(m).filter(|c| c.1 > 0).map(|c| c.0 / c.1 as f64))
            .collect();
        let Some(means) = means else {
            log::warn!("{dataset}/{metric}/{classifier}: some method has no value; row skipped");
            skipped += 1;
            continue;
        };
        ranked += 1;
        let ranks = average_ranks(&means, direction);
        let key = row_key(metric, classifier);
        let sums = rank_sums.entry(key.clone()).or_default();
        let row_wins = wins_by_metric
            .entry(key)
            .or_insert_with(|| methods.iter().map(|m| (m.to_string(), 0)).collect());
        let best = ranks.iter().copied().fold(f64::INFINITY, f64::min);
        for (m, &rank) in methods.iter().zip(&ranks) {
            let s = sums.entry(m.to_string()).or_insert((0.0, 0));
            s.0 += rank;
            s.1 += 1;
            if rank == best {
                *row_wins.get_mut(*m).expect("seeded") += 1;
                *wins.get_mut(*m).expect("seeded") += 1;
            }
        }
    }
    let rankings = rank_sums
        .into_iter()
        .map(|(key, per)| (key, per.into_iter().map(|(m, (s, c))| (m, s / c as f64)).collect()))
        .collect();
    Ok(Rankings {
        schema_version: SCHEMA_VERSION,
        methods: methods.into_iter().map(String::from).collect(),
        rankings,
        wins_by_metric,
        wins,
        rows_ranked: ranked,
        rows_skipped: skipped,
    })
}

impl Rankings {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// One row per metric (and classifier), one column per method, average ranks,
    /// then a row of total wins.
    pub fn to_table(&self) -> String {
        let label_width = self.rankings.keys().map(String::len).chain([5]).max().unwrap_or(5);
        let col = |m: &String| m.len().max(7);
        let mut s = String::new();
        let _ = write!(s, "{:<label_width$}", "metric");
        for m in &self.methods {
            let _ = write!(s, "  {:>w$}", m, w = col(m));
        }
        s.push('\n');
        for (key, per) in &self.rankings {
            let _ = write!(s, "{key:<label_width$}");
            for m in &self.methods {
                let _ = write!(s, "  {:>w$.2}", per[m], w = col(m));
            }
            s.push('\n');
        }
        let _ = write!(s, "{:<label_width$}", "wins");
        for m in &self.methods {
            let _ = write!(s, "  {:>w$}", self.wins[m], w = col(m));
        }
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(dataset: &str, method: &str, metric: &str, value: Option<f64>) -> Record {
        Record {
            dataset: dataset.into(),
            fold: 0,
            method: method.into(),
            classifier: "knn".into(),
            metric: metric.into(),
            value,
        }
    }

    #[test]
    fn rank_examples() {
        assert_eq!(average_ranks(&[0.9, 0.5, 0.1], Direction::HigherBetter), vec![1.0, 2.0, 3.0]);
        assert_eq!(average_ranks(&[0.5, 0.5, 0.1], Direction::HigherBetter), vec![1.5, 1.5, 3.0]);
        assert_eq!(average_ranks(&[0.9, 0.5, 0.1], Direction::LowerBetter), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn wins_count_rows() {
        let records = vec![
            rec("a", "x", "auc", Some(0.9)),
            rec("a", "y", "auc", Some(0.5)),
            rec("b", "x", "auc", Some(0.8)),
            rec("b", "y", "auc", Some(0.7)),
        ];
        let r = aggregate_rankings(&records).unwrap();
        assert_eq!(r.wins["x"], 2);
        assert_eq!(r.wins["y"], 0);
        assert_eq!(r.rankings["auc/knn"]["x"], 1.0);
        assert_eq!(r.rankings["auc/knn"]["y"], 2.0);
    }

    #[test]
    fn ties_share_wins_and_missing_rows_skip() {
        let records = vec![
            rec("a", "x", "kappa", Some(0.5)),
            rec("a", "y", "kappa", Some(0.5)),
            rec("b", "x", "kappa", Some(0.5)),
            rec("b", "y", "kappa", None),
        ];
        let r = aggregate_rankings(&records).unwrap();
        assert_eq!((r.rows_ranked, r.rows_skipped), (1, 1));
        assert_eq!(r.wins["x"] + r.wins["y"], 2);
    }

    #[test]
    fn folds_are_averaged_first() {
        let mut records = vec![rec("a", "x", "n3", Some(0.1)), rec("a", "y", "n3", Some(0.3))];
        let mut second = rec("a", "x", "n3", Some(0.5));
        second.fold = 1;
        records.push(second);
        records.iter_mut().for_each(|r| r.classifier = NO_CLASSIFIER.into());
        let r = aggregate_rankings(&records).unwrap();
        // x averages 0.3, tying y
        assert_eq!(r.rankings["n3"]["x"], 1.5);
    }

    #[test]
    fn csv_round_trip() {
        let records = vec![rec("a,b", "x", "auc", Some(0.1 + 0.2)), rec("a", "y", "auc", None)];
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &records).unwrap();
        assert_eq!(read_records_csv(buf.as_slice()).unwrap(), records);
        assert!(matches!(read_records_csv("a,b\n1,2\n".as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn table_lists_every_method() {
        let records = vec![rec("a", "x", "auc", Some(0.9)), rec("a", "y", "auc", Some(0.5))];
        let t = aggregate_rankings(&records).unwrap().to_table();
        assert!(t.lines().next().unwrap().contains('x'));
        assert!(t.lines().last().unwrap().starts_with("wins"));
    }

    proptest! {
        #[test]
        fn rank_sums(values in proptest::collection::vec(0u8..5, 1..12), higher in any::<bool>()) {
            let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
            let dir = if higher { Direction::HigherBetter } else { Direction::LowerBetter };
            let m = v.len() as f64;
            prop_assert_eq!(average_ranks(&v, dir).iter().sum::<f64>(), m * (m + 1.0) / 2.0);
        }
    }
}
