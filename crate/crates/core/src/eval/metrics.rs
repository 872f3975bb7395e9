//! Binary classification metrics: F-score, rank-based AUC and Cohen's kappa.

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(truth: &[Label], predicted: &[Label]) -> Result<Confusion> {
        if truth.len() != predicted.len() {
            return Err(Error::Shape(format!(
                "{} true labels, {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut c = Confusion::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t, p) {
                (Label::Positive, Label::Positive) => c.tp += 1,
                (Label::Negative, Label::Positive) => c.fp += 1,
                (Label::Negative, Label::Negative) => c.tn += 1,
                (Label::Positive, Label::Negative) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// The same predictions seen with the class names swapped.
    pub fn relabeled(&self) -> Confusion {
        Confusion {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }
}

/// Harmonic mean of precision and recall; every `0/0` counts as 0.
pub fn fscore(tp: usize, fp: usize, fn_: usize) -> f64 {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Mann–Whitney estimate of the area under the ROC curve: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting ½. `None` when a class
/// is missing.
pub fn auc(scores: &[f64], labels: &[Label]) -> Option<f64> {
    if scores.len() != labels.len() {
        return None;
    }
    let n_pos = labels.iter().filter(|l| l.is_positive()).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of (mid-)ranks of the positives, ranks starting at 1
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k].is_positive()).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Cohen's kappa `1 − (1−Acc)/(1−p_c)`; defined as 0 when chance agreement is 1.
pub fn kappa(tp: usize, fp: usize, tn: usize, fn_: usize) -> f64 {
    let total = (tp + fp + tn + fn_) as f64;
    if total == 0.0 {
        return 0.0;
    }
    let (tp, fp, tn, fn_) = (tp as f64, fp as f64, tn as f64, fn_ as f64);
    let acc = (tp + tn) / total;
    let chance = ((tp + fp) * (tp + fn_) + (tn + fn_) * (tn + fp)) / (total * total);
    if chance == 1.0 {
        0.0
    } else {
        1.0 - (1.0 - acc) / (1.0 - chance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub fscore: f64,
    pub auc: Option<f64>,
    pub kappa: f64,
    pub confusion: Confusion,
}

impl EvalResult {
    pub fn compute(truth: &[Label], scores: &[f64], predicted: &[Label]) -> Result<EvalResult> {
        let c = Confusion::from_predictions(truth, predicted)?;
        if scores.len() != truth.len() {
            return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), truth.len())));
        }
        Ok(EvalResult {
            fscore: fscore(c.tp, c.fp, c.fn_),
            auc: auc(scores, truth),
            kappa: kappa(c.tp, c.fp, c.tn, c.fn_),
            confusion: c,
        })
    }

    /// `(metric, value)` pairs in a fixed order.
    pub fn metrics(&self) -> [(&'static str, Option<f64>); 3] {
        [("fscore", Some(self.fscore)), ("auc", self.auc), ("kappa", Some(self.kappa))]
    }
}
