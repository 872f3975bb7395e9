//! Downstream evaluation: classifiers, metrics, cross-validation and ranking.

pub mod classifiers;
pub mod cv;
pub mod metrics;
pub mod report;

pub use classifiers::{classify, ClassifierSpec, Kernel, Predictions};
pub use cv::{cross_validate, CvSettings, FoldOutcome, Method, MethodOptions, MethodSpec};
pub use metrics::{auc, fscore, kappa, Confusion, EvalResult};
pub use report::{aggregate_rankings, Rankings, Record};
