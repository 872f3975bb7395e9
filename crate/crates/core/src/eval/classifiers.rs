//! Downstream classifiers: k-nearest neighbours, a closed-form least-squares SVM and a
//! one-hidden-layer perceptron. Each produces a real-valued score per test row plus
//! a hard prediction.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autoencoder::stratified_batches;
use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::network::{self, Activation, AdamConfig, AdamState, LayerSpec, NetworkParams};
use crate::seeds::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    /// `exp(−‖x−y‖² / (2·width²))`
    Rbf { width: f64 },
}

impl Kernel {
    #[inline]
    pub fn eval(&self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        match *self {
            Kernel::Linear => a.dot(&b),
            Kernel::Rbf { width } => {
                let sq: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                (-sq / (2.0 * width * width)).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassifierSpec {
    Knn {
        k: usize,
    },
    Lssvm {
        gamma: f64,
        kernel: Kernel,
    },
    Mlp {
        hidden: usize,
        epochs: usize,
        lr: f64,
    },
}

impl ClassifierSpec {
    pub fn knn() -> Self {
        ClassifierSpec::Knn { k: 5 }
    }

    pub fn lssvm() -> Self {
        ClassifierSpec::Lssvm {
            gamma: 1.0,
            kernel: Kernel::Linear,
        }
    }

    pub fn lssvm_rbf(width: f64) -> Self {
        ClassifierSpec::Lssvm {
            gamma: 1.0,
            kernel: Kernel::Rbf { width },
        }
    }

    pub fn mlp() -> Self {
        ClassifierSpec::Mlp {
            hidden: 16,
            epochs: 200,
            lr: 0.01,
        }
    }

    /// Short identifier used in benchmark records.
    pub fn name(&self) -> String {
        match *self {
            ClassifierSpec::Knn { k: 5 } => "knn".into(),
            ClassifierSpec::Knn { k } => format!("knn{k}"),
            ClassifierSpec::Lssvm { kernel: Kernel::Linear, .. } => "lssvm".into(),
            ClassifierSpec::Lssvm { kernel: Kernel::Rbf { .. }, .. } => "svm-rbf".into(),
            ClassifierSpec::Mlp { .. } => "mlp".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ClassifierSpec::Knn { k } if k == 0 || k % 2 == 0 => {
                Err(Error::Validation(format!("knn k must be odd and at least 1, got {k}")))
            }
            ClassifierSpec::Lssvm { gamma, .. } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::Validation(format!("lssvm gamma must be positive, got {gamma}")))
            }
            ClassifierSpec::Lssvm { kernel: Kernel::Rbf { width }, .. } if !(width > 0.0 && width.is_finite()) => {
                Err(Error::Validation(format!("rbf width must be positive, got {width}")))
            }
            ClassifierSpec::Mlp { hidden: 0, .. } => Err(Error::Validation("mlp hidden width must be positive".into())),
            ClassifierSpec::Mlp { lr, .. } if !(lr > 0.0 && lr.is_finite()) => {
                Err(Error::Validation(format!("mlp learning rate must be positive, got {lr}")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ClassifierSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Scores and hard predictions for a set of test rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
}

/// Trains the classifier described by `spec` on `(train_x, train_y)` and predicts
/// `test_x`. `seed` only matters for the MLP.
pub fn classify(
    spec: &ClassifierSpec,
    train_x: ArrayView2<'_, f64>,
    train_y: &[Label],
    test_x: ArrayView2<'_, f64>,
    seed: u64,
) -> Result<Predictions> {
    spec.validate()?;
    if train_x.ncols() != test_x.ncols() {
        return Err(Error::Shape(format!(
            "train has {} columns, test has {}",
            train_x.ncols(),
            test_x.ncols()
        )));
    }
    match *spec {
        ClassifierSpec::Knn { k } => {
            let scores = knn_scores(train_x, train_y, test_x, k)?;
            let labels = scores
                .iter()
                .map(|&s| if s >= 0.5 { Label::Positive } else { Label::Negative })
                .collect();
            Ok(Predictions { scores, labels })
        }
        ClassifierSpec::Lssvm { gamma, kernel } => {
            let model = lssvm_fit(train_x, train_y, gamma, kernel)?;
            let scores = model.scores(test_x)?.to_vec();
            let labels = scores.iter().map(|&s| Label::from_sign(s)).collect();
            Ok(Predictions { scores, labels })
        }
        ClassifierSpec::Mlp { hidden, epochs, lr } => {
            let model = mlp_fit(train_x, train_y, hidden, epochs, lr, seed)?;
            let scores = model.probabilities(test_x)?;
            let labels = scores
                .iter()
                .map(|&s| if s >= 0.5 { Label::Positive } else { Label::Negative })
                .collect();
            Ok(Predictions { scores, labels })
        }
    }
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Fraction of the `k` nearest training rows (Euclidean, ties to the lower index)
/// that are positive, for each test row.
pub fn knn_scores(train_x: ArrayView2<'_, f64>, train_y: &[Label], test_x: ArrayView2<'_, f64>, k: usize) -> Result<Vec<f64>> {
    let n = train_x.nrows();
    if n == 0 {
        return Err(Error::Contract("knn needs a non-empty training set".into()));
    }
    if n != train_y.len() {
        return Err(Error::Shape(format!("{n} training rows but {} labels", train_y.len())));
    }
    if k == 0 || k > n {
        return Err(Error::Contract(format!("knn k = {k} with {n} training rows")));
    }
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
    Ok(test_x
        .rows()
        .into_iter()
        .map(|q| {
            order.clear();
            order.extend(train_x.rows().into_iter().enumerate().map(|(i, r)| (sq_dist(q, r), i)));
            order.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let pos = order[..k].iter().filter(|(_, i)| train_y[*i].is_positive()).count();
            pos as f64 / k as f64
        })
        .collect())
}

/// Least-squares SVM in dual form: `score(x) = Σ αᵢ k(xᵢ, x) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LssvmModel {
    pub support: Array2<f64>,
    pub alpha: Array1<f64>,
    pub bias: f64,
    pub kernel: Kernel,
}

/// Solves `[[0, 1ᵀ], [1, K + I/γ]] · [b; α] = [0; y]`. A singular system is retried
/// once with `1e-8` added to the diagonal.
pub fn lssvm_fit(x: ArrayView2<'_, f64>, labels: &[Label], gamma: f64, kernel: Kernel) -> Result<LssvmModel> {
    let n = x.nrows();
    if n != labels.len() {
        return Err(Error::Shape(format!("{n} rows but {} labels", labels.len())));
    }
    let pos = labels.iter().filter(|l| l.is_positive()).count();
    if pos == 0 || pos == n {
        return Err(Error::Validation("lssvm needs at least one instance of each class".into()));
    }
    if !(gamma > 0.0) {
        return Err(Error::Validation(format!("lssvm gamma must be positive, got {gamma}")));
    }
    let mut system = DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 0..n {
        system[(0, i + 1)] = 1.0;
        system[(i + 1, 0)] = 1.0;
        for j in i..n {
            let v = kernel.eval(x.row(i), x.row(j));
            system[(i + 1, j + 1)] = v;
            system[(j + 1, i + 1)] = v;
        }
        system[(i + 1, i + 1)] += 1.0 / gamma;
    }
    let mut rhs = DVector::<f64>::zeros(n + 1);
    for (i, l) in labels.iter().enumerate() {
        rhs[i + 1] = l.sign();
    }

    let solve = |m: DMatrix<f64>| m.lu().solve(&rhs).filter(|s| s.iter().all(|v| v.is_finite()));
    let solution = match solve(system.clone()) {
        Some(s) => s,
        None => {
            for i in 0..=n {
                system[(i, i)] += 1e-8;
            }
            solve(system).ok_or_else(|| Error::Numeric("lssvm system is singular".into()))?
        }
    };
    Ok(LssvmModel {
        support: x.to_owned(),
        alpha: Array1::from_iter(solution.iter().skip(1).copied()),
        bias: solution[0],
        kernel,
    })
}

impl LssvmModel {
    pub fn scores(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.support.ncols() {
            return Err(Error::Shape(format!(
                "model expects {} columns, got {}",
                self.support.ncols(),
                x.ncols()
            )));
        }
        if let Some(w) = self.linear_weights() {
            return Ok(x.dot(&w) + self.bias);
        }
        Ok(x.rows()
            .into_iter()
            .map(|q| {
                self.support
                    .rows()
                    .into_iter()
                    .zip(self.alpha.iter())
                    .map(|(s, &a)| a * self.kernel.eval(s, q))
                    .sum::<f64>()
                    + self.bias
            })
            .collect())
    }

    /// `sign(score)`, with a zero score counted as positive.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<Label>> {
        Ok(self.scores(x)?.iter().map(|&s| Label::from_sign(s)).collect())
    }

    /// Primal weights `w = Σ αᵢ xᵢ` for the linear kernel.
    pub fn linear_weights(&self) -> Option<Array1<f64>> {
        matches!(self.kernel, Kernel::Linear).then(|| self.support.t().dot(&self.alpha))
    }
}

/// `d → hidden (ReLU) → 1 (sigmoid)` network trained with binary cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub specs: Vec<LayerSpec>,
    pub params: NetworkParams,
}

impl MlpModel {
    pub fn probabilities(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let cache = network::forward(&self.params, &self.specs, x)?;
        Ok(cache.output().column(0).to_vec())
    }
}

pub fn mlp_fit(
    x: ArrayView2<'_, f64>,
    labels: &[Label],
    hidden: usize,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<MlpModel> {
    if x.nrows() != labels.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.nrows(), labels.len())));
    }
    let specs = vec![
        LayerSpec::new(x.ncols(), hidden, Activation::Relu),
        LayerSpec::new(hidden, 1, Activation::Sigmoid),
    ];
    let mut params = network::init_params(&specs, seed, None)?;
    let mut adam = AdamState::new(&params, AdamConfig { lr, ..AdamConfig::default() });
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "mlp-batches"));
    let targets = Array1::from_iter(labels.iter().map(|l| l.indicator()));
    const EPS: f64 = 1e-7;
    for epoch in 0..epochs {
        for (b, rows) in stratified_batches(labels, 32, &mut rng).iter().enumerate() {
            let xb = x.select(Axis(0), rows);
            let tb = targets.select(Axis(0), rows);
            let cache = network::forward(&params, &specs, xb.view())?;
            let m = rows.len() as f64;
            let mut loss = 0.0;
            let mut d_out = Array2::zeros((rows.len(), 1));
            for (i, (&p, &t)) in cache.output().column(0).iter().zip(tb.iter()).enumerate() {
                let c = p.clamp(EPS, 1.0 - EPS);
                loss -= (t * c.ln() + (1.0 - t) * (1.0 - c).ln()) / m;
                d_out[[i, 0]] = if c == p { ((1.0 - t) / (1.0 - c) - t / c) / m } else { 0.0 };
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    reconstruction: loss,
                    penalty: 0.0,
                });
            }
            let grads = network::backward(&params, &specs, &cache, d_out.view())?;
            adam.step(&mut params, &grads)?;
        }
    }
    Ok(MlpModel { specs, params })
}
