//! Stratified k-fold evaluation of a representation method: per fold, fit the
//! representation on the training rows only, profile the transformed training rows,
//! then train and score each classifier on the transformed rows.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::autoencoder::{self, encoding_dim, AeConfig, Reconstruction, TrainedModel};
use crate::baselines::{load_embedding, pca_fit, PcaModel};
use crate::complexity::{ComplexityOptions, ComplexityReport};
use crate::dataset::{stratified_kfold, Dataset, MinMax};
use crate::error::{Error, Result};
use crate::eval::classifiers::{classify, ClassifierSpec};
use crate::eval::metrics::EvalResult;
use crate::penalties::{Penalty, PenaltyKind, PenaltySpec};
use crate::seeds::derive_seed;

/// Rows of a dataset mapped into a representation space.
pub type Embedding = Array2<f64>;

/// A representation method as named in configs and on the command line.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodSpec {
    Identity,
    Pca,
    /// `ae` is the unpenalized autoencoder, the others name their penalty.
    Autoencoder(PenaltyKind),
    External(PathBuf),
}

impl MethodSpec {
    pub fn name(&self) -> String {
        match self {
            MethodSpec::Identity => "identity".into(),
            MethodSpec::Pca => "pca".into(),
            MethodSpec::Autoencoder(PenaltyKind::None) => "ae".into(),
            MethodSpec::Autoencoder(kind) => kind.as_str().into(),
            MethodSpec::External(path) => format!("external:{}", path.display()),
        }
    }

    /// Loads whatever the method needs beyond the dataset itself.
    pub fn resolve(&self, data: &Dataset, positive_label: &str, has_header: bool) -> Result<Method> {
        let external = match self {
            MethodSpec::External(path) => Some(Arc::new(load_embedding(path, data, positive_label, has_header)?)),
            _ => None,
        };
        Ok(Method {
            spec: self.clone(),
            external,
        })
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(path) = s.strip_prefix("external:") {
            if path.is_empty() {
                return Err(Error::Validation("external method needs a path".into()));
            }
            return Ok(MethodSpec::External(PathBuf::from(path)));
        }
        match s {
            "identity" => Ok(MethodSpec::Identity),
            "pca" => Ok(MethodSpec::Pca),
            "ae" => Ok(MethodSpec::Autoencoder(PenaltyKind::None)),
            other => match other.parse::<PenaltyKind>() {
                Ok(PenaltyKind::None) | Err(_) => Err(Error::Validation(format!(
                    "unknown method '{other}' (expected identity, pca, ae, scorer, skaler, slicer or external:<path>)"
                ))),
                Ok(kind) => Ok(MethodSpec::Autoencoder(kind)),
            },
        }
    }
}

/// Per-method overrides of the default hyperparameters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodOptions {
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub entropy_weight: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    /// Output dimension for PCA and the autoencoders.
    pub dims: Option<usize>,
    pub reconstruction: Option<Reconstruction>,
}

impl MethodOptions {
    /// Autoencoder configuration for `kind` with these overrides applied.
    pub fn ae_config(&self, kind: PenaltyKind, seed: u64) -> AeConfig {
        let mut penalty = PenaltySpec::default_for(kind);
        if let Some(lambda) = self.lambda {
            penalty.lambda = lambda;
        }
        match &mut penalty.penalty {
            Penalty::Slicer { beta } => *beta = self.beta.unwrap_or(*beta),
            Penalty::Skaler { entropy_weight } => *entropy_weight = self.entropy_weight.unwrap_or(*entropy_weight),
            Penalty::None | Penalty::Scorer => {}
        }
        let mut cfg = AeConfig::new(penalty).with_seed(seed);
        cfg.epochs = self.epochs.unwrap_or(cfg.epochs);
        cfg.batch_size = self.batch_size.unwrap_or(cfg.batch_size);
        cfg.reconstruction = self.reconstruction.unwrap_or(cfg.reconstruction);
        cfg.encoding_dim_override = self.dims;
        cfg
    }
}

/// A method ready to run on one particular dataset.
#[derive(Debug, Clone)]
pub struct Method {
    pub spec: MethodSpec,
    external: Option<Arc<Array2<f64>>>,
}

impl Method {
    pub fn new(spec: MethodSpec) -> Result<Method> {
        if let MethodSpec::External(path) = &spec {
            return Err(Error::Contract(format!(
                "external method {} must be resolved against its dataset",
                path.display()
            )));
        }
        Ok(Method { spec, external: None })
    }

    pub fn name(&self) -> String {
        self.spec.name()
    }

    /// Fits the representation on the rows `train` of `data`.
    pub fn fit(&self, data: &Dataset, train: &[usize], opts: &MethodOptions, seed: u64) -> Result<Fitted> {
        Ok(match &self.spec {
            MethodSpec::Identity => Fitted::Identity(MinMax::fit(data.features().select(Axis(0), train).view())),
            MethodSpec::Pca => {
                let x = data.features().select(Axis(0), train);
                let normalizer = MinMax::fit(x.view());
                let xn = normalizer.apply(x.view())?;
                let e = opts
                    .dims
                    .unwrap_or_else(|| encoding_dim(data.n_features(), train.len()).min(train.len()).min(data.n_features()));
                Fitted::Pca(normalizer, pca_fit(xn.view(), e)?)
            }
            MethodSpec::Autoencoder(kind) => {
                let cfg = opts.ae_config(*kind, seed);
                Fitted::Autoencoder(Box::new(autoencoder::train(&data.subset(train)?, &cfg)?))
            }
            MethodSpec::External(_) => Fitted::External(Arc::clone(
                self.external.as_ref().expect("external methods are built by resolve"),
            )),
        })
    }
}

/// A representation fitted on some training rows.
#[derive(Debug, Clone)]
pub enum Fitted {
    Identity(MinMax),
    Pca(MinMax, PcaModel),
    Autoencoder(Box<TrainedModel>),
    External(Arc<Array2<f64>>),
}

impl Fitted {
    /// Embeds the rows `rows` of `data`.
    pub fn transform(&self, data: &Dataset, rows: &[usize]) -> Result<Array2<f64>> {
        let x = || data.features().select(Axis(0), rows);
        match self {
            Fitted::Identity(norm) => norm.apply(x().view()),
            Fitted::Pca(norm, pca) => pca.transform(norm.apply(x().view())?.view()),
            Fitted::Autoencoder(model) => model.encode(x().view()),
            Fitted::External(z) => Ok(z.select(Axis(0), rows)),
        }
    }

    pub fn trained_model(&self) -> Option<&TrainedModel> {
        match self {
            Fitted::Autoencoder(m) => Some(m),
            _ => None,
        }
    }
}

/// Seeds for the pieces of one fold. They depend on the run seed and the fold only,
/// so two methods that differ in nothing but their name see identical randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FoldSeeds {
    pub representation: u64,
    pub classifier: u64,
    pub complexity: u64,
}

impl FoldSeeds {
    pub fn new(seed: u64, fold: usize) -> FoldSeeds {
        FoldSeeds {
            representation: derive_seed(seed, &format!("fold{fold}/representation")),
            classifier: derive_seed(seed, &format!("fold{fold}/classifier")),
            complexity: derive_seed(seed, &format!("fold{fold}/complexity")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub dims: usize,
    pub complexity: ComplexityReport,
    /// `(classifier name, result)` in the order the classifiers were given.
    pub evals: Vec<(String, EvalResult)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvSettings {
    pub folds: usize,
    pub seed: u64,
    pub complexity: ComplexityOptions,
}

impl Default for CvSettings {
    fn default() -> Self {
        CvSettings {
            folds: 5,
            seed: 0,
            complexity: ComplexityOptions::default(),
        }
    }
}

/// Runs one fold: `train` and `test` index into `data` and must be disjoint.
pub fn run_fold(
    data: &Dataset,
    method: &Method,
    opts: &MethodOptions,
    classifiers: &[ClassifierSpec],
    fold: usize,
    train: &[usize],
    test: &[usize],
    settings: &CvSettings,
) -> Result<FoldOutcome> {
    let mut seen = vec![false; data.n_instances()];
    for &i in train {
        seen[i] = true;
    }
    if test.iter().any(|&i| seen[i]) {
        return Err(Error::Contract(format!("fold {fold}: test rows overlap the training rows")));
    }
    let seeds = FoldSeeds::new(settings.seed, fold);
    let fitted = method.fit(data, train, opts, seeds.representation)?;
    let z_train = fitted.transform(data, train)?;
    let z_test = fitted.transform(data, test)?;
    let train_labels: Vec<_> = train.iter().map(|&i| data.labels()[i]).collect();
    let test_labels: Vec<_> = test.iter().map(|&i| data.labels()[i]).collect();

    let train_set = Dataset::new(data.name.clone(), z_train.clone(), train_labels.clone())?;
    let complexity = ComplexityReport::compute(
        &train_set,
        &ComplexityOptions {
            seed: seeds.complexity,
            ..settings.complexity
        },
    )?;
    let evals = classifiers
        .iter()
        .map(|spec| {
            let p = classify(spec, z_train.view(), &train_labels, z_test.view(), seeds.classifier)?;
            Ok((spec.name(), EvalResult::compute(&test_labels, &p.scores, &p.labels)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FoldOutcome {
        fold,
        train_size: train.len(),
        test_size: test.len(),
        dims: z_train.ncols(),
        complexity,
        evals,
    })
}

/// All folds of a stratified k-fold split, in fold order. Errors carry the fold index.
pub fn cross_validate(
    data: &Dataset,
    method: &Method,
    opts: &MethodOptions,
    classifiers: &[ClassifierSpec],
    settings: &CvSettings,
) -> Result<Vec<FoldOutcome>> {
    let plan = stratified_kfold(data.labels(), settings.folds, settings.seed)?;
    (0..settings.folds)
        .map(|f| {
            run_fold(
                data,
                method,
                opts,
                classifiers,
                f,
                &plan.train_indices(f),
                &plan.test_indices(f),
                settings,
            )
            .map_err(|e| Error::Fold {
                fold: f,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Fits a method on every row and returns the embedding of the whole dataset,
/// plus the trained network for the autoencoder methods.
pub fn embed_all(data: &Dataset, method: &Method, opts: &MethodOptions, seed: u64) -> Result<(Array2<f64>, Fitted)> {
    let all: Vec<usize> = (0..data.n_instances()).collect();
    let fitted = method.fit(data, &all, opts, seed)?;
    Ok((fitted.transform(data, &all)?, fitted))
}

/// Shorthand for embedding a single matrix through a fitted representation.
pub fn transform_matrix(fitted: &Fitted, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    match fitted {
        Fitted::Identity(norm) => norm.apply(x),
        Fitted::Pca(norm, pca) => pca.transform(norm.apply(x)?.view()),
        Fitted::Autoencoder(model) => model.encode(x),
        Fitted::External(_) => Err(Error::Contract("an imported embedding cannot transform new rows".into())),
    }
}
