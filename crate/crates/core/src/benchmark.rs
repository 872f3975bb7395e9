//! Config-driven benchmark runner: every dataset × method × fold cell is evaluated on
//! a worker pool, persisted on its own, and listed in a manifest so an interrupted
//! run resumes where it stopped. Final outputs are assembled in a fixed order, so
//! they do not depend on scheduling.
//!
//! Output directory layout:
//!
//! ```text
//! manifest.txt    config fingerprint, then one line per finished cell
//! cells/          per-cell record CSVs
//! records.csv     dataset,fold,method,classifier,metric,value
//! summary.json    average ranks and wins
//! rankings.txt    the same as a text table
//! failures.csv    cells that raised an error
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complexity::{ComplexityOptions, Distance};
use crate::dataset::{load_csv, stratified_kfold, Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::eval::classifiers::{ClassifierSpec, Kernel};
use crate::eval::cv::{run_fold, CvSettings, Method, MethodOptions, MethodSpec};
use crate::eval::report::{aggregate_rankings, fold_records, read_records_csv, write_records_csv, Rankings, Record};
use crate::seeds::derive_seed;
use crate::synth::Shape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Defaults to the file stem or the synthetic shape.
    pub name: Option<String>,
    /// CSV file, relative paths being taken from the config file's directory.
    pub path: Option<PathBuf>,
    /// Synthetic shape instead of a file: blobs, informative, disjuncts, ellipses.
    pub synthetic: Option<String>,
    pub n: Option<usize>,
    pub noise: Option<usize>,
    pub data_seed: Option<u64>,
    #[serde(default = "default_positive")]
    pub positive: String,
    #[serde(default)]
    pub header: bool,
    /// Replaces the run-level method list for this dataset.
    pub methods: Option<Vec<String>>,
}

fn default_positive() -> String {
    "1".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    /// knn, lssvm or mlp.
    pub kind: String,
    pub k: Option<usize>,
    pub gamma: Option<f64>,
    /// linear or rbf (lssvm only).
    pub kernel: Option<String>,
    pub width: Option<f64>,
    pub hidden: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
}

impl ClassifierConfig {
    pub fn to_spec(&self) -> Result<ClassifierSpec> {
        let spec = match self.kind.as_str() {
            "knn" => ClassifierSpec::Knn { k: self.k.unwrap_or(5) },
            "lssvm" | "svm" => {
                let kernel = match self.kernel.as_deref().unwrap_or(if self.kind == "svm" { "rbf" } else { "linear" }) {
                    "linear" => Kernel::Linear,
                    "rbf" => Kernel::Rbf {
                        width: self.width.unwrap_or(1.0),
                    },
                    other => return Err(Error::Config(format!("unknown kernel '{other}'"))),
                };
                ClassifierSpec::Lssvm {
                    gamma: self.gamma.unwrap_or(1.0),
                    kernel,
                }
            }
            "mlp" => {
                let ClassifierSpec::Mlp { hidden, epochs, lr } = ClassifierSpec::mlp() else {
                    unreachable!()
                };
                ClassifierSpec::Mlp {
                    hidden: self.hidden.unwrap_or(hidden),
                    epochs: self.epochs.unwrap_or(epochs),
                    lr: self.lr.unwrap_or(lr),
                }
            }
            other => return Err(Error::Config(format!("unknown classifier '{other}'"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    pub output_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    #[serde(default)]
    pub distance: Distance,
    #[serde(default)]
    pub methods: Vec<String>,
    #[serde(rename = "dataset", default)]
    pub datasets: Vec<DatasetConfig>,
    #[serde(rename = "classifier", default)]
    pub classifiers: Vec<ClassifierConfig>,
    /// Method name → hyperparameter overrides.
    #[serde(default)]
    pub overrides: BTreeMap<String, MethodOptions>,
}

fn default_folds() -> usize {
    5
}

impl RunConfig {
    /// Parses TOML; relative dataset paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<RunConfig> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for ds in &mut cfg.datasets {
            if let Some(p) = &ds.path {
                if p.is_relative() {
                    ds.path = Some(base_dir.join(p));
                }
            }
        }
        if let Some(out) = &cfg.output_dir {
            if out.is_relative() {
                cfg.output_dir = Some(base_dir.join(out));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        RunConfig::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Config("at least one [[dataset]] is required".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be at least 2, got {}", self.folds)));
        }
        let mut names = std::collections::BTreeSet::new();
        for ds in &self.datasets {
            if ds.path.is_some() == ds.synthetic.is_some() {
                return Err(Error::Config("each dataset needs exactly one of 'path' or 'synthetic'".into()));
            }
            if let Some(shape) = &ds.synthetic {
                shape.parse::<Shape>()?;
            }
            let name = dataset_name(ds);
            if !names.insert(name.clone()) {
                return Err(Error::Config(format!("duplicate dataset name '{name}'")));
            }
            let methods = self.methods_for(ds);
            if methods.is_empty() {
                return Err(Error::Config(format!("dataset '{name}' has no methods")));
            }
            for m in methods {
                m.parse::<MethodSpec>().map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        for key in self.overrides.keys() {
            key.parse::<MethodSpec>()
                .map_err(|_| Error::Config(format!("overrides for unknown method '{key}'")))?;
        }
        self.classifier_specs()?;
        Ok(())
    }

    pub fn methods_for<'a>(&'a self, ds: &'a DatasetConfig) -> &'a [String] {
        ds.methods.as_deref().unwrap_or(&self.methods)
    }

    /// Configured classifiers, or kNN alone when none are given.
    pub fn classifier_specs(&self) -> Result<Vec<ClassifierSpec>> {
        if self.classifiers.is_empty() {
            return Ok(vec![ClassifierSpec::knn()]);
        }
        self.classifiers.iter().map(ClassifierConfig::to_spec).collect()
    }

    /// Stable digest of everything that influences cell results.
    pub fn fingerprint(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        canonical.jobs = None;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        format!("{:016x}", derive_seed(0, &json))
    }
}

pub fn dataset_name(ds: &DatasetConfig) -> String {
    if let Some(name) = &ds.name {
        return name.clone();
    }
    match (&ds.path, &ds.synthetic) {
        (Some(p), _) => p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into()),
        (None, Some(shape)) => shape.clone(),
        (None, None) => "dataset".into(),
    }
}

pub fn load_dataset(ds: &DatasetConfig) -> Result<Dataset> {
    let mut data = match (&ds.path, &ds.synthetic) {
        (Some(path), None) => load_csv(path, &ds.positive, ds.header)?,
        (None, Some(shape)) => shape
            .parse::<Shape>()?
            .generate(ds.n.unwrap_or(400), ds.noise.unwrap_or(18), ds.data_seed.unwrap_or(0))?,
        _ => return Err(Error::Config("each dataset needs exactly one of 'path' or 'synthetic'".into())),
    };
    data.name = dataset_name(ds);
    Ok(data)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub dataset: String,
    pub method: String,
    pub fold: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub cells_total: usize,
    pub cells_run: usize,
    pub cells_resumed: usize,
    pub failures: Vec<CellFailure>,
    /// Datasets for which every cell failed.
    pub failed_datasets: Vec<String>,
    pub rankings: Rankings,
}

impl BenchmarkSummary {
    pub fn success(&self) -> bool {
        self.failed_datasets.is_empty()
    }
}

struct Cell<'a> {
    dataset: usize,
    method: &'a Method,
    fold: usize,
    key: String,
}

struct Prepared {
    data: Dataset,
    methods: Vec<Method>,
    plan: FoldPlan,
    settings: CvSettings,
}

const MANIFEST: &str = "manifest.txt";

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn read_manifest(path: &Path, fingerprint: &str) -> Result<Vec<String>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().transpose().map_err(|e| Error::io(path, e))?.unwrap_or_default();
    if header != format!("config {fingerprint}") {
        return Err(Error::Config(format!(
            "{} belongs to a different configuration; use a fresh output directory",
            path.display()
        )));
    }
    let mut done = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if let Some(key) = line.strip_prefix("done ") {
            done.push(key.to_string());
        }
    }
    Ok(done)
}

fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Runs (or resumes) the benchmark described by `cfg`, writing into `out_dir`.
pub fn run_benchmark(cfg: &RunConfig, out_dir: &Path, jobs: usize) -> Result<BenchmarkSummary> {
    cfg.validate()?;
    let classifiers = cfg.classifier_specs()?;
    let prepared: Vec<Prepared> = cfg
        .datasets
        .iter()
        .map(|ds| {
            let data = load_dataset(ds)?;
            let methods = cfg
                .methods_for(ds)
                .iter()
                .map(|m| m.parse::<MethodSpec>()?.resolve(&data, &ds.positive, ds.header))
                .collect::<Result<Vec<_>>>()?;
            let seed = derive_seed(cfg.seed, &format!("dataset/{}", data.name));
            let plan = stratified_kfold(data.labels(), cfg.folds, seed)?;
            let settings = CvSettings {
                folds: cfg.folds,
                seed,
                complexity: ComplexityOptions {
                    distance: cfg.distance,
                    ..ComplexityOptions::default()
                },
            };
            Ok(Prepared {
                data,
                methods,
                plan,
                settings,
            })
        })
        .collect::<Result<_>>()?;

    let cells_dir = out_dir.join("cells");
    fs::create_dir_all(&cells_dir).map_err(|e| Error::io(&cells_dir, e))?;
    let fingerprint = cfg.fingerprint();
    let manifest_path = out_dir.join(MANIFEST);
    let done: std::collections::BTreeSet<String> = read_manifest(&manifest_path, &fingerprint)?.into_iter().collect();
    if !manifest_path.exists() {
        fs::write(&manifest_path, format!("config {fingerprint}\n")).map_err(|e| Error::io(&manifest_path, e))?;
    }

    let mut cells = Vec::new();
    for (d, p) in prepared.iter().enumerate() {
        for method in &p.methods {
            for fold in 0..cfg.folds {
                let key = format!("{}__{}__fold{}", sanitize(&p.data.name), sanitize(&method.name()), fold);
                cells.push(Cell {
                    dataset: d,
                    method,
                    fold,
                    key,
                });
            }
        }
    }

    let pending: Vec<&Cell> = cells
        .iter()
        .filter(|c| !(done.contains(&c.key) && cells_dir.join(format!("{}.csv", c.key)).exists()))
        .collect();
    log::info!("{} cells, {} to run", cells.len(), pending.len());

    let manifest = Mutex::new(
        OpenOptions::new()
            .append(true)
            .open(&manifest_path)
            .map_err(|e| Error::io(&manifest_path, e))?,
    );
    let failures: Mutex<BTreeMap<String, String>> = Mutex::new(BTreeMap::new());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        pending.par_iter().try_for_each(|cell| -> Result<()> {
            let p = &prepared[cell.dataset];
            let outcome = run_fold(
                &p.data,
                cell.method,
                &cfg.overrides.get(&cell.method.name()).copied().unwrap_or_default(),
                &classifiers,
                cell.fold,
                &p.plan.train_indices(cell.fold),
                &p.plan.test_indices(cell.fold),
                &p.settings,
            );
            match outcome {
                Ok(outcome) => {
                    let records = fold_records(&p.data.name, &cell.method.name(), &outcome);
                    let mut buf = Vec::new();
                    write_records_csv(&mut buf, &records)?;
                    let path = cells_dir.join(format!("{}.csv", cell.key));
                    write_atomically(&path, &buf)?;
                    let mut m = manifest.lock().expect("manifest lock");
                    writeln!(m, "done {}", cell.key).map_err(|e| Error::io(&manifest_path, e))?;
                    log::info!("finished {}", cell.key);
                }
                Err(e) => {
                    log::error!("cell {} failed: {e}", cell.key);
                    failures.lock().expect("failure lock").insert(cell.key.clone(), e.to_string());
                }
            }
            Ok(())
        })
    })?;
    let failures = failures.into_inner().expect("failure lock");

    let mut records: Vec<Record> = Vec::new();
    let mut failed_cells = Vec::new();
    let mut per_dataset_ok = vec![false; prepared.len()];
    for cell in &cells {
        let p = &prepared[cell.dataset];
        if let Some(err) = failures.get(&cell.key) {
            failed_cells.push(CellFailure {
                dataset: p.data.name.clone(),
                method: cell.method.name(),
                fold: cell.fold,
                error: err.clone(),
            });
            continue;
        }
        let path = cells_dir.join(format!("{}.csv", cell.key));
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        records.extend(read_records_csv(BufReader::new(file))?);
        per_dataset_ok[cell.dataset] = true;
    }

    let records_path = out_dir.join("records.csv");
    let mut buf = Vec::new();
    write_records_csv(&mut buf, &records)?;
    write_atomically(&records_path, &buf)?;

    let rankings = aggregate_rankings(&records)?;
    write_atomically(&out_dir.join("summary.json"), rankings.to_json()?.as_bytes())?;
    write_atomically(&out_dir.join("rankings.txt"), rankings.to_table().as_bytes())?;

    let failures_path = out_dir.join("failures.csv");
    let mut w = csv::Writer::from_writer(BufWriter::new(Vec::new()));
    w.write_record(["dataset", "method", "fold", "error"])?;
    for f in &failed_cells {
        w.write_record([f.dataset.as_str(), &f.method, &f.fold.to_string(), &f.error])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Format(e.to_string()))?
        .into_inner()
        .map_err(|e| Error::Format(e.to_string()))?;
    write_atomically(&failures_path, &bytes)?;

    let failed_datasets = prepared
        .iter()
        .zip(&per_dataset_ok)
        .filter(|(_, ok)| !**ok)
        .map(|(p, _)| p.data.name.clone())
        .collect();
    Ok(BenchmarkSummary {
        cells_total: cells.len(),
        cells_run: pending.len(),
        cells_resumed: cells.len() - pending.len(),
        failures: failed_cells,
        failed_datasets,
        rankings,
    })
}
