//! Class-informed autoencoders for binary classification, together with the
//! data-complexity metrics, baselines and cross-validated benchmark used to
//! compare learned representations.

pub mod autoencoder;
pub mod baselines;
pub mod benchmark;
pub mod complexity;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod network;
pub mod penalties;
pub mod seeds;
pub mod synth;

pub use autoencoder::{train, AeConfig, Reconstruction, TrainedModel};
pub use benchmark::{run_benchmark, BenchmarkSummary, RunConfig};
pub use complexity::{ComplexityOptions, ComplexityReport, Distance};
pub use dataset::{load_csv, Dataset, Label};
pub use error::{Error, Result};
pub use eval::{ClassifierSpec, EvalResult, MethodOptions, MethodSpec};
pub use penalties::{PenaltyKind, PenaltySpec};
