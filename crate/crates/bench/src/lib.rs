//! Fixtures shared by the benchmarks.

use ciae_core::synth::Shape;
use ciae_core::Dataset;
use ndarray::Array2;

/// The noisy two-informative-dimension problem, min-max scaled to `[0, 1]`.
pub fn fixture(n: usize, noise: usize) -> (Dataset, Array2<f64>) {
    let data = Shape::Informative.generate(n, noise, 1).expect("valid size");
    let (scaled, _) = ciae_core::dataset::normalize_minmax(&data);
    let x = scaled.features().clone();
    (data, x)
}
