//! Unsupervised baselines: principal component analysis, plus import of embeddings
//! computed by outside tools. The plain autoencoder baseline is the autoencoder
//! module with no penalty.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::dataset::{load_csv, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// `e × d`, orthonormal rows.
    pub components: Array2<f64>,
    /// Sample variance (divisor `n − 1`) along each component, nonincreasing.
    pub explained_variance: Array1<f64>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        pca_transform(self, x)
    }
}

/// Top-`e` principal directions from the eigendecomposition of the sample covariance.
/// Each component is signed so that its largest-magnitude entry is positive.
pub fn pca_fit(x: ArrayView2<'_, f64>, e: usize) -> Result<PcaModel> {
    let (n, d) = x.dim();
    if e == 0 || e > n.min(d) {
        return Err(Error::Validation(format!(
            "cannot keep {e} components from a {n}×{d} matrix"
        )));
    }
    let mean = x.mean_axis(Axis(0)).expect("n ≥ 1");
    let centered = &x - &mean;
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let cov = centered.t().dot(&centered) / denom;
    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = Array2::zeros((e, d));
    let mut explained = Array1::zeros(e);
    for (r, &k) in order.iter().take(e).enumerate() {
        let v = eig.eigenvectors.column(k);
        let pivot = (0..d)
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
            .expect("d ≥ 1");
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        let norm = v.norm();
        for j in 0..d {
            components[[r, j]] = sign * v[j] / norm;
        }
        explained[r] = eig.eigenvalues[k].max(0.0);
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance: explained,
    })
}

/// `(x − mean) · componentsᵀ`.
pub fn pca_transform(model: &PcaModel, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.ncols() != model.mean.len() {
        return Err(Error::Contract(format!(
            "PCA fitted on {} columns, got {}",
            model.mean.len(),
            x.ncols()
        )));
    }
    Ok((&x - &model.mean).dot(&model.components.t()))
}

/// Loads an externally computed embedding (feature columns then the class column)
/// whose rows line up with `source`. Labels must agree row by row.
pub fn load_embedding(
    path: impl AsRef<Path>,
    source: &Dataset,
    positive_label: &str,
    has_header: bool,
) -> Result<Array2<f64>> {
    let emb = load_csv(path.as_ref(), positive_label, has_header)?;
    if emb.n_instances() != source.n_instances() {
        return Err(Error::Validation(format!(
            "embedding {} has {} rows, dataset has {}",
            path.as_ref().display(),
            emb.n_instances(),
            source.n_instances()
        )));
    }
    if let Some(row) = emb.labels().iter().zip(source.labels()).position(|(a, b)| a != b) {
        return Err(Error::Validation(format!(
            "embedding {} disagrees with the dataset label at row {row}",
            path.as_ref().display()
        )));
    }
    Ok(emb.features().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    fn assert_orthonormal(c: &Array2<f64>) {
        let g = c.dot(&c.t());
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[[i, j]] - want).abs() < 1e-9, "gram[{i},{j}] = {}", g[[i, j]]);
            }
        }
    }

    #[test]
    fn line_data_has_one_direction() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [-3.0, -3.0]];
        let m = pca_fit(x.view(), 2).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!((m.components[[0, 0]] - h).abs() < 1e-12 && (m.components[[0, 1]] - h).abs() < 1e-12);
        assert!(m.explained_variance[1].abs() < 1e-12);
        let z = m.transform(x.view()).unwrap();
        assert!(z.column(1).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn axis_aligned_variances() {
        // sample variances 4 and 1 with divisor n − 1 = 3
        let x = array![[6f64.sqrt(), 0.0], [-(6f64.sqrt()), 0.0], [0.0, 1.5f64.sqrt()], [0.0, -(1.5f64.sqrt())]];
        let m = pca_fit(x.view(), 2).unwrap();
        assert!((m.explained_variance[0] - 4.0).abs() < 1e-12);
        assert!((m.explained_variance[1] - 1.0).abs() < 1e-12);
        assert_eq!(m.components, array![[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn full_rank_keeps_total_variance() {
        let x = random(30, 5, 1);
        let m = pca_fit(x.view(), 5).unwrap();
        let mean = x.mean_axis(Axis(0)).unwrap();
        let total: f64 = (&x - &mean).mapv(|v| v * v).sum() / 29.0;
        assert!((m.explained_variance.sum() - total).abs() < 1e-9);
        assert_orthonormal(&m.components);
        assert!(m.explained_variance.windows(2).into_iter().all(|w| w[0] >= w[1]));
    }

    #[test]
    fn transform_centers_and_decorrelates() {
        let x = random(40, 4, 2);
        let m = pca_fit(x.view(), 3).unwrap();
        let at_mean = m.transform(m.mean.view().insert_axis(Axis(0))).unwrap();
        assert!(at_mean.iter().all(|v| v.abs() < 1e-12));
        let z = m.transform(x.view()).unwrap();
        let cov = z.t().dot(&z) / 39.0;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(cov[[i, j]].abs() < 1e-8);
                }
            }
        }
        assert!(matches!(m.transform(random(2, 3, 0).view()), Err(Error::Contract(_))));
    }

    #[test]
    fn too_many_components_rejected() {
        assert!(matches!(pca_fit(random(3, 5, 0).view(), 4), Err(Error::Validation(_))));
        assert!(matches!(pca_fit(random(10, 2, 0).view(), 3), Err(Error::Validation(_))));
    }

    #[test]
    fn sign_convention_and_determinism() {
        let x = random(25, 4, 3);
        let a = pca_fit(x.view(), 3).unwrap();
        let b = pca_fit(x.view(), 3).unwrap();
        assert_eq!(a, b);
        for row in a.components.rows() {
            let pivot = row.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn beats_random_projections() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let latent = random(60, 2, 4);
        let mix = random(2, 6, 5);
        let x = latent.dot(&mix) + random(60, 6, 6) * 0.05;
        let mean = x.mean_axis(Axis(0)).unwrap();
        let xc = &x - &mean;
        let mse = |basis: &Array2<f64>| {
            let recon = xc.dot(&basis.t()).dot(basis);
            (&xc - &recon).mapv(|v| v * v).mean().unwrap()
        };
        let m = pca_fit(x.view(), 2).unwrap();
        let best = mse(&m.components);
        for _ in 0..100 {
            let g = DMatrix::from_fn(6, 2, |_, _| rng.random_range(-1.0..1.0));
            let q = g.qr().q();
            let basis = Array2::from_shape_fn((2, 6), |(i, j)| q[(j, i)]);
            assert!(best <= mse(&basis) + 1e-12);
        }
    }

    #[test]
    fn embedding_import_checks_alignment() {
        let dir = tempfile::tempdir().unwrap();
        let src = Dataset::from_signs("s", random(4, 3, 0), &[1.0, -1.0, 1.0, -1.0]).unwrap();
        let good = dir.path().join("good.csv");
        std::fs::write(&good, "0.1,0.2,1\n0.3,0.4,0\n0.5,0.6,1\n0.7,0.8,0\n").unwrap();
        let z = load_embedding(&good, &src, "1", false).unwrap();
        assert_eq!(z.dim(), (4, 2));
        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "0.1,1\n0.3,1\n0.5,0\n0.7,0\n").unwrap();
        assert!(matches!(load_embedding(&bad, &src, "1", false), Err(Error::Validation(_))));
    }
}
