//! Synthetic binary problems with known geometry, used by tests, benches and the
//! `synthetic:` dataset source of the benchmark runner.
//!
//! Classes are balanced (positives first, then negatives) and every generator is
//! deterministic for a given seed. `noise` appends that many pure-noise columns drawn
//! from a standard normal.

use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Dataset, Label};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// Two well-separated Gaussian blobs.
    Blobs,
    /// Two informative Gaussian dimensions with partly overlapping classes.
    Informative,
    /// Positive clusters scattered inside a negative background.
    SmallDisjuncts,
    /// Two crossing elongated Gaussians.
    Ellipses,
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(Shape::Blobs),
            "informative" => Ok(Shape::Informative),
            "disjuncts" | "small-disjuncts" => Ok(Shape::SmallDisjuncts),
            "ellipses" => Ok(Shape::Ellipses),
            other => Err(Error::Config(format!("unknown synthetic shape '{other}'"))),
        }
    }
}

impl Shape {
    pub fn as_str(self) -> &'static str {
        match self {
            Shape::Blobs => "blobs",
            Shape::Informative => "informative",
            Shape::SmallDisjuncts => "disjuncts",
            Shape::Ellipses => "ellipses",
        }
    }

    pub fn generate(self, n: usize, noise: usize, seed: u64) -> Result<Dataset> {
        match self {
            Shape::Blobs => blobs(n, noise, seed),
            Shape::Informative => informative(n, noise, seed),
            Shape::SmallDisjuncts => small_disjuncts(n, noise, seed),
            Shape::Ellipses => ellipses(n, noise, seed),
        }
    }
}

fn std_normal() -> Normal<f64> {
    Normal::new(0.0, 1.0).expect("unit normal")
}

fn assemble(name: &str, signal: Array2<f64>, noise: usize, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let (n, k) = signal.dim();
    let normal = std_normal();
    let mut x = Array2::zeros((n, k + noise));
    x.slice_mut(ndarray::s![.., ..k]).assign(&signal);
    for v in x.slice_mut(ndarray::s![.., k..]).iter_mut() {
        *v = normal.sample(rng);
    }
    let labels = (0..n).map(|i| if i < n / 2 { Label::Positive } else { Label::Negative }).collect();
    Dataset::new(name, x, labels)
}

fn check_n(n: usize) -> Result<()> {
    if n < 4 {
        return Err(Error::Validation(format!("need at least 4 instances, got {n}")));
    }
    Ok(())
}

pub fn blobs(n: usize, noise: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.5).expect("valid sd");
    let signal = Array2::from_shape_fn((n, 2), |(i, _)| {
        let c = if i < n / 2 { 2.0 } else { -2.0 };
        c + normal.sample(&mut rng)
    });
    assemble("blobs", signal, noise, &mut rng)
}

/// Class means `±0.75` on both informative dimensions, unit variance.
pub fn informative(n: usize, noise: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = std_normal();
    let signal = Array2::from_shape_fn((n, 2), |(i, _)| {
        let c = if i < n / 2 { 0.75 } else { -0.75 };
        c + normal.sample(&mut rng)
    });
    assemble("informative", signal, noise, &mut rng)
}

const DISJUNCT_CLUSTERS: usize = 6;
const DISJUNCT_SD: f64 = 0.04;
const DISJUNCT_CLEARANCE: f64 = 0.16;
const DISJUNCT_SPACING: f64 = 0.25;

fn disjunct_centers(rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let mut centers: Vec<(f64, f64)> = Vec::with_capacity(DISJUNCT_CLUSTERS);
    while centers.len() < DISJUNCT_CLUSTERS {
        let c = (rng.random_range(0.1..0.9), rng.random_range(0.1..0.9));
        if centers.iter().all(|&(x, y)| (x - c.0).hypot(y - c.1) > DISJUNCT_SPACING) {
            centers.push(c);
        }
    }
    centers
}

/// Positives in six tight clusters placed at random on the unit square; negatives
/// uniform on the square outside a clearance disc around each cluster, so the
/// classes are separable but only by a fragmented boundary.
pub fn small_disjuncts(n: usize, noise: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = disjunct_centers(&mut rng);
    let normal = Normal::new(0.0, DISJUNCT_SD).expect("valid sd");
    let n_pos = n / 2;
    let mut signal = Array2::zeros((n, 2));
    for i in 0..n_pos {
        let (cx, cy) = centers[i % centers.len()];
        signal[[i, 0]] = cx + normal.sample(&mut rng);
        signal[[i, 1]] = cy + normal.sample(&mut rng);
    }
    for i in n_pos..n {
        loop {
            let (x, y): (f64, f64) = (rng.random(), rng.random());
            if centers.iter().all(|&(cx, cy)| (x - cx).hypot(y - cy) > DISJUNCT_CLEARANCE) {
                signal[[i, 0]] = x;
                signal[[i, 1]] = y;
                break;
            }
        }
    }
    assemble("disjuncts", signal, noise, &mut rng)
}

/// Two Gaussians with sd 1.5 along their major axis and 0.4 across it, rotated by
/// ±30° and offset by ±0.5 horizontally, so they cross near the origin.
pub fn ellipses(n: usize, noise: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = std_normal();
    let mut signal = Array2::zeros((n, 2));
    for i in 0..n {
        let (offset, angle) = if i < n / 2 { (0.5, 30f64.to_radians()) } else { (-0.5, -30f64.to_radians()) };
        let (u, v) = (1.5 * normal.sample(&mut rng), 0.4 * normal.sample(&mut rng));
        let (s, c) = angle.sin_cos();
        signal[[i, 0]] = offset + c * u - s * v;
        signal[[i, 1]] = s * u + c * v;
    }
    assemble("ellipses", signal, noise, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexity::{n3_loo_1nn, Distance};

    #[test]
    fn shapes_and_balance() {
        for shape in [Shape::Blobs, Shape::Informative, Shape::SmallDisjuncts, Shape::Ellipses] {
            let ds = shape.generate(400, 18, 3).unwrap();
            assert_eq!(ds.n_instances(), 400);
            assert_eq!(ds.n_features(), 20);
            assert_eq!(ds.n_positive(), 200);
            assert_eq!(shape.as_str().parse::<Shape>().unwrap(), shape);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(ellipses(50, 3, 7).unwrap(), ellipses(50, 3, 7).unwrap());
        assert_ne!(ellipses(50, 3, 7).unwrap(), ellipses(50, 3, 8).unwrap());
    }

    #[test]
    fn disjuncts_are_separable() {
        let ds = small_disjuncts(200, 0, 1).unwrap();
        let centers = disjunct_centers(&mut ChaCha8Rng::seed_from_u64(1));
        let x = ds.features();
        for i in 100..200 {
            for &(cx, cy) in &centers {
                assert!((x[[i, 0]] - cx).hypot(x[[i, 1]] - cy) > DISJUNCT_CLEARANCE);
            }
        }
        assert!(n3_loo_1nn(&ds, Distance::Euclidean) < 0.1);
    }
}
