//! Data-complexity measures for binary problems.
//!
//! | metric    | meaning                                   | better |
//! |-----------|-------------------------------------------|--------|
//! | `f1`      | maximum Fisher discriminant ratio         | higher |
//! | `f1_norm` | `1 / (1 + f1)`                            | lower  |
//! | `f3`      | maximum feature efficiency                | higher |
//! | `l2`      | linear classifier training error          | lower  |
//! | `l3`      | linear classifier error on interpolations | lower  |
//! | `n3`      | leave-one-out 1-NN error                  | lower  |
//! | `onb_tot` | balls in the class cover / n              | lower  |
//! | `onb_avg` | mean per-class balls / class size         | lower  |
//! | `t2`      | features / instances                      | lower  |

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label};
use crate::error::{Error, Result};
use crate::eval::classifiers::{lssvm_fit, Kernel, LssvmModel};
use crate::penalties::EPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    #[default]
    Euclidean,
    Manhattan,
    Chebyshev,
}

impl Distance {
    #[inline]
    pub fn eval(self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        let diffs = a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs());
        match self {
            Distance::Euclidean => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            Distance::Manhattan => diffs.sum(),
            Distance::Chebyshev => diffs.fold(0.0, f64::max),
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distance::Euclidean => "euclidean",
            Distance::Manhattan => "manhattan",
            Distance::Chebyshev => "chebyshev",
        })
    }
}

impl FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Distance::Euclidean),
            "manhattan" => Ok(Distance::Manhattan),
            "chebyshev" | "maximum" => Ok(Distance::Chebyshev),
            other => Err(Error::Validation(format!("unknown distance '{other}'"))),
        }
    }
}

/// Whether larger or smaller values of a metric indicate the better representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

/// Direction of every metric the toolkit reports, complexity and classification.
pub const METRIC_DIRECTIONS: &[(&str, Direction)] = &[
    ("f1", Direction::HigherBetter),
    ("f1_norm", Direction::LowerBetter),
    ("f3", Direction::HigherBetter),
    ("l2", Direction::LowerBetter),
    ("l3", Direction::LowerBetter),
    ("n3", Direction::LowerBetter),
    ("onb_tot", Direction::LowerBetter),
    ("onb_avg", Direction::LowerBetter),
    ("t2", Direction::LowerBetter),
    ("fscore", Direction::HigherBetter),
    ("auc", Direction::HigherBetter),
    ("kappa", Direction::HigherBetter),
];

pub fn metric_direction(metric: &str) -> Option<Direction> {
    METRIC_DIRECTIONS.iter().find(|(m, _)| *m == metric).map(|(_, d)| *d)
}

fn class_moments(data: &Dataset, class: Label) -> (Array1<f64>, Array1<f64>) {
    let d = data.n_features();
    let mut mean = Array1::zeros(d);
    let mut sq = Array1::zeros(d);
    let mut n = 0usize;
    for (row, &l) in data.features().rows().into_iter().zip(data.labels()) {
        if l == class {
            mean += &row;
            sq += &row.mapv(|v| v * v);
            n += 1;
        }
    }
    mean /= n as f64;
    sq /= n as f64;
    let var = &sq - &mean.mapv(|m| m * m);
    (mean, var.mapv(|v| v.max(0.0)))
}

/// Fisher discriminant ratio `(μ⁺−μ⁻)² / (σ²⁺+σ²⁻+ε)` of every feature.
pub fn fisher_ratios(data: &Dataset) -> Array1<f64> {
    let (mp, vp) = class_moments(data, Label::Positive);
    let (mn, vn) = class_moments(data, Label::Negative);
    Array1::from_shape_fn(data.n_features(), |j| (mp[j] - mn[j]).powi(2) / (vp[j] + vn[j] + EPS))
}

/// Maximum Fisher discriminant ratio over features (higher means less overlap).
pub fn f1_max_fisher(data: &Dataset) -> f64 {
    fisher_ratios(data).fold(0.0, |a, &b| a.max(b))
}

/// Maximum over features of the fraction of instances outside the closed interval
/// where both classes' value ranges overlap.
pub fn f3_max_efficiency(data: &Dataset) -> f64 {
    let n = data.n_instances() as f64;
    let labels = data.labels();
    data.features()
        .columns()
        .into_iter()
        .map(|col| {
            let mut range = [[f64::INFINITY, f64::NEG_INFINITY]; 2];
            for (&v, l) in col.iter().zip(labels) {
                let r = &mut range[usize::from(!l.is_positive())];
                r[0] = r[0].min(v);
                r[1] = r[1].max(v);
            }
            let lo = range[0][0].max(range[1][0]);
            let hi = range[0][1].min(range[1][1]);
            let ambiguous = col.iter().filter(|&&v| lo <= v && v <= hi).count() as f64;
            (n - ambiguous) / n
        })
        .fold(0.0, f64::max)
}

/// Pure class cover: balls centred on instances, each containing only its own class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallCover {
    pub centers: Vec<usize>,
    pub radii: Vec<f64>,
    pub ball_class: Vec<Label>,
    pub b_pos: usize,
    pub b_neg: usize,
    pub distance: Distance,
}

impl BallCover {
    pub fn n_balls(&self) -> usize {
        self.centers.len()
    }

    /// Instance `j` lies in ball `b` if it is the centre or strictly closer than the radius.
    pub fn contains(&self, data: &Dataset, ball: usize, j: usize) -> bool {
        let c = self.centers[ball];
        c == j || self.distance.eval(data.features().row(c), data.features().row(j)) < self.radii[ball]
    }

    /// Checks the cover invariants: every instance is in a ball of its class and no
    /// ball holds an instance of the other class.
    pub fn is_valid_for(&self, data: &Dataset) -> bool {
        if self.b_pos + self.b_neg != self.n_balls() {
            return false;
        }
        let labels = data.labels();
        for b in 0..self.n_balls() {
            if labels[self.centers[b]] != self.ball_class[b] {
                return false;
            }
            if (0..data.n_instances()).any(|j| labels[j] != self.ball_class[b] && self.contains(data, b, j)) {
                return false;
            }
        }
        (0..data.n_instances()).all(|j| (0..self.n_balls()).any(|b| self.ball_class[b] == labels[j] && self.contains(data, b, j)))
    }
}

/// Greedy P-CCCD cover. For each class, every instance is a candidate centre with
/// radius equal to its distance to the nearest instance of the other class; the ball
/// covering the most still-uncovered instances is taken (ties: larger radius, then
/// lower index) until the class is covered.
pub fn pcccd_cover(data: &Dataset, distance: Distance) -> BallCover {
    let x = data.features();
    let labels = data.labels();
    let mut cover = BallCover {
        centers: Vec::new(),
        radii: Vec::new(),
        ball_class: Vec::new(),
        b_pos: 0,
        b_neg: 0,
        distance,
    };
    for class in [Label::Positive, Label::Negative] {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let enemies: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != class).collect();
        let radii: Vec<f64> = members
            .iter()
            .map(|&i| {
                enemies
                    .iter()
                    .map(|&j| distance.eval(x.row(i), x.row(j)))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        // member positions (into `members`) inside each candidate ball
        let inside: Vec<Vec<usize>> = members
            .iter()
            .zip(&radii)
            .enumerate()
            .map(|(a, (&i, &r))| {
                members
                    .iter()
                    .enumerate()
                    .filter(|&(b, &j)| b == a || distance.eval(x.row(i), x.row(j)) < r)
                    .map(|(b, _)| b)
                    .collect()
            })
            .collect();
        let mut covered = vec![false; members.len()];
        let mut remaining = members.len();
        while remaining > 0 {
            let mut best: Option<(usize, usize)> = None;
            for (a, ball) in inside.iter().enumerate() {
                let gain = ball.iter().filter(|&&b| !covered[b]).count();
                let better = match best {
                    None => gain > 0,
                    Some((g, cur)) => gain > g || (gain == g && radii[a] > radii[cur]),
                };
                if better {
                    best = Some((gain, a));
                }
            }
            let (gain, a) = best.expect("an uncovered member always covers itself");
            for &b in &inside[a] {
                covered[b] = true;
            }
            remaining -= gain;
            cover.centers.push(members[a]);
            cover.radii.push(radii[a]);
            cover.ball_class.push(class);
        }
        let count = cover.ball_class.iter().filter(|&&c| c == class).count();
        match class {
            Label::Positive => cover.b_pos = count,
            Label::Negative => cover.b_neg = count,
        }
    }
    cover
}

/// `(onb_tot, onb_avg)`: total balls over `n`, and the mean of the per-class
/// balls-to-instances ratios.
pub fn onb_metrics(cover: &BallCover, n: usize, n_pos: usize, n_neg: usize) -> (f64, f64) {
    let total = (cover.b_pos + cover.b_neg) as f64 / n as f64;
    let avg = (cover.b_pos as f64 / n_pos as f64 + cover.b_neg as f64 / n_neg as f64) / 2.0;
    (total, avg)
}

/// Leave-one-out 1-NN error rate; among equidistant neighbours the lowest index wins.
pub fn n3_loo_1nn(data: &Dataset, distance: Distance) -> f64 {
    let x = data.features();
    let labels = data.labels();
    let n = data.n_instances();
    let errors = (0..n)
        .filter(|&i| {
            let mut best = (f64::INFINITY, usize::MAX);
            for j in (0..n).filter(|&j| j != i) {
                let dist = distance.eval(x.row(i), x.row(j));
                if dist < best.0 {
                    best = (dist, j);
                }
            }
            labels[best.1] != labels[i]
        })
        .count();
    errors as f64 / n as f64
}

fn linear_model(data: &Dataset, gamma: f64) -> Result<LssvmModel> {
    lssvm_fit(data.features().view(), data.labels(), gamma, Kernel::Linear)
}

fn error_rate(model: &LssvmModel, x: &Array2<f64>, truth: &[Label]) -> Result<f64> {
    if truth.is_empty() {
        return Ok(0.0);
    }
    let wrong = model.predict(x.view())?.iter().zip(truth).filter(|(p, t)| p != t).count();
    Ok(wrong as f64 / truth.len() as f64)
}

/// Training error of a linear least-squares SVM (regularization `gamma`).
pub fn l2_linear_error(data: &Dataset, gamma: f64) -> Result<f64> {
    let model = linear_model(data, gamma)?;
    error_rate(&model, data.features(), data.labels())
}

/// Error of the linear classifier fitted on `data` when applied to `n_synth` points
/// interpolated between random same-class pairs. Classes with a single member are
/// skipped; `n_synth = 0` yields 0.
pub fn l3_nonlinearity(data: &Dataset, seed: u64, n_synth: usize, gamma: f64) -> Result<f64> {
    let model = linear_model(data, gamma)?;
    l3_with_model(data, &model, seed, n_synth)
}

fn l3_with_model(data: &Dataset, model: &LssvmModel, seed: u64, n_synth: usize) -> Result<f64> {
    if n_synth == 0 {
        log::warn!("l3 requested with no synthetic points; reporting 0");
        return Ok(0.0);
    }
    let labels = data.labels();
    let classes: Vec<(Label, Vec<usize>)> = [Label::Positive, Label::Negative]
        .into_iter()
        .map(|c| (c, (0..labels.len()).filter(|&i| labels[i] == c).collect::<Vec<_>>()))
        .filter(|(_, members)| members.len() >= 2)
        .collect();
    if classes.is_empty() {
        log::warn!("l3: no class has two members; reporting 0");
        return Ok(0.0);
    }
    let eligible: usize = classes.iter().map(|(_, m)| m.len()).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = data.features();
    let mut synth = Array2::zeros((n_synth, data.n_features()));
    let mut truth = Vec::with_capacity(n_synth);
    for mut row in synth.axis_iter_mut(Axis(0)) {
        // class drawn in proportion to its size
        let mut pick = rng.random_range(0..eligible);
        let (class, members) = classes
            .iter()
            .find(|(_, m)| {
                if pick < m.len() {
                    true
                } else {
                    pick -= m.len();
                    false
                }
            })
            .expect("pick < eligible");
        let a = rng.random_range(0..members.len());
        let mut b = rng.random_range(0..members.len() - 1);
        if b >= a {
            b += 1;
        }
        let t: f64 = rng.random();
        let (xa, xb) = (x.row(members[a]), x.row(members[b]));
        row.assign(&(&xa * t + &xb * (1.0 - t)));
        truth.push(*class);
    }
    error_rate(model, &synth, &truth)
}

/// Features-to-instances ratio `d / n`.
pub fn t2_ratio(data: &Dataset) -> f64 {
    data.n_features() as f64 / data.n_instances() as f64
}

fn check_distribution(p: &[f64], name: &str) -> Result<()> {
    if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Validation(format!("{name} has negative or non-finite entries")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!("{name} sums to {sum}, not 1")));
    }
    Ok(())
}

/// Kullback–Leibler divergence `Σ p log((p+ε)/(q+ε))` of two categorical distributions.
pub fn kld(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!("distributions of length {} and {}", p.len(), q.len())));
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    Ok(crate::penalties::guarded_kld(ArrayView1::from(p), ArrayView1::from(q)))
}

/// `kld(p, q) + kld(q, p)`.
pub fn symmetric_kld(p: &[f64], q: &[f64]) -> Result<f64> {
    Ok(kld(p, q)? + kld(q, p)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityOptions {
    pub distance: Distance,
    pub seed: u64,
    /// Synthetic points for L3; defaults to the number of instances.
    pub n_synth: Option<usize>,
    /// Regularization of the linear classifier behind L2 and L3.
    pub gamma: f64,
}

impl Default for ComplexityOptions {
    fn default() -> Self {
        ComplexityOptions {
            distance: Distance::Euclidean,
            seed: 0,
            n_synth: None,
            gamma: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub f1: f64,
    pub f1_norm: f64,
    pub f3: f64,
    pub l2: f64,
    pub l3: f64,
    pub n3: f64,
    pub onb_tot: f64,
    pub onb_avg: f64,
    pub t2: f64,
}

impl ComplexityReport {
    pub fn compute(data: &Dataset, opts: &ComplexityOptions) -> Result<ComplexityReport> {
        let f1 = f1_max_fisher(data);
        let cover = pcccd_cover(data, opts.distance);
        let (onb_tot, onb_avg) = onb_metrics(&cover, data.n_instances(), data.n_positive(), data.n_negative());
        let model = linear_model(data, opts.gamma)?;
        let l2 = error_rate(&model, data.features(), data.labels())?;
        let l3 = l3_with_model(data, &model, opts.seed, opts.n_synth.unwrap_or(data.n_instances()))?;
        Ok(ComplexityReport {
            f1,
            f1_norm: 1.0 / (1.0 + f1),
            f3: f3_max_efficiency(data),
            l2,
            l3,
            n3: n3_loo_1nn(data, opts.distance),
            onb_tot,
            onb_avg,
            t2: t2_ratio(data),
        })
    }

    /// `(metric, value)` pairs in reporting order.
    pub fn metrics(&self) -> [(&'static str, f64); 9] {
        [
            ("f1", self.f1),
            ("f1_norm", self.f1_norm),
            ("f3", self.f3),
            ("l2", self.l2),
            ("l3", self.l3),
            ("n3", self.n3),
            ("onb_tot", self.onb_tot),
            ("onb_avg", self.onb_avg),
            ("t2", self.t2),
        ]
    }

    /// JSON object with the values and a `directions` map.
    pub fn to_json(&self) -> serde_json::Value {
        let mut values = serde_json::Map::new();
        let mut dirs = serde_json::Map::new();
        for (name, v) in self.metrics() {
            values.insert(name.into(), serde_json::json!(v));
            let dir = metric_direction(name).expect("every reported metric has a direction");
            dirs.insert(name.into(), serde_json::to_value(dir).expect("plain enum"));
        }
        serde_json::json!({ "metrics": values, "directions": dirs })
    }

    pub const CSV_HEADER: [&'static str; 9] = ["f1", "f1_norm", "f3", "l2", "l3", "n3", "onb_tot", "onb_avg", "t2"];

    pub fn csv_row(&self) -> Vec<String> {
        self.metrics().iter().map(|(_, v)| format!("{v:?}")).collect()
    }
}
