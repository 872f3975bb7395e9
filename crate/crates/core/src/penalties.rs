//! Class-informed penalties computed on a batch of encodings, each returning its value
//! and the gradient with respect to the encodings (and the linear head for Slicer).
//!
//! All three treat a batch holding a single class as contributing nothing: value 0,
//! zero gradient.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::network::LinearHead;

/// Guard added to denominators and inside logarithms.
pub const EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    None,
    Scorer,
    Skaler,
    Slicer,
}

impl PenaltyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PenaltyKind::None => "none",
            PenaltyKind::Scorer => "scorer",
            PenaltyKind::Skaler => "skaler",
            PenaltyKind::Slicer => "slicer",
        }
    }

    /// Default weight λ for each penalty.
    pub fn default_lambda(self) -> f64 {
        match self {
            PenaltyKind::None => 0.0,
            PenaltyKind::Scorer => 0.01,
            PenaltyKind::Skaler => 0.1,
            PenaltyKind::Slicer => 1.0,
        }
    }
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PenaltyKind::None),
            "scorer" => Ok(PenaltyKind::Scorer),
            "skaler" => Ok(PenaltyKind::Skaler),
            "slicer" => Ok(PenaltyKind::Slicer),
            other => Err(Error::Validation(format!("unknown penalty '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Penalty {
    None,
    Scorer,
    Skaler { entropy_weight: f64 },
    Slicer { beta: f64 },
}

impl Penalty {
    pub fn kind(&self) -> PenaltyKind {
        match self {
            Penalty::None => PenaltyKind::None,
            Penalty::Scorer => PenaltyKind::Scorer,
            Penalty::Skaler { .. } => PenaltyKind::Skaler,
            Penalty::Slicer { .. } => PenaltyKind::Slicer,
        }
    }
}

/// Which penalty applies and its weight λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub penalty: Penalty,
    pub lambda: f64,
}

impl PenaltySpec {
    pub fn none() -> Self {
        PenaltySpec {
            penalty: Penalty::None,
            lambda: 0.0,
        }
    }

    pub fn scorer(lambda: f64) -> Self {
        PenaltySpec {
            penalty: Penalty::Scorer,
            lambda,
        }
    }

    pub fn skaler(lambda: f64, entropy_weight: f64) -> Self {
        PenaltySpec {
            penalty: Penalty::Skaler { entropy_weight },
            lambda,
        }
    }

    pub fn slicer(lambda: f64, beta: f64) -> Self {
        PenaltySpec {
            penalty: Penalty::Slicer { beta },
            lambda,
        }
    }

    /// Default weights: Scorer 0.01, Skaler 0.1 (entropy weight 1), Slicer 1 (β = 1).
    pub fn default_for(kind: PenaltyKind) -> Self {
        let lambda = kind.default_lambda();
        match kind {
            PenaltyKind::None => Self::none(),
            PenaltyKind::Scorer => Self::scorer(lambda),
            PenaltyKind::Skaler => Self::skaler(lambda, 1.0),
            PenaltyKind::Slicer => Self::slicer(lambda, 1.0),
        }
    }

    pub fn kind(&self) -> PenaltyKind {
        self.penalty.kind()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Error::Validation(format!("{what} must be finite and non-negative, got {v}"));
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(bad("lambda", self.lambda));
        }
        match self.penalty {
            Penalty::Skaler { entropy_weight } if !entropy_weight.is_finite() || entropy_weight < 0.0 => {
                Err(bad("entropy weight", entropy_weight))
            }
            Penalty::Slicer { beta } if !beta.is_finite() || beta < 0.0 => Err(bad("beta", beta)),
            _ => Ok(()),
        }
    }
}

/// Penalty value with its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyOutput {
    pub value: f64,
    pub d_encodings: Array2<f64>,
    pub d_w: Option<Array1<f64>>,
    pub d_b: Option<f64>,
}

impl PenaltyOutput {
    fn zero(shape: (usize, usize)) -> Self {
        PenaltyOutput {
            value: 0.0,
            d_encodings: Array2::zeros(shape),
            d_w: None,
            d_b: None,
        }
    }
}

/// Per-class means and mean squares of each encoding coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchClassStats {
    pub mu_pos: Array1<f64>,
    pub mu_neg: Array1<f64>,
    pub sq_pos: Array1<f64>,
    pub sq_neg: Array1<f64>,
    pub count_pos: usize,
    pub count_neg: usize,
}

impl BatchClassStats {
    pub fn compute(encodings: ArrayView2<'_, f64>, labels: &[Label]) -> Self {
        let e = encodings.ncols();
        let mut s = BatchClassStats {
            mu_pos: Array1::zeros(e),
            mu_neg: Array1::zeros(e),
            sq_pos: Array1::zeros(e),
            sq_neg: Array1::zeros(e),
            count_pos: 0,
            count_neg: 0,
        };
        for (row, label) in encodings.rows().into_iter().zip(labels) {
            let (mu, sq, count) = if label.is_positive() {
                (&mut s.mu_pos, &mut s.sq_pos, &mut s.count_pos)
            } else {
                (&mut s.mu_neg, &mut s.sq_neg, &mut s.count_neg)
            };
            *count += 1;
            for j in 0..e {
                mu[j] += row[j];
                sq[j] += row[j] * row[j];
            }
        }
        if s.count_pos > 0 {
            let n = s.count_pos as f64;
            s.mu_pos /= n;
            s.sq_pos /= n;
        }
        if s.count_neg > 0 {
            let n = s.count_neg as f64;
            s.mu_neg /= n;
            s.sq_neg /= n;
        }
        s
    }

    pub fn has_both_classes(&self) -> bool {
        self.count_pos > 0 && self.count_neg > 0
    }

    /// Biased variance (mean square minus squared mean) of the positives.
    pub fn var_pos(&self) -> Array1<f64> {
        &self.sq_pos - &self.mu_pos.mapv(|m| m * m)
    }

    pub fn var_neg(&self) -> Array1<f64> {
        &self.sq_neg - &self.mu_neg.mapv(|m| m * m)
    }
}

fn check_batch(encodings: ArrayView2<'_, f64>, labels: &[Label]) -> Result<()> {
    if encodings.nrows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} encodings but {} labels",
            encodings.nrows(),
            labels.len()
        )));
    }
    if encodings.nrows() == 0 {
        return Err(Error::Contract("empty batch".into()));
    }
    Ok(())
}

/// Mean over coordinates of the Fisher discriminant ratio
/// `(μ⁺−μ⁻)² / (σ⁺+σ⁻+ε)`, σ being biased variances. Zero for single-class input.
pub fn mean_fisher_ratio(encodings: ArrayView2<'_, f64>, labels: &[Label]) -> f64 {
    let s = BatchClassStats::compute(encodings, labels);
    if !s.has_both_classes() {
        return 0.0;
    }
    let (vp, vn) = (s.var_pos(), s.var_neg());
    let e = encodings.ncols();
    (0..e)
        .map(|j| (s.mu_pos[j] - s.mu_neg[j]).powi(2) / (vp[j] + vn[j] + EPS))
        .sum::<f64>()
        / e as f64
}

/// Scorer: `Ω = 1 / (1 + F)` with `F` the mean Fisher ratio of the encodings.
pub fn scorer_penalty(encodings: ArrayView2<'_, f64>, labels: &[Label]) -> Result<PenaltyOutput> {
    check_batch(encodings, labels)?;
    let (m, e) = encodings.dim();
    let s = BatchClassStats::compute(encodings, labels);
    if !s.has_both_classes() {
        return Ok(PenaltyOutput::zero((m, e)));
    }
    let (vp, vn) = (s.var_pos(), s.var_neg());
    let ef = e as f64;
    let mut f = 0.0;
    // dF/dμ⁺ per coordinate (dF/dμ⁻ is its negative) and dF/dσ (same for both classes)
    let mut d_mu = Array1::zeros(e);
    let mut d_var = Array1::zeros(e);
    for j in 0..e {
        let diff = s.mu_pos[j] - s.mu_neg[j];
        let denom = vp[j] + vn[j] + EPS;
        f += diff * diff / denom;
        d_mu[j] = 2.0 * diff / denom / ef;
        d_var[j] = -diff * diff / (denom * denom) / ef;
    }
    f /= ef;
    let omega = 1.0 / (1.0 + f);
    let d_f = -omega * omega;

    let np = s.count_pos as f64;
    let nn = s.count_neg as f64;
    let mut grad = Array2::zeros((m, e));
    for ((mut g, z), label) in grad.rows_mut().into_iter().zip(encodings.rows()).zip(labels) {
        for j in 0..e {
            // dσ/dz_i = 2(z_i − μ)/N and dμ/dz_i = 1/N within the sample's class
            g[j] = if label.is_positive() {
                d_f * (d_mu[j] + d_var[j] * 2.0 * (z[j] - s.mu_pos[j])) / np
            } else {
                d_f * (-d_mu[j] + d_var[j] * 2.0 * (z[j] - s.mu_neg[j])) / nn
            };
        }
    }
    Ok(PenaltyOutput {
        value: omega,
        d_encodings: grad,
        d_w: None,
        d_b: None,
    })
}

pub fn softmax(x: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = x.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exp = x.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// Pulls a gradient with respect to `softmax(x)` back to `x`.
fn softmax_backward(p: &Array1<f64>, d_p: &Array1<f64>) -> Array1<f64> {
    let dot = p.dot(d_p);
    p * &(d_p - dot)
}

fn column_mean(encodings: ArrayView2<'_, f64>, labels: &[Label], class: Option<Label>) -> (Array1<f64>, usize) {
    let mut sum = Array1::zeros(encodings.ncols());
    let mut count = 0;
    for (row, &l) in encodings.rows().into_iter().zip(labels) {
        if class.is_none_or(|c| c == l) {
            sum += &row;
            count += 1;
        }
    }
    if count > 0 {
        sum /= count as f64;
    }
    (sum, count)
}

/// Distributions used by Skaler: softmax of the positive, negative and overall mean
/// encodings.
pub fn skaler_distributions(encodings: ArrayView2<'_, f64>, labels: &[Label]) -> Option<[Array1<f64>; 3]> {
    let (mp, np) = column_mean(encodings, labels, Some(Label::Positive));
    let (mn, nn) = column_mean(encodings, labels, Some(Label::Negative));
    if np == 0 || nn == 0 {
        return None;
    }
    let (mall, _) = column_mean(encodings, labels, None);
    Some([softmax(mp.view()), softmax(mn.view()), softmax(mall.view())])
}

/// `KL(P₊ ‖ P₋)` between the softmaxed class-mean encodings. Zero for single-class input.
pub fn skaler_kld(encodings: ArrayView2<'_, f64>, labels: &[Label]) -> f64 {
    match skaler_distributions(encodings, labels) {
        Some([pp, pn, _]) => guarded_kld(pp.view(), pn.view()),
        None => 0.0,
    }
}

pub(crate) fn guarded_kld(p: ArrayView1<'_, f64>, q: ArrayView1<'_, f64>) -> f64 {
    p.iter()
        .zip(q.iter())
        .map(|(&a, &b)| a * ((a + EPS) / (b + EPS)).ln())
        .sum()
}

/// Shannon entropy (natural log) with the logarithm guarded by ε.
pub(crate) fn guarded_entropy(p: ArrayView1<'_, f64>) -> f64 {
    -p.iter().map(|&a| a * (a + EPS).ln()).sum::<f64>()
}

/// Skaler: `Ω = −KL(P₊‖P₋) − entropy_weight · H(P̄)`. Minimizing it pushes the
/// class distributions apart while keeping the overall encoding distribution spread.
pub fn skaler_penalty(encodings: ArrayView2<'_, f64>, labels: &[Label], entropy_weight: f64) -> Result<PenaltyOutput> {
    check_batch(encodings, labels)?;
    let (m, e) = encodings.dim();
    let Some([pp, pn, pall]) = skaler_distributions(encodings, labels) else {
        return Ok(PenaltyOutput::zero((m, e)));
    };
    let kld = guarded_kld(pp.view(), pn.view());
    let entropy = guarded_entropy(pall.view());
    let value = -kld - entropy_weight * entropy;

    let d_pp = Array1::from_shape_fn(e, |j| -(((pp[j] + EPS) / (pn[j] + EPS)).ln() + pp[j] / (pp[j] + EPS)));
    let d_pn = Array1::from_shape_fn(e, |j| pp[j] / (pn[j] + EPS));
    // dΩ/dP̄ = −w · dH/dP̄ = w · (ln(P̄+ε) + P̄/(P̄+ε))
    let d_pall = Array1::from_shape_fn(e, |j| entropy_weight * ((pall[j] + EPS).ln() + pall[j] / (pall[j] + EPS)));

    let np = labels.iter().filter(|l| l.is_positive()).count() as f64;
    let nn = m as f64 - np;
    let d_mp = softmax_backward(&pp, &d_pp) / np;
    let d_mn = softmax_backward(&pn, &d_pn) / nn;
    let d_mall = softmax_backward(&pall, &d_pall) / m as f64;

    let mut grad = Array2::zeros((m, e));
    for (mut g, label) in grad.rows_mut().into_iter().zip(labels) {
        g.assign(&d_mall);
        if label.is_positive() {
            g += &d_mp;
        } else {
            g += &d_mn;
        }
    }
    Ok(PenaltyOutput {
        value,
        d_encodings: grad,
        d_w: None,
        d_b: None,
    })
}

/// Slicer: least-squares SVM objective `½‖w‖² + (β/2) Σ (1 − y(wᵀz + b))²` summed
/// over the batch, with gradients for the encodings and the head.
pub fn slicer_penalty(encodings: ArrayView2<'_, f64>, labels: &[Label], head: &LinearHead, beta: f64) -> Result<PenaltyOutput> {
    check_batch(encodings, labels)?;
    let (m, e) = encodings.dim();
    if head.w.len() != e {
        return Err(Error::Shape(format!("head has {} weights for {e} encoding columns", head.w.len())));
    }
    let mut value = 0.5 * head.w.dot(&head.w);
    let mut grad = Array2::zeros((m, e));
    let mut d_w = head.w.clone();
    let mut d_b = 0.0;
    for ((z, label), mut g) in encodings.rows().into_iter().zip(labels).zip(grad.rows_mut()) {
        let y = label.sign();
        let residual = 1.0 - y * (head.w.dot(&z) + head.b);
        value += 0.5 * beta * residual * residual;
        let coef = -beta * residual * y;
        g.assign(&(&head.w * coef));
        d_w.scaled_add(coef, &z);
        d_b += coef;
    }
    Ok(PenaltyOutput {
        value,
        d_encodings: grad,
        d_w: Some(d_w),
        d_b: Some(d_b),
    })
}

/// Dispatches on the penalty kind. `head` is required for Slicer.
pub fn evaluate(penalty: &Penalty, encodings: ArrayView2<'_, f64>, labels: &[Label], head: Option<&LinearHead>) -> Result<PenaltyOutput> {
    match *penalty {
        Penalty::None => {
            check_batch(encodings, labels)?;
            Ok(PenaltyOutput::zero(encodings.dim()))
        }
        Penalty::Scorer => scorer_penalty(encodings, labels),
        Penalty::Skaler { entropy_weight } => skaler_penalty(encodings, labels, entropy_weight),
        Penalty::Slicer { beta } => {
            let head = head.ok_or_else(|| Error::Contract("slicer penalty needs a linear head".into()))?;
            slicer_penalty(encodings, labels, head, beta)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, s};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const P: Label = Label::Positive;
    const N: Label = Label::Negative;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    fn fd_encodings(z: &Array2<f64>, f: impl Fn(&Array2<f64>) -> f64) -> Array2<f64> {
        let h = 1e-5;
        let mut probe = z.clone();
        Array2::from_shape_fn(z.dim(), |(i, j)| {
            let orig = probe[[i, j]];
            probe[[i, j]] = orig + h;
            let up = f(&probe);
            probe[[i, j]] = orig - h;
            let down = f(&probe);
            probe[[i, j]] = orig;
            (up - down) / (2.0 * h)
        })
    }

    fn random_batch(seed: u64) -> (Array2<f64>, Vec<Label>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(2..=12);
        let e = rng.random_range(1..=6);
        let z = Array2::from_shape_fn((m, e), |_| rng.random_range(0.0..1.0));
        let mut labels: Vec<Label> = (0..m).map(|_| if rng.random_bool(0.5) { P } else { N }).collect();
        labels[0] = P;
        labels[1] = N;
        (z, labels)
    }

    #[test]
    fn scorer_zero_separation() {
        let z = array![[0.0, 1.0], [1.0, 3.0], [0.0, 1.0], [1.0, 3.0]];
        let out = scorer_penalty(z.view(), &[P, P, N, N]).unwrap();
        assert_abs_diff_eq!(out.value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn scorer_hand_example() {
        let z = array![[0.0], [1.0], [2.0], [3.0]];
        let labels = [P, P, N, N];
        let stats = BatchClassStats::compute(z.view(), &labels);
        assert_eq!((stats.mu_pos[0], stats.mu_neg[0]), (0.5, 2.5));
        assert_eq!((stats.var_pos()[0], stats.var_neg()[0]), (0.25, 0.25));
        assert_abs_diff_eq!(mean_fisher_ratio(z.view(), &labels), 8.0, epsilon = 1e-6);
        let out = scorer_penalty(z.view(), &labels).unwrap();
        assert_abs_diff_eq!(out.value, 1.0 / 9.0, epsilon = 1e-8);
    }

    #[test]
    fn single_class_batches_contribute_nothing() {
        let z = array![[0.3, 0.1], [0.8, 0.9]];
        let head = LinearHead { w: array![0.5, -0.5], b: 0.1 };
        for out in [
            scorer_penalty(z.view(), &[P, P]).unwrap(),
            skaler_penalty(z.view(), &[P, P], 1.0).unwrap(),
        ] {
            assert_eq!(out.value, 0.0);
            assert!(out.d_encodings.iter().all(|&v| v == 0.0));
        }
        // the least-squares objective is still defined on one class
        assert!(slicer_penalty(z.view(), &[P, P], &head, 1.0).unwrap().value > 0.0);
    }

    #[test]
    fn skaler_identical_classes() {
        let z = array![[0.2, 0.7, 0.1], [0.2, 0.7, 0.1]];
        let out = skaler_penalty(z.view(), &[P, N], 0.0).unwrap();
        assert_abs_diff_eq!(out.value, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn skaler_hand_example() {
        let z = array![[1.0, 0.0], [0.0, 1.0]];
        let labels = [P, N];
        let [pp, pn, _] = skaler_distributions(z.view(), &labels).unwrap();
        assert_abs_diff_eq!(pp[0], 0.7311, epsilon = 1e-4);
        assert_abs_diff_eq!(pn[0], 0.2689, epsilon = 1e-4);
        let out = skaler_penalty(z.view(), &labels, 0.0).unwrap();
        assert_abs_diff_eq!(out.value, -0.4621, epsilon = 1e-4);
        assert_abs_diff_eq!(skaler_kld(z.view(), &labels), 0.4621, epsilon = 1e-4);
    }

    #[test]
    fn skaler_max_entropy() {
        let z = array![[0.5, 0.5, 0.5, 0.5], [0.5, 0.5, 0.5, 0.5]];
        let out = skaler_penalty(z.view(), &[P, N], 1.0).unwrap();
        assert_abs_diff_eq!(out.value, -(4.0f64).ln(), epsilon = 1e-6);
    }

    #[test]
    fn slicer_zero_head() {
        let z = array![[0.3, 0.1], [0.8, 0.9], [0.5, 0.5]];
        let head = LinearHead { w: array![0.0, 0.0], b: 0.0 };
        let out = slicer_penalty(z.view(), &[P, N, N], &head, 1.0).unwrap();
        assert_eq!(out.value, 1.5);
    }

    #[test]
    fn slicer_exact_fit() {
        let z = array![[1.0], [-1.0]];
        let head = LinearHead { w: array![1.0], b: 0.0 };
        let out = slicer_penalty(z.view(), &[P, N], &head, 3.0).unwrap();
        assert_eq!(out.value, 0.5);
    }

    #[test]
    fn slicer_hand_example() {
        let z = array![[2.0]];
        let head = LinearHead { w: array![1.0], b: 0.0 };
        let out = slicer_penalty(z.view(), &[P], &head, 2.0).unwrap();
        assert_eq!(out.value, 1.5);
        assert_eq!(out.d_b, Some(2.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..12 {
            let (z, labels) = random_batch(seed);
            let scorer = scorer_penalty(z.view(), &labels).unwrap();
            let fd = fd_encodings(&z, |q| scorer_penalty(q.view(), &labels).unwrap().value);
            for (a, n) in scorer.d_encodings.iter().zip(&fd) {
                assert!(rel_err(*a, *n) < 1e-4, "scorer seed {seed}: {a} vs {n}");
            }

            let skaler = skaler_penalty(z.view(), &labels, 0.7).unwrap();
            let fd = fd_encodings(&z, |q| skaler_penalty(q.view(), &labels, 0.7).unwrap().value);
            for (a, n) in skaler.d_encodings.iter().zip(&fd) {
                assert!(rel_err(*a, *n) < 1e-4, "skaler seed {seed}: {a} vs {n}");
            }

            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let head = LinearHead {
                w: Array1::from_shape_fn(z.ncols(), |_| rng.random_range(-1.0..1.0)),
                b: rng.random_range(-1.0..1.0),
            };
            let beta = 1.3;
            let slicer = slicer_penalty(z.view(), &labels, &head, beta).unwrap();
            let fd = fd_encodings(&z, |q| slicer_penalty(q.view(), &labels, &head, beta).unwrap().value);
            for (a, n) in slicer.d_encodings.iter().zip(&fd) {
                assert!(rel_err(*a, *n) < 1e-4, "slicer seed {seed}: {a} vs {n}");
            }
            let h = 1e-5;
            let d_w = slicer.d_w.unwrap();
            for j in 0..head.w.len() {
                let mut up = head.clone();
                up.w[j] += h;
                let mut down = head.clone();
                down.w[j] -= h;
                let n = (slicer_penalty(z.view(), &labels, &up, beta).unwrap().value
                    - slicer_penalty(z.view(), &labels, &down, beta).unwrap().value)
                    / (2.0 * h);
                assert!(rel_err(d_w[j], n) < 1e-4);
            }
            let mut up = head.clone();
            up.b += h;
            let mut down = head.clone();
            down.b -= h;
            let n = (slicer_penalty(z.view(), &labels, &up, beta).unwrap().value
                - slicer_penalty(z.view(), &labels, &down, beta).unwrap().value)
                / (2.0 * h);
            assert!(rel_err(slicer.d_b.unwrap(), n) < 1e-4);
        }
    }

    #[test]
    fn row_permutation_invariance() {
        let (z, labels) = random_batch(4);
        let m = z.nrows();
        let perm: Vec<usize> = (0..m).rev().collect();
        let zp = z.select(ndarray::Axis(0), &perm);
        let lp: Vec<Label> = perm.iter().map(|&i| labels[i]).collect();
        let a = scorer_penalty(z.view(), &labels).unwrap();
        let b = scorer_penalty(zp.view(), &lp).unwrap();
        assert_abs_diff_eq!(a.value, b.value, epsilon = 1e-12);
        for (k, &i) in perm.iter().enumerate() {
            for j in 0..z.ncols() {
                assert_abs_diff_eq!(a.d_encodings[[i, j]], b.d_encodings[[k, j]], epsilon = 1e-12);
            }
        }
        let a = skaler_penalty(z.view(), &labels, 1.0).unwrap();
        let b = skaler_penalty(zp.view(), &lp, 1.0).unwrap();
        assert_abs_diff_eq!(a.value, b.value, epsilon = 1e-12);
    }

    #[test]
    fn skaler_kld_shift_invariant() {
        let (z, labels) = random_batch(8);
        let shifted = &z + 3.25;
        assert_abs_diff_eq!(skaler_kld(z.view(), &labels), skaler_kld(shifted.view(), &labels), epsilon = 1e-9);
    }

    #[test]
    fn scorer_in_unit_interval() {
        for seed in 0..30 {
            let (z, labels) = random_batch(seed);
            let v = scorer_penalty(z.view(), &labels).unwrap().value;
            assert!(v > 0.0 && v <= 1.0);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(PenaltySpec::scorer(-1.0).validate().is_err());
        assert!(PenaltySpec::slicer(1.0, f64::NAN).validate().is_err());
        assert!(PenaltySpec::default_for(PenaltyKind::Skaler).validate().is_ok());
        assert_eq!(PenaltySpec::default_for(PenaltyKind::Scorer).lambda, 0.01);
        let z = array![[0.1], [0.2]];
        assert!(evaluate(&Penalty::Slicer { beta: 1.0 }, z.slice(s![.., ..]), &[P, N], None).is_err());
    }
}
