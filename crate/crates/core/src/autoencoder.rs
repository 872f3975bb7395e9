//! Autoencoder assembly and the penalized training loop.
//!
//! The objective for one mini-batch is `reconstruction + λ·Ω`, where Ω is one of the
//! class-informed penalties evaluated on the batch's encodings. The penalty gradient
//! is injected at the encoding layer; Slicer's linear head is updated by the same
//! Adam optimizer as the network weights.

use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label, MinMax};
use crate::error::{Error, Result};
use crate::network::{self, Activation, AdamConfig, AdamState, LayerSpec, NetworkParams};
use crate::penalties::{self, Penalty, PenaltyKind, PenaltySpec};
use crate::seeds::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reconstruction {
    CrossEntropy,
    Mse,
}

/// Clamp applied to reconstructions inside the cross-entropy logarithms.
pub const CE_EPS: f64 = 1e-7;

/// `max{min{round(√d), ⌊n/10⌋}, 2}`.
pub fn encoding_dim(d: usize, n: usize) -> usize {
    let by_features = (d as f64).sqrt().round() as usize;
    by_features.min(n / 10).max(2)
}

/// Layer stack of an autoencoder and where its encoding layer sits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub specs: Vec<LayerSpec>,
    /// Number of encoder layers; the encoding is the output of layer `encoder_depth - 1`.
    pub encoder_depth: usize,
}

impl Architecture {
    pub fn input_dim(&self) -> usize {
        self.specs[0].in_dim
    }

    pub fn encoding_dim(&self) -> usize {
        self.specs[self.encoder_depth - 1].out_dim
    }

    pub fn encoder_specs(&self) -> &[LayerSpec] {
        &self.specs[..self.encoder_depth]
    }
}

/// Symmetric encoder/decoder sized from the data shape.
///
/// Fewer than 100 inputs: `d→e→d`. Otherwise `d→h→e→h→d` with `h = round(√(d·e))`.
/// The encoding layer is sigmoid for Skaler and ReLU otherwise; the output layer is
/// sigmoid under cross-entropy and linear under MSE.
pub fn build_architecture(d: usize, n: usize, kind: PenaltyKind, reconstruction: Reconstruction) -> Architecture {
    let e = encoding_dim(d, n);
    let encoding = if kind == PenaltyKind::Skaler {
        Activation::Sigmoid
    } else {
        Activation::Relu
    };
    architecture_with(d, e, encoding, reconstruction)
}

/// Architecture with an explicit encoding width and encoding activation.
pub fn architecture_with(d: usize, e: usize, encoding: Activation, reconstruction: Reconstruction) -> Architecture {
    let output = match reconstruction {
        Reconstruction::CrossEntropy => Activation::Sigmoid,
        Reconstruction::Mse => Activation::Linear,
    };
    if d < 100 {
        Architecture {
            specs: vec![LayerSpec::new(d, e, encoding), LayerSpec::new(e, d, output)],
            encoder_depth: 1,
        }
    } else {
        let h = ((d * e) as f64).sqrt().round() as usize;
        Architecture {
            specs: vec![
                LayerSpec::new(d, h, Activation::Relu),
                LayerSpec::new(h, e, encoding),
                LayerSpec::new(e, h, Activation::Relu),
                LayerSpec::new(h, d, output),
            ],
            encoder_depth: 2,
        }
    }
}

/// Batch reconstruction loss and its gradient with respect to `reconstructed`.
///
/// MSE averages over all entries. Cross-entropy sums the Bernoulli cross-entropy over
/// features and averages over rows, with reconstructions clamped to `[ε, 1−ε]`.
pub fn reconstruction_loss(
    x: ArrayView2<'_, f64>,
    reconstructed: ArrayView2<'_, f64>,
    kind: Reconstruction,
) -> Result<(f64, Array2<f64>)> {
    if x.dim() != reconstructed.dim() {
        return Err(Error::Contract(format!(
            "input {:?} and reconstruction {:?} differ in shape",
            x.dim(),
            reconstructed.dim()
        )));
    }
    let (m, d) = x.dim();
    let mut grad = Array2::zeros((m, d));
    let mut total = 0.0;
    match kind {
        Reconstruction::Mse => {
            let scale = 1.0 / (m * d) as f64;
            ndarray::Zip::from(&mut grad)
                .and(x)
                .and(reconstructed)
                .for_each(|g, &a, &b| {
                    let diff = b - a;
                    total += diff * diff;
                    *g = 2.0 * diff * scale;
                });
            total *= scale;
        }
        Reconstruction::CrossEntropy => {
            let scale = 1.0 / m as f64;
            ndarray::Zip::from(&mut grad)
                .and(x)
                .and(reconstructed)
                .for_each(|g, &a, &b| {
                    let c = b.clamp(CE_EPS, 1.0 - CE_EPS);
                    total -= a * c.ln() + (1.0 - a) * (1.0 - c).ln();
                    *g = if b == c { scale * ((1.0 - a) / (1.0 - c) - a / c) } else { 0.0 };
                });
            total *= scale;
        }
    }
    Ok((total, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AeConfig {
    pub penalty: PenaltySpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub reconstruction: Reconstruction,
    pub encoding_dim_override: Option<usize>,
    /// Replaces the encoding-layer activation chosen by [`build_architecture`].
    pub encoding_activation: Option<Activation>,
    pub adam: AdamConfig,
}

impl AeConfig {
    /// Defaults for the given penalty: 200 epochs, batches of 32, cross-entropy.
    pub fn new(penalty: PenaltySpec) -> Self {
        AeConfig {
            penalty,
            epochs: 200,
            batch_size: 32,
            seed: 0,
            reconstruction: Reconstruction::CrossEntropy,
            encoding_dim_override: None,
            encoding_activation: None,
            adam: AdamConfig::default(),
        }
    }

    pub fn basic() -> Self {
        Self::new(PenaltySpec::none())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Validation("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Validation("batch size must be at least 2".into()));
        }
        if self.encoding_dim_override == Some(0) {
            return Err(Error::Validation("encoding dimension must be positive".into()));
        }
        self.penalty.validate()
    }

    pub fn architecture(&self, d: usize, n: usize) -> Architecture {
        let kind = self.penalty.kind();
        let default = build_architecture(d, n, kind, self.reconstruction);
        if self.encoding_dim_override.is_none() && self.encoding_activation.is_none() {
            return default;
        }
        let e = self.encoding_dim_override.unwrap_or_else(|| encoding_dim(d, n));
        let act = self
            .encoding_activation
            .unwrap_or(default.specs[default.encoder_depth - 1].activation);
        architecture_with(d, e, act, self.reconstruction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub reconstruction: f64,
    /// Raw penalty Ω (before the λ weight), averaged over the epoch's batches.
    pub penalty: f64,
}

/// A fitted autoencoder: the encoder/decoder parameters plus the scaling fitted on
/// its training data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: NetworkParams,
    pub architecture: Architecture,
    pub normalizer: MinMax,
    pub loss_history: Vec<EpochLoss>,
}

impl TrainedModel {
    pub fn encoding_dim(&self) -> usize {
        self.architecture.encoding_dim()
    }

    /// Maps rows in the original feature space to the encoding space. Inputs are
    /// rescaled with the training statistics, clipped to `[0, 1]`.
    pub fn encode(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let scaled = self.normalizer.apply(x)?;
        self.encode_normalized(scaled.view())
    }

    pub fn encode_normalized(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let cache = network::forward_layers(&self.params, &self.architecture.specs, x, self.architecture.encoder_depth)?;
        Ok(cache.activations.into_iter().last().expect("non-empty"))
    }

    /// Full encode/decode pass on original-space rows.
    pub fn reconstruct(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let scaled = self.normalizer.apply(x)?;
        let cache = network::forward(&self.params, &self.architecture.specs, scaled.view())?;
        Ok(cache.activations.into_iter().last().expect("non-empty"))
    }

    /// Writes the model in the text format described in [`crate::network`], preceded by
    /// the encoder depth and the scaling statistics.
    pub fn write_checkpoint<W: Write>(&self, out: &mut W) -> Result<()> {
        let io = |e| Error::io("<checkpoint>", e);
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        writeln!(out, "ciae-model v1").map_err(io)?;
        writeln!(out, "encoder_depth {}", self.architecture.encoder_depth).map_err(io)?;
        writeln!(out, "min {}", join(&self.normalizer.min)).map_err(io)?;
        writeln!(out, "max {}", join(&self.normalizer.max)).map_err(io)?;
        network::write_checkpoint(out, &self.architecture.specs, &self.params)
    }

    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_checkpoint(&mut buf).expect("writing to memory");
        buf
    }

    /// Reads a checkpoint; the loss history is not stored and comes back empty.
    pub fn read_checkpoint<R: BufRead>(input: R) -> Result<TrainedModel> {
        let mut lines = network::Lines::new(input);
        let version = lines.expect("ciae-model")?;
        if version != "v1" {
            return Err(Error::Format(format!("unsupported model version '{version}'")));
        }
        let depth = network::parse_usize(&lines.expect("encoder_depth")?, lines.line)?;
        let min_line = lines.expect("min")?;
        let min = parse_reals(&min_line)?;
        let max = lines.reals("max", min.len())?;
        let (specs, params) = network::read_checkpoint_lines(&mut lines)?;
        if depth == 0 || depth > specs.len() || specs[0].in_dim != min.len() {
            return Err(Error::Format("checkpoint header does not match its network".into()));
        }
        Ok(TrainedModel {
            params,
            architecture: Architecture {
                specs,
                encoder_depth: depth,
            },
            normalizer: MinMax { min, max },
            loss_history: Vec::new(),
        })
    }

    /// Training log as CSV: `epoch,reconstruction_loss,penalty_value`.
    pub fn write_training_log<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "reconstruction_loss", "penalty_value"])?;
        for (epoch, l) in self.loss_history.iter().enumerate() {
            w.write_record([epoch.to_string(), format!("{:?}", l.reconstruction), format!("{:?}", l.penalty)])?;
        }
        w.flush().map_err(|e| Error::io("<training log>", e))?;
        Ok(())
    }
}

fn parse_reals(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| Error::Format(format!("'{t}': {e}"))))
        .collect()
}

/// Untrained model: scaling fitted on `data` and freshly initialized parameters.
pub fn initialize(data: &Dataset, cfg: &AeConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let normalizer = MinMax::fit(data.features().view());
    let architecture = cfg.architecture(data.n_features(), data.n_instances());
    let head = matches!(cfg.penalty.penalty, Penalty::Slicer { .. }).then(|| architecture.encoding_dim());
    let params = network::init_params(&architecture.specs, cfg.seed, head)?;
    Ok(TrainedModel {
        params,
        architecture,
        normalizer,
        loss_history: Vec::new(),
    })
}

/// Orders row indices so that each class is spread evenly over the epoch, then cuts
/// the order into batches. A trailing single row joins the previous batch.
pub fn stratified_batches(labels: &[Label], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_positive()).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i].is_positive()).collect();
    pos.shuffle(rng);
    neg.shuffle(rng);
    let (np, nn) = (pos.len(), neg.len());
    let mut order = Vec::with_capacity(labels.len());
    let (mut i, mut j) = (0, 0);
    // merge by fractional position (2i+1)/(2·np) vs (2j+1)/(2·nn)
    while i < np || j < nn {
        let take_pos = j == nn || (i < np && (2 * i + 1) * nn <= (2 * j + 1) * np);
        if take_pos {
            order.push(pos[i]);
            i += 1;
        } else {
            order.push(neg[j]);
            j += 1;
        }
    }
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().expect("checked");
        batches.last_mut().expect("checked").extend(last);
    }
    batches
}

/// Loss terms of one batch and the gradient of `reconstruction + λ·penalty`.
#[derive(Debug, Clone)]
pub struct BatchObjective {
    pub reconstruction: f64,
    /// Raw Ω, before weighting.
    pub penalty: f64,
    pub grads: NetworkParams,
}

/// Evaluates the training objective on a normalized batch. With λ = 0 the penalty
/// is reported but contributes nothing to the gradient.
pub fn batch_objective(
    params: &NetworkParams,
    architecture: &Architecture,
    penalty: &PenaltySpec,
    reconstruction: Reconstruction,
    x: ArrayView2<'_, f64>,
    labels: &[Label],
) -> Result<BatchObjective> {
    let specs = &architecture.specs;
    let enc_layer = architecture.encoder_depth - 1;
    let lambda = penalty.lambda;
    let cache = network::forward(params, specs, x)?;
    let (rec, d_out) = reconstruction_loss(x, cache.output().view(), reconstruction)?;
    let pen = penalties::evaluate(&penalty.penalty, cache.layer_output(enc_layer).view(), labels, params.head.as_ref())?;
    // λ = 0 skips the injection entirely so the trajectory equals the plain AE
    let grads = if lambda != 0.0 {
        let tap = pen.d_encodings * lambda;
        let mut g = network::backward_with_taps(params, specs, &cache, d_out.view(), &[(enc_layer, tap.view())])?;
        if let (Some(h), Some(dw), Some(db)) = (g.head.as_mut(), pen.d_w, pen.d_b) {
            h.w = dw * lambda;
            h.b = db * lambda;
        }
        g
    } else {
        network::backward(params, specs, &cache, d_out.view())?
    };
    Ok(BatchObjective {
        reconstruction: rec,
        penalty: pen.value,
        grads,
    })
}

/// Trains an autoencoder on `data` with the configured penalty.
pub fn train(data: &Dataset, cfg: &AeConfig) -> Result<TrainedModel> {
    let mut model = initialize(data, cfg)?;
    let x = model.normalizer.apply(data.features().view())?;
    let labels = data.labels();
    let lambda = cfg.penalty.lambda;
    let mut adam = AdamState::new(&model.params, cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "ae-batches"));

    for epoch in 0..cfg.epochs {
        let (mut rec_sum, mut pen_sum) = (0.0, 0.0);
        let batches = stratified_batches(labels, cfg.batch_size, &mut rng);
        for (b, rows) in batches.iter().enumerate() {
            let xb = x.select(Axis(0), rows);
            let lb: Vec<Label> = rows.iter().map(|&i| labels[i]).collect();
            let BatchObjective {
                reconstruction: rec,
                penalty: pen,
                grads,
            } = batch_objective(&model.params, &model.architecture, &cfg.penalty, cfg.reconstruction, xb.view(), &lb)?;
            if !(rec + lambda * pen).is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    reconstruction: rec,
                    penalty: pen,
                });
            }
            adam.step(&mut model.params, &grads)?;
            let w = rows.len() as f64;
            rec_sum += rec * w;
            pen_sum += pen * w;
        }
        if !model.params.is_finite() {
            return Err(Error::Numeric(format!("non-finite parameters after epoch {epoch}")));
        }
        let n = data.n_instances() as f64;
        model.loss_history.push(EpochLoss {
            reconstruction: rec_sum / n,
            penalty: pen_sum / n,
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn encoding_dim_examples() {
        assert_eq!(encoding_dim(100, 1000), 10);
        assert_eq!(encoding_dim(10000, 200), 20);
        assert_eq!(encoding_dim(4, 15), 2);
        assert_eq!(encoding_dim(60, 1000), 8);
    }

    #[test]
    fn shallow_architecture() {
        let a = build_architecture(60, 1000, PenaltyKind::None, Reconstruction::CrossEntropy);
        assert_eq!(
            a.specs,
            vec![LayerSpec::new(60, 8, Activation::Relu), LayerSpec::new(8, 60, Activation::Sigmoid)]
        );
        assert_eq!(a.encoder_depth, 1);
    }

    #[test]
    fn deep_architecture() {
        let a = build_architecture(100, 1000, PenaltyKind::Slicer, Reconstruction::CrossEntropy);
        assert_eq!(
            a.specs,
            vec![
                LayerSpec::new(100, 32, Activation::Relu),
                LayerSpec::new(32, 10, Activation::Relu),
                LayerSpec::new(10, 32, Activation::Relu),
                LayerSpec::new(32, 100, Activation::Sigmoid),
            ]
        );
        let s = build_architecture(100, 1000, PenaltyKind::Skaler, Reconstruction::CrossEntropy);
        assert_eq!(s.specs[1], LayerSpec::new(32, 10, Activation::Sigmoid));
        assert_eq!(s.encoding_dim(), 10);
        let m = build_architecture(100, 1000, PenaltyKind::None, Reconstruction::Mse);
        assert_eq!(m.specs[3].activation, Activation::Linear);
    }

    #[test]
    fn reconstruction_examples() {
        let x = array![[1.0, 0.0, 1.0]];
        let (ce, _) = reconstruction_loss(x.view(), x.view(), Reconstruction::CrossEntropy).unwrap();
        assert!(ce < 1e-6);
        let (mse, _) = reconstruction_loss(x.view(), x.view(), Reconstruction::Mse).unwrap();
        assert_eq!(mse, 0.0);
        let (half, _) = reconstruction_loss(array![[1.0]].view(), array![[0.5]].view(), Reconstruction::CrossEntropy).unwrap();
        assert_abs_diff_eq!(half, 0.5f64.ln().abs(), epsilon = 1e-12);
        assert!(reconstruction_loss(x.view(), array![[1.0]].view(), Reconstruction::Mse).is_err());
    }

    #[test]
    fn reconstruction_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array2::from_shape_fn((4, 3), |_| rng.random_range(0.0..1.0));
        let r = Array2::from_shape_fn((4, 3), |_| rng.random_range(0.05..0.95));
        for kind in [Reconstruction::CrossEntropy, Reconstruction::Mse] {
            let (_, g) = reconstruction_loss(x.view(), r.view(), kind).unwrap();
            let h = 1e-5;
            for i in 0..4 {
                for j in 0..3 {
                    let mut up = r.clone();
                    up[[i, j]] += h;
                    let mut down = r.clone();
                    down[[i, j]] -= h;
                    let n = (reconstruction_loss(x.view(), up.view(), kind).unwrap().0
                        - reconstruction_loss(x.view(), down.view(), kind).unwrap().0)
                        / (2.0 * h);
                    assert!((g[[i, j]] - n).abs() / n.abs().max(1e-6) < 1e-4);
                }
            }
        }
    }

    #[test]
    fn batches_cover_every_row_with_both_classes() {
        let labels: Vec<Label> = (0..70).map(|i| if i % 7 == 0 { Label::Positive } else { Label::Negative }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batches = stratified_batches(&labels, 16, &mut rng);
        let mut all: Vec<usize> = batches.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..70).collect::<Vec<_>>());
        for b in &batches {
            assert!(b.iter().any(|&i| labels[i].is_positive()));
            assert!(b.iter().any(|&i| !labels[i].is_positive()));
        }
    }

    #[test]
    fn trailing_singleton_is_merged() {
        let labels: Vec<Label> = (0..9).map(|i| if i < 4 { Label::Positive } else { Label::Negative }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batches = stratified_batches(&labels, 4, &mut rng);
        assert_eq!(batches.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 5]);
    }

    #[test]
    fn config_validation() {
        assert!(AeConfig::basic().with_epochs(0).validate().is_err());
        let mut c = AeConfig::basic();
        c.batch_size = 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let x = array![[0.0, 1.0, 2.0], [1.0, 0.5, 0.0], [0.3, 0.2, 0.1], [2.0, 2.0, 2.0]];
        let ds = Dataset::from_signs("t", x, &[1.0, -1.0, 1.0, -1.0]).unwrap();
        let mut cfg = AeConfig::new(PenaltySpec::default_for(PenaltyKind::Slicer)).with_epochs(3);
        cfg.batch_size = 2;
        let m = train(&ds, &cfg).unwrap();
        let bytes = m.checkpoint_bytes();
        let back = TrainedModel::read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(back.checkpoint_bytes(), bytes);
        assert_eq!(back.params, m.params);
        assert_eq!(back.normalizer, m.normalizer);
    }
}
