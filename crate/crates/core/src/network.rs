//! Dense feed-forward networks: forward pass with cached activations, reverse-mode
//! gradients, Adam and a text checkpoint format.
//!
//! Weights are stored `out_dim × in_dim`; a batch is `m × in_dim` and a layer computes
//! `act(batch · Wᵀ + b)`.
//!
//! # Checkpoint format
//!
//! Line oriented UTF-8. Every real is written with Rust's shortest round-trip
//! formatting, so reading a checkpoint back yields bit-identical values.
//!
//! ```text
//! ciae-network v1
//! layers <L>
//! layer <in_dim> <out_dim> <relu|sigmoid|linear>
//! weight <out_dim*in_dim values, row-major>
//! bias <out_dim values>
//! ...                      (repeated L times)
//! head <e>                 (or "head none")
//! w <e values>
//! b <value>
//! end
//! ```

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Linear => 1.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Linear => "linear",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::Format(format!("unknown activation '{other}'"))),
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        LayerSpec {
            in_dim,
            out_dim,
            activation,
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}→{} {}", self.in_dim, self.out_dim, self.activation)
    }
}

/// Checks that every layer is non-empty and that consecutive layers chain.
pub fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Contract("network needs at least one layer".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.in_dim == 0 || s.out_dim == 0 {
            return Err(Error::Contract(format!("layer {i} has a zero dimension ({s})")));
        }
    }
    for (i, pair) in specs.windows(2).enumerate() {
        if pair[0].out_dim != pair[1].in_dim {
            return Err(Error::Contract(format!(
                "layer {i} outputs {} but layer {} expects {}",
                pair[0].out_dim,
                i + 1,
                pair[1].in_dim
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Linear decision head `p = wᵀz + b` trained jointly with the network.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub w: Array1<f64>,
    pub b: f64,
}

/// Trainable tensors of a layer stack, plus an optional linear head on the encoding.
/// The same type carries gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<DenseParams>,
    pub head: Option<LinearHead>,
}

impl NetworkParams {
    pub fn zeros_like(&self) -> NetworkParams {
        NetworkParams {
            layers: self
                .layers
                .iter()
                .map(|l| DenseParams {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
            head: self.head.as_ref().map(|h| LinearHead {
                w: Array1::zeros(h.w.len()),
                b: 0.0,
            }),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 2);
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        if let Some(h) = &self.head {
            out.push(h.w.as_slice().expect("standard layout"));
            out.push(std::slice::from_ref(&h.b));
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 2);
        for l in &mut self.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        if let Some(h) = &mut self.head {
            out.push(h.w.as_slice_mut().expect("standard layout"));
            out.push(std::slice::from_mut(&mut h.b));
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn same_shape(&self, other: &NetworkParams) -> bool {
        let a = self.slices();
        let b = other.slices();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.len() == y.len())
    }

    /// Checks that the tensors match `specs`.
    pub fn check_specs(&self, specs: &[LayerSpec]) -> Result<()> {
        if self.layers.len() != specs.len() {
            return Err(Error::Contract(format!(
                "{} parameter layers for {} specs",
                self.layers.len(),
                specs.len()
            )));
        }
        for (i, (l, s)) in self.layers.iter().zip(specs).enumerate() {
            if l.weight.dim() != (s.out_dim, s.in_dim) || l.bias.len() != s.out_dim {
                return Err(Error::Contract(format!(
                    "layer {i}: weight {:?} / bias {} do not match {s}",
                    l.weight.dim(),
                    l.bias.len()
                )));
            }
        }
        Ok(())
    }
}

/// Glorot-uniform weights, zero biases, zero head. Deterministic per seed.
pub fn init_params(specs: &[LayerSpec], seed: u64, head_dim: Option<usize>) -> Result<NetworkParams> {
    validate_specs(specs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = specs
        .iter()
        .map(|s| {
            let limit = (6.0 / (s.in_dim + s.out_dim) as f64).sqrt();
            let weight = Array2::from_shape_simple_fn((s.out_dim, s.in_dim), || rng.random_range(-limit..limit));
            DenseParams {
                weight,
                bias: Array1::zeros(s.out_dim),
            }
        })
        .collect();
    let head = head_dim.map(|e| LinearHead {
        w: Array1::zeros(e),
        b: 0.0,
    });
    Ok(NetworkParams { layers, head })
}

/// Activations of every layer for one batch. `activations[0]` is the input,
/// `activations[i + 1]` the output of layer `i`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("non-empty cache")
    }

    pub fn layer_output(&self, layer: usize) -> &Array2<f64> {
        &self.activations[layer + 1]
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].nrows()
    }
}

pub fn forward(params: &NetworkParams, specs: &[LayerSpec], batch: ArrayView2<'_, f64>) -> Result<ForwardCache> {
    forward_layers(params, specs, batch, specs.len())
}

/// Forward pass through the first `depth` layers only.
pub fn forward_layers(
    params: &NetworkParams,
    specs: &[LayerSpec],
    batch: ArrayView2<'_, f64>,
    depth: usize,
) -> Result<ForwardCache> {
    params.check_specs(specs)?;
    if batch.ncols() != specs[0].in_dim {
        return Err(Error::Shape(format!(
            "batch has {} columns, network expects {}",
            batch.ncols(),
            specs[0].in_dim
        )));
    }
    let depth = depth.min(specs.len());
    let mut activations = Vec::with_capacity(depth + 1);
    activations.push(batch.to_owned());
    for (layer, spec) in params.layers.iter().zip(specs).take(depth) {
        let input = activations.last().expect("input pushed");
        let mut z = input.dot(&layer.weight.t());
        z += &layer.bias;
        z.mapv_inplace(|v| spec.activation.apply(v));
        activations.push(z);
    }
    Ok(ForwardCache { activations })
}

/// Gradients of a scalar loss given `dLoss/dOutput`.
pub fn backward(
    params: &NetworkParams,
    specs: &[LayerSpec],
    cache: &ForwardCache,
    d_output: ArrayView2<'_, f64>,
) -> Result<NetworkParams> {
    backward_with_taps(params, specs, cache, d_output, &[])
}

/// Like [`backward`], additionally injecting `dLoss/d(output of layer i)` for each
/// `(i, grad)` tap. Used to route a penalty on an intermediate (encoding) layer
/// through the encoder. Head gradients, if a head exists, are returned as zeros.
pub fn backward_with_taps(
    params: &NetworkParams,
    specs: &[LayerSpec],
    cache: &ForwardCache,
    d_output: ArrayView2<'_, f64>,
    taps: &[(usize, ArrayView2<'_, f64>)],
) -> Result<NetworkParams> {
    params.check_specs(specs)?;
    if cache.activations.len() != specs.len() + 1 {
        return Err(Error::Contract(format!(
            "cache holds {} activations, expected {}",
            cache.activations.len(),
            specs.len() + 1
        )));
    }
    for (i, spec) in specs.iter().enumerate() {
        let a_in = &cache.activations[i];
        let a_out = &cache.activations[i + 1];
        if a_in.ncols() != spec.in_dim || a_out.ncols() != spec.out_dim || a_out.nrows() != a_in.nrows() {
            return Err(Error::Contract(format!("cache does not match layer {i} ({spec})")));
        }
    }
    if d_output.dim() != cache.output().dim() {
        return Err(Error::Shape(format!(
            "output gradient {:?} does not match output {:?}",
            d_output.dim(),
            cache.output().dim()
        )));
    }
    for (layer, g) in taps {
        if *layer >= specs.len() || g.dim() != cache.layer_output(*layer).dim() {
            return Err(Error::Shape(format!("tap on layer {layer} has shape {:?}", g.dim())));
        }
    }

    let mut grads = params.zeros_like();
    let mut delta = d_output.to_owned();
    for i in (0..specs.len()).rev() {
        for (_, g) in taps.iter().filter(|(l, _)| *l == i) {
            delta += g;
        }
        let act = specs[i].activation;
        let a_out = &cache.activations[i + 1];
        ndarray::Zip::from(&mut delta)
            .and(a_out)
            .for_each(|d, &a| *d *= act.derivative_from_output(a));
        let a_in = &cache.activations[i];
        grads.layers[i].weight = delta.t().dot(a_in);
        grads.layers[i].bias = delta.sum_axis(Axis(0));
        if i > 0 {
            delta = delta.dot(&params.layers[i].weight);
        }
    }
    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators shaped like the parameters they update.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: NetworkParams,
    pub v: NetworkParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &NetworkParams, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut NetworkParams, grads: &NetworkParams) -> Result<()> {
        if !params.same_shape(grads) || !params.same_shape(&self.m) {
            return Err(Error::Contract("adam: gradient/state shapes do not match parameters".into()));
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let grads = grads.slices();
        for (((p, g), m), v) in params
            .slices_mut()
            .into_iter()
            .zip(grads)
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
        {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

fn join(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 20);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(&format!("{v:?}"));
    }
    s
}

pub fn write_checkpoint<W: Write>(out: &mut W, specs: &[LayerSpec], params: &NetworkParams) -> Result<()> {
    params.check_specs(specs)?;
    let io = |e| Error::io("<checkpoint>", e);
    writeln!(out, "ciae-network v1").map_err(io)?;
    writeln!(out, "layers {}", specs.len()).map_err(io)?;
    for (s, l) in specs.iter().zip(&params.layers) {
        writeln!(out, "layer {} {} {}", s.in_dim, s.out_dim, s.activation).map_err(io)?;
        writeln!(out, "weight {}", join(l.weight.as_slice().expect("standard layout"))).map_err(io)?;
        writeln!(out, "bias {}", join(l.bias.as_slice().expect("standard layout"))).map_err(io)?;
    }
    match &params.head {
        Some(h) => {
            writeln!(out, "head {}", h.w.len()).map_err(io)?;
            writeln!(out, "w {}", join(h.w.as_slice().expect("standard layout"))).map_err(io)?;
            writeln!(out, "b {:?}", h.b).map_err(io)?;
        }
        None => writeln!(out, "head none").map_err(io)?,
    }
    writeln!(out, "end").map_err(io)?;
    Ok(())
}

/// Line reader shared by the checkpoint parsers.
pub(crate) struct Lines<R> {
    inner: std::io::Lines<R>,
    pub line: usize,
}

impl<R: BufRead> Lines<R> {
    pub(crate) fn new(r: R) -> Self {
        Lines {
            inner: r.lines(),
            line: 0,
        }
    }

    /// Next line split into its keyword and the remainder.
    pub(crate) fn expect(&mut self, keyword: &str) -> Result<String> {
        self.line += 1;
        let line = self
            .inner
            .next()
            .ok_or_else(|| Error::Format(format!("checkpoint truncated, expected '{keyword}'")))?
            .map_err(|e| Error::io("<checkpoint>", e))?;
        let (head, rest) = line.split_once(' ').unwrap_or((line.as_str(), ""));
        if head != keyword {
            return Err(Error::Format(format!(
                "checkpoint line {}: expected '{keyword}', found '{head}'",
                self.line
            )));
        }
        Ok(rest.to_string())
    }

    pub(crate) fn reals(&mut self, keyword: &str, count: usize) -> Result<Vec<f64>> {
        let rest = self.expect(keyword)?;
        let values = rest
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("checkpoint line {}: {e}", self.line)))?;
        if values.len() != count {
            return Err(Error::Format(format!(
                "checkpoint line {}: expected {count} values, found {}",
                self.line,
                values.len()
            )));
        }
        Ok(values)
    }
}

pub(crate) fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("checkpoint line {line}: '{s}' is not a count")))
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<(Vec<LayerSpec>, NetworkParams)> {
    read_checkpoint_lines(&mut Lines::new(input))
}

pub(crate) fn read_checkpoint_lines<R: BufRead>(lines: &mut Lines<R>) -> Result<(Vec<LayerSpec>, NetworkParams)> {
    let version = lines.expect("ciae-network")?;
    if version != "v1" {
        return Err(Error::Format(format!("unsupported checkpoint version '{version}'")));
    }
    let count = parse_usize(&lines.expect("layers")?, lines.line)?;
    let mut specs = Vec::with_capacity(count);
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let rest = lines.expect("layer")?;
        let parts: Vec<&str> = rest.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Format(format!("checkpoint line {}: malformed layer", lines.line)));
        }
        let spec = LayerSpec::new(
            parse_usize(parts[0], lines.line)?,
            parse_usize(parts[1], lines.line)?,
            parts[2].parse()?,
        );
        let weight = lines.reals("weight", spec.in_dim * spec.out_dim)?;
        let bias = lines.reals("bias", spec.out_dim)?;
        layers.push(DenseParams {
            weight: Array2::from_shape_vec((spec.out_dim, spec.in_dim), weight).map_err(|e| Error::Format(e.to_string()))?,
            bias: Array1::from(bias),
        });
        specs.push(spec);
    }
    let head_line = lines.expect("head")?;
    let head = if head_line == "none" {
        None
    } else {
        let e = parse_usize(&head_line, lines.line)?;
        let w = lines.reals("w", e)?;
        let b = lines.reals("b", 1)?[0];
        Some(LinearHead { w: Array1::from(w), b })
    };
    lines.expect("end")?;
    validate_specs(&specs)?;
    Ok((specs, NetworkParams { layers, head }))
}
