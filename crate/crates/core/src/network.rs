//! Feed-forward networks built from dense and 2-D convolution layers.
//!
//! Parameters are stored as a flat list `[w0, b0, w1, b1, ...]` so the
//! optimizer can treat them uniformly. Dense weights are `(fan_out, fan_in)`;
//! convolution weights are `(out_channels, in_channels, kernel, kernel)`.
//! Batches are row-major with the sample index leading; a dense layer
//! following a convolution sees each sample's `C×H×W` block flattened.
//!
//! Every post-activation scalar of a hidden layer is one neuron for pattern
//! purposes, so a convolution producing `C×H×W` contributes `C·H·W` bits.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::{ActivationRecord, PatternMatrix};
use crate::tensor::{he_init, l2_norm_sq, RngStream, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { alpha: f64 },
    /// Exact form `x·Φ(x)`.
    Gelu,
    /// `x·σ(x)`.
    Silu,
    None,
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu { alpha } => {
                if x > 0.0 {
                    x
                } else {
                    alpha * x
                }
            }
            Activation::Gelu => x * std_normal_cdf(x),
            Activation::Silu => x * sigmoid(x),
            Activation::None => x,
        }
    }

    /// Derivative with respect to the pre-activation. ReLU kinks take the
    /// left derivative.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { alpha } => {
                if x > 0.0 {
                    1.0
                } else {
                    alpha
                }
            }
            Activation::Gelu => std_normal_cdf(x) + x * std_normal_pdf(x),
            Activation::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            Activation::None => 1.0,
        }
    }

    /// Whether output > 0 exactly when input > 0, which is what the
    /// activation-pattern reading relies on.
    pub fn is_relu_like(self) -> bool {
        match self {
            Activation::LeakyRelu { alpha } => alpha >= 0.0 && alpha < 1.0,
            Activation::None => false,
            _ => true,
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    /// Accepts `relu`, `gelu`, `silu`, `none`, `leaky_relu` (α = 0.01) and
    /// `leaky_relu:<alpha>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "gelu" => Ok(Activation::Gelu),
            "silu" => Ok(Activation::Silu),
            "none" => Ok(Activation::None),
            "leaky_relu" => Ok(Activation::LeakyRelu { alpha: 0.01 }),
            _ => s
                .strip_prefix("leaky_relu:")
                .and_then(|a| a.parse().ok())
                .map(|alpha| Activation::LeakyRelu { alpha })
                .ok_or_else(|| Error::UnknownActivation(s.to_string())),
        }
    }
}

/// Elementwise activation.
pub fn activation_forward(pre: &Tensor, kind: Activation) -> Tensor {
    pre.map(|x| kind.apply(x))
}

/// Binary pattern of one hidden layer: rows are samples, columns are the
/// post-activation scalars of each sample, active iff strictly positive.
pub fn extract_pattern(post: &Tensor) -> PatternMatrix {
    let rows = post.shape().first().copied().unwrap_or(0);
    let cols = if rows == 0 { 0 } else { post.len() / rows };
    PatternMatrix::from_values(rows, cols, post.data())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    #[default]
    Valid,
    Same,
}

fn default_kernel() -> usize {
    3
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense {
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        #[serde(default = "default_kernel")]
        kernel: usize,
        #[serde(default = "default_stride")]
        stride: usize,
        #[serde(default)]
        padding: Padding,
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn dense(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        LayerSpec::Dense {
            fan_in,
            fan_out,
            activation,
        }
    }

    pub fn conv3x3(
        in_channels: usize,
        out_channels: usize,
        padding: Padding,
        activation: Activation,
    ) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel: 3,
            stride: 1,
            padding,
            activation,
        }
    }

    pub fn activation(&self) -> Activation {
        match *self {
            LayerSpec::Dense { activation, .. } | LayerSpec::Conv2d { activation, .. } => {
                activation
            }
        }
    }

    fn weight_shape(&self) -> Vec<usize> {
        match *self {
            LayerSpec::Dense {
                fan_in, fan_out, ..
            } => vec![fan_out, fan_in],
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![out_channels, in_channels, kernel, kernel],
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Dense { fan_in, .. } => fan_in,
            LayerSpec::Conv2d {
                in_channels,
                kernel,
                ..
            } => in_channels * kernel * kernel,
        }
    }

    fn bias_len(&self) -> usize {
        match *self {
            LayerSpec::Dense { fan_out, .. } => fan_out,
            LayerSpec::Conv2d { out_channels, .. } => out_channels,
        }
    }
}

/// Input shape (per sample, without batch axis) plus the ordered layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Plain MLP `input → hidden... → classes` with one activation for all
    /// hidden layers.
    pub fn mlp(input: usize, hidden: &[usize], classes: usize, activation: Activation) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input;
        for &h in hidden {
            layers.push(LayerSpec::dense(prev, h, activation));
            prev = h;
        }
        layers.push(LayerSpec::dense(prev, classes, Activation::None));
        Self {
            input_shape: vec![input],
            layers,
        }
    }

    /// Per-layer output shapes (without batch axis), or every composition
    /// problem found.
    pub fn output_shapes(&self) -> std::result::Result<Vec<Vec<usize>>, Vec<String>> {
        let mut problems = Vec::new();
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            problems.push(format!(
                "input_shape must be non-empty and positive, got {:?}",
                self.input_shape
            ));
            return Err(problems);
        }
        if self.layers.len() < 2 {
            problems.push("network needs at least one hidden layer plus an output layer".into());
        }
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input_shape.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let last = l + 1 == self.layers.len();
            let act = layer.activation();
            if last && act != Activation::None {
                problems.push(format!("layers[{l}]: output layer must have activation none"));
            }
            if !last && !act.is_relu_like() {
                problems.push(format!(
                    "layers[{l}]: hidden layers need a ReLU-like activation, got {act:?}"
                ));
            }
            match *layer {
                LayerSpec::Dense {
                    fan_in, fan_out, ..
                } => {
                    let flat: usize = cur.iter().product();
                    if fan_in != flat {
                        problems.push(format!(
                            "layers[{l}]: fan_in {fan_in} does not match incoming size {flat}"
                        ));
                    }
                    if fan_out == 0 {
                        problems.push(format!("layers[{l}]: fan_out must be positive"));
                    }
                    cur = vec![fan_out];
                }
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    ..
                } => {
                    if cur.len() != 3 {
                        problems.push(format!(
                            "layers[{l}]: conv2d needs a C×H×W input, got {cur:?}"
                        ));
                        return Err(problems);
                    }
                    if in_channels != cur[0] {
                        problems.push(format!(
                            "layers[{l}]: in_channels {in_channels} does not match {}",
                            cur[0]
                        ));
                    }
                    if kernel == 0 || stride == 0 || out_channels == 0 {
                        problems.push(format!(
                            "layers[{l}]: kernel, stride and out_channels must be positive"
                        ));
                        return Err(problems);
                    }
                    if padding == Padding::Same && kernel % 2 == 0 {
                        problems.push(format!("layers[{l}]: same padding needs an odd kernel"));
                    }
                    let pad = conv_pad(padding, kernel);
                    let (h, w) = (cur[1] + 2 * pad, cur[2] + 2 * pad);
                    if h < kernel || w < kernel {
                        problems.push(format!(
                            "layers[{l}]: kernel {kernel} larger than padded input {h}×{w}"
                        ));
                        return Err(problems);
                    }
                    cur = vec![
                        out_channels,
                        (h - kernel) / stride + 1,
                        (w - kernel) / stride + 1,
                    ];
                }
            }
            shapes.push(cur.clone());
        }
        if problems.is_empty() {
            Ok(shapes)
        } else {
            Err(problems)
        }
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map_or(0, LayerSpec::bias_len)
    }

    pub fn num_hidden(&self) -> usize {
        self.layers.len().saturating_sub(1)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight_shape().iter().product::<usize>() + l.bias_len())
            .sum()
    }
}

fn conv_pad(padding: Padding, kernel: usize) -> usize {
    match padding {
        Padding::Valid => 0,
        Padding::Same => (kernel - 1) / 2,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    out_shapes: Vec<Vec<usize>>,
    params: Vec<Tensor>,
}

impl Network {
    /// He-normal weights, zero biases.
    pub fn init(spec: NetworkSpec, rng: &mut RngStream) -> Result<Self> {
        let out_shapes = spec
            .output_shapes()
            .map_err(Error::InvalidConfig)?;
        let mut params = Vec::with_capacity(2 * spec.layers.len());
        for layer in &spec.layers {
            params.push(he_init(&layer.weight_shape(), layer.fan_in(), rng)?);
            params.push(Tensor::zeros(&[layer.bias_len()]));
        }
        Ok(Self {
            spec,
            out_shapes,
            params,
        })
    }

    /// Network with caller-supplied parameters `[w0, b0, w1, b1, ...]`.
    pub fn from_params(spec: NetworkSpec, params: Vec<Tensor>) -> Result<Self> {
        let out_shapes = spec
            .output_shapes()
            .map_err(Error::InvalidConfig)?;
        if params.len() != 2 * spec.layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameter tensors, got {}",
                2 * spec.layers.len(),
                params.len()
            )));
        }
        for (l, layer) in spec.layers.iter().enumerate() {
            if params[2 * l].shape() != layer.weight_shape().as_slice()
                || params[2 * l + 1].shape() != [layer.bias_len()]
            {
                return Err(Error::ShapeMismatch(format!("parameters of layer {l}")));
            }
        }
        Ok(Self {
            spec,
            out_shapes,
            params,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn weight(&self, layer: usize) -> &Tensor {
        &self.params[2 * layer]
    }

    pub fn bias(&self, layer: usize) -> &Tensor {
        &self.params[2 * layer + 1]
    }

    /// True for weight tensors, false for biases, in `params()` order.
    pub fn is_weight(index: usize) -> bool {
        index % 2 == 0
    }

    /// ‖ω‖² over weights only.
    pub fn weight_norm_sq(&self) -> f64 {
        l2_norm_sq(self.params.iter().step_by(2))
    }

    /// Pattern length of each hidden layer.
    pub fn pattern_lengths(&self) -> Vec<usize> {
        self.out_shapes[..self.out_shapes.len() - 1]
            .iter()
            .map(|s| s.iter().product())
            .collect()
    }
}

/// Output of [`forward`]. Keeps the per-layer inputs and pre-activations for
/// backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardResult {
    pub logits: Tensor,
    pub record: ActivationRecord,
    /// `inputs[l]` is the input of layer `l`; `inputs[l + 1]` its output.
    inputs: Vec<Tensor>,
    pre: Vec<Tensor>,
}

impl ForwardResult {
    /// Patterns of every hidden layer, from the cached outputs.
    pub fn capture_record(&self) -> ActivationRecord {
        let hidden = self.pre.len() - 1;
        ActivationRecord::new(
            self.inputs[1..=hidden]
                .iter()
                .map(extract_pattern)
                .collect(),
        )
    }

    pub fn batch_size(&self) -> usize {
        self.logits.shape()[0]
    }
}

fn check_batch(net: &Network, batch: &Tensor) -> Result<usize> {
    let shape = batch.shape();
    if shape.len() != net.spec.input_shape.len() + 1 || shape[1..] != net.spec.input_shape[..] {
        return Err(Error::ShapeMismatch(format!(
            "batch shape {:?} does not match network input {:?}",
            shape, net.spec.input_shape
        )));
    }
    Ok(shape[0])
}

/// Runs the network on a batch. With `capture` the record holds one pattern
/// row per sample for each hidden layer; otherwise it is empty.
pub fn forward(net: &Network, batch: &Tensor, capture: bool) -> Result<ForwardResult> {
    let m = check_batch(net, batch)?;
    let nl = net.spec.layers.len();
    let mut inputs = Vec::with_capacity(nl + 1);
    let mut pre = Vec::with_capacity(nl);
    inputs.push(batch.clone());
    let mut in_shape = net.spec.input_shape.clone();
    for (l, layer) in net.spec.layers.iter().enumerate() {
        let x = &inputs[l];
        let w = net.weight(l);
        let b = net.bias(l);
        let out_shape = &net.out_shapes[l];
        let z = match *layer {
            LayerSpec::Dense {
                fan_in, fan_out, ..
            } => dense_forward(x.data(), w.data(), b.data(), m, fan_in, fan_out),
            LayerSpec::Conv2d {
                kernel,
                stride,
                padding,
                ..
            } => {
                let geom = ConvGeom::new(&in_shape, out_shape, kernel, stride, padding);
                conv_forward(x.data(), w.data(), b.data(), m, &geom)
            }
        };
        let mut full_shape = vec![m];
        full_shape.extend_from_slice(out_shape);
        let z = Tensor::new(full_shape, z)?;
        let a = activation_forward(&z, layer.activation());
        pre.push(z);
        inputs.push(a);
        in_shape = out_shape.clone();
    }
    let logits_full = inputs.pop().expect("at least one layer");
    let classes = net.spec.num_classes();
    let logits = logits_full.reshape(vec![m, classes])?;
    let mut result = ForwardResult {
        logits,
        record: ActivationRecord::default(),
        inputs,
        pre,
    };
    if capture {
        result.record = result.capture_record();
    }
    Ok(result)
}

fn dense_forward(x: &[f64], w: &[f64], b: &[f64], m: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let mut z = vec![0.0; m * fan_out];
    for i in 0..m {
        let xi = &x[i * fan_in..(i + 1) * fan_in];
        for o in 0..fan_out {
            let wo = &w[o * fan_in..(o + 1) * fan_in];
            let dot: f64 = xi.iter().zip(wo).map(|(a, b)| a * b).sum();
            z[i * fan_out + o] = dot + b[o];
        }
    }
    z
}

struct ConvGeom {
    c_in: usize,
    h_in: usize,
    w_in: usize,
    c_out: usize,
    h_out: usize,
    w_out: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
}

impl ConvGeom {
    fn new(input: &[usize], output: &[usize], kernel: usize, stride: usize, padding: Padding) -> Self {
        Self {
            c_in: input[0],
            h_in: input[1],
            w_in: input[2],
            c_out: output[0],
            h_out: output[1],
            w_out: output[2],
            kernel,
            stride,
            pad: conv_pad(padding, kernel),
        }
    }

    fn in_len(&self) -> usize {
        self.c_in * self.h_in * self.w_in
    }

    fn out_len(&self) -> usize {
        self.c_out * self.h_out * self.w_out
    }

    /// Input coordinate for output position `o` and kernel tap `k`, if it
    /// falls inside the unpadded input.
    #[inline]
    fn src(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < limit).then_some(pos as usize)
    }
}

fn conv_forward(x: &[f64], w: &[f64], b: &[f64], m: usize, g: &ConvGeom) -> Vec<f64> {
    let k = g.kernel;
    let mut z = vec![0.0; m * g.out_len()];
    for n in 0..m {
        let xn = &x[n * g.in_len()..(n + 1) * g.in_len()];
        let zn = &mut z[n * g.out_len()..(n + 1) * g.out_len()];
        for co in 0..g.c_out {
            for oy in 0..g.h_out {
                for ox in 0..g.w_out {
                    let mut acc = b[co];
                    for ci in 0..g.c_in {
                        for ky in 0..k {
                            let Some(iy) = g.src(oy, ky, g.h_in) else { continue };
                            for kx in 0..k {
                                let Some(ix) = g.src(ox, kx, g.w_in) else { continue };
                                acc += w[((co * g.c_in + ci) * k + ky) * k + kx]
                                    * xn[(ci * g.h_in + iy) * g.w_in + ix];
                            }
                        }
                    }
                    zn[(co * g.h_out + oy) * g.w_out + ox] = acc;
                }
            }
        }
    }
    z
}

/// Loss and exact gradients of `mean CE + λ·‖ω‖²` (weights only).
#[derive(Debug, Clone)]
pub struct Gradients {
    /// Penalized loss.
    pub loss: f64,
    /// Mean cross-entropy alone.
    pub data_loss: f64,
    /// One tensor per entry of `Network::params()`.
    pub grads: Vec<Tensor>,
}

fn check_labels(labels: &[usize], m: usize, classes: usize) -> Result<()> {
    if labels.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for a batch of {m}",
            labels.len()
        )));
    }
    if let Some(&label) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: classes,
        });
    }
    Ok(())
}

/// Mean softmax cross-entropy of `logits` against `labels`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let (m, c) = (logits.shape()[0], logits.shape()[1]);
    check_labels(labels, m, c)?;
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = &logits.data()[i * c..(i + 1) * c];
        total += log_sum_exp(row) - row[y];
    }
    Ok(total / m as f64)
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Backpropagates through a cached forward pass.
pub fn backward(net: &Network, fwd: &ForwardResult, labels: &[usize], lambda: f64) -> Result<Gradients> {
    let m = fwd.batch_size();
    let classes = net.spec.num_classes();
    check_labels(labels, m, classes)?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParams(format!("weight decay must be >= 0, got {lambda}")));
    }

    let mut data_loss = 0.0;
    let mut delta = vec![0.0; m * classes];
    let inv_m = 1.0 / m as f64;
    for (i, &y) in labels.iter().enumerate() {
        let row = &fwd.logits.data()[i * classes..(i + 1) * classes];
        let lse = log_sum_exp(row);
        data_loss += lse - row[y];
        for c in 0..classes {
            let p = (row[c] - lse).exp();
            delta[i * classes + c] = (p - if c == y { 1.0 } else { 0.0 }) * inv_m;
        }
    }
    data_loss *= inv_m;

    let nl = net.spec.layers.len();
    let mut grads: Vec<Tensor> = net.params.iter().map(|p| Tensor::zeros(p.shape())).collect();
    for l in (0..nl).rev() {
        let layer = &net.spec.layers[l];
        let act = layer.activation();
        // delta arrives as dL/d(output); turn it into dL/d(pre-activation)
        if act != Activation::None {
            for (d, &z) in delta.iter_mut().zip(fwd.pre[l].data()) {
                *d *= act.derivative(z);
            }
        }
        let x = fwd.inputs[l].data();
        let w = net.weight(l).data();
        let need_input_grad = l > 0;
        let (gw, rest) = grads[2 * l..].split_at_mut(1);
        let gw = gw[0].data_mut();
        let gb = rest[0].data_mut();
        delta = match *layer {
            LayerSpec::Dense {
                fan_in, fan_out, ..
            } => {
                let mut dx = if need_input_grad { vec![0.0; m * fan_in] } else { Vec::new() };
                for i in 0..m {
                    let xi = &x[i * fan_in..(i + 1) * fan_in];
                    for o in 0..fan_out {
                        let d = delta[i * fan_out + o];
                        if d == 0.0 {
                            continue;
                        }
                        gb[o] += d;
                        let gwo = &mut gw[o * fan_in..(o + 1) * fan_in];
                        for (g, &xv) in gwo.iter_mut().zip(xi) {
                            *g += d * xv;
                        }
                        if need_input_grad {
                            let wo = &w[o * fan_in..(o + 1) * fan_in];
                            let dxi = &mut dx[i * fan_in..(i + 1) * fan_in];
                            for (g, &wv) in dxi.iter_mut().zip(wo) {
                                *g += d * wv;
                            }
                        }
                    }
                }
                dx
            }
            LayerSpec::Conv2d {
                kernel,
                stride,
                padding,
                ..
            } => {
                let in_shape = if l == 0 {
                    net.spec.input_shape.clone()
                } else {
                    net.out_shapes[l - 1].clone()
                };
                let g = ConvGeom::new(&in_shape, &net.out_shapes[l], kernel, stride, padding);
                conv_backward(x, w, &delta, m, &g, gw, gb, need_input_grad)
            }
        };
    }

    let mut penalty = 0.0;
    if lambda > 0.0 {
        for l in 0..nl {
            let w = net.weight(l).data();
            penalty += w.iter().map(|v| v * v).sum::<f64>();
            for (g, &wv) in grads[2 * l].data_mut().iter_mut().zip(w) {
                *g += 2.0 * lambda * wv;
            }
        }
    }
    Ok(Gradients {
        loss: data_loss + lambda * penalty,
        data_loss,
        grads,
    })
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    w: &[f64],
    delta: &[f64],
    m: usize,
    g: &ConvGeom,
    gw: &mut [f64],
    gb: &mut [f64],
    need_input_grad: bool,
) -> Vec<f64> {
    let k = g.kernel;
    let mut dx = if need_input_grad { vec![0.0; m * g.in_len()] } else { Vec::new() };
    for n in 0..m {
        let xn = &x[n * g.in_len()..(n + 1) * g.in_len()];
        let dn = &delta[n * g.out_len()..(n + 1) * g.out_len()];
        for co in 0..g.c_out {
            for oy in 0..g.h_out {
                for ox in 0..g.w_out {
                    let d = dn[(co * g.h_out + oy) * g.w_out + ox];
                    if d == 0.0 {
                        continue;
                    }
                    gb[co] += d;
                    for ci in 0..g.c_in {
                        for ky in 0..k {
                            let Some(iy) = g.src(oy, ky, g.h_in) else { continue };
                            for kx in 0..k {
                                let Some(ix) = g.src(ox, kx, g.w_in) else { continue };
                                let wi = ((co * g.c_in + ci) * k + ky) * k + kx;
                                let xi = (ci * g.h_in + iy) * g.w_in + ix;
                                gw[wi] += d * xn[xi];
                                if need_input_grad {
                                    dx[n * g.in_len() + xi] += d * w[wi];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// `(loss, grads)` of `mean CE + λ‖ω‖²` on one batch.
pub fn loss_and_grad(
    net: &Network,
    batch: &Tensor,
    labels: &[usize],
    lambda: f64,
) -> Result<(f64, Vec<Tensor>)> {
    let fwd = forward(net, batch, false)?;
    let g = backward(net, &fwd, labels, lambda)?;
    Ok((g.loss, g.grads))
}

/// Penalized loss without gradients.
pub fn loss(net: &Network, batch: &Tensor, labels: &[usize], lambda: f64) -> Result<f64> {
    let fwd = forward(net, batch, false)?;
    Ok(cross_entropy(&fwd.logits, labels)? + lambda * net.weight_norm_sq())
}

/// Fraction of rows whose argmax equals the label; ties go to the lowest index.
pub fn accuracy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    if logits.shape().len() != 2 || logits.shape()[0] != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "logits {:?} vs {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let c = logits.shape()[1];
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| argmax(&logits.data()[i * c..(i + 1) * c]) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_values() {
        let x = Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(activation_forward(&x, Activation::Relu).data(), &[0.0, 0.0, 2.0]);
        // -0.2 * Φ(-0.2), Φ(-0.2) = 0.420740290560897
        let g = Activation::Gelu.apply(-0.2);
        assert!((g - (-0.0841480581121794)).abs() < 1e-12, "{g}");
        assert_eq!(Activation::Silu.apply(0.0), 0.0);
        assert_eq!(Activation::LeakyRelu { alpha: 0.1 }.apply(-2.0), -0.2);
    }

    #[test]
    fn activation_parsing() {
        assert_eq!("gelu".parse::<Activation>().unwrap(), Activation::Gelu);
        assert_eq!(
            "leaky_relu:0.2".parse::<Activation>().unwrap(),
            Activation::LeakyRelu { alpha: 0.2 }
        );
        assert!(matches!(
            "tanh".parse::<Activation>(),
            Err(Error::UnknownActivation(_))
        ));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for act in [
            Activation::Gelu,
            Activation::Silu,
            Activation::Relu,
            Activation::LeakyRelu { alpha: 0.05 },
        ] {
            for &x in &[-2.3, -0.4, 0.3, 1.7] {
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                assert!((fd - act.derivative(x)).abs() < 1e-7, "{act:?} at {x}");
            }
        }
    }

    #[test]
    fn extract_pattern_cases() {
        let relu = Tensor::new(vec![1, 3], vec![0.3, 0.0, 2.0]).unwrap();
        assert_eq!(extract_pattern(&relu).row(0), vec![1, 0, 1]);
        let gelu = activation_forward(
            &Tensor::new(vec![1, 2], vec![-0.2, 0.2]).unwrap(),
            Activation::Gelu,
        );
        assert_eq!(extract_pattern(&gelu).row(0), vec![0, 1]);
        let dead = activation_forward(
            &Tensor::new(vec![2, 3], vec![-1.0, -2.0, -0.5, -3.0, -0.1, -9.0]).unwrap(),
            Activation::Silu,
        );
        let p = extract_pattern(&dead);
        assert_eq!((p.rows(), p.cols()), (2, 3));
        assert_eq!(p.active_fraction(), 0.0);
    }

    #[test]
    fn conv_pattern_length_counts_every_scalar() {
        let spec = NetworkSpec {
            input_shape: vec![1, 7, 7],
            layers: vec![
                LayerSpec::conv3x3(1, 4, Padding::Valid, Activation::Relu),
                LayerSpec::dense(100, 3, Activation::None),
            ],
        };
        let net = Network::init(spec, &mut RngStream::new(1)).unwrap();
        assert_eq!(net.pattern_lengths(), vec![100]);
        let batch = Tensor::full(&[2, 1, 7, 7], 0.5);
        let fwd = forward(&net, &batch, true).unwrap();
        assert_eq!(fwd.record.layers[0].cols(), 100);
        assert_eq!(fwd.record.layers[0].rows(), 2);
    }

    #[test]
    fn same_padding_keeps_spatial_dims() {
        let spec = NetworkSpec {
            input_shape: vec![2, 5, 6],
            layers: vec![
                LayerSpec::conv3x3(2, 3, Padding::Same, Activation::Relu),
                LayerSpec::dense(90, 2, Activation::None),
            ],
        };
        assert_eq!(spec.output_shapes().unwrap()[0], vec![3, 5, 6]);
    }

    #[test]
    fn capture_is_observation_only() {
        let spec = NetworkSpec::mlp(3, &[5, 4], 2, Activation::Relu);
        let net = Network::init(spec, &mut RngStream::new(9)).unwrap();
        let batch = Tensor::new(vec![2, 3], vec![0.1, -0.4, 1.2, 0.7, 0.2, -0.9]).unwrap();
        let a = forward(&net, &batch, true).unwrap();
        let b = forward(&net, &batch, false).unwrap();
        assert_eq!(a.logits.data(), b.logits.data());
        assert!(b.record.is_empty());
        assert_eq!(a.record.num_layers(), 2);
    }

    #[test]
    fn spec_validation_reports_problems() {
        let mut spec = NetworkSpec::mlp(3, &[4], 2, Activation::Relu);
        spec.layers[1] = LayerSpec::dense(5, 2, Activation::Relu);
        let problems = spec.output_shapes().unwrap_err();
        assert_eq!(problems.len(), 2, "{problems:?}");
        let single = NetworkSpec {
            input_shape: vec![3],
            layers: vec![LayerSpec::dense(3, 2, Activation::None)],
        };
        assert!(single.output_shapes().is_err());
    }

    #[test]
    fn uniform_logits_give_ln_classes() {
        let logits = Tensor::zeros(&[3, 4]);
        let ce = cross_entropy(&logits, &[0, 1, 3]).unwrap();
        assert!((ce - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range() {
        let logits = Tensor::zeros(&[1, 2]);
        assert!(matches!(
            cross_entropy(&logits, &[2]),
            Err(Error::LabelOutOfRange { label: 2, num_classes: 2 })
        ));
    }

    #[test]
    fn penalty_gradient_is_two_lambda_w() {
        // zero input makes the data gradient of the first weight vanish
        let spec = NetworkSpec::mlp(1, &[1], 2, Activation::Relu);
        let params = vec![
            Tensor::new(vec![1, 1], vec![1.0]).unwrap(),
            Tensor::zeros(&[1]),
            Tensor::new(vec![2, 1], vec![0.0, 0.0]).unwrap(),
            Tensor::zeros(&[2]),
        ];
        let net = Network::from_params(spec, params).unwrap();
        let batch = Tensor::zeros(&[1, 1]);
        let (loss, grads) = loss_and_grad(&net, &batch, &[0], 0.01).unwrap();
        assert!((grads[0].data()[0] - 0.02).abs() < 1e-15);
        assert!((loss - (2f64.ln() + 0.01)).abs() < 1e-12);
        // biases carry no penalty term
        assert_eq!(grads[1].data()[0], 0.0);
    }

    #[test]
    fn accuracy_cases() {
        let logits = Tensor::from_rows(&[
            vec![2.0, 0.0],
            vec![0.0, 3.0],
        ])
        .unwrap();
        assert_eq!(accuracy(&logits, &[0, 1]).unwrap(), 1.0);
        let tied = Tensor::zeros(&[3, 4]);
        assert_eq!(accuracy(&tied, &[0, 0, 0]).unwrap(), 1.0);
        let four = Tensor::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 0.0],
        ])
        .unwrap();
        assert_eq!(accuracy(&four, &[0, 1, 1, 1]).unwrap(), 0.25);
        assert!(accuracy(&four, &[0, 1]).is_err());
    }
}
