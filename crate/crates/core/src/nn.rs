//! Small feedforward networks: forward inference, input gradients and SGD.
//!
//! Layers compute with `f64` accumulators and store `f32` activations. The
//! backward pass keeps its running gradient in `f64` and only rounds the
//! final input or parameter gradient.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One layer of a [`NetworkSpec`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    Relu,
    Flatten,
}

impl LayerSpec {
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => {
                if input != [inputs] {
                    return Err(Error::InvalidNetwork(format!(
                        "dense layer expects input [{inputs}], got {input:?}"
                    )));
                }
                if outputs == 0 {
                    return Err(Error::InvalidNetwork("dense layer with zero outputs".into()));
                }
                Ok(vec![outputs])
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                let [c, h, w] = input else {
                    return Err(Error::InvalidNetwork(format!(
                        "conv2d expects a [channels, height, width] input, got {input:?}"
                    )));
                };
                if *c != in_channels {
                    return Err(Error::InvalidNetwork(format!(
                        "conv2d expects {in_channels} input channels, got {c}"
                    )));
                }
                if kernel == 0 || stride == 0 || out_channels == 0 {
                    return Err(Error::InvalidNetwork(
                        "conv2d kernel, stride and out_channels must be positive".into(),
                    ));
                }
                if *h < kernel || *w < kernel {
                    return Err(Error::InvalidNetwork(format!(
                        "conv2d kernel {kernel} larger than input {h}x{w}"
                    )));
                }
                Ok(vec![out_channels, (h - kernel) / stride + 1, (w - kernel) / stride + 1])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    /// (weight count, bias count, fan_in, fan_out)
    fn param_layout(&self) -> Option<(usize, usize, usize, usize)> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => Some((inputs * outputs, outputs, inputs, outputs)),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                let k2 = kernel * kernel;
                Some((
                    out_channels * in_channels * k2,
                    out_channels,
                    in_channels * k2,
                    out_channels * k2,
                ))
            }
            LayerSpec::Relu | LayerSpec::Flatten => None,
        }
    }
}

/// Architecture of a classifier with `num_classes` outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
}

impl NetworkSpec {
    /// Checks that layer shapes compose and end in `[num_classes]`.
    /// Returns the activation shape before each layer followed by the output shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.num_classes < 2 {
            return Err(Error::InvalidNetwork("need at least two classes".into()));
        }
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::InvalidNetwork(format!(
                "invalid input shape {:?}",
                self.input_shape
            )));
        }
        let mut shapes = vec![self.input_shape.clone()];
        for layer in &self.layers {
            let next = layer.output_shape(shapes.last().unwrap())?;
            shapes.push(next);
        }
        let last = shapes.last().unwrap();
        if last != &[self.num_classes] {
            return Err(Error::InvalidNetwork(format!(
                "network output shape {last:?} does not match {} classes",
                self.num_classes
            )));
        }
        Ok(shapes)
    }

    /// Convenience constructor for `Dense -> Relu -> Dense -> ...` stacks.
    pub fn mlp(inputs: usize, hidden: &[usize], num_classes: usize) -> Self {
        let mut layers = Vec::new();
        let mut width = inputs;
        for &h in hidden {
            layers.push(LayerSpec::Dense {
                inputs: width,
                outputs: h,
            });
            layers.push(LayerSpec::Relu);
            width = h;
        }
        layers.push(LayerSpec::Dense {
            inputs: width,
            outputs: num_classes,
        });
        Self {
            input_shape: vec![inputs],
            layers,
            num_classes,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(LayerSpec::param_layout)
            .map(|(w, b, _, _)| w + b)
            .sum()
    }
}

/// Weights and bias of one parameterised layer. Empty for relu/flatten.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayerParams {
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

/// A network with concrete weights. Immutable once trained; shareable across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    shapes: Vec<Vec<usize>>,
    params: Vec<LayerParams>,
}

impl Network {
    /// Glorot-uniform weights in `[-s, s]`, `s = sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = spec
            .layers
            .iter()
            .map(|layer| match layer.param_layout() {
                Some((nw, nb, fan_in, fan_out)) => {
                    let s = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
                    LayerParams {
                        weight: (0..nw).map(|_| rng.random_range(-s..=s)).collect(),
                        bias: vec![0.0; nb],
                    }
                }
                None => LayerParams::default(),
            })
            .collect();
        Ok(Self { spec, shapes, params })
    }

    pub fn from_params(spec: NetworkSpec, params: Vec<LayerParams>) -> Result<Self> {
        let shapes = spec.shapes()?;
        if params.len() != spec.layers.len() {
            return Err(Error::InvalidNetwork(format!(
                "{} parameter groups for {} layers",
                params.len(),
                spec.layers.len()
            )));
        }
        for (i, (layer, p)) in spec.layers.iter().zip(&params).enumerate() {
            let (nw, nb) = layer.param_layout().map_or((0, 0), |(w, b, _, _)| (w, b));
            if p.weight.len() != nw || p.bias.len() != nb {
                return Err(Error::InvalidNetwork(format!(
                    "layer {i}: expected {nw} weights and {nb} biases, got {} and {}",
                    p.weight.len(),
                    p.bias.len()
                )));
            }
            if p.weight.iter().chain(&p.bias).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("network parameters"));
            }
        }
        Ok(Self { spec, shapes, params })
    }

    /// Flat parameter vector in layer order, weights before bias.
    pub fn to_flat(&self) -> Vec<f32> {
        self.params
            .iter()
            .flat_map(|p| p.weight.iter().chain(&p.bias).copied())
            .collect()
    }

    pub fn from_flat(spec: NetworkSpec, flat: &[f32]) -> Result<Self> {
        let expected = spec.param_count();
        if flat.len() != expected {
            return Err(Error::InvalidNetwork(format!(
                "expected {expected} parameters, got {}",
                flat.len()
            )));
        }
        let mut offset = 0;
        let mut params = Vec::with_capacity(spec.layers.len());
        for layer in &spec.layers {
            let (nw, nb) = layer.param_layout().map_or((0, 0), |(w, b, _, _)| (w, b));
            params.push(LayerParams {
                weight: flat[offset..offset + nw].to_vec(),
                bias: flat[offset + nw..offset + nw + nb].to_vec(),
            });
            offset += nw + nb;
        }
        Self::from_params(spec, params)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[LayerParams] {
        &self.params
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.spec.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        input.check_shape(&self.spec.input_shape)?;
        let mut act = input.data().to_vec();
        for (i, layer) in self.spec.layers.iter().enumerate() {
            act = self.layer_forward(i, layer, &act);
        }
        finite_or(Tensor::from_parts_unchecked(vec![self.spec.num_classes], act), "logits")
    }

    pub fn probabilities(&self, input: &Tensor) -> Result<Tensor> {
        softmax(&self.forward(input)?)
    }

    pub fn predict_label(&self, input: &Tensor) -> Result<usize> {
        Ok(self.forward(input)?.argmax())
    }

    pub fn loss(&self, input: &Tensor, label: usize) -> Result<f64> {
        cross_entropy(&self.forward(input)?, label)
    }

    /// Gradient of the cross-entropy loss with respect to the input.
    pub fn input_gradient(&self, input: &Tensor, label: usize) -> Result<Tensor> {
        input.check_shape(&self.spec.input_shape)?;
        self.check_label(label)?;
        let acts = self.forward_cached(input.data());
        let dlogits = softmax_minus_onehot(acts.last().unwrap(), label);
        let dx = self.backward(&acts, dlogits, None);
        let grad = dx.into_iter().map(|v| v as f32).collect();
        finite_or(
            Tensor::from_parts_unchecked(self.spec.input_shape.clone(), grad),
            "input gradient",
        )
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.spec.num_classes {
            return Err(Error::LabelOutOfRange {
                label,
                classes: self.spec.num_classes,
            });
        }
        Ok(())
    }

    /// Activations before each layer plus the logits.
    fn forward_cached(&self, input: &[f32]) -> Vec<Vec<f32>> {
        let mut acts = Vec::with_capacity(self.spec.layers.len() + 1);
        acts.push(input.to_vec());
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let next = self.layer_forward(i, layer, acts.last().unwrap());
            acts.push(next);
        }
        acts
    }

    fn layer_forward(&self, index: usize, layer: &LayerSpec, x: &[f32]) -> Vec<f32> {
        let p = &self.params[index];
        match *layer {
            LayerSpec::Dense { inputs, outputs } => (0..outputs)
                .map(|o| {
                    let row = &p.weight[o * inputs..(o + 1) * inputs];
                    let dot: f64 = row.iter().zip(x).map(|(w, v)| f64::from(*w) * f64::from(*v)).sum();
                    (dot + f64::from(p.bias[o])) as f32
                })
                .collect(),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                let (h, w) = (self.shapes[index][1], self.shapes[index][2]);
                let (oh, ow) = (self.shapes[index + 1][1], self.shapes[index + 1][2]);
                let mut out = vec![0.0f32; out_channels * oh * ow];
                for o in 0..out_channels {
                    for y in 0..oh {
                        for xo in 0..ow {
                            let mut acc = f64::from(p.bias[o]);
                            for c in 0..in_channels {
                                for ky in 0..kernel {
                                    let row = (c * h + y * stride + ky) * w + xo * stride;
                                    let wrow = ((o * in_channels + c) * kernel + ky) * kernel;
                                    for kx in 0..kernel {
                                        acc += f64::from(p.weight[wrow + kx]) * f64::from(x[row + kx]);
                                    }
                                }
                            }
                            out[(o * oh + y) * ow + xo] = acc as f32;
                        }
                    }
                }
                out
            }
            LayerSpec::Relu => x.iter().map(|v| v.max(0.0)).collect(),
            LayerSpec::Flatten => x.to_vec(),
        }
    }

    /// Backpropagates `dout` (gradient w.r.t. logits) to the input. When
    /// `param_grads` is given, parameter gradients are accumulated into it.
    fn backward(&self, acts: &[Vec<f32>], mut dout: Vec<f64>, mut param_grads: Option<&mut [ParamGrad]>) -> Vec<f64> {
        for (i, layer) in self.spec.layers.iter().enumerate().rev() {
            let x = &acts[i];
            let p = &self.params[i];
            let grad = param_grads.as_deref_mut().map(|g| &mut g[i]);
            dout = match *layer {
                LayerSpec::Dense { inputs, outputs } => {
                    if let Some(g) = grad {
                        for (o, d) in dout.iter().enumerate().take(outputs) {
                            g.bias[o] += d;
                            let row = &mut g.weight[o * inputs..(o + 1) * inputs];
                            for (gw, v) in row.iter_mut().zip(x) {
                                *gw += d * f64::from(*v);
                            }
                        }
                    }
                    let mut dx = vec![0.0f64; inputs];
                    for (o, d) in dout.iter().enumerate() {
                        if *d == 0.0 {
                            continue;
                        }
                        let row = &p.weight[o * inputs..(o + 1) * inputs];
                        for (dxi, w) in dx.iter_mut().zip(row) {
                            *dxi += d * f64::from(*w);
                        }
                    }
                    dx
                }
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                } => {
                    let (h, w) = (self.shapes[i][1], self.shapes[i][2]);
                    let (oh, ow) = (self.shapes[i + 1][1], self.shapes[i + 1][2]);
                    let mut dx = vec![0.0f64; in_channels * h * w];
                    let mut grad = grad;
                    for o in 0..out_channels {
                        for y in 0..oh {
                            for xo in 0..ow {
                                let d = dout[(o * oh + y) * ow + xo];
                                if let Some(g) = grad.as_deref_mut() {
                                    g.bias[o] += d;
                                }
                                if d == 0.0 {
                                    continue;
                                }
                                for c in 0..in_channels {
                                    for ky in 0..kernel {
                                        let row = (c * h + y * stride + ky) * w + xo * stride;
                                        let wrow = ((o * in_channels + c) * kernel + ky) * kernel;
                                        for kx in 0..kernel {
                                            dx[row + kx] += d * f64::from(p.weight[wrow + kx]);
                                            if let Some(g) = grad.as_deref_mut() {
                                                g.weight[wrow + kx] += d * f64::from(x[row + kx]);
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                    dx
                }
                LayerSpec::Relu => dout
                    .iter()
                    .zip(x)
                    .map(|(d, v)| if *v > 0.0 { *d } else { 0.0 })
                    .collect(),
                LayerSpec::Flatten => dout,
            };
        }
        dout
    }
}

#[derive(Debug, Clone)]
struct ParamGrad {
    weight: Vec<f64>,
    bias: Vec<f64>,
}

fn finite_or(t: Tensor, what: &'static str) -> Result<Tensor> {
    if t.data().iter().all(|v| v.is_finite()) {
        Ok(t)
    } else {
        Err(Error::NonFinite(what))
    }
}

fn softmax_f64(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().fold(f32::NEG_INFINITY, |m, v| m.max(*v));
    let exps: Vec<f64> = logits.iter().map(|v| (f64::from(*v) - f64::from(max)).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn softmax_minus_onehot(logits: &[f32], label: usize) -> Vec<f64> {
    let mut g = softmax_f64(logits);
    g[label] -= 1.0;
    g
}

/// Max-subtracted softmax over a logit vector.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    if logits.len() < 2 {
        return Err(Error::ShapeMismatch {
            expected: vec![2],
            actual: logits.shape().to_vec(),
        });
    }
    if logits.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax input"));
    }
    let probs = softmax_f64(logits.data()).into_iter().map(|p| p as f32).collect();
    Ok(Tensor::from_parts_unchecked(logits.shape().to_vec(), probs))
}

/// `-ln softmax(logits)[label]`, evaluated with a log-sum-exp.
pub fn cross_entropy(logits: &Tensor, label: usize) -> Result<f64> {
    let z = logits.data();
    if label >= z.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: z.len(),
        });
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cross-entropy input"));
    }
    let max = z.iter().fold(f64::NEG_INFINITY, |m, v| m.max(f64::from(*v)));
    let lse = max + z.iter().map(|v| (f64::from(*v) - max).exp()).sum::<f64>().ln();
    Ok((lse - f64::from(z[label])).max(0.0))
}

/// Argmax of logits with ties broken toward the lowest class index.
pub fn predict_label(net: &Network, input: &Tensor) -> Result<usize> {
    net.predict_label(input)
}

/// Hyperparameters for [`train_sgd`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(
                "learning rate must be finite and non-negative".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss over each epoch's minibatch forward passes.
    pub epoch_losses: Vec<f64>,
}

/// Minibatch SGD on the cross-entropy loss. Shuffling is driven by `cfg.seed`.
pub fn train_sgd(net: &mut Network, samples: &[(Tensor, usize)], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for (x, y) in samples {
        x.check_shape(&net.spec.input_shape)?;
        net.check_label(*y)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut grads: Vec<ParamGrad> = net
        .params
        .iter()
        .map(|p| ParamGrad {
            weight: vec![0.0; p.weight.len()],
            bias: vec![0.0; p.bias.len()],
        })
        .collect();

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            for g in grads.iter_mut() {
                g.weight.iter_mut().for_each(|v| *v = 0.0);
                g.bias.iter_mut().for_each(|v| *v = 0.0);
            }
            for &i in batch {
                let (x, y) = &samples[i];
                let acts = net.forward_cached(x.data());
                let logits = acts.last().unwrap();
                total += cross_entropy(&Tensor::from_parts_unchecked(vec![logits.len()], logits.clone()), *y)?;
                let dlogits = softmax_minus_onehot(logits, *y);
                net.backward(&acts, dlogits, Some(&mut grads));
            }
            let step = cfg.learning_rate / batch.len() as f64;
            if step == 0.0 {
                continue;
            }
            for (p, g) in net.params.iter_mut().zip(&grads) {
                for (w, gw) in p.weight.iter_mut().zip(&g.weight) {
                    *w = (f64::from(*w) - step * gw) as f32;
                }
                for (b, gb) in p.bias.iter_mut().zip(&g.bias) {
                    *b = (f64::from(*b) - step * gb) as f32;
                }
            }
        }
        if net
            .params
            .iter()
            .flat_map(|p| p.weight.iter().chain(&p.bias))
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("weights after SGD update"));
        }
        epoch_losses.push(total / samples.len() as f64);
    }
    Ok(TrainReport { epoch_losses })
}

/// Fraction of samples whose predicted label matches.
pub fn accuracy(net: &Network, samples: &[(Tensor, usize)]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    for (x, y) in samples {
        if net.predict_label(x)? == *y {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}
