use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::config::{Activation, LayerSpec, NetworkConfig};
use crate::nn::fftconv::{self, FftConv, Spectra};
use crate::nn::layers::{self, sigmoid, ConvGeometry, PoolGeometry};
use crate::nn::tensor::{Shape, Tensor};
use crate::seed;

/// Weights and biases of one layer. Pooling and flatten layers hold none.
///
/// Convolution weights are laid out `[filter][channel][row][col]`, dense
/// weights `[unit][input]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Learned parameters, one entry per configured layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub layers: Vec<LayerParams>,
}

/// Per-parameter gradients, shaped like [`NetworkState`].
pub type Gradients = NetworkState;

impl NetworkState {
    /// All-zero parameters shaped for `config`.
    pub fn zeros(config: &NetworkConfig) -> Result<Self> {
        let shapes = config.shapes()?;
        let layers = config
            .layers
            .iter()
            .zip(&shapes)
            .map(|(spec, (input, output))| match spec {
                LayerSpec::Conv { kernel, .. } => LayerParams {
                    weights: vec![0.0; output.channels * input.channels * kernel.0 * kernel.1],
                    bias: vec![0.0; output.channels],
                },
                LayerSpec::Dense { units, .. } => LayerParams {
                    weights: vec![0.0; units * input.len()],
                    bias: vec![0.0; *units],
                },
                LayerSpec::MaxPool { .. } | LayerSpec::Flatten => LayerParams::default(),
            })
            .collect();
        Ok(NetworkState { layers })
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(config: &NetworkConfig, seed_value: u64) -> Result<Self> {
        let mut state = Self::zeros(config)?;
        let shapes = config.shapes()?;
        for (i, ((spec, (input, output)), params)) in config.layers.iter().zip(&shapes).zip(&mut state.layers).enumerate() {
            let (fan_in, fan_out) = match spec {
                LayerSpec::Conv { kernel, .. } => {
                    let area = kernel.0 * kernel.1;
                    (input.channels * area, output.channels * area)
                }
                LayerSpec::Dense { units, .. } => (input.len(), *units),
                _ => continue,
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut rng = seed::rng_indexed(seed_value, "nn-init", i as u64);
            for w in &mut params.weights {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(state)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(LayerParams::len).sum()
    }

    pub(crate) fn add_scaled(&mut self, other: &NetworkState, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += scale * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += scale * y;
            }
        }
    }

    /// Iterates every parameter in layer order, weights before biases.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }
}

/// How gradients pass through ReLU units on the way back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackpropRule {
    /// Exact derivative: pass where the pre-activation is positive.
    Standard,
    /// Guided backpropagation: additionally drop negative incoming gradients.
    Guided,
}

/// What a ReLU saw during one backward pass.
#[derive(Debug, Clone)]
pub struct ReluRecord {
    pub layer: usize,
    pub pre_activation: Vec<f64>,
    /// Gradient with respect to the pre-activation, after gating.
    pub propagated: Vec<f64>,
}

/// Intermediate values of one forward pass over a batch. Per-sample entries
/// are indexed `[layer][sample]`.
pub(crate) struct ForwardCache {
    /// Input to each layer.
    inputs: Vec<Vec<Vec<f64>>>,
    /// Pre-activation output of conv/dense layers, empty otherwise.
    pre: Vec<Vec<Vec<f64>>>,
    /// Unfolded input of im2col conv layers.
    cols: Vec<Vec<Vec<f64>>>,
    /// Batch input spectra of spectral conv layers.
    spectra: Vec<Spectra>,
    argmax: Vec<Vec<Vec<usize>>>,
    /// Output-layer pre-activations.
    pub logits: Vec<Vec<f64>>,
}

/// Per-layer execution plan, valid for one parameter setting.
pub(crate) struct Prepared {
    plans: Vec<Plan>,
    spectral: Vec<Option<FftConv>>,
}

/// Gradient accumulator over a batch.
pub(crate) struct GradAccum {
    grads: Gradients,
    /// Weight-gradient spectra of spectral conv layers.
    spectra: Vec<Spectra>,
}

impl GradAccum {
    pub fn new(config: &NetworkConfig, prep: &Prepared) -> Result<Self> {
        Ok(GradAccum {
            grads: NetworkState::zeros(config)?,
            spectra: prep
                .spectral
                .iter()
                .map(|s| s.as_ref().map_or_else(Spectra::default, FftConv::weight_accumulator))
                .collect(),
        })
    }

    pub fn finish(mut self, prep: &Prepared) -> Gradients {
        for ((conv, acc), layer) in prep.spectral.iter().zip(&self.spectra).zip(&mut self.grads.layers) {
            if let Some(conv) = conv {
                conv.finish_weight_grads(acc, &mut layer.weights);
            }
        }
        self.grads
    }
}

#[derive(Debug, Clone, Copy)]
enum Plan {
    Conv(ConvGeometry, Activation),
    Pool(PoolGeometry),
    Flatten,
    Dense(Shape, Activation),
}

/// A configured network with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    pub state: NetworkState,
}

impl Network {
    pub fn new(config: NetworkConfig, state: NetworkState) -> Result<Self> {
        config.validate()?;
        let expected = NetworkState::zeros(&config)?;
        let fits = expected.layers.len() == state.layers.len()
            && expected
                .layers
                .iter()
                .zip(&state.layers)
                .all(|(e, s)| e.weights.len() == s.weights.len() && e.bias.len() == s.bias.len());
        if !fits {
            return Err(Error::Shape("parameters do not match the configured layers".into()));
        }
        Ok(Network { config, state })
    }

    /// Freshly initialized network.
    pub fn initialized(config: NetworkConfig, seed_value: u64) -> Result<Self> {
        config.validate()?;
        let state = NetworkState::init(&config, seed_value)?;
        Ok(Network { config, state })
    }

    pub fn parameter_count(&self) -> usize {
        self.state.parameter_count()
    }

    /// Plans every layer and transforms the kernels of spectral conv layers.
    pub(crate) fn prepare(&self) -> Prepared {
        let plans = self.plans();
        let spectral = plans
            .iter()
            .zip(&self.state.layers)
            .map(|(plan, params)| match plan {
                Plan::Conv(g, _) if fftconv::applies(g) => Some(FftConv::new(*g, &params.weights)),
                _ => None,
            })
            .collect();
        Prepared { plans, spectral }
    }

    fn plans(&self) -> Vec<Plan> {
        let shapes = self.config.shapes().expect("validated at construction");
        self.config
            .layers
            .iter()
            .zip(shapes)
            .map(|(spec, (input, output))| match *spec {
                LayerSpec::Conv {
                    kernel,
                    stride,
                    padding,
                    activation,
                    ..
                } => Plan::Conv(
                    ConvGeometry {
                        input,
                        output,
                        kernel,
                        stride,
                        padding,
                    },
                    activation,
                ),
                LayerSpec::MaxPool { size, stride } => Plan::Pool(PoolGeometry {
                    input,
                    output,
                    size,
                    stride,
                }),
                LayerSpec::Flatten => Plan::Flatten,
                LayerSpec::Dense { activation, .. } => Plan::Dense(input, activation),
            })
            .collect()
    }

    fn check_input(&self, image: &Tensor) -> Result<()> {
        let want = self.config.input_shape();
        if image.shape != want || image.data.len() != want.len() {
            return Err(Error::Shape(format!("input {} does not match expected {want}", image.shape)));
        }
        Ok(())
    }

    /// Per-class sigmoid scores in `[0, 1]`.
    pub fn forward(&self, image: &Tensor) -> Result<Vec<f64>> {
        Ok(self.forward_batch(&self.prepare(), &[image])?.remove(0))
    }

    /// Scores of every image in a batch.
    pub(crate) fn forward_batch(&self, prep: &Prepared, images: &[&Tensor]) -> Result<Vec<Vec<f64>>> {
        let cache = self.forward_cached(prep, images)?;
        Ok(cache
            .logits
            .iter()
            .map(|l| l.iter().map(|&z| sigmoid(z)).collect())
            .collect())
    }

    /// Predicted label class: argmax of the scores, or a 0.5 threshold for a
    /// single output (class 1 = positive).
    pub fn predict(&self, image: &Tensor) -> Result<usize> {
        Ok(decide(&self.forward(image)?))
    }

    pub(crate) fn forward_cached(&self, prep: &Prepared, images: &[&Tensor]) -> Result<ForwardCache> {
        for image in images {
            self.check_input(image)?;
        }
        let plans = &prep.plans;
        let n = plans.len();
        let batch = images.len();
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(n),
            pre: Vec::with_capacity(n),
            cols: Vec::with_capacity(n),
            spectra: Vec::with_capacity(n),
            argmax: Vec::with_capacity(n),
            logits: Vec::new(),
        };
        let mut xs: Vec<Vec<f64>> = images.iter().map(|t| t.data.clone()).collect();
        for (i, plan) in plans.iter().enumerate() {
            let params = &self.state.layers[i];
            let mut cols = Vec::new();
            let mut spectra = Spectra::default();
            let mut argmax = Vec::new();
            let mut pre = Vec::new();
            let outs = match *plan {
                Plan::Conv(g, act) => {
                    let zs: Vec<Vec<f64>> = if let Some(conv) = &prep.spectral[i] {
                        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
                        spectra = conv.input_spectra(&refs);
                        conv.forward(&spectra, batch, &params.bias)
                    } else {
                        xs.iter()
                            .map(|x| {
                                let mut c = Vec::new();
                                layers::im2col(&g, x, &mut c);
                                let mut z = vec![0.0; g.output.len()];
                                layers::conv_forward(&g, &params.weights, &params.bias, &c, &mut z);
                                cols.push(c);
                                z
                            })
                            .collect()
                    };
                    let a = zs.iter().map(|z| activate(z, act)).collect();
                    pre = zs;
                    a
                }
                Plan::Pool(g) => xs
                    .iter()
                    .map(|x| {
                        let (out, arg) = layers::maxpool_forward(&g, x);
                        argmax.push(arg);
                        out
                    })
                    .collect(),
                Plan::Flatten => xs.clone(),
                Plan::Dense(_, act) => {
                    let zs: Vec<Vec<f64>> = xs
                        .iter()
                        .map(|x| layers::dense_forward(&params.weights, &params.bias, x))
                        .collect();
                    let a = if i + 1 == n {
                        Vec::new()
                    } else {
                        zs.iter().map(|z| activate(z, act)).collect()
                    };
                    pre = zs;
                    a
                }
            };
            cache.inputs.push(std::mem::replace(&mut xs, outs));
            cache.pre.push(pre);
            cache.cols.push(cols);
            cache.spectra.push(spectra);
            cache.argmax.push(argmax);
        }
        cache.logits = cache.pre[n - 1].clone();
        Ok(cache)
    }

    /// Backward pass from the gradients with respect to the output logits of
    /// every sample. Accumulates parameter gradients into `grads` when given,
    /// records every ReLU when `relus` is given, and returns the input
    /// gradients when `want_input` is set.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward(
        &self,
        prep: &Prepared,
        cache: &ForwardCache,
        d_logits: Vec<Vec<f64>>,
        rule: BackpropRule,
        mut grads: Option<&mut GradAccum>,
        mut relus: Option<&mut Vec<ReluRecord>>,
        want_input: bool,
    ) -> Option<Vec<Vec<f64>>> {
        let plans = &prep.plans;
        let n = plans.len();
        let batch = d_logits.len();
        // gradient w.r.t. the pre-activation (or plain output) of layer i
        let mut ds = d_logits;
        let mut scratch = Vec::new();
        for i in (0..n).rev() {
            let params = &self.state.layers[i];
            let need_input = i > 0 || want_input;
            let d_in: Option<Vec<Vec<f64>>> = match plans[i] {
                Plan::Conv(g, _) => {
                    if let Some(conv) = &prep.spectral[i] {
                        let refs: Vec<&[f64]> = ds.iter().map(Vec::as_slice).collect();
                        let dzs = conv.output_spectra(&refs);
                        if let Some(acc) = grads.as_deref_mut() {
                            conv.accumulate_weight_spectra(&cache.spectra[i], &dzs, batch, &mut acc.spectra[i]);
                            for d in &ds {
                                layers::conv_bias_grads(&g, d, &mut acc.grads.layers[i].bias);
                            }
                        }
                        need_input.then(|| conv.input_grad(&dzs, batch))
                    } else {
                        if let Some(acc) = grads.as_deref_mut() {
                            let gl = &mut acc.grads.layers[i];
                            for (d, cols) in ds.iter().zip(&cache.cols[i]) {
                                layers::conv_param_grads(&g, d, cols, &mut gl.weights, &mut gl.bias);
                            }
                        }
                        need_input.then(|| {
                            ds.iter()
                                .map(|d| layers::conv_input_grad(&g, d, &params.weights, &mut scratch))
                                .collect()
                        })
                    }
                }
                Plan::Pool(g) => Some(
                    ds.iter()
                        .zip(&cache.argmax[i])
                        .map(|(d, arg)| layers::maxpool_backward(g.input.len(), arg, d))
                        .collect(),
                ),
                Plan::Flatten => Some(std::mem::take(&mut ds)),
                Plan::Dense(input, _) => {
                    if let Some(acc) = grads.as_deref_mut() {
                        let gl = &mut acc.grads.layers[i];
                        for (d, x) in ds.iter().zip(&cache.inputs[i]) {
                            layers::dense_param_grads(d, x, &mut gl.weights, &mut gl.bias);
                        }
                    }
                    need_input.then(|| {
                        ds.iter()
                            .map(|d| layers::dense_input_grad(&params.weights, d, input.len()))
                            .collect()
                    })
                }
            };
            let mut d_in = d_in?;
            if i == 0 {
                return Some(d_in);
            }
            // gate through the activation of the layer below
            if let Some(act) = self.config.layers[i - 1].activation() {
                for (d, z) in d_in.iter_mut().zip(&cache.pre[i - 1]) {
                    match act {
                        Activation::Relu => {
                            for (g, &zv) in d.iter_mut().zip(z) {
                                let pass = zv > 0.0 && (rule == BackpropRule::Standard || *g > 0.0);
                                if !pass {
                                    *g = 0.0;
                                }
                            }
                            if let Some(rec) = relus.as_deref_mut() {
                                rec.push(ReluRecord {
                                    layer: i - 1,
                                    pre_activation: z.clone(),
                                    propagated: d.clone(),
                                });
                            }
                        }
                        Activation::Sigmoid => {
                            for (g, &zv) in d.iter_mut().zip(z) {
                                let s = sigmoid(zv);
                                *g *= s * (1.0 - s);
                            }
                        }
                    }
                }
            }
            ds = d_in;
        }
        None
    }

    /// Weighted binary cross-entropy of one sample and its gradient with
    /// respect to the logits. `class` is a label class (see
    /// [`NetworkConfig::label_classes`]).
    pub(crate) fn loss_and_logit_grad(&self, logits: &[f64], class: usize, class_weights: &[f64]) -> (f64, Vec<f64>) {
        let k = logits.len();
        let w = class_weights[class];
        let mut loss = 0.0;
        let grad = logits
            .iter()
            .enumerate()
            .map(|(j, &z)| {
                let t = target(k, class, j);
                loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
                w * (sigmoid(z) - t) / k as f64
            })
            .collect();
        (w * loss / k as f64, grad)
    }

    pub(crate) fn check_sample(&self, class: usize, class_weights: &[f64]) -> Result<()> {
        let classes = self.config.label_classes();
        if class >= classes {
            return Err(Error::param("nn", format!("class {class} outside 0..{classes}")));
        }
        if class_weights.len() != classes {
            return Err(Error::param(
                "nn",
                format!("{} class weights for {classes} classes", class_weights.len()),
            ));
        }
        Ok(())
    }

    /// Loss of a single sample.
    pub fn loss(&self, image: &Tensor, class: usize, class_weights: &[f64]) -> Result<f64> {
        self.check_sample(class, class_weights)?;
        let cache = self.forward_cached(&self.prepare(), &[image])?;
        Ok(self.loss_and_logit_grad(&cache.logits[0], class, class_weights).0)
    }

    /// Exact gradients of the weighted loss of one sample.
    pub fn gradients(&self, image: &Tensor, class: usize, class_weights: &[f64]) -> Result<Gradients> {
        self.batch_gradients(&[(image, class)], class_weights).map(|(_, g)| g)
    }

    /// Mean loss and mean gradients over a batch.
    pub fn batch_gradients(&self, batch: &[(&Tensor, usize)], class_weights: &[f64]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Ok((0.0, NetworkState::zeros(&self.config)?));
        }
        let prep = self.prepare();
        let mut acc = GradAccum::new(&self.config, &prep)?;
        for &(_, class) in batch {
            self.check_sample(class, class_weights)?;
        }
        let images: Vec<&Tensor> = batch.iter().map(|&(image, _)| image).collect();
        let cache = self.forward_cached(&prep, &images)?;
        let mut total = 0.0;
        let d_logits = cache
            .logits
            .iter()
            .zip(batch)
            .map(|(logits, &(_, class))| {
                let (loss, d) = self.loss_and_logit_grad(logits, class, class_weights);
                total += loss;
                d
            })
            .collect();
        self.backward(&prep, &cache, d_logits, BackpropRule::Standard, Some(&mut acc), None, false);
        let mut grads = acc.finish(&prep);
        let scale = 1.0 / batch.len() as f64;
        for v in grads.iter_mut() {
            *v *= scale;
        }
        Ok((total * scale, grads))
    }

    /// Gradient of the loss with respect to the input image.
    pub fn input_gradient(&self, image: &Tensor, class: usize, class_weights: &[f64]) -> Result<Vec<f64>> {
        self.check_sample(class, class_weights)?;
        let prep = self.prepare();
        let cache = self.forward_cached(&prep, &[image])?;
        let (_, d_logits) = self.loss_and_logit_grad(&cache.logits[0], class, class_weights);
        Ok(self
            .backward(&prep, &cache, vec![d_logits], BackpropRule::Standard, None, None, true)
            .expect("input gradient requested")
            .remove(0))
    }
}

/// Target of output `j` for label class `class` with `k` outputs.
fn target(k: usize, class: usize, j: usize) -> f64 {
    if k == 1 {
        (class == 1) as u8 as f64
    } else {
        (class == j) as u8 as f64
    }
}

/// Label class from scores.
pub fn decide(scores: &[f64]) -> usize {
    if scores.len() == 1 {
        return (scores[0] >= 0.5) as usize;
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn activate(z: &[f64], act: Activation) -> Vec<f64> {
    match act {
        Activation::Relu => z.iter().map(|&v| v.max(0.0)).collect(),
        Activation::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
    }
}
