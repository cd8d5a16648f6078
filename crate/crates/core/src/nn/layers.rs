use std::hash::{Hash, Hasher};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernels::{self, ConvGeometry, Padding};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Layer configuration without parameters. Shapes are per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        kernel: [usize; 2],
        in_channels: usize,
        out_channels: usize,
        padding: Padding,
        #[serde(default = "yes")]
        bias: bool,
    },
    Conv1d {
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
        padding: Padding,
        #[serde(default = "yes")]
        bias: bool,
    },
    BatchNorm { channels: usize },
    Relu,
    Dropout { rate: f64 },
    MaxPool1d { pool: usize, stride: usize },
    GlobalMaxPool,
    Flatten,
    Dense { inputs: usize, outputs: usize },
}

fn yes() -> bool {
    true
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::BatchNorm { .. } => "batch_norm",
            LayerSpec::Relu => "relu",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::MaxPool1d { .. } => "max_pool1d",
            LayerSpec::GlobalMaxPool => "global_max_pool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
        }
    }

    /// `(kh, kw, cin, cout, padding)` for either convolution kind.
    fn kernel_hw(&self) -> Option<(usize, usize, usize, usize, Padding)> {
        match *self {
            LayerSpec::Conv2d { kernel, in_channels, out_channels, padding, .. } => {
                Some((kernel[0], kernel[1], in_channels, out_channels, padding))
            }
            LayerSpec::Conv1d { kernel, in_channels, out_channels, padding, .. } => {
                Some((kernel, 1, in_channels, out_channels, padding))
            }
            _ => None,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |what: &str| Error::Dimension(format!("{} expects {what}, got input shape {input:?}", self.name()));
        match *self {
            LayerSpec::Conv2d { in_channels, .. } => {
                let [h, w, c] = input else { return Err(bad("(H, W, C)")) };
                if *c != in_channels {
                    return Err(bad(&format!("{in_channels} channels")));
                }
                let (kh, kw, cin, cout, pad) = self.kernel_hw().unwrap();
                let g = ConvGeometry::new(1, *h, *w, cin, kh, kw, cout, pad)?;
                Ok(vec![g.ho, g.wo, cout])
            }
            LayerSpec::Conv1d { in_channels, .. } => {
                let [l, c] = input else { return Err(bad("(L, C)")) };
                if *c != in_channels {
                    return Err(bad(&format!("{in_channels} channels")));
                }
                let (kh, kw, cin, cout, pad) = self.kernel_hw().unwrap();
                let g = ConvGeometry::new(1, *l, 1, cin, kh, kw, cout, pad)?;
                Ok(vec![g.ho, cout])
            }
            LayerSpec::BatchNorm { channels } => match input.last() {
                Some(&c) if c == channels => Ok(input.to_vec()),
                _ => Err(bad(&format!("{channels} trailing channels"))),
            },
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {rate}")));
                }
                Ok(input.to_vec())
            }
            LayerSpec::MaxPool1d { pool, stride } => {
                let [l, c] = input else { return Err(bad("(L, C)")) };
                if pool == 0 || stride == 0 || *l == 0 || stride > pool {
                    return Err(bad("positive pool, stride <= pool and positive length"));
                }
                Ok(vec![kernels::pooled_len(*l, pool, stride), *c])
            }
            LayerSpec::GlobalMaxPool => {
                let [l, c] = input else { return Err(bad("(L, C)")) };
                if *l == 0 {
                    return Err(bad("L >= 1"));
                }
                Ok(vec![*c])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { inputs, outputs } => match input {
                [d] if *d == inputs => Ok(vec![outputs]),
                _ => Err(bad(&format!("({inputs})"))),
            },
        }
    }

    fn has_bias(&self) -> bool {
        match *self {
            LayerSpec::Conv2d { bias, .. } | LayerSpec::Conv1d { bias, .. } => bias,
            LayerSpec::Dense { .. } => true,
            _ => false,
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::BatchNorm { channels } => 2 * channels,
            LayerSpec::Dense { inputs, outputs } => inputs * outputs + outputs,
            _ => match self.kernel_hw() {
                Some((kh, kw, cin, cout, _)) => kh * kw * cin * cout + if self.has_bias() { cout } else { 0 },
                None => 0,
            },
        }
    }
}

/// Parameter tensors of one layer. Unused slots stay `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Tensor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Tensor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Tensor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Tensor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub running_mean: Option<Tensor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub running_var: Option<Tensor>,
}

/// Forward-pass switches. `training` selects batch statistics in batch
/// norm and records caches for backward; `dropout` enables masking.
pub struct ForwardCtx {
    pub training: bool,
    pub dropout: bool,
    pub rng: Option<ChaCha8Rng>,
}

impl ForwardCtx {
    pub fn train(rng: ChaCha8Rng) -> Self {
        ForwardCtx { training: true, dropout: true, rng: Some(rng) }
    }

    /// Training-mode batch norm with dropout disabled, as used by gradient checks.
    pub fn deterministic() -> Self {
        ForwardCtx { training: true, dropout: false, rng: None }
    }

    pub fn infer() -> Self {
        ForwardCtx { training: false, dropout: false, rng: None }
    }
}

/// Saved forward state needed by backward.
#[derive(Debug, Clone, Default)]
pub enum Cache {
    #[default]
    None,
    Conv { cols: Vec<f64>, geometry: ConvGeometry, in_shape: Vec<usize> },
    BatchNorm { xhat: Vec<f64>, inv_std: Vec<f64> },
    Relu { mask: Vec<bool> },
    Dropout { scale: Vec<f64> },
    Pool { argmax: Vec<usize>, in_shape: Vec<usize> },
    Flatten { in_shape: Vec<usize> },
    Dense { input: Vec<f64>, n: usize },
}

impl Cache {
    /// Hashes the discrete decisions (ReLU masks, pool argmaxes) taken in
    /// the forward pass.
    pub fn hash_kinks<H: Hasher>(&self, h: &mut H) {
        match self {
            Cache::Relu { mask } => mask.hash(h),
            Cache::Pool { argmax, .. } => argmax.hash(h),
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub spec: LayerSpec,
    #[serde(default)]
    pub params: LayerParams,
}

fn kaiming_uniform(shape: Vec<usize>, fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor { shape, data, grad: None }
}

impl Layer {
    /// Allocates parameters: Kaiming-uniform weights, zero biases,
    /// unit gamma, zero beta, and running statistics (0, 1).
    pub fn new(spec: LayerSpec, rng: &mut ChaCha8Rng) -> Self {
        let mut params = LayerParams::default();
        match spec {
            LayerSpec::BatchNorm { channels } => {
                params.gamma = Some(Tensor::filled(vec![channels], 1.0));
                params.beta = Some(Tensor::zeros(vec![channels]));
                params.running_mean = Some(Tensor::zeros(vec![channels]));
                params.running_var = Some(Tensor::filled(vec![channels], 1.0));
            }
            LayerSpec::Dense { inputs, outputs } => {
                params.weights = Some(kaiming_uniform(vec![outputs, inputs], inputs, rng));
                params.bias = Some(Tensor::zeros(vec![outputs]));
            }
            _ => {
                if let Some((kh, kw, cin, cout, _)) = spec.kernel_hw() {
                    let shape = if matches!(spec, LayerSpec::Conv1d { .. }) {
                        vec![kh, cin, cout]
                    } else {
                        vec![kh, kw, cin, cout]
                    };
                    params.weights = Some(kaiming_uniform(shape, kh * kw * cin, rng));
                    if spec.has_bias() {
                        params.bias = Some(Tensor::zeros(vec![cout]));
                    }
                }
            }
        }
        Layer { spec, params }
    }

    /// Builds a layer around explicit parameters, checking their shapes.
    pub fn with_params(spec: LayerSpec, params: LayerParams) -> Result<Self> {
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let template = Layer::new(spec.clone(), &mut rng);
        let slots = [
            (&template.params.weights, &params.weights, "weights"),
            (&template.params.bias, &params.bias, "bias"),
            (&template.params.gamma, &params.gamma, "gamma"),
            (&template.params.beta, &params.beta, "beta"),
            (&template.params.running_mean, &params.running_mean, "running_mean"),
            (&template.params.running_var, &params.running_var, "running_var"),
        ];
        for (want, got, name) in slots {
            let want = want.as_ref().map(|t| &t.shape);
            let got = got.as_ref().map(|t| &t.shape);
            if want != got {
                return Err(Error::Dimension(format!(
                    "{} {name}: expected shape {want:?}, got {got:?}",
                    spec.name()
                )));
            }
        }
        Ok(Layer { spec, params })
    }

    /// Trainable tensors in a fixed order.
    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        let p = &mut self.params;
        [&mut p.weights, &mut p.bias, &mut p.gamma, &mut p.beta].into_iter().flatten().collect()
    }

    pub fn trainable(&self) -> Vec<&Tensor> {
        let p = &self.params;
        [&p.weights, &p.bias, &p.gamma, &p.beta].into_iter().flatten().collect()
    }

    fn check_batch_shape(&self, x: &Tensor) -> Result<Vec<usize>> {
        if x.rank() < 1 {
            return Err(Error::Dimension(format!("{}: scalar input", self.spec.name())));
        }
        let out = self.spec.output_shape(&x.shape[1..])?;
        let mut full = vec![x.batch()];
        full.extend(out);
        Ok(full)
    }

    /// Forward pass. In training mode batch norm updates its running
    /// statistics and the returned cache feeds [`Layer::backward`].
    pub fn forward(&mut self, x: &Tensor, ctx: &mut ForwardCtx) -> Result<(Tensor, Cache)> {
        let (out, cache, stats) = self.run(x, ctx)?;
        if let Some((mean, var)) = stats {
            let p = &mut self.params;
            let (rm, rv) = (p.running_mean.as_mut().unwrap(), p.running_var.as_mut().unwrap());
            for c in 0..mean.len() {
                rm.data[c] = BN_MOMENTUM * rm.data[c] + (1.0 - BN_MOMENTUM) * mean[c];
                rv.data[c] = BN_MOMENTUM * rv.data[c] + (1.0 - BN_MOMENTUM) * var[c];
            }
        }
        Ok((out, cache))
    }

    /// Inference-mode forward that leaves the layer untouched.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.run(x, &mut ForwardCtx::infer())?.0)
    }

    #[allow(clippy::type_complexity)]
    fn run(&self, x: &Tensor, ctx: &mut ForwardCtx) -> Result<(Tensor, Cache, Option<(Vec<f64>, Vec<f64>)>)> {
        let out_shape = self.check_batch_shape(x)?;
        let n = x.batch();
        let keep = ctx.training;
        let p = &self.params;
        let (data, cache, stats) = match self.spec {
            LayerSpec::Conv2d { .. } | LayerSpec::Conv1d { .. } => {
                let (kh, kw, cin, cout, pad) = self.spec.kernel_hw().unwrap();
                let (h, w) = if x.rank() == 4 { (x.shape[1], x.shape[2]) } else { (x.shape[1], 1) };
                let g = ConvGeometry::new(n, h, w, cin, kh, kw, cout, pad)?;
                let w = p.weights.as_ref().unwrap();
                let zeros;
                let b = match &p.bias {
                    Some(b) => &b.data,
                    None => {
                        zeros = vec![0.0; cout];
                        &zeros
                    }
                };
                let (out, cols) = kernels::conv_forward(&x.data, &w.data, b, &g);
                let cache = if keep {
                    Cache::Conv { cols, geometry: g, in_shape: x.shape.clone() }
                } else {
                    Cache::None
                };
                (out, cache, None)
            }
            LayerSpec::BatchNorm { channels } => {
                let (gamma, beta) = (&p.gamma.as_ref().unwrap().data, &p.beta.as_ref().unwrap().data);
                if ctx.training {
                    if n < 2 {
                        return Err(Error::Validation(
                            "batch norm needs at least 2 samples per batch in training mode".into(),
                        ));
                    }
                    let m = (x.len() / channels) as f64;
                    let mut mean = vec![0.0; channels];
                    for row in x.data.chunks_exact(channels) {
                        for (s, v) in mean.iter_mut().zip(row) {
                            *s += v;
                        }
                    }
                    mean.iter_mut().for_each(|s| *s /= m);
                    let mut var = vec![0.0; channels];
                    for row in x.data.chunks_exact(channels) {
                        for c in 0..channels {
                            var[c] += (row[c] - mean[c]).powi(2);
                        }
                    }
                    var.iter_mut().for_each(|s| *s /= m);
                    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
                    let mut xhat = Vec::with_capacity(x.len());
                    let mut out = Vec::with_capacity(x.len());
                    for row in x.data.chunks_exact(channels) {
                        for c in 0..channels {
                            let xh = (row[c] - mean[c]) * inv_std[c];
                            xhat.push(xh);
                            out.push(gamma[c] * xh + beta[c]);
                        }
                    }
                    (out, Cache::BatchNorm { xhat, inv_std }, Some((mean, var)))
                } else {
                    let (rm, rv) = (&p.running_mean.as_ref().unwrap().data, &p.running_var.as_ref().unwrap().data);
                    let scale: Vec<f64> = (0..channels).map(|c| gamma[c] / (rv[c] + BN_EPSILON).sqrt()).collect();
                    let mut out = Vec::with_capacity(x.len());
                    for row in x.data.chunks_exact(channels) {
                        for c in 0..channels {
                            out.push((row[c] - rm[c]) * scale[c] + beta[c]);
                        }
                    }
                    (out, Cache::None, None)
                }
            }
            LayerSpec::Relu => {
                let out: Vec<f64> = x.data.iter().map(|&v| v.max(0.0)).collect();
                let cache = if keep { Cache::Relu { mask: x.data.iter().map(|&v| v > 0.0).collect() } } else { Cache::None };
                (out, cache, None)
            }
            LayerSpec::Dropout { rate } => {
                if ctx.dropout && rate > 0.0 {
                    let rng = ctx
                        .rng
                        .as_mut()
                        .ok_or_else(|| Error::Config("dropout in training mode needs a random stream".into()))?;
                    let keep_scale = 1.0 / (1.0 - rate);
                    let scale: Vec<f64> =
                        (0..x.len()).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep_scale }).collect();
                    let out = x.data.iter().zip(&scale).map(|(v, s)| v * s).collect();
                    (out, if keep { Cache::Dropout { scale } } else { Cache::None }, None)
                } else {
                    (x.data.clone(), Cache::None, None)
                }
            }
            LayerSpec::MaxPool1d { pool, stride } => {
                let (l, c) = (x.shape[1], x.shape[2]);
                let (out, argmax) = kernels::max_pool1d_forward(&x.data, n, l, c, pool, stride);
                (out, if keep { Cache::Pool { argmax, in_shape: x.shape.clone() } } else { Cache::None }, None)
            }
            LayerSpec::GlobalMaxPool => {
                let (l, c) = (x.shape[1], x.shape[2]);
                let (out, argmax) = kernels::global_max_pool_forward(&x.data, n, l, c);
                (out, if keep { Cache::Pool { argmax, in_shape: x.shape.clone() } } else { Cache::None }, None)
            }
            LayerSpec::Flatten => (x.data.clone(), Cache::Flatten { in_shape: x.shape.clone() }, None),
            LayerSpec::Dense { inputs, outputs } => {
                let w = p.weights.as_ref().unwrap();
                let b = p.bias.as_ref().unwrap();
                let out = kernels::dense_forward(&x.data, &w.data, &b.data, n, inputs, outputs);
                (out, if keep { Cache::Dense { input: x.data.clone(), n } } else { Cache::None }, None)
            }
        };
        let out = Tensor { shape: out_shape, data, grad: None };
        out.ensure_finite(&format!("{} output", self.spec.name()))?;
        Ok((out, cache, stats))
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &Cache, gout: &Tensor) -> Result<Tensor> {
        let name = self.spec.name();
        let missing = || Error::Validation(format!("{name}: backward without a training-mode forward"));
        let (shape, data) = match (&self.spec, cache) {
            (LayerSpec::Conv2d { .. } | LayerSpec::Conv1d { .. }, Cache::Conv { cols, geometry, in_shape }) => {
                let p = &mut self.params;
                let Tensor { data: wdata, grad, .. } = p.weights.as_mut().unwrap();
                let wgrad = grad.get_or_insert_with(|| vec![0.0; wdata.len()]);
                let mut scratch = Vec::new();
                let bgrad = match p.bias.as_mut() {
                    Some(b) => b.grad_mut(),
                    None => {
                        scratch.resize(geometry.cout, 0.0);
                        &mut scratch
                    }
                };
                let dx = kernels::conv_backward(&gout.data, cols, wdata, geometry, wgrad, bgrad);
                (in_shape.clone(), dx)
            }
            (LayerSpec::BatchNorm { channels }, Cache::BatchNorm { xhat, inv_std }) => {
                let c = *channels;
                let m = (xhat.len() / c) as f64;
                let gamma = self.params.gamma.as_ref().unwrap().data.clone();
                let mut sum_g = vec![0.0; c];
                let mut sum_gx = vec![0.0; c];
                for (g, xh) in gout.data.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                    for k in 0..c {
                        sum_g[k] += g[k];
                        sum_gx[k] += g[k] * xh[k];
                    }
                }
                let mut dx = Vec::with_capacity(xhat.len());
                for (g, xh) in gout.data.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                    for k in 0..c {
                        dx.push(gamma[k] * inv_std[k] / m * (m * g[k] - sum_g[k] - xh[k] * sum_gx[k]));
                    }
                }
                for (d, s) in self.params.gamma.as_mut().unwrap().grad_mut().iter_mut().zip(&sum_gx) {
                    *d += s;
                }
                for (d, s) in self.params.beta.as_mut().unwrap().grad_mut().iter_mut().zip(&sum_g) {
                    *d += s;
                }
                (gout.shape.clone(), dx)
            }
            (LayerSpec::Relu, Cache::Relu { mask }) => {
                let dx = gout.data.iter().zip(mask).map(|(g, &m)| if m { *g } else { 0.0 }).collect();
                (gout.shape.clone(), dx)
            }
            (LayerSpec::Dropout { .. }, Cache::Dropout { scale }) => {
                (gout.shape.clone(), gout.data.iter().zip(scale).map(|(g, s)| g * s).collect())
            }
            (LayerSpec::Dropout { .. }, Cache::None) => (gout.shape.clone(), gout.data.clone()),
            (LayerSpec::MaxPool1d { .. } | LayerSpec::GlobalMaxPool, Cache::Pool { argmax, in_shape }) => {
                let len = in_shape.iter().product();
                (in_shape.clone(), kernels::scatter_argmax(&gout.data, argmax, len))
            }
            (LayerSpec::Flatten, Cache::Flatten { in_shape }) => (in_shape.clone(), gout.data.clone()),
            (LayerSpec::Dense { inputs, outputs }, Cache::Dense { input, n }) => {
                let (din, dout, n) = (*inputs, *outputs, *n);
                let p = &mut self.params;
                let Tensor { data: wdata, grad, .. } = p.weights.as_mut().unwrap();
                let wgrad = grad.get_or_insert_with(|| vec![0.0; wdata.len()]);
                let bias = p.bias.as_mut().unwrap();
                let dx = kernels::dense_backward(&gout.data, input, wdata, n, din, dout, wgrad, bias.grad_mut());
                (vec![n, din], dx)
            }
            _ => return Err(missing()),
        };
        let dx = Tensor { shape, data, grad: None };
        dx.ensure_finite(&format!("{name} input gradient"))?;
        Ok(dx)
    }
}
