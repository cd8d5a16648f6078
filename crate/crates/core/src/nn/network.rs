use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Cache, ForwardCtx, Layer, LayerSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Parameter-free description of a network: independent branches whose
/// flattened outputs are concatenated and fed to a head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkPlan {
    /// Per-sample input shape of each branch.
    pub branch_inputs: Vec<Vec<usize>>,
    pub branches: Vec<Vec<LayerSpec>>,
    pub head: Vec<LayerSpec>,
}

/// Per-sample shapes after every layer, input first.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeTrace {
    pub branches: Vec<Vec<Vec<usize>>>,
    pub head: Vec<Vec<usize>>,
}

impl ShapeTrace {
    pub fn output(&self) -> &[usize] {
        self.head.last().expect("trace starts with the head input")
    }
}

fn trace(input: &[usize], layers: &[LayerSpec]) -> Result<Vec<Vec<usize>>> {
    let mut shapes = vec![input.to_vec()];
    for (i, l) in layers.iter().enumerate() {
        let next = l
            .output_shape(shapes.last().unwrap())
            .map_err(|e| Error::Dimension(format!("layer {i}: {e}")))?;
        shapes.push(next);
    }
    Ok(shapes)
}

impl NetworkPlan {
    pub fn shapes(&self) -> Result<ShapeTrace> {
        if self.branches.is_empty() || self.branches.len() != self.branch_inputs.len() {
            return Err(Error::Dimension("network needs one input shape per branch".into()));
        }
        let mut branches = Vec::new();
        let mut width = 0;
        for (input, layers) in self.branch_inputs.iter().zip(&self.branches) {
            let t = trace(input, layers)?;
            match t.last().unwrap().as_slice() {
                [d] => width += d,
                other => {
                    return Err(Error::Dimension(format!("branch output must be flat, got {other:?}")));
                }
            }
            branches.push(t);
        }
        let head = trace(&[width], &self.head)?;
        Ok(ShapeTrace { branches, head })
    }

    pub fn param_count(&self) -> usize {
        self.branches.iter().flatten().chain(&self.head).map(LayerSpec::param_count).sum()
    }

    pub fn instantiate(&self, rng: &mut ChaCha8Rng) -> Result<Network> {
        self.shapes()?;
        let seq = |specs: &[LayerSpec], rng: &mut ChaCha8Rng| Sequential {
            layers: specs.iter().map(|s| Layer::new(s.clone(), rng)).collect(),
            caches: Vec::new(),
        };
        let branches = self.branches.iter().map(|b| seq(b, rng)).collect();
        let head = seq(&self.head, rng);
        Ok(Network { branch_inputs: self.branch_inputs.clone(), branches, head, widths: Vec::new() })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sequential {
    pub layers: Vec<Layer>,
    #[serde(skip)]
    caches: Vec<Cache>,
}

/// Equality ignores forward caches.
impl PartialEq for Sequential {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Sequential { layers, caches: Vec::new() }
    }

    pub fn forward(&mut self, x: &Tensor, ctx: &mut ForwardCtx) -> Result<Tensor> {
        self.caches.clear();
        let mut cur = x.clone();
        for layer in &mut self.layers {
            let (out, cache) = layer.forward(&cur, ctx)?;
            self.caches.push(cache);
            cur = out;
        }
        Ok(cur)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.infer(&cur)?;
        }
        Ok(cur)
    }

    pub fn backward(&mut self, grad: Tensor) -> Result<Tensor> {
        if self.caches.len() != self.layers.len() {
            return Err(Error::Validation("backward called without a matching forward".into()));
        }
        let mut g = grad;
        for (layer, cache) in self.layers.iter_mut().zip(&self.caches).rev() {
            g = layer.backward(cache, &g)?;
        }
        self.caches.clear();
        Ok(g)
    }

    fn hash_kinks(&self, h: &mut DefaultHasher) {
        self.caches.iter().for_each(|c| c.hash_kinks(h));
    }
}

/// Branches + head, trained jointly. A single-branch network is the
/// plain sequential case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Network {
    pub branch_inputs: Vec<Vec<usize>>,
    pub branches: Vec<Sequential>,
    pub head: Sequential,
    #[serde(skip)]
    widths: Vec<usize>,
}

fn concat_columns(parts: &[Tensor]) -> Tensor {
    if parts.len() == 1 {
        return parts[0].clone();
    }
    let n = parts[0].batch();
    let width: usize = parts.iter().map(|p| p.shape[1]).sum();
    let mut data = Vec::with_capacity(n * width);
    for row in 0..n {
        for p in parts {
            let d = p.shape[1];
            data.extend_from_slice(&p.data[row * d..(row + 1) * d]);
        }
    }
    Tensor { shape: vec![n, width], data, grad: None }
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.branch_inputs == other.branch_inputs && self.branches == other.branches && self.head == other.head
    }
}

impl Network {
    pub fn plan(&self) -> NetworkPlan {
        let specs = |s: &Sequential| s.layers.iter().map(|l| l.spec.clone()).collect();
        NetworkPlan {
            branch_inputs: self.branch_inputs.clone(),
            branches: self.branches.iter().map(specs).collect(),
            head: specs(&self.head),
        }
    }

    fn check_inputs(&self, inputs: &[Tensor]) -> Result<usize> {
        if inputs.len() != self.branches.len() {
            return Err(Error::Dimension(format!(
                "network has {} branches, got {} inputs",
                self.branches.len(),
                inputs.len()
            )));
        }
        let n = inputs[0].batch();
        for (x, want) in inputs.iter().zip(&self.branch_inputs) {
            if x.batch() != n || &x.shape[1..] != want.as_slice() {
                return Err(Error::Dimension(format!(
                    "branch input {:?} does not match (batch {n}, {want:?})",
                    x.shape
                )));
            }
        }
        Ok(n)
    }

    pub fn forward(&mut self, inputs: &[Tensor], ctx: &mut ForwardCtx) -> Result<Tensor> {
        self.check_inputs(inputs)?;
        let mut parts = Vec::with_capacity(inputs.len());
        for (branch, x) in self.branches.iter_mut().zip(inputs) {
            parts.push(branch.forward(x, ctx)?);
        }
        self.widths = parts.iter().map(|p| p.shape[1]).collect();
        self.head.forward(&concat_columns(&parts), ctx)
    }

    /// Inference forward with batch norm on running statistics and no dropout.
    pub fn infer(&self, inputs: &[Tensor]) -> Result<Tensor> {
        let parts = self.branch_features(inputs)?;
        self.head.infer(&concat_columns(&parts))
    }

    /// Inference-mode output of every branch before concatenation.
    pub fn branch_features(&self, inputs: &[Tensor]) -> Result<Vec<Tensor>> {
        self.check_inputs(inputs)?;
        self.branches.iter().zip(inputs).map(|(b, x)| b.infer(x)).collect()
    }

    /// Backpropagates `grad` (gradient of the loss w.r.t. the output),
    /// accumulating into every trainable tensor.
    pub fn backward(&mut self, grad: Tensor) -> Result<()> {
        let g = self.head.backward(grad)?;
        if self.widths.len() != self.branches.len() {
            return Err(Error::Validation("backward called without a matching forward".into()));
        }
        let n = g.batch();
        let total: usize = self.widths.iter().sum();
        let mut offset = 0;
        for (branch, &w) in self.branches.iter_mut().zip(&self.widths) {
            let mut data = Vec::with_capacity(n * w);
            for row in 0..n {
                data.extend_from_slice(&g.data[row * total + offset..row * total + offset + w]);
            }
            branch.backward(Tensor { shape: vec![n, w], data, grad: None })?;
            offset += w;
        }
        Ok(())
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.branches.iter().flat_map(|b| &b.layers).chain(&self.head.layers)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.branches
            .iter_mut()
            .flat_map(|b| &mut b.layers)
            .chain(&mut self.head.layers)
            .flat_map(Layer::trainable_mut)
            .collect()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers().flat_map(Layer::trainable).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Tensor::zero_grad);
    }

    /// Drops gradient buffers, e.g. before checkpointing.
    pub fn release_grads(&mut self) {
        self.params_mut().into_iter().for_each(|t| t.grad = None);
    }

    /// Hash of the ReLU masks and pool argmaxes of the last training-mode forward.
    pub fn kink_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.branches.iter().for_each(|b| b.hash_kinks(&mut h));
        self.head.hash_kinks(&mut h);
        h.finish()
    }
}
