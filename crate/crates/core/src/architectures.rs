//! The three CNN speed regressors, their hyperparameter domains and the
//! shared training loop.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{window_inputs, DatasetSplit, NormalizationConfig, WindowSample, CHANNELS};
use crate::error::{Error, Result};
use crate::eval::{Estimator, SpeedEstimateTrace, TraceEntry};
use crate::nn::{mse_loss, ForwardCtx, LayerSpec, Network, NetworkPlan, Optimizer, OptimizerKind, Padding, Tensor};
use crate::seeding;
use crate::signals::TrainRun;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Single2d,
    Single1d,
    Multibranch,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Single2d, Arch::Single1d, Arch::Multibranch];

    pub fn id(self) -> &'static str {
        match self {
            Arch::Single2d => "single2d",
            Arch::Single1d => "single1d",
            Arch::Multibranch => "multibranch",
        }
    }

    pub fn estimator(self) -> Estimator {
        match self {
            Arch::Single2d => Estimator::Single2d,
            Arch::Single1d => Estimator::Single1d,
            Arch::Multibranch => Estimator::Multibranch,
        }
    }

    pub fn block_range(self) -> (usize, usize) {
        match self {
            Arch::Multibranch => (1, 3),
            _ => (1, 20),
        }
    }

    /// Allowed kernel sizes.
    pub fn kernels(self) -> Vec<KernelSize> {
        match self {
            Arch::Single2d => vec![KernelSize::Pair([3, 2]), KernelSize::Pair([5, 2]), KernelSize::Pair([7, 2])],
            _ => (2..=10).map(KernelSize::Scalar).collect(),
        }
    }

    /// Input shape for history length `n`.
    pub fn input_shape(self, n: usize) -> Vec<usize> {
        match self {
            Arch::Single2d => vec![n, CHANNELS, 1],
            Arch::Single1d => vec![n, CHANNELS],
            Arch::Multibranch => vec![n, 1],
        }
    }

    /// Hyperparameters selected by the reference study.
    pub fn optimal(self) -> ArchConfig {
        let (n, blocks, filters, kernel, dropout, lr, batch) = match self {
            Arch::Single2d => (20, 3, 40, KernelSize::Pair([7, 2]), 4.9e-5, 1.7e-4, 8),
            Arch::Single1d => (10, 4, 53, KernelSize::Scalar(2), 8.8e-3, 2.0e-3, 8),
            Arch::Multibranch => (30, 2, 46, KernelSize::Scalar(2), 1.9e-4, 1.8e-3, 32),
        };
        ArchConfig {
            arch: self,
            input_shape: self.input_shape(n),
            n_blocks: blocks,
            n_filters: filters,
            kernel_size: kernel,
            dropout_rate: dropout,
            learning_rate: lr,
            batch_size: batch,
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown architecture {s:?} (expected single2d, single1d or multibranch)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelSize {
    Scalar(usize),
    Pair([usize; 2]),
}

pub const HISTORY_LENGTHS: [usize; 4] = [10, 20, 30, 40];
pub const BATCH_SIZES: [usize; 4] = [8, 16, 32, 64];
pub const FILTER_RANGE: (usize, usize) = (8, 64);
pub const DROPOUT_RANGE: (f64, f64) = (0.0, 0.5);
pub const LEARNING_RATE_RANGE: (f64, f64) = (1e-5, 1e-2);
/// Pool size and stride of the single-branch 1-D model.
pub const POOL: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub arch: Arch,
    pub input_shape: Vec<usize>,
    pub n_blocks: usize,
    pub n_filters: usize,
    pub kernel_size: KernelSize,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl ArchConfig {
    pub fn history_len(&self) -> usize {
        self.input_shape.first().copied().unwrap_or(0)
    }

    /// Checks every field against the architecture's search domain.
    pub fn validate(&self) -> Result<()> {
        let arch = self.arch;
        let fail = |msg: String| Err(Error::Config(format!("{arch}: {msg}")));
        if !HISTORY_LENGTHS.iter().any(|&n| arch.input_shape(n) == self.input_shape) {
            return fail(format!("input shape {:?} not allowed", self.input_shape));
        }
        let (lo, hi) = arch.block_range();
        if !(lo..=hi).contains(&self.n_blocks) {
            return fail(format!("n_blocks {} outside {lo}-{hi}", self.n_blocks));
        }
        if !(FILTER_RANGE.0..=FILTER_RANGE.1).contains(&self.n_filters) {
            return fail(format!("n_filters {} outside {}-{}", self.n_filters, FILTER_RANGE.0, FILTER_RANGE.1));
        }
        if !arch.kernels().contains(&self.kernel_size) {
            return fail(format!("kernel size {:?} not allowed", self.kernel_size));
        }
        if !(DROPOUT_RANGE.0..=DROPOUT_RANGE.1).contains(&self.dropout_rate) {
            return fail(format!("dropout rate {} outside [0, 0.5]", self.dropout_rate));
        }
        if !(LEARNING_RATE_RANGE.0..=LEARNING_RATE_RANGE.1).contains(&self.learning_rate) {
            return fail(format!("learning rate {} outside [1e-5, 1e-2]", self.learning_rate));
        }
        if !BATCH_SIZES.contains(&self.batch_size) {
            return fail(format!("batch size {} not in {BATCH_SIZES:?}", self.batch_size));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: ArchConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }
}

/// Layer plan for a validated configuration.
pub fn plan(config: &ArchConfig) -> Result<NetworkPlan> {
    config.validate()?;
    plan_unchecked(config)
}

/// Layer plan without the search-domain check, for shape experiments
/// outside the tuned ranges.
pub fn plan_unchecked(config: &ArchConfig) -> Result<NetworkPlan> {
    let f = config.n_filters;
    let rate = config.dropout_rate;
    let input = config.input_shape.clone();
    let dense = |inputs, outputs| LayerSpec::Dense { inputs, outputs };
    let plan = match (config.arch, config.kernel_size) {
        (Arch::Single2d, KernelSize::Pair(kernel)) => {
            let mut layers = Vec::new();
            let mut cin = *input.last().unwrap_or(&1);
            for _ in 0..config.n_blocks {
                layers.push(LayerSpec::Conv2d { kernel, in_channels: cin, out_channels: f, padding: Padding::Same, bias: false });
                layers.push(LayerSpec::BatchNorm { channels: f });
                layers.push(LayerSpec::Relu);
                cin = f;
            }
            layers.push(LayerSpec::Dropout { rate });
            layers.push(LayerSpec::Flatten);
            let width = flat_width(&input, &layers)?;
            NetworkPlan { branch_inputs: vec![input], branches: vec![layers], head: vec![dense(width, 1)] }
        }
        (Arch::Single1d, KernelSize::Scalar(k)) => {
            let mut layers = Vec::new();
            let mut cin = *input.last().unwrap_or(&1);
            for _ in 0..config.n_blocks {
                layers.push(LayerSpec::Conv1d { kernel: k, in_channels: cin, out_channels: f, padding: Padding::Same, bias: true });
                layers.push(LayerSpec::Relu);
                layers.push(LayerSpec::MaxPool1d { pool: POOL, stride: POOL });
                cin = f;
            }
            layers.push(LayerSpec::Flatten);
            let width = flat_width(&input, &layers)?;
            let head = vec![
                dense(width, 128),
                LayerSpec::Relu,
                LayerSpec::Dropout { rate },
                dense(128, 32),
                LayerSpec::Relu,
                dense(32, 1),
            ];
            NetworkPlan { branch_inputs: vec![input], branches: vec![layers], head }
        }
        (Arch::Multibranch, KernelSize::Scalar(k)) => {
            let conv = |cin, cout| LayerSpec::Conv1d { kernel: k, in_channels: cin, out_channels: cout, padding: Padding::Same, bias: true };
            let mut layers = Vec::new();
            let mut cin = *input.last().unwrap_or(&1);
            for _ in 0..config.n_blocks {
                layers.extend([conv(cin, f), LayerSpec::Relu, conv(f, 2 * f), LayerSpec::Relu]);
                cin = 2 * f;
            }
            layers.push(LayerSpec::GlobalMaxPool);
            let head = vec![
                dense(CHANNELS * 2 * f, 64),
                LayerSpec::Relu,
                LayerSpec::Dropout { rate },
                dense(64, 32),
                LayerSpec::Relu,
                LayerSpec::Dropout { rate },
                dense(32, 1),
            ];
            NetworkPlan { branch_inputs: vec![input; CHANNELS], branches: vec![layers; CHANNELS], head }
        }
        (arch, k) => return Err(Error::Config(format!("{arch}: kernel size {k:?} has the wrong form"))),
    };
    plan.shapes()?;
    Ok(plan)
}

fn flat_width(input: &[usize], layers: &[LayerSpec]) -> Result<usize> {
    let mut shape = input.to_vec();
    for l in layers {
        shape = l.output_shape(&shape)?;
    }
    Ok(shape.iter().product())
}

/// Builds and initializes the network for `config` from the `init` stream of `seed`.
pub fn build(config: &ArchConfig, seed: u64) -> Result<Network> {
    plan(config)?.instantiate(&mut seeding::stream(seed, seeding::INIT))
}

/// Packs row-major `(n, 3)` windows into the network's branch inputs.
pub fn batch_inputs(arch: Arch, windows: &[&[f64]], n: usize) -> Result<Vec<Tensor>> {
    let b = windows.len();
    if let Some(w) = windows.iter().find(|w| w.len() != n * CHANNELS) {
        return Err(Error::Dimension(format!("window has {} values, expected {}", w.len(), n * CHANNELS)));
    }
    Ok(match arch {
        Arch::Single2d | Arch::Single1d => {
            let data = windows.iter().flat_map(|w| w.iter().copied()).collect();
            let mut shape = vec![b];
            shape.extend(arch.input_shape(n));
            vec![Tensor::new(shape, data)?]
        }
        Arch::Multibranch => (0..CHANNELS)
            .map(|c| {
                let data = windows.iter().flat_map(|w| w.iter().skip(c).step_by(CHANNELS).copied()).collect();
                Tensor::new(vec![b, n, 1], data)
            })
            .collect::<Result<_>>()?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default = "yes")]
    pub dropout_active: bool,
    #[serde(default)]
    pub seed: u64,
}

fn yes() -> bool {
    true
}

impl TrainerConfig {
    /// Trainer settings taken from an architecture config.
    pub fn from_arch(config: &ArchConfig, epochs: usize, optimizer: OptimizerKind, seed: u64) -> Self {
        TrainerConfig {
            learning_rate: config.learning_rate,
            batch_size: config.batch_size,
            epochs,
            optimizer,
            dropout_active: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// What the per-epoch reporter asks the trainer to do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochControl {
    Continue,
    Stop,
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub config: ArchConfig,
    pub normalization: NormalizationConfig,
    pub network: Network,
    pub train_history: Vec<EpochRecord>,
    pub epochs_trained: usize,
    /// Set when the reporter stopped training before the epoch budget.
    pub stopped_early: bool,
}

impl TrainedModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: TrainedModel = serde_json::from_str(&text)?;
        if model.format_version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "{}: checkpoint version {} is not supported",
                path.display(),
                model.format_version
            )));
        }
        model.config.validate()?;
        if model.network.plan() != plan(&model.config)? {
            return Err(Error::Validation(format!("{}: network does not match its config", path.display())));
        }
        Ok(model)
    }

    pub fn final_val_loss(&self) -> Option<f64> {
        self.train_history.last().map(|r| r.val_loss)
    }
}

pub const HISTORY_CSV_HEADER: &str = "epoch,train_loss,val_loss";

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from(HISTORY_CSV_HEADER);
    out.push('\n');
    for r in history {
        out.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.val_loss));
    }
    out
}

pub fn write_history_csv(history: &[EpochRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(history_csv(history).as_bytes()).map_err(|e| Error::io(path, e))
}

const EVAL_CHUNK: usize = 256;

/// Mean squared error of `net` over `windows` in inference mode.
pub fn evaluate_loss(net: &Network, arch: Arch, windows: &[WindowSample]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Validation("no windows to evaluate".into()));
    }
    let mut total = 0.0;
    for chunk in windows.chunks(EVAL_CHUNK) {
        let pred = infer_windows(net, arch, chunk)?;
        let targets: Vec<f64> = chunk.iter().map(|w| w.target).collect();
        total += mse_loss(&pred, &targets)?.0 * chunk.len() as f64;
    }
    Ok(total / windows.len() as f64)
}

fn infer_windows(net: &Network, arch: Arch, windows: &[WindowSample]) -> Result<Tensor> {
    let n = windows[0].n;
    let rows: Vec<&[f64]> = windows.iter().map(|w| w.inputs.as_slice()).collect();
    net.infer(&batch_inputs(arch, &rows, n)?)
}

/// Mini-batch index ranges. A trailing batch of one sample is merged into
/// the previous batch so batch norm always sees at least two samples.
fn batches(len: usize, size: usize) -> Vec<std::ops::Range<usize>> {
    let mut out: Vec<_> = (0..len).step_by(size).map(|s| s..(s + size).min(len)).collect();
    if out.len() > 1 && out.last().is_some_and(|r| r.len() == 1) {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().end = last.end;
    }
    out
}

fn at_epoch(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(m) => Error::NonFinite(format!("epoch {epoch}: {m}")),
        other => other,
    }
}

/// Trains `network` on `split`. The reporter sees `(epoch, val_loss)`
/// after every epoch (1-based) and may stop training.
pub fn train(
    mut network: Network,
    config: &ArchConfig,
    split: &DatasetSplit,
    trainer: &TrainerConfig,
    mut reporter: impl FnMut(usize, f64) -> EpochControl,
) -> Result<TrainedModel> {
    trainer.validate()?;
    let n = config.history_len();
    let mut model = TrainedModel {
        format_version: CHECKPOINT_VERSION,
        config: config.clone(),
        normalization: NormalizationConfig::default(),
        network: Network::clone(&network),
        train_history: Vec::new(),
        epochs_trained: 0,
        stopped_early: false,
    };
    if trainer.epochs == 0 {
        return Ok(model);
    }
    if split.train.is_empty() || split.validation.is_empty() {
        return Err(Error::Validation("training needs non-empty train and validation sets".into()));
    }
    if let Some(w) = split.train.iter().chain(&split.validation).find(|w| w.n != n) {
        return Err(Error::Dimension(format!(
            "window from {} has history {} but the model expects {n}",
            w.source_run, w.n
        )));
    }

    let mut optimizer = Optimizer::new(trainer.optimizer, trainer.learning_rate)?;
    let mut shuffle_rng: ChaCha8Rng = seeding::stream(trainer.seed, seeding::SHUFFLE);
    let mut ctx = ForwardCtx {
        training: true,
        dropout: trainer.dropout_active,
        rng: Some(seeding::stream(trainer.seed, seeding::DROPOUT)),
    };
    let mut order: Vec<usize> = (0..split.train.len()).collect();
    network.zero_grad();
    for epoch in 1..=trainer.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let ranges = batches(order.len(), trainer.batch_size);
        for range in &ranges {
            let idx = &order[range.clone()];
            let rows: Vec<&[f64]> = idx.iter().map(|&i| split.train[i].inputs.as_slice()).collect();
            let targets: Vec<f64> = idx.iter().map(|&i| split.train[i].target).collect();
            let inputs = batch_inputs(config.arch, &rows, n)?;
            let pred = network.forward(&inputs, &mut ctx).map_err(at_epoch(epoch))?;
            let (loss, grad) = mse_loss(&pred, &targets).map_err(at_epoch(epoch))?;
            network.backward(grad).map_err(at_epoch(epoch))?;
            optimizer.step(network.params_mut()).map_err(at_epoch(epoch))?;
            loss_sum += loss;
        }
        let train_loss = loss_sum / ranges.len() as f64;
        let val_loss = evaluate_loss(&network, config.arch, &split.validation).map_err(at_epoch(epoch))?;
        log::debug!("{} epoch {epoch}: train {train_loss:.6} val {val_loss:.6}", config.arch);
        model.train_history.push(EpochRecord { epoch, train_loss, val_loss });
        model.epochs_trained = epoch;
        if reporter(epoch, val_loss) == EpochControl::Stop {
            model.stopped_early = epoch < trainer.epochs;
            break;
        }
    }
    network.release_grads();
    model.network = network;
    Ok(model)
}

/// Sliding-window inference over a whole run. The first `n` samples have
/// no estimate; outputs are in m/s.
pub fn predict_run(model: &TrainedModel, run: &TrainRun) -> Result<SpeedEstimateTrace> {
    let n = model.config.history_len();
    if run.len() <= n {
        return Err(Error::Validation(format!(
            "run {} has {} samples, needs more than the history length {n}",
            run.run_id,
            run.len()
        )));
    }
    let norm = &model.normalization;
    let mut entries = Vec::with_capacity(run.len() - n);
    let ks: Vec<usize> = (n..run.len()).collect();
    for chunk in ks.chunks(EVAL_CHUNK) {
        let windows: Vec<Vec<f64>> = chunk.iter().map(|&k| window_inputs(run, k, n, norm)).collect();
        let rows: Vec<&[f64]> = windows.iter().map(Vec::as_slice).collect();
        let pred = model.network.infer(&batch_inputs(model.config.arch, &rows, n)?)?;
        for (&k, p) in chunk.iter().zip(&pred.data) {
            entries.push(TraceEntry { t: run.samples[k].t, estimate: norm.denormalize(*p) });
        }
    }
    Ok(SpeedEstimateTrace { run_id: run.run_id.clone(), estimator: model.config.arch.estimator(), entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn remainder_of_one_is_merged() {
        assert_eq!(batches(17, 8), vec![0..8, 8..17]);
        assert_eq!(batches(16, 8), vec![0..8, 8..16]);
        assert_eq!(batches(1, 8), vec![0..1]);
        assert_eq!(batches(10, 3), vec![0..3, 3..6, 6..10]);
    }

    #[test]
    fn config_json_shapes() {
        let c = Arch::Single2d.optimal();
        let json = serde_json::to_value(&c).unwrap();
        assert_eq!(json["kernel_size"], serde_json::json!([7, 2]));
        assert_eq!(json["arch"], "single2d");
        let back: ArchConfig = serde_json::from_value(json).unwrap();
        assert_eq!(back, c);
        let m = serde_json::to_value(Arch::Multibranch.optimal()).unwrap();
        assert_eq!(m["kernel_size"], serde_json::json!(2));
    }
}
