//! Hyperparameter search: a Tree-structured Parzen Estimator sampler and
//! a median pruner driving the architecture trainer.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use statrs::function::erf::erf;

use crate::architectures::{build, train, Arch, ArchConfig, EpochControl, TrainerConfig};
use crate::dataset::{make_windows, split, DatasetSplit, NormalizationConfig, DEFAULT_SPLIT_RATIO};
use crate::error::{Error, Result};
use crate::nn::OptimizerKind;
use crate::seeding;
use crate::signals::TrainRun;

const SEARCH_SPACES_JSON: &str = include_str!("../search_spaces.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    Categorical { choices: Vec<Value> },
    IntRange { lo: i64, hi: i64 },
    FloatRange { lo: f64, hi: f64 },
    FloatLogRange { lo: f64, hi: f64 },
}

impl Domain {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Domain::Categorical { ref choices } => !choices.is_empty(),
            Domain::IntRange { lo, hi } => lo <= hi,
            Domain::FloatRange { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            Domain::FloatLogRange { lo, hi } => lo > 0.0 && hi.is_finite() && lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("empty or invalid domain {self:?}")))
        }
    }

    /// Continuous search coordinate bounds (log for log ranges, ±0.5
    /// around integers). `None` for categorical domains.
    fn bounds(&self) -> Option<(f64, f64)> {
        match *self {
            Domain::Categorical { .. } => None,
            Domain::IntRange { lo, hi } => Some((lo as f64 - 0.5, hi as f64 + 0.5)),
            Domain::FloatRange { lo, hi } => Some((lo, hi)),
            Domain::FloatLogRange { lo, hi } => Some((lo.ln(), hi.ln())),
        }
    }

    /// Point value (category index, integer, or float) to search coordinate.
    fn to_coord(&self, x: f64) -> f64 {
        match self {
            Domain::FloatLogRange { .. } => x.ln(),
            _ => x,
        }
    }

    fn value_at(&self, u: f64) -> f64 {
        match *self {
            Domain::IntRange { lo, hi } => u.round().clamp(lo as f64, hi as f64),
            Domain::FloatRange { lo, hi } => u.clamp(lo, hi),
            Domain::FloatLogRange { lo, hi } => u.exp().clamp(lo, hi),
            Domain::Categorical { .. } => u,
        }
    }

    fn contains(&self, x: f64) -> bool {
        match *self {
            Domain::Categorical { ref choices } => x >= 0.0 && x.fract() == 0.0 && (x as usize) < choices.len(),
            Domain::IntRange { lo, hi } => x.fract() == 0.0 && x >= lo as f64 && x <= hi as f64,
            Domain::FloatRange { lo, hi } | Domain::FloatLogRange { lo, hi } => x >= lo && x <= hi,
        }
    }

    fn to_value(&self, x: f64) -> Value {
        match self {
            Domain::Categorical { choices } => choices[x as usize].clone(),
            Domain::IntRange { .. } => Value::from(x as i64),
            _ => Value::from(x),
        }
    }

    fn sample_uniform(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Domain::Categorical { ref choices } => rng.random_range(0..choices.len()) as f64,
            Domain::IntRange { lo, hi } => rng.random_range(lo..=hi) as f64,
            Domain::FloatRange { lo, hi } => {
                if lo == hi { lo } else { rng.random_range(lo..hi) }
            }
            Domain::FloatLogRange { lo, hi } => {
                if lo == hi { lo } else { rng.random_range(lo.ln()..hi.ln()).exp().clamp(lo, hi) }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    #[serde(flatten)]
    pub domain: Domain,
}

/// Ordered parameter domains. A point is one `f64` per parameter: the
/// category index, the integer, or the float value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpace {
    pub params: Vec<Param>,
}

impl SearchSpace {
    pub fn new(params: Vec<Param>) -> Result<Self> {
        let space = SearchSpace { params };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(Error::Config("search space has no parameters".into()));
        }
        self.params.iter().try_for_each(|p| p.domain.validate())
    }

    /// Built-in domains for an architecture.
    pub fn for_arch(arch: Arch) -> Result<Self> {
        let mut all: HashMap<String, SearchSpace> = serde_json::from_str(SEARCH_SPACES_JSON)?;
        let space = all.remove(arch.id()).ok_or_else(|| Error::Config(format!("no search space for {arch}")))?;
        space.validate()?;
        Ok(space)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: SearchSpace = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.params.len() && self.params.iter().zip(point).all(|(p, &x)| p.domain.contains(x))
    }

    /// Named parameter values for a point.
    pub fn decode(&self, point: &[f64]) -> Map<String, Value> {
        self.params.iter().zip(point).map(|(p, &x)| (p.name.clone(), p.domain.to_value(x))).collect()
    }

    pub fn sample_uniform(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.params.iter().map(|p| p.domain.sample_uniform(rng)).collect()
    }
}

/// Architecture config for a point of that architecture's space.
pub fn decode_config(arch: Arch, space: &SearchSpace, point: &[f64]) -> Result<ArchConfig> {
    let mut map = space.decode(point);
    map.insert("arch".into(), Value::from(arch.id()));
    let config: ArchConfig = serde_json::from_value(Value::Object(map))?;
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Completed,
    Pruned,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord<C = ArchConfig> {
    pub trial_id: usize,
    pub point: Vec<f64>,
    pub config: C,
    /// `(epoch, val_loss)`, epochs 1-based.
    pub intermediate: Vec<(usize, f64)>,
    pub status: TrialStatus,
    /// Minimum intermediate value; `None` for failed trials.
    pub best_val_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    pub gamma: f64,
    pub n_candidates: usize,
    /// Completed trials needed before the sampler leaves uniform sampling.
    pub n_startup: usize,
    pub prior_weight: f64,
}

impl Default for TpeConfig {
    fn default() -> Self {
        TpeConfig { gamma: 0.25, n_candidates: 24, n_startup: 10, prior_weight: 1.0 }
    }
}

pub fn elite_count(n_completed: usize, gamma: f64) -> usize {
    ((gamma * n_completed as f64).ceil() as usize).max(1).min(n_completed)
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Parzen mixture over one continuous coordinate: one Gaussian per
/// observation plus a prior at the centre, all truncated to `[lo, hi]`.
/// Each kernel's width is the larger gap to its sorted neighbours, clipped
/// to `[range / min(100, n + 1), range]`.
struct Parzen {
    mus: Vec<f64>,
    sigmas: Vec<f64>,
    weights: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl Parzen {
    fn new(obs: &[f64], lo: f64, hi: f64, prior_weight: f64) -> Self {
        let range = (hi - lo).max(1e-12);
        let prior_mu = 0.5 * (lo + hi);
        let mut comps: Vec<(f64, f64)> = obs.iter().map(|&x| (x, 1.0)).collect();
        comps.push((prior_mu, prior_weight));
        comps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let min_sigma = range / (100.0f64).min(obs.len() as f64 + 1.0);
        let n = comps.len();
        let mut mus = Vec::with_capacity(n);
        let mut sigmas = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut prior_seen = false;
        for i in 0..n {
            let (mu, w) = comps[i];
            let left = if i == 0 { mu - lo } else { mu - comps[i - 1].0 };
            let right = if i + 1 == n { hi - mu } else { comps[i + 1].0 - mu };
            let is_prior = !prior_seen && mu == prior_mu && w == prior_weight;
            prior_seen |= is_prior;
            let sigma = if is_prior { range } else { left.max(right).clamp(min_sigma, range) };
            mus.push(mu);
            sigmas.push(sigma);
            weights.push(w);
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Parzen { mus, sigmas, weights, lo, hi }
    }

    fn pdf(&self, x: f64) -> f64 {
        let mut p = 0.0;
        for ((&mu, &s), &w) in self.mus.iter().zip(&self.sigmas).zip(&self.weights) {
            let mass = std_normal_cdf((self.hi - mu) / s) - std_normal_cdf((self.lo - mu) / s);
            let z = (x - mu) / s;
            p += w * (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt() * mass.max(1e-300));
        }
        p
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let mut r: f64 = rng.random();
        let mut k = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            if r < *w {
                k = i;
                break;
            }
            r -= w;
        }
        for _ in 0..100 {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            let x = self.mus[k] + self.sigmas[k] * z;
            if (self.lo..=self.hi).contains(&x) {
                return x;
            }
        }
        self.mus[k].clamp(self.lo, self.hi)
    }
}

/// Smoothed category frequencies.
fn categorical_weights(obs: &[f64], k: usize, prior_weight: f64) -> Vec<f64> {
    let mut w = vec![prior_weight / k as f64; k];
    for &x in obs {
        w[x as usize] += 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

/// Proposes the next point. Below `n_startup` completed trials this is a
/// uniform draw; otherwise the best of `n_candidates` draws from the
/// elite density `l`, ranked by `log l - log g`. The non-elite density
/// `g` is fit on the remaining completed trials plus pruned trials.
pub fn sample_tpe<C>(history: &[TrialRecord<C>], space: &SearchSpace, cfg: &TpeConfig, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    space.validate()?;
    let mut completed: Vec<&TrialRecord<C>> = history
        .iter()
        .filter(|t| t.status == TrialStatus::Completed && t.best_val_loss.is_some_and(f64::is_finite))
        .collect();
    if completed.len() < cfg.n_startup.max(1) {
        return Ok(space.sample_uniform(rng));
    }
    completed.sort_by(|a, b| a.best_val_loss.unwrap().total_cmp(&b.best_val_loss.unwrap()).then(a.trial_id.cmp(&b.trial_id)));
    let n_elite = elite_count(completed.len(), cfg.gamma);
    let elite: Vec<&[f64]> = completed[..n_elite].iter().map(|t| t.point.as_slice()).collect();
    let rest: Vec<&[f64]> = completed[n_elite..]
        .iter()
        .copied()
        .chain(history.iter().filter(|t| t.status == TrialStatus::Pruned))
        .map(|t| t.point.as_slice())
        .collect();

    enum Fit {
        Cont(Parzen, Parzen),
        Cat(Vec<f64>, Vec<f64>),
    }
    let fits: Vec<Fit> = space
        .params
        .iter()
        .enumerate()
        .map(|(i, p)| match (&p.domain, p.domain.bounds()) {
            (Domain::Categorical { choices }, _) => {
                let col = |set: &[&[f64]]| set.iter().map(|pt| pt[i]).collect::<Vec<_>>();
                Fit::Cat(
                    categorical_weights(&col(&elite), choices.len(), cfg.prior_weight),
                    categorical_weights(&col(&rest), choices.len(), cfg.prior_weight),
                )
            }
            (d, Some((lo, hi))) => {
                let col = |set: &[&[f64]]| set.iter().map(|pt| d.to_coord(pt[i])).collect::<Vec<_>>();
                Fit::Cont(Parzen::new(&col(&elite), lo, hi, cfg.prior_weight), Parzen::new(&col(&rest), lo, hi, cfg.prior_weight))
            }
            _ => unreachable!("only categorical domains lack bounds"),
        })
        .collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..cfg.n_candidates.max(1) {
        let mut point = Vec::with_capacity(fits.len());
        let mut score = 0.0;
        for (fit, p) in fits.iter().zip(&space.params) {
            match fit {
                Fit::Cat(l, g) => {
                    let mut r: f64 = rng.random();
                    let mut c = l.len() - 1;
                    for (j, w) in l.iter().enumerate() {
                        if r < *w {
                            c = j;
                            break;
                        }
                        r -= w;
                    }
                    score += l[c].ln() - g[c].ln();
                    point.push(c as f64);
                }
                Fit::Cont(l, g) => {
                    let u = l.sample(rng);
                    let x = p.domain.value_at(u);
                    let uc = p.domain.to_coord(x);
                    score += l.pdf(uc).max(1e-300).ln() - g.pdf(uc).max(1e-300).ln();
                    point.push(x);
                }
            }
        }
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, point));
        }
    }
    Ok(best.unwrap().1)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median rule: prune when the latest value exceeds the median of prior
/// trials' values at the same epoch, once at least `warmup_trials` prior
/// trials reported that epoch and the epoch is at least `warmup_epochs`.
pub fn should_prune<C>(history: &[TrialRecord<C>], current: &[(usize, f64)], warmup_trials: usize, warmup_epochs: usize) -> bool {
    let Some(&(epoch, value)) = current.last() else { return false };
    if epoch < warmup_epochs {
        return false;
    }
    let mut prior: Vec<f64> = history
        .iter()
        .filter(|t| matches!(t.status, TrialStatus::Completed | TrialStatus::Pruned))
        .filter_map(|t| t.intermediate.iter().find(|(e, _)| *e == epoch).map(|&(_, v)| v))
        .collect();
    if prior.is_empty() || prior.len() < warmup_trials {
        return false;
    }
    value > median(&mut prior)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Tpe,
    Random,
}

/// Sequential minimization of a cheap objective over `space`, without
/// pruning. Each trial's config is its decoded parameter map.
pub fn minimize(
    space: &SearchSpace,
    budget: usize,
    sampler: SamplerKind,
    cfg: &TpeConfig,
    seed: u64,
    mut objective: impl FnMut(&Map<String, Value>) -> Result<f64>,
) -> Result<Vec<TrialRecord<Value>>> {
    let mut rng = seeding::stream(seed, seeding::SAMPLER);
    let mut trials: Vec<TrialRecord<Value>> = Vec::with_capacity(budget);
    for trial_id in 0..budget {
        let point = match sampler {
            SamplerKind::Tpe => sample_tpe(&trials, space, cfg, &mut rng)?,
            SamplerKind::Random => space.sample_uniform(&mut rng),
        };
        let params = space.decode(&point);
        let (status, best, failure) = match objective(&params) {
            Ok(v) if v.is_finite() => (TrialStatus::Completed, Some(v), None),
            Ok(v) => (TrialStatus::Failed, None, Some(format!("objective returned {v}"))),
            Err(e) => (TrialStatus::Failed, None, Some(e.to_string())),
        };
        let intermediate = best.map(|v| vec![(1, v)]).unwrap_or_default();
        trials.push(TrialRecord { trial_id, point, config: Value::Object(params), intermediate, status, best_val_loss: best, failure });
    }
    Ok(trials)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub arch: Arch,
    pub space: SearchSpace,
    pub budget: usize,
    pub epoch_budget: usize,
    pub seed: u64,
    pub tpe: TpeConfig,
    pub warmup_trials: usize,
    pub warmup_epochs: usize,
    pub optimizer: OptimizerKind,
    pub split_ratio: f64,
}

impl StudyConfig {
    /// Toolkit defaults: 60 epochs per trial, pruner warmup of 5 trials and
    /// 5 epochs.
    pub fn new(arch: Arch, budget: usize, seed: u64) -> Result<Self> {
        Ok(StudyConfig {
            arch,
            space: SearchSpace::for_arch(arch)?,
            budget,
            epoch_budget: 60,
            seed,
            tpe: TpeConfig::default(),
            warmup_trials: 5,
            warmup_epochs: 5,
            optimizer: OptimizerKind::Sgd,
            split_ratio: DEFAULT_SPLIT_RATIO,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub arch: Arch,
    pub trials: Vec<TrialRecord>,
    pub best: TrialRecord,
    pub seed: u64,
}

impl StudyResult {
    pub fn count(&self, status: TrialStatus) -> usize {
        self.trials.iter().filter(|t| t.status == status).count()
    }
}

/// Running minimum of completed trials' best values, per trial.
pub fn best_so_far<C>(trials: &[TrialRecord<C>]) -> Vec<Option<f64>> {
    let mut best: Option<f64> = None;
    trials
        .iter()
        .map(|t| {
            if t.status == TrialStatus::Completed {
                if let Some(v) = t.best_val_loss {
                    best = Some(best.map_or(v, |b: f64| b.min(v)));
                }
            }
            best
        })
        .collect()
}

/// Runs a study on `runs`. Windows and the train/validation split are
/// rebuilt per history length, since input shape is itself searched.
pub fn run_study(cfg: &StudyConfig, runs: &[TrainRun], mut on_trial: impl FnMut(&TrialRecord)) -> Result<StudyResult> {
    if cfg.budget == 0 {
        return Err(Error::Config("study budget must be at least 1".into()));
    }
    cfg.space.validate()?;
    let mut rng = seeding::stream(cfg.seed, seeding::SAMPLER);
    let split_seed = seeding::derive(cfg.seed, seeding::SPLIT);
    let norm = NormalizationConfig::default();
    let mut splits: HashMap<usize, DatasetSplit> = HashMap::new();
    let mut trials: Vec<TrialRecord> = Vec::with_capacity(cfg.budget);

    for trial_id in 0..cfg.budget {
        let point = sample_tpe(&trials, &cfg.space, &cfg.tpe, &mut rng)?;
        let config = decode_config(cfg.arch, &cfg.space, &point)?;
        let n = config.history_len();
        if let std::collections::hash_map::Entry::Vacant(slot) = splits.entry(n) {
            slot.insert(split(make_windows(runs, n, &norm)?, cfg.split_ratio, split_seed)?);
        }
        let data = &splits[&n];
        let trial_seed = seeding::derive(cfg.seed, &format!("trial-{trial_id}"));
        let trainer = TrainerConfig::from_arch(&config, cfg.epoch_budget, cfg.optimizer, trial_seed);
        let mut intermediate = Vec::new();
        let outcome = build(&config, trial_seed).and_then(|net| {
            train(net, &config, data, &trainer, |epoch, val| {
                intermediate.push((epoch, val));
                if should_prune(&trials, &intermediate, cfg.warmup_trials, cfg.warmup_epochs) {
                    EpochControl::Stop
                } else {
                    EpochControl::Continue
                }
            })
        });
        let best = intermediate.iter().map(|&(_, v)| v).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))));
        let record = match outcome {
            Ok(model) => TrialRecord {
                trial_id,
                point,
                config,
                intermediate,
                status: if model.stopped_early { TrialStatus::Pruned } else { TrialStatus::Completed },
                best_val_loss: best,
                failure: None,
            },
            Err(e) => {
                log::warn!("trial {trial_id} failed: {e}");
                TrialRecord { trial_id, point, config, intermediate, status: TrialStatus::Failed, best_val_loss: None, failure: Some(e.to_string()) }
            }
        };
        on_trial(&record);
        trials.push(record);
    }

    let best = trials
        .iter()
        .filter(|t| t.status == TrialStatus::Completed && t.best_val_loss.is_some())
        .min_by(|a, b| a.best_val_loss.unwrap().total_cmp(&b.best_val_loss.unwrap()))
        .cloned();
    match best {
        Some(best) => Ok(StudyResult { arch: cfg.arch, trials, best, seed: cfg.seed }),
        None => {
            let log: Vec<String> = trials
                .iter()
                .map(|t| format!("trial {}: {:?} {}", t.trial_id, t.status, t.failure.as_deref().unwrap_or("")))
                .collect();
            Err(Error::Validation(format!("no trial completed:\n{}", log.join("\n"))))
        }
    }
}

#[derive(Serialize)]
struct TrialLine<'a> {
    #[serde(flatten)]
    trial: &'a TrialRecord,
    best_so_far: Option<f64>,
}

/// One JSON object per trial, each with the running best value.
pub fn study_jsonl(result: &StudyResult) -> Result<String> {
    let mut out = String::new();
    for (t, b) in result.trials.iter().zip(best_so_far(&result.trials)) {
        out.push_str(&serde_json::to_string(&TrialLine { trial: t, best_so_far: b })?);
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub arch: Arch,
    pub seed: u64,
    pub trials: usize,
    pub completed: usize,
    pub pruned: usize,
    pub failed: usize,
    pub best_trial: usize,
    pub best_val_loss: f64,
    pub best_config: ArchConfig,
}

pub fn summary(result: &StudyResult) -> StudySummary {
    StudySummary {
        arch: result.arch,
        seed: result.seed,
        trials: result.trials.len(),
        completed: result.count(TrialStatus::Completed),
        pruned: result.count(TrialStatus::Pruned),
        failed: result.count(TrialStatus::Failed),
        best_trial: result.best.trial_id,
        best_val_loss: result.best.best_val_loss.unwrap_or(f64::NAN),
        best_config: result.best.config.clone(),
    }
}

/// Writes `study.jsonl`, `study_summary.json` and `best_config.json` into `dir`.
pub fn write_study(result: &StudyResult, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    let files = [
        ("study.jsonl", study_jsonl(result)?),
        ("study_summary.json", serde_json::to_string_pretty(&summary(result))?),
        ("best_config.json", serde_json::to_string_pretty(&result.best.config)?),
    ];
    let mut paths = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(body.as_bytes()).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
