//! The `trainspeed` command line: simulate, train, search, evaluate.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Serialize;

use crate::akf::{run_akf, AkfConfig};
use crate::architectures::{self, Arch, ArchConfig, EpochControl, TrainedModel, TrainerConfig};
use crate::dataset::{make_windows, split, NormalizationConfig, DEFAULT_SPLIT_RATIO};
use crate::error::{Error, Result};
use crate::eval::{compare, render_plots, report_csv, EvalReport, Estimator, SpeedEstimateTrace};
use crate::hpo::{self, StudyConfig};
use crate::nn::OptimizerKind;
use crate::signals::{load_runs, save_runs, RunRole, TrainRun};
use crate::simulator::{make_benchmark_suite, simulate, ScenarioSpec};
use crate::seeding;

#[derive(Debug, Parser)]
#[command(name = "trainspeed", version, about = "Train speed estimation from wheel and GPS speed channels")]
pub struct Cli {
    /// Root seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Print only the paths of written artifacts.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic runs and write them as signals CSV.
    Simulate(SimulateArgs),
    /// Train one CNN architecture and write a checkpoint.
    Train(TrainArgs),
    /// Hyperparameter search over an architecture's search space.
    Search(SearchArgs),
    /// Run estimators on the test runs and write comparison reports.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["scenario", "benchmark_suite"])))]
pub struct SimulateArgs {
    /// Scenario JSON: a single scenario object or an array of them.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// The 17-run benchmark suite, seeded by --seed.
    #[arg(long)]
    pub benchmark_suite: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("hyper").required(true).args(["config", "optimal"])))]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub arch: Arch,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use the tuned preset for --arch.
    #[arg(long)]
    pub optimal: bool,
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    #[arg(long, default_value = "sgd")]
    pub optimizer: OptimizerKind,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub arch: Arch,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 60, value_parser = clap::value_parser!(u64).range(1..))]
    pub epoch_budget: u64,
    #[arg(long, default_value = "sgd")]
    pub optimizer: OptimizerKind,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated: akf, single2d, single1d, multibranch. Raw wheel and
    /// GPS baselines are always included.
    #[arg(long, value_delimiter = ',', default_value = "akf")]
    pub estimators: Vec<Estimator>,
    #[arg(long, num_args = 1..)]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub akf_config: Option<PathBuf>,
}

/// Published RMSEs of each estimator on its own (non-public) data, carried
/// into reports for orientation only.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReferenceRmse {
    pub estimator: Estimator,
    pub without_wsp: Option<f64>,
    pub with_wsp: Option<f64>,
}

pub const REFERENCE_RMSE: [ReferenceRmse; 4] = [
    ReferenceRmse { estimator: Estimator::Multibranch, without_wsp: Some(0.3809), with_wsp: Some(0.4241) },
    ReferenceRmse { estimator: Estimator::Akf, without_wsp: Some(0.4832), with_wsp: Some(0.5274) },
    ReferenceRmse { estimator: Estimator::Single2d, without_wsp: Some(1.2991), with_wsp: Some(0.4170) },
    ReferenceRmse { estimator: Estimator::Single1d, without_wsp: Some(0.6965), with_wsp: None },
];

#[derive(Debug, Serialize)]
struct ReportFile<'a> {
    seed: u64,
    estimators: Vec<Estimator>,
    reports: &'a [EvalReport],
    reference_rmse: &'a [ReferenceRmse],
}

/// Stdout sink honouring `--quiet`.
pub struct Console {
    quiet: bool,
}

impl Console {
    pub fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            let _ = writeln!(std::io::stdout(), "{}", line.as_ref());
        }
    }

    pub fn artifact(&self, path: &Path) {
        let _ = writeln!(std::io::stdout(), "{}", path.display());
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let console = Console { quiet: cli.quiet };
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(cli, args, &console),
        Command::Train(args) => cmd_train(cli, args, &console),
        Command::Search(args) => cmd_search(cli, args, &console),
        Command::Evaluate(args) => cmd_evaluate(cli, args, &console),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn parse_scenarios(text: &str) -> Result<Vec<ScenarioSpec>> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let specs = if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    };
    Ok(specs)
}

pub fn cmd_simulate(cli: &Cli, args: &SimulateArgs, console: &Console) -> Result<()> {
    let runs = match &args.scenario {
        Some(path) => {
            let specs = parse_scenarios(&read_text(path)?)?;
            if specs.is_empty() {
                return Err(Error::Validation(format!("{}: no scenarios", path.display())));
            }
            specs.iter().map(simulate).collect::<Result<Vec<_>>>()?
        }
        None => make_benchmark_suite(cli.seed),
    };
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    save_runs(&runs, &args.out)?;

    let wsp = runs.iter().filter(|r| r.has_wsp).count();
    let peak = runs
        .iter()
        .flat_map(|r| r.samples.iter().filter_map(|s| s.train_speed))
        .fold(0.0_f64, f64::max);
    for r in &runs {
        console.say(format!(
            "{:<12} {:<10} {:>5} samples{}",
            r.run_id,
            role_name(r.role),
            r.len(),
            if r.has_wsp { "  wsp" } else { "" }
        ));
    }
    console.say(format!(
        "{} runs: {} without WSP, {} with WSP; peak speed {:.2} m/s",
        runs.len(),
        runs.len() - wsp,
        wsp,
        peak
    ));
    console.artifact(&args.out);
    Ok(())
}

fn role_name(role: RunRole) -> &'static str {
    match role {
        RunRole::Train => "train",
        RunRole::Validation => "validation",
        RunRole::Test => "test",
    }
}

pub fn cmd_train(cli: &Cli, args: &TrainArgs, console: &Console) -> Result<()> {
    let config = match &args.config {
        Some(path) => {
            let c = ArchConfig::from_json(&read_text(path)?)?;
            if c.arch != args.arch {
                return Err(Error::Config(format!(
                    "{} describes a {} network but --arch is {}",
                    path.display(),
                    c.arch,
                    args.arch
                )));
            }
            c
        }
        None => args.arch.optimal(),
    };
    config.validate()?;
    let runs = load_runs(&args.data)?;
    ensure_dir(&cli.out_dir)?;

    let windows = make_windows(&runs, config.history_len(), &NormalizationConfig::default())?;
    let data = split(windows, DEFAULT_SPLIT_RATIO, seeding::derive(cli.seed, seeding::SPLIT))?;
    console.say(format!(
        "{}: {} train / {} validation windows, history {}",
        config.arch,
        data.train.len(),
        data.validation.len(),
        config.history_len()
    ));
    let network = architectures::build(&config, cli.seed)?;
    let trainer = TrainerConfig::from_arch(&config, args.epochs, args.optimizer, cli.seed);
    let model = architectures::train(network, &config, &data, &trainer, |epoch, val| {
        log::info!("epoch {epoch}/{}: val loss {val:.6}", args.epochs);
        EpochControl::Continue
    })?;

    let checkpoint = cli.out_dir.join(format!("model_{}.json", config.arch));
    model.save(&checkpoint)?;
    let history = cli.out_dir.join("history.csv");
    architectures::write_history_csv(&model.train_history, &history)?;
    match model.final_val_loss() {
        Some(v) => console.say(format!("{}: {} epochs, final val loss {v:.6}", config.arch, model.epochs_trained)),
        None => console.say(format!("{}: untrained checkpoint (0 epochs)", config.arch)),
    }
    console.artifact(&checkpoint);
    console.artifact(&history);
    Ok(())
}

pub fn cmd_search(cli: &Cli, args: &SearchArgs, console: &Console) -> Result<()> {
    let mut cfg = StudyConfig::new(args.arch, args.trials as usize, cli.seed)?;
    cfg.epoch_budget = args.epoch_budget as usize;
    cfg.optimizer = args.optimizer;
    let runs = load_runs(&args.data)?;
    ensure_dir(&cli.out_dir)?;

    let result = hpo::run_study(&cfg, &runs, |t| {
        let loss = t.best_val_loss.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
        console.say(format!("trial {:>3} {:<9} best val loss {loss}", t.trial_id, format!("{:?}", t.status).to_lowercase()));
    })?;
    let s = hpo::summary(&result);
    console.say(format!(
        "{} trials ({} completed, {} pruned, {} failed); best trial {} with val loss {:.6}",
        s.trials, s.completed, s.pruned, s.failed, s.best_trial, s.best_val_loss
    ));
    for path in hpo::write_study(&result, &cli.out_dir)? {
        console.artifact(&path);
    }
    Ok(())
}

fn load_checkpoints(paths: &[PathBuf]) -> Result<BTreeMap<Estimator, TrainedModel>> {
    let mut models = BTreeMap::new();
    for path in paths {
        let model = TrainedModel::load(path)?;
        let est = model.config.arch.estimator();
        if models.insert(est, model).is_some() {
            return Err(Error::Config(format!("more than one checkpoint for {est}")));
        }
    }
    Ok(models)
}

/// Traces for every requested estimator plus both raw-sensor baselines.
pub fn estimator_traces(
    run: &TrainRun,
    estimators: &[Estimator],
    models: &BTreeMap<Estimator, TrainedModel>,
    akf: &AkfConfig,
) -> Result<Vec<SpeedEstimateTrace>> {
    let mut traces = Vec::new();
    for &est in estimators {
        let trace = match est {
            Estimator::Akf => run_akf(run, akf),
            Estimator::WheelBaseline | Estimator::GpsBaseline => continue,
            _ => {
                let model = models
                    .get(&est)
                    .ok_or_else(|| Error::Config(format!("estimator {est} needs a checkpoint (pass it with --checkpoints)")))?;
                architectures::predict_run(model, run)
            }
        };
        traces.push(trace.map_err(|e| Error::Validation(format!("estimator {est} on run {}: {e}", run.run_id)))?);
    }
    traces.push(SpeedEstimateTrace::wheel_baseline(run));
    traces.push(SpeedEstimateTrace::gps_baseline(run));
    Ok(traces)
}

pub fn cmd_evaluate(cli: &Cli, args: &EvaluateArgs, console: &Console) -> Result<()> {
    let mut estimators = args.estimators.clone();
    estimators.sort();
    estimators.dedup();
    let akf = match &args.akf_config {
        Some(path) => serde_json::from_str(&read_text(path)?)?,
        None => AkfConfig::default(),
    };
    let models = load_checkpoints(&args.checkpoints)?;
    for est in &estimators {
        if !matches!(est, Estimator::Akf | Estimator::WheelBaseline | Estimator::GpsBaseline) && !models.contains_key(est) {
            return Err(Error::Config(format!("estimator {est} needs a checkpoint (pass it with --checkpoints)")));
        }
    }
    let runs = load_runs(&args.data)?;
    let tests: Vec<&TrainRun> = runs.iter().filter(|r| r.role == RunRole::Test).collect();
    if tests.is_empty() {
        return Err(Error::Validation(format!("{}: no test runs", args.data.display())));
    }
    ensure_dir(&cli.out_dir)?;

    let mut reports = Vec::new();
    let mut artifacts = Vec::new();
    for run in tests {
        let traces = estimator_traces(run, &estimators, &models, &akf)?;
        let report = compare(&traces, run)?;
        artifacts.extend(render_plots(&report, run, &cli.out_dir)?);
        reports.push(report);
    }

    console.say(format!("{:<12} {:<5} {:<15} {:>10} {:>12} {:>10}", "run", "wsp", "estimator", "rmse", "max |error|", "reference"));
    for r in &reports {
        for e in &r.estimators {
            let reference = REFERENCE_RMSE
                .iter()
                .find(|x| x.estimator == e.estimator)
                .and_then(|x| if r.has_wsp { x.with_wsp } else { x.without_wsp })
                .map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
            console.say(format!(
                "{:<12} {:<5} {:<15} {:>10.4} {:>12.4} {:>10}",
                r.run_id,
                if r.has_wsp { "yes" } else { "no" },
                e.estimator.label(),
                e.rmse,
                e.max_abs_error,
                reference
            ));
        }
    }
    console.say("reference: RMSEs published for each estimator on different field data, for orientation only");

    let csv_path = cli.out_dir.join("report.csv");
    write_file(&csv_path, &report_csv(&reports))?;
    let json_path = cli.out_dir.join("report.json");
    let body = ReportFile { seed: cli.seed, estimators, reports: &reports, reference_rmse: &REFERENCE_RMSE };
    write_file(&json_path, &serde_json::to_string_pretty(&body)?)?;
    console.artifact(&csv_path);
    console.artifact(&json_path);
    for p in &artifacts {
        console.artifact(p);
    }
    Ok(())
}
