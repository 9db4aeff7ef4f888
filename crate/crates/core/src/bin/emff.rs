//! Command-line front end: dataset generation, training, evaluation,
//! docking simulation, benchmarking and file export.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numeric fault,
//! 4 run terminated by a collision.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use emff::sim::export::{save_bench_report, save_log_csv, save_toml, write_batch, BatchSummary, RunSummary};
use emff::sim::{random_batch, run_benchmark, run_docking, BenchConfig, ModelSelector, Scenario};
use emff::surrogate::io::{load_dataset, load_model, save_dataset, save_model};
use emff::surrogate::{evaluate, sample_dataset, train_mlp, RegressionReport, SampleRegion, Surrogate, TrainConfig};
use emff::{Error, Result};

#[derive(Parser)]
#[command(name = "emff", version, about = "Electromagnetic formation flight toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample canonical geometries and label them with the exact kernels.
    GenData(GenData),
    /// Train the surrogate network on a dataset file.
    Train(Train),
    /// Report regression metrics of a model on a dataset file.
    Eval(Eval),
    /// Run a docking scenario, or a random batch of them.
    Simulate(Simulate),
    /// Time Q-matrix assembly for each interaction model.
    Bench(Bench),
    /// Write a scenario template or a model description.
    Export(Export),
}

#[derive(Args)]
struct RegionArgs {
    /// Smallest center distance (m).
    #[arg(long, default_value_t = SampleRegion::reference().r_min)]
    r_min: f64,
    /// Largest center distance (m).
    #[arg(long, default_value_t = SampleRegion::reference().r_max)]
    r_max: f64,
    /// Coil radius of the training geometry (m).
    #[arg(long, default_value_t = SampleRegion::reference().coil_radius)]
    radius: f64,
}

impl RegionArgs {
    fn region(&self) -> Result<SampleRegion> {
        SampleRegion::new(self.r_min, self.r_max, self.radius)
    }
}

#[derive(Args)]
struct GenData {
    #[command(flatten)]
    region: RegionArgs,
    #[arg(long, default_value_t = 200_000)]
    samples: usize,
    /// Quadrature nodes per loop for the labels.
    #[arg(long, default_value_t = 128)]
    n_quad: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    data: PathBuf,
    /// Training configuration (TOML); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    out: PathBuf,
    /// Held-out metrics and loss history (TOML).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct Simulate {
    /// Scenario file; the nominal scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Interaction model for the chaser's current solve.
    #[arg(long)]
    model: Option<ModelSelector>,
    /// Surrogate model file.
    #[arg(long)]
    model_path: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    duration: Option<f64>,
    /// CSV trajectory log of a single run.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Run this many random initial conditions instead of the scenario's.
    #[arg(long)]
    batch: Option<usize>,
    /// Output directory for batch logs.
    #[arg(long, default_value = "batch")]
    out_dir: PathBuf,
    /// Run summary (TOML); printed to stdout when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct Bench {
    #[command(flatten)]
    region: RegionArgs,
    /// Surrogate model file; without it only exact and far-field are timed.
    #[arg(long)]
    model_path: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    iterations: usize,
    #[arg(long, default_value_t = 100)]
    warmup: usize,
    #[arg(long, default_value_t = 64)]
    n_quad: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.15)]
    coil_radius: f64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Export {
    #[command(subcommand)]
    what: ExportWhat,
}

#[derive(Subcommand)]
enum ExportWhat {
    /// The nominal scenario, or a scenario file after validation.
    Scenario {
        #[arg(long)]
        from: Option<PathBuf>,
        out: PathBuf,
    },
    /// Header of a model file: layer sizes, region and standardization.
    ModelInfo { model: PathBuf, out: Option<PathBuf> },
    /// Default training configuration.
    TrainConfig { out: PathBuf },
}

#[derive(Serialize)]
struct TrainReport<'a> {
    n_train: usize,
    n_test: usize,
    config: &'a TrainConfig,
    test: &'a RegressionReport,
    train: &'a RegressionReport,
    train_loss: Vec<f64>,
    test_loss: Vec<f64>,
}

#[derive(Serialize)]
struct ModelInfo {
    sizes: Vec<usize>,
    n_values: usize,
    region: SampleRegion,
    input_mean: Vec<f64>,
    input_scale: Vec<f64>,
    output_mean: Vec<f64>,
    output_scale: Vec<f64>,
    radial_r_ref: Option<f64>,
    radial_powers: Vec<i32>,
}

fn emit<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => save_toml(p, value),
        None => {
            print!("{}", emff::sim::export::to_toml_string(value)?);
            Ok(())
        }
    }
}

fn gen_data(a: &GenData) -> Result<i32> {
    let region = a.region.region()?;
    log::info!("sampling {} geometries at {} nodes", a.samples, a.n_quad);
    let ds = sample_dataset(&region, a.samples, a.n_quad, a.seed)?;
    save_dataset(&a.out, &ds)?;
    log::info!("wrote {}", a.out.display());
    Ok(0)
}

fn train(a: &Train) -> Result<i32> {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => emff::sim::export::load_toml(p)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let ds = load_dataset(&a.data)?;
    let out = train_mlp(&ds, &cfg)?;
    let surrogate = Surrogate::new(out.params.clone(), ds.region)?;
    save_model(&a.out, &surrogate)?;
    log::info!("held-out minimum R2 {:?}", out.report.min_r2());
    if let Some(p) = &a.report {
        let report = TrainReport {
            n_train: out.n_train,
            n_test: out.n_test,
            config: &cfg,
            test: &out.report,
            train: &out.train_report,
            train_loss: out.history.iter().map(|h| h.train_loss).collect(),
            test_loss: out.history.iter().filter_map(|h| h.test_loss).collect(),
        };
        save_toml(p, &report)?;
    }
    Ok(0)
}

fn eval(a: &Eval) -> Result<i32> {
    let surrogate = load_model(&a.model)?;
    let ds = load_dataset(&a.data)?;
    if ds.region != surrogate.region {
        log::warn!("dataset region differs from the model's training region");
    }
    let report = evaluate(surrogate.params(), &ds)?;
    emit(&report, a.report.as_deref())?;
    Ok(0)
}

fn load_surrogate(sc: &Scenario) -> Result<Option<Surrogate>> {
    match (&sc.run.model, &sc.run.model_path) {
        (ModelSelector::Surrogate, Some(p)) => Ok(Some(load_model(p)?)),
        (ModelSelector::Surrogate, None) => {
            Err(Error::Config("surrogate model selected without --model-path".into()))
        }
        _ => Ok(None),
    }
}

fn simulate(a: &Simulate) -> Result<i32> {
    let mut sc = match &a.scenario {
        Some(p) => Scenario::load(p)?,
        None => Scenario::default(),
    };
    if let Some(m) = a.model {
        sc.run.model = m;
    }
    if let Some(p) = &a.model_path {
        sc.run.model_path = Some(p.clone());
    }
    if let Some(s) = a.seed {
        sc.run.seed = s;
    }
    if let Some(d) = a.duration {
        sc.run.duration = d;
    }
    sc.validate()?;
    let surrogate = load_surrogate(&sc)?;

    if let Some(n) = a.batch {
        let scenarios = random_batch(&sc, n)?;
        let runs = scenarios
            .into_par_iter()
            .map(|s| run_docking(&s, surrogate.as_ref()).map(|log| (s, log)))
            .collect::<Result<Vec<_>>>()?;
        write_batch(&a.out_dir, &runs)?;
        let summary = BatchSummary { runs: runs.iter().map(|(s, l)| RunSummary::new(s, l)).collect() };
        emit(&summary, a.summary.as_deref())?;
        let codes: Vec<i32> = runs.iter().map(|(_, l)| l.outcome.exit_code()).collect();
        return Ok(codes.iter().copied().max().unwrap_or(0));
    }

    let log = run_docking(&sc, surrogate.as_ref())?;
    if let Some(p) = a.log.as_ref().or(sc.run.log_path.as_ref()) {
        save_log_csv(p, &log.records)?;
    }
    emit(&RunSummary::new(&sc, &log), a.summary.as_deref())?;
    Ok(log.outcome.exit_code())
}

fn bench(a: &Bench) -> Result<i32> {
    let region = a.region.region()?;
    let coil = emff::field_exact::CoilSpec::new(a.coil_radius, 1.0)?;
    let surrogate = a.model_path.as_deref().map(load_model).transpose()?;
    let mut models = vec![ModelSelector::Exact];
    if surrogate.is_some() {
        models.push(ModelSelector::Surrogate);
    }
    models.push(ModelSelector::Farfield);
    let cfg = BenchConfig {
        models,
        iterations: a.iterations,
        warmup: a.warmup,
        n_quad: a.n_quad,
        seed: a.seed,
    };
    let report = run_benchmark(&cfg, &region, &coil, surrogate.as_ref())?;
    match &a.out {
        Some(p) => save_bench_report(p, &report)?,
        None => emit(&report, None)?,
    }
    Ok(0)
}

fn export(a: &Export) -> Result<i32> {
    match &a.what {
        ExportWhat::Scenario { from, out } => {
            let sc = match from {
                Some(p) => Scenario::load(p)?,
                None => Scenario::default(),
            };
            sc.validate()?;
            sc.save(out)?;
        }
        ExportWhat::ModelInfo { model, out } => {
            let s = load_model(model)?;
            let p = s.params();
            let info = ModelInfo {
                sizes: p.sizes().to_vec(),
                n_values: p.values().len(),
                region: s.region,
                input_mean: p.input_scaler.mean.clone(),
                input_scale: p.input_scaler.scale.clone(),
                output_mean: p.output_scaler.mean.clone(),
                output_scale: p.output_scaler.scale.clone(),
                radial_r_ref: p.radial.as_ref().map(|r| r.r_ref),
                radial_powers: p.radial.as_ref().map(|r| r.powers.clone()).unwrap_or_default(),
            };
            emit(&info, out.as_deref())?;
        }
        ExportWhat::TrainConfig { out } => save_toml(out, &TrainConfig::default())?,
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Simulate(a) => simulate(a),
        Command::Bench(a) => bench(a),
        Command::Export(a) => export(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
