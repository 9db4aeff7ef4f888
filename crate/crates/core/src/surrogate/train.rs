//! Mini-batch Adam training with a cosine learning-rate schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, INPUT_DIM, OUTPUT_DIM};
use super::metrics::{regression_metrics, RegressionReport};
use super::mlp::{MlpParams, RadialScaling, Standardizer, DEFAULT_LAYERS};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub t_max: f64,
    pub min_lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub layers: Vec<usize>,
    /// Fraction of rows held out for testing.
    pub test_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Per-label powers of the distance compensation, referenced to the
    /// dataset's `r_min`, e.g. [`DIPOLE_POWERS`]. Empty (the default) trains
    /// on the raw labels.
    pub radial_powers: Vec<i32>,
}

/// Dipole decay of the force (1/r^4) and torque (1/r^3) kernels.
pub const DIPOLE_POWERS: [i32; OUTPUT_DIM] = [4, 4, 4, 3, 3, 3];

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-3,
            t_max: 300.0,
            min_lr: 1e-12,
            epochs: 300,
            batch_size: 8192,
            seed: 0,
            layers: DEFAULT_LAYERS.to_vec(),
            test_fraction: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            radial_powers: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.learning_rate, self.t_max, self.min_lr, self.adam_eps]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !positive || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(format!("training settings must be positive: {self:?}")));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Config(format!("test fraction {} must be in [0, 1)", self.test_fraction)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam moment decay rates must be in [0, 1)".into()));
        }
        if !self.radial_powers.is_empty() && self.radial_powers.len() != OUTPUT_DIM {
            return Err(Error::Config(format!(
                "radial_powers needs {OUTPUT_DIM} entries or none, got {:?}",
                self.radial_powers
            )));
        }
        if self.layers.first() != Some(&INPUT_DIM) || self.layers.last() != Some(&OUTPUT_DIM) {
            return Err(Error::Config(format!(
                "layers must start at {INPUT_DIM} and end at {OUTPUT_DIM}, got {:?}",
                self.layers
            )));
        }
        Ok(())
    }

    /// Cosine-annealed learning rate used throughout `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let phase = std::f64::consts::PI * epoch as f64 / self.t_max;
        self.min_lr + 0.5 * (self.learning_rate - self.min_lr) * (1.0 + phase.cos())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// `None` when nothing is held out.
    pub test_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: MlpParams,
    /// Metrics on the held-out rows, or on the training rows when the
    /// held-out part has fewer than two rows.
    pub report: RegressionReport,
    pub train_report: RegressionReport,
    pub history: Vec<EpochStats>,
    pub n_train: usize,
    pub n_test: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.adam_eps);
        }
    }
}

fn gather(src: &[f64], dim: usize, idx: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(idx.len() * dim);
    for &i in idx {
        out.extend_from_slice(&src[i * dim..(i + 1) * dim]);
    }
    out
}

fn mean_loss(params: &MlpParams, x: &[f64], y: &[f64], chunk: usize) -> f64 {
    let n = x.len() / INPUT_DIM;
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let b = chunk.min(n - start);
        let (l, _) = params.loss_and_gradient(
            &x[start * INPUT_DIM..(start + b) * INPUT_DIM],
            &y[start * OUTPUT_DIM..(start + b) * OUTPUT_DIM],
            b,
        );
        total += l * b as f64;
        start += b;
    }
    total / n as f64
}

/// Trains a fresh network. The split, initialization and per-epoch shuffles
/// all derive from `config.seed`, so a rerun is bit-identical.
pub fn train_mlp(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    dataset.validate()?;
    let n = dataset.len();
    if n == 0 {
        return Err(Error::Validation("cannot train on an empty dataset".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut split_rng = ChaCha8Rng::seed_from_u64(config.seed);
    order.shuffle(&mut split_rng);
    let n_test = ((n as f64) * config.test_fraction).floor() as usize;
    let (test_idx, train_idx) = order.split_at(n_test);
    let n_train = train_idx.len();
    if n_train == 0 {
        return Err(Error::Validation("no rows left for training".into()));
    }
    if config.batch_size > n_train {
        return Err(Error::Config(format!(
            "batch size {} exceeds the {n_train} training rows",
            config.batch_size
        )));
    }

    let radial = (!config.radial_powers.is_empty()).then(|| RadialScaling {
        r_ref: dataset.region.r_min,
        powers: config.radial_powers.clone(),
    });
    let targets = |x: &[f64], idx: &[usize]| {
        let mut y = gather(&dataset.labels, OUTPUT_DIM, idx);
        if let Some(r) = &radial {
            r.compress(x, INPUT_DIM, &mut y);
        }
        y
    };
    let x_train_raw = gather(&dataset.inputs, INPUT_DIM, train_idx);
    let x_test_raw = gather(&dataset.inputs, INPUT_DIM, test_idx);
    let y_train_t = targets(&x_train_raw, train_idx);
    let input_scaler = Standardizer::fit(&x_train_raw, INPUT_DIM);
    let output_scaler = Standardizer::fit(&y_train_t, OUTPUT_DIM);
    let standardize = |raw: &[f64], s: &Standardizer| {
        let mut v = raw.to_vec();
        s.apply(&mut v);
        v
    };
    let x_train = standardize(&x_train_raw, &input_scaler);
    let y_train = standardize(&y_train_t, &output_scaler);
    let x_test = standardize(&x_test_raw, &input_scaler);
    let y_test = standardize(&targets(&x_test_raw, test_idx), &output_scaler);

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    init_rng.set_stream(1);
    let mut params = MlpParams::init(&config.layers, &mut init_rng)?;
    params.input_scaler = input_scaler;
    params.output_scaler = output_scaler;
    params.radial = radial;

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(2);
    let mut adam = Adam::new(params.values().len());
    let mut history = Vec::with_capacity(config.epochs);
    let mut perm: Vec<usize> = (0..n_train).collect();
    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        perm.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for (b, chunk) in perm.chunks(config.batch_size).enumerate() {
            let xb = gather(&x_train, INPUT_DIM, chunk);
            let yb = gather(&y_train, OUTPUT_DIM, chunk);
            let (loss, grad) = params.loss_and_gradient(&xb, &yb, chunk.len());
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "training diverged at epoch {epoch}, batch {b} (loss {loss}, lr {lr})"
                )));
            }
            adam.step(params.values_mut(), &grad, lr, config);
            total += loss * chunk.len() as f64;
        }
        let train_loss = total / n_train as f64;
        let test_loss = (n_test > 0).then(|| mean_loss(&params, &x_test, &y_test, config.batch_size));
        log::info!(
            "epoch {epoch:>4} lr {lr:.3e} train loss {train_loss:.6e} test loss {}",
            test_loss.map_or("-".to_string(), |l| format!("{l:.6e}"))
        );
        history.push(EpochStats { epoch, lr, train_loss, test_loss });
    }

    let report_on = |x_raw: &[f64], x_std: &[f64], idx: &[usize]| -> Result<RegressionReport> {
        let mut pred = params.forward_standardized(x_std, x_std.len() / INPUT_DIM);
        params.output_scaler.invert(&mut pred);
        if let Some(r) = &params.radial {
            r.expand(x_raw, INPUT_DIM, &mut pred);
        }
        regression_metrics(&gather(&dataset.labels, OUTPUT_DIM, idx), &pred, OUTPUT_DIM)
    };
    let train_report = report_on(&x_train_raw, &x_train, train_idx)?;
    let report = if n_test >= 2 {
        report_on(&x_test_raw, &x_test, test_idx)?
    } else {
        train_report.clone()
    };
    Ok(TrainOutcome {
        params,
        report,
        train_report,
        history,
        n_train,
        n_test,
    })
}

/// Metrics of `params` on every row of `dataset`, in label units.
pub fn evaluate(params: &MlpParams, dataset: &Dataset) -> Result<RegressionReport> {
    dataset.validate()?;
    let pred = params.forward_batch(&dataset.inputs)?;
    regression_metrics(&dataset.labels, &pred, OUTPUT_DIM)
}
