//! Regression quality measures per output channel.

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelMetrics {
    /// `None` when the truth is constant on this channel.
    pub r2: Option<f64>,
    pub mae: f64,
    pub rmse: f64,
    pub maxe: f64,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RegressionReport {
    pub channels: Vec<ChannelMetrics>,
    /// Pooled errors over every entry; `r2` is the mean of the defined
    /// channel values.
    pub aggregate: ChannelMetrics,
}

impl RegressionReport {
    pub fn min_r2(&self) -> Option<f64> {
        self.channels.iter().filter_map(|c| c.r2).reduce(f64::min)
    }
}

/// `truth` and `pred` are row-major `n x dim`.
pub fn regression_metrics(truth: &[f64], pred: &[f64], dim: usize) -> Result<RegressionReport> {
    if dim == 0 || truth.len() != pred.len() || truth.len() % dim != 0 {
        return Err(Error::Shape(format!(
            "truth has {} values and prediction {} for {dim} channels",
            truth.len(),
            pred.len()
        )));
    }
    let n = truth.len() / dim;
    if n < 2 {
        return Err(Error::Validation(format!("need at least 2 rows, got {n}")));
    }
    let nf = n as f64;
    let mut channels = Vec::with_capacity(dim);
    let (mut abs_all, mut sq_all, mut max_all) = (0.0, 0.0, 0.0f64);
    for c in 0..dim {
        let col = |v: &[f64], i: usize| v[i * dim + c];
        let mean = (0..n).map(|i| col(truth, i)).sum::<f64>() / nf;
        let (mut abs, mut sq, mut max, mut tot) = (0.0, 0.0, 0.0f64, 0.0);
        for i in 0..n {
            let e = col(truth, i) - col(pred, i);
            abs += e.abs();
            sq += e * e;
            max = max.max(e.abs());
            tot += (col(truth, i) - mean).powi(2);
        }
        abs_all += abs;
        sq_all += sq;
        max_all = max_all.max(max);
        channels.push(ChannelMetrics {
            r2: (tot > 0.0).then(|| 1.0 - sq / tot),
            mae: abs / nf,
            rmse: (sq / nf).sqrt(),
            maxe: max,
        });
    }
    let defined: Vec<f64> = channels.iter().filter_map(|c| c.r2).collect();
    let count = (n * dim) as f64;
    let aggregate = ChannelMetrics {
        r2: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
        mae: abs_all / count,
        rmse: (sq_all / count).sqrt(),
        maxe: max_all,
    };
    Ok(RegressionReport { channels, aggregate })
}
