//! Timing of Q-matrix assembly per model.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scenario::ModelSelector;
use crate::field_exact::{q_matrix_exact, CoilSpec};
use crate::field_farfield::q_matrix_farfield;
use crate::frames::{random_rotation, Dcm};
use crate::surrogate::dataset::{sample_rng, SampleRegion};
use crate::surrogate::{q_matrix_surrogate, ExtrapolationPolicy, Surrogate};
use crate::{Error, Result, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub models: Vec<ModelSelector>,
    pub iterations: usize,
    /// Untimed iterations run first for each model.
    pub warmup: usize,
    pub n_quad: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            models: vec![ModelSelector::Exact, ModelSelector::Surrogate, ModelSelector::Farfield],
            iterations: 100_000,
            warmup: 100,
            n_quad: 64,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub model: ModelSelector,
    pub iterations: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Speedup {
    pub model: ModelSelector,
    /// Mean exact time over this model's mean time.
    pub vs_exact: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_quad: usize,
    pub seed: u64,
    pub entries: Vec<BenchEntry>,
    pub speedups: Vec<Speedup>,
}

impl BenchReport {
    pub fn entry(&self, model: ModelSelector) -> Option<&BenchEntry> {
        self.entries.iter().find(|e| e.model == model)
    }
}

struct Geometry {
    r: Vec3,
    dcm_j: Dcm,
    dcm_k: Dcm,
}

fn geometry(region: &SampleRegion, seed: u64, index: u64) -> Geometry {
    let mut rng = sample_rng(seed, index);
    let d = rng.random_range(region.r_min..=region.r_max);
    let r = random_rotation(&mut rng) * Vec3::z() * d;
    Geometry {
        r,
        dcm_j: Dcm::from_quaternion(&random_rotation(&mut rng)),
        dcm_k: Dcm::from_quaternion(&random_rotation(&mut rng)),
    }
}

/// Times one Q assembly per iteration over i.i.d. geometries drawn from
/// `region` (the same sequence for every model). Every model sees the same
/// geometries; an empty run gives an empty report.
pub fn run_benchmark(
    config: &BenchConfig,
    region: &SampleRegion,
    coil: &CoilSpec,
    surrogate: Option<&Surrogate>,
) -> Result<BenchReport> {
    region.validate()?;
    let mut report = BenchReport {
        n_quad: config.n_quad,
        seed: config.seed,
        entries: Vec::new(),
        speedups: Vec::new(),
    };
    if config.iterations == 0 {
        return Ok(report);
    }
    let surrogate = surrogate.map(|s| s.clone().with_policy(ExtrapolationPolicy::Ignore));
    let gamma = surrogate.as_ref().map_or(1.0, |s| s.scale_for(coil));
    let geometries: Vec<Geometry> = (0..(config.iterations + config.warmup) as u64)
        .map(|i| geometry(region, config.seed, i))
        .collect();
    let mut sink = 0.0;
    for &model in &config.models {
        if model == ModelSelector::Surrogate && surrogate.is_none() {
            return Err(Error::Config("surrogate benchmark requested without a model".into()));
        }
        let mut times = Vec::with_capacity(config.iterations);
        for (i, g) in geometries.iter().enumerate() {
            let start = Instant::now();
            let q = match model {
                ModelSelector::Exact => q_matrix_exact(&g.r, &g.dcm_j, &g.dcm_k, coil, config.n_quad)?,
                ModelSelector::Farfield => q_matrix_farfield(&g.r, &g.dcm_j, &g.dcm_k)?,
                ModelSelector::Surrogate => {
                    let s = surrogate.as_ref().expect("checked above");
                    q_matrix_surrogate(&g.r, &g.dcm_j, &g.dcm_k, coil, s, gamma)?.q
                }
            };
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            sink += q.0[(0, 0)];
            if i >= config.warmup {
                times.push(elapsed);
            }
        }
        let n = times.len() as f64;
        let mean = times.iter().sum::<f64>() / n;
        let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
        report.entries.push(BenchEntry {
            model,
            iterations: times.len(),
            mean_ms: mean,
            std_ms: var.sqrt(),
        });
    }
    std::hint::black_box(sink);
    if let Some(exact) = report.entry(ModelSelector::Exact).cloned() {
        report.speedups = report
            .entries
            .iter()
            .filter(|e| e.model != ModelSelector::Exact)
            .map(|e| Speedup {
                model: e.model,
                vs_exact: exact.mean_ms / e.mean_ms,
            })
            .collect();
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_small_runs() {
        let region = SampleRegion::reference();
        let coil = CoilSpec::reference();
        let cfg = BenchConfig { iterations: 0, ..BenchConfig::default() };
        let r = run_benchmark(&cfg, &region, &coil, None).unwrap();
        assert!(r.entries.is_empty());
        let cfg = BenchConfig {
            models: vec![ModelSelector::Exact, ModelSelector::Farfield],
            iterations: 20,
            warmup: 2,
            n_quad: 16,
            seed: 3,
        };
        let r = run_benchmark(&cfg, &region, &coil, None).unwrap();
        assert_eq!(r.entries.len(), 2);
        for e in &r.entries {
            assert_eq!(e.iterations, 20);
            assert!(e.std_ms >= 0.0 && e.mean_ms > 0.0);
        }
        assert_eq!(r.speedups.len(), 1);
        let needs_model = BenchConfig { models: vec![ModelSelector::Surrogate], ..cfg };
        assert!(run_benchmark(&needs_model, &region, &coil, None).is_err());
    }
}
