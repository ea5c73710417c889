use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{make_split, rng_stream, train, MetricsReport, SeedMetrics, TrainConfig};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Result of one seed: split, train and evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub wall_seconds: f64,
    /// Test metrics, or the error that stopped the run.
    pub result: std::result::Result<SeedMetrics, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub seeds: Vec<SeedOutcome>,
    /// Aggregate over the seeds that succeeded.
    pub report: Option<MetricsReport>,
}

impl ExperimentOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &SeedOutcome> {
        self.seeds.iter().filter(|s| s.result.is_err())
    }
}

/// Runs one seed end to end. The seed fixes the split (stream 0) and the
/// training randomness (streams 1 and 2); `config.seed` is ignored.
pub fn run_seed(g: &Graph, config: &TrainConfig, seed: u64) -> Result<SeedMetrics> {
    let config = TrainConfig {
        seed,
        ..config.clone()
    };
    let split = make_split(g, config.task, &config.split, &mut rng_stream(seed, 0))?;
    let outcome = train(&split, &config)?;
    let (auc, ap) = outcome
        .test
        .ok_or_else(|| Error::input("the split has no test pairs to evaluate"))?;
    Ok(SeedMetrics {
        seed,
        auc,
        ap,
        history: outcome.history,
    })
}

/// Runs every seed on a pool of `workers` threads. Each run owns its
/// parameters and generators; results come back in seed order, and the
/// aggregate covers the seeds that succeeded.
pub fn run_experiment(
    g: &Graph,
    config: &TrainConfig,
    seeds: &[u64],
    workers: usize,
) -> Result<ExperimentOutcome> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::input(format!("cannot start worker pool: {e}")))?;
    let seeds: Vec<SeedOutcome> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let start = Instant::now();
                let result = run_seed(g, config, seed).map_err(|e| e.to_string());
                SeedOutcome {
                    seed,
                    wall_seconds: start.elapsed().as_secs_f64(),
                    result,
                }
            })
            .collect()
    });
    let ok: Vec<SeedMetrics> = seeds.iter().filter_map(|s| s.result.clone().ok()).collect();
    let report = (!ok.is_empty()).then(|| MetricsReport::from_seeds(ok));
    Ok(ExperimentOutcome { seeds, report })
}
