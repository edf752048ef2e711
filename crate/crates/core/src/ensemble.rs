//! Deterministic ensembles of independent runs.
//!
//! Run `i` draws from its own generator seeded by
//! [`derive_run_seed`]`(config.seed, i)`. Runs execute on a rayon pool in
//! fixed-size batches and their densities are folded in run-index order, so
//! the result does not depend on the number of workers.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{mean_wealth, ConfigError, ModelConfig, Simulation};
use crate::stats::{merge_densities, DensityEstimate, Histogram, StatsError};

/// Generator used for every run.
pub type RunRng = Xoshiro256PlusPlus;

/// Runs simulated concurrently before their results are folded in.
const BATCH: usize = 64;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run {run}: {source}")]
    Run { run: usize, source: StatsError },
    #[error("thread pool: {0}")]
    Pool(String),
}

/// splitmix64 finalizer; a bijection on u64.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of run `run_index` under `master_seed`.
///
/// `master_seed + (run_index + 1) * golden` is injective in the index (the
/// multiplier is odd) and the finalizer is a bijection, so distinct runs of
/// one ensemble never share a seed.
pub fn derive_run_seed(master_seed: u64, run_index: u64) -> u64 {
    const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
    mix64(master_seed.wrapping_add(run_index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

pub fn run_rng(master_seed: u64, run_index: u64) -> RunRng {
    RunRng::seed_from_u64(derive_run_seed(master_seed, run_index))
}

/// Per-time diagnostics averaged over runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeScalars {
    pub mean_agent_count: f64,
    pub mean_total_wealth: f64,
    pub mean_max_share: f64,
    /// Average over runs of total wealth per agent.
    pub mean_wealth_per_agent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub config: ModelConfig,
    pub per_time: BTreeMap<u64, DensityEstimate>,
    pub per_time_scalars: BTreeMap<u64, TimeScalars>,
}

/// What one run contributes at one snapshot time.
struct RunSample {
    density: DensityEstimate,
    agent_count: f64,
    total_wealth: f64,
    max_share: f64,
    wealth_per_agent: f64,
}

fn simulate_one(config: &ModelConfig, run: usize) -> Result<Vec<RunSample>, EnsembleError> {
    let mut sim = Simulation::new(config.clone(), run_rng(config.seed, run as u64))?;
    let mut out = Vec::with_capacity(config.snapshot_times.len());
    for &t in &config.snapshot_times {
        sim.advance_to(t);
        let pool = sim.pool();
        let total = pool.recompute_total();
        let mut hist = Histogram::new(config.bins, 0.0, 1.0)
            .map_err(|source| EnsembleError::Run { run, source })?;
        let mut max = 0.0f64;
        for &w in pool.wealths() {
            let x = w / total;
            max = max.max(x);
            hist.add(x);
        }
        let density = hist
            .to_density()
            .map_err(|source| EnsembleError::Run { run, source })?;
        out.push(RunSample {
            density,
            agent_count: pool.len() as f64,
            total_wealth: total,
            max_share: max,
            wealth_per_agent: mean_wealth(pool),
        });
    }
    Ok(out)
}

/// Runs the ensemble on the global rayon pool.
pub fn run_ensemble(config: &ModelConfig) -> Result<EnsembleResult, EnsembleError> {
    config.validate()?;
    let times = &config.snapshot_times;
    let mut merged: Vec<Option<DensityEstimate>> = vec![None; times.len()];
    let mut sums = vec![[0.0f64; 4]; times.len()];

    let mut start = 0;
    while start < config.ensembles {
        let end = (start + BATCH).min(config.ensembles);
        let batch: Vec<Result<Vec<RunSample>, EnsembleError>> = (start..end)
            .into_par_iter()
            .map(|run| simulate_one(config, run))
            .collect();
        for (offset, result) in batch.into_iter().enumerate() {
            let run = start + offset;
            for (k, sample) in result?.into_iter().enumerate() {
                merged[k] = Some(match merged[k].take() {
                    None => sample.density,
                    Some(acc) => merge_densities(&[acc, sample.density])
                        .map_err(|source| EnsembleError::Run { run, source })?,
                });
                let s = &mut sums[k];
                s[0] += sample.agent_count;
                s[1] += sample.total_wealth;
                s[2] += sample.max_share;
                s[3] += sample.wealth_per_agent;
            }
        }
        start = end;
    }

    let n = config.ensembles as f64;
    let per_time = times
        .iter()
        .zip(merged)
        .map(|(&t, d)| (t, d.expect("at least one run")))
        .collect();
    let per_time_scalars = times
        .iter()
        .zip(&sums)
        .map(|(&t, s)| {
            (
                t,
                TimeScalars {
                    mean_agent_count: s[0] / n,
                    mean_total_wealth: s[1] / n,
                    mean_max_share: s[2] / n,
                    mean_wealth_per_agent: s[3] / n,
                },
            )
        })
        .collect();
    Ok(EnsembleResult {
        config: config.clone(),
        per_time,
        per_time_scalars,
    })
}

/// Runs the ensemble on a dedicated pool of `threads` workers.
pub fn run_ensemble_with_threads(
    config: &ModelConfig,
    threads: usize,
) -> Result<EnsembleResult, EnsembleError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| EnsembleError::Pool(e.to_string()))?;
    pool.install(|| run_ensemble(config))
}
