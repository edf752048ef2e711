//! Standard run sizes and the baseline sanity checks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensemble::run_rng;
use crate::exchange::AlphaMode;
use crate::models::{run_model, ConfigError, ModelConfig, ModelVariant, Snapshot};
use crate::stats::ks_distance_exponential;

/// Run sizes for the tail-analysis table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scale {
    /// Minutes on a laptop.
    Desk,
    /// The published protocol; hours.
    Paper,
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(format!("unknown scale `{s}` (expected desk or paper)")),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Desk => "desk",
            Scale::Paper => "paper",
        })
    }
}

/// The models compared in the tail-analysis table.
pub const TABLE_MODELS: [ModelVariant; 5] = [
    ModelVariant::ModelA,
    ModelVariant::ModelB,
    ModelVariant::ModelC1,
    ModelVariant::ModelC2,
    ModelVariant::ModelC3,
];

/// Ensemble configuration for `variant` at `scale`. The last snapshot is
/// the one the table reports.
pub fn preset(variant: ModelVariant, scale: Scale, seed: u64) -> ModelConfig {
    use ModelVariant::*;
    let (duration, ensembles, times): (u64, usize, Vec<u64>) = match (variant, scale) {
        (ModelA | ModelC1 | ModelC2, Scale::Desk) => (10_000, 20, vec![5_000, 10_000]),
        (ModelA | ModelC1 | ModelC2, Scale::Paper) => (100_000, 100, vec![50_000, 100_000]),
        (ModelB, Scale::Desk) => (1_000_000, 200, vec![10_000, 100_000, 1_000_000]),
        (ModelB, Scale::Paper) => (1_000_000, 3000, vec![10_000, 100_000, 1_000_000]),
        (ModelC3, Scale::Desk) => (1_000_000, 20, vec![1_000_000]),
        (ModelC3, Scale::Paper) => (1_000_000, 100, vec![1_000_000]),
        (PureYS | PureTF, _) => (100_000, 1, vec![100_000]),
    };
    let mut c = ModelConfig::with_defaults(variant, duration, seed);
    c.ensembles = ensembles;
    c.snapshot_times = times;
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineCheck {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Pure yard-sale with 100 agents for 10^5 sweeps; passes when one agent
/// ends up with more than 99% of the wealth.
pub fn condensation_check(seed: u64) -> Result<BaselineCheck, ConfigError> {
    let mut c = ModelConfig::with_defaults(ModelVariant::PureYS, 100_000, seed);
    c.alpha_mode = AlphaMode::Fixed(0.5);
    let snap = run_model(&c, run_rng(seed, 0))?
        .pop()
        .expect("one snapshot");
    let share = snap.normalized_wealths.iter().copied().fold(0.0, f64::max);
    Ok(BaselineCheck {
        name: "pure yard-sale condensation: max share".into(),
        statistic: share,
        threshold: 0.99,
        passed: share > 0.99,
    })
}

/// Pure theft-fraud with 1000 agents for 10^5 sweeps; passes when the
/// wealth distribution is within KS distance 0.02 of an exponential.
///
/// A single snapshot of 1000 agents has sampling noise of the same order as
/// the threshold, so the check pools snapshots taken every 10 sweeps over
/// the last 10^4 sweeps.
pub fn exponential_check(seed: u64) -> Result<BaselineCheck, ConfigError> {
    let mut c = ModelConfig::with_defaults(ModelVariant::PureTF, 100_000, seed);
    c.n0 = 1000;
    c.snapshot_times = (0..1000).map(|k| 90_010 + 10 * k).collect();
    let snaps = run_model(&c, run_rng(seed, 0))?;
    let pooled: Vec<f64> = snaps
        .iter()
        .flat_map(|s: &Snapshot| s.normalized_wealths.iter().copied())
        .collect();
    let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
    let ks = ks_distance_exponential(&pooled, mean);
    Ok(BaselineCheck {
        name: "pure theft-fraud equilibrium: KS distance to exponential".into(),
        statistic: ks,
        threshold: 0.02,
        passed: ks < 0.02,
    })
}
