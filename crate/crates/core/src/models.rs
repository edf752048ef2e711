//! Model variants and the schedulers that drive them.
//!
//! Every variant runs yard-sale (or theft-fraud) transactions in schedule
//! units and interleaves agent injection and fragmentation events.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exchange::{AgentPool, AlphaMode, KernelKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelVariant {
    PureYS,
    PureTF,
    ModelA,
    ModelB,
    ModelC1,
    ModelC2,
    ModelC3,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 7] = [
        ModelVariant::PureYS,
        ModelVariant::PureTF,
        ModelVariant::ModelA,
        ModelVariant::ModelB,
        ModelVariant::ModelC1,
        ModelVariant::ModelC2,
        ModelVariant::ModelC3,
    ];

    pub fn kernel(self) -> KernelKind {
        match self {
            ModelVariant::PureTF => KernelKind::TheftFraud,
            _ => KernelKind::YardSale,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::PureYS => "PureYS",
            ModelVariant::PureTF => "PureTF",
            ModelVariant::ModelA => "ModelA",
            ModelVariant::ModelB => "ModelB",
            ModelVariant::ModelC1 => "ModelC1",
            ModelVariant::ModelC2 => "ModelC2",
            ModelVariant::ModelC3 => "ModelC3",
        }
    }

    pub fn default_schedule_unit(self) -> ScheduleUnit {
        match self {
            ModelVariant::ModelB | ModelVariant::ModelC3 => ScheduleUnit::Transaction,
            _ => ScheduleUnit::Sweep,
        }
    }

    pub fn default_bins(self) -> usize {
        match self {
            ModelVariant::ModelB => 10_000,
            _ => 100_000,
        }
    }

    pub fn default_ensembles(self) -> usize {
        match self {
            ModelVariant::PureYS | ModelVariant::PureTF => 1,
            ModelVariant::ModelB => 3000,
            _ => 100,
        }
    }

    /// Variants whose events are defined per round only accept sweeps.
    fn accepts(self, unit: ScheduleUnit) -> bool {
        match self {
            ModelVariant::ModelA | ModelVariant::ModelC1 | ModelVariant::ModelC2 => {
                unit == ScheduleUnit::Sweep
            }
            _ => true,
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown variant `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleUnit {
    /// As many transactions as there are agents when the round starts.
    Sweep,
    Transaction,
}

impl fmt::Display for ScheduleUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleUnit::Sweep => "Sweep",
            ScheduleUnit::Transaction => "Transaction",
        })
    }
}

impl FromStr for ScheduleUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sweep" => Ok(ScheduleUnit::Sweep),
            "transaction" => Ok(ScheduleUnit::Transaction),
            _ => Err(format!("unknown schedule unit `{s}`")),
        }
    }
}

/// Everything needed to reproduce a run or an ensemble of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: ModelVariant,
    pub n0: usize,
    /// Run length in schedule units.
    pub duration: u64,
    /// Schedule units between event attempts for variants that use it.
    pub tau: u64,
    pub schedule_unit: ScheduleUnit,
    pub alpha_mode: AlphaMode,
    pub split_fraction: f64,
    pub bins: usize,
    pub seed: u64,
    pub ensembles: usize,
    pub snapshot_times: Vec<u64>,
}

impl ModelConfig {
    /// Configuration with the published protocol's defaults: 100 starting
    /// agents, stake fraction 0.5, halving splits, events every 10 units.
    pub fn with_defaults(variant: ModelVariant, duration: u64, seed: u64) -> Self {
        Self {
            variant,
            n0: 100,
            duration,
            tau: 10,
            schedule_unit: variant.default_schedule_unit(),
            alpha_mode: AlphaMode::Fixed(0.5),
            split_fraction: 0.5,
            bins: variant.default_bins(),
            seed,
            ensembles: variant.default_ensembles(),
            snapshot_times: vec![duration],
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n0 < 2 {
            return Err(invalid("n0", "at least two agents are needed to trade"));
        }
        if self.duration == 0 {
            return Err(invalid("duration", "must be positive"));
        }
        if self.tau == 0 {
            return Err(invalid("tau", "must be at least 1"));
        }
        if !self.variant.accepts(self.schedule_unit) {
            return Err(invalid(
                "schedule_unit",
                format!("{} is only defined per sweep", self.variant),
            ));
        }
        self.alpha_mode
            .validate()
            .map_err(|e| invalid("alpha_mode", e.to_string()))?;
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(invalid("split_fraction", "must lie in (0, 1)"));
        }
        if self.bins < 100 {
            return Err(invalid("bins", "must be at least 100"));
        }
        if self.ensembles == 0 {
            return Err(invalid("ensembles", "must be positive"));
        }
        if self.snapshot_times.is_empty() {
            return Err(invalid("snapshot_times", "at least one time is required"));
        }
        if self.snapshot_times[0] == 0 {
            return Err(invalid("snapshot_times", "times must be positive"));
        }
        if self.snapshot_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(
                "snapshot_times",
                "times must be strictly ascending",
            ));
        }
        if *self.snapshot_times.last().unwrap() > self.duration {
            return Err(invalid("snapshot_times", "times must not exceed duration"));
        }
        Ok(())
    }
}

/// State of one run at a requested time, with wealth normalized by the total.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: u64,
    pub agent_count: usize,
    pub total_wealth: f64,
    pub normalized_wealths: Vec<f64>,
}

impl Snapshot {
    pub fn of(time: u64, pool: &AgentPool) -> Self {
        let total = pool.recompute_total();
        Self {
            time,
            agent_count: pool.len(),
            total_wealth: total,
            normalized_wealths: pool.wealths().iter().map(|w| w / total).collect(),
        }
    }
}

/// Adds one agent with wealth drawn uniformly from [0, 1); returns that wealth.
pub fn inject_agent<R: Rng + ?Sized>(
    pool: &mut AgentPool,
    alpha_mode: AlphaMode,
    rng: &mut R,
) -> f64 {
    let w = rng.random::<f64>();
    pool.push_agent(w, alpha_mode, rng);
    w
}

/// Picks an agent uniformly and splits it with probability `min(1, wealth)`.
pub fn attempt_fragmentation<R: Rng + ?Sized>(
    pool: &mut AgentPool,
    split_fraction: f64,
    alpha_mode: AlphaMode,
    rng: &mut R,
) -> bool {
    fragment(pool, split_fraction, alpha_mode, rng).is_some()
}

/// Returns the pre-split wealth of the fragmented agent, if any.
fn fragment<R: Rng + ?Sized>(
    pool: &mut AgentPool,
    split_fraction: f64,
    alpha_mode: AlphaMode,
    rng: &mut R,
) -> Option<f64> {
    assert!(!pool.is_empty(), "cannot fragment an empty pool");
    let k = rng.random_range(0..pool.len());
    let w = pool.wealths()[k];
    // u in [0, 1): zero wealth never splits, wealth >= 1 always does
    if rng.random::<f64>() < w {
        pool.split_agent(k, split_fraction, alpha_mode, rng);
        Some(w)
    } else {
        None
    }
}

/// Panics on an empty pool.
pub fn mean_wealth(pool: &AgentPool) -> f64 {
    assert!(!pool.is_empty(), "mean wealth of an empty pool");
    pool.total() / pool.len() as f64
}

/// Running tallies of the events a run has executed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub transactions: u64,
    pub injections: u64,
    pub injected_wealth: f64,
    pub fragmentation_attempts: u64,
    pub fragmentations: u64,
    /// Sum of pre-split wealths of fragmented agents.
    pub fragmented_wealth: f64,
    /// Sum of the population mean wealth at each accepted fragmentation.
    pub population_mean_at_fragmentation: f64,
}

/// A single run in progress.
pub struct Simulation<R> {
    config: ModelConfig,
    pool: AgentPool,
    rng: R,
    time: u64,
    initial_total: f64,
    log: EventLog,
}

impl<R: Rng> Simulation<R> {
    pub fn new(config: ModelConfig, mut rng: R) -> Result<Self, ConfigError> {
        config.validate()?;
        let pool = AgentPool::uniform(config.n0, config.alpha_mode, &mut rng);
        let initial_total = pool.total();
        Ok(Self {
            config,
            pool,
            rng,
            time: 0,
            initial_total,
            log: EventLog::default(),
        })
    }

    pub fn pool(&self) -> &AgentPool {
        &self.pool
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn initial_total(&self) -> f64 {
        self.initial_total
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Runs until `time` schedule units have elapsed (no-op if already there).
    pub fn advance_to(&mut self, time: u64) {
        while self.time < time {
            self.step();
        }
    }

    /// One schedule unit followed by the variant's events.
    pub fn step(&mut self) {
        let kernel = self.config.variant.kernel();
        let mode = self.config.alpha_mode;
        let n = match self.config.schedule_unit {
            ScheduleUnit::Sweep => self.pool.len(),
            ScheduleUnit::Transaction => 1,
        };
        for _ in 0..n {
            self.pool.transact(kernel, mode, &mut self.rng);
        }
        self.log.transactions += n as u64;
        self.time += 1;

        let on_tau = self.time.is_multiple_of(self.config.tau);
        match self.config.variant {
            ModelVariant::PureYS | ModelVariant::PureTF => {}
            ModelVariant::ModelA => self.inject(),
            ModelVariant::ModelB => {
                if on_tau {
                    self.fragment();
                }
            }
            ModelVariant::ModelC1 => {
                if self.fragment() {
                    self.inject();
                }
            }
            ModelVariant::ModelC2 => {
                self.inject();
                self.fragment();
            }
            ModelVariant::ModelC3 => {
                if on_tau {
                    // the join coin uses the head count before this boundary's events
                    let join = self.rng.random::<f64>() < 1.0 / self.pool.len() as f64;
                    self.fragment();
                    if join {
                        self.inject();
                    }
                }
            }
        }
    }

    fn inject(&mut self) {
        let w = inject_agent(&mut self.pool, self.config.alpha_mode, &mut self.rng);
        self.log.injections += 1;
        self.log.injected_wealth += w;
    }

    fn fragment(&mut self) -> bool {
        self.log.fragmentation_attempts += 1;
        let mean = mean_wealth(&self.pool);
        match fragment(
            &mut self.pool,
            self.config.split_fraction,
            self.config.alpha_mode,
            &mut self.rng,
        ) {
            Some(w) => {
                self.log.fragmentations += 1;
                self.log.fragmented_wealth += w;
                self.log.population_mean_at_fragmentation += mean;
                true
            }
            None => false,
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot::of(self.time, &self.pool)
    }
}

/// Runs `config` once and returns a snapshot at every requested time.
pub fn run_model<R: Rng>(config: &ModelConfig, rng: R) -> Result<Vec<Snapshot>, ConfigError> {
    let mut sim = Simulation::new(config.clone(), rng)?;
    Ok(config
        .snapshot_times
        .iter()
        .map(|&t| {
            sim.advance_to(t);
            sim.snapshot()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn rng(seed: u64) -> Xoshiro256PlusPlus {
        Xoshiro256PlusPlus::seed_from_u64(seed)
    }

    fn cfg(variant: ModelVariant, duration: u64) -> ModelConfig {
        let mut c = ModelConfig::with_defaults(variant, duration, 7);
        c.ensembles = 1;
        c
    }

    #[test]
    fn injection_adds_one_agent_and_its_wealth() {
        let mut r = rng(1);
        let mut pool = AgentPool::uniform(100, AlphaMode::Fixed(0.5), &mut r);
        let before = pool.total();
        let w = inject_agent(&mut pool, AlphaMode::Fixed(0.5), &mut r);
        assert_eq!(pool.len(), 101);
        assert!((0.0..=1.0).contains(&w));
        assert_eq!(pool.total(), before + w);
        assert_eq!(*pool.wealths().last().unwrap(), w);
    }

    #[test]
    fn injected_wealth_mean_is_one_half() {
        let mut r = rng(2);
        let mut pool = AgentPool::new(vec![]).unwrap();
        let n = 1_000_000;
        let sum: f64 = (0..n)
            .map(|_| inject_agent(&mut pool, AlphaMode::Fixed(0.5), &mut r))
            .sum();
        assert!((sum / n as f64 - 0.5).abs() < 0.002);
    }

    #[test]
    fn fragmentation_halves_agent() {
        let mut r = rng(3);
        let mut pool = AgentPool::new(vec![0.8]).unwrap();
        // 0.8 acceptance: retry until the split happens
        while !attempt_fragmentation(&mut pool, 0.5, AlphaMode::Fixed(0.5), &mut r) {}
        assert_eq!(pool.wealths(), &[0.4, 0.4]);
        assert_eq!(pool.recompute_total(), 0.8);
    }

    #[test]
    fn zero_wealth_never_fragments() {
        let mut r = rng(4);
        let mut pool = AgentPool::new(vec![0.0]).unwrap();
        for _ in 0..10_000 {
            assert!(!attempt_fragmentation(
                &mut pool,
                0.5,
                AlphaMode::Fixed(0.5),
                &mut r
            ));
        }
        assert_eq!(pool.len(), 1);
    }

    #[test]
    fn wealth_above_one_always_fragments() {
        let mut r = rng(5);
        let accepted = (0..10_000)
            .filter(|_| {
                let mut pool = AgentPool::new(vec![2.0]).unwrap();
                attempt_fragmentation(&mut pool, 0.5, AlphaMode::Fixed(0.5), &mut r)
            })
            .count();
        assert_eq!(accepted, 10_000);
    }

    #[test]
    fn unequal_split_conserves_wealth() {
        let mut r = rng(6);
        let mut pool = AgentPool::new(vec![3.0]).unwrap();
        assert!(attempt_fragmentation(
            &mut pool,
            0.3,
            AlphaMode::Fixed(0.5),
            &mut r
        ));
        assert_eq!(pool.wealths()[0] + pool.wealths()[1], 3.0);
        assert!((pool.wealths()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn mean_wealth_examples() {
        assert_eq!(mean_wealth(&AgentPool::new(vec![1.0]).unwrap()), 1.0);
        assert!((mean_wealth(&AgentPool::new(vec![0.2, 0.6]).unwrap()) - 0.4).abs() < 1e-15);
    }

    #[test]
    #[should_panic]
    fn mean_wealth_of_empty_pool_panics() {
        mean_wealth(&AgentPool::new(vec![]).unwrap());
    }

    #[test]
    fn model_a_adds_one_agent_per_sweep() {
        let mut c = cfg(ModelVariant::ModelA, 500);
        c.snapshot_times = vec![1, 250, 500];
        let snaps = run_model(&c, rng(8)).unwrap();
        let counts: Vec<_> = snaps.iter().map(|s| s.agent_count).collect();
        assert_eq!(counts, vec![101, 350, 600]);
    }

    #[test]
    fn model_a_wealth_ledger() {
        let mut sim = Simulation::new(cfg(ModelVariant::ModelA, 2000), rng(9)).unwrap();
        for t in [10, 100, 1000, 2000] {
            sim.advance_to(t);
            let expected = sim.initial_total() + sim.log().injected_wealth;
            let got = sim.pool().recompute_total();
            assert!(((got - expected) / expected).abs() < 1e-9);
            assert_eq!(sim.log().injections, t);
        }
    }

    #[test]
    fn model_b_conserves_total_and_grows() {
        let mut c = cfg(ModelVariant::ModelB, 200_000);
        c.snapshot_times = vec![1000, 10_000, 100_000, 200_000];
        let mut sim = Simulation::new(c.clone(), rng(10)).unwrap();
        let start = sim.initial_total();
        let mut last_count = sim.pool().len();
        for &t in &c.snapshot_times {
            sim.advance_to(t);
            let s = sim.snapshot();
            assert!(((s.total_wealth - start) / start).abs() < 1e-9);
            assert!(s.agent_count >= last_count);
            last_count = s.agent_count;
        }
        assert_eq!(sim.log().fragmentation_attempts, 20_000);
        assert!(sim.log().fragmentations > 0);
    }

    #[test]
    fn fragmentation_targets_the_rich() {
        let mut sim = Simulation::new(cfg(ModelVariant::ModelB, 500_000), rng(11)).unwrap();
        sim.advance_to(500_000);
        let log = sim.log();
        assert!(log.fragmentations > 100);
        let fragmented_mean = log.fragmented_wealth / log.fragmentations as f64;
        let population_mean = log.population_mean_at_fragmentation / log.fragmentations as f64;
        assert!(
            fragmented_mean > population_mean,
            "{fragmented_mean} vs {population_mean}"
        );
    }

    #[test]
    fn model_c1_pairs_injection_with_fragmentation() {
        let mut sim = Simulation::new(cfg(ModelVariant::ModelC1, 3000), rng(12)).unwrap();
        for t in (100..=3000).step_by(100) {
            sim.advance_to(t);
            assert_eq!(sim.log().injections, sim.log().fragmentations);
            assert_eq!(sim.pool().len() as u64, 100 + 2 * sim.log().fragmentations);
        }
    }

    #[test]
    fn model_c2_injects_every_sweep() {
        let mut sim = Simulation::new(cfg(ModelVariant::ModelC2, 1000), rng(13)).unwrap();
        sim.advance_to(1000);
        let log = sim.log();
        assert_eq!(log.injections, 1000);
        assert_eq!(log.fragmentation_attempts, 1000);
        assert_eq!(sim.pool().len() as u64, 100 + 1000 + log.fragmentations);
    }

    #[test]
    fn model_c3_events_on_tau_boundaries() {
        let mut sim = Simulation::new(cfg(ModelVariant::ModelC3, 100_000), rng(14)).unwrap();
        sim.advance_to(100_000);
        let log = sim.log();
        assert_eq!(log.fragmentation_attempts, 10_000);
        assert!(log.injections > 0 && log.injections < log.fragmentation_attempts);
        assert_eq!(
            sim.pool().len() as u64,
            100 + log.injections + log.fragmentations
        );
    }

    #[test]
    fn snapshots_are_normalized() {
        for v in ModelVariant::ALL {
            let mut c = cfg(v, 50);
            c.snapshot_times = vec![10, 50];
            for s in run_model(&c, rng(15)).unwrap() {
                let sum: f64 = s.normalized_wealths.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "{v}: {sum}");
                assert!(s.normalized_wealths.iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn identical_seed_identical_snapshots() {
        let mut c = cfg(ModelVariant::ModelC2, 300);
        c.alpha_mode = AlphaMode::QuenchedPerAgent;
        c.snapshot_times = vec![100, 300];
        let a = run_model(&c, rng(16)).unwrap();
        let b = run_model(&c, rng(16)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn round_based_variants_reject_transaction_units() {
        for v in [
            ModelVariant::ModelA,
            ModelVariant::ModelC1,
            ModelVariant::ModelC2,
        ] {
            let mut c = cfg(v, 10);
            c.schedule_unit = ScheduleUnit::Transaction;
            assert!(matches!(
                c.validate(),
                Err(ConfigError::Invalid {
                    field: "schedule_unit",
                    ..
                })
            ));
        }
        let mut c = cfg(ModelVariant::ModelB, 10);
        c.schedule_unit = ScheduleUnit::Sweep;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn validation_names_the_field() {
        let base = cfg(ModelVariant::ModelA, 10);
        let cases: Vec<(&str, Box<dyn Fn(&mut ModelConfig)>)> = vec![
            ("tau", Box::new(|c| c.tau = 0)),
            ("n0", Box::new(|c| c.n0 = 1)),
            ("bins", Box::new(|c| c.bins = 99)),
            ("split_fraction", Box::new(|c| c.split_fraction = 1.0)),
            ("snapshot_times", Box::new(|c| c.snapshot_times = vec![11])),
            (
                "snapshot_times",
                Box::new(|c| c.snapshot_times = vec![5, 5]),
            ),
            (
                "alpha_mode",
                Box::new(|c| c.alpha_mode = AlphaMode::Fixed(0.0)),
            ),
            ("ensembles", Box::new(|c| c.ensembles = 0)),
        ];
        for (field, mutate) in cases {
            let mut c = base.clone();
            mutate(&mut c);
            match c.validate() {
                Err(ConfigError::Invalid { field: f, .. }) => assert_eq!(f, field),
                other => panic!("{field}: {other:?}"),
            }
        }
    }
}
