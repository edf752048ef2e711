//! Monte Carlo simulation of yard-sale asset-exchange models in which agents
//! enter the market and rich agents fragment, plus the histogram, tail-fit
//! and scaling-collapse analysis applied to their wealth distributions.

// Negated float comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod exchange;
pub mod fitting;
pub mod io;
pub mod models;
pub mod presets;
pub mod stats;

pub use ensemble::{derive_run_seed, run_ensemble, run_ensemble_with_threads, EnsembleResult};
pub use exchange::{AgentPool, AlphaMode, KernelKind};
pub use fitting::{CollapseConvention, CollapseResult, FitFamily, FitResult};
pub use models::{ModelConfig, ModelVariant, ScheduleUnit, Snapshot};
pub use stats::{Ccdf, DensityEstimate};
