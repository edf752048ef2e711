//! Pairwise exchange kernels and the agent pool they act on.
//!
//! Two kernels are provided: the yard-sale rule, where the stake is a
//! fraction of the poorer agent's wealth and a fair coin picks the winner,
//! and the theft-fraud rule, where the pair's combined wealth is reshuffled
//! by a uniform fraction.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExchangeError {
    #[error("stake fraction {0} outside (0, 1]")]
    InvalidAlpha(f64),
    #[error("split fraction {0} outside [0, 1]")]
    InvalidEpsilon(f64),
    #[error("negative or non-finite wealth {0}")]
    InvalidWealth(f64),
}

/// How the stake fraction of a yard-sale transaction is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlphaMode {
    Fixed(f64),
    /// Fresh draw from (0, 1] on every transaction.
    PerTransactionUniform,
    /// Every agent carries its own fraction, drawn once when it is created.
    /// The poorer agent's fraction applies, since its wealth is at stake.
    QuenchedPerAgent,
}

impl AlphaMode {
    pub fn validate(&self) -> Result<(), ExchangeError> {
        match *self {
            AlphaMode::Fixed(a) if !(a > 0.0 && a <= 1.0) => Err(ExchangeError::InvalidAlpha(a)),
            _ => Ok(()),
        }
    }
}

impl Default for AlphaMode {
    fn default() -> Self {
        AlphaMode::Fixed(0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    YardSale,
    TheftFraud,
}

/// Uniform draw on (0, 1].
#[inline]
pub(crate) fn unit_open_closed<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Yard-sale update of one pair.
///
/// The stake `alpha * min(x_i, x_j)` is formed once, added to the winner and
/// subtracted from the loser, so the pair total is unchanged up to the two
/// roundings and the poorer agent can never go negative.
pub fn ys_exchange(
    x_i: f64,
    x_j: f64,
    alpha: f64,
    winner_is_i: bool,
) -> Result<(f64, f64), ExchangeError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(ExchangeError::InvalidAlpha(alpha));
    }
    check_wealth(x_i)?;
    check_wealth(x_j)?;
    let dx = alpha * x_i.min(x_j);
    Ok(if winner_is_i {
        (x_i + dx, x_j - dx)
    } else {
        (x_i - dx, x_j + dx)
    })
}

/// Theft-fraud update: agent `i` ends up with `epsilon` of the pair's
/// combined wealth and agent `j` with the remainder.
pub fn tf_exchange(x_i: f64, x_j: f64, epsilon: f64) -> Result<(f64, f64), ExchangeError> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(ExchangeError::InvalidEpsilon(epsilon));
    }
    check_wealth(x_i)?;
    check_wealth(x_j)?;
    let sum = x_i + x_j;
    let share = epsilon * sum;
    Ok((share, sum - share))
}

fn check_wealth(x: f64) -> Result<(), ExchangeError> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(ExchangeError::InvalidWealth(x))
    }
}

/// Two distinct indices in `0..pool_size`, each marginally uniform.
///
/// Panics if `pool_size < 2`.
#[inline]
pub fn pick_distinct_pair<R: Rng + ?Sized>(pool_size: usize, rng: &mut R) -> (usize, usize) {
    assert!(pool_size >= 2, "a transaction needs at least two agents");
    let i = rng.random_range(0..pool_size);
    let mut j = rng.random_range(0..pool_size - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

/// Wealth of every living agent, with a running total.
///
/// Transactions conserve the total, so the cached value is only touched when
/// agents are added or wealth enters the system.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentPool {
    wealths: Vec<f64>,
    /// Per-agent stake fractions; empty unless the pool was built for
    /// [`AlphaMode::QuenchedPerAgent`].
    alphas: Vec<f64>,
    cached_total: f64,
}

impl AgentPool {
    /// Pool with the given wealths and no per-agent stake fractions.
    pub fn new(wealths: Vec<f64>) -> Result<Self, ExchangeError> {
        for &w in &wealths {
            check_wealth(w)?;
        }
        let cached_total = wealths.iter().sum();
        Ok(Self {
            wealths,
            alphas: Vec::new(),
            cached_total,
        })
    }

    /// Pool with explicit per-agent stake fractions.
    pub fn with_alphas(wealths: Vec<f64>, alphas: Vec<f64>) -> Result<Self, ExchangeError> {
        assert_eq!(wealths.len(), alphas.len(), "one stake fraction per agent");
        for &a in &alphas {
            if !(a > 0.0 && a <= 1.0) {
                return Err(ExchangeError::InvalidAlpha(a));
            }
        }
        let mut pool = Self::new(wealths)?;
        pool.alphas = alphas;
        Ok(pool)
    }

    /// `n` agents with wealth drawn uniformly from [0, 1).
    pub fn uniform<R: Rng + ?Sized>(n: usize, alpha_mode: AlphaMode, rng: &mut R) -> Self {
        let mut pool = Self {
            wealths: Vec::with_capacity(n),
            alphas: Vec::new(),
            cached_total: 0.0,
        };
        for _ in 0..n {
            let w = rng.random::<f64>();
            pool.push_agent(w, alpha_mode, rng);
        }
        pool
    }

    /// Appends an agent. Under quenched stake fractions the newcomer draws its own.
    pub fn push_agent<R: Rng + ?Sized>(&mut self, wealth: f64, alpha_mode: AlphaMode, rng: &mut R) {
        debug_assert!(wealth >= 0.0);
        self.wealths.push(wealth);
        if alpha_mode == AlphaMode::QuenchedPerAgent {
            self.alphas.push(unit_open_closed(rng));
        }
        self.cached_total += wealth;
    }

    /// Splits agent `k`: it keeps `split_fraction` of its wealth and a new
    /// agent receives the exact remainder. The total is untouched.
    pub(crate) fn split_agent<R: Rng + ?Sized>(
        &mut self,
        k: usize,
        split_fraction: f64,
        alpha_mode: AlphaMode,
        rng: &mut R,
    ) {
        let w = self.wealths[k];
        let kept = split_fraction * w;
        self.wealths[k] = kept;
        self.wealths.push(w - kept);
        if alpha_mode == AlphaMode::QuenchedPerAgent {
            self.alphas.push(unit_open_closed(rng));
        }
    }

    pub fn len(&self) -> usize {
        self.wealths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wealths.is_empty()
    }

    pub fn wealths(&self) -> &[f64] {
        &self.wealths
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn total(&self) -> f64 {
        self.cached_total
    }

    /// Sum of wealths computed from scratch.
    pub fn recompute_total(&self) -> f64 {
        self.wealths.iter().sum()
    }

    /// One transaction between a uniformly chosen distinct pair.
    ///
    /// Panics if the pool has fewer than two agents, or if quenched stake
    /// fractions are requested on a pool that does not carry them.
    #[inline]
    pub fn transact<R: Rng + ?Sized>(
        &mut self,
        kernel: KernelKind,
        alpha_mode: AlphaMode,
        rng: &mut R,
    ) {
        let (i, j) = pick_distinct_pair(self.wealths.len(), rng);
        match kernel {
            KernelKind::YardSale => {
                let i_wins: bool = rng.random();
                self.yard_sale_pair(i, j, alpha_mode, i_wins, rng);
            }
            KernelKind::TheftFraud => {
                let eps: f64 = rng.random();
                let sum = self.wealths[i] + self.wealths[j];
                let share = eps * sum;
                self.wealths[i] = share;
                self.wealths[j] = sum - share;
            }
        }
    }

    #[inline]
    fn yard_sale_pair<R: Rng + ?Sized>(
        &mut self,
        i: usize,
        j: usize,
        alpha_mode: AlphaMode,
        i_wins: bool,
        rng: &mut R,
    ) {
        let (xi, xj) = (self.wealths[i], self.wealths[j]);
        let poorer = if xi <= xj { i } else { j };
        let alpha = match alpha_mode {
            AlphaMode::Fixed(a) => a,
            AlphaMode::PerTransactionUniform => unit_open_closed(rng),
            AlphaMode::QuenchedPerAgent => self.alphas[poorer],
        };
        let dx = alpha * self.wealths[poorer];
        let (win, lose) = if i_wins { (i, j) } else { (j, i) };
        self.wealths[win] += dx;
        self.wealths[lose] -= dx;
    }

    /// Yard-sale transaction on a chosen pair with a chosen winner.
    pub fn transact_pair<R: Rng + ?Sized>(
        &mut self,
        i: usize,
        j: usize,
        alpha_mode: AlphaMode,
        i_wins: bool,
        rng: &mut R,
    ) {
        assert_ne!(i, j, "a transaction needs two distinct agents");
        self.yard_sale_pair(i, j, alpha_mode, i_wins, rng);
    }
}
