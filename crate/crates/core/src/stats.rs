//! Uniform-bin density estimation, complementary CDFs and summaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::Snapshot;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("no samples")]
    Empty,
    #[error("invalid range [{lo}, {hi}] or bin count {bins}")]
    BadBinning { lo: f64, hi: f64, bins: usize },
    #[error("densities do not share a binning")]
    MismatchedBinning,
}

/// Histogram estimate of a probability density on uniform bins.
///
/// Each density is `count / (sample_count * bin_width)`. Samples outside
/// `[lo, hi]` count towards `sample_count` without landing in a bin, so the
/// estimate integrates to the in-range fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub lo: f64,
    pub hi: f64,
    pub bin_width: f64,
    pub densities: Vec<f64>,
    pub sample_count: u64,
}

impl DensityEstimate {
    pub fn bins(&self) -> usize {
        self.densities.len()
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.bin_width
    }

    pub fn left_edge(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.bin_width
    }

    /// Total probability mass held by the bins.
    pub fn mass(&self) -> f64 {
        self.densities.iter().sum::<f64>() * self.bin_width
    }

    fn same_binning(&self, other: &Self) -> bool {
        self.lo == other.lo && self.hi == other.hi && self.bins() == other.bins()
    }

    /// Smallest bin center at which the cumulative mass reaches `q`
    /// (of the mass held by the bins).
    pub fn quantile(&self, q: f64) -> f64 {
        let total: f64 = self.densities.iter().sum();
        let target = q * total;
        let mut acc = 0.0;
        for (i, &d) in self.densities.iter().enumerate() {
            acc += d;
            if acc >= target && d > 0.0 {
                return self.bin_center(i);
            }
        }
        self.bin_center(self.bins() - 1)
    }
}

/// Bin index of `x` on `bins` uniform bins over `[lo, hi]`, right edge inclusive.
#[inline]
fn bin_index(x: f64, lo: f64, hi: f64, bins: usize) -> Option<usize> {
    if !(x >= lo && x <= hi) {
        return None;
    }
    let i = ((x - lo) / (hi - lo) * bins as f64) as usize;
    Some(i.min(bins - 1))
}

/// Raw bin counts, accumulated across calls. Used to histogram large pools
/// without building a normalized estimate per run.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    lo: f64,
    hi: f64,
    counts: Vec<u64>,
    samples: u64,
}

impl Histogram {
    pub fn new(bins: usize, lo: f64, hi: f64) -> Result<Self, StatsError> {
        if bins == 0 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(StatsError::BadBinning { lo, hi, bins });
        }
        Ok(Self {
            lo,
            hi,
            counts: vec![0; bins],
            samples: 0,
        })
    }

    pub fn add(&mut self, x: f64) {
        self.samples += 1;
        if let Some(i) = bin_index(x, self.lo, self.hi, self.counts.len()) {
            self.counts[i] += 1;
        }
    }

    pub fn extend(&mut self, xs: impl IntoIterator<Item = f64>) {
        for x in xs {
            self.add(x);
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn to_density(&self) -> Result<DensityEstimate, StatsError> {
        if self.samples == 0 {
            return Err(StatsError::Empty);
        }
        let bins = self.counts.len();
        let bin_width = (self.hi - self.lo) / bins as f64;
        let norm = self.samples as f64 * bin_width;
        Ok(DensityEstimate {
            lo: self.lo,
            hi: self.hi,
            bin_width,
            densities: self.counts.iter().map(|&c| c as f64 / norm).collect(),
            sample_count: self.samples,
        })
    }
}

pub fn estimate_density(
    samples: &[f64],
    bins: usize,
    lo: f64,
    hi: f64,
) -> Result<DensityEstimate, StatsError> {
    let mut h = Histogram::new(bins, lo, hi)?;
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    h.extend(samples.iter().copied());
    h.to_density()
}

/// Complementary cumulative distribution evaluated at left bin edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ccdf {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
}

impl Ccdf {
    /// Linear interpolation between stored points; clamps outside the range.
    pub fn at(&self, x: f64) -> f64 {
        match self.xs.iter().position(|&xi| xi > x) {
            Some(0) => self.values[0],
            None => *self.values.last().unwrap(),
            Some(k) => {
                let (x0, x1) = (self.xs[k - 1], self.xs[k]);
                let t = (x - x0) / (x1 - x0);
                self.values[k - 1] + t * (self.values[k] - self.values[k - 1])
            }
        }
    }
}

/// Right-to-left running sum of `density * bin_width`.
pub fn ccdf_from_density(d: &DensityEstimate) -> Ccdf {
    let n = d.bins();
    let mut values = vec![0.0; n];
    let mut acc = 0.0;
    for i in (0..n).rev() {
        acc += d.densities[i] * d.bin_width;
        values[i] = acc;
    }
    Ccdf {
        xs: (0..n).map(|i| d.left_edge(i)).collect(),
        values,
    }
}

/// Largest normalized wealth in a snapshot.
pub fn max_share(snapshot: &Snapshot) -> f64 {
    snapshot
        .normalized_wealths
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Sample-count-weighted average of densities sharing one binning.
pub fn merge_densities(ds: &[DensityEstimate]) -> Result<DensityEstimate, StatsError> {
    let first = ds.first().ok_or(StatsError::Empty)?;
    if ds.iter().any(|d| !d.same_binning(first)) {
        return Err(StatsError::MismatchedBinning);
    }
    let total: u64 = ds.iter().map(|d| d.sample_count).sum();
    if total == 0 {
        return Err(StatsError::Empty);
    }
    let mut densities = vec![0.0; first.bins()];
    for d in ds {
        let w = d.sample_count as f64 / total as f64;
        for (acc, &x) in densities.iter_mut().zip(&d.densities) {
            *acc += w * x;
        }
    }
    Ok(DensityEstimate {
        lo: first.lo,
        hi: first.hi,
        bin_width: first.bin_width,
        densities,
        sample_count: total,
    })
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `samples` and an exponential distribution with the given mean.
pub fn ks_distance_exponential(samples: &[f64], mean: f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 1.0 - (-x / mean).exp();
            let below = i as f64 / n;
            let above = (i + 1) as f64 / n;
            (f - below).abs().max((above - f).abs())
        })
        .fold(0.0, f64::max)
}
