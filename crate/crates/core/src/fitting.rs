//! Tail fits, goodness-of-fit metrics and scaling collapse.
//!
//! Both tail families are fitted by linear least squares on the log-log
//! histogram: a power law is a straight line there and a lognormal density
//! is a downward parabola.

use std::f64::consts::{LN_10, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::DensityEstimate;

/// Quantiles of the wealth distribution bounding the default tail window.
pub const DEFAULT_WINDOW_QUANTILES: (f64, f64) = (0.90, 0.999);

/// Minimum number of non-empty bins a fit window must contain.
pub const MIN_FIT_POINTS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("fit window holds {found} non-empty bins, need at least {needed}")]
    TooFewPoints { found: usize, needed: usize },
    #[error("invalid fit window [{0}, {1}]")]
    BadWindow(f64, f64),
    #[error("goodness-of-fit undefined: {0}")]
    MetricUndefined(String),
    #[error("least-squares system is singular")]
    Singular,
    #[error("collapse undefined: {0}")]
    CollapseUndefined(String),
}

impl FitError {
    /// Stable short identifier used in machine-readable output.
    pub fn code(&self) -> &'static str {
        match self {
            FitError::TooFewPoints { .. } => "fit_infeasible",
            FitError::BadWindow(..) => "bad_window",
            FitError::MetricUndefined(_) => "metric_undefined",
            FitError::Singular => "singular",
            FitError::CollapseUndefined(_) => "collapse_undefined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitFamily {
    PowerLaw,
    Lognormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitParams {
    /// `p(x) = amplitude * x^(-tail_exponent)`; the Pareto index is `tail_exponent - 1`.
    PowerLaw { amplitude: f64, tail_exponent: f64 },
    /// `p(x) = amplitude * LogNormal(mu, sigma)(x)`.
    ///
    /// `log_coeffs` are the fitted `log10 p = c0 + c1 log10 x + c2 (log10 x)^2`.
    /// When `c2 >= 0` the parabola does not open downward, no lognormal
    /// matches it, and `amplitude`, `mu`, `sigma` are absent.
    Lognormal {
        amplitude: Option<f64>,
        mu: Option<f64>,
        sigma: Option<f64>,
        log_coeffs: [f64; 3],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: FitFamily,
    pub params: FitParams,
    pub window: (f64, f64),
    pub chi2_per_dof: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

impl FitResult {
    pub fn tail_exponent(&self) -> Option<f64> {
        match self.params {
            FitParams::PowerLaw { tail_exponent, .. } => Some(tail_exponent),
            FitParams::Lognormal { .. } => None,
        }
    }

    /// Predicted density at `x`.
    pub fn predict(&self, x: f64) -> f64 {
        match self.params {
            FitParams::PowerLaw {
                amplitude,
                tail_exponent,
            } => amplitude * x.powf(-tail_exponent),
            FitParams::Lognormal { log_coeffs: c, .. } => {
                let lx = x.log10();
                10f64.powf(c[0] + c[1] * lx + c[2] * lx * lx)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodnessOfFit {
    pub chi2_per_dof: f64,
    pub r_squared: f64,
}

/// Pearson chi-square per degree of freedom on the densities, and the
/// coefficient of determination on their base-10 logarithms.
///
/// `fitted_params` is subtracted from the point count to get the degrees of
/// freedom. Every observed and predicted value must be positive.
pub fn goodness_of_fit(
    observed: &[f64],
    predicted: &[f64],
    fitted_params: usize,
) -> Result<GoodnessOfFit, FitError> {
    if observed.len() != predicted.len() {
        return Err(FitError::MetricUndefined(format!(
            "{} observations vs {} predictions",
            observed.len(),
            predicted.len()
        )));
    }
    let n = observed.len();
    if n <= fitted_params {
        return Err(FitError::MetricUndefined(format!(
            "{n} points leave no degrees of freedom for {fitted_params} parameters"
        )));
    }
    if let Some(p) = predicted.iter().find(|&&p| !(p > 0.0)) {
        return Err(FitError::MetricUndefined(format!(
            "non-positive prediction {p}"
        )));
    }
    if let Some(o) = observed.iter().find(|&&o| !(o > 0.0)) {
        return Err(FitError::MetricUndefined(format!(
            "non-positive observation {o}"
        )));
    }
    let chi2: f64 = observed
        .iter()
        .zip(predicted)
        .map(|(o, p)| (o - p) * (o - p) / p)
        .sum();

    let log_obs: Vec<f64> = observed.iter().map(|o| o.log10()).collect();
    let mean = log_obs.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = log_obs.iter().map(|y| (y - mean) * (y - mean)).sum();
    let ss_res: f64 = log_obs
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p.log10()).powi(2))
        .sum();
    let r_squared = if ss_res == 0.0 {
        1.0
    } else if ss_tot == 0.0 {
        0.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(GoodnessOfFit {
        chi2_per_dof: chi2 / (n - fitted_params) as f64,
        r_squared,
    })
}

/// Bins per decade-quarter must be at least this fraction non-empty for the
/// default window to extend over them.
const MIN_OCCUPANCY: f64 = 0.5;

/// Default tail window.
///
/// Nominally the 0.90 and 0.999 quantiles of the estimated distribution,
/// with two adjustments. The lowest bin is never used: it touches zero
/// wealth and holds the pile of near-bankrupt agents. The upper end stops at
/// the first quarter-decade, above the lower bound, in which fewer than half
/// the bins are non-empty, since fitting only non-empty bins biases the
/// slope once counts become sparse.
pub fn default_window(d: &DensityEstimate) -> (f64, f64) {
    let lower = d
        .quantile(DEFAULT_WINDOW_QUANTILES.0)
        .max(d.bin_center(1.min(d.bins() - 1)));
    let upper = d.quantile(DEFAULT_WINDOW_QUANTILES.1);
    (lower, upper.min(occupancy_cap(d, lower)))
}

/// Left edge of the first quarter-decade block above `from` whose bins are
/// mostly empty, or infinity if there is none.
fn occupancy_cap(d: &DensityEstimate, from: f64) -> f64 {
    if !(from > 0.0) {
        return f64::INFINITY;
    }
    let step = 10f64.powf(0.25);
    let mut block_lo = from;
    let mut i = 0;
    while i < d.bins() && d.bin_center(i) < from {
        i += 1;
    }
    while i < d.bins() {
        let block_hi = block_lo * step;
        let (mut filled, mut total) = (0usize, 0usize);
        while i < d.bins() && d.bin_center(i) < block_hi {
            total += 1;
            if d.densities[i] > 0.0 {
                filled += 1;
            }
            i += 1;
        }
        if total > 0 && (filled as f64) < MIN_OCCUPANCY * total as f64 {
            return block_lo;
        }
        block_lo = block_hi;
    }
    f64::INFINITY
}

/// Non-empty bins whose centers lie in the window, as (center, density).
fn window_points(d: &DensityEstimate, window: (f64, f64)) -> Result<Vec<(f64, f64)>, FitError> {
    let (x_min, x_max) = window;
    if !(x_min < x_max) || !(x_min > 0.0) || !x_max.is_finite() {
        return Err(FitError::BadWindow(x_min, x_max));
    }
    let pts: Vec<(f64, f64)> = (0..d.bins())
        .map(|i| (d.bin_center(i), d.densities[i]))
        .filter(|&(x, p)| p > 0.0 && x >= x_min && x <= x_max)
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(FitError::TooFewPoints {
            found: pts.len(),
            needed: MIN_FIT_POINTS,
        });
    }
    Ok(pts)
}

/// Ordinary least squares of `ys` on the polynomial basis `1, x, .., x^degree`.
/// The abscissas are centered before solving for conditioning.
fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Result<Vec<f64>, FitError> {
    let m = degree + 1;
    let shift = xs.iter().sum::<f64>() / xs.len() as f64;
    let mut a = vec![vec![0.0; m + 1]; m];
    for (&x, &y) in xs.iter().zip(ys) {
        let z = x - shift;
        let mut pow = vec![1.0; 2 * m - 1];
        for k in 1..pow.len() {
            pow[k] = pow[k - 1] * z;
        }
        for r in 0..m {
            for c in 0..m {
                a[r][c] += pow[r + c];
            }
            a[r][m] += pow[r] * y;
        }
    }
    let centered = solve_augmented(a)?;
    // expand sum_k b_k (x - shift)^k back into powers of x
    let mut coeffs = vec![0.0; m];
    for (k, &b) in centered.iter().enumerate() {
        let mut binom = 1.0;
        for j in 0..=k {
            coeffs[j] += b * binom * (-shift).powi((k - j) as i32);
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
    }
    Ok(coeffs)
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve_augmented(mut a: Vec<Vec<f64>>) -> Result<Vec<f64>, FitError> {
    let m = a.len();
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(FitError::Singular);
        }
        a.swap(col, pivot);
        for row in col + 1..m {
            let f = a[row][col] / a[col][col];
            for k in col..=m {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let s: f64 = (row + 1..m).map(|k| a[row][k] * x[k]).sum();
        x[row] = (a[row][m] - s) / a[row][row];
    }
    Ok(x)
}

fn finish(
    family: FitFamily,
    params: FitParams,
    window: (f64, f64),
    pts: &[(f64, f64)],
    fitted_params: usize,
) -> Result<FitResult, FitError> {
    let mut fit = FitResult {
        family,
        params,
        window,
        chi2_per_dof: 0.0,
        r_squared: 0.0,
        points_used: pts.len(),
    };
    let observed: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let predicted: Vec<f64> = pts.iter().map(|p| fit.predict(p.0)).collect();
    let g = goodness_of_fit(&observed, &predicted, fitted_params)?;
    fit.chi2_per_dof = g.chi2_per_dof;
    fit.r_squared = g.r_squared;
    Ok(fit)
}

/// Straight-line fit of log10 density against log10 bin center.
pub fn fit_power_law(d: &DensityEstimate, window: (f64, f64)) -> Result<FitResult, FitError> {
    let pts = window_points(d, window)?;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.log10()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.log10()).collect();
    let c = polyfit(&xs, &ys, 1)?;
    let params = FitParams::PowerLaw {
        amplitude: 10f64.powf(c[0]),
        tail_exponent: -c[1],
    };
    finish(FitFamily::PowerLaw, params, window, &pts, 2)
}

/// Parabola fit of log10 density against log10 bin center, mapped to
/// lognormal parameters of the natural logarithm of x.
pub fn fit_lognormal(d: &DensityEstimate, window: (f64, f64)) -> Result<FitResult, FitError> {
    let pts = window_points(d, window)?;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.log10()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.log10()).collect();
    let c = polyfit(&xs, &ys, 2)?;
    let log_coeffs = [c[0], c[1], c[2]];
    // ln p = b0 + b1 u + b2 u^2 with u = ln x
    let (b0, b1, b2) = (c[0] * LN_10, c[1], c[2] / LN_10);
    let (amplitude, mu, sigma) = if b2 < 0.0 {
        let var = -1.0 / (2.0 * b2);
        let mu = (b1 + 1.0) * var;
        let sigma = var.sqrt();
        let ln_amp = b0 + (sigma * (2.0 * PI).sqrt()).ln() + mu * mu / (2.0 * var);
        (Some(ln_amp.exp()), Some(mu), Some(sigma))
    } else {
        (None, None, None)
    };
    let params = FitParams::Lognormal {
        amplitude,
        mu,
        sigma,
        log_coeffs,
    };
    finish(FitFamily::Lognormal, params, window, &pts, 3)
}

/// How time enters the rescaled abscissa.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CollapseConvention {
    /// Plot `p * x^(-alpha)` against `x^alpha * t`.
    Literal,
    /// Plot `p * x^alpha` against `x^(-alpha) * t`.
    Mirrored,
}

impl CollapseConvention {
    fn signed(self, alpha: f64) -> f64 {
        match self {
            CollapseConvention::Literal => alpha,
            CollapseConvention::Mirrored => -alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseCurve {
    pub time: u64,
    /// (scaled_x, scaled_y), ascending in scaled_x.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseResult {
    pub scaling_exponent: f64,
    pub convention: CollapseConvention,
    pub curves: Vec<CollapseCurve>,
    /// Mean squared log10 deviation between curve pairs on their common support.
    pub quality: f64,
}

/// Points per curve pair at which the interpolated curves are compared.
const COLLAPSE_GRID: usize = 200;

pub fn scaling_collapse(
    snapshots: &[(u64, DensityEstimate)],
    alpha: f64,
    convention: CollapseConvention,
) -> Result<CollapseResult, FitError> {
    if snapshots.len() < 2 {
        return Err(FitError::CollapseUndefined(
            "need at least two snapshots".into(),
        ));
    }
    if alpha == 0.0 || !alpha.is_finite() {
        return Err(FitError::CollapseUndefined(format!("exponent {alpha}")));
    }
    let a = convention.signed(alpha);
    let curves: Vec<CollapseCurve> = snapshots
        .iter()
        .map(|(t, d)| {
            let mut points: Vec<(f64, f64)> = (0..d.bins())
                .filter(|&i| d.densities[i] > 0.0 && d.bin_center(i) > 0.0)
                .map(|i| {
                    let x = d.bin_center(i);
                    (x.powf(a) * *t as f64, d.densities[i] * x.powf(-a))
                })
                .collect();
            points.sort_by(|p, q| p.0.total_cmp(&q.0));
            CollapseCurve { time: *t, points }
        })
        .collect();

    let logs: Vec<Vec<(f64, f64)>> = curves
        .iter()
        .map(|c| {
            c.points
                .iter()
                .map(|&(x, y)| (x.log10(), y.log10()))
                .collect()
        })
        .collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..logs.len() {
        for j in i + 1..logs.len() {
            if let Some(q) = pair_deviation(&logs[i], &logs[j]) {
                total += q;
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        return Err(FitError::CollapseUndefined("no overlapping support".into()));
    }
    Ok(CollapseResult {
        scaling_exponent: alpha,
        convention,
        curves,
        quality: total / pairs as f64,
    })
}

fn pair_deviation(a: &[(f64, f64)], b: &[(f64, f64)]) -> Option<f64> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let lo = a[0].0.max(b[0].0);
    let hi = a[a.len() - 1].0.min(b[b.len() - 1].0);
    if !(hi > lo) {
        return None;
    }
    let sum: f64 = (0..COLLAPSE_GRID)
        .map(|k| {
            let x = lo + (hi - lo) * k as f64 / (COLLAPSE_GRID - 1) as f64;
            let d = interpolate(a, x) - interpolate(b, x);
            d * d
        })
        .sum();
    Some(sum / COLLAPSE_GRID as f64)
}

/// Piecewise-linear interpolation on a curve sorted by abscissa.
fn interpolate(curve: &[(f64, f64)], x: f64) -> f64 {
    let k = curve.partition_point(|p| p.0 < x);
    if k == 0 {
        return curve[0].1;
    }
    if k == curve.len() {
        return curve[k - 1].1;
    }
    let (x0, y0) = curve[k - 1];
    let (x1, y1) = curve[k];
    if x1 == x0 {
        return y1;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Evaluates the collapse at every grid exponent and keeps the best.
/// Ties go to the smaller exponent, so grid order does not matter.
pub fn collapse_search(
    snapshots: &[(u64, DensityEstimate)],
    alpha_grid: &[f64],
    convention: CollapseConvention,
) -> Result<(f64, CollapseResult), FitError> {
    if alpha_grid.is_empty() {
        return Err(FitError::CollapseUndefined("empty exponent grid".into()));
    }
    let mut best: Option<CollapseResult> = None;
    let mut last_err = None;
    for &alpha in alpha_grid {
        match scaling_collapse(snapshots, alpha, convention) {
            Ok(r) => {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        r.quality < b.quality
                            || (r.quality == b.quality && r.scaling_exponent < b.scaling_exponent)
                    }
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some(r) => Ok((r.scaling_exponent, r)),
        None => Err(last_err.unwrap()),
    }
}

/// Inclusive grid `start, start + step, ..` up to `stop`.
pub fn exponent_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || stop < start {
        return Vec::new();
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| start + k as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Density with the given values at bin centers on [0, hi].
    fn tabulated(bins: usize, hi: f64, f: impl Fn(f64) -> f64) -> DensityEstimate {
        let w = hi / bins as f64;
        DensityEstimate {
            lo: 0.0,
            hi,
            bin_width: w,
            densities: (0..bins).map(|i| f((i as f64 + 0.5) * w)).collect(),
            sample_count: 1,
        }
    }

    #[test]
    fn default_window_is_quantile_range_on_well_sampled_tail() {
        let d = tabulated(1000, 1.0, |x| (-5.0 * x).exp());
        let (lo, hi) = default_window(&d);
        assert_eq!(lo, d.quantile(0.90));
        assert_eq!(hi, d.quantile(0.999));
    }

    #[test]
    fn default_window_skips_the_bin_at_zero() {
        // almost everything in the first bin, a thin tail above it
        let d = tabulated(1000, 1.0, |x| if x < 1e-3 { 1e7 } else { x.powf(-1.5) });
        assert_eq!(d.quantile(0.90), d.bin_center(0));
        assert_eq!(default_window(&d).0, d.bin_center(1));
    }

    #[test]
    fn default_window_stops_where_bins_turn_sparse() {
        // every bin filled up to 0.1, one in four beyond
        let d = tabulated(10_000, 1.0, |x| {
            let i = (x * 10_000.0) as usize;
            match (x < 0.1, i.is_multiple_of(4)) {
                (true, _) => 1.0,
                (false, true) => 0.01,
                (false, false) => 0.0,
            }
        });
        assert!(d.quantile(0.999) > 0.5);
        let (lo, hi) = default_window(&d);
        assert!(lo < 0.1);
        assert!(hi >= lo && hi < 0.1 * 10f64.powf(0.25), "{hi}");
    }

    #[test]
    fn exact_power_law_recovered() {
        let d = tabulated(1000, 10.0, |x| 3.0 * x.powf(-2.5));
        let fit = fit_power_law(&d, (0.5, 9.0)).unwrap();
        assert!((fit.tail_exponent().unwrap() - 2.5).abs() < 1e-6);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit.chi2_per_dof < 1e-12);
        match fit.params {
            FitParams::PowerLaw { amplitude, .. } => assert!((amplitude - 3.0).abs() < 1e-6),
            _ => unreachable!(),
        }
    }

    fn lognormal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
        let z = (x.ln() - mu) / sigma;
        (-0.5 * z * z).exp() / (x * sigma * (2.0 * PI).sqrt())
    }

    #[test]
    fn exact_lognormal_recovered() {
        let d = tabulated(2000, 20.0, |x| 0.7 * lognormal_pdf(x, 1.0, 0.6));
        let fit = fit_lognormal(&d, (0.5, 15.0)).unwrap();
        match fit.params {
            FitParams::Lognormal {
                amplitude: Some(a),
                mu: Some(mu),
                sigma: Some(s),
                ..
            } => {
                assert!((mu - 1.0).abs() < 1e-6, "mu {mu}");
                assert!((s - 0.6).abs() < 1e-6, "sigma {s}");
                assert!((a - 0.7).abs() < 1e-6, "amplitude {a}");
            }
            ref p => panic!("degenerate fit {p:?}"),
        }
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_law_data_lognormal_is_degenerate_tie() {
        // The parabola contains the straight line, so on exact power-law data
        // both fits are perfect and the lognormal curvature vanishes.
        let d = tabulated(1000, 10.0, |x| x.powf(-2.5));
        let pl = fit_power_law(&d, (0.5, 9.0)).unwrap();
        let ln = fit_lognormal(&d, (0.5, 9.0)).unwrap();
        assert!(ln.r_squared <= pl.r_squared + 1e-12);
        match ln.params {
            FitParams::Lognormal { log_coeffs, .. } => assert!(log_coeffs[2].abs() < 1e-9),
            _ => unreachable!(),
        }
    }

    #[test]
    fn lognormal_data_favours_lognormal() {
        let d = tabulated(2000, 20.0, |x| lognormal_pdf(x, 1.0, 0.6));
        let pl = fit_power_law(&d, (1.0, 15.0)).unwrap();
        let ln = fit_lognormal(&d, (1.0, 15.0)).unwrap();
        assert!(ln.r_squared > pl.r_squared);
        assert!(ln.chi2_per_dof < pl.chi2_per_dof);
    }

    #[test]
    fn too_few_points_is_infeasible() {
        let d = tabulated(100, 1.0, |x| if x < 0.04 { 1.0 } else { 0.0 });
        let err = fit_power_law(&d, (0.001, 0.9)).unwrap_err();
        assert_eq!(
            err,
            FitError::TooFewPoints {
                found: 4,
                needed: 5
            }
        );
        assert_eq!(err.code(), "fit_infeasible");
        assert!(matches!(
            fit_power_law(&d, (0.5, 0.2)),
            Err(FitError::BadWindow(..))
        ));
    }

    #[test]
    fn goodness_perfect_and_constant() {
        let g = goodness_of_fit(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!((g.chi2_per_dof, g.r_squared), (0.0, 1.0));
        let g = goodness_of_fit(&[5.0; 6], &[5.0; 6], 2).unwrap();
        assert_eq!(g.chi2_per_dof, 0.0);
    }

    #[test]
    fn goodness_matches_hand_computation() {
        let pred = [2.0, 4.0, 8.0, 16.0, 32.0];
        let resid = [0.5, -1.0, 2.0, -0.25, 3.0];
        let obs: Vec<f64> = pred.iter().zip(&resid).map(|(p, r)| p + r).collect();
        // 0.25/2 + 1/4 + 4/8 + 0.0625/16 + 9/32 = 0.125 + 0.25 + 0.5 + 0.00390625 + 0.28125
        let expected_chi2 = 1.16015625 / 3.0;
        let g = goodness_of_fit(&obs, &pred, 2).unwrap();
        assert!((g.chi2_per_dof - expected_chi2).abs() < 1e-12);

        let ly: Vec<f64> = obs.iter().map(|o: &f64| o.log10()).collect();
        let mean = ly.iter().sum::<f64>() / 5.0;
        let ss_tot: f64 = ly.iter().map(|y| (y - mean).powi(2)).sum();
        let ss_res: f64 = ly
            .iter()
            .zip(&pred)
            .map(|(y, p)| (y - p.log10()).powi(2))
            .sum();
        assert!((g.r_squared - (1.0 - ss_res / ss_tot)).abs() < 1e-12);
    }

    #[test]
    fn goodness_rejects_non_positive_prediction() {
        assert!(matches!(
            goodness_of_fit(&[1.0, 2.0, 3.0], &[1.0, 0.0, 3.0], 1),
            Err(FitError::MetricUndefined(_))
        ));
        assert!(goodness_of_fit(&[1.0, 2.0], &[1.0, 2.0], 2).is_err());
    }

    /// p(x, t) = x^a g(x^a t) with g(z) = 1 / (1 + z)^2.
    fn scaling_family(a: f64, times: &[u64]) -> Vec<(u64, DensityEstimate)> {
        times
            .iter()
            .map(|&t| {
                let d = tabulated(1000, 1.0, |x| {
                    let z = x.powf(a) * t as f64;
                    x.powf(a) / (1.0 + z).powi(2)
                });
                (t, d)
            })
            .collect()
    }

    #[test]
    fn identical_snapshots_collapse_perfectly() {
        let fam = scaling_family(2.0, &[10]);
        let snaps = vec![fam[0].clone(), fam[0].clone()];
        let r = scaling_collapse(&snaps, 1.3, CollapseConvention::Literal).unwrap();
        assert_eq!(r.quality, 0.0);
    }

    #[test]
    fn collapse_is_sharp_at_generating_exponent() {
        let snaps = scaling_family(2.0, &[1, 10, 100]);
        let q = |a| {
            scaling_collapse(&snaps, a, CollapseConvention::Literal)
                .unwrap()
                .quality
        };
        let best = q(2.0);
        assert!(best * 10.0 < q(1.0), "{best} vs {}", q(1.0));
        assert!(best * 10.0 < q(3.0), "{best} vs {}", q(3.0));
        let mirrored = scaling_collapse(&snaps, -2.0, CollapseConvention::Mirrored).unwrap();
        assert!((mirrored.quality - best).abs() < 1e-15);
    }

    #[test]
    fn collapse_needs_two_snapshots_and_nonzero_exponent() {
        let snaps = scaling_family(2.0, &[1, 10]);
        assert!(scaling_collapse(&snaps[..1], 2.0, CollapseConvention::Literal).is_err());
        assert!(scaling_collapse(&snaps, 0.0, CollapseConvention::Literal).is_err());
    }

    #[test]
    fn disjoint_curves_have_no_collapse() {
        let mk = |lo: f64| DensityEstimate {
            lo,
            hi: lo + 1.0,
            bin_width: 0.1,
            densities: vec![1.0; 10],
            sample_count: 10,
        };
        let snaps = vec![(1, mk(0.0)), (1, mk(10.0))];
        assert!(matches!(
            scaling_collapse(&snaps, 1.0, CollapseConvention::Literal),
            Err(FitError::CollapseUndefined(_))
        ));
    }

    #[test]
    fn search_finds_generating_exponent_in_any_order() {
        let snaps = scaling_family(2.0, &[1, 10, 100]);
        let grid = exponent_grid(0.5, 3.5, 0.25);
        assert!(grid.contains(&2.0));
        let (best, _) = collapse_search(&snaps, &grid, CollapseConvention::Literal).unwrap();
        assert_eq!(best, 2.0);
        let reversed: Vec<f64> = grid.iter().rev().copied().collect();
        let (best_rev, _) =
            collapse_search(&snaps, &reversed, CollapseConvention::Literal).unwrap();
        assert_eq!(best_rev, 2.0);
        let (single, _) = collapse_search(&snaps, &[1.1], CollapseConvention::Literal).unwrap();
        assert_eq!(single, 1.1);
        assert!(collapse_search(&snaps, &[], CollapseConvention::Literal).is_err());
    }

    #[test]
    fn generating_exponent_is_local_minimum() {
        let snaps = scaling_family(1.5, &[2, 20, 200]);
        let grid = exponent_grid(1.0, 2.0, 0.125);
        let qs: Vec<f64> = grid
            .iter()
            .map(|&a| {
                scaling_collapse(&snaps, a, CollapseConvention::Literal)
                    .unwrap()
                    .quality
            })
            .collect();
        let k = grid.iter().position(|&a| a == 1.5).unwrap();
        assert!(qs[k] < qs[k - 1] && qs[k] < qs[k + 1]);
    }

    #[test]
    fn grid_parsing_is_inclusive() {
        assert_eq!(exponent_grid(1.0, 2.0, 0.5), vec![1.0, 1.5, 2.0]);
        assert!(exponent_grid(1.0, 0.0, 0.5).is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn power_law_exponent_is_scale_invariant(
                gamma in 1.2f64..3.5,
                scale in 0.01f64..100.0,
                noise_seed in 0u64..1000,
            ) {
                let jitter = |i: usize| 1.0 + 0.05 * (((i as u64 * 2654435761 + noise_seed) % 1000) as f64 / 1000.0 - 0.5);
                let base = tabulated(500, 1.0, |x| x.powf(-gamma));
                let mut d = base.clone();
                for (i, p) in d.densities.iter_mut().enumerate() { *p *= jitter(i); }
                let mut scaled = d.clone();
                scaled.lo *= scale;
                scaled.hi *= scale;
                scaled.bin_width *= scale;
                let a = fit_power_law(&d, (0.1, 0.9)).unwrap();
                let b = fit_power_law(&scaled, (0.1 * scale, 0.9 * scale)).unwrap();
                prop_assert_eq!(a.points_used, b.points_used);
                prop_assert!((a.tail_exponent().unwrap() - b.tail_exponent().unwrap()).abs() < 1e-9);
            }

            #[test]
            fn r_squared_invariant_under_log_shift(
                obs in prop::collection::vec(0.01f64..100.0, 5..40),
                shift in -3.0f64..3.0,
            ) {
                let pred: Vec<f64> = obs.iter().enumerate().map(|(i, o)| o * (1.0 + 0.1 * ((i % 3) as f64 - 1.0))).collect();
                let k = 10f64.powf(shift);
                let so: Vec<f64> = obs.iter().map(|o| o * k).collect();
                let sp: Vec<f64> = pred.iter().map(|p| p * k).collect();
                let g1 = goodness_of_fit(&obs, &pred, 2).unwrap();
                let g2 = goodness_of_fit(&so, &sp, 2).unwrap();
                prop_assert!((g1.r_squared - g2.r_squared).abs() < 1e-9);
            }

            #[test]
            fn each_family_wins_on_its_own_data(mu in -1.0f64..1.0, sigma in 0.3f64..1.0, gamma in 1.5f64..3.0) {
                let ln = tabulated(1000, 10.0, |x| lognormal_pdf(x, mu, sigma));
                let w = (0.2, 8.0);
                if let (Ok(a), Ok(b)) = (fit_lognormal(&ln, w), fit_power_law(&ln, w)) {
                    prop_assert!(a.r_squared >= b.r_squared);
                }
                let pl = tabulated(1000, 10.0, |x| x.powf(-gamma));
                let a = fit_power_law(&pl, w).unwrap();
                let b = fit_lognormal(&pl, w).unwrap();
                prop_assert!(a.r_squared >= b.r_squared - 1e-12);
            }
        }
    }
}
