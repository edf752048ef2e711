//! Config files, density CSVs, summary JSON and run manifests.
//!
//! The config format is one `key: value` pair per line, keys named after the
//! [`ModelConfig`] fields, `#` starting a comment. Doubles are written in
//! shortest round-trip form in configs and JSON, and with 17 significant
//! digits in CSVs, so every output reads back to the same bits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{EnsembleResult, TimeScalars};
use crate::exchange::AlphaMode;
use crate::fitting::{
    collapse_search, fit_lognormal, fit_power_law, scaling_collapse, CollapseConvention, FitError,
    FitFamily, FitResult,
};
use crate::models::{ConfigError, ModelConfig, ModelVariant};
use crate::stats::DensityEstimate;

/// Version of the summary JSON layout.
pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: &str = "bin_center,density";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn parse_err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        message: message.into(),
    }
}

pub fn read_file(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_owned(),
        source,
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), IoError> {
    fs::write(path, contents).map_err(|source| IoError::File {
        path: path.to_owned(),
        source,
    })
}

const CONFIG_KEYS: [&str; 11] = [
    "variant",
    "n0",
    "duration",
    "tau",
    "schedule_unit",
    "alpha_mode",
    "split_fraction",
    "bins",
    "seed",
    "ensembles",
    "snapshot_times",
];

fn format_alpha_mode(mode: &AlphaMode) -> String {
    match mode {
        AlphaMode::Fixed(a) => format!("fixed {a}"),
        AlphaMode::PerTransactionUniform => "uniform".into(),
        AlphaMode::QuenchedPerAgent => "quenched".into(),
    }
}

fn parse_alpha_mode(s: &str) -> Result<AlphaMode, String> {
    let mut words = s.split_whitespace();
    let kind = words.next().unwrap_or("").to_ascii_lowercase();
    let mode = match kind.as_str() {
        "fixed" => {
            let a = words
                .next()
                .ok_or("`fixed` needs a value, e.g. `fixed 0.5`")?;
            AlphaMode::Fixed(a.parse().map_err(|_| format!("bad stake fraction `{a}`"))?)
        }
        "uniform" | "pertransactionuniform" => AlphaMode::PerTransactionUniform,
        "quenched" | "quenchedperagent" => AlphaMode::QuenchedPerAgent,
        _ => return Err(format!("unknown alpha mode `{s}`")),
    };
    if words.next().is_some() {
        return Err(format!("trailing text in alpha mode `{s}`"));
    }
    Ok(mode)
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, IoError> {
    v.parse()
        .map_err(|_| parse_err(line, format!("`{key}`: cannot parse `{v}`")))
}

/// Parses and validates a config document.
///
/// `variant` and `duration` are required; every other field falls back to
/// [`ModelConfig::with_defaults`] (seed 0, one snapshot at `duration`).
pub fn parse_config(text: &str) -> Result<ModelConfig, IoError> {
    let mut entries: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once(':')
            .ok_or_else(|| parse_err(line, format!("expected `key: value`, got `{content}`")))?;
        let key = key.trim();
        if !CONFIG_KEYS.contains(&key) {
            return Err(parse_err(line, format!("unknown key `{key}`")));
        }
        if let Some((first, _)) = entries.insert(key, (line, value.trim())) {
            return Err(parse_err(
                line,
                format!("`{key}` already set on line {first}"),
            ));
        }
    }
    let required = |key: &str| {
        entries
            .get(key)
            .copied()
            .ok_or_else(|| parse_err(0, format!("missing required key `{key}`")))
    };

    let (line, v) = required("variant")?;
    let variant: ModelVariant = v.parse().map_err(|e: String| parse_err(line, e))?;
    let (line, v) = required("duration")?;
    let duration = parse_num(line, "duration", v)?;
    let seed = match entries.get("seed") {
        Some(&(line, v)) => parse_num(line, "seed", v)?,
        None => 0,
    };
    let mut c = ModelConfig::with_defaults(variant, duration, seed);

    for (&key, &(line, v)) in &entries {
        match key {
            "n0" => c.n0 = parse_num(line, key, v)?,
            "tau" => c.tau = parse_num(line, key, v)?,
            "schedule_unit" => {
                c.schedule_unit = v.parse().map_err(|e: String| parse_err(line, e))?
            }
            "alpha_mode" => c.alpha_mode = parse_alpha_mode(v).map_err(|e| parse_err(line, e))?,
            "split_fraction" => c.split_fraction = parse_num(line, key, v)?,
            "bins" => c.bins = parse_num(line, key, v)?,
            "ensembles" => c.ensembles = parse_num(line, key, v)?,
            "snapshot_times" => {
                c.snapshot_times = v
                    .split(',')
                    .map(|t| parse_num(line, key, t.trim()))
                    .collect::<Result<_, _>>()?
            }
            _ => {}
        }
    }
    c.validate()?;
    Ok(c)
}

/// Writes every field, in the order `parse_config` documents them.
pub fn emit_config(c: &ModelConfig) -> String {
    let times: Vec<String> = c.snapshot_times.iter().map(u64::to_string).collect();
    let mut s = String::new();
    let _ = writeln!(s, "variant: {}", c.variant);
    let _ = writeln!(s, "n0: {}", c.n0);
    let _ = writeln!(s, "duration: {}", c.duration);
    let _ = writeln!(s, "tau: {}", c.tau);
    let _ = writeln!(s, "schedule_unit: {}", c.schedule_unit);
    let _ = writeln!(s, "alpha_mode: {}", format_alpha_mode(&c.alpha_mode));
    let _ = writeln!(s, "split_fraction: {}", c.split_fraction);
    let _ = writeln!(s, "bins: {}", c.bins);
    let _ = writeln!(s, "seed: {}", c.seed);
    let _ = writeln!(s, "ensembles: {}", c.ensembles);
    let _ = writeln!(s, "snapshot_times: {}", times.join(","));
    s
}

pub fn format_density_csv(d: &DensityEstimate) -> String {
    let mut s = String::with_capacity(48 * (d.bins() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for (i, p) in d.densities.iter().enumerate() {
        let _ = writeln!(s, "{:.16e},{:.16e}", d.bin_center(i), p);
    }
    s
}

pub fn emit_density_csv(d: &DensityEstimate, path: &Path) -> Result<(), IoError> {
    write_file(path, &format_density_csv(d))
}

/// Snaps `v` to the nearest integer when it is within rounding of one.
fn snap(v: f64, scale: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= 1e-9 * scale {
        r
    } else {
        v
    }
}

/// Reads a density written by [`format_density_csv`].
///
/// The binning is recovered from the bin centers. The file does not carry
/// the sample count, so the result has `sample_count == 0`.
pub fn parse_density_csv(text: &str) -> Result<DensityEstimate, IoError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(parse_err(1, format!("expected header `{CSV_HEADER}`"))),
    }
    let mut centers = Vec::new();
    let mut densities = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let (c, p) = raw
            .split_once(',')
            .ok_or_else(|| parse_err(line, "expected two columns"))?;
        let c: f64 = parse_num(line, "bin_center", c.trim())?;
        let p: f64 = parse_num(line, "density", p.trim())?;
        if !p.is_finite() || p < 0.0 {
            return Err(parse_err(line, format!("invalid density {p}")));
        }
        centers.push(c);
        densities.push(p);
    }
    let n = centers.len();
    if n == 0 {
        return Err(parse_err(2, "no rows"));
    }
    let width = if n == 1 {
        2.0 * centers[0]
    } else {
        (centers[n - 1] - centers[0]) / (n - 1) as f64
    };
    if !(width > 0.0) {
        return Err(parse_err(2, "bin centers must be ascending"));
    }
    let span = width * n as f64;
    let lo = snap(centers[0] - width / 2.0, span);
    let hi = snap(centers[n - 1] + width / 2.0, span);
    let d = DensityEstimate {
        lo,
        hi,
        bin_width: (hi - lo) / n as f64,
        densities,
        sample_count: 0,
    };
    for (i, &c) in centers.iter().enumerate() {
        if (d.bin_center(i) - c).abs() > 1e-6 * width {
            return Err(parse_err(i + 2, "bin centers are not uniformly spaced"));
        }
    }
    Ok(d)
}

pub fn read_density_csv(path: &Path) -> Result<DensityEstimate, IoError> {
    parse_density_csv(&read_file(path)?)
}

/// A fit, or the reason it could not be made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FitEntry {
    Fit(FitResult),
    Failed {
        family: FitFamily,
        error: String,
        message: String,
    },
}

impl FitEntry {
    pub fn new(family: FitFamily, fit: Result<FitResult, FitError>) -> Self {
        match fit {
            Ok(f) => FitEntry::Fit(f),
            Err(e) => FitEntry::Failed {
                family,
                error: e.code().into(),
                message: e.to_string(),
            },
        }
    }

    pub fn fit(&self) -> Option<&FitResult> {
        match self {
            FitEntry::Fit(f) => Some(f),
            FitEntry::Failed { .. } => None,
        }
    }
}

/// Fits each requested family on `window`.
pub fn fit_entries(
    d: &DensityEstimate,
    families: &[FitFamily],
    window: (f64, f64),
) -> Vec<FitEntry> {
    families
        .iter()
        .map(|&family| {
            let fit = match family {
                FitFamily::PowerLaw => fit_power_law(d, window),
                FitFamily::Lognormal => fit_lognormal(d, window),
            };
            FitEntry::new(family, fit)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSummary {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub time: Option<u64>,
    pub fits: Vec<FitEntry>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scalars: Option<TimeScalars>,
}

/// Collapse quality over an exponent grid for one convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseSummary {
    pub convention: CollapseConvention,
    pub times: Vec<u64>,
    pub best_exponent: f64,
    pub best_quality: f64,
    /// (exponent, quality) for every grid point; quality is null where the
    /// collapse is undefined.
    pub scan: Vec<(f64, Option<f64>)>,
}

impl CollapseSummary {
    pub fn compute(
        snapshots: &[(u64, DensityEstimate)],
        grid: &[f64],
        convention: CollapseConvention,
    ) -> Result<Self, FitError> {
        let (best_exponent, best) = collapse_search(snapshots, grid, convention)?;
        let scan = grid
            .iter()
            .map(|&a| {
                (
                    a,
                    scaling_collapse(snapshots, a, convention)
                        .ok()
                        .map(|r| r.quality),
                )
            })
            .collect();
        Ok(CollapseSummary {
            convention,
            times: snapshots.iter().map(|s| s.0).collect(),
            best_exponent,
            best_quality: best.quality,
            scan,
        })
    }

    /// Quality at the grid exponent closest to `alpha`.
    pub fn quality_near(&self, alpha: f64) -> Option<f64> {
        self.scan
            .iter()
            .min_by(|p, q| (p.0 - alpha).abs().total_cmp(&(q.0 - alpha).abs()))
            .and_then(|p| p.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config: Option<ModelConfig>,
    pub snapshots: Vec<SnapshotSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub collapse: Option<Vec<CollapseSummary>>,
}

impl Summary {
    /// Both tail fits at every snapshot of an ensemble. `window` of `None`
    /// uses each snapshot's default window.
    pub fn of_ensemble(result: &EnsembleResult, window: Option<(f64, f64)>) -> Self {
        let families = [FitFamily::PowerLaw, FitFamily::Lognormal];
        let snapshots = result
            .per_time
            .iter()
            .map(|(&t, d)| SnapshotSummary {
                time: Some(t),
                fits: fit_entries(
                    d,
                    &families,
                    window.unwrap_or_else(|| crate::fitting::default_window(d)),
                ),
                scalars: result.per_time_scalars.get(&t).copied(),
            })
            .collect();
        Summary {
            schema_version: SCHEMA_VERSION,
            config: Some(result.config.clone()),
            snapshots,
            collapse: None,
        }
    }

    pub fn to_json(&self) -> Result<String, IoError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

pub fn emit_summary_json(summary: &Summary, path: &Path) -> Result<(), IoError> {
    write_file(path, &summary.to_json()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub time: u64,
    pub path: PathBuf,
}

/// Record of one `simulate` invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ModelConfig,
    pub tool_version: String,
    pub wall_clock_seconds: f64,
    pub densities: Vec<ManifestEntry>,
    pub summary: PathBuf,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<String, IoError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// File name of the density written for snapshot time `t`.
pub fn density_file_name(t: u64) -> String {
    format!("density_t{t}.csv")
}

/// Snapshot time encoded in a file name as `_t<digits>`, if any.
pub fn time_from_file_name(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let pos = stem.rfind("_t")?;
    let digits = &stem[pos + 2..];
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}
