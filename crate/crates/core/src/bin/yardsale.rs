#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use yardsale::ensemble::run_ensemble_with_threads;
use yardsale::fitting::{default_window, exponent_grid, CollapseConvention, FitFamily};
use yardsale::io::{
    density_file_name, emit_density_csv, emit_summary_json, fit_entries, parse_config,
    read_density_csv, read_file, time_from_file_name, write_file, CollapseSummary, FitEntry,
    ManifestEntry, RunManifest, SnapshotSummary, Summary, SCHEMA_VERSION,
};
use yardsale::presets::{condensation_check, exponential_check, preset, Scale, TABLE_MODELS};

#[derive(Parser)]
#[command(
    name = "yardsale",
    version,
    about = "Yard-sale wealth exchange simulations and tail analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble and write per-snapshot densities, fits and a manifest.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = default_threads())]
        threads: usize,
        /// Fit window `lo,hi`; defaults to each snapshot's tail window.
        #[arg(long, value_parser = parse_window)]
        window: Option<(f64, f64)>,
    },
    /// Fit a tail model to a density CSV.
    Fit {
        #[arg(long)]
        density: PathBuf,
        #[arg(long, value_enum, default_value_t = FamilyArg::Both)]
        family: FamilyArg,
        #[arg(long, value_parser = parse_window)]
        window: Option<(f64, f64)>,
        /// Output JSON path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scan scaling-collapse quality over an exponent grid.
    Collapse {
        /// `TIME=PATH`, or a path whose name ends in `_t<TIME>`.
        #[arg(long, required = true, num_args = 1..)]
        density: Vec<String>,
        /// Exponent grid `start:stop:step`, inclusive.
        #[arg(long, value_parser = parse_grid)]
        alpha_grid: Grid,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit both tail families for every model and print the comparison table.
    Table1 {
        #[arg(long, default_value = "desk", value_parser = parse_scale)]
        scale: Scale,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = default_threads())]
        threads: usize,
        /// Directory for the per-model summaries and densities.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the pure yard-sale and theft-fraud sanity checks.
    Baseline {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Powerlaw,
    Lognormal,
    Both,
}

impl FamilyArg {
    fn families(self) -> Vec<FitFamily> {
        match self {
            FamilyArg::Powerlaw => vec![FitFamily::PowerLaw],
            FamilyArg::Lognormal => vec![FitFamily::Lognormal],
            FamilyArg::Both => vec![FitFamily::PowerLaw, FitFamily::Lognormal],
        }
    }
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected `lo,hi`")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad bound `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad bound `{hi}`"))?;
    if !(lo > 0.0 && hi > lo) {
        return Err(format!("need 0 < lo < hi, got {lo},{hi}"));
    }
    Ok((lo, hi))
}

#[derive(Clone)]
struct Grid(Vec<f64>);

fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, step] = parts[..] else {
        return Err("expected `start:stop:step`".into());
    };
    let num = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| format!("bad number `{v}`"))
    };
    let (a, b, step) = (num(a)?, num(b)?, num(step)?);
    if !(step > 0.0) || !(b >= a) {
        return Err("need start <= stop and a positive step".into());
    }
    Ok(Grid(exponent_grid(a, b, step)))
}

fn parse_scale(s: &str) -> Result<Scale, String> {
    s.parse()
}

type Failure = Box<dyn std::error::Error>;

fn write_out(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => write_file(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn simulate(
    config: &Path,
    out: &Path,
    threads: usize,
    window: Option<(f64, f64)>,
) -> Result<(), Failure> {
    let cfg = parse_config(&read_file(config)?)?;
    let start = Instant::now();
    let result = run_ensemble_with_threads(&cfg, threads)?;
    fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;
    let mut densities = Vec::new();
    for (&t, d) in &result.per_time {
        let path = out.join(density_file_name(t));
        emit_density_csv(d, &path)?;
        densities.push(ManifestEntry { time: t, path });
    }
    let summary_path = out.join("summary.json");
    emit_summary_json(&Summary::of_ensemble(&result, window), &summary_path)?;
    let manifest = RunManifest {
        config: cfg,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        densities,
        summary: summary_path,
    };
    write_file(&out.join("manifest.json"), &manifest.to_json()?)?;
    Ok(())
}

fn fit(
    density: &Path,
    family: FamilyArg,
    window: Option<(f64, f64)>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let d = read_density_csv(density)?;
    let window = window.unwrap_or_else(|| default_window(&d));
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        config: None,
        snapshots: vec![SnapshotSummary {
            time: time_from_file_name(density),
            fits: fit_entries(&d, &family.families(), window),
            scalars: None,
        }],
        collapse: None,
    };
    write_out(out, &summary.to_json()?)
}

fn collapse(items: &[String], grid: &[f64], out: Option<&Path>) -> Result<(), Failure> {
    let mut snapshots = Vec::new();
    for item in items {
        let (time, path) = match item.split_once('=') {
            Some((t, p)) => (
                t.parse::<u64>()
                    .map_err(|_| format!("bad time in `{item}`"))?,
                PathBuf::from(p),
            ),
            None => {
                let p = PathBuf::from(item);
                let t = time_from_file_name(&p).ok_or_else(|| {
                    format!("`{item}`: give TIME=PATH or name the file *_t<TIME>.csv")
                })?;
                (t, p)
            }
        };
        snapshots.push((time, read_density_csv(&path)?));
    }
    snapshots.sort_by_key(|s| s.0);
    let collapse = [CollapseConvention::Literal, CollapseConvention::Mirrored]
        .into_iter()
        .map(|c| CollapseSummary::compute(&snapshots, grid, c))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        config: None,
        snapshots: Vec::new(),
        collapse: Some(collapse),
    };
    write_out(out, &summary.to_json()?)
}

fn fmt_entry(e: &FitEntry) -> String {
    match e {
        FitEntry::Fit(f) => {
            let exponent = f
                .tail_exponent()
                .map_or("-".to_string(), |g| format!("{g:.3}"));
            format!(
                "{exponent:>9} {:>12.4e} {:>9.4}",
                f.chi2_per_dof, f.r_squared
            )
        }
        FitEntry::Failed { error, .. } => format!("{error:>32}"),
    }
}

fn table1(scale: Scale, seed: u64, threads: usize, out: Option<&Path>) -> Result<(), Failure> {
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    println!(
        "{:<8} {:>8} {:<10} {:>9} {:>12} {:>9}",
        "model", "time", "family", "exponent", "chi2/dof", "R^2"
    );
    for variant in TABLE_MODELS {
        let cfg = preset(variant, scale, seed);
        let result = run_ensemble_with_threads(&cfg, threads)?;
        let summary = Summary::of_ensemble(&result, None);
        let last = summary.snapshots.last().expect("presets have snapshots");
        for (entry, name) in last.fits.iter().zip(["power-law", "lognormal"]) {
            println!(
                "{:<8} {:>8} {:<10} {}",
                variant.to_string(),
                last.time.unwrap_or(0),
                name,
                fmt_entry(entry)
            );
        }
        if let Some(dir) = out {
            let name = variant.to_string();
            emit_summary_json(&summary, &dir.join(format!("{name}_summary.json")))?;
            for (&t, d) in &result.per_time {
                emit_density_csv(d, &dir.join(format!("{name}_t{t}.csv")))?;
            }
        }
    }
    Ok(())
}

fn baseline(seed: u64) -> Result<bool, Failure> {
    let mut ok = true;
    for check in [condensation_check(seed)?, exponential_check(seed)?] {
        let verdict = if check.passed { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {}: {:.4} (threshold {})",
            check.name, check.statistic, check.threshold
        );
        ok &= check.passed;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate {
            config,
            out,
            threads,
            window,
        } => simulate(config, out, *threads, *window).map(|_| true),
        Command::Fit {
            density,
            family,
            window,
            out,
        } => fit(density, *family, *window, out.as_deref()).map(|_| true),
        Command::Collapse {
            density,
            alpha_grid,
            out,
        } => collapse(density, &alpha_grid.0, out.as_deref()).map(|_| true),
        Command::Table1 {
            scale,
            seed,
            threads,
            out,
        } => table1(*scale, *seed, *threads, out.as_deref()).map(|_| true),
        Command::Baseline { seed } => baseline(*seed),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
