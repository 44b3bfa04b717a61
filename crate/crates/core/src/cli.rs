//! Command-line front end. Every verb reads a JSON run configuration and writes CSV or JSON.
//!
//! Exit codes: 0 success, 1 the invariant-measure condition fails, 2 configuration error,
//! 3 numerical failure, 4 I/O failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::coefficients::EstimateSettings;
use crate::config::{Resolved, RunConfig};
use crate::ergodicity::{check_invariant_condition, coupling_decay, empirical_invariant_stats};
use crate::error::{HjmmError, Result};
use crate::finance::bond_price;
use crate::solver::{convergence_study, simulate, PathResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONDITION_FAILS: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "hjmm", version, about = "HJM-Musiela forward-rate simulations in weighted spaces")]
pub struct Cli {
    /// Worker threads for ensemble verbs; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (JSON).
    pub config: PathBuf,
    /// Overrides `noise.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created when missing.
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one path: path.csv, norms.csv, diagnostics.json.
    Simulate(Common),
    /// Print the invariant-measure condition report; exit 1 when it fails.
    CheckInvariant(Common),
    /// Theoretical and sampled constants: constants.json.
    EstimateConstants(Common),
    /// Strong self-convergence in the time step: convergence.csv, convergence.json.
    Converge(Common),
    /// Synchronous coupling from two initial curves: coupling.csv, coupling.json.
    Couple(Common),
    /// Moments after burn-in from two initial curves: invariant_stats.csv, invariant_stats.json.
    InvariantStats(Common),
    /// Bond prices along a simulated path: bonds.csv.
    BondPrice(Common),
}

/// Maps an error to its exit code.
pub fn exit_code(e: &HjmmError) -> i32 {
    match e {
        HjmmError::InvalidParameter(_)
        | HjmmError::DimensionMismatch { .. }
        | HjmmError::GridMismatch
        | HjmmError::OutOfRange(_)
        | HjmmError::Config(_)
        | HjmmError::Json(_) => EXIT_CONFIG,
        HjmmError::NumericalAbort { .. } | HjmmError::PicardNonConvergence { .. } | HjmmError::LinearSolve(_) => {
            EXIT_NUMERICAL
        }
        HjmmError::Io(_) | HjmmError::Csv(_) => EXIT_IO,
    }
}

/// Parses `args` (program name first), runs the verb and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| HjmmError::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli.command))
}

fn load(common: &Common) -> Result<(RunConfig, Resolved)> {
    let mut config = RunConfig::from_path(&common.config)?;
    if let Some(seed) = common.seed {
        config.noise.seed = seed;
    }
    let effective = config.effective()?;
    let resolved = effective.resolve()?;
    Ok((effective, resolved))
}

fn out_dir(common: &Common) -> Result<&Path> {
    fs::create_dir_all(&common.out)?;
    Ok(&common.out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?)
}

fn dispatch(command: &Command) -> Result<i32> {
    match command {
        Command::Simulate(c) => simulate_verb(c),
        Command::CheckInvariant(c) => {
            let (config, r) = load(c)?;
            let report = check_invariant_condition(&r.spec, config.volatility.n_gamma)?;
            print_json(&report)?;
            Ok(if report.condition_holds { EXIT_OK } else { EXIT_CONDITION_FAILS })
        }
        Command::EstimateConstants(c) => {
            let (config, r) = load(c)?;
            let e = &config.experiment.estimate;
            let settings = EstimateSettings {
                n_samples: e.n_samples,
                radius: e.radius,
                n_gamma: config.volatility.n_gamma,
                maximal: e.maximal,
            };
            let constants = crate::coefficients::estimate_constants(&r.spec, settings, config.noise.seed)?;
            #[derive(Serialize)]
            struct Out<'a> {
                constants: &'a crate::coefficients::ConstantsReport,
                t_end: f64,
                contraction_constant: Option<f64>,
            }
            let out = Out {
                constants: &constants,
                t_end: r.sim.t_end,
                contraction_constant: constants.c_t(r.sim.t_end, 0.0).ok(),
            };
            write_json(&out_dir(c)?.join("constants.json"), &out)?;
            print_json(&out)?;
            Ok(EXIT_OK)
        }
        Command::Converge(c) => {
            let (config, r) = load(c)?;
            let e = &config.experiment.converge;
            let report = convergence_study(&r.sim, e.levels, e.n_paths)?;
            let dir = out_dir(c)?;
            let mut w = csv_writer(&dir.join("convergence.csv"))?;
            w.write_record(["dt", "error"])?;
            for (dt, err) in report.dts.iter().zip(&report.errors) {
                w.serialize((dt, err))?;
            }
            w.flush()?;
            write_json(&dir.join("convergence.json"), &report)?;
            print_json(&report)?;
            Ok(EXIT_OK)
        }
        Command::Couple(c) => {
            let (config, r) = load(c)?;
            let e = &config.experiment.couple;
            let r0_b = e.r0_b.build(r.grid.clone())?;
            let report = coupling_decay(&r.sim, &r0_b, e.n_paths)?;
            let dir = out_dir(c)?;
            let mut w = csv_writer(&dir.join("coupling.csv"))?;
            w.write_record(["t", "mean_distance", "mean_log_distance"])?;
            for (k, (t, d)) in report.times.iter().zip(&report.mean_distance).enumerate() {
                w.serialize((t, d, report.mean_log_distance.get(k)))?;
            }
            w.flush()?;
            write_json(&dir.join("coupling.json"), &report)?;
            #[derive(Serialize)]
            struct Summary {
                n_paths: usize,
                fit: Option<crate::stats::LinearFit>,
                slope_band: Option<(f64, f64)>,
                condition_holds: Option<bool>,
            }
            print_json(&Summary {
                n_paths: report.n_paths,
                fit: report.fit,
                slope_band: report.slope_band,
                condition_holds: report.condition_holds,
            })?;
            Ok(EXIT_OK)
        }
        Command::InvariantStats(c) => {
            let (config, r) = load(c)?;
            let e = &config.experiment.invariant_stats;
            let r0_b = e.r0_b.build(r.grid.clone())?;
            let report = empirical_invariant_stats(&r.sim, &r0_b, &e.probes, e.n_paths, e.z_max)?;
            let dir = out_dir(c)?;
            let mut w = csv_writer(&dir.join("invariant_stats.csv"))?;
            w.write_record(["statistic", "mean_a", "se_a", "mean_b", "se_b", "z"])?;
            for m in &report.comparisons {
                w.serialize((
                    &m.statistic,
                    m.first.mean,
                    m.first.std_error,
                    m.second.mean,
                    m.second.std_error,
                    m.z_score,
                ))?;
            }
            w.flush()?;
            write_json(&dir.join("invariant_stats.json"), &report)?;
            print_json(&report)?;
            Ok(EXIT_OK)
        }
        Command::BondPrice(c) => {
            let (config, r) = load(c)?;
            let path = simulate(&r.sim)?;
            let dir = out_dir(c)?;
            let mut w = csv_writer(&dir.join("bonds.csv"))?;
            w.write_record(["t", "T", "price", "yield"])?;
            let x_max = r.grid.x_max();
            for (t, curve) in path.snapshot_times.iter().zip(&path.curves) {
                for &maturity in &config.experiment.bond_price.maturities {
                    if maturity < *t || maturity - t > x_max {
                        continue;
                    }
                    let q = bond_price(curve, *t, maturity)?;
                    w.serialize((q.t, q.maturity, q.price, q.yield_))?;
                }
            }
            w.flush()?;
            Ok(EXIT_OK)
        }
    }
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    seed: u64,
    effective_config: &'a RunConfig,
    constants: Option<&'a crate::coefficients::ConstantsReport>,
    tau_hit: Option<f64>,
    picard: Option<&'a crate::solver::PicardDiagnostics>,
    final_tail_ratio: f64,
}

fn simulate_verb(c: &Common) -> Result<i32> {
    let (config, r) = load(c)?;
    let path = simulate(&r.sim)?;
    let dir = out_dir(c)?;
    write_path(dir, &path)?;
    write_json(
        &dir.join("diagnostics.json"),
        &Diagnostics {
            seed: config.noise.seed,
            effective_config: &config,
            constants: path.diagnostics.as_ref(),
            tau_hit: path.tau_hit,
            picard: path.picard.as_ref(),
            final_tail_ratio: path.final_curve().tail_ratio(),
        },
    )?;
    Ok(EXIT_OK)
}

fn write_path(dir: &Path, path: &PathResult) -> Result<()> {
    let mut w = csv_writer(&dir.join("path.csv"))?;
    w.write_record(["t", "x", "value"])?;
    for (t, curve) in path.snapshot_times.iter().zip(&path.curves) {
        for (x, v) in curve.grid().nodes().zip(curve.values()) {
            w.serialize((t, x, v))?;
        }
    }
    w.flush()?;
    let mut w = csv_writer(&dir.join("norms.csv"))?;
    w.write_record(["t", "norm"])?;
    for (t, n) in path.times.iter().zip(&path.norms) {
        w.serialize((t, n))?;
    }
    w.flush()?;
    Ok(())
}
