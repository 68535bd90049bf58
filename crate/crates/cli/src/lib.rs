//! `infoval`: price American claims for an insider, verify the engine's
//! invariants, and sweep scenario parameters.
//!
//! Exit codes: 0 success, 1 failed verification, 2 configuration error,
//! 3 solver error. A `manifest.json` describing the run is written to the
//! output directory in every case.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use infoval_core::checks::{run_suite, Check, Suite, VerifyOptions};
use infoval_core::scenario::{run_scenario, ScenarioConfig};
use infoval_core::Error;

pub mod manifest;
pub mod sweep;

use manifest::RunManifest;
pub use sweep::{SweepParam, SweepRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

pub const REPORT_FILE: &str = "report.json";
pub const ATOMS_FILE: &str = "atoms.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const VERIFY_FILE: &str = "verify.json";

#[derive(Debug, Parser)]
#[command(name = "infoval", version, about = "Insider valuation of American claims")]
pub struct Cli {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Directory for reports, tables and the run manifest.
    #[arg(long, global = true, default_value = "infoval-out")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Value the scenario in a config file: base value, insider values per
    /// atom, projection value and expected CEI.
    Price(ConfigArgs),
    /// Run the invariant and oracle suites.
    Verify(VerifyArgs),
    /// Re-run a scenario over a list of parameter values.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Scenario config (TOML).
    #[arg(long)]
    pub config: PathBuf,

    /// Overrides the config's Monte Carlo seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// lattice, density, rbsde, scenario or all.
    #[arg(long, default_value = "all")]
    pub suite: String,

    /// Monte Carlo seed for the path-based checks.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Corrupt the base solve's reflection before checking it (harness self-test).
    #[arg(long, hide = true)]
    pub break_skorokhod: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub base: ConfigArgs,

    /// `PARAM=V1,V2,...` with PARAM one of epsilon, strike, sigma, atoms, steps.
    pub sweep: String,
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Solver(String),
    Verify(usize),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Solver(_) => EXIT_SOLVER,
            Failure::Verify(_) => EXIT_VERIFY,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Solver(m) => write!(f, "solver error: {m}"),
            Failure::Verify(n) => write!(f, "{n} check(s) failed"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            other => Failure::Solver(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: impl fmt::Display) -> Failure {
    Failure::Solver(format!("cannot write {}: {e}", path.display()))
}

/// Reads and validates a config, applying a seed override.
pub fn load_config(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig, Failure> {
    let mut config = ScenarioConfig::from_path(path).map_err(|e| match e {
        Error::Config(m) => Failure::Config(format!("{}: {m}", path.display())),
        other => Failure::Config(format!("{}: {other}", path.display())),
    })?;
    if let Some(s) = seed {
        config.numerics.seed = s;
    }
    config.validate()?;
    Ok(config)
}

/// Runs the parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let threads = cli.threads.unwrap_or_else(rayon::current_num_threads);
    let (name, config_path) = match &cli.command {
        Command::Price(a) => ("price", Some(a.config.as_path())),
        Command::Verify(_) => ("verify", None),
        Command::Sweep(a) => ("sweep", Some(a.base.config.as_path())),
    };
    let (mut manifest, started) = RunManifest::start(name, config_path, threads);
    let result = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| dispatch(&cli, &mut manifest)),
        Err(e) => Err(Failure::Config(format!("cannot start {threads} threads: {e}"))),
    };
    let code = match &result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("infoval {name}: {f}");
            f.exit_code()
        }
    };
    manifest.finish(started, code, result.err().map(|f| f.to_string()));
    if let Err(e) = manifest.write(&cli.out_dir) {
        eprintln!("infoval {name}: cannot write manifest: {e}");
    }
    code
}

fn dispatch(cli: &Cli, manifest: &mut RunManifest) -> Result<(), Failure> {
    match &cli.command {
        Command::Price(a) => price(a, &cli.out_dir, manifest),
        Command::Verify(a) => verify(a, &cli.out_dir, manifest),
        Command::Sweep(a) => sweep::sweep(a, &cli.out_dir, manifest),
    }
}

pub(crate) fn create_out_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

pub(crate) fn write_file(dir: &Path, name: &str, bytes: &[u8], manifest: &mut RunManifest) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| io_failure(&path, e))?;
    manifest.record(&path);
    Ok(())
}

fn price(args: &ConfigArgs, out: &Path, manifest: &mut RunManifest) -> Result<(), Failure> {
    let config = load_config(&args.config, args.seed)?;
    manifest.seed = Some(config.numerics.seed);
    create_out_dir(out)?;
    let report = run_scenario(&config)?;
    write_file(out, REPORT_FILE, (report.to_json()? + "\n").as_bytes(), manifest)?;
    let mut csv = Vec::new();
    report.write_atoms_csv(&mut csv)?;
    write_file(out, ATOMS_FILE, &csv, manifest)?;

    println!("base value        {:.6} ± {:.6}", report.base_value, report.base_std_error);
    println!("projection value  {:.6}", report.projection_value);
    println!(
        "expected CEI      {:.6} ± {:.6}",
        report.expected_cei.mean, report.expected_cei.std_error
    );
    println!("max route gap     {:.4}", report.max_route_gap);
    if let Some(l) = &report.lattice {
        println!(
            "lattice ({} steps) base {:.6}, expected CEI {:.6}",
            l.steps, l.base_value, l.expected_cei
        );
    }
    for e in &report.errors {
        eprintln!("warning: {e}");
    }
    Ok(())
}

fn verify(args: &VerifyArgs, out: &Path, manifest: &mut RunManifest) -> Result<(), Failure> {
    let suite: Suite = args.suite.parse()?;
    let mut opts = VerifyOptions {
        break_skorokhod: args.break_skorokhod,
        ..VerifyOptions::default()
    };
    if let Some(s) = args.seed {
        opts.seed = s;
    }
    manifest.seed = Some(opts.seed);
    create_out_dir(out)?;
    let checks: Vec<Check> = run_suite(suite, &opts);
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    let json = serde_json::to_string_pretty(&checks).map_err(|e| Failure::Solver(e.to_string()))?;
    write_file(out, VERIFY_FILE, (json + "\n").as_bytes(), manifest)?;
    if failed > 0 {
        return Err(Failure::Verify(failed));
    }
    Ok(())
}
