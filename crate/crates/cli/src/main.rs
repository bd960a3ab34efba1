//! Scenario runner for the networked-control simulator.
//!
//! Exit codes: 0 success, 1 verification failure or runtime error,
//! 2 configuration error. `HKF_OUT_DIR` replaces the default output
//! directory; `--out` takes precedence over it.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hkf_core::experiment::{hgmm_sweep, monte_carlo, write_sweep_csv, BatchOptions};
use hkf_core::scenario::ScenarioConfig;
use hkf_core::verify::{verify, Fault, VerifyOptions};
use hkf_core::{trace, Error};

const OUT_DIR_ENV: &str = "HKF_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "out";

#[derive(Parser, Debug)]
#[command(
    name = "hkf-ncs",
    version,
    about = "Networked control with a hypothesizing distributed Kalman filter"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Scenario configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to $HKF_OUT_DIR, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed (base seed for batches).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Single closed-loop run; writes trace.csv.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Batch of independent runs; writes summary.json.
    MonteCarlo {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long)]
        parallel: bool,
    },
    /// Monte Carlo per HGMM scaling; writes sweep.csv and sweep.json.
    HgmmSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long)]
        parallel: bool,
        /// Scalings of the matched HGMM.
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,2,4")]
        alphas: Vec<f64>,
    },
    /// Oracle equivalence suite; prints the worst residual per identity.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true, value_enum)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FaultArg {
    CorruptDelta,
}

enum Failure {
    Verification,
    Error(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn out_dir(common: &Common) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn prepare(common: &Common) -> Result<(ScenarioConfig, PathBuf), Error> {
    let mut cfg = ScenarioConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok((cfg, out_dir(common)))
}

fn create(dir: &Path, name: &str) -> Result<fs::File, Error> {
    fs::create_dir_all(dir).map_err(|e| Error::config("out", format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::File::create(&path).map_err(|e| Error::config("out", format!("cannot write {}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { common } => {
            let (cfg, dir) = prepare(&common)?;
            let out = hkf_core::ncs::run_closed_loop(&cfg.build()?)?;
            trace::write_trace(create(&dir, "trace.csv")?, &out.records)?;
            println!("{} steps, total cost {}", out.records.len(), out.total_cost);
            println!("wrote {}", dir.join("trace.csv").display());
        }
        Command::MonteCarlo { common, runs, parallel } => {
            let (cfg, dir) = prepare(&common)?;
            let opts = BatchOptions {
                runs,
                base_seed: cfg.seed,
                parallel,
            };
            let summary = monte_carlo(&cfg.build()?, opts)?;
            serde_json::to_writer_pretty(create(&dir, "summary.json")?, &summary).map_err(Error::from)?;
            println!("{runs} runs, mse {}, mean cost {}", summary.mse.mean, summary.cost.mean);
            println!("wrote {}", dir.join("summary.json").display());
        }
        Command::HgmmSweep {
            common,
            runs,
            parallel,
            alphas,
        } => {
            let (cfg, dir) = prepare(&common)?;
            let opts = BatchOptions {
                runs,
                base_seed: cfg.seed,
                parallel,
            };
            let rows = hgmm_sweep(&cfg.build()?, &alphas, opts)?;
            write_sweep_csv(create(&dir, "sweep.csv")?, &rows)?;
            serde_json::to_writer_pretty(create(&dir, "sweep.json")?, &rows).map_err(Error::from)?;
            for r in &rows {
                let (lo, hi) = r.mse.bounds();
                println!("alpha {:>6}  mse {:.6e}  ci [{lo:.6e}, {hi:.6e}]", r.alpha, r.mse.mean);
            }
            println!("wrote {}", dir.join("sweep.csv").display());
        }
        Command::Verify { common, inject_fault } => {
            let (cfg, _) = prepare(&common)?;
            let opts = VerifyOptions {
                fault: inject_fault.map(|FaultArg::CorruptDelta| Fault::CorruptDelta),
            };
            let report = verify(&cfg.build()?, &opts)?;
            println!("{report}");
            if !report.passed() {
                eprintln!("failed identities: {}", report.failures().join(", "));
                return Err(Failure::Verification);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(1),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
