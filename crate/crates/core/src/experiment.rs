//! Monte Carlo batches and HGMM sensitivity sweeps.
//!
//! Run `i` uses the seed `derive_run_seed(base, i)`; results are reduced in
//! run-index order, so serial and parallel execution agree bit for bit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hkf::Hgmm;
use crate::linalg::Vector;
use crate::model::derive_run_seed;
use crate::ncs::{run_closed_loop, Scenario};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;
const Z95: f64 = 1.96;

/// Mean of per-run values with its standard error and 95% interval.
/// `se` and the interval are absent for a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: Option<f64>,
    pub ci95: Option<[f64; 2]>,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let se = (xs.len() > 1).then(|| {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        });
        Self {
            mean,
            se,
            ci95: se.map(|s| [mean - Z95 * s, mean + Z95 * s]),
        }
    }

    /// Interval bounds; a missing standard error collapses to the mean.
    pub fn bounds(&self) -> (f64, f64) {
        self.ci95.map_or((self.mean, self.mean), |[lo, hi]| (lo, hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: usize,
    /// Runs with an available estimate at this step.
    pub available: usize,
    pub mean_error: Vec<f64>,
    pub mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub schema_version: u32,
    pub runs: usize,
    pub base_seed: u64,
    pub horizon: usize,
    /// Per component: mean over runs of the run-average estimation error
    /// `x̂_k − x_k` over steps with an available estimate.
    pub mean_error: Vec<Estimate>,
    /// Mean over runs of the run-average `‖x̂_k − x_k‖²`.
    pub mse: Estimate,
    /// Closed-loop cost including the terminal term.
    pub cost: Estimate,
    /// Fraction of steps with an available estimate.
    pub availability: f64,
    pub per_step: Vec<StepStats>,
}

/// Per-run reduction of a trace.
#[derive(Debug, Clone)]
struct RunStats {
    mean_error: Option<Vector>,
    mse: Option<f64>,
    cost: f64,
    errors: Vec<Option<Vector>>,
}

fn run_stats(scenario: &Scenario) -> Result<RunStats> {
    let out = run_closed_loop(scenario)?;
    let errors: Vec<Option<Vector>> = out
        .records
        .iter()
        .map(|r| r.estimate.as_ref().map(|e| e - &r.x_true))
        .collect();
    let avail: Vec<&Vector> = errors.iter().flatten().collect();
    let (mean_error, mse) = if avail.is_empty() {
        (None, None)
    } else {
        let count = avail.len() as f64;
        let sum = avail
            .iter()
            .fold(Vector::zeros(scenario.state_dim()), |acc, e| acc + *e);
        let sq = avail.iter().map(|e| e.norm_squared()).sum::<f64>();
        (Some(sum / count), Some(sq / count))
    };
    Ok(RunStats {
        mean_error,
        mse,
        cost: out.total_cost,
        errors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchOptions {
    pub runs: usize,
    pub base_seed: u64,
    pub parallel: bool,
}

/// Runs `opts.runs` independent closed loops and summarizes them.
pub fn monte_carlo(scenario: &Scenario, opts: BatchOptions) -> Result<MonteCarloSummary> {
    if opts.runs == 0 {
        return Err(Error::config("runs", "must be at least 1"));
    }
    let one = |i: usize| run_stats(&scenario.with_seed(derive_run_seed(opts.base_seed, i as u64)));
    let stats: Vec<RunStats> = if opts.parallel {
        (0..opts.runs).into_par_iter().map(one).collect::<Result<_>>()?
    } else {
        (0..opts.runs).map(one).collect::<Result<_>>()?
    };
    Ok(summarize(scenario, &stats, opts))
}

fn summarize(scenario: &Scenario, stats: &[RunStats], opts: BatchOptions) -> MonteCarloSummary {
    let n = scenario.state_dim();
    let with_estimates: Vec<&RunStats> = stats.iter().filter(|s| s.mean_error.is_some()).collect();
    let mean_error = (0..n)
        .map(|j| {
            let xs: Vec<f64> = with_estimates
                .iter()
                .map(|s| s.mean_error.as_ref().unwrap()[j])
                .collect();
            estimate_or_nan(&xs)
        })
        .collect();
    let mses: Vec<f64> = stats.iter().filter_map(|s| s.mse).collect();
    let costs: Vec<f64> = stats.iter().map(|s| s.cost).collect();

    let horizon = scenario.horizon;
    let mut available_total = 0usize;
    let per_step = (0..horizon)
        .map(|k| {
            let errs: Vec<&Vector> = stats.iter().filter_map(|s| s.errors[k].as_ref()).collect();
            available_total += errs.len();
            let (mean_error, mse) = if errs.is_empty() {
                (vec![], None)
            } else {
                let c = errs.len() as f64;
                let sum = errs.iter().fold(Vector::zeros(n), |acc, e| acc + *e);
                let sq = errs.iter().map(|e| e.norm_squared()).sum::<f64>();
                ((sum / c).iter().copied().collect(), Some(sq / c))
            };
            StepStats {
                step: k,
                available: errs.len(),
                mean_error,
                mse,
            }
        })
        .collect();

    MonteCarloSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        runs: stats.len(),
        base_seed: opts.base_seed,
        horizon,
        mean_error,
        mse: estimate_or_nan(&mses),
        cost: Estimate::from_samples(&costs),
        availability: available_total as f64 / (horizon * stats.len()) as f64,
        per_step,
    }
}

fn estimate_or_nan(xs: &[f64]) -> Estimate {
    if xs.is_empty() {
        Estimate {
            mean: f64::NAN,
            se: None,
            ci95: None,
        }
    } else {
        Estimate::from_samples(xs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub mse: Estimate,
    pub cost: Estimate,
}

/// Monte Carlo per scaling `α` of the matched HGMM; every `α` reuses the
/// same run seeds.
pub fn hgmm_sweep(scenario: &Scenario, alphas: &[f64], opts: BatchOptions) -> Result<Vec<SweepRow>> {
    if alphas.is_empty() {
        return Err(Error::config("alphas", "grid must not be empty"));
    }
    alphas
        .iter()
        .map(|&alpha| {
            let mut s = scenario.clone();
            s.hgmm = Hgmm::scaled_matched(&s.sensors, alpha)?;
            let summary = monte_carlo(&s, opts)?;
            Ok(SweepRow {
                alpha,
                mse: summary.mse,
                cost: summary.cost,
            })
        })
        .collect()
}

/// Plot-ready sweep table.
pub fn write_sweep_csv<W: std::io::Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["alpha", "mse", "mse_se", "mse_ci_low", "mse_ci_high", "cost", "cost_se"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let (lo, hi) = r.mse.bounds();
        w.write_record([
            r.alpha.to_string(),
            r.mse.mean.to_string(),
            opt(r.mse.se),
            lo.to_string(),
            hi.to_string(),
            r.cost.mean.to_string(),
            opt(r.cost.se),
        ])?;
    }
    w.flush()?;
    Ok(())
}
