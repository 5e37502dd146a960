//! Weight-decay sweeps and the early-OUI recommendation rule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oui::{classify_regime, Band, Regime};

use super::config::TrainConfig;
use super::train::{train_epochs, MetricTrace};

/// Caps sweep parallelism when set to a positive integer.
pub const THREADS_ENV: &str = "OUI_LAB_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub lambda: f64,
    pub trace: MetricTrace,
    /// Maximum validation accuracy over the epochs run.
    pub mva: f64,
    /// OUI of the last epoch run.
    pub final_oui: f64,
    pub early_oui: f64,
    pub early_epoch: usize,
}

impl SweepRun {
    pub fn from_trace(lambda: f64, trace: MetricTrace, early_epoch: usize) -> Result<Self> {
        let last = trace.last().ok_or(Error::EmptyTrace)?;
        let early = trace
            .at_epoch(early_epoch)
            .ok_or_else(|| Error::InvalidParams(format!("trace has no epoch {early_epoch}")))?;
        Ok(Self {
            lambda,
            mva: trace.mva().ok_or(Error::EmptyTrace)?,
            final_oui: last.oui,
            early_oui: early.oui,
            early_epoch,
            trace,
        })
    }

    pub fn final_val_loss(&self) -> Option<f64> {
        self.trace.last().map(|e| e.val_loss)
    }

    /// Regime of the final OUI.
    pub fn regime(&self, band: Band) -> Result<Regime> {
        classify_regime(self.final_oui, band)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Strictly increasing in `lambda`.
    pub runs: Vec<SweepRun>,
    pub band: Band,
    pub early_epoch: usize,
}

impl SweepResult {
    pub fn lambdas(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.lambda).collect()
    }

    /// Run with the highest MVA (first on ties).
    pub fn best_mva(&self) -> Option<&SweepRun> {
        self.runs
            .iter()
            .reduce(|best, r| if r.mva > best.mva { r } else { best })
    }
}

fn check_lambdas(lambdas: &[f64]) -> Result<()> {
    if lambdas.len() < 2 {
        return Err(Error::InvalidParams(format!(
            "a sweep needs at least 2 weight-decay values, got {}",
            lambdas.len()
        )));
    }
    if lambdas.windows(2).any(|w| !(w[1] > w[0])) || lambdas.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::InvalidParams("weight-decay values must be >= 0 and strictly increasing".into()));
    }
    Ok(())
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs `f` over the legs on a pool honouring [`THREADS_ENV`]; results keep
/// the input order.
fn par_legs<T: Send>(lambdas: &[f64], f: impl Fn(f64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?;
    pool.install(|| lambdas.par_iter().map(|&l| f(l)).collect())
}

fn run_legs(base: &TrainConfig, lambdas: &[f64], epochs: usize) -> Result<SweepResult> {
    check_lambdas(lambdas)?;
    base.validate()?;
    let early = base.early_epoch();
    if base.epochs == 0 {
        return Err(Error::InvalidParams("sweep needs epochs >= 1".into()));
    }
    let runs = par_legs(lambdas, |lambda| {
        let cfg = base.with_weight_decay(lambda);
        let trace = train_epochs(&cfg, epochs)?;
        SweepRun::from_trace(lambda, trace, early)
    })?;
    Ok(SweepResult {
        runs,
        band: base.oui_band,
        early_epoch: early,
    })
}

/// One full training per weight-decay value, all seeds shared.
pub fn sweep(base: &TrainConfig, lambdas: &[f64]) -> Result<SweepResult> {
    run_legs(base, lambdas, base.epochs)
}

/// Sweep legs stopped at the early checkpoint `ceil(early_fraction · T)`;
/// the schedule still spans the full `T` epochs.
pub fn early_sweep(base: &TrainConfig, lambdas: &[f64]) -> Result<SweepResult> {
    run_legs(base, lambdas, base.early_epoch())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub lambda: f64,
    pub early_oui: f64,
    pub in_band: bool,
    /// Distance to the band midpoint when inside, to the nearest edge when
    /// outside.
    pub distance: f64,
}

/// Recommendation record, serialized as the documented JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub lambda_star: f64,
    pub in_band: bool,
    pub band: Band,
    pub early_epoch: usize,
    pub candidates: Vec<Candidate>,
}

/// Distances closer than this count as ties.
const TIE_EPS: f64 = 1e-12;

/// Picks λ from early OUI readings.
///
/// Among runs whose early OUI lies in the band, the one closest to the band
/// midpoint wins. With none in band, the run closest to the band wins and the
/// result is flagged `in_band = false`. Ties go to the larger λ.
pub fn recommend_wd(sweep: &SweepResult) -> Result<Recommendation> {
    let readings: Vec<(f64, f64)> = sweep.runs.iter().map(|r| (r.lambda, r.early_oui)).collect();
    recommend_from_readings(&readings, sweep.band, sweep.early_epoch)
}

/// [`recommend_wd`] over bare `(λ, early OUI)` readings.
pub fn recommend_from_readings(readings: &[(f64, f64)], band: Band, early_epoch: usize) -> Result<Recommendation> {
    if readings.is_empty() {
        return Err(Error::EmptySweep);
    }
    band.validate()?;
    let candidates: Vec<Candidate> = readings
        .iter()
        .map(|&(lambda, early_oui)| {
            let in_band = band.contains(early_oui);
            Candidate {
                lambda,
                early_oui,
                in_band,
                distance: if in_band {
                    (early_oui - band.midpoint()).abs()
                } else {
                    band.distance(early_oui)
                },
            }
        })
        .collect();
    let any_in_band = candidates.iter().any(|c| c.in_band);
    let best = candidates
        .iter()
        .filter(|c| c.in_band == any_in_band)
        .reduce(|best, c| {
            let closer = c.distance < best.distance - TIE_EPS;
            let tie_larger = (c.distance - best.distance).abs() <= TIE_EPS && c.lambda > best.lambda;
            if closer || tie_larger {
                c
            } else {
                best
            }
        })
        .expect("non-empty");
    Ok(Recommendation {
        lambda_star: best.lambda,
        in_band: any_in_band,
        band,
        early_epoch,
        candidates,
    })
}
