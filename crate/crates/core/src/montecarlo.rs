//! Replication management and crossing-probability estimators.
//!
//! Replications are dispatched in fixed-size batches; replication r always
//! draws its streams from (master_seed, r), so estimates are bit-identical
//! across worker counts and run-to-run. Batch partials are merged in batch
//! order, which keeps floating-point reduction deterministic.
//!
//! Two estimators target P(R_μ^g > x): a crude indicator average, and the
//! conditional single-big-jump estimator for probabilities far below what
//! crude replication can resolve. Big-jump results are only trusted after a
//! calibration run where both estimators are feasible.

use rayon::prelude::*;
use serde::Serialize;

use crate::boundaries::StoppingRule;
use crate::brw_engine::{big_jump_weight, simulate_crossing, WalkParams};
use crate::constants::{BATCH_SIZE, CI_Z, CRUDE_MIN_EXPECTED_HITS, RESIDUAL_FRACTION, WILSON_HIT_THRESHOLD};
use crate::error::{Error, Result};
use crate::rng::ReplicationRngs;

/// Estimator selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Crude,
    BigJump,
    /// Crude when the expected hit count clears `CRUDE_MIN_EXPECTED_HITS`,
    /// big-jump otherwise. Needs an analytic proxy for the expectation.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Crude,
    BigJump,
}

impl EstimatorKind {
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Crude => "crude",
            EstimatorKind::BigJump => "big-jump",
        }
    }
}

/// Crude-vs-big-jump comparison at a point where both are feasible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationDiagnostic {
    pub x: f64,
    pub crude: f64,
    pub crude_se: f64,
    pub big_jump: f64,
    pub big_jump_se: f64,
}

/// A Monte Carlo point estimate with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub estimate: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub n_runs: u64,
    pub kind: EstimatorKind,
    pub master_seed: u64,
    /// Hit count (crude estimator only).
    pub hits: Option<u64>,
    /// Fraction of replications cut off by the horizon cap.
    pub cap_fraction: f64,
    /// Veraverbeke-style bound on the abandoned mass (infinite-horizon runs).
    pub residual_bound: Option<f64>,
    pub calibration: Option<CalibrationDiagnostic>,
}

/// Replication index offset separating calibration runs from main runs in
/// the stream space.
const CALIBRATION_REP_OFFSET: u64 = 1 << 40;

fn batch_ranges(n_runs: u64) -> Vec<(u64, u64)> {
    let mut v = Vec::new();
    let mut start = 0;
    while start < n_runs {
        let end = (start + BATCH_SIZE).min(n_runs);
        v.push((start, end));
        start = end;
    }
    v
}

#[derive(Default, Clone, Copy)]
struct CrudeBatch {
    hits: u64,
    capped: u64,
}

#[derive(Default, Clone, Copy)]
struct WeightBatch {
    sum: f64,
    sumsq: f64,
}

/// Crude estimator: fraction of replications with R_μ^g > x.
fn crude_estimate(
    params: &WalkParams,
    x: f64,
    safety: f64,
    n_runs: u64,
    master_seed: u64,
    rep_offset: u64,
) -> Result<EstimateResult> {
    let batches: Vec<Result<CrudeBatch>> = batch_ranges(n_runs)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut acc = CrudeBatch::default();
            for rep in lo..hi {
                let mut rngs = ReplicationRngs::derive(master_seed, rep_offset + rep);
                let out = simulate_crossing(params, x, safety, &mut rngs)?;
                acc.hits += out.hit as u64;
                acc.capped += out.capped as u64;
            }
            Ok(acc)
        })
        .collect();

    let mut hits = 0u64;
    let mut capped = 0u64;
    for b in batches {
        let b = b?;
        hits += b.hits;
        capped += b.capped;
    }
    let n = n_runs as f64;
    let p = hits as f64 / n;
    let se = (p * (1.0 - p) / n).sqrt();
    let ci = if hits < WILSON_HIT_THRESHOLD {
        wilson_interval(hits, n_runs)
    } else {
        (p - CI_Z * se, p + CI_Z * se)
    };
    Ok(EstimateResult {
        estimate: p,
        se,
        ci,
        n_runs,
        kind: EstimatorKind::Crude,
        master_seed,
        hits: Some(hits),
        cap_fraction: capped as f64 / n,
        residual_bound: None,
        calibration: None,
    })
}

fn big_jump_raw(
    params: &WalkParams,
    x: f64,
    n_runs: u64,
    master_seed: u64,
    rep_offset: u64,
) -> Result<(f64, f64)> {
    let batches: Vec<Result<WeightBatch>> = batch_ranges(n_runs)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut acc = WeightBatch::default();
            for rep in lo..hi {
                let mut rngs = ReplicationRngs::derive(master_seed, rep_offset + rep);
                let w = big_jump_weight(params, x, &mut rngs)?;
                acc.sum += w;
                acc.sumsq += w * w;
            }
            Ok(acc)
        })
        .collect();
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for b in batches {
        let b = b?;
        sum += b.sum;
        sumsq += b.sumsq;
    }
    let n = n_runs as f64;
    let mean = sum / n;
    let var = (sumsq / n - mean * mean).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

/// Wilson score interval, used when the hit count is too small for the
/// normal approximation.
fn wilson_interval(hits: u64, n: u64) -> (f64, f64) {
    let (h, n) = (hits as f64, n as f64);
    let p = h / n;
    let z2 = CI_Z * CI_Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = CI_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Depth below the boundary at which an infinite-horizon replication may be
/// abandoned: chosen so the residual bound (L/c)·F̄_I(x + depth) is half the
/// residual-fraction budget of the proxy estimate (L/c)·F̄_I(x).
pub fn auto_safety(params: &WalkParams, x: f64) -> Result<f64> {
    let c = params.boundary.slope();
    if !(c > 0.0) {
        return Err(Error::HypothesisViolation(
            "infinite-horizon runs need a boundary with positive slope".into(),
        ));
    }
    let target = 0.5 * RESIDUAL_FRACTION * params.law.integrated_tail(x)?;
    let mut safety = 1.0f64;
    while params.law.integrated_tail(2.0 * x + safety)? > target {
        safety *= 2.0;
        if safety > 1e12 {
            return Err(Error::NonSummable("cannot meet the residual budget".into()));
        }
    }
    Ok(safety)
}

fn residual_bound(params: &WalkParams, x: f64, safety: f64) -> Result<f64> {
    let l = params.env.fading_product();
    let c = params.boundary.slope();
    Ok(l / c * params.law.integrated_tail(2.0 * x + safety)?)
}

/// Estimate P(R_μ^g > x).
///
/// `Auto` mode needs `expected_proxy` (usually the analytic asymptote) to
/// pick the estimator; `Crude` and `BigJump` ignore it. Results are
/// bit-identical for identical (config, master_seed, n_runs), regardless of
/// the rayon worker count.
pub fn estimate_crossing(
    params: &WalkParams,
    x: f64,
    n_runs: u64,
    mode: Mode,
    master_seed: u64,
    expected_proxy: Option<f64>,
) -> Result<EstimateResult> {
    if x == f64::NEG_INFINITY {
        return Ok(EstimateResult {
            estimate: 1.0,
            se: 0.0,
            ci: (1.0, 1.0),
            n_runs,
            kind: EstimatorKind::Crude,
            master_seed,
            hits: Some(n_runs),
            cap_fraction: 0.0,
            residual_bound: None,
            calibration: None,
        });
    }
    let kind = match mode {
        Mode::Crude => EstimatorKind::Crude,
        Mode::BigJump => EstimatorKind::BigJump,
        Mode::Auto => {
            let proxy = expected_proxy.ok_or_else(|| {
                Error::InvalidSpec("auto mode needs an analytic proxy for the hit rate".into())
            })?;
            if proxy * n_runs as f64 >= CRUDE_MIN_EXPECTED_HITS {
                EstimatorKind::Crude
            } else {
                EstimatorKind::BigJump
            }
        }
    };

    match kind {
        EstimatorKind::Crude => {
            let infinite = matches!(params.stop, StoppingRule::InfiniteHorizon { .. });
            let safety = match params.stop {
                StoppingRule::InfiniteHorizon { safety: Some(s) } => *s,
                StoppingRule::InfiniteHorizon { safety: None } => auto_safety(params, x)?,
                _ => 0.0,
            };
            let mut r = crude_estimate(params, x, safety, n_runs, master_seed, 0)?;
            if infinite {
                r.residual_bound = Some(residual_bound(params, x, safety)?);
            }
            Ok(r)
        }
        EstimatorKind::BigJump => {
            let calibration = calibrate_big_jump(params, master_seed)?;
            let (mean, se) = big_jump_raw(params, x, n_runs, master_seed, 0)?;
            let estimate = mean.min(1.0);
            Ok(EstimateResult {
                estimate,
                se,
                ci: ((estimate - CI_Z * se).max(0.0), (estimate + CI_Z * se).min(1.0)),
                n_runs,
                kind: EstimatorKind::BigJump,
                master_seed,
                hits: None,
                cap_fraction: 0.0,
                residual_bound: None,
                calibration: Some(calibration),
            })
        }
    }
}

/// Run the mandatory big-jump calibration: pick x_cal in the bulk where the
/// crude estimator resolves the probability comfortably, then require the
/// two estimators to agree within 3 combined standard errors.
pub fn calibrate_big_jump(params: &WalkParams, master_seed: u64) -> Result<CalibrationDiagnostic> {
    // The estimator's relative bias shrinks with the crossing probability,
    // so calibrate deep enough that the bias sits inside the crude noise
    // band while the crude estimator still resolves the probability.
    let x_cal = params.law.tail_quantile(0.002);
    let n_cal = 400_000u64;
    let crude = crude_estimate(params, x_cal, 0.0, n_cal, master_seed, CALIBRATION_REP_OFFSET)?;
    let (bj_mean, bj_se) =
        big_jump_raw(params, x_cal, n_cal, master_seed, 2 * CALIBRATION_REP_OFFSET)?;
    let diag = CalibrationDiagnostic {
        x: x_cal,
        crude: crude.estimate,
        crude_se: crude.se,
        big_jump: bj_mean,
        big_jump_se: bj_se,
    };
    let combined = (crude.se * crude.se + bj_se * bj_se).sqrt();
    if (crude.estimate - bj_mean).abs() > 3.0 * combined {
        return Err(Error::CalibrationFailed {
            x: x_cal,
            crude: crude.estimate,
            crude_se: crude.se,
            big_jump: bj_mean,
            big_jump_se: bj_se,
        });
    }
    Ok(diag)
}

/// The big-jump estimator as a standalone operation (always calibrated).
pub fn big_jump_estimate(
    params: &WalkParams,
    x: f64,
    n_runs: u64,
    master_seed: u64,
) -> Result<EstimateResult> {
    estimate_crossing(params, x, n_runs, Mode::BigJump, master_seed, None)
}

/// One row of a ratio study: estimate vs analytic asymptote at a grid point.
#[derive(Debug, Clone, Serialize)]
pub struct RatioRow {
    pub x: f64,
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub analytic: f64,
    pub ratio: f64,
    pub ratio_se: f64,
    pub mode: &'static str,
    pub n_runs: u64,
    pub seed: u64,
    pub residual_bound: Option<f64>,
}

/// Estimate over an increasing grid and compare with `analytic`, picking the
/// estimator per point in `Auto` mode (crude where the expected hit count
/// clears the threshold). The same master seed serves every point, so the
/// per-point estimates share replications (common random numbers).
pub fn ratio_study(
    params: &WalkParams,
    x_grid: &[f64],
    n_runs: u64,
    mode: Mode,
    master_seed: u64,
    analytic: &dyn Fn(f64) -> Result<f64>,
) -> Result<Vec<RatioRow>> {
    if x_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSpec("ratio-study grid must be increasing".into()));
    }
    let mut rows = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let a = analytic(x)?;
        let est = estimate_crossing(params, x, n_runs, mode, master_seed, Some(a))?;
        rows.push(RatioRow {
            x,
            estimate: est.estimate,
            se: est.se,
            ci_lo: est.ci.0,
            ci_hi: est.ci.1,
            analytic: a,
            ratio: est.estimate / a,
            ratio_se: est.se / a,
            mode: est.kind.label(),
            n_runs,
            seed: master_seed,
            residual_bound: est.residual_bound,
        });
    }
    Ok(rows)
}
