//! Verdict thresholds and estimator tuning constants.
//!
//! The asymptotic statements checked by the harness come without rates, so
//! the pass bands are deliberately generous. Everything that decides a
//! verdict lives here and is echoed into every report.

/// Acceptable band for a final estimate/asymptote ratio.
pub const RATIO_BAND: (f64, f64) = (0.7, 1.3);

/// Tolerance on fitted log-log slopes in ratio studies.
pub const SLOPE_TOL: f64 = 0.1;

/// Tolerance on the fitted slope of the analytic tail series in the
/// power-law stopping-time study.
pub const POWER_STUDY_SLOPE_TOL: f64 = 0.05;

/// A class-membership ratio diagnostic is "consistent" when the ratio at the
/// largest grid point is within this relative distance of its limit.
pub const CLASS_CONSISTENT_TOL: f64 = 0.10;

/// Crude Monte Carlo is auto-selected when the expected number of hits
/// (analytic proxy times run count) is at least this many.
pub const CRUDE_MIN_EXPECTED_HITS: f64 = 100.0;

/// Below this many hits, probability confidence intervals switch from the
/// normal approximation to Wilson intervals.
pub const WILSON_HIT_THRESHOLD: u64 = 30;

/// Infinite-horizon runs stop deep enough that the reported residual bound
/// is below this fraction of the running estimate.
pub const RESIDUAL_FRACTION: f64 = 0.1;

/// Final maximum deviation |ratio - 1| allowed in the bounded-horizon
/// uniformity battery.
pub const UNIFORM_FINAL_MAX_DEV: f64 = 0.3;

/// Default generation cap for walk realizations.
pub const DEFAULT_HORIZON_CAP: u64 = 10_000;

/// Replications per batch in the deterministic parallel seeding scheme.
/// Changing it changes the meaning of a master seed.
pub const BATCH_SIZE: u64 = 1024;

/// Half-width multiplier for 95% confidence intervals.
pub const CI_Z: f64 = 1.96;
