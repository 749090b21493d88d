//! Receding boundaries and stopping rules.
//!
//! A boundary g is a non-negative function on generations with g(0) = 0 by
//! convention; membership in the slope class c means g(1) >= c and
//! g(n+1) >= g(n) + c. Stopping rules carry their independence class:
//! (HM) rules are independent of the walk increments (they may depend on
//! the branching process), (MO) rules may look at the walk but never at
//! future increments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A receding boundary g(n).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Boundary {
    /// g(n) = c·n.
    Linear { c: f64 },
    /// g(n) = values[n-1] for 1 <= n <= len; beyond the table the boundary
    /// keeps climbing with its final increment.
    Tabulated { values: Vec<f64> },
    /// g(n) = c·n + values[n-1] (0 beyond the table).
    AffinePlusTable { c: f64, values: Vec<f64> },
}

impl Boundary {
    pub fn linear(c: f64) -> Self {
        Boundary::Linear { c }
    }

    pub fn zero() -> Self {
        Boundary::Linear { c: 0.0 }
    }

    pub fn tabulated(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidSpec("boundary values must be non-negative".into()));
        }
        Ok(Boundary::Tabulated { values })
    }

    /// g(n); g(0) = 0 always.
    pub fn eval(&self, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        match self {
            Boundary::Linear { c } => c * n as f64,
            Boundary::Tabulated { values } => {
                if values.is_empty() {
                    return 0.0;
                }
                let len = values.len() as u64;
                if n <= len {
                    values[(n - 1) as usize]
                } else {
                    let last = values[values.len() - 1];
                    let step = if values.len() >= 2 {
                        (last - values[values.len() - 2]).max(0.0)
                    } else {
                        last
                    };
                    last + step * (n - len) as f64
                }
            }
            Boundary::AffinePlusTable { c, values } => {
                let table = if n <= values.len() as u64 {
                    values[(n - 1) as usize]
                } else {
                    0.0
                };
                c * n as f64 + table
            }
        }
    }

    /// Nominal slope: the linear part for analytic tail summation.
    pub fn slope(&self) -> f64 {
        match self {
            Boundary::Linear { c } => *c,
            Boundary::Tabulated { values } => {
                if values.len() >= 2 {
                    (values[values.len() - 1] - values[values.len() - 2]).max(0.0)
                } else {
                    values.first().copied().unwrap_or(0.0)
                }
            }
            Boundary::AffinePlusTable { c, .. } => *c,
        }
    }
}

/// Outcome of the slope-class check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassCheck {
    Pass,
    /// First generation at which an inequality fails.
    FailAt { n: u64 },
}

/// Check g(1) >= c, g(n) >= 0 and g(n+1) >= g(n) + c for n up to `n_max`.
pub fn validate_class(b: &Boundary, c: f64, n_max: u64) -> ClassCheck {
    if b.eval(1) < c || b.eval(1) < 0.0 {
        return ClassCheck::FailAt { n: 1 };
    }
    for n in 1..n_max {
        if b.eval(n + 1) < b.eval(n) + c || b.eval(n + 1) < 0.0 {
            return ClassCheck::FailAt { n: n + 1 };
        }
    }
    ClassCheck::Pass
}

/// Independence class of a stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndependenceClass {
    /// Independent of the walk increments (may depend on the tree).
    Hm,
    /// Independent of future increments given the tree.
    Mo,
    Both,
}

impl IndependenceClass {
    pub fn satisfies_hm(self) -> bool {
        matches!(self, IndependenceClass::Hm | IndependenceClass::Both)
    }
    pub fn satisfies_mo(self) -> bool {
        matches!(self, IndependenceClass::Mo | IndependenceClass::Both)
    }
}

/// Marginal law of a stopping time drawn independently of the walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum MuLaw {
    /// P(μ = n) = p (1-p)^{n-1}, n >= 1.
    Geometric { p: f64 },
    /// Uniform on {lo, ..., hi}.
    Uniform { lo: u64, hi: u64 },
    /// P(μ >= n) = min(1, k2 · n^{-alpha}), n >= 1. Realized exactly as this
    /// survival function (clamped at small n), matching the documented law.
    PowerSurvival { k2: f64, alpha: f64 },
}

impl MuLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MuLaw::Geometric { p } => {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::ParameterOutOfRange {
                        name: "p",
                        value: p,
                        reason: "geometric parameter must be in (0,1]",
                    });
                }
            }
            MuLaw::Uniform { lo, hi } => {
                if lo == 0 || hi < lo {
                    return Err(Error::InvalidSpec("uniform stopping law needs 1 <= lo <= hi".into()));
                }
            }
            MuLaw::PowerSurvival { k2, alpha } => {
                if !(k2 > 0.0) || !(alpha > 0.0) {
                    return Err(Error::InvalidSpec(
                        "power-survival stopping law needs k2 > 0 and alpha > 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// P(μ >= n) for n >= 1.
    pub fn survival(&self, n: u64) -> f64 {
        debug_assert!(n >= 1);
        match *self {
            MuLaw::Geometric { p } => (1.0 - p).powi((n - 1) as i32),
            MuLaw::Uniform { lo, hi } => {
                if n <= lo {
                    1.0
                } else if n > hi {
                    0.0
                } else {
                    (hi - n + 1) as f64 / (hi - lo + 1) as f64
                }
            }
            MuLaw::PowerSurvival { k2, alpha } => (k2 * (n as f64).powf(-alpha)).min(1.0),
        }
    }

    /// E μ; +∞ for laws without a mean.
    pub fn mean(&self) -> f64 {
        match *self {
            MuLaw::Geometric { p } => 1.0 / p,
            MuLaw::Uniform { lo, hi } => 0.5 * (lo + hi) as f64,
            MuLaw::PowerSurvival { alpha, .. } => {
                if alpha > 1.0 {
                    // Σ survival(n) converges; summed directly with an
                    // integral tail below 1e-12.
                    let mut s = 0.0;
                    let mut n = 1u64;
                    loop {
                        let term = self.survival(n);
                        s += term;
                        n += 1;
                        if n > 1_000_000 || term < 1e-13 * s {
                            break;
                        }
                    }
                    s
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Bounded above (needed for the bounded-horizon uniformity class).
    pub fn upper_bound(&self) -> Option<u64> {
        match *self {
            MuLaw::Uniform { hi, .. } => Some(hi),
            _ => None,
        }
    }

    /// Draw μ from its own stream.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match *self {
            MuLaw::Geometric { p } => {
                let u: f64 = rng.sample(rand::distributions::OpenClosed01);
                // inversion: μ = ceil(ln u / ln(1-p)) on support {1, 2, ...}
                if p >= 1.0 {
                    1
                } else {
                    (u.ln() / (1.0 - p).ln()).ceil().max(1.0) as u64
                }
            }
            MuLaw::Uniform { lo, hi } => rng.gen_range(lo..=hi),
            MuLaw::PowerSurvival { .. } => {
                let u: f64 = rng.sample(rand::distributions::OpenClosed01);
                // smallest n with survival(n+1) < u, by doubling + bisection
                if self.survival(2) < u {
                    return 1;
                }
                let mut hi = 2u64;
                while self.survival(hi + 1) >= u {
                    hi *= 2;
                    if hi > (1 << 60) {
                        return hi;
                    }
                }
                let mut lo = hi / 2; // survival(lo+1) >= u
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    if self.survival(mid + 1) >= u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
        }
    }
}

/// A stopping rule with its declared independence class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StoppingRule {
    /// μ = N.
    Fixed { n: u64 },
    /// μ drawn from `law` before the walk, independent of everything.
    IndependentLaw { law: MuLaw },
    /// μ = ν, the fading time of the branching process.
    FadingTime,
    /// μ = inf{n >= 1 : r_n^g < -a}, optionally capped at `cap`. Uses the
    /// run's boundary, so it is a functional of past walk data only.
    FirstPassageBelow { a: f64, cap: Option<u64> },
    /// μ = ∞: run until every surviving lineage is so deep below the
    /// boundary that the residual crossing mass is provably below the
    /// configured fraction of the estimate.
    InfiniteHorizon {
        /// Extra depth below -(x + safety) before a run is abandoned; when
        /// absent, chosen from the residual-fraction constant.
        safety: Option<f64>,
    },
}

impl StoppingRule {
    /// The intrinsic independence class of the rule.
    pub fn independence_class(&self) -> IndependenceClass {
        match self {
            StoppingRule::Fixed { .. } | StoppingRule::IndependentLaw { .. } => {
                IndependenceClass::Both
            }
            StoppingRule::FadingTime => IndependenceClass::Hm,
            StoppingRule::FirstPassageBelow { .. } => IndependenceClass::Mo,
            StoppingRule::InfiniteHorizon { .. } => IndependenceClass::Both,
        }
    }

    /// Reject declared classes the rule cannot honour.
    pub fn check_declared_class(&self, declared: IndependenceClass) -> Result<()> {
        let actual = self.independence_class();
        let ok = match declared {
            IndependenceClass::Both => actual == IndependenceClass::Both,
            IndependenceClass::Hm => actual.satisfies_hm(),
            IndependenceClass::Mo => actual.satisfies_mo(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::HypothesisViolation(format!(
                "stopping rule {self:?} declared {declared:?} but is {actual:?}"
            )))
        }
    }

    /// Upper bound on μ when one exists.
    pub fn upper_bound(&self) -> Option<u64> {
        match self {
            StoppingRule::Fixed { n } => Some(*n),
            StoppingRule::IndependentLaw { law } => law.upper_bound(),
            StoppingRule::FirstPassageBelow { cap, .. } => *cap,
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StoppingRule::IndependentLaw { law } => law.validate(),
            StoppingRule::FirstPassageBelow { a, .. } => {
                if !(*a >= 0.0) {
                    return Err(Error::ParameterOutOfRange {
                        name: "a",
                        value: *a,
                        reason: "first-passage level must be non-negative",
                    });
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}
