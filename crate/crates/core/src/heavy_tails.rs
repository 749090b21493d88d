//! Zero-mean heavy-tailed increment laws.
//!
//! Each family is a standard positive-support law recentred by its mean, so
//! every `IncrementLaw` has E ξ = 0 by construction. The module exposes the
//! right tail, the integrated tail, the mean of the positive part, exact
//! samplers, a per-family insensitivity scale h(x), and numeric diagnostics
//! for membership in the long-tailed / subexponential / strong-subexponential
//! classes. The exponential family is deliberately light-tailed and serves
//! as a negative control for those diagnostics.

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::distributions::OpenClosed01;
use rand::Rng;
use serde::Serialize;
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::quadrature;

/// Standard normal right tail.
fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// A point mass of the lattice family, kept in exact rational form.
#[derive(Debug, Clone)]
struct LatticePoint {
    value: Ratio<i128>,
    prob: Ratio<i128>,
    value_f: f64,
    prob_f: f64,
}

#[derive(Debug, Clone)]
enum Family {
    /// Raw tail (1 + t/scale)^{-beta} on t >= 0; requires beta > 1.
    Pareto { beta: f64, scale: f64 },
    /// Raw law exp(log_mean + log_sd * N(0,1)).
    Lognormal { log_mean: f64, log_sd: f64 },
    /// Raw tail exp(-t^gamma) on t >= 0 with gamma in (0,1).
    Weibull { gamma: f64 },
    /// Exact rational masses, already centred to mean zero.
    Lattice { points: Vec<LatticePoint>, cum: Vec<f64> },
    /// Light-tailed control: raw Exp(rate).
    Exponential { rate: f64 },
}

/// A zero-mean increment distribution with closed-form tail machinery.
#[derive(Debug, Clone)]
pub struct IncrementLaw {
    family: Family,
    /// Mean of the raw positive-support law; the increment is raw - shift.
    shift: f64,
    /// Optional override for the insensitivity-scale exponent.
    h_exponent: Option<f64>,
}

impl IncrementLaw {
    pub fn shifted_pareto(beta: f64, scale: f64) -> Result<Self> {
        if !(beta > 1.0) || !beta.is_finite() {
            return Err(Error::UnboundedPositiveMean(format!(
                "pareto tail index beta = {beta} must exceed 1 for a finite mean"
            )));
        }
        if !(scale > 0.0) {
            return Err(Error::ParameterOutOfRange {
                name: "scale",
                value: scale,
                reason: "must be positive",
            });
        }
        Ok(IncrementLaw {
            family: Family::Pareto { beta, scale },
            shift: scale / (beta - 1.0),
            h_exponent: None,
        })
    }

    pub fn shifted_lognormal(log_mean: f64, log_sd: f64) -> Result<Self> {
        if !(log_sd > 0.0) {
            return Err(Error::ParameterOutOfRange {
                name: "log_sd",
                value: log_sd,
                reason: "must be positive",
            });
        }
        Ok(IncrementLaw {
            family: Family::Lognormal { log_mean, log_sd },
            shift: (log_mean + 0.5 * log_sd * log_sd).exp(),
            h_exponent: None,
        })
    }

    pub fn shifted_weibull(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::ParameterOutOfRange {
                name: "gamma",
                value: gamma,
                reason: "heavy-tailed Weibull needs gamma in (0,1)",
            });
        }
        Ok(IncrementLaw {
            family: Family::Weibull { gamma },
            shift: ln_gamma(1.0 + 1.0 / gamma).exp(),
            h_exponent: None,
        })
    }

    pub fn exponential_control(rate: f64) -> Result<Self> {
        if !(rate > 0.0) {
            return Err(Error::ParameterOutOfRange {
                name: "rate",
                value: rate,
                reason: "must be positive",
            });
        }
        Ok(IncrementLaw {
            family: Family::Exponential { rate },
            shift: 1.0 / rate,
            h_exponent: None,
        })
    }

    /// Build a lattice law from exact rational `(value, probability)` pairs.
    ///
    /// Probabilities must be positive and sum to 1 exactly. Values are
    /// recentred by the (rational) mean, so the result is exactly mean zero.
    pub fn discrete_lattice(masses: &[((i64, i64), (i64, i64))]) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::InvalidSpec("lattice law needs at least one mass".into()));
        }
        let mut pts: Vec<(Ratio<i128>, Ratio<i128>)> = Vec::with_capacity(masses.len());
        for &((vn, vd), (pn, pd)) in masses {
            if vd == 0 || pd == 0 {
                return Err(Error::InvalidSpec("zero denominator in lattice mass".into()));
            }
            let p = Ratio::new(pn as i128, pd as i128);
            if !p.is_positive() {
                return Err(Error::InvalidSpec("lattice probabilities must be positive".into()));
            }
            pts.push((Ratio::new(vn as i128, vd as i128), p));
        }
        let total: Ratio<i128> = pts.iter().map(|(_, p)| p).sum();
        if total != Ratio::from_integer(1) {
            return Err(Error::InvalidSpec(format!(
                "lattice probabilities sum to {total}, expected exactly 1"
            )));
        }
        let mean: Ratio<i128> = pts.iter().map(|(v, p)| v * p).sum();
        let mut points: Vec<LatticePoint> = pts
            .into_iter()
            .map(|(v, p)| {
                let centred = v - mean;
                LatticePoint {
                    value_f: ratio_to_f64(centred),
                    prob_f: ratio_to_f64(p),
                    value: centred,
                    prob: p,
                }
            })
            .collect();
        points.sort_by(|a, b| a.value.cmp(&b.value));
        let mut cum = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        for p in &points {
            acc += p.prob_f;
            cum.push(acc);
        }
        if let Some(last) = cum.last_mut() {
            *last = 1.0;
        }
        Ok(IncrementLaw {
            family: Family::Lattice { points, cum },
            shift: ratio_to_f64(mean),
            h_exponent: None,
        })
    }

    /// Override the insensitivity-scale exponent: h(x) = max(x,1)^e.
    pub fn with_insensitivity_exponent(mut self, e: f64) -> Self {
        self.h_exponent = Some(e);
        self
    }

    pub fn family_name(&self) -> &'static str {
        match &self.family {
            Family::Pareto { .. } => "shifted-pareto",
            Family::Lognormal { .. } => "shifted-lognormal",
            Family::Weibull { .. } => "shifted-weibull",
            Family::Lattice { .. } => "discrete-lattice",
            Family::Exponential { .. } => "exponential-control",
        }
    }

    /// The centring shift: the increment is (raw law) - shift.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Infimum of the support.
    pub fn lower_support(&self) -> f64 {
        match &self.family {
            Family::Lattice { points, .. } => points[0].value_f,
            _ => -self.shift,
        }
    }

    pub fn is_lattice(&self) -> bool {
        matches!(self.family, Family::Lattice { .. })
    }

    /// Exact rational masses of the lattice family (centred values).
    pub fn lattice_masses(&self) -> Option<Vec<((i128, i128), (i128, i128))>> {
        match &self.family {
            Family::Lattice { points, .. } => Some(
                points
                    .iter()
                    .map(|p| {
                        (
                            (*p.value.numer(), *p.value.denom()),
                            (*p.prob.numer(), *p.prob.denom()),
                        )
                    })
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Right tail F̄(x) = P(ξ > x).
    pub fn tail(&self, x: f64) -> f64 {
        let t = x + self.shift; // raw-law coordinate
        match &self.family {
            Family::Pareto { beta, scale } => {
                if t <= 0.0 {
                    1.0
                } else {
                    (1.0 + t / scale).powf(-beta)
                }
            }
            Family::Lognormal { log_mean, log_sd } => {
                if t <= 0.0 {
                    1.0
                } else {
                    normal_sf((t.ln() - log_mean) / log_sd)
                }
            }
            Family::Weibull { gamma } => {
                if t <= 0.0 {
                    1.0
                } else {
                    (-t.powf(*gamma)).exp()
                }
            }
            Family::Exponential { rate } => {
                if t <= 0.0 {
                    1.0
                } else {
                    (-rate * t).exp()
                }
            }
            Family::Lattice { points, .. } => {
                points.iter().filter(|p| p.value_f > x).map(|p| p.prob_f).sum()
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.tail(x)
    }

    /// Smallest x with F̄(x) <= p (tail quantile), by bisection.
    pub fn tail_quantile(&self, p: f64) -> f64 {
        assert!(p > 0.0 && p < 1.0);
        let mut lo = self.lower_support();
        let mut hi = lo.abs().max(1.0);
        while self.tail(hi) > p {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.tail(mid) > p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// ln F̄(x), usable where the tail itself underflows f64.
    pub fn log_tail(&self, x: f64) -> f64 {
        let t = x + self.shift;
        match &self.family {
            Family::Pareto { beta, scale } => {
                if t <= 0.0 {
                    0.0
                } else {
                    -beta * (1.0 + t / scale).ln()
                }
            }
            Family::Weibull { gamma } => {
                if t <= 0.0 {
                    0.0
                } else {
                    -t.powf(*gamma)
                }
            }
            Family::Exponential { rate } => {
                if t <= 0.0 {
                    0.0
                } else {
                    -rate * t
                }
            }
            Family::Lognormal { .. } | Family::Lattice { .. } => self.tail(x).ln(),
        }
    }

    /// Density of the continuous families (zero outside the support).
    /// The lattice family has no density; callers must branch on
    /// `is_lattice` first.
    pub(crate) fn density(&self, x: f64) -> f64 {
        let t = x + self.shift;
        match &self.family {
            Family::Pareto { beta, scale } => {
                if t < 0.0 {
                    0.0
                } else {
                    (beta / scale) * (1.0 + t / scale).powf(-beta - 1.0)
                }
            }
            Family::Lognormal { log_mean, log_sd } => {
                if t <= 0.0 {
                    0.0
                } else {
                    normal_pdf((t.ln() - log_mean) / log_sd) / (t * log_sd)
                }
            }
            Family::Weibull { gamma } => {
                if t <= 0.0 {
                    0.0
                } else {
                    gamma * t.powf(gamma - 1.0) * (-t.powf(*gamma)).exp()
                }
            }
            Family::Exponential { rate } => {
                if t < 0.0 {
                    0.0
                } else {
                    rate * (-rate * t).exp()
                }
            }
            Family::Lattice { .. } => f64::NAN,
        }
    }

    /// Unclamped tail integral E (ξ - x)^+ = ∫_x^∞ F̄(y) dy.
    fn tail_integral(&self, x: f64) -> f64 {
        let lo = self.lower_support();
        if x <= lo {
            // mean zero: E (ξ - x)^+ = -x below the support
            return -x;
        }
        let t = x + self.shift;
        match &self.family {
            Family::Pareto { beta, scale } => {
                scale / (beta - 1.0) * (1.0 + t / scale).powf(1.0 - beta)
            }
            Family::Lognormal { log_mean, log_sd } => {
                // Partial expectation of the raw lognormal above t.
                let z = (t.ln() - log_mean) / log_sd;
                self.shift * normal_sf(z - log_sd) - t * normal_sf(z)
            }
            Family::Weibull { gamma } => {
                // ∫_t^∞ e^{-u^γ} du = (1/γ) Γ(1/γ) Q(1/γ, t^γ)
                let a = 1.0 / gamma;
                a * ln_gamma(a).exp() * upper_reg_gamma(a, t.powf(*gamma))
            }
            Family::Exponential { rate } => (-rate * t).exp() / rate,
            Family::Lattice { points, .. } => points
                .iter()
                .filter(|p| p.value_f > x)
                .map(|p| p.prob_f * (p.value_f - x))
                .sum(),
        }
    }

    /// Integrated tail F̄_I(x) = min{1, ∫_x^∞ F̄(y) dy}.
    pub fn integrated_tail(&self, x: f64) -> Result<f64> {
        self.positive_mean()?;
        Ok(self.tail_integral(x).min(1.0))
    }

    /// Mean of the positive part, m⁺ = ∫_0^∞ F̄(y) dy = E max(ξ, 0).
    pub fn positive_mean(&self) -> Result<f64> {
        // Families with an infinite positive mean are rejected at
        // construction, so the value here is always finite.
        let m = self.tail_integral(0.0);
        if m.is_finite() {
            Ok(m)
        } else {
            Err(Error::UnboundedPositiveMean(self.family_name().into()))
        }
    }

    /// Draw one increment.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(OpenClosed01); // u in (0,1], safe under ln
        match &self.family {
            Family::Pareto { beta, scale } => scale * (u.powf(-1.0 / beta) - 1.0) - self.shift,
            Family::Lognormal { log_mean, log_sd } => {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                (log_mean + log_sd * z).exp() - self.shift
            }
            Family::Weibull { gamma } => (-u.ln()).powf(1.0 / gamma) - self.shift,
            Family::Exponential { rate } => -u.ln() / rate - self.shift,
            Family::Lattice { points, cum } => {
                let idx = cum.partition_point(|&c| c < u).min(points.len() - 1);
                points[idx].value_f
            }
        }
    }

    /// Draw an increment conditioned on ξ <= bound (rejection sampling; the
    /// bound is always far in the bulk for the callers here).
    pub fn sample_below<R: Rng + ?Sized>(&self, bound: f64, rng: &mut R) -> f64 {
        for _ in 0..100_000 {
            let x = self.sample(rng);
            if x <= bound {
                return x;
            }
        }
        bound
    }

    /// E[ξ | ξ <= bound]: clipping the right tail drags the mean below 0 by
    /// (bound·F̄(bound) + ∫_bound^∞ F̄) / F(bound).
    pub fn conditional_mean_below(&self, bound: f64) -> f64 {
        let below = self.cdf(bound);
        if below <= 0.0 {
            return self.lower_support();
        }
        -(bound * self.tail(bound) + self.tail_integral(bound)) / below
    }

    /// Insensitivity scale h(x): grows to infinity, is o(x), and satisfies
    /// F̄(x ± h(x)) ~ F̄(x) for the long-tailed families.
    ///
    /// Conventions: sqrt(x) for the Pareto and lognormal families,
    /// x^{min((1-γ)/2, 0.2)} for Weibull(γ). Overridable per law.
    pub fn insensitivity_scale(&self, x: f64) -> Result<f64> {
        let e = match (&self.family, self.h_exponent) {
            (_, Some(e)) => e,
            (Family::Pareto { .. }, None) | (Family::Lognormal { .. }, None) => 0.5,
            (Family::Weibull { gamma }, None) => ((1.0 - gamma) / 2.0).min(0.2),
            (Family::Exponential { .. }, None) | (Family::Lattice { .. }, None) => {
                return Err(Error::NotLongTailed(self.family_name().into()))
            }
        };
        Ok(x.max(1.0).powf(e))
    }

    /// ∫_{lo}^{upper} f(y) g(y) dy against this law's density, in a
    /// per-family transformed variable that keeps the integrand smooth.
    /// `upper = f64::INFINITY` integrates over the whole support.
    pub(crate) fn integrate_against_density<G: Fn(f64) -> f64>(
        &self,
        upper: f64,
        g: G,
        rel_tol: f64,
    ) -> f64 {
        let lo = self.lower_support();
        if upper <= lo {
            return 0.0;
        }
        match &self.family {
            Family::Pareto { .. } | Family::Exponential { .. } => {
                let f = |y: f64| self.density(y) * g(y);
                if upper.is_finite() {
                    let bp = quadrature::log_spaced_breakpoints(lo, upper);
                    quadrature::integrate_segmented(&f, &bp, rel_tol, 0.0).value
                } else {
                    let head_end = lo + 64.0;
                    let bp = quadrature::log_spaced_breakpoints(lo, head_end);
                    let head = quadrature::integrate_segmented(&f, &bp, rel_tol, 0.0).value;
                    let tail = quadrature::integrate_to_inf(f, head_end, rel_tol, 0.0).value;
                    head + tail
                }
            }
            Family::Weibull { gamma } => {
                // u = (y + shift)^γ turns f(y) dy into e^{-u} du exactly.
                let s = self.shift;
                let gu = |u: f64| (-u).exp() * g(u.powf(1.0 / gamma) - s);
                let u_hi = if upper.is_finite() {
                    (upper + s).powf(*gamma)
                } else {
                    // e^{-u} below 1e-20 contributes nothing at our tolerances
                    46.0
                };
                let bp = quadrature::log_spaced_breakpoints(0.0, u_hi);
                quadrature::integrate_segmented(&gu, &bp, rel_tol, 0.0).value
            }
            Family::Lognormal { log_mean, log_sd } => {
                // u = ln(y + shift) turns f(y) dy into a normal density in u.
                let s = self.shift;
                let (m, sd) = (*log_mean, *log_sd);
                let gu = |u: f64| normal_pdf((u - m) / sd) / sd * g(u.exp() - s);
                let u_lo = m - 12.0 * sd;
                let u_hi = if upper.is_finite() {
                    (upper + s).ln()
                } else {
                    m + 12.0 * sd
                };
                if u_hi <= u_lo {
                    return 0.0;
                }
                quadrature::integrate(&gu, u_lo, u_hi, rel_tol, 0.0).value
            }
            Family::Lattice { points, .. } => points
                .iter()
                .filter(|p| p.value_f <= upper)
                .map(|p| p.prob_f * g(p.value_f))
                .sum(),
        }
    }

    /// Raw-law mean recomputed by quadrature; equals `shift()` up to the
    /// quadrature tolerance. Exists so tests can cross-check the analytic
    /// centring shifts.
    pub fn raw_mean_by_quadrature(&self) -> f64 {
        let s = self.shift;
        self.integrate_against_density(f64::INFINITY, |y| y + s, 1e-12)
    }

    /// Tail of the twofold convolution, P(ξ₁ + ξ₂ > x).
    pub(crate) fn convolution_tail(&self, x: f64, rel_tol: f64) -> f64 {
        if let Family::Lattice { points, .. } = &self.family {
            let mut p = 0.0;
            for a in points {
                for b in points {
                    if a.value_f + b.value_f > x {
                        p += a.prob_f * b.prob_f;
                    }
                }
            }
            return p;
        }
        // P(X+Y > x) = 2 P(X+Y > x, Y <= x/2) + P(X > x/2)^2, with the first
        // term integrated against the density of Y.
        let half_tail = self.tail(0.5 * x);
        2.0 * self.integrate_against_density(0.5 * x, |y| self.tail(x - y), rel_tol)
            + half_tail * half_tail
    }

    /// ∫_0^x F̄(x-y) F̄(y) dy, the strong-subexponentiality integrand.
    pub(crate) fn tail_product_integral(&self, x: f64, rel_tol: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        // Symmetric about x/2.
        let f = |y: f64| self.tail(x - y) * self.tail(y);
        let bp = quadrature::log_spaced_breakpoints(0.0, 0.5 * x);
        2.0 * quadrature::integrate_segmented(&f, &bp, rel_tol, 0.0).value
    }
}

fn ratio_to_f64(r: Ratio<i128>) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
}

/// Regularized upper incomplete gamma Q(a, x), guarded at the origin.
fn upper_reg_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(a, x)
    }
}

// ---------------------------------------------------------------------------
// Class-membership diagnostics
// ---------------------------------------------------------------------------

/// Heavy-tail classes the diagnostics can probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailClass {
    /// F̄(x+1)/F̄(x) -> 1
    LongTailed,
    /// convolution tail / F̄ -> 2
    Subexponential,
    /// ∫_0^x F̄(x-y)F̄(y) dy / (2 m⁺ F̄(x)) -> 1
    StrongSubexponential,
}

impl TailClass {
    pub fn limit(self) -> f64 {
        match self {
            TailClass::LongTailed | TailClass::StrongSubexponential => 1.0,
            TailClass::Subexponential => 2.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TailClass::LongTailed => "L",
            TailClass::Subexponential => "S",
            TailClass::StrongSubexponential => "S*",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassVerdict {
    Consistent,
    Inconsistent,
    Inconclusive,
}

/// Outcome of a numeric class-membership probe. This is a diagnostic, not a
/// proof: the verdict states whether the ratio behaves like the class limit
/// over the supplied grid.
#[derive(Debug, Clone, Serialize)]
pub struct ClassReport {
    pub class: TailClass,
    pub grid: Vec<f64>,
    pub ratios: Vec<f64>,
    pub limit: f64,
    pub verdict: ClassVerdict,
    /// Grid range that supports the verdict (the last three points).
    pub supporting_range: (f64, f64),
}

/// Ratio diagnostic for membership of `law` in `class` over `x_grid`.
///
/// Verdict rule: consistent when the ratio at the largest grid point is
/// within 10% of the class limit and |ratio - limit| shrinks monotonically
/// over the last three grid points; inconsistent when the final ratio is off
/// by more than 10%; inconclusive otherwise.
pub fn check_class_membership(
    law: &IncrementLaw,
    class: TailClass,
    x_grid: &[f64],
) -> Result<ClassReport> {
    let view = TailView::Direct(law);
    check_class_on_view(&view, class, x_grid)
}

/// Same diagnostic applied to the integrated-tail distribution of `law`
/// (tail F̄_I, density F̄ where F̄_I < 1). Only the long-tailed and
/// subexponential probes make sense here.
pub fn check_integrated_class_membership(
    law: &IncrementLaw,
    class: TailClass,
    x_grid: &[f64],
) -> Result<ClassReport> {
    if class == TailClass::StrongSubexponential {
        return Err(Error::InvalidSpec(
            "strong-subexponential probe is defined for the law itself, not its integrated tail"
                .into(),
        ));
    }
    let view = TailView::Integrated(law);
    check_class_on_view(&view, class, x_grid)
}

/// A distribution seen only through its tail: either the law itself or the
/// distribution of its integrated tail.
enum TailView<'a> {
    Direct(&'a IncrementLaw),
    Integrated(&'a IncrementLaw),
}

impl TailView<'_> {
    fn tail(&self, x: f64) -> f64 {
        match self {
            TailView::Direct(law) => law.tail(x),
            TailView::Integrated(law) => law.tail_integral(x).min(1.0),
        }
    }

    fn convolution_tail(&self, x: f64, rel_tol: f64) -> f64 {
        match self {
            TailView::Direct(law) => law.convolution_tail(x, rel_tol),
            TailView::Integrated(law) => {
                // Density of the integrated-tail distribution is F̄ on the
                // region where the tail is below 1.
                let lo = integrated_support_start(law);
                let f = |y: f64| law.tail(y) * self.tail(x - y);
                let half_tail = self.tail(0.5 * x);
                let bp = quadrature::log_spaced_breakpoints(lo, 0.5 * x);
                2.0 * quadrature::integrate_segmented(&f, &bp, rel_tol, 0.0).value
                    + half_tail * half_tail
            }
        }
    }
}

/// Smallest x with F̄_I(x) < 1.
fn integrated_support_start(law: &IncrementLaw) -> f64 {
    let (mut lo, mut hi) = (-1.0, law.lower_support().abs().max(1.0));
    debug_assert!(law.tail_integral(lo) >= 1.0);
    while law.tail_integral(hi) >= 1.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if law.tail_integral(m) >= 1.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    hi
}

fn check_class_on_view(view: &TailView, class: TailClass, x_grid: &[f64]) -> Result<ClassReport> {
    if x_grid.len() < 2 || x_grid.windows(2).any(|w| w[1] <= w[0]) || x_grid[0] <= 0.0 {
        return Err(Error::InvalidSpec(
            "class-membership grid must be increasing and positive".into(),
        ));
    }
    let law = match view {
        TailView::Direct(law) | TailView::Integrated(law) => *law,
    };
    let mut ratios = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let denom_tail = view.tail(x);
        if denom_tail <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "tail vanishes at grid point x = {x}; shrink the grid"
            )));
        }
        let ratio = match class {
            TailClass::LongTailed => view.tail(x + 1.0) / denom_tail,
            TailClass::Subexponential => view.convolution_tail(x, 1e-6) / denom_tail,
            TailClass::StrongSubexponential => {
                let m_plus = law.positive_mean()?;
                law.tail_product_integral(x, 1e-6) / (2.0 * m_plus * denom_tail)
            }
        };
        if !ratio.is_finite() || ratio <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "non-finite class ratio at x = {x}"
            )));
        }
        ratios.push(ratio);
    }

    let limit = class.limit();
    let n = ratios.len();
    let final_dev = (ratios[n - 1] - limit).abs() / limit;
    let verdict = if final_dev > crate::constants::CLASS_CONSISTENT_TOL {
        ClassVerdict::Inconsistent
    } else if n >= 3 {
        let d: Vec<f64> = ratios[n - 3..].iter().map(|r| (r - limit).abs()).collect();
        if d[0] >= d[1] && d[1] >= d[2] {
            ClassVerdict::Consistent
        } else {
            ClassVerdict::Inconclusive
        }
    } else {
        ClassVerdict::Inconclusive
    };

    let support_from = if n >= 3 { x_grid[n - 3] } else { x_grid[0] };
    Ok(ClassReport {
        class,
        grid: x_grid.to_vec(),
        ratios,
        limit,
        verdict,
        supporting_range: (support_from, x_grid[n - 1]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn pareto2() -> IncrementLaw {
        IncrementLaw::shifted_pareto(2.0, 1.0).unwrap()
    }

    fn lattice_standard() -> IncrementLaw {
        // P(ξ=-1)=2/3, P(ξ=2)=1/3: already mean zero.
        IncrementLaw::discrete_lattice(&[((-1, 1), (2, 3)), ((2, 1), (1, 3))]).unwrap()
    }

    #[test]
    fn pareto_shift_and_tail_closed_form() {
        let law = pareto2();
        assert!((law.shift() - 1.0).abs() < 1e-15);
        // tail(x) = (1 + x + s)^{-2} for x + s >= 0
        assert!((law.tail(0.0) - 0.25).abs() < 1e-15);
        for &x in &[-0.5f64, 0.0, 3.0, 1e4] {
            let expect = (2.0 + x).powi(-2);
            assert!((law.tail(x) - expect).abs() < 1e-15 * expect.max(1e-300));
        }
    }

    #[test]
    fn left_tail_saturates_for_every_family() {
        let laws = [
            pareto2(),
            IncrementLaw::shifted_lognormal(0.0, 1.0).unwrap(),
            IncrementLaw::shifted_weibull(0.5).unwrap(),
            lattice_standard(),
            IncrementLaw::exponential_control(1.0).unwrap(),
        ];
        for law in &laws {
            assert_eq!(law.tail(-1e9), 1.0, "family {}", law.family_name());
        }
    }

    #[test]
    fn lattice_tail_and_positive_mean_are_exact() {
        let law = lattice_standard();
        assert_eq!(law.tail(0.0), 1.0 / 3.0);
        assert_eq!(law.tail(-1.0), 1.0 / 3.0); // mass at -1 not counted (strict >)... value 2 only
        assert_eq!(law.tail(-1.5), 1.0);
        assert_eq!(law.positive_mean().unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn lattice_recentres_nonzero_mean_input() {
        // P(0)=1/2, P(2)=1/2 has mean 1; centred values are -1 and 1.
        let law = IncrementLaw::discrete_lattice(&[((0, 1), (1, 2)), ((2, 1), (1, 2))]).unwrap();
        let masses = law.lattice_masses().unwrap();
        assert_eq!(masses[0].0, (-1, 1));
        assert_eq!(masses[1].0, (1, 1));
    }

    #[test]
    fn lattice_rejects_bad_probabilities() {
        assert!(IncrementLaw::discrete_lattice(&[((0, 1), (1, 2))]).is_err());
        assert!(IncrementLaw::discrete_lattice(&[((0, 1), (1, 2)), ((1, 1), (1, 3))]).is_err());
    }

    #[test]
    fn integrated_tail_pareto_matches_quadrature() {
        let law = pareto2();
        for &x in &[0.0, 1.0, 10.0, 250.0] {
            let analytic = law.integrated_tail(x).unwrap();
            assert!((analytic - 1.0 / (2.0 + x)).abs() < 1e-14);
            let quad = quadrature::integrate_to_inf(|y| law.tail(y), x, 1e-10, 0.0).value;
            assert!(
                (analytic - quad).abs() <= 1e-8 * analytic,
                "x={x}: analytic {analytic} vs quadrature {quad}"
            );
        }
    }

    #[test]
    fn integrated_tail_clamps_to_one() {
        for law in [pareto2(), lattice_standard()] {
            assert_eq!(law.integrated_tail(-10.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn exponential_integrated_tail_is_scaled_tail() {
        let law = IncrementLaw::exponential_control(1.0).unwrap();
        for &x in &[-0.5, 0.0, 2.0, 20.0] {
            let fi = law.integrated_tail(x).unwrap();
            assert!((fi - law.tail(x)).abs() < 1e-14, "rate-1: F̄_I == F̄");
        }
        let law2 = IncrementLaw::exponential_control(2.0).unwrap();
        let x = 1.0;
        assert!((law2.integrated_tail(x).unwrap() - law2.tail(x) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn weibull_and_lognormal_integrated_tails_match_quadrature() {
        for law in [
            IncrementLaw::shifted_weibull(0.5).unwrap(),
            IncrementLaw::shifted_lognormal(0.0, 1.0).unwrap(),
        ] {
            for &x in &[0.0, 1.0, 5.0, 40.0] {
                let analytic = law.tail_integral(x);
                let quad = quadrature::integrate_to_inf(|y| law.tail(y), x, 1e-10, 0.0).value;
                assert!(
                    (analytic - quad).abs() <= 1e-7 * analytic.max(1e-12),
                    "{} at x={x}: {analytic} vs {quad}",
                    law.family_name()
                );
            }
        }
    }

    #[test]
    fn positive_mean_closed_forms() {
        assert!((pareto2().positive_mean().unwrap() - 0.5).abs() < 1e-14);
        let exp = IncrementLaw::exponential_control(1.0).unwrap();
        assert!((exp.positive_mean().unwrap() - (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn pareto_below_one_is_rejected() {
        assert!(matches!(
            IncrementLaw::shifted_pareto(1.0, 1.0),
            Err(Error::UnboundedPositiveMean(_))
        ));
        assert!(IncrementLaw::shifted_pareto(0.5, 1.0).is_err());
    }

    #[test]
    fn analytic_shifts_match_quadrature_means() {
        let laws = [
            pareto2(),
            IncrementLaw::shifted_pareto(3.5, 2.0).unwrap(),
            IncrementLaw::shifted_lognormal(0.2, 0.8).unwrap(),
            IncrementLaw::shifted_weibull(0.5).unwrap(),
            IncrementLaw::exponential_control(1.3).unwrap(),
        ];
        for law in &laws {
            let quad = law.raw_mean_by_quadrature();
            assert!(
                (quad - law.shift()).abs() < 1e-10 * law.shift().max(1.0),
                "{}: quadrature mean {quad} vs shift {}",
                law.family_name(),
                law.shift()
            );
        }
    }

    #[test]
    fn sampler_is_deterministic_under_fixed_seed() {
        let law = pareto2();
        let draw = |seed: u64| -> Vec<f64> {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            (0..64).map(|_| law.sample(&mut rng)).collect()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn lattice_sampler_frequency_of_two() {
        let law = lattice_standard();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let n = 1_000_000usize;
        let hits = (0..n).filter(|_| law.sample(&mut rng) > 1.0).count();
        let p_hat = hits as f64 / n as f64;
        let se = (p_hat * (1.0 - p_hat) / n as f64).sqrt();
        assert!(
            (p_hat - 1.0 / 3.0).abs() <= 5.0 * se,
            "p_hat = {p_hat}, se = {se}"
        );
    }

    #[test]
    fn pareto_sampler_tail_matches_analytic() {
        let law = pareto2();
        // q with tail(q) = 0.01: (2+q)^{-2} = 0.01 -> q = 8.
        let q = 8.0;
        assert!((law.tail(q) - 0.01).abs() < 1e-12);
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let n = 1_000_000usize;
        let hits = (0..n).filter(|_| law.sample(&mut rng) > q).count();
        let p_hat = hits as f64 / n as f64;
        let se = (p_hat * (1.0 - p_hat) / n as f64).sqrt();
        assert!((p_hat - 0.01).abs() <= 5.0 * se, "p_hat = {p_hat}, se = {se}");
    }

    #[test]
    fn sampler_mean_is_near_zero() {
        for law in [
            pareto2(),
            IncrementLaw::shifted_weibull(0.5).unwrap(),
            IncrementLaw::shifted_lognormal(0.0, 1.0).unwrap(),
        ] {
            let mut rng = ChaCha20Rng::seed_from_u64(13);
            let n = 1_000_000usize;
            let (mut sum, mut sumsq) = (0.0, 0.0);
            for _ in 0..n {
                let x = law.sample(&mut rng);
                sum += x;
                sumsq += x * x;
            }
            let mean = sum / n as f64;
            let var = (sumsq / n as f64 - mean * mean).max(0.0);
            let se = (var / n as f64).sqrt();
            // Pareto(2) has infinite variance; the empirical se still gives a
            // usable scale for this smoke check.
            assert!(
                mean.abs() <= 5.0 * se.max(1e-4),
                "{}: mean {mean}, se {se}",
                law.family_name()
            );
        }
    }

    #[test]
    fn kolmogorov_smirnov_sampler_agreement() {
        // D_n below the 1% critical value 1.628/sqrt(n).
        for law in [
            pareto2(),
            IncrementLaw::shifted_weibull(0.5).unwrap(),
            IncrementLaw::shifted_lognormal(0.0, 1.0).unwrap(),
            IncrementLaw::exponential_control(1.0).unwrap(),
        ] {
            let mut rng = ChaCha20Rng::seed_from_u64(14);
            let n = 100_000usize;
            let mut xs: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
            xs.sort_by(f64::total_cmp);
            let mut d: f64 = 0.0;
            for (i, &x) in xs.iter().enumerate() {
                let f = law.cdf(x);
                d = d.max((f - i as f64 / n as f64).abs());
                d = d.max(((i + 1) as f64 / n as f64 - f).abs());
            }
            let crit = 1.628 / (n as f64).sqrt();
            assert!(d < crit, "{}: D = {d}, crit = {crit}", law.family_name());
        }
    }

    #[test]
    fn insensitivity_scale_pareto() {
        let law = pareto2();
        let h = law.insensitivity_scale(1e6).unwrap();
        assert!((h - 1000.0).abs() < 1e-9);
        let ratio = law.tail(1e6 - h) / law.tail(1e6 + h);
        assert!((1.0..=1.01).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn insensitivity_scale_weibull() {
        let law = IncrementLaw::shifted_weibull(0.5).unwrap();
        let h = law.insensitivity_scale(1e6).unwrap();
        assert!((h - 1e6f64.powf(0.2)).abs() < 1e-9);
        // Tails underflow out here, so the ratio is taken in log space.
        // Frozen from the direct computation at x = 1e6.
        let ratio = (law.log_tail(1e6 - h) - law.log_tail(1e6 + h)).exp();
        assert!((ratio - 1.0159).abs() < 1e-3, "ratio = {ratio}");
        // The ratio contracts toward 1 as x grows.
        let h8 = law.insensitivity_scale(1e8).unwrap();
        let ratio8 = (law.log_tail(1e8 - h8) - law.log_tail(1e8 + h8)).exp();
        assert!(ratio8 < ratio && ratio8 > 1.0, "ratio8 = {ratio8}");
    }

    #[test]
    fn insensitivity_scale_monotone_on_grid() {
        let law = IncrementLaw::shifted_weibull(0.7).unwrap();
        let mut prev = 0.0;
        let mut x = 1e2;
        while x <= 1e8 {
            let h = law.insensitivity_scale(x).unwrap();
            assert!(h >= prev);
            prev = h;
            x *= 10.0;
        }
    }

    #[test]
    fn insensitivity_scale_rejects_non_long_tailed() {
        assert!(matches!(
            IncrementLaw::exponential_control(1.0).unwrap().insensitivity_scale(10.0),
            Err(Error::NotLongTailed(_))
        ));
        assert!(lattice_standard().insensitivity_scale(10.0).is_err());
    }

    #[test]
    fn tail_monotone_and_integrated_tail_convex() {
        for law in [pareto2(), IncrementLaw::shifted_weibull(0.5).unwrap()] {
            let mut x = 0.0f64;
            while x < 1e8 {
                assert!(law.tail(x + 1.0) <= law.tail(x));
                x = (x + 1.0) * 3.0;
            }
            // convex decreasing: second finite differences non-negative on
            // the region where the min{1, ...} clamp is inactive (the clamp
            // kink itself is concave by construction)
            let mut x = 1.0f64;
            while x < 1e6 {
                let (a, b, c) = (
                    law.integrated_tail(x - 0.5).unwrap(),
                    law.integrated_tail(x).unwrap(),
                    law.integrated_tail(x + 0.5).unwrap(),
                );
                assert!(b <= a && c <= b);
                if a < 1.0 {
                    assert!(a - 2.0 * b + c >= -1e-9 * a, "x = {x}");
                }
                x *= 4.0;
            }
        }
    }

    #[test]
    fn tail_is_negligible_against_integrated_tail() {
        let law = pareto2();
        let mut prev_ratio = f64::INFINITY;
        for &x in &[1e1, 1e2, 1e3, 1e4, 1e5, 1e6] {
            let r = law.tail(x) / law.integrated_tail(x).unwrap();
            assert!(r < prev_ratio);
            prev_ratio = r;
        }
        assert!(prev_ratio < 0.1);
    }

    #[test]
    fn pareto_is_strong_subexponential_on_grid() {
        let law = pareto2();
        let rep = check_class_membership(
            &law,
            TailClass::StrongSubexponential,
            &[1e2, 1e3, 1e4, 1e5],
        )
        .unwrap();
        assert_eq!(rep.verdict, ClassVerdict::Consistent, "ratios {:?}", rep.ratios);
    }

    #[test]
    fn pareto_is_subexponential_on_grid() {
        let law = pareto2();
        let rep =
            check_class_membership(&law, TailClass::Subexponential, &[1e2, 1e3, 1e4, 1e5]).unwrap();
        assert_eq!(rep.verdict, ClassVerdict::Consistent, "ratios {:?}", rep.ratios);
        let last = *rep.ratios.last().unwrap();
        assert!((last - 2.0).abs() / 2.0 < 0.01, "final ratio {last}");
    }

    #[test]
    fn exponential_control_fails_every_class() {
        let law = IncrementLaw::exponential_control(1.0).unwrap();
        let grid = [4.0, 8.0, 16.0, 32.0];
        for class in [
            TailClass::LongTailed,
            TailClass::Subexponential,
            TailClass::StrongSubexponential,
        ] {
            let rep = check_class_membership(&law, class, &grid).unwrap();
            assert_eq!(
                rep.verdict,
                ClassVerdict::Inconsistent,
                "{:?}: {:?}",
                class,
                rep.ratios
            );
        }
        // Memorylessness: the long-tail ratio is exactly e^{-1} everywhere.
        let rep = check_class_membership(&law, TailClass::LongTailed, &grid).unwrap();
        for r in rep.ratios {
            assert!((r - (-1.0f64).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn integrated_tail_of_pareto_is_subexponential() {
        let law = pareto2();
        let rep = check_integrated_class_membership(
            &law,
            TailClass::Subexponential,
            &[1e2, 1e3, 1e4, 1e5],
        )
        .unwrap();
        assert_eq!(rep.verdict, ClassVerdict::Consistent, "ratios {:?}", rep.ratios);
    }

    #[test]
    fn class_check_rejects_bad_grids() {
        let law = pareto2();
        assert!(check_class_membership(&law, TailClass::LongTailed, &[1.0]).is_err());
        assert!(check_class_membership(&law, TailClass::LongTailed, &[2.0, 1.0]).is_err());
        // Tail vanishes beyond the lattice support.
        assert!(check_class_membership(&lattice_standard(), TailClass::LongTailed, &[1.0, 5.0])
            .is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn tail_bounds_and_monotonicity(
            beta in 1.1f64..5.0,
            scale in 0.5f64..3.0,
            x1 in -5.0f64..1e6,
            dx in 0.0f64..1e5,
        ) {
            let law = IncrementLaw::shifted_pareto(beta, scale).unwrap();
            let (t1, t2) = (law.tail(x1), law.tail(x1 + dx));
            prop_assert!((0.0..=1.0).contains(&t1));
            prop_assert!(t2 <= t1 + 1e-15);
            prop_assert!(law.integrated_tail(x1).unwrap() <= 1.0);
        }

        #[test]
        fn samples_stay_in_support(beta in 1.1f64..4.0, seed in 0u64..1000) {
            let law = IncrementLaw::shifted_pareto(beta, 1.0).unwrap();
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            for _ in 0..32 {
                prop_assert!(law.sample(&mut rng) >= law.lower_support());
            }
        }
    }
}
