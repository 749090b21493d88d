//! Closed-form tail asymptotics.
//!
//! The central object is the weighted tail series
//!
//!   H(x) = Σ_{n>=1} w_n F̄(x + g(n)),   w_n = E[Z_n 1(μ >= n)],
//!
//! which describes the crossing probability P(R_μ^g > x) to first order for
//! heavy-tailed increments. Weights are analytic when the stopping time is
//! independent of the tree and estimated by simulation otherwise. Partial
//! sums come with a rigorous remainder bound so every reported value is a
//! bracket, not a hope.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::boundaries::{Boundary, MuLaw};
use crate::branching_env::Environment;
use crate::error::{Error, Result};
use crate::heavy_tails::IncrementLaw;
use crate::quadrature;

/// How the series weights w_n = E[Z_n 1(μ >= n)] are supplied.
#[derive(Debug, Clone, Serialize)]
pub enum WeightModel {
    /// μ independent of the tree: w_n = E Z_n · P(μ >= n).
    TreeIndependent { mu: MuMarginal },
    /// Finite table of simulated weights with standard errors, plus an
    /// analytic bound on Σ_{n > table} w_n (0 for genuinely bounded μ).
    Simulated { weights: Vec<f64>, ses: Vec<f64>, tail_weight_bound: f64 },
}

/// Marginal of a tree-independent stopping time.
#[derive(Debug, Clone, Serialize)]
pub enum MuMarginal {
    Fixed(u64),
    Law(MuLaw),
    /// μ = ∞: every weight is E Z_n.
    Infinite,
}

impl MuMarginal {
    fn survival(&self, n: u64) -> f64 {
        match self {
            MuMarginal::Fixed(m) => {
                if n <= *m {
                    1.0
                } else {
                    0.0
                }
            }
            MuMarginal::Law(law) => law.survival(n),
            MuMarginal::Infinite => 1.0,
        }
    }

    fn upper_bound(&self) -> Option<u64> {
        match self {
            MuMarginal::Fixed(m) => Some(*m),
            MuMarginal::Law(law) => law.upper_bound(),
            MuMarginal::Infinite => None,
        }
    }

    /// Non-increasing continuous extension of P(μ >= t) for the unbounded
    /// marginals (the bounded ones never reach the integral tail).
    fn survival_continuous(&self, t: f64) -> f64 {
        match self {
            MuMarginal::Infinite => 1.0,
            MuMarginal::Law(MuLaw::Geometric { p }) => ((t - 1.0) * (1.0 - p).ln()).exp(),
            MuMarginal::Law(MuLaw::PowerSurvival { k2, alpha }) => {
                (k2 * t.powf(-alpha)).min(1.0)
            }
            MuMarginal::Fixed(m) => {
                if t <= *m as f64 {
                    1.0
                } else {
                    0.0
                }
            }
            MuMarginal::Law(MuLaw::Uniform { .. }) => unreachable!("bounded marginal"),
        }
    }
}

/// Specification of one tail series.
#[derive(Debug, Clone, Serialize)]
pub struct HSeriesSpec<'a> {
    #[serde(skip)]
    pub env: &'a Environment,
    #[serde(skip)]
    pub law: &'a IncrementLaw,
    #[serde(skip)]
    pub boundary: &'a Boundary,
    pub weights: WeightModel,
    /// Relative truncation tolerance.
    pub rel_tol: f64,
}

impl<'a> HSeriesSpec<'a> {
    pub fn new(
        env: &'a Environment,
        law: &'a IncrementLaw,
        boundary: &'a Boundary,
        weights: WeightModel,
    ) -> Self {
        HSeriesSpec { env, law, boundary, weights, rel_tol: 1e-4 }
    }
}

/// Value of the series together with a rigorous error bound (truncation
/// remainder plus propagated weight standard errors).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    pub error_bound: f64,
}

/// Evaluate H(x) = Σ w_n F̄(x + g(n)) with a certified remainder.
///
/// For an unbounded stopping time the boundary must climb (slope c > 0):
/// the remainder past N is bounded by w̄_N F̄_I(x + g(N)) / c with w̄_N a
/// bound on the weights beyond N. A flat boundary with unbounded μ is not
/// summable and is rejected.
pub fn h_series(spec: &HSeriesSpec, x: f64) -> Result<SeriesValue> {
    let slope = spec.boundary.slope();
    let l = spec.env.fading_product();
    if !l.is_finite() {
        return Err(Error::NonFadingEnvironment("tail series needs bounded mean population".into()));
    }

    match &spec.weights {
        WeightModel::TreeIndependent { mu } => {
            let bounded = mu.upper_bound();
            if bounded.is_none() && slope <= 0.0 {
                return Err(Error::NonSummable(
                    "unbounded stopping time over a flat boundary".into(),
                ));
            }
            let mut partial = 0.0f64;
            let mut log_mean_pop = 0.0f64; // ln E Z_n at the current n
            let mut n = 1u64;
            loop {
                log_mean_pop += spec.env.mean_offspring(n - 1).ln();
                let w = log_mean_pop.exp() * mu.survival(n);
                partial += w * spec.law.tail(x + spec.boundary.eval(n));
                if let Some(b) = bounded {
                    if n >= b {
                        return Ok(SeriesValue { value: partial, error_bound: 0.0 });
                    }
                }
                if n >= 1024 && n & (n - 1) == 0 {
                    // Beyond n the boundary is exactly linear and both the
                    // weights and the tail are non-increasing: bracket the
                    // rest of the sum between shifted integrals.
                    let (tail_mid, tail_err) = integral_tail_bracket(
                        spec,
                        mu,
                        x,
                        n,
                        slope,
                        log_mean_pop.exp(),
                        l,
                    );
                    if tail_err <= spec.rel_tol * (partial + tail_mid).abs() && partial > 0.0 {
                        return Ok(SeriesValue {
                            value: partial + tail_mid,
                            error_bound: tail_err,
                        });
                    }
                }
                if n > 1 << 24 {
                    return Err(Error::NonSummable(format!(
                        "series did not meet tolerance {} within 2^24 terms",
                        spec.rel_tol
                    )));
                }
                n += 1;
            }
        }
        WeightModel::Simulated { weights, ses, tail_weight_bound } => {
            let mut partial = 0.0f64;
            let mut se_sum = 0.0f64;
            for (i, (&w, &se)) in weights.iter().zip(ses).enumerate() {
                let t = spec.law.tail(x + spec.boundary.eval(i as u64 + 1));
                partial += w * t;
                se_sum += se * t;
            }
            let n = weights.len() as u64;
            let remainder = if *tail_weight_bound > 0.0 {
                if slope <= 0.0 {
                    return Err(Error::NonSummable(
                        "unbounded stopping time over a flat boundary".into(),
                    ));
                }
                tail_weight_bound * remainder_tail(spec, x, n, slope)?
            } else {
                0.0
            };
            Ok(SeriesValue { value: partial, error_bound: remainder + se_sum })
        }
    }
}

/// Σ_{n>N} F̄(x + g(n)) <= F̄_I(x + g(N)) / c by comparison with the
/// integral along the climbing boundary.
fn remainder_tail(spec: &HSeriesSpec, x: f64, n: u64, slope: f64) -> Result<f64> {
    Ok(spec.law.integrated_tail(x + spec.boundary.eval(n))? / slope)
}

/// Bracket Σ_{n>N} w(n) F̄(x + g(n)) between integrals: the summand
/// f(t) = w(t) F̄(x + g(N) + slope (t - N)) is non-increasing, so the sum
/// lies in [∫_{N+1}^∞ f_lo, ∫_N^∞ f_hi], with the population factor itself
/// bracketed by [E Z_N, L]. Returns (midpoint, half-width + quad error).
fn integral_tail_bracket(
    spec: &HSeriesSpec,
    mu: &MuMarginal,
    x: f64,
    n: u64,
    slope: f64,
    mean_pop_n: f64,
    l: f64,
) -> (f64, f64) {
    let g_n = spec.boundary.eval(n);
    let base = move |t: f64| {
        mu.survival_continuous(t) * spec.law.tail(x + g_n + slope * (t - n as f64))
    };
    let lo = quadrature::integrate_to_inf(base, n as f64 + 1.0, 1e-8, 0.0);
    let hi = quadrature::integrate_to_inf(base, n as f64, 1e-8, 0.0);
    let (i_lo, i_hi) = (mean_pop_n * lo.value, l * hi.value);
    let mid = 0.5 * (i_lo + i_hi);
    let err = 0.5 * (i_hi - i_lo).abs() + l * (lo.abs_error + hi.abs_error);
    (mid, err)
}

/// Estimate the weights w_n = E[Z_n 1(μ >= n)] by simulation for stopping
/// rules that depend on the tree (the fading time). Returns per-generation
/// means with standard errors and an analytic bound on the discarded tail,
/// L·P(ν > n_max) from the residual branching weights.
pub fn simulate_fading_weights(
    env: &Environment,
    n_max: u64,
    n_runs: u64,
    master_seed: u64,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let mut rng = crate::rng::scratch_rng(master_seed, 0x77);
    let mut sums = vec![0.0f64; n_max as usize];
    let mut sumsqs = vec![0.0f64; n_max as usize];
    for _ in 0..n_runs {
        let t = env.simulate_trajectory(&mut rng)?;
        let nu = t.nu().expect("complete trajectory");
        for n in 1..=n_max.min(nu) {
            let z = t.population_at(n) as f64;
            sums[(n - 1) as usize] += z;
            sumsqs[(n - 1) as usize] += z * z;
        }
    }
    let runs = n_runs as f64;
    let weights: Vec<f64> = sums.iter().map(|s| s / runs).collect();
    let ses: Vec<f64> = sums
        .iter()
        .zip(&sumsqs)
        .map(|(&s, &sq)| {
            let m = s / runs;
            ((sq / runs - m * m).max(0.0) / runs).sqrt()
        })
        .collect();
    // P(ν > n_max) <= 1 - e^{-L d_{n_max}} <= L d_{n_max}.
    let l = env.fading_product();
    let tail_bound = l * (l * env.dn(n_max)?).min(1.0);
    Ok((weights, ses, tail_bound))
}

/// The all-time maximum limit: (L / c) · F̄_I(x), with L = E Z the mean
/// terminal population.
pub fn veraverbeke_limit(l: f64, c: f64, law: &IncrementLaw, x: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::ParameterOutOfRange {
            name: "c",
            value: c,
            reason: "the all-time maximum needs positive drift",
        });
    }
    Ok(l / c * law.integrated_tail(x)?)
}

/// The finite-random-horizon limit: E η_μ · F̄(x).
pub fn eta_limit(e_eta_mu: f64, law: &IncrementLaw, x: f64) -> f64 {
    e_eta_mu * law.tail(x)
}

/// E η_μ = Σ_n E Z_n P(μ >= n) for a stopping time independent of the whole
/// tree-and-increments sigma-algebra; +∞ when μ has no mean.
pub fn eta_mean_tree_independent(env: &Environment, mu: &MuMarginal) -> f64 {
    let l = env.fading_product();
    if !l.is_finite() {
        return f64::INFINITY;
    }
    match mu {
        MuMarginal::Infinite => f64::INFINITY,
        MuMarginal::Fixed(m) => (1..=*m).map(|n| env.mean_population(n)).sum(),
        MuMarginal::Law(law) => {
            if !law.mean().is_finite() {
                return f64::INFINITY;
            }
            let mut total = 0.0;
            let mut log_pop = 0.0;
            let mut n = 1u64;
            loop {
                log_pop += env.mean_offspring(n - 1).ln();
                let term = log_pop.exp() * law.survival(n);
                total += term;
                // E Z_n <= L, so the residual is below L Σ_{k>n} P(μ >= k).
                if term < 1e-12 * total && n > 16 {
                    break;
                }
                if n > 50_000_000 {
                    break;
                }
                n += 1;
            }
            total
        }
    }
}

/// Exponent and constant of the power-law stopping-time study: for
/// F̄(x) ~ K₁ x^{-β} and P(μ >= n) = min(1, K₂ n^{-α}) with a linear
/// boundary of slope c, the single-path series behaves like
/// C·x^{1-α-β} with C = K₁K₂ c^{α-1} B(1-α, β+α-1).
///
/// The constant here is for ONE path; the full tree multiplies it by E Z.
/// (Folding E Z into C and then multiplying by the path count again would
/// double-count it; the quadrature identity below fixes the single-path
/// normalization.)
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PowerStudyConstants {
    pub exponent: f64,
    /// K₁K₂ c^{α-1} B(1-α, β+α-1): single-path constant.
    pub single_path_constant: f64,
    /// E Z times the single-path constant: the full-tree constant.
    pub overall_constant: f64,
}

pub fn example2_constant(
    alpha: f64,
    beta: f64,
    c: f64,
    k1: f64,
    k2: f64,
    e_z: f64,
) -> Result<PowerStudyConstants> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::ParameterOutOfRange {
            name: "alpha",
            value: alpha,
            reason: "needs alpha in (0,1)",
        });
    }
    if !(beta > 1.0) {
        return Err(Error::ParameterOutOfRange {
            name: "beta",
            value: beta,
            reason: "needs beta > 1",
        });
    }
    if !(c > 0.0) {
        return Err(Error::ParameterOutOfRange {
            name: "c",
            value: c,
            reason: "needs positive drift",
        });
    }
    let b = beta_function(1.0 - alpha, beta + alpha - 1.0)?;
    let single = k1 * k2 * c.powf(alpha - 1.0) * b;
    Ok(PowerStudyConstants {
        exponent: 1.0 - alpha - beta,
        single_path_constant: single,
        overall_constant: e_z * single,
    })
}

/// B(a, b) = Γ(a)Γ(b)/Γ(a+b).
pub fn beta_function(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::ParameterOutOfRange {
            name: "beta_function argument",
            value: if a <= 0.0 { a } else { b },
            reason: "both arguments must be positive",
        });
    }
    Ok((ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp())
}

/// ∫_0^∞ t^{-α} (x + c t)^{-β} dt, evaluated by quadrature. Equals
/// x^{1-α-β} c^{α-1} B(1-α, β+α-1); the verification suites check the two
/// routes against each other.
pub fn power_kernel_integral(alpha: f64, beta: f64, c: f64, x: f64, rel_tol: f64) -> f64 {
    let f = move |t: f64| t.powf(-alpha) * (x + c * t).powf(-beta);
    quadrature::integrate_0_inf_with_singularity(f, alpha, rel_tol).value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundaries::Boundary;

    fn pareto2() -> IncrementLaw {
        IncrementLaw::shifted_pareto(2.0, 1.0).unwrap()
    }

    #[test]
    fn beta_function_identities() {
        assert!((beta_function(1.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((beta_function(0.5, 0.5).unwrap() - std::f64::consts::PI).abs() < 1e-10);
        assert!((beta_function(2.0, 3.0).unwrap() - 1.0 / 12.0).abs() < 1e-12);
        assert!((beta_function(0.5, 1.5).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
        assert!(beta_function(-0.5, 1.0).is_err());
        assert!(beta_function(0.5, 0.0).is_err());
    }

    #[test]
    fn power_kernel_matches_beta_closed_form() {
        let (alpha, beta, c, x) = (0.5, 2.0, 1.0, 100.0);
        let quad = power_kernel_integral(alpha, beta, c, x, 1e-9);
        let closed =
            x.powf(1.0 - alpha - beta) * c.powf(alpha - 1.0) * beta_function(1.0 - alpha, beta + alpha - 1.0).unwrap();
        assert!(
            ((quad - closed) / closed).abs() < 1e-6,
            "quad {quad} vs closed {closed}"
        );
    }

    #[test]
    fn power_kernel_identity_at_random_parameters() {
        // 20 random (α, β, c), relative error 1e-5.
        use rand::Rng;
        let mut rng = crate::rng::scratch_rng(2024, 1);
        for _ in 0..20 {
            let alpha = rng.gen_range(0.05..0.95);
            let beta = rng.gen_range(1.05..4.0);
            let c = rng.gen_range(0.2..5.0);
            let x = rng.gen_range(10.0..1000.0);
            let quad = power_kernel_integral(alpha, beta, c, x, 1e-9);
            let closed = x.powf(1.0 - alpha - beta)
                * c.powf(alpha - 1.0)
                * beta_function(1.0 - alpha, beta + alpha - 1.0).unwrap();
            assert!(
                ((quad - closed) / closed).abs() < 1e-5,
                "α={alpha} β={beta} c={c} x={x}: {quad} vs {closed}"
            );
        }
    }

    #[test]
    fn example2_constants() {
        let k = example2_constant(0.5, 2.0, 1.0, 1.0, 1.0, 2.0).unwrap();
        assert!((k.exponent + 1.5).abs() < 1e-12);
        assert!((k.single_path_constant - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
        assert!((k.overall_constant - std::f64::consts::PI).abs() < 1e-10);
        assert!(example2_constant(1.2, 2.0, 1.0, 1.0, 1.0, 2.0).is_err());
        assert!(example2_constant(0.5, 0.9, 1.0, 1.0, 1.0, 2.0).is_err());
        assert!(example2_constant(0.5, 2.0, 0.0, 1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn veraverbeke_reduction_and_scaling() {
        let law = pareto2();
        // L = 1: the classical single-walk limit (1/c) F̄_I(x).
        let v = veraverbeke_limit(1.0, 1.0, &law, 10.0).unwrap();
        assert!((v - law.integrated_tail(10.0).unwrap()).abs() < 1e-15);
        // linearity in 1/c
        let v1 = veraverbeke_limit(2.0, 1.0, &law, 25.0).unwrap();
        let v2 = veraverbeke_limit(2.0, 2.0, &law, 25.0).unwrap();
        assert!((v1 - 2.0 * v2).abs() < 1e-15);
        assert!(veraverbeke_limit(2.0, 0.0, &law, 1.0).is_err());
    }

    #[test]
    fn h_series_fixed_stop_flat_boundary_is_exact() {
        // w_n = E Z_n, g = 0: H(x) = E η_N · F̄(x) exactly.
        let env = Environment::single_split();
        let law = pareto2();
        let b = Boundary::zero();
        let spec = HSeriesSpec::new(&env, &law, &b, WeightModel::TreeIndependent {
            mu: MuMarginal::Fixed(4),
        });
        let x = 3.0;
        let h = h_series(&spec, x).unwrap();
        let eta = eta_mean_tree_independent(&env, &MuMarginal::Fixed(4));
        assert_eq!(eta, 8.0); // E Z_n = 2 for n >= 1
        assert!((h.value - eta * law.tail(x)).abs() < 1e-12);
        assert_eq!(h.error_bound, 0.0);
    }

    #[test]
    fn h_series_no_branching_reduces_to_plain_series() {
        // Degenerate environment: w_n = P(μ >= n); compare against a long
        // direct sum.
        let env = Environment::degenerate();
        let law = pareto2();
        let b = Boundary::linear(1.0);
        let mu = MuLaw::Geometric { p: 0.5 };
        let spec = HSeriesSpec::new(&env, &law, &b, WeightModel::TreeIndependent {
            mu: MuMarginal::Law(mu.clone()),
        });
        let x = 10.0;
        let h = h_series(&spec, x).unwrap();
        let direct: f64 = (1..500).map(|n| mu.survival(n) * law.tail(x + n as f64)).sum();
        assert!(
            (h.value - direct).abs() <= h.error_bound.max(1e-12),
            "{} vs {direct} ± {}",
            h.value,
            h.error_bound
        );
    }

    #[test]
    fn h_series_infinite_horizon_matches_integral_scale() {
        // μ = ∞ over slope c: H(x) ≈ (L/c) F̄_I(x) for large x.
        let env = Environment::single_split();
        let law = pareto2();
        let b = Boundary::linear(1.0);
        let spec = HSeriesSpec::new(&env, &law, &b, WeightModel::TreeIndependent {
            mu: MuMarginal::Infinite,
        });
        let x = 5e4;
        let h = h_series(&spec, x).unwrap();
        let v = veraverbeke_limit(2.0, 1.0, &law, x).unwrap();
        assert!(
            (h.value / v - 1.0).abs() < 1e-3,
            "H = {} vs limit {v}",
            h.value
        );
        assert!(h.error_bound <= spec.rel_tol * h.value * 1.01);
    }

    #[test]
    fn h_series_rejects_flat_boundary_with_unbounded_stop() {
        let env = Environment::degenerate();
        let law = pareto2();
        let b = Boundary::zero();
        let spec = HSeriesSpec::new(&env, &law, &b, WeightModel::TreeIndependent {
            mu: MuMarginal::Infinite,
        });
        assert!(matches!(h_series(&spec, 1.0), Err(Error::NonSummable(_))));
    }

    #[test]
    fn h_series_bracket_for_bounded_stop() {
        // Value lies between max_n w_n · F̄(x+g(N)) and Σ w_n · F̄(x+g(1)).
        let env = Environment::single_split();
        let law = pareto2();
        let b = Boundary::linear(0.7);
        let n_max = 6u64;
        let spec = HSeriesSpec::new(&env, &law, &b, WeightModel::TreeIndependent {
            mu: MuMarginal::Fixed(n_max),
        });
        let x = 2.0;
        let h = h_series(&spec, x).unwrap().value;
        let weights: Vec<f64> = (1..=n_max).map(|n| env.mean_population(n)).collect();
        let w_max = weights.iter().cloned().fold(0.0, f64::max);
        let w_sum: f64 = weights.iter().sum();
        assert!(h >= w_max * law.tail(x + b.eval(n_max)) - 1e-12);
        assert!(h <= w_sum * law.tail(x + b.eval(1)) + 1e-12);
    }

    #[test]
    fn h_series_ratio_to_eta_limit_improves_with_x() {
        // Bounded μ: H(x) / (E η_μ F̄(x)) -> 1 monotonically on a grid.
        let env = Environment::single_split();
        let law = pareto2();
        let b = Boundary::linear(1.0);
        let mu = MuMarginal::Fixed(5);
        let spec = HSeriesSpec::new(&env, &law, &b, WeightModel::TreeIndependent { mu });
        let eta = eta_mean_tree_independent(&env, &MuMarginal::Fixed(5));
        let mut prev_dev = f64::INFINITY;
        for &x in &[1e1, 1e2, 1e3, 1e4, 1e5] {
            let h = h_series(&spec, x).unwrap().value;
            let dev = (h / eta_limit(eta, &law, x) - 1.0).abs();
            assert!(dev < prev_dev, "x = {x}: dev {dev} vs prev {prev_dev}");
            prev_dev = dev;
        }
        assert!(prev_dev < 1e-3);
    }

    #[test]
    fn h_series_with_simulated_weights() {
        let env = Environment::geometric(0.5, 0.5, 2).unwrap();
        let law = pareto2();
        let b = Boundary::linear(1.0);
        let (w, se, tail_bound) = simulate_fading_weights(&env, 30, 20_000, 99).unwrap();
        // Weights must approach E Z_n 1(ν >= n) <= E Z_n <= L.
        let l = env.fading_product();
        assert!(w.iter().all(|&wi| wi <= l + 3.0 * 0.05));
        let spec = HSeriesSpec::new(&env, &law, &b, WeightModel::Simulated {
            weights: w,
            ses: se,
            tail_weight_bound: tail_bound,
        });
        let x = 50.0;
        let h = h_series(&spec, x).unwrap();
        assert!(h.value > 0.0 && h.error_bound < h.value);
    }

    #[test]
    fn h_series_is_permutation_symmetric_in_equal_pairs() {
        // Simulated-weight form with a tabulated boundary: permuting the
        // (w_n, g(n)) pairs together leaves the sum unchanged.
        let env = Environment::degenerate();
        let law = pareto2();
        let w = vec![0.9, 0.5, 0.25, 0.12];
        let se = vec![0.0; 4];
        let g = vec![1.0, 2.5, 2.7, 4.0];
        let perm = [2usize, 0, 3, 1];
        let b0 = Boundary::tabulated(g.clone()).unwrap();
        let spec0 = HSeriesSpec::new(&env, &law, &b0, WeightModel::Simulated {
            weights: w.clone(),
            ses: se.clone(),
            tail_weight_bound: 0.0,
        });
        let b1 = Boundary::tabulated(perm.iter().map(|&i| g[i]).collect()).unwrap();
        let spec1 = HSeriesSpec::new(&env, &law, &b1, WeightModel::Simulated {
            weights: perm.iter().map(|&i| w[i]).collect(),
            ses: se,
            tail_weight_bound: 0.0,
        });
        let x = 7.0;
        let (h0, h1) = (h_series(&spec0, x).unwrap().value, h_series(&spec1, x).unwrap().value);
        assert!((h0 - h1).abs() < 1e-12 * h0.abs());
    }

    #[test]
    fn eta_mean_examples() {
        // Geometric μ on a degenerate tree: E η_μ = E μ = 1/p.
        let env = Environment::degenerate();
        let mu = MuMarginal::Law(MuLaw::Geometric { p: 0.5 });
        assert!((eta_mean_tree_independent(&env, &mu) - 2.0).abs() < 1e-9);
        // Power-survival with α < 1 has no mean.
        let mu = MuMarginal::Law(MuLaw::PowerSurvival { k2: 1.0, alpha: 0.5 });
        assert!(eta_mean_tree_independent(&env, &mu).is_infinite());
    }
}
