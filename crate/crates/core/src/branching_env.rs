//! Branching processes in a varying environment with fading branching.
//!
//! The population follows Z_0 = 1, Z_{n+1} = Σ_{j<=Z_n} ζ_{n,j} with
//! offspring ζ >= 1, so it never dies out and is non-decreasing. An
//! environment is an explicit prefix of offspring laws plus an analytic tail
//! rule for the non-unit probabilities q_n = P(ζ_n ≠ 1). The tail rule is
//! what makes the limit L = Π E ζ_n, the residual weights
//! d_n = -Σ_{k>=n} ln(1 - q_k) and the moment criteria computable without
//! unsound truncation.
//!
//! Simulation runs event to event: conditional on the current population z,
//! the next branching transition m after n satisfies
//! P(no event in [n, m)) = exp(-z (d_n - d_m)), which one uniform draw
//! inverts exactly.

use rand::Rng;
use rand_distr::Distribution;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature;

/// Offspring distribution on {1, 2, 3, ...} with finite support.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffspringLaw {
    masses: Vec<(u64, f64)>,
}

impl OffspringLaw {
    pub fn deterministic(k: u64) -> Self {
        OffspringLaw { masses: vec![(k.max(1), 1.0)] }
    }

    /// {1 with prob 1-q, k with prob q}.
    pub fn binary(k: u64, q: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&q) {
            return Err(Error::ParameterOutOfRange {
                name: "q",
                value: q,
                reason: "non-unit offspring probability must lie in [0,1)",
            });
        }
        if k < 2 {
            return Err(Error::InvalidSpec("binary offspring value must be >= 2".into()));
        }
        if q == 0.0 {
            return Ok(Self::deterministic(1));
        }
        Ok(OffspringLaw { masses: vec![(1, 1.0 - q), (k, q)] })
    }

    pub fn from_masses(masses: &[(u64, f64)]) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::InvalidSpec("offspring law needs at least one mass".into()));
        }
        let mut ms: Vec<(u64, f64)> = masses.to_vec();
        ms.sort_by_key(|&(v, _)| v);
        let total: f64 = ms.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!(
                "offspring probabilities sum to {total}, expected 1"
            )));
        }
        for &(v, p) in &ms {
            if v < 1 {
                return Err(Error::InvalidSpec("offspring values must be >= 1".into()));
            }
            if !(p > 0.0) {
                return Err(Error::InvalidSpec("offspring probabilities must be positive".into()));
            }
        }
        for (_, p) in &mut ms {
            *p /= total;
        }
        Ok(OffspringLaw { masses: ms })
    }

    pub fn masses(&self) -> &[(u64, f64)] {
        &self.masses
    }

    pub fn mean(&self) -> f64 {
        self.masses.iter().map(|&(v, p)| v as f64 * p).sum()
    }

    /// q = P(ζ ≠ 1).
    pub fn non_unit_prob(&self) -> f64 {
        self.masses.iter().filter(|&&(v, _)| v != 1).map(|&(_, p)| p).sum()
    }

    /// E ζ^s.
    pub fn power_moment(&self, s: f64) -> f64 {
        self.masses.iter().map(|&(v, p)| (v as f64).powf(s) * p).sum()
    }

    pub fn max_value(&self) -> u64 {
        self.masses.last().map(|&(v, _)| v).unwrap_or(1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for &(v, p) in &self.masses {
            acc += p;
            if u < acc {
                return v;
            }
        }
        self.masses.last().unwrap().0
    }

    /// Draw conditioned on ζ ≠ 1.
    pub fn sample_non_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let q = self.non_unit_prob();
        debug_assert!(q > 0.0);
        let u: f64 = rng.gen::<f64>() * q;
        let mut acc = 0.0;
        for &(v, p) in &self.masses {
            if v == 1 {
                continue;
            }
            acc += p;
            if u < acc {
                return v;
            }
        }
        self.masses.last().unwrap().0
    }
}

/// Analytic rule for q_n beyond the explicit prefix.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TailRule {
    /// q_n = 0: no branching beyond the prefix.
    Degenerate,
    /// q_n = q · ratio^n (absolute generation index), branching to `offspring`.
    GeometricQ { q: f64, ratio: f64, offspring: u64 },
    /// q_n = coeff · n^{-power} · (ln n)^{-log_power} for n >= start,
    /// 0 before; branching to `offspring`.
    LogPowerQ {
        coeff: f64,
        power: f64,
        log_power: f64,
        start: u64,
        offspring: u64,
    },
    /// q_n = q forever: a non-fading environment.
    ConstantQ { q: f64, offspring: u64 },
}

impl TailRule {
    fn validate(&self, prefix_len: u64) -> Result<()> {
        match *self {
            TailRule::Degenerate => Ok(()),
            TailRule::GeometricQ { q, ratio, offspring } => {
                if !(q >= 0.0) || !(ratio > 0.0 && ratio < 1.0) {
                    return Err(Error::InvalidSpec(
                        "geometric tail rule needs q >= 0 and ratio in (0,1)".into(),
                    ));
                }
                if offspring < 2 {
                    return Err(Error::InvalidSpec("tail offspring must be >= 2".into()));
                }
                if q * ratio.powi(prefix_len as i32) >= 1.0 {
                    return Err(Error::InvalidSpec(
                        "geometric tail rule gives q_n >= 1 at the first tail generation".into(),
                    ));
                }
                Ok(())
            }
            TailRule::LogPowerQ { coeff, power, log_power, start, offspring } => {
                if !(coeff > 0.0) || power < 0.0 || log_power < 0.0 || (power == 0.0 && log_power == 0.0) {
                    return Err(Error::InvalidSpec(
                        "log-power tail rule needs coeff > 0 and a positive decay exponent".into(),
                    ));
                }
                if offspring < 2 {
                    return Err(Error::InvalidSpec("tail offspring must be >= 2".into()));
                }
                let first = start.max(prefix_len).max(if log_power > 0.0 { 2 } else { 1 });
                let q0 = coeff * (first as f64).powf(-power) * (first as f64).ln().powf(-log_power);
                if !(q0 < 1.0) {
                    return Err(Error::InvalidSpec(format!(
                        "log-power tail rule gives q_{first} = {q0} >= 1"
                    )));
                }
                Ok(())
            }
            TailRule::ConstantQ { q, offspring } => {
                if !(q > 0.0 && q < 1.0) {
                    return Err(Error::InvalidSpec("constant tail rule needs q in (0,1)".into()));
                }
                if offspring < 2 {
                    return Err(Error::InvalidSpec("tail offspring must be >= 2".into()));
                }
                Ok(())
            }
        }
    }

    fn q_at(&self, n: u64) -> f64 {
        match *self {
            TailRule::Degenerate => 0.0,
            TailRule::GeometricQ { q, ratio, .. } => q * ratio.powf(n as f64),
            TailRule::LogPowerQ { coeff, power, log_power, start, .. } => {
                let start = start.max(if log_power > 0.0 { 2 } else { 1 });
                if n < start {
                    0.0
                } else {
                    let t = n as f64;
                    coeff * t.powf(-power) * t.ln().powf(-log_power)
                }
            }
            TailRule::ConstantQ { q, .. } => q,
        }
    }

    fn offspring_value(&self) -> u64 {
        match *self {
            TailRule::Degenerate => 1,
            TailRule::GeometricQ { offspring, .. }
            | TailRule::LogPowerQ { offspring, .. }
            | TailRule::ConstantQ { offspring, .. } => offspring,
        }
    }

    /// Does Σ q_n converge?
    fn q_series_converges(&self) -> bool {
        match *self {
            TailRule::Degenerate => true,
            TailRule::GeometricQ { .. } => true,
            TailRule::LogPowerQ { power, log_power, .. } => {
                power > 1.0 || (power == 1.0 && log_power > 1.0)
            }
            TailRule::ConstantQ { .. } => false,
        }
    }
}

/// Smooth extension of q_n to real arguments, with its derivative; the
/// Euler–Maclaurin tail summation needs both.
#[derive(Clone, Copy)]
struct SmoothQ {
    coeff: f64,
    power: f64,
    log_power: f64,
}

impl SmoothQ {
    fn q(&self, t: f64) -> f64 {
        self.coeff * t.powf(-self.power) * t.ln().powf(-self.log_power)
    }
    fn dq(&self, t: f64) -> f64 {
        self.q(t) * (-self.power / t - self.log_power / (t * t.ln()))
    }
}

/// Integrands summed over the q-sequence tail.
#[derive(Clone, Copy)]
enum QWeight {
    /// -ln(1 - q): the residual branching weight.
    NegLn1mQ,
    /// ln(1 + c·q): log-factors of Π(1 + c q_n).
    Ln1pScaled { c: f64 },
}

impl QWeight {
    fn of_q(&self, q: f64) -> f64 {
        match *self {
            QWeight::NegLn1mQ => -(-q).ln_1p(),
            QWeight::Ln1pScaled { c } => (c * q).ln_1p(),
        }
    }
    fn d_dq(&self, q: f64) -> f64 {
        match *self {
            QWeight::NegLn1mQ => 1.0 / (1.0 - q),
            QWeight::Ln1pScaled { c } => c / (1.0 + c * q),
        }
    }
}

/// Environment: explicit prefix laws for generations 0..prefix.len(), then
/// an analytic tail rule.
#[derive(Debug, Clone, Serialize)]
pub struct Environment {
    prefix: Vec<OffspringLaw>,
    tail: TailRule,
    /// Dense d_n for n <= DN_DENSE_LEN, filled on first use.
    #[serde(skip)]
    dn_cache: std::sync::OnceLock<Vec<f64>>,
}

/// Length of the dense d_n cache; beyond it the tail formulas are cheap.
const DN_DENSE_LEN: u64 = 4096;

/// Offspring description at a single generation.
pub enum OffspringAt<'a> {
    Law(&'a OffspringLaw),
    Binary { q: f64, offspring: u64 },
}

impl Environment {
    pub fn new(prefix: Vec<OffspringLaw>, tail: TailRule) -> Result<Self> {
        tail.validate(prefix.len() as u64)?;
        Ok(Environment { prefix, tail, dn_cache: std::sync::OnceLock::new() })
    }

    /// Environment with no branching at all.
    pub fn degenerate() -> Self {
        Environment {
            prefix: Vec::new(),
            tail: TailRule::Degenerate,
            dn_cache: std::sync::OnceLock::new(),
        }
    }

    /// The two-path example: one deterministic split at generation 0,
    /// nothing afterwards (ν = 1, Z = 2).
    pub fn single_split() -> Self {
        Environment {
            prefix: vec![OffspringLaw::deterministic(2)],
            tail: TailRule::Degenerate,
            dn_cache: std::sync::OnceLock::new(),
        }
    }

    /// q_n = q₀·rⁿ from generation 0, branching to `offspring`.
    pub fn geometric(q0: f64, ratio: f64, offspring: u64) -> Result<Self> {
        Self::new(Vec::new(), TailRule::GeometricQ { q: q0, ratio, offspring })
    }

    pub fn prefix(&self) -> &[OffspringLaw] {
        &self.prefix
    }

    pub fn tail_rule(&self) -> &TailRule {
        &self.tail
    }

    pub fn offspring_at(&self, n: u64) -> OffspringAt<'_> {
        if (n as usize) < self.prefix.len() {
            OffspringAt::Law(&self.prefix[n as usize])
        } else {
            OffspringAt::Binary {
                q: self.tail.q_at(n),
                offspring: self.tail.offspring_value(),
            }
        }
    }

    /// q_n = P(ζ_{n,1} ≠ 1).
    pub fn q(&self, n: u64) -> f64 {
        match self.offspring_at(n) {
            OffspringAt::Law(law) => law.non_unit_prob(),
            OffspringAt::Binary { q, .. } => q,
        }
    }

    /// m_n = E ζ_{n,1}.
    pub fn mean_offspring(&self, n: u64) -> f64 {
        match self.offspring_at(n) {
            OffspringAt::Law(law) => law.mean(),
            OffspringAt::Binary { q, offspring } => 1.0 + (offspring - 1) as f64 * q,
        }
    }

    /// Largest possible offspring value over all generations.
    pub fn max_offspring(&self) -> u64 {
        self.prefix
            .iter()
            .map(|l| l.max_value())
            .chain(std::iter::once(self.tail.offspring_value()))
            .max()
            .unwrap_or(1)
    }

    /// Σ q_n < ∞ (equivalently L < ∞ for these bounded-offspring rules).
    pub fn is_fading(&self) -> bool {
        self.tail.q_series_converges()
    }

    /// L = Π E ζ_n, or +∞ for a non-fading environment.
    pub fn fading_product(&self) -> f64 {
        if !self.is_fading() {
            return f64::INFINITY;
        }
        let prefix_log: f64 = self.prefix.iter().map(|l| l.mean().ln()).sum();
        let c = (self.tail.offspring_value() - 1) as f64;
        let tail_log = self.tail_weight_sum(self.prefix.len() as u64, QWeight::Ln1pScaled { c });
        (prefix_log + tail_log).exp()
    }

    /// E Z_n = Π_{k<n} m_k.
    pub fn mean_population(&self, n: u64) -> f64 {
        let mut log = 0.0;
        for k in 0..n.min(self.prefix.len() as u64) {
            log += self.prefix[k as usize].mean().ln();
        }
        if n > self.prefix.len() as u64 {
            let c = (self.tail.offspring_value() - 1) as f64;
            for k in self.prefix.len() as u64..n {
                log += (c * self.tail.q_at(k)).ln_1p();
            }
        }
        log.exp()
    }

    /// Cached-style partial product L_n = Π_{k<=n} m_k.
    pub fn partial_product(&self, n: u64) -> f64 {
        self.mean_population(n + 1)
    }

    /// d_n = -Σ_{k>=n} ln(1 - q_k); +∞ is representable (some q_k = 1).
    pub fn dn(&self, n: u64) -> Result<f64> {
        if !self.is_fading() {
            return Err(Error::DivergentQSeries);
        }
        if n <= DN_DENSE_LEN {
            return Ok(self.dn_dense()[n as usize]);
        }
        Ok(self.dn_uncached(n))
    }

    fn dn_dense(&self) -> &Vec<f64> {
        self.dn_cache.get_or_init(|| {
            let len = DN_DENSE_LEN as usize;
            let mut v = vec![0.0f64; len + 1];
            v[len] = self.dn_uncached(DN_DENSE_LEN);
            for k in (0..len).rev() {
                let q = self.q(k as u64);
                v[k] = if q >= 1.0 {
                    f64::INFINITY
                } else {
                    v[k + 1] + -(-q).ln_1p()
                };
            }
            v
        })
    }

    fn dn_uncached(&self, n: u64) -> f64 {
        let mut total = 0.0f64;
        for k in n..self.prefix.len() as u64 {
            let q = self.prefix[k as usize].non_unit_prob();
            if q >= 1.0 {
                return f64::INFINITY;
            }
            total += -(-q).ln_1p();
        }
        total + self.tail_weight_sum(n.max(self.prefix.len() as u64), QWeight::NegLn1mQ)
    }

    /// Σ_{k>=from} w(q_k) over the tail rule, summed analytically.
    fn tail_weight_sum(&self, from: u64, w: QWeight) -> f64 {
        match self.tail {
            TailRule::Degenerate => 0.0,
            TailRule::ConstantQ { .. } => f64::INFINITY,
            TailRule::GeometricQ { .. } => {
                // Terms decay geometrically; direct summation converges to
                // machine precision in a bounded number of steps.
                let mut total = 0.0;
                for k in from..from + 4096 {
                    let term = w.of_q(self.tail.q_at(k));
                    total += term;
                    if term < 1e-18 {
                        break;
                    }
                }
                total
            }
            TailRule::LogPowerQ { coeff, power, log_power, start, .. } => {
                let start = start.max(if log_power > 0.0 { 2 } else { 1 });
                let from = from.max(start);
                let sq = SmoothQ { coeff, power, log_power };
                // Direct sum to a point where Euler–Maclaurin corrections
                // are below 1e-13, then switch to the integral form.
                const EM_START: u64 = 1024;
                let m = from.max(EM_START);
                let mut head = 0.0;
                for k in from..m {
                    head += w.of_q(sq.q(k as f64));
                }
                head + euler_maclaurin_tail(&sq, w, m as f64)
            }
        }
    }

    /// Two-sided bounds for P(ν <= n): [e^{-L d_n}, e^{-d_n}].
    pub fn nu_tail_bounds(&self, n: u64) -> Result<(f64, f64)> {
        let d = self.dn(n)?;
        let l = self.fading_product();
        Ok(((-l * d).exp(), (-d).exp()))
    }

    /// Decide convergence of Σ f(n+1) q_n from the analytic tail rule.
    pub fn moment_criterion(&self, f: &MomentFunction) -> CriterionOutcome {
        // The prefix contributes finitely many finite terms; only the tail
        // rule decides.
        match (&self.tail, f) {
            (TailRule::Degenerate, _) => CriterionOutcome::Converges,
            (TailRule::ConstantQ { .. }, _) => CriterionOutcome::Diverges,
            (TailRule::GeometricQ { .. }, MomentFunction::Power { .. }) => {
                CriterionOutcome::Converges
            }
            (TailRule::GeometricQ { ratio, .. }, MomentFunction::Exponential { lambda }) => {
                if lambda.exp() * ratio < 1.0 {
                    CriterionOutcome::Converges
                } else {
                    CriterionOutcome::Diverges
                }
            }
            (TailRule::LogPowerQ { power, log_power, .. }, MomentFunction::Power { s }) => {
                let p = power - s;
                if p > 1.0 || (p == 1.0 && *log_power > 1.0) {
                    CriterionOutcome::Converges
                } else {
                    CriterionOutcome::Diverges
                }
            }
            (TailRule::LogPowerQ { power, log_power, .. }, MomentFunction::Exponential { lambda }) => {
                if *lambda > 0.0 {
                    CriterionOutcome::Diverges
                } else if power > &1.0 || (*power == 1.0 && *log_power > 1.0) {
                    CriterionOutcome::Converges
                } else {
                    CriterionOutcome::Diverges
                }
            }
            (_, MomentFunction::Tabulated { .. }) => CriterionOutcome::Inconclusive,
        }
    }

    /// Π_n E ζ_n^s: an upper bound for E Z^s; +∞ when it diverges.
    pub fn z_moment_bound(&self, s: f64) -> f64 {
        if !self.is_fading() {
            return f64::INFINITY;
        }
        let prefix_log: f64 = self.prefix.iter().map(|l| l.power_moment(s).ln()).sum();
        let k = self.tail.offspring_value() as f64;
        let c = k.powf(s) - 1.0;
        let tail_log = self.tail_weight_sum(self.prefix.len() as u64, QWeight::Ln1pScaled { c });
        (prefix_log + tail_log).exp()
    }

    /// Next branching transition at or after `n` given population `z` and a
    /// weight budget drawn outside: event at the first m >= n with
    /// Σ_{k=n..m} w_k > budget, where w_k = -ln(1 - q_k).
    ///
    /// Returns `None` when the event falls beyond `horizon`.
    fn next_event(&self, n: u64, budget: f64, horizon: u64) -> Option<u64> {
        let mut cum = 0.0f64;
        let mut m = n;
        // Sequential scan first: cheap and exact for fast-decaying rules.
        const SCAN: u64 = 64;
        while m < n.saturating_add(SCAN) {
            if m > horizon {
                return None;
            }
            let q = self.q(m);
            if q >= 1.0 {
                return Some(m);
            }
            cum += -(-q).ln_1p();
            if cum > budget {
                return Some(m);
            }
            m += 1;
        }
        // Slowly decaying tail: bisect on the residual weights.
        let d_m = self.dn(m).expect("fading checked by caller");
        let theta = d_m - (budget - cum);
        if theta <= 0.0 {
            return None; // numerically no residual weight left
        }
        // Find the largest generation with d >= theta; the event is there.
        let mut lo = m; // d_lo >= theta
        let mut hi = m.max(2);
        loop {
            hi = hi.saturating_mul(2);
            if hi >= horizon {
                if self.dn(horizon).ok()? >= theta {
                    return None; // event beyond the horizon
                }
                hi = horizon;
                break;
            }
            if self.dn(hi).ok()? < theta {
                break;
            }
            lo = hi;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.dn(mid).ok()? >= theta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(lo)
    }

    /// Exact trajectory sample up to `horizon` generations. The outcome
    /// records ν when the environment provably never branches again.
    pub fn simulate_up_to<R: Rng + ?Sized>(
        &self,
        horizon: u64,
        rng: &mut R,
    ) -> Result<BranchingTrajectory> {
        if !self.is_fading() {
            return Err(Error::NonFadingEnvironment(
                "skip-ahead trajectory sampling needs Σ q_n < ∞".into(),
            ));
        }
        let mut z: u64 = 1;
        let mut events: Vec<BranchEvent> = Vec::new();

        // Explicit prefix: arbitrary laws, sampled individual by individual.
        let prefix_end = (self.prefix.len() as u64).min(horizon);
        for n in 0..prefix_end {
            let law = &self.prefix[n as usize];
            if law.non_unit_prob() == 0.0 {
                continue;
            }
            let mut offspring = Vec::new();
            let mut new_z = 0u64;
            for j in 0..z {
                let c = law.sample(rng);
                new_z += c;
                if c != 1 {
                    offspring.push((j, c));
                }
            }
            if !offspring.is_empty() {
                events.push(BranchEvent { transition: n, offspring });
            }
            z = new_z;
        }

        // Tail: skip from event to event.
        let mut n = prefix_end;
        let mut faded = false;
        while n <= horizon {
            let d_n = self.dn(n)?;
            if d_n == 0.0 {
                faded = true;
                break;
            }
            let u: f64 = rng.sample(rand::distributions::OpenClosed01);
            let budget = -u.ln() / z as f64;
            if budget >= d_n {
                faded = true; // no branching ever again
                break;
            }
            match self.next_event(n, budget, horizon) {
                None => break, // next event beyond horizon
                Some(m) => {
                    let q_m = self.q(m);
                    let k = match self.offspring_at(m) {
                        OffspringAt::Binary { offspring, .. } => offspring,
                        OffspringAt::Law(law) => law.max_value(), // unreachable: tail is binary
                    };
                    let b = conditional_binomial_at_least_one(z, q_m, rng);
                    let idx = rand::seq::index::sample(rng, z as usize, b as usize);
                    let mut offspring: Vec<(u64, u64)> =
                        idx.into_iter().map(|i| (i as u64, k)).collect();
                    offspring.sort_unstable();
                    z += b * (k - 1);
                    events.push(BranchEvent { transition: m, offspring });
                    n = m + 1;
                }
            }
        }

        let nu = if faded {
            Some(events.last().map(|e| e.transition + 1).unwrap_or(1).max(1))
        } else {
            None
        };
        Ok(BranchingTrajectory::new(events, nu, horizon, z))
    }

    /// Exact complete trajectory: (Z_0, ..., Z_ν, ν, Z).
    pub fn simulate_trajectory<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<BranchingTrajectory> {
        const CAP: u64 = 1 << 62;
        let t = self.simulate_up_to(CAP, rng)?;
        if t.nu().is_none() {
            return Err(Error::NotRealizedWithinCap { cap: CAP });
        }
        Ok(t)
    }

    /// Sparse offspring counts (parent index, count ≠ 1) for one transition,
    /// sampled without conditioning. Used by the per-generation engine path.
    pub fn sample_branch_counts<R: Rng + ?Sized>(
        &self,
        n: u64,
        z: u64,
        rng: &mut R,
    ) -> Vec<(u64, u64)> {
        match self.offspring_at(n) {
            OffspringAt::Law(law) => {
                if law.non_unit_prob() == 0.0 {
                    return Vec::new();
                }
                (0..z)
                    .filter_map(|j| {
                        let c = law.sample(rng);
                        (c != 1).then_some((j, c))
                    })
                    .collect()
            }
            OffspringAt::Binary { q, offspring } => {
                if q <= 0.0 {
                    return Vec::new();
                }
                let b = rand_distr::Binomial::new(z, q).expect("valid binomial").sample(rng);
                if b == 0 {
                    return Vec::new();
                }
                let idx = rand::seq::index::sample(rng, z as usize, b as usize);
                let mut v: Vec<(u64, u64)> = idx.into_iter().map(|i| (i as u64, offspring)).collect();
                v.sort_unstable();
                v
            }
        }
    }
}

/// Σ_{k>=m} w(q(k)) by Euler–Maclaurin: ∫_m^∞ + w(q(m))/2 - f'(m)/12.
/// `m` must be large enough that the next correction term is negligible;
/// callers guarantee m >= 1024.
fn euler_maclaurin_tail(sq: &SmoothQ, w: QWeight, m: f64) -> f64 {
    // Expand w(q) in powers of q and integrate term by term: q(m) <= 1e-3
    // at the callers' m, so the series truncates fast.
    let q_m = sq.q(m);
    debug_assert!(q_m < 0.01);
    let mut integral = 0.0;
    let mut coef_pow = 1.0f64;
    let mut leading = 0.0;
    for j in 1..=8u32 {
        let jf = f64::from(j);
        coef_pow *= sq.coeff;
        let sign = match w {
            QWeight::NegLn1mQ => 1.0,
            QWeight::Ln1pScaled { c } => c.powi(j as i32) * if j % 2 == 0 { -1.0 } else { 1.0 },
        };
        let term = sign * coef_pow / jf * power_log_tail_integral(m, jf * sq.power, jf * sq.log_power);
        integral += term;
        if j == 1 {
            leading = term.abs();
        } else if term.abs() < 1e-17 * leading {
            break;
        }
    }
    let f_m = w.of_q(q_m);
    let fp_m = w.d_dq(q_m) * sq.dq(m);
    integral + 0.5 * f_m - fp_m / 12.0
}

/// ∫_m^∞ t^{-a} (ln t)^{-b} dt via v = ln t, where the integrand becomes
/// e^{(1-a)v} v^{-b} with exponential decay (or is elementary when a = 1).
fn power_log_tail_integral(m: f64, a: f64, b: f64) -> f64 {
    let v0 = m.ln();
    if a == 1.0 {
        // Requires b > 1; callers only reach this under a convergent rule.
        return v0.powf(1.0 - b) / (b - 1.0);
    }
    debug_assert!(a > 1.0);
    if b == 0.0 {
        return m.powf(1.0 - a) / (a - 1.0);
    }
    // ∫ = m^{1-a} ∫_0^∞ e^{-(a-1)u} (v0 + u)^{-b} du after v = v0 + u.
    let rate = a - 1.0;
    let g = |u: f64| (-rate * u).exp() * (v0 + u).powf(-b);
    // e^{-rate u} is below 1e-18 beyond ~42 e-foldings.
    let r = quadrature::integrate(g, 0.0, 42.0 / rate, 1e-12, 0.0);
    r.value * m.powf(1.0 - a)
}

/// Sample B ~ Binomial(z, q) conditioned on B >= 1 by walking the
/// conditional pmf; stable for tiny q where rejection would stall.
fn conditional_binomial_at_least_one<R: Rng + ?Sized>(z: u64, q: f64, rng: &mut R) -> u64 {
    if q >= 1.0 {
        return z;
    }
    let log1mq = (-q).ln_1p();
    let denom = -((z as f64) * log1mq).exp_m1(); // P(B >= 1)
    let u: f64 = rng.gen::<f64>() * denom;
    // t_b = C(z,b) q^b (1-q)^{z-b}, walked via successive ratios.
    let mut b = 1u64;
    let mut t = z as f64 * q * ((z as f64 - 1.0) * log1mq).exp();
    let mut acc = t;
    while acc < u && b < z {
        t *= (z - b) as f64 / (b + 1) as f64 * q / (1.0 - q);
        b += 1;
        acc += t;
    }
    b
}

/// One branching transition: the parents whose offspring count differs
/// from 1, with their counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BranchEvent {
    pub transition: u64,
    pub offspring: Vec<(u64, u64)>,
}

/// A sampled population path, stored as its branching events; the
/// population is constant between events.
#[derive(Debug, Clone, Serialize)]
pub struct BranchingTrajectory {
    events: Vec<BranchEvent>,
    /// Population right after each event (parallel to `events`).
    levels: Vec<u64>,
    nu: Option<u64>,
    explored_to: u64,
    z_final: u64,
}

impl BranchingTrajectory {
    fn new(events: Vec<BranchEvent>, nu: Option<u64>, explored_to: u64, z_final: u64) -> Self {
        let mut z = 1u64;
        let levels = events
            .iter()
            .map(|e| {
                for &(_, c) in &e.offspring {
                    z += c - 1;
                }
                z
            })
            .collect();
        debug_assert_eq!(z, z_final);
        BranchingTrajectory { events, levels, nu, explored_to, z_final }
    }

    /// Constant trajectory Z ≡ 1 (useful for degenerate environments).
    pub fn constant_one() -> Self {
        BranchingTrajectory {
            events: Vec::new(),
            levels: Vec::new(),
            nu: Some(1),
            explored_to: u64::MAX,
            z_final: 1,
        }
    }

    pub fn events(&self) -> &[BranchEvent] {
        &self.events
    }

    /// Fading time, when the simulation established it.
    pub fn nu(&self) -> Option<u64> {
        self.nu
    }

    pub fn explored_to(&self) -> u64 {
        self.explored_to
    }

    /// Terminal (or current, if not yet faded) population.
    pub fn final_population(&self) -> u64 {
        self.z_final
    }

    /// Z_n.
    pub fn population_at(&self, n: u64) -> u64 {
        if n == 0 {
            return 1;
        }
        // Events strictly before generation n have taken effect.
        match self.events.partition_point(|e| e.transition < n) {
            0 => 1,
            k => self.levels[k - 1],
        }
    }

    /// Z_0..=Z_n as a dense vector.
    pub fn sizes_up_to(&self, n: u64) -> Vec<u64> {
        (0..=n).map(|k| self.population_at(k)).collect()
    }

    /// η_μ = Σ_{n=1..μ} Z_n, computed over the constant spans.
    pub fn eta(&self, mu: u64) -> u64 {
        let mut total: u128 = 0;
        let mut level = 1u64;
        let mut span_start = 1u64; // first generation at this level
        for (e, &lvl) in self.events.iter().zip(&self.levels) {
            let level_until = e.transition; // Z_n == level for span_start..=transition
            if span_start > mu {
                break;
            }
            let hi = level_until.min(mu);
            if hi >= span_start {
                total += (hi - span_start + 1) as u128 * level as u128;
            }
            level = lvl;
            span_start = e.transition + 1;
        }
        if mu >= span_start {
            total += (mu - span_start + 1) as u128 * level as u128;
        }
        u64::try_from(total).unwrap_or(u64::MAX)
    }
}

/// Non-decreasing test functions for the fading-time moment criterion.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MomentFunction {
    Power { s: f64 },
    Exponential { lambda: f64 },
    Tabulated { values: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionOutcome {
    Converges,
    Diverges,
    Inconclusive,
}

/// Monte Carlo summaries of (ν, Z, νZ, η_ν).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EmpiricalMoments {
    pub runs: u64,
    pub nu_mean: f64,
    pub nu_se: f64,
    pub z_mean: f64,
    pub z_se: f64,
    pub nu_z_mean: f64,
    pub nu_z_se: f64,
    pub eta_nu_mean: f64,
    pub eta_nu_se: f64,
}

/// Sample means and standard errors of ν, Z, νZ and η_ν over `n_runs`
/// complete trajectories.
pub fn empirical_moments<R: Rng + ?Sized>(
    env: &Environment,
    n_runs: u64,
    rng: &mut R,
) -> Result<EmpiricalMoments> {
    let mut acc = [MeanAcc::default(), MeanAcc::default(), MeanAcc::default(), MeanAcc::default()];
    for _ in 0..n_runs {
        let t = env.simulate_trajectory(rng)?;
        let nu = t.nu().expect("complete trajectory") as f64;
        let z = t.final_population() as f64;
        acc[0].push(nu);
        acc[1].push(z);
        acc[2].push(nu * z);
        acc[3].push(t.eta(t.nu().unwrap()) as f64);
    }
    Ok(EmpiricalMoments {
        runs: n_runs,
        nu_mean: acc[0].mean(),
        nu_se: acc[0].se(),
        z_mean: acc[1].mean(),
        z_se: acc[1].se(),
        nu_z_mean: acc[2].mean(),
        nu_z_se: acc[2].se(),
        eta_nu_mean: acc[3].mean(),
        eta_nu_se: acc[3].se(),
    })
}

#[derive(Default)]
struct MeanAcc {
    n: u64,
    sum: f64,
    sumsq: f64,
}

impl MeanAcc {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sumsq += x * x;
    }
    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }
    fn se(&self) -> f64 {
        let n = self.n as f64;
        let var = (self.sumsq / n - self.mean() * self.mean()).max(0.0);
        (var / n).sqrt()
    }
}
