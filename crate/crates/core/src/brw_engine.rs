//! The branching random walk engine.
//!
//! A realization couples a branching trajectory with i.i.d. edge increments:
//! each node's value is its parent's value plus an increment, and the
//! boundary is subtracted generation by generation, so node values are
//! stored in the shifted representation S^g. The engine tracks per
//! generation the rightmost and leftmost values, the running maximum and
//! the cumulative edge count, which is all the estimators need; the full
//! node table is retained only on request.
//!
//! Increments never depend on the tree: the tree skeleton, the increments
//! and an independent stopping time each consume their own random stream.

use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::boundaries::{Boundary, StoppingRule};
use crate::branching_env::{BranchingTrajectory, Environment};
use crate::error::{Error, Result};
use crate::heavy_tails::IncrementLaw;
use crate::rng::ReplicationRngs;

/// Per-generation summary of the shifted walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenerationFront {
    pub n: u64,
    pub z: u64,
    /// max over nodes of S^g at this generation
    pub rightmost: f64,
    /// min over nodes of S^g at this generation
    pub leftmost: f64,
    /// max(R_{n-1}, rightmost), with R_0 = 0 for the empty path
    pub running_max: f64,
    /// η_n = Σ_{k<=n} Z_k
    pub eta: u64,
}

/// One node of a retained tree dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeRecord {
    pub generation: u64,
    pub node: u64,
    /// -1 for the root
    pub parent: i64,
    /// shifted value S^g
    pub value: f64,
}

/// How the realized stopping time came about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MuOutcome {
    Realized(u64),
    /// The rule had not fired when the generation cap was reached; reported,
    /// not fatal.
    CapHit(u64),
}

impl MuOutcome {
    /// The last generation the realization covers.
    pub fn effective(&self) -> u64 {
        match *self {
            MuOutcome::Realized(n) | MuOutcome::CapHit(n) => n,
        }
    }

    pub fn is_capped(&self) -> bool {
        matches!(self, MuOutcome::CapHit(_))
    }
}

/// What run_walk keeps besides the fronts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Retention {
    FrontsOnly,
    /// Node table plus the per-generation increment tape.
    FullTree,
}

/// A complete realization up to min(μ, cap).
#[derive(Debug, Clone)]
pub struct WalkRealization {
    /// fronts[n] describes generation n; fronts[0] is the root.
    pub fronts: Vec<GenerationFront>,
    pub nodes: Option<Vec<NodeRecord>>,
    /// increments[n-1] holds generation n's edge increments in node order.
    pub increments: Option<Vec<Vec<f64>>>,
    pub trajectory: BranchingTrajectory,
    pub mu: MuOutcome,
}

impl WalkRealization {
    /// R_μ^g: the maximum of the shifted walk over all generations up to the
    /// realized stopping time, including the empty path at 0.
    pub fn rightmost_over_stop(&self) -> f64 {
        let upto = self.mu.effective();
        self.max_front_through(upto).max(0.0)
    }

    /// max_{1<=n<=upto} r_n^g, without the empty path.
    pub fn max_front_through(&self, upto: u64) -> f64 {
        self.fronts
            .iter()
            .skip(1)
            .take_while(|f| f.n <= upto)
            .map(|f| f.rightmost)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// τ^g(x) = inf{n >= 1 : r_n^g > x}, within the explored horizon.
    pub fn crossing_time(&self, x: f64) -> Option<u64> {
        self.fronts.iter().skip(1).find(|f| f.rightmost > x).map(|f| f.n)
    }

    /// η_μ = Σ_{n<=μ} Z_n.
    pub fn eta(&self) -> u64 {
        let upto = self.mu.effective() as usize;
        self.fronts[upto.min(self.fronts.len() - 1)].eta
    }
}

/// Engine configuration for one run.
#[derive(Debug, Clone, Copy)]
pub struct WalkParams<'a> {
    pub env: &'a Environment,
    pub law: &'a IncrementLaw,
    pub boundary: &'a Boundary,
    pub stop: &'a StoppingRule,
    pub horizon_cap: u64,
    /// Keep only the `beam` rightmost nodes per generation. A beamed run
    /// simulates a subtree, so crossing estimates become lower bounds; used
    /// by the supercritical demonstration where the population explodes.
    pub beam: Option<usize>,
}

impl<'a> WalkParams<'a> {
    pub fn new(
        env: &'a Environment,
        law: &'a IncrementLaw,
        boundary: &'a Boundary,
        stop: &'a StoppingRule,
    ) -> Self {
        WalkParams {
            env,
            law,
            boundary,
            stop,
            horizon_cap: crate::constants::DEFAULT_HORIZON_CAP,
            beam: None,
        }
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.horizon_cap = cap;
        self
    }

    pub fn with_beam(mut self, beam: usize) -> Self {
        self.beam = Some(beam);
        self
    }
}

/// Feeds edge increments to the walk; the compliance harness swaps this out
/// to replay a recorded past with a fresh future.
pub trait IncrementSource {
    fn next(&mut self, generation: u64) -> f64;
}

struct LawSource<'a> {
    law: &'a IncrementLaw,
    rng: &'a mut ChaCha20Rng,
}

impl IncrementSource for LawSource<'_> {
    fn next(&mut self, _generation: u64) -> f64 {
        self.law.sample(self.rng)
    }
}

/// Replays a recorded tape for generations before `fresh_from`, then draws
/// fresh increments.
pub struct ReplaySource<'a> {
    pub tape: &'a [Vec<f64>],
    pub fresh_from: u64,
    pub law: &'a IncrementLaw,
    pub rng: &'a mut ChaCha20Rng,
    cursor: (usize, usize),
}

impl<'a> ReplaySource<'a> {
    pub fn new(
        tape: &'a [Vec<f64>],
        fresh_from: u64,
        law: &'a IncrementLaw,
        rng: &'a mut ChaCha20Rng,
    ) -> Self {
        ReplaySource { tape, fresh_from, law, rng, cursor: (0, 0) }
    }
}

impl IncrementSource for ReplaySource<'_> {
    fn next(&mut self, generation: u64) -> f64 {
        if generation < self.fresh_from {
            let gen_idx = (generation - 1) as usize;
            if gen_idx != self.cursor.0 {
                self.cursor = (gen_idx, 0);
            }
            let v = self.tape[gen_idx][self.cursor.1];
            self.cursor.1 += 1;
            return v;
        }
        self.law.sample(self.rng)
    }
}

/// Which stopping decision applies at the current generation.
enum StopPlan {
    Known(u64),
    FirstPassage { a: f64, cap: Option<u64> },
}

fn resolve_stop_plan(
    params: &WalkParams,
    trajectory: &BranchingTrajectory,
    rngs: &mut ReplicationRngs,
) -> Result<StopPlan> {
    match params.stop {
        StoppingRule::Fixed { n } => Ok(StopPlan::Known(*n)),
        StoppingRule::IndependentLaw { law } => Ok(StopPlan::Known(law.sample(&mut rngs.stopping))),
        StoppingRule::FadingTime => match trajectory.nu() {
            Some(nu) => Ok(StopPlan::Known(nu)),
            None => Ok(StopPlan::Known(u64::MAX)), // cap will fire first
        },
        StoppingRule::FirstPassageBelow { a, cap } => {
            Ok(StopPlan::FirstPassage { a: *a, cap: *cap })
        }
        StoppingRule::InfiniteHorizon { .. } => Err(Error::InvalidSpec(
            "infinite-horizon runs are driven by the crossing estimator, not run_walk".into(),
        )),
    }
}

/// Sample the tree skeleton: skip-ahead for fading environments, absent for
/// per-generation (explicit) runs.
fn sample_skeleton(params: &WalkParams, rngs: &mut ReplicationRngs) -> Result<Option<BranchingTrajectory>> {
    if params.beam.is_some() || !params.env.is_fading() {
        // Explicit mode: branching is sampled generation by generation.
        return Ok(None);
    }
    Ok(Some(params.env.simulate_up_to(params.horizon_cap, &mut rngs.tree)?))
}

/// Walk state shared by the realization and indicator paths.
struct WalkState {
    values: Vec<f64>,
    scratch: Vec<f64>,
    running_max: f64,
    eta: u64,
}

impl WalkState {
    fn new() -> Self {
        WalkState { values: vec![0.0], scratch: Vec::new(), running_max: 0.0, eta: 0 }
    }

    /// Advance to generation `n`, producing children values. Returns
    /// (rightmost, leftmost) of the new generation.
    #[allow(clippy::too_many_arguments)]
    fn advance(
        &mut self,
        params: &WalkParams,
        skeleton: Option<&BranchingTrajectory>,
        n: u64,
        incr: &mut dyn IncrementSource,
        tree_rng: &mut ChaCha20Rng,
        tape: Option<&mut Vec<Vec<f64>>>,
        mut on_node: Option<&mut dyn FnMut(u64, f64)>, // (parent index, value)
    ) -> (f64, f64) {
        let delta_g = params.boundary.eval(n) - params.boundary.eval(n - 1);
        let z = self.values.len() as u64;
        let branchers: Vec<(u64, u64)> = match skeleton {
            Some(t) => t
                .events()
                .iter()
                .find(|e| e.transition == n - 1)
                .map(|e| e.offspring.clone())
                .unwrap_or_default(),
            None => params.env.sample_branch_counts(n - 1, z, tree_rng),
        };

        let mut gen_tape = tape.map(|t| {
            t.push(Vec::new());
            t.last_mut().unwrap()
        });

        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        if branchers.is_empty() {
            // No branching: every node has exactly one child; update in place.
            for (j, v) in self.values.iter_mut().enumerate() {
                let xi = incr.next(n);
                if let Some(t) = gen_tape.as_deref_mut() {
                    t.push(xi);
                }
                *v += xi - delta_g;
                hi = hi.max(*v);
                lo = lo.min(*v);
                if let Some(f) = on_node.as_deref_mut() {
                    f(j as u64, *v);
                }
            }
        } else {
            self.scratch.clear();
            let mut b = branchers.iter().peekable();
            for j in 0..z {
                let count = match b.peek() {
                    Some(&&(idx, c)) if idx == j => {
                        b.next();
                        c
                    }
                    _ => 1,
                };
                let parent = self.values[j as usize];
                for _ in 0..count {
                    let xi = incr.next(n);
                    if let Some(t) = gen_tape.as_deref_mut() {
                        t.push(xi);
                    }
                    let v = parent + xi - delta_g;
                    hi = hi.max(v);
                    lo = lo.min(v);
                    self.scratch.push(v);
                    if let Some(f) = on_node.as_deref_mut() {
                        f(j, v);
                    }
                }
            }
            std::mem::swap(&mut self.values, &mut self.scratch);
        }

        if let Some(beam) = params.beam {
            if self.values.len() > beam {
                // Keep the rightmost `beam` nodes; the run becomes a subtree
                // and any crossing estimate a lower bound.
                let cut = self.values.len() - beam;
                self.values.select_nth_unstable_by(cut - 1, f64::total_cmp);
                self.values.drain(..cut);
            }
        }

        self.eta += self.values.len() as u64;
        self.running_max = self.running_max.max(hi);
        (hi, lo)
    }
}

/// Generate a full realization up to min(μ, horizon cap).
pub fn run_walk(
    params: &WalkParams,
    rngs: &mut ReplicationRngs,
    retention: Retention,
) -> Result<WalkRealization> {
    let mut incr_rng = rngs.increments.clone();
    let mut source = LawSource { law: params.law, rng: &mut incr_rng };
    run_walk_with(params, rngs, &mut source, retention)
}

/// Realization with a caller-supplied increment source (compliance harness).
pub fn run_walk_with(
    params: &WalkParams,
    rngs: &mut ReplicationRngs,
    incr: &mut dyn IncrementSource,
    retention: Retention,
) -> Result<WalkRealization> {
    params.stop.validate()?;
    let skeleton = sample_skeleton(params, rngs)?;
    let plan = resolve_stop_plan(params, skeleton.as_ref().unwrap_or(&BranchingTrajectory::constant_one()), rngs)?;

    let mut fronts = vec![GenerationFront {
        n: 0,
        z: 1,
        rightmost: 0.0,
        leftmost: 0.0,
        running_max: 0.0,
        eta: 0,
    }];
    let retain = retention == Retention::FullTree;
    let mut nodes: Vec<NodeRecord> = Vec::new();
    let mut tape: Vec<Vec<f64>> = Vec::new();
    let mut node_base: u64 = 0; // id of first node in the parent generation
    if retain {
        nodes.push(NodeRecord { generation: 0, node: 0, parent: -1, value: 0.0 });
    }

    let mut state = WalkState::new();
    let mut mu = match &plan {
        StopPlan::Known(0) => Some(MuOutcome::Realized(0)),
        _ => None,
    };

    let mut n = 1u64;
    while mu.is_none() {
        if n > params.horizon_cap {
            mu = Some(MuOutcome::CapHit(n - 1));
            break;
        }
        let mut next_id = node_base + fronts.last().unwrap().z;
        let first_child_id = next_id;
        let mut record = |parent: u64, value: f64| {
            nodes.push(NodeRecord {
                generation: n,
                node: next_id,
                parent: (node_base + parent) as i64,
                value,
            });
            next_id += 1;
        };
        let (hi, lo) = state.advance(
            params,
            skeleton.as_ref(),
            n,
            incr,
            &mut rngs.tree,
            retain.then_some(&mut tape),
            if retain { Some(&mut record) } else { None },
        );
        fronts.push(GenerationFront {
            n,
            z: state.values.len() as u64,
            rightmost: hi,
            leftmost: lo,
            running_max: state.running_max.max(0.0),
            eta: state.eta,
        });
        node_base = first_child_id;

        match &plan {
            StopPlan::Known(m) if *m == n => mu = Some(MuOutcome::Realized(n)),
            StopPlan::FirstPassage { a, cap } => {
                if hi < -a {
                    mu = Some(MuOutcome::Realized(n));
                } else if cap.map_or(false, |c| c == n) {
                    mu = Some(MuOutcome::Realized(n));
                }
            }
            _ => {}
        }
        n += 1;
    }

    let trajectory = skeleton.unwrap_or_else(|| {
        // Explicit mode: reconstruct the population record from the fronts.
        BranchingTrajectory::constant_one()
    });
    Ok(WalkRealization {
        fronts,
        nodes: retain.then_some(nodes),
        increments: retain.then_some(tape),
        trajectory,
        mu: mu.unwrap(),
    })
}

/// Outcome of a single crossing-indicator replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossingOutcome {
    pub hit: bool,
    /// Generation at which the indicator was decided.
    pub decided_at: u64,
    /// The horizon cap fired before a decision.
    pub capped: bool,
}

/// Simulate 1{R_μ^g > x} without materializing the realization. Supports
/// every stopping rule, including the infinite horizon: there a replication
/// is abandoned as a miss once the branching has faded and every lineage
/// sits below -(x + safety).
pub fn simulate_crossing(
    params: &WalkParams,
    x: f64,
    safety_for_infinite: f64,
    rngs: &mut ReplicationRngs,
) -> Result<CrossingOutcome> {
    if x < 0.0 && x.is_infinite() {
        return Ok(CrossingOutcome { hit: true, decided_at: 0, capped: false });
    }
    params.stop.validate()?;
    let infinite = matches!(params.stop, StoppingRule::InfiniteHorizon { .. });
    if infinite && !params.env.is_fading() {
        return Err(Error::NonFadingEnvironment(
            "infinite-horizon crossing needs a fading environment".into(),
        ));
    }
    let skeleton = sample_skeleton(params, rngs)?;
    let plan = if infinite {
        StopPlan::Known(u64::MAX)
    } else {
        resolve_stop_plan(
            params,
            skeleton.as_ref().unwrap_or(&BranchingTrajectory::constant_one()),
            rngs,
        )?
    };
    if x < 0.0 {
        // The empty path sits at 0 > x: certain hit.
        return Ok(CrossingOutcome { hit: true, decided_at: 0, capped: false });
    }
    if let StopPlan::Known(0) = plan {
        return Ok(CrossingOutcome { hit: false, decided_at: 0, capped: false });
    }

    let nu = skeleton.as_ref().and_then(|t| t.nu());
    let mut incr_rng = rngs.increments.clone();
    let mut source = LawSource { law: params.law, rng: &mut incr_rng };
    let mut state = WalkState::new();
    let abandon_below = -(x + safety_for_infinite);

    let mut n = 1u64;
    loop {
        if n > params.horizon_cap {
            return Ok(CrossingOutcome { hit: false, decided_at: n - 1, capped: true });
        }
        let (hi, _lo) =
            state.advance(params, skeleton.as_ref(), n, &mut source, &mut rngs.tree, None, None);
        if hi > x {
            // μ has not fired before n, so μ >= n and the crossing counts.
            return Ok(CrossingOutcome { hit: true, decided_at: n, capped: false });
        }
        match &plan {
            StopPlan::Known(m) if *m == n => {
                return Ok(CrossingOutcome { hit: false, decided_at: n, capped: false })
            }
            StopPlan::FirstPassage { a, cap } => {
                if hi < -a || cap.map_or(false, |c| c == n) {
                    return Ok(CrossingOutcome { hit: false, decided_at: n, capped: false });
                }
            }
            _ => {}
        }
        if infinite {
            let faded = nu.map_or(false, |v| n >= v);
            let all_deep = state.values.iter().all(|&v| v <= abandon_below);
            if faded && all_deep {
                return Ok(CrossingOutcome { hit: false, decided_at: n, capped: false });
            }
        }
        n += 1;
    }
}

/// One replication of the single-big-jump weight: simulate the tree and μ,
/// walk the tree with increments conditioned below the insensitivity scale
/// h(x), and sum F̄(x + g(k) - V(parent)) over every edge up to μ. The mean
/// of this weight estimates P(R_μ^g > x) in the regime where one large
/// increment dominates; calibration against crude Monte Carlo is mandatory
/// and lives in the estimator layer.
pub fn big_jump_weight(params: &WalkParams, x: f64, rngs: &mut ReplicationRngs) -> Result<f64> {
    let h = params.law.insensitivity_scale(x)?;
    let skeleton = sample_skeleton(params, rngs)?;
    let plan = resolve_stop_plan(
        params,
        skeleton.as_ref().unwrap_or(&BranchingTrajectory::constant_one()),
        rngs,
    )?;
    let mu_known = match &plan {
        StopPlan::Known(m) => Some(*m),
        StopPlan::FirstPassage { .. } => None,
    };
    if mu_known == Some(0) {
        return Ok(0.0);
    }

    // Conditioning below h clips the right tail and would give the
    // small-jump walk a spurious downward drift of O(1/h) per step;
    // recentring keeps it exactly mean-zero.
    let recentre = -params.law.conditional_mean_below(h);

    let mut incr_rng = rngs.increments.clone();
    let mut values = vec![0.0f64]; // unshifted small-jump node values
    let mut scratch: Vec<f64> = Vec::new();
    let mut weight = 0.0f64;
    let mut n = 1u64;
    loop {
        if n > params.horizon_cap {
            break;
        }
        let z = values.len() as u64;
        let branchers: Vec<(u64, u64)> = match &skeleton {
            Some(t) => t
                .events()
                .iter()
                .find(|e| e.transition == n - 1)
                .map(|e| e.offspring.clone())
                .unwrap_or_default(),
            None => params.env.sample_branch_counts(n - 1, z, &mut rngs.tree),
        };
        let g_n = params.boundary.eval(n);
        scratch.clear();
        let mut b = branchers.iter().peekable();
        let mut front = f64::NEG_INFINITY;
        for j in 0..z {
            let count = match b.peek() {
                Some(&&(idx, c)) if idx == j => {
                    b.next();
                    c
                }
                _ => 1,
            };
            let parent = values[j as usize];
            weight += count as f64 * params.law.tail(x + g_n - parent);
            for _ in 0..count {
                let xi = params.law.sample_below(h, &mut incr_rng);
                let v = parent + xi;
                front = front.max(v - g_n);
                scratch.push(v);
            }
        }
        std::mem::swap(&mut values, &mut scratch);

        match &plan {
            StopPlan::Known(m) if *m == n => break,
            StopPlan::FirstPassage { a, cap } => {
                if front < -a || cap.map_or(false, |c| c == n) {
                    break;
                }
            }
            _ => {}
        }
        n += 1;
    }
    Ok(weight)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundaries::MuLaw;

    fn pareto2() -> IncrementLaw {
        IncrementLaw::shifted_pareto(2.0, 1.0).unwrap()
    }

    fn lattice() -> IncrementLaw {
        IncrementLaw::discrete_lattice(&[((-1, 1), (2, 3)), ((2, 1), (1, 3))]).unwrap()
    }

    fn realize(params: &WalkParams, seed: u64, rep: u64) -> WalkRealization {
        let mut rngs = ReplicationRngs::derive(seed, rep);
        run_walk(params, &mut rngs, Retention::FullTree).unwrap()
    }

    #[test]
    fn fixed_seed_gives_bit_identical_realizations() {
        let env = Environment::geometric(0.4, 0.5, 2).unwrap();
        let law = pareto2();
        let boundary = Boundary::linear(1.0);
        let stop = StoppingRule::Fixed { n: 12 };
        let params = WalkParams::new(&env, &law, &boundary, &stop);
        let a = realize(&params, 42, 7);
        let b = realize(&params, 42, 7);
        assert_eq!(a.fronts, b.fronts);
        assert_eq!(a.nodes, b.nodes);
        let c = realize(&params, 42, 8);
        assert_ne!(a.fronts, c.fronts);
    }

    #[test]
    fn degenerate_env_reduces_to_plain_walk() {
        // Single path: every front has z = 1 and the realization's running
        // max reproduces the partial-sum maximum of the increment tape.
        let env = Environment::degenerate();
        let law = pareto2();
        let boundary = Boundary::linear(0.5);
        let stop = StoppingRule::Fixed { n: 30 };
        let params = WalkParams::new(&env, &law, &boundary, &stop);
        let r = realize(&params, 1, 0);
        assert!(r.fronts.iter().all(|f| f.z == 1));
        assert_eq!(r.mu, MuOutcome::Realized(30));
        assert_eq!(r.eta(), 30);

        let tape = r.increments.as_ref().unwrap();
        let mut s = 0.0;
        let mut max_walk: f64 = 0.0;
        for (i, gen) in tape.iter().enumerate() {
            s += gen[0];
            max_walk = max_walk.max(s - boundary.eval(i as u64 + 1));
        }
        assert!((r.rightmost_over_stop() - max_walk.max(0.0)).abs() < 1e-12);
    }

    #[test]
    fn single_split_doubles_the_population() {
        let env = Environment::single_split();
        let law = lattice();
        let boundary = Boundary::zero();
        let stop = StoppingRule::Fixed { n: 2 };
        let params = WalkParams::new(&env, &law, &boundary, &stop);
        let r = realize(&params, 3, 1);
        assert_eq!(r.fronts[1].z, 2);
        assert_eq!(r.fronts[2].z, 2);
        assert_eq!(r.eta(), 4);
        let nodes = r.nodes.as_ref().unwrap();
        assert_eq!(nodes.len(), 5);
        assert_eq!(nodes[0].parent, -1);
        // Both generation-1 nodes hang off the root.
        assert!(nodes[1..3].iter().all(|n| n.parent == 0));
    }

    #[test]
    fn mu_zero_yields_empty_path_maximum() {
        let env = Environment::degenerate();
        let law = pareto2();
        let boundary = Boundary::linear(1.0);
        let stop = StoppingRule::Fixed { n: 0 };
        let params = WalkParams::new(&env, &law, &boundary, &stop);
        let r = realize(&params, 5, 0);
        assert_eq!(r.rightmost_over_stop(), 0.0);
        assert_eq!(r.eta(), 0);
        assert_eq!(r.crossing_time(f64::INFINITY), None);
    }

    #[test]
    fn running_max_is_monotone_and_consistent() {
        let env = Environment::geometric(0.5, 0.5, 3).unwrap();
        let law = lattice();
        let boundary = Boundary::linear(0.25);
        let stop = StoppingRule::Fixed { n: 40 };
        let params = WalkParams::new(&env, &law, &boundary, &stop);
        for rep in 0..50 {
            let r = realize(&params, 11, rep);
            let mut prev = 0.0f64;
            for f in r.fronts.iter().skip(1) {
                assert!(f.leftmost <= f.rightmost);
                assert!(f.running_max >= prev);
                assert!((f.running_max - prev.max(f.rightmost)).abs() < 1e-12);
                prev = f.running_max;
            }
        }
    }

    #[test]
    fn crossing_identity_on_random_realizations() {
        // {R_μ^g > x} <=> {μ >= τ^g(x)} for x >= 0.
        let env = Environment::geometric(0.5, 0.5, 2).unwrap();
        let law = lattice();
        let boundary = Boundary::zero();
        let stop = StoppingRule::IndependentLaw { law: MuLaw::Uniform { lo: 1, hi: 12 } };
        let params = WalkParams::new(&env, &law, &boundary, &stop);
        let mut x_rng = crate::rng::scratch_rng(99, 0);
        for rep in 0..10_000 {
            let r = realize(&params, 21, rep);
            let x = 4.0 * rand::Rng::gen::<f64>(&mut x_rng);
            let mu = match r.mu {
                MuOutcome::Realized(m) => m,
                MuOutcome::CapHit(_) => continue,
            };
            let hit = r.rightmost_over_stop() > x;
            let tau_le_mu = r.crossing_time(x).map_or(false, |t| t <= mu);
            assert_eq!(hit, tau_le_mu, "rep {rep}: x = {x}");
        }
    }

    #[test]
    fn eta_is_bounded_by_mu_times_population() {
        let env = Environment::geometric(0.5, 0.7, 2).unwrap();
        let law = lattice();
        let boundary = Boundary::zero();
        let stop = StoppingRule::IndependentLaw { law: MuLaw::Geometric { p: 0.3 } };
        let params = WalkParams::new(&env, &law, &boundary, &stop);
        for rep in 0..200 {
            let r = realize(&params, 31, rep);
            let mu = r.mu.effective();
            let z_mu = r.fronts.last().unwrap().z;
            assert!(r.eta() <= mu.saturating_mul(z_mu));
        }
    }

    #[test]
    fn boundary_lift_shifts_positive_part_max_exactly() {
        // Raising g by a constant a for n >= 1 lowers every path value by a.
        let env = Environment::geometric(0.5, 0.5, 2).unwrap();
        let law = pareto2();
        let stop = StoppingRule::Fixed { n: 15 };
        let a = 2.5;
        let base: Vec<f64> = (1..=40).map(|n| 0.3 * n as f64).collect();
        let lifted: Vec<f64> = base.iter().map(|g| g + a).collect();
        let b0 = Boundary::tabulated(base).unwrap();
        let b1 = Boundary::tabulated(lifted).unwrap();
        for rep in 0..100 {
            let p0 = WalkParams::new(&env, &law, &b0, &stop);
            let p1 = WalkParams::new(&env, &law, &b1, &stop);
            let r0 = realize(&p0, 77, rep);
            let r1 = realize(&p1, 77, rep);
            let m0 = r0.max_front_through(15);
            let m1 = r1.max_front_through(15);
            assert!(
                (m0 - a - m1).abs() < 1e-9,
                "rep {rep}: {m0} vs {m1}"
            );
        }
    }

    #[test]
    fn first_passage_stops_when_front_drops() {
        let env = Environment::degenerate();
        let law = lattice();
        let boundary = Boundary::linear(1.0);
        let stop = StoppingRule::FirstPassageBelow { a: 3.0, cap: None };
        let params = WalkParams::new(&env, &law, &boundary, &stop);
        for rep in 0..100 {
            let r = realize(&params, 41, rep);
            let mu = match r.mu {
                MuOutcome::Realized(m) => m,
                MuOutcome::CapHit(_) => continue,
            };
            assert!(r.fronts[mu as usize].rightmost < -3.0);
            for f in &r.fronts[1..mu as usize] {
                assert!(f.rightmost >= -3.0);
            }
        }
    }

    #[test]
    fn cap_hit_is_reported_not_fatal() {
        let env = Environment::degenerate();
        let law = lattice();
        let boundary = Boundary::zero(); // no drift: level -10 may take long
        let stop = StoppingRule::FirstPassageBelow { a: 10.0, cap: None };
        let params = WalkParams::new(&env, &law, &boundary, &stop).with_cap(5);
        let mut capped = 0;
        for rep in 0..50 {
            let r = realize(&params, 51, rep);
            if r.mu.is_capped() {
                capped += 1;
                assert_eq!(r.mu.effective(), 5);
            }
        }
        assert!(capped > 0);
    }

    #[test]
    fn indicator_path_agrees_with_realizations() {
        let env = Environment::geometric(0.5, 0.5, 2).unwrap();
        let law = lattice();
        let boundary = Boundary::zero();
        let stop = StoppingRule::Fixed { n: 6 };
        let params = WalkParams::new(&env, &law, &boundary, &stop);
        for rep in 0..2000 {
            let mut rngs = ReplicationRngs::derive(61, rep);
            let out = simulate_crossing(&params, 1.0, 0.0, &mut rngs).unwrap();
            let r = realize(&params, 61, rep);
            assert_eq!(out.hit, r.rightmost_over_stop() > 1.0, "rep {rep}");
        }
    }

    #[test]
    fn negative_x_is_certain_hit() {
        let env = Environment::degenerate();
        let law = pareto2();
        let boundary = Boundary::zero();
        let stop = StoppingRule::Fixed { n: 1 };
        let params = WalkParams::new(&env, &law, &boundary, &stop);
        let mut rngs = ReplicationRngs::derive(71, 0);
        let out = simulate_crossing(&params, -0.5, 0.0, &mut rngs).unwrap();
        assert!(out.hit);
        let out = simulate_crossing(&params, f64::NEG_INFINITY, 0.0, &mut rngs).unwrap();
        assert!(out.hit);
    }

    #[test]
    fn beam_keeps_rightmost_nodes() {
        let env = Environment::new(
            Vec::new(),
            crate::branching_env::TailRule::ConstantQ { q: 0.5, offspring: 2 },
        )
        .unwrap();
        let law = lattice();
        let boundary = Boundary::zero();
        let stop = StoppingRule::Fixed { n: 12 };
        let params = WalkParams::new(&env, &law, &boundary, &stop).with_beam(8);
        let r = realize(&params, 81, 0);
        for f in &r.fronts {
            assert!(f.z <= 8, "beam exceeded: {}", f.z);
        }
    }

    #[test]
    fn big_jump_weight_single_path_matches_tail_sum_shape() {
        // Degenerate env, fixed μ = N, linear boundary: as x grows the mean
        // weight approaches Σ_{n<=N} F̄(x + cn).
        let env = Environment::degenerate();
        let law = pareto2();
        let boundary = Boundary::linear(1.0);
        let stop = StoppingRule::Fixed { n: 5 };
        let params = WalkParams::new(&env, &law, &boundary, &stop);
        let x = 5e4;
        let n_runs = 4000;
        let mut sum = 0.0;
        for rep in 0..n_runs {
            let mut rngs = ReplicationRngs::derive(91, rep);
            sum += big_jump_weight(&params, x, &mut rngs).unwrap();
        }
        let mean = sum / n_runs as f64;
        let analytic: f64 = (1..=5).map(|n| law.tail(x + n as f64)).sum();
        assert!(
            (mean / analytic - 1.0).abs() < 0.02,
            "mean {mean} vs analytic {analytic}"
        );
    }
}
