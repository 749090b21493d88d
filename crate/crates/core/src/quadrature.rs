//! Adaptive Gauss–Kronrod quadrature.
//!
//! A 15-point Kronrod rule with the embedded 7-point Gauss rule drives
//! interval bisection until the local error estimates meet the requested
//! relative tolerance. Helpers map semi-infinite ranges onto [0, 1) and
//! absorb integrable power singularities at the left endpoint, which the
//! heavy-tail convolutions need.

/// Kronrod abscissae (positive half, plus the centre) for the 15-point rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

/// Kronrod weights matching `XGK`.
const WGK: [f64; 8] = [
    0.022_935_322_010_529_2,
    0.063_092_092_629_978_6,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

/// Gauss weights for the embedded 7-point rule (odd Kronrod indices).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> QuadResult {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let f_mid = f(mid);

    let mut kronrod = WGK[7] * f_mid;
    let mut gauss = WG[3] * f_mid;
    for j in 0..7 {
        let dx = half * XGK[j];
        let fsum = f(mid - dx) + f(mid + dx);
        kronrod += WGK[j] * fsum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * fsum;
        }
    }
    kronrod *= half;
    gauss *= half;
    QuadResult {
        value: kronrod,
        abs_error: (kronrod - gauss).abs(),
    }
}

/// Integrate `f` over the finite interval `[a, b]`.
///
/// Bisects intervals until every local error is below its share of
/// `rel_tol * |integral|` (with `abs_floor` as an absolute escape hatch for
/// integrals that are themselves ~0).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_floor: f64) -> QuadResult {
    integrate_segmented(&f, &[a, b], rel_tol, abs_floor)
}

/// Integrate over `breakpoints[0] .. breakpoints[last]`, seeding the work
/// queue with the given subintervals. Heavy-tailed integrands are resolved
/// by seeding log-spaced breakpoints instead of hoping adaptivity finds the
/// mass.
pub fn integrate_segmented<F: Fn(f64) -> f64>(
    f: &F,
    breakpoints: &[f64],
    rel_tol: f64,
    abs_floor: f64,
) -> QuadResult {
    assert!(breakpoints.len() >= 2, "need at least one interval");
    let mut segments: Vec<(f64, f64, QuadResult)> = breakpoints
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| (w[0], w[1], gk15(f, w[0], w[1])))
        .collect();

    const MAX_SPLITS: usize = 4000;
    for _ in 0..MAX_SPLITS {
        let total: f64 = segments.iter().map(|s| s.2.value).sum();
        let err: f64 = segments.iter().map(|s| s.2.abs_error).sum();
        if err <= rel_tol * total.abs() || err <= abs_floor {
            return QuadResult { value: total, abs_error: err };
        }
        // Split the segment with the largest error estimate.
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2.abs_error.total_cmp(&y.1 .2.abs_error))
            .expect("non-empty");
        let (a, b, _) = segments[worst];
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break; // interval exhausted at f64 resolution
        }
        segments[worst] = (a, m, gk15(f, a, m));
        segments.push((m, b, gk15(f, m, b)));
    }
    let total: f64 = segments.iter().map(|s| s.2.value).sum();
    let err: f64 = segments.iter().map(|s| s.2.abs_error).sum();
    QuadResult { value: total, abs_error: err }
}

/// Integrate `f` over `[a, ∞)` via `t = a + u/(1-u)`.
pub fn integrate_to_inf<F: Fn(f64) -> f64>(f: F, a: f64, rel_tol: f64, abs_floor: f64) -> QuadResult {
    let g = |u: f64| {
        if u >= 1.0 {
            return 0.0;
        }
        let den = 1.0 - u;
        let t = a + u / den;
        let v = f(t) / (den * den);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    // Seed points cluster near u = 1 where the original variable runs off
    // to infinity. The abscissae are interior, so u = 1 itself is never hit.
    let bp = [0.0, 0.5, 0.75, 0.875, 0.9375, 0.984_375, 0.999, 1.0];
    integrate_segmented(&g, &bp, rel_tol, abs_floor)
}

/// Integrate `f(t)` over `[0, ∞)` where `f(t) ~ t^{-alpha}` near 0 with
/// `alpha` in [0, 1). The substitution `t = u^{1/(1-alpha)}` removes the
/// endpoint singularity.
pub fn integrate_0_inf_with_singularity<F: Fn(f64) -> f64>(
    f: F,
    alpha: f64,
    rel_tol: f64,
) -> QuadResult {
    assert!((0.0..1.0).contains(&alpha));
    let p = 1.0 / (1.0 - alpha);
    // t = u^p, dt = p u^{p-1} du; f ~ t^{-alpha} => integrand ~ p as u -> 0.
    let g = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let t = u.powf(p);
        f(t) * p * u.powf(p - 1.0)
    };
    let head = integrate(&g, 0.0, 1.0, rel_tol, 0.0);
    let tail = integrate_to_inf(&f, 1.0, rel_tol, head.value.abs() * rel_tol);
    QuadResult {
        value: head.value + tail.value,
        abs_error: head.abs_error + tail.abs_error,
    }
}

/// Log-spaced breakpoints `{a, a+1, a+2, a+4, ...}` up to `b`, used to seed
/// heavy-tail integrals.
pub fn log_spaced_breakpoints(a: f64, b: f64) -> Vec<f64> {
    let mut pts = vec![a];
    let mut step = 1.0;
    let mut t = a + step;
    while t < b {
        pts.push(t);
        step *= 2.0;
        t = a + step;
    }
    pts.push(b);
    pts
}
