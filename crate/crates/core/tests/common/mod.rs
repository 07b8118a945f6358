//! Oracles and generators shared by the integration tests.
#![allow(dead_code)]

use majorant::auxiliary::ScalarDelaySystem;
use majorant::comparison::{
    check_constant_dominates_variable, check_history_monotonicity, check_ordering_lemma, Slack,
};
use majorant::dde::{norm2, DelaySpec, DelaySystem, FnSystem, History, ToleranceConfig};
use majorant::func::TimeFn;
use majorant::nonlinearity::{dominating_l, DominatingL, Factor, MonomialTerm, Nonlinearity};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ============================================================================
// Matrix exponential: diagonal Pade(6, 6) with scaling and squaring
// ============================================================================

pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    const Q: usize = 6;
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm1 > 0.5 {
        (norm1 / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let x = a / 2f64.powi(s);
    let mut num = DMatrix::<f64>::identity(n, n);
    let mut den = DMatrix::<f64>::identity(n, n);
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut coef = 1.0;
    for k in 1..=Q {
        coef *= (Q + 1 - k) as f64 / (k * (2 * Q + 1 - k)) as f64;
        power = &power * &x;
        num += &power * coef;
        den += &power * (if k % 2 == 0 { coef } else { -coef });
    }
    let mut r = den
        .lu()
        .solve(&num)
        .expect("Pade denominator is invertible");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// `exp` of the trapezoid integral of `p` on `grid`, starting from 1.
pub fn trapezoid_exp(grid: &[f64], p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = vec![1.0];
    for j in 1..grid.len() {
        acc += 0.5 * (grid[j] - grid[j - 1]) * (p[j] + p[j - 1]);
        out.push(acc.exp());
    }
    out
}

// ============================================================================
// Polynomial nonlinearities
// ============================================================================

pub fn a1() -> TimeFn {
    TimeFn::analytic(|t| 0.7 - 1.3 * (2.0 * t).sin())
}

pub fn a2() -> TimeFn {
    TimeFn::analytic(|t| -0.4 + 0.2 * t.cos())
}

/// `[a1 x1^3 x2(t - h1)^2, a2 x2(t - h2)^3]`
pub fn two_delay_polynomial() -> Nonlinearity {
    Nonlinearity::zero(2, 3)
        .with_monomial(MonomialTerm::new(
            a1(),
            0,
            vec![Factor::new(0, 0, 3), Factor::new(1, 1, 2)],
        ))
        .with_monomial(MonomialTerm::new(a2(), 1, vec![Factor::new(2, 1, 3)]))
}

/// Largest `|f(t, x)| - L(t, |x_1|, ..)` on random arguments in `[-10, 10]`,
/// divided by `max(1, L)` when `relative`.
pub fn randomized_domination(f: &Nonlinearity, seed: u64, samples: usize, relative: bool) -> f64 {
    let l = dominating_l(f).unwrap();
    let n = f.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let t = rng.gen_range(0.0..50.0);
        let args: Vec<f64> = (0..n * f.n_args())
            .map(|_| rng.gen_range(-10.0..10.0))
            .collect();
        let lhs = norm2(&f.evaluate(t, &args));
        let norms: Vec<f64> = args.chunks(n).map(norm2).collect();
        let rhs = l.evaluate(t, &norms);
        let scale = if relative { rhs.max(1.0) } else { 1.0 };
        worst = worst.max((lhs - rhs) / scale);
    }
    worst
}

// ============================================================================
// Random scalar systems with monotone right-hand sides
// ============================================================================

pub struct Case {
    p: (f64, f64, f64),
    c: (f64, f64),
    terms: Vec<(f64, Vec<u32>)>,
    delays: Vec<f64>,
    forcing: f64,
}

pub fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let m = rng.gen_range(1..3);
    let delays: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..1.5)).collect();
    let terms = (0..rng.gen_range(1..4))
        .map(|_| {
            let mut e: Vec<u32> = (0..=m).map(|_| rng.gen_range(0..3)).collect();
            if e.iter().all(|&v| v == 0) {
                e[rng.gen_range(0..=m)] = 1;
            }
            (rng.gen_range(0.0..0.4), e)
        })
        .collect();
    Case {
        p: (
            rng.gen_range(-3.5..-2.0),
            rng.gen_range(0.0..0.5),
            rng.gen_range(0.5..6.0),
        ),
        c: (rng.gen_range(1.0..1.5), rng.gen_range(0.0..0.3)),
        terms,
        delays,
        forcing: rng.gen_range(0.0..0.2),
    }
}

/// The case with `p` raised by `p_shift` and `extra_l` times the longest
/// delayed argument added to `L`.
pub fn build(case: &Case, p_shift: f64, extra_l: f64, history: f64) -> ScalarDelaySystem {
    let (p0, p1, w) = case.p;
    let (c0, c1) = case.c;
    let mut l = DominatingL::zero(case.delays.len() + 1);
    for (a, e) in &case.terms {
        l = l.with_term(*a, e);
    }
    if extra_l > 0.0 {
        let mut e = vec![0; case.delays.len() + 1];
        e[case.delays.len()] = 1;
        l = l.with_term(extra_l, &e);
    }
    ScalarDelaySystem::new(
        0.0,
        TimeFn::analytic(move |t| p0 + p_shift + p1 * (w * t).sin()),
        TimeFn::analytic(move |t| c0 + c1 * t.cos().abs()),
        l,
        DelaySpec::constant(&case.delays),
        History::scalar(history),
    )
    .unwrap()
    .with_forcing(case.forcing, TimeFn::analytic(|t| (3.0 * t).sin().abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    History,
    RightHandSide,
    ConstantOverVariable,
}

#[derive(Debug, Default)]
pub struct SweepResult {
    /// Ordered pairs that failed, with their largest violation.
    pub violations: Vec<(usize, f64)>,
    /// Reversed pairs that did not fail.
    pub unfailed_controls: Vec<usize>,
    pub worst_violation: f64,
}

impl SweepResult {
    pub fn clean(&self) -> bool {
        self.violations.is_empty() && self.unfailed_controls.is_empty()
    }
}

pub const SWEEP_HORIZON: f64 = 6.0;

/// `cases` random ordered pairs of the given kind, each checked in order
/// and reversed, at slack twice the default tolerances.
pub fn ordering_sweep(kind: Sweep, seed: u64, cases: usize) -> SweepResult {
    let tol = ToleranceConfig::default();
    let slack = Slack::from_tolerances(2.0, &tol, &tol);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SweepResult {
        worst_violation: f64::NEG_INFINITY,
        ..Default::default()
    };
    for k in 0..cases {
        let case = random_case(&mut rng);
        let (rep, lower, upper): (_, Box<dyn DelaySystem>, Box<dyn DelaySystem>) = match kind {
            Sweep::History => {
                let c1 = rng.gen_range(0.0..0.8);
                let c2 = c1 + rng.gen_range(0.05..0.5);
                let sys = build(&case, 0.0, 0.0, 0.0);
                let rep = check_history_monotonicity(&sys, c1, c2, SWEEP_HORIZON, &tol, slack);
                (
                    rep,
                    Box::new(sys.with_history(History::scalar(c1))),
                    Box::new(sys.with_history(History::scalar(c2))),
                )
            }
            Sweep::RightHandSide => {
                let h = rng.gen_range(0.05..1.0);
                let lower = build(&case, 0.0, 0.0, h);
                let upper = build(&case, rng.gen_range(0.2..0.8), rng.gen_range(0.0..0.3), h);
                let rep = check_ordering_lemma(&lower, &upper, SWEEP_HORIZON, &tol, slack);
                (rep, Box::new(lower), Box::new(upper))
            }
            Sweep::ConstantOverVariable => {
                let c = rng.gen_range(0.05..1.0);
                let w = rng.gen_range(0.5..5.0);
                // sin(phase) <= 0 keeps phi(0) at most c / 1.5
                let phase = rng.gen_range(std::f64::consts::PI..std::f64::consts::TAU);
                let phi =
                    History::scalar_fn(move |s| c * (1.0 + 0.5 * (w * s + phase).sin()) / 1.5);
                let sys = build(&case, 0.0, 0.0, c);
                let rep = check_constant_dominates_variable(
                    &sys,
                    &phi,
                    Some(c),
                    SWEEP_HORIZON,
                    &tol,
                    slack,
                );
                (
                    rep,
                    Box::new(sys.with_history(phi)),
                    Box::new(sys.with_history(History::scalar(c))),
                )
            }
        };
        let rep = rep.unwrap_or_else(|e| panic!("case {k}: {e}"));
        out.worst_violation = out.worst_violation.max(rep.max_violation);
        if !rep.passed() {
            out.violations.push((k, rep.max_violation));
        }
        let reversed =
            check_ordering_lemma(upper.as_ref(), lower.as_ref(), SWEEP_HORIZON, &tol, slack)
                .unwrap_or_else(|e| panic!("case {k} reversed: {e}"));
        if reversed.passed() {
            out.unfailed_controls.push(k);
        }
    }
    out
}

// ============================================================================
// Finite-time stability examples
// ============================================================================

/// `y' = rate * y` from a constant history.
pub fn linear_scalar(rate: f64, history: f64) -> impl DelaySystem {
    FnSystem::new(
        0.0,
        DelaySpec::none(),
        History::scalar(history),
        move |_, x: &[f64], _: &[f64], dx: &mut [f64]| dx[0] = rate * x[0],
    )
}

/// `y' = -y + 0.5 e^-t`, `y(0) = 0.05`, so `y = (0.05 + 0.5 t) e^-t`.
pub fn transient_scalar() -> impl DelaySystem {
    FnSystem::new(
        0.0,
        DelaySpec::none(),
        History::scalar(0.05),
        |t: f64, x: &[f64], _: &[f64], dx: &mut [f64]| {
            dx[0] = -x[0] + 0.5 * (-t).exp();
        },
    )
}

pub fn transient_exact(t: f64) -> f64 {
    (0.05 + 0.5 * t) * (-t).exp()
}

/// Time after the peak at `t = 0.9` where the transient falls to `level`.
pub fn transient_crossing(level: f64) -> f64 {
    let (mut lo, mut hi) = (0.9, 50.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if transient_exact(mid) >= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}
