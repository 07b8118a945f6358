//! Sampled ordering checks between trajectories.
//!
//! Every check compares series on a grid and allows a slack proportional to
//! the solver tolerances of the two runs being compared. A check that passes
//! with slack but not without is reported as [`Outcome::Tight`].

use serde::Serialize;
use thiserror::Error;

use crate::auxiliary::{AuxError, Evidence, ScalarDelaySystem, StabilityVerdict, VerdictKind};
use crate::dde::{
    self, norm2, DdeError, DelaySpec, DelaySystem, History, ToleranceConfig, Trajectory,
};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ComparisonError {
    #[error("trajectories cover different windows: [{a0}, {a1}] vs [{b0}, {b1}]")]
    WindowMismatch { a0: f64, a1: f64, b0: f64, b1: f64 },
    #[error("bad parameters: {0}")]
    BadParameters(String),
    #[error(transparent)]
    Integration(#[from] DdeError),
    #[error(transparent)]
    Auxiliary(#[from] AuxError),
}

pub type Result<T> = std::result::Result<T, ComparisonError>;

/// Uniform points used by every grid-based check, before adding mesh nodes.
pub const DEFAULT_GRID_POINTS: usize = 2000;

/// `k * (atol + rtol * |value|)` with tolerances summed over the two runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Slack {
    pub k: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Slack {
    pub fn from_tolerances(k: f64, a: &ToleranceConfig, b: &ToleranceConfig) -> Self {
        Self {
            k,
            rtol: a.rtol + b.rtol,
            atol: a.atol + b.atol,
        }
    }

    /// Slack `k = 2` for two runs at the same tolerance.
    pub fn standard(tol: &ToleranceConfig) -> Self {
        Self::from_tolerances(2.0, tol, tol)
    }

    pub fn zero() -> Self {
        Self {
            k: 0.0,
            rtol: 0.0,
            atol: 0.0,
        }
    }

    pub fn with_k(self, k: f64) -> Self {
        Self { k, ..self }
    }

    /// Sum of two slacks, for chained comparisons.
    pub fn plus(self, other: Slack) -> Self {
        // fold the multipliers into the tolerances so that k = 1
        Self {
            k: 1.0,
            rtol: self.k * self.rtol + other.k * other.rtol,
            atol: self.k * self.atol + other.k * other.atol,
        }
    }

    #[inline]
    pub fn at(&self, magnitude: f64) -> f64 {
        self.k * (self.atol + self.rtol * magnitude.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Pass,
    /// Passes only thanks to the slack.
    Tight,
    Fail,
}

impl Outcome {
    pub fn passed(self) -> bool {
        self != Outcome::Fail
    }
}

/// Result of comparing ordered series `s_0 <= s_1 <= ..` on a grid.
#[derive(Debug, Clone, Serialize)]
pub struct OrderingReport {
    pub grid: Vec<f64>,
    pub series: Vec<Vec<f64>>,
    /// `max_t (s_i(t) - s_{i+1}(t))` for each adjacent pair.
    pub pair_violation: Vec<f64>,
    /// Largest entry of `pair_violation` (negative when strictly ordered).
    pub max_violation: f64,
    pub slack: Slack,
    pub outcome: Outcome,
    /// First grid time where the ordering fails beyond the slack.
    pub first_failure: Option<f64>,
}

impl OrderingReport {
    pub fn passed(&self) -> bool {
        self.outcome.passed()
    }

    /// Evaluates series already sampled on `grid`.
    pub fn from_series(grid: Vec<f64>, series: Vec<Vec<f64>>, slack: Slack) -> Self {
        let mut pair_violation = Vec::with_capacity(series.len().saturating_sub(1));
        let mut strict_ok = true;
        let mut slack_ok = true;
        let mut first_failure: Option<f64> = None;
        for pair in series.windows(2) {
            let (lo, hi) = (&pair[0], &pair[1]);
            let mut worst = f64::NEG_INFINITY;
            for (j, &t) in grid.iter().enumerate() {
                let d = lo[j] - hi[j];
                worst = worst.max(d);
                if d > 0.0 {
                    strict_ok = false;
                }
                let allowed = slack.at(lo[j].abs().max(hi[j].abs()));
                if !(d <= allowed) {
                    slack_ok = false;
                    first_failure = Some(first_failure.map_or(t, |f: f64| f.min(t)));
                }
            }
            pair_violation.push(worst);
        }
        let outcome = if !slack_ok {
            Outcome::Fail
        } else if strict_ok {
            Outcome::Pass
        } else {
            Outcome::Tight
        };
        let max_violation = pair_violation
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            grid,
            series,
            pair_violation,
            max_violation,
            slack,
            outcome,
            first_failure,
        }
    }
}

/// Uniform grid of `points` on `[a, b]` merged with `extra` nodes in range.
pub fn check_grid(a: f64, b: f64, points: usize, extra: &[f64]) -> Vec<f64> {
    let n = points.max(2);
    let mut g: Vec<f64> = (0..n)
        .map(|k| {
            if k == n - 1 {
                b
            } else {
                a + (b - a) * k as f64 / (n - 1) as f64
            }
        })
        .collect();
    g.extend(extra.iter().copied().filter(|&t| t >= a && t <= b));
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

fn same_window(a: &Trajectory, b: &Trajectory) -> Result<()> {
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0);
    if close(a.t_start(), b.t_start()) && close(a.t_end(), b.t_end()) {
        Ok(())
    } else {
        Err(ComparisonError::WindowMismatch {
            a0: a.t_start(),
            a1: a.t_end(),
            b0: b.t_start(),
            b1: b.t_end(),
        })
    }
}

fn coarsest<'a>(trajs: impl Iterator<Item = &'a Trajectory>) -> Option<&'a Trajectory> {
    trajs.min_by_key(|t| t.n_nodes())
}

fn values_on(traj: &Trajectory, grid: &[f64], norm: bool) -> Result<Vec<f64>> {
    let mut buf = vec![0.0; traj.dim()];
    grid.iter()
        .map(|&t| {
            traj.evaluate_into(t.min(traj.t_end()), &mut buf)?;
            Ok(if norm { norm2(&buf) } else { buf[0] })
        })
        .collect()
}

/// Checks `|x(t)| <= y_1(t) <= y_2(t) <= ..` for a vector trajectory and
/// scalar trajectories ordered inner to outer.
pub fn verify_domination(
    vec_traj: &Trajectory,
    scalar_trajs: &[&Trajectory],
    grid_points: usize,
    slack: Slack,
) -> Result<OrderingReport> {
    for s in scalar_trajs {
        same_window(vec_traj, s)?;
    }
    let all = std::iter::once(vec_traj).chain(scalar_trajs.iter().copied());
    let nodes = coarsest(all)
        .map(|t| t.times().to_vec())
        .unwrap_or_default();
    let grid = check_grid(vec_traj.t_start(), vec_traj.t_end(), grid_points, &nodes);
    let mut series = vec![values_on(vec_traj, &grid, true)?];
    for s in scalar_trajs {
        series.push(values_on(s, &grid, s.dim() > 1)?);
    }
    Ok(OrderingReport::from_series(grid, series, slack))
}

/// Checks `u_1(t) <= u_2(t)` for two scalar trajectories.
pub fn compare_scalar(
    lower: &Trajectory,
    upper: &Trajectory,
    grid_points: usize,
    slack: Slack,
) -> Result<OrderingReport> {
    same_window(lower, upper)?;
    let nodes = coarsest([lower, upper].into_iter())
        .map(|t| t.times().to_vec())
        .unwrap_or_default();
    let grid = check_grid(lower.t_start(), lower.t_end(), grid_points, &nodes);
    let series = vec![
        values_on(lower, &grid, false)?,
        values_on(upper, &grid, false)?,
    ];
    Ok(OrderingReport::from_series(grid, series, slack))
}

/// Integrates two scalar systems and checks that the first stays below the
/// second. The caller supplies a pair with ordered right-hand sides and/or
/// ordered histories.
pub fn check_ordering_lemma(
    lower: &dyn DelaySystem,
    upper: &dyn DelaySystem,
    horizon: f64,
    tol: &ToleranceConfig,
    slack: Slack,
) -> Result<OrderingReport> {
    if lower.dim() != 1 || upper.dim() != 1 {
        return Err(ComparisonError::BadParameters(
            "ordering checks take scalar systems".into(),
        ));
    }
    if lower.t0() != upper.t0() {
        return Err(ComparisonError::BadParameters(
            "systems start at different times".into(),
        ));
    }
    let pair = PairSystem::new(lower, upper);
    let traj = dde::integrate(&pair, lower.t0() + horizon, tol)?;
    let grid = check_grid(
        traj.t_start(),
        traj.t_end(),
        DEFAULT_GRID_POINTS,
        traj.times(),
    );
    let mut lo = Vec::with_capacity(grid.len());
    let mut hi = Vec::with_capacity(grid.len());
    let mut buf = [0.0; 2];
    for &t in &grid {
        traj.evaluate_into(t.min(traj.t_end()), &mut buf)?;
        lo.push(buf[0]);
        hi.push(buf[1]);
    }
    Ok(OrderingReport::from_series(grid, vec![lo, hi], slack))
}

/// Two scalar systems integrated side by side on one step sequence, so that
/// solver error does not decorrelate solutions that merge.
struct PairSystem<'a> {
    lower: &'a dyn DelaySystem,
    upper: &'a dyn DelaySystem,
    delays: DelaySpec,
    history: History,
}

impl<'a> PairSystem<'a> {
    fn new(lower: &'a dyn DelaySystem, upper: &'a dyn DelaySystem) -> Self {
        let (hl, hu) = (lower.history().clone(), upper.history().clone());
        let history = History::function(2, move |t, out| {
            hl.eval_into(t, &mut out[..1]);
            hu.eval_into(t, &mut out[1..]);
        });
        Self {
            lower,
            upper,
            delays: lower.delays().concat(upper.delays()),
            history,
        }
    }
}

impl DelaySystem for PairSystem<'_> {
    fn dim(&self) -> usize {
        2
    }

    fn t0(&self) -> f64 {
        self.lower.t0()
    }

    fn delays(&self) -> &DelaySpec {
        &self.delays
    }

    fn history(&self) -> &History {
        &self.history
    }

    fn rhs(&self, t: f64, x: &[f64], lagged: &[f64], dx: &mut [f64]) {
        // one (lower, upper) block per delay; lower's delays come first
        let (lag_lo, lag_hi) = lagged.split_at(2 * self.lower.delays().len());
        let (d_lo, d_hi) = dx.split_at_mut(1);
        self.lower.rhs(
            t,
            &x[..1],
            &lag_lo.iter().step_by(2).copied().collect::<Vec<_>>(),
            d_lo,
        );
        self.upper.rhs(
            t,
            &x[1..],
            &lag_hi
                .iter()
                .skip(1)
                .step_by(2)
                .copied()
                .collect::<Vec<_>>(),
            d_hi,
        );
    }
}

/// Constant histories `c1 <= c2` give ordered solutions.
pub fn check_history_monotonicity(
    sys: &ScalarDelaySystem,
    c1: f64,
    c2: f64,
    horizon: f64,
    tol: &ToleranceConfig,
    slack: Slack,
) -> Result<OrderingReport> {
    if !(0.0 <= c1 && c1 <= c2) {
        return Err(ComparisonError::BadParameters(format!(
            "need 0 <= c1 <= c2, got {c1}, {c2}"
        )));
    }
    let lo = sys.with_history(History::scalar(c1));
    let hi = sys.with_history(History::scalar(c2));
    check_ordering_lemma(&lo, &hi, horizon, tol, slack)
}

/// A variable history with `sup |phi| <= c` is dominated by the constant
/// history `c`. `c` defaults to the sampled supremum of `|phi|`.
pub fn check_constant_dominates_variable(
    sys: &ScalarDelaySystem,
    variable: &History,
    level: Option<f64>,
    horizon: f64,
    tol: &ToleranceConfig,
    slack: Slack,
) -> Result<OrderingReport> {
    let t0 = sys.t0();
    let h = sys.delays().h_upper();
    let sup = variable.sup_norm(t0 - h, t0, 1000);
    let c = level.unwrap_or(sup);
    if sup > c * (1.0 + 1e-12) {
        return Err(ComparisonError::BadParameters(format!(
            "variable history reaches {sup}, above the constant level {c}"
        )));
    }
    let var = sys.with_history(variable.clone());
    let cst = sys.with_history(History::scalar(c));
    check_ordering_lemma(&var, &cst, horizon, tol, slack)
}

// ============================================================================
// Finite-time stability
// ============================================================================

/// Samples of `|x|` on `[a, b]`: uniform grid plus mesh nodes.
fn norm_samples(traj: &Trajectory, a: f64, b: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let grid = check_grid(a, b, DEFAULT_GRID_POINTS, traj.times());
    let norms = values_on(traj, &grid, true)?;
    Ok((grid, norms))
}

/// Finite-time stability of a run with respect to `(alpha, beta, T)`, and
/// finite-time contractive stability when `gamma` is given.
///
/// Requires `sup |phi| <= alpha < beta` and `alpha < gamma`. The verdict is
/// FTS when `sup_{[t0, t0+T]} |x| < beta`, FTCS when additionally `|x| < gamma`
/// on some final segment `[t1, t0+T]` with `t1 < t0 + T`.
pub fn check_fts(
    traj: &Trajectory,
    alpha: f64,
    beta: f64,
    horizon: f64,
    gamma: Option<f64>,
) -> Result<StabilityVerdict> {
    if !(alpha > 0.0 && alpha < beta) {
        return Err(ComparisonError::BadParameters(format!(
            "need 0 < alpha < beta, got {alpha}, {beta}"
        )));
    }
    if let Some(g) = gamma {
        if !(alpha < g) {
            return Err(ComparisonError::BadParameters(format!(
                "need alpha < gamma, got {alpha}, {g}"
            )));
        }
    }
    let t0 = traj.t_start();
    let t_end = t0 + horizon;
    if !(horizon > 0.0) || t_end > traj.t_end() * (1.0 + 1e-12) + 1e-12 {
        return Err(ComparisonError::BadParameters(format!(
            "horizon {horizon} outside the trajectory window [{t0}, {}]",
            traj.t_end()
        )));
    }
    let h = traj.h_upper();
    let history_sup = if h > 0.0 {
        traj.history().sup_norm(t0 - h, t0, 1000)
    } else {
        traj.history().norm_at(t0)
    };
    if history_sup > alpha {
        return Err(ComparisonError::BadParameters(format!(
            "history reaches {history_sup}, above alpha = {alpha}"
        )));
    }
    let (grid, norms) = norm_samples(traj, t0, t_end.min(traj.t_end()))?;
    let sup_norm = norms.iter().copied().fold(0.0, f64::max);
    let fts = sup_norm < beta;
    let settle_time = match gamma {
        Some(g) if fts => settle_time(traj, &grid, &norms, g)?,
        _ => None,
    };
    let kind = match (fts, settle_time) {
        (false, _) => VerdictKind::Inconclusive,
        (true, Some(_)) => VerdictKind::Ftcs,
        (true, None) => VerdictKind::Fts,
    };
    Ok(StabilityVerdict {
        kind,
        certified_radius: if fts { alpha } else { 0.0 },
        horizon: Some(horizon),
        evidence: Evidence::FiniteTime {
            alpha,
            beta,
            gamma,
            history_sup,
            sup_norm,
            settle_time,
        },
    })
}

/// Earliest `t1` after which the sampled norm stays below `gamma`, refined
/// by bisection on the dense output.
fn settle_time(traj: &Trajectory, grid: &[f64], norms: &[f64], gamma: f64) -> Result<Option<f64>> {
    let last = norms.len() - 1;
    if norms[last] >= gamma {
        return Ok(None);
    }
    let Some(j) = norms.iter().rposition(|&v| v >= gamma) else {
        return Ok(Some(grid[0]));
    };
    let (mut lo, mut hi) = (grid[j], grid[j + 1]);
    for _ in 0..100 {
        if hi - lo <= 1e-12 * hi.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if traj.norm_at(mid)? >= gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(hi))
}
