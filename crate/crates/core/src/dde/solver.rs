use super::trajectory::{hermite_with_derivative, Trajectory};
use super::{norm2, norm_inf, DdeError, Delay, DelaySystem, Result, ToleranceConfig};

/// Decision returned by a [`StepMonitor`] after each accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepControl {
    Continue,
    Stop,
}

/// Observer of accepted steps; may end a run early.
pub trait StepMonitor {
    fn on_start(&mut self, _t0: f64, _x0: &[f64]) {}

    fn on_step(&mut self, t: f64, x: &[f64]) -> StepControl;
}

struct NoMonitor;

impl StepMonitor for NoMonitor {
    fn on_step(&mut self, _t: f64, _x: &[f64]) -> StepControl {
        StepControl::Continue
    }
}

/// Integrates `sys` from its `t0` to `t_end`.
pub fn integrate<S: DelaySystem + ?Sized>(
    sys: &S,
    t_end: f64,
    tol: &ToleranceConfig,
) -> Result<Trajectory> {
    integrate_with(sys, t_end, tol, &[], &mut NoMonitor)
}

// Bogacki–Shampine 3(2)
const A21: f64 = 0.5;
const A32: f64 = 0.75;
const B1: f64 = 2.0 / 9.0;
const B2: f64 = 1.0 / 3.0;
const B3: f64 = 4.0 / 9.0;
const E1: f64 = -5.0 / 72.0;
const E2: f64 = 1.0 / 12.0;
const E3: f64 = 1.0 / 9.0;
const E4: f64 = -1.0 / 8.0;

const SAFETY: f64 = 0.9;
const MAX_GROWTH: f64 = 5.0;
const MIN_SHRINK: f64 = 0.2;
const MAX_BREAKPOINTS: usize = 1_000_000;
// composite delay sums up to this order are forced into the mesh
const BREAKPOINT_ORDER: usize = 3;

/// Integrates `sys` to `t_end`, forcing the extra mesh points `stops` and
/// reporting every accepted step to `monitor`.
///
/// A monitor that returns [`StepControl::Stop`] ends the run; the returned
/// trajectory then ends at that step and records [`Trajectory::stopped_at`].
pub fn integrate_with<S: DelaySystem + ?Sized>(
    sys: &S,
    t_end: f64,
    tol: &ToleranceConfig,
    stops: &[f64],
    monitor: &mut dyn StepMonitor,
) -> Result<Trajectory> {
    let t0 = sys.t0();
    if !(t_end > t0) || !t_end.is_finite() || !t0.is_finite() {
        return Err(DdeError::InvalidWindow { t0, t_end });
    }
    let n = sys.dim();
    let delays = sys.delays();
    if sys.history().dim() != n {
        return Err(DdeError::InvalidSystem(format!(
            "history dimension {} does not match system dimension {n}",
            sys.history().dim()
        )));
    }
    delays.validate_on(t0, t_end, tol.delay_check_samples)?;

    let m = delays.len();
    let h_lower = delays.h_lower();
    let breakpoints = mesh_stops(sys, t0, t_end, stops);

    let x0 = sys.history().eval(t0);
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(DdeError::InvalidSystem(
            "history is not finite at t0".into(),
        ));
    }

    let mut lag = vec![0.0; m * n];
    let mut f0 = vec![0.0; n];
    // the partial trajectory only holds t0 here; lags at t0 point into history
    let seed = Trajectory::start(sys.history().clone(), delays.h_upper(), t0, &x0, &x0);
    fill_lags(sys, &seed, t0, t0, &mut lag)?;
    sys.rhs(t0, &x0, &lag, &mut f0);
    let mut traj = Trajectory::start(sys.history().clone(), delays.h_upper(), t0, &x0, &f0);
    monitor.on_start(t0, &x0);

    let step_cap = tol.max_step.min(h_lower).min(t_end - t0);
    let mut h = initial_step(&x0, &f0, tol).min(step_cap);

    let mut t = t0;
    let mut y = x0;
    let mut f = f0;
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut mid_val = vec![0.0; n];
    let mut mid_der = vec![0.0; n];
    let mut mid_rhs = vec![0.0; n];
    let mut next_bp = 0usize;
    let mut steps = 0usize;

    while t < t_end {
        steps += 1;
        if steps > tol.max_steps {
            return Err(DdeError::MaxSteps(tol.max_steps));
        }
        while next_bp < breakpoints.len() && breakpoints[next_bp] <= t {
            next_bp += 1;
        }
        let target = breakpoints[next_bp.min(breakpoints.len() - 1)];

        h = h.min(step_cap);
        let mut lands = false;
        let gap = target - t;
        // stretching by 1% to hit a stop is allowed, never past the delay cap
        if gap <= h || (gap <= 1.01 * h && gap <= step_cap) {
            h = gap;
            lands = true;
        }
        if h < tol.min_step * t.abs().max(1.0) {
            return Err(DdeError::StepUnderflow {
                t,
                step: h,
                norm: norm2(&y),
            });
        }

        // stages
        let t2 = t + 0.5 * h;
        for i in 0..n {
            stage[i] = y[i] + h * A21 * f[i];
        }
        fill_lags(sys, &traj, t2, t, &mut lag)?;
        sys.rhs(t2, &stage, &lag, &mut k2);

        let t3 = t + 0.75 * h;
        for i in 0..n {
            stage[i] = y[i] + h * A32 * k2[i];
        }
        fill_lags(sys, &traj, t3, t, &mut lag)?;
        sys.rhs(t3, &stage, &lag, &mut k3);

        let t_new = if lands { target } else { t + h };
        for i in 0..n {
            y_new[i] = y[i] + h * (B1 * f[i] + B2 * k2[i] + B3 * k3[i]);
        }
        fill_lags(sys, &traj, t_new, t, &mut lag)?;
        sys.rhs(t_new, &y_new, &lag, &mut k4);

        let mut err = 0.0f64;
        let mut finite = true;
        for i in 0..n {
            let e = h * (E1 * f[i] + E2 * k2[i] + E3 * k3[i] + E4 * k4[i]);
            let scale = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
            let r = (e / scale).abs();
            if !r.is_finite() || !y_new[i].is_finite() || !k4[i].is_finite() {
                finite = false;
            }
            err = err.max(r);
        }
        if !finite {
            let norm = norm2(&y);
            if norm > tol.overflow {
                return Err(DdeError::BlowUp { t, norm });
            }
            h *= MIN_SHRINK;
            continue;
        }

        if err > 1.0 {
            h *= (SAFETY * err.powf(-1.0 / 3.0)).max(MIN_SHRINK);
            continue;
        }

        // midpoint residual of the dense output
        hermite_with_derivative(h, 0.5, &y, &f, &y_new, &k4, &mut mid_val, &mut mid_der);
        fill_lags(sys, &traj, t2, t, &mut lag)?;
        sys.rhs(t2, &mid_val, &lag, &mut mid_rhs);
        let mut res = 0.0f64;
        for i in 0..n {
            res = res.max((mid_der[i] - mid_rhs[i]).abs());
        }
        let res = res / (1.0 + norm_inf(&mid_rhs));
        if res > tol.residual {
            h *= 0.5;
            continue;
        }

        traj.push(t_new, &y_new, &k4);
        traj.max_residual = traj.max_residual.max(res);
        t = t_new;
        std::mem::swap(&mut y, &mut y_new);
        std::mem::swap(&mut f, &mut k4);

        let norm = norm2(&y);
        if !(norm <= tol.overflow) {
            return Err(DdeError::BlowUp { t, norm });
        }
        if monitor.on_step(t, &y) == StepControl::Stop {
            traj.stopped_at = Some(t);
            return Ok(traj);
        }

        let growth = if err == 0.0 {
            MAX_GROWTH
        } else {
            (SAFETY * err.powf(-1.0 / 3.0)).clamp(MIN_SHRINK, MAX_GROWTH)
        };
        h *= growth;
    }
    Ok(traj)
}

/// Evaluates `x(t_eval - h_i(t_eval))` for every delay from the completed part
/// of `traj` (which ends at `t_done`) or the history.
#[inline]
fn fill_lags<S: DelaySystem + ?Sized>(
    sys: &S,
    traj: &Trajectory,
    t_eval: f64,
    t_done: f64,
    lag: &mut [f64],
) -> Result<()> {
    let n = sys.dim();
    let t0 = traj.t_start();
    for (i, d) in sys.delays().delays().iter().enumerate() {
        let h = d.eval(t_eval);
        if let Delay::Varying { lower, upper, .. } = d {
            if !(h >= *lower && h <= *upper) {
                return Err(DdeError::DelayViolation {
                    index: i,
                    t: t_eval,
                    value: h,
                    lower: *lower,
                    upper: *upper,
                });
            }
        }
        let tau = t_eval - h;
        let out = &mut lag[i * n..(i + 1) * n];
        if tau < t0 {
            sys.history().eval_into(tau, out);
        } else if tau == t0 {
            out.copy_from_slice(traj.state(0));
        } else if tau >= t_done {
            // only reachable through rounding, since steps never exceed h_lower
            out.copy_from_slice(traj.state(traj.n_nodes() - 1));
        } else {
            traj.interpolate(tau, out);
        }
    }
    Ok(())
}

fn initial_step(x0: &[f64], f0: &[f64], tol: &ToleranceConfig) -> f64 {
    let mut ratio = 0.0f64;
    for (x, f) in x0.iter().zip(f0) {
        ratio = ratio.max(f.abs() / tol.allowance(*x));
    }
    if ratio == 0.0 || !ratio.is_finite() {
        return 0.01;
    }
    // one step with local error ~ tolerance for a third-order method
    (0.5 * ratio.powf(-1.0 / 3.0)).clamp(1e-8, 0.1)
}

/// Mesh points that every run must hit: `t0 + k * h_lower`, sums of constant
/// delays (propagated derivative discontinuities), first delayed images of
/// `t0` for varying delays, user stops, and `t_end` itself.
fn mesh_stops<S: DelaySystem + ?Sized>(sys: &S, t0: f64, t_end: f64, extra: &[f64]) -> Vec<f64> {
    let delays = sys.delays();
    let mut pts: Vec<f64> = Vec::new();
    let h_lower = delays.h_lower();
    if h_lower.is_finite() {
        let k_max = ((t_end - t0) / h_lower).ceil() as usize;
        for k in 1..=k_max.min(MAX_BREAKPOINTS) {
            pts.push(t0 + k as f64 * h_lower);
        }
    }
    let constants: Vec<f64> = delays
        .delays()
        .iter()
        .filter_map(|d| match d {
            Delay::Constant(h) => Some(*h),
            _ => None,
        })
        .collect();
    let mut level = vec![0.0];
    for _ in 0..BREAKPOINT_ORDER {
        let mut next = Vec::new();
        for &s in &level {
            for &h in &constants {
                let v = s + h;
                if t0 + v < t_end {
                    next.push(v);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort_by(f64::total_cmp);
        next.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
        pts.extend(next.iter().map(|v| t0 + v));
        level = next;
    }
    for d in delays.delays() {
        if let Delay::Varying { f, upper, .. } = d {
            if let Some(r) = first_delayed_image(|t| t - f(t) - t0, t0, t0 + upper) {
                pts.push(r);
            }
        }
    }
    pts.extend_from_slice(extra);
    pts.retain(|&p| p > t0 && p < t_end);
    pts.push(t_end);
    pts.sort_by(f64::total_cmp);
    let scale = t_end.abs().max(t0.abs()).max(1.0);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * scale);
    // keep t_end exact if a nearby point absorbed it
    if let Some(last) = pts.last_mut() {
        *last = t_end;
    }
    pts
}

fn first_delayed_image<G: Fn(f64) -> f64>(g: G, a: f64, b: f64) -> Option<f64> {
    let (mut lo, mut hi) = (a, b);
    if g(lo) >= 0.0 || g(hi) < 0.0 {
        return None;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}
