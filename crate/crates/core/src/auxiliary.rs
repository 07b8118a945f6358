//! Scalar auxiliary equations and the criteria evaluated on them.
//!
//! The basic form is
//!
//! ```text
//! y' = p(t) y + c(t) (L(t, y, y(t - h_1), ..) + F0 |e(t)|) + L_R(t, y, y(t - h*_1), ..)
//! ```
//!
//! where the last term is present only for perturbed systems. Builders derive
//! it from a vector system, replace coefficients by their suprema, linearize
//! `L` around a level, or append a perturbation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dde::{
    self, DdeError, DelaySpec, DelaySystem, History, StepControl, StepMonitor, ToleranceConfig,
    Trajectory,
};
use crate::func::{TimeFn, SUP_SAMPLES};
use crate::fundamental::{compute_fundamental, FundamentalData, FundamentalError};
use crate::nonlinearity::{
    dominating_l, linearize_l, DominatingL, Linearization, NonlinearityError,
};
use crate::system::VectorDelaySystem;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum AuxError {
    #[error("window mismatch: requested {requested}, available {available}")]
    WindowMismatch { requested: f64, available: f64 },
    #[error("system is not linear in its state")]
    NotLinear,
    #[error("invalid supremum: {0}")]
    InvalidSup(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Integration(#[from] DdeError),
    #[error(transparent)]
    Fundamental(#[from] FundamentalError),
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
}

pub type Result<T> = std::result::Result<T, AuxError>;

// ============================================================================
// Scalar system
// ============================================================================

#[derive(Debug, Clone)]
pub struct ScalarDelaySystem {
    t0: f64,
    p: TimeFn,
    c: TimeFn,
    l: DominatingL,
    forcing_amplitude: f64,
    forcing_shape: TimeFn,
    perturbation: DominatingL,
    main_delays: usize,
    delays: DelaySpec,
    history: History,
    valid_until: f64,
}

impl ScalarDelaySystem {
    /// `y' = p(t) y + c(t) L(t, y, y(t - h_1), ..)`, unforced and unperturbed.
    pub fn new(
        t0: f64,
        p: TimeFn,
        c: TimeFn,
        l: DominatingL,
        delays: DelaySpec,
        history: History,
    ) -> Result<Self> {
        if l.n_args() != 1 + delays.len() {
            return Err(AuxError::Shape(format!(
                "L takes {} arguments but there are {} delays",
                l.n_args(),
                delays.len()
            )));
        }
        if history.dim() != 1 {
            return Err(AuxError::Shape(format!(
                "scalar system with {}-dimensional history",
                history.dim()
            )));
        }
        let n_args = l.n_args();
        Ok(Self {
            t0,
            p,
            c,
            l,
            forcing_amplitude: 0.0,
            forcing_shape: TimeFn::Constant(0.0),
            perturbation: DominatingL::zero(n_args),
            main_delays: delays.len(),
            delays,
            history,
            valid_until: f64::INFINITY,
        })
    }

    /// Sets the forcing to `amplitude * shape(t)`; `shape` should be nonnegative.
    pub fn with_forcing(mut self, amplitude: f64, shape: TimeFn) -> Self {
        self.forcing_amplitude = amplitude;
        self.forcing_shape = shape;
        self
    }

    pub fn with_history(&self, history: History) -> Self {
        assert_eq!(history.dim(), 1, "scalar history expected");
        let mut s = self.clone();
        s.history = history;
        s
    }

    /// Restricts integration to `t <= t_end` (tabulated coefficients).
    pub fn with_valid_until(mut self, t_end: f64) -> Self {
        self.valid_until = t_end;
        self
    }

    pub fn p(&self) -> &TimeFn {
        &self.p
    }

    pub fn c(&self) -> &TimeFn {
        &self.c
    }

    pub fn l(&self) -> &DominatingL {
        &self.l
    }

    pub fn perturbation(&self) -> &DominatingL {
        &self.perturbation
    }

    pub fn forcing_amplitude(&self) -> f64 {
        self.forcing_amplitude
    }

    pub fn forcing_shape(&self) -> &TimeFn {
        &self.forcing_shape
    }

    pub fn forcing(&self, t: f64) -> f64 {
        self.forcing_amplitude * self.forcing_shape.eval(t)
    }

    pub fn valid_until(&self) -> f64 {
        self.valid_until
    }

    /// Number of leading delays seen by `L`; the rest belong to the perturbation.
    pub fn main_delays(&self) -> usize {
        self.main_delays
    }

    /// True when the right-hand side is linear in the state.
    pub fn is_linear(&self) -> bool {
        self.l.is_linear() && self.perturbation.is_zero()
    }

    /// Integrates on `[t0, t_end]`, refusing to go past tabulated coefficients.
    pub fn solve(&self, t_end: f64, tol: &ToleranceConfig) -> Result<Trajectory> {
        self.check_window(t_end)?;
        Ok(dde::integrate(self, t_end, tol)?)
    }

    /// Like [`solve`](Self::solve) with extra mesh stops and a step monitor.
    pub fn solve_with(
        &self,
        t_end: f64,
        tol: &ToleranceConfig,
        stops: &[f64],
        monitor: &mut dyn StepMonitor,
    ) -> Result<Trajectory> {
        self.check_window(t_end)?;
        Ok(dde::integrate_with(self, t_end, tol, stops, monitor)?)
    }

    fn check_window(&self, t_end: f64) -> Result<()> {
        if t_end > self.valid_until + 1e-9 * self.valid_until.abs().max(1.0) {
            return Err(AuxError::WindowMismatch {
                requested: t_end,
                available: self.valid_until,
            });
        }
        Ok(())
    }
}

impl DelaySystem for ScalarDelaySystem {
    fn dim(&self) -> usize {
        1
    }

    fn t0(&self) -> f64 {
        self.t0
    }

    fn delays(&self) -> &DelaySpec {
        &self.delays
    }

    fn history(&self) -> &History {
        &self.history
    }

    #[inline]
    fn rhs(&self, t: f64, x: &[f64], lagged: &[f64], dx: &mut [f64]) {
        let y = x[0];
        let l = self.l.evaluate_parts(t, y, &lagged[..self.main_delays]);
        let mut d = self.p.eval(t) * y + self.c.eval(t) * (l + self.forcing(t));
        if !self.perturbation.is_zero() {
            d += self.perturbation.evaluate_parts(t, y, lagged);
        }
        dx[0] = d;
    }
}

// ============================================================================
// Builders
// ============================================================================

/// The auxiliary equation of `sys`: `p`, `c` from `fund`, forcing `F0 |e(t)|`,
/// history `|phi(t)|`. Tabulated coefficients limit integration to the
/// window of `fund`.
pub fn build_auxiliary(
    sys: &VectorDelaySystem,
    fund: &FundamentalData,
    l: &DominatingL,
) -> Result<ScalarDelaySystem> {
    let t0 = sys.t0();
    if (fund.t0() - t0).abs() > 1e-12 * t0.abs().max(1.0) {
        return Err(AuxError::WindowMismatch {
            requested: t0,
            available: fund.t0(),
        });
    }
    let tabulated =
        matches!(fund.p_fn(), TimeFn::Tabulated(_)) || matches!(fund.c_fn(), TimeFn::Tabulated(_));
    Ok(ScalarDelaySystem::new(
        t0,
        fund.p_fn().clone(),
        fund.c_fn().clone(),
        l.clone(),
        sys.delays().clone(),
        sys.history().norm_history(),
    )?
    .with_forcing(sys.forcing_amplitude(), sys.forcing_shape_norm())
    .with_valid_until(if tabulated {
        fund.t_end()
    } else {
        f64::INFINITY
    }))
}

/// Fundamental data, dominating function and auxiliary equation of `sys` on
/// `[t0, t_end]`. Matrix integration (general linear parts) uses `fine` tolerances.
pub fn reduce(
    sys: &VectorDelaySystem,
    t_end: f64,
    grid_step: Option<f64>,
) -> Result<(FundamentalData, DominatingL, ScalarDelaySystem)> {
    let fund = compute_fundamental(
        sys.linear(),
        sys.t0(),
        t_end,
        grid_step,
        &ToleranceConfig::fine(),
    )?;
    let l = dominating_l(sys.nonlinearity())?;
    let aux = build_auxiliary(sys, &fund, &l)?;
    Ok((fund, l, aux))
}

/// Analytic suprema that replace sampled ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SupOverrides {
    pub p_hat: Option<f64>,
    pub c_hat: Option<f64>,
    /// Per term of `L`, in term order.
    pub l_coefficients: Vec<Option<f64>>,
}

/// Replaces `p`, `c`, the coefficients of `L` and of the perturbation by their
/// suprema over `window`, and the forcing by the constant `F0`.
pub fn build_autonomous_majorant(
    aux: &ScalarDelaySystem,
    window: (f64, f64),
    overrides: &SupOverrides,
) -> ScalarDelaySystem {
    let (a, b) = window;
    let sup = |f: &TimeFn| f.sup_on(a, b, SUP_SAMPLES);
    let p_hat = overrides.p_hat.unwrap_or_else(|| sup(&aux.p));
    let c_hat = overrides.c_hat.unwrap_or_else(|| sup(&aux.c));
    let coefficients = aux
        .l
        .terms()
        .iter()
        .enumerate()
        .map(|(j, term)| {
            let v = overrides
                .l_coefficients
                .get(j)
                .copied()
                .flatten()
                .unwrap_or_else(|| sup(&term.coefficient));
            TimeFn::Constant(v)
        })
        .collect();
    let mut out = aux.clone();
    out.p = TimeFn::Constant(p_hat);
    out.c = TimeFn::Constant(c_hat);
    out.l = aux.l.with_coefficients(coefficients);
    out.perturbation = aux.perturbation.with_sup_coefficients(a, b, SUP_SAMPLES);
    out.forcing_shape = TimeFn::Constant(if aux.forcing_amplitude > 0.0 {
        1.0
    } else {
        0.0
    });
    out.valid_until = f64::INFINITY;
    out
}

/// Replaces `L` by the linear bound `sum mu_i chi_i` valid below `lin.level`.
pub fn build_linearized(aux: &ScalarDelaySystem, lin: &Linearization) -> Result<ScalarDelaySystem> {
    if lin.mu.len() != aux.l.n_args() {
        return Err(AuxError::Shape(format!(
            "{} linearization coefficients for {} arguments",
            lin.mu.len(),
            aux.l.n_args()
        )));
    }
    let mut out = aux.clone();
    out.l = lin.as_dominating();
    Ok(out)
}

/// Adds `L_R(t, y, y(t - h*_1), ..)` outside the `c(t)` factor, with its
/// own delays appended after those of `aux`.
pub fn build_perturbed_auxiliary(
    aux: &ScalarDelaySystem,
    l_r: &DominatingL,
    perturbed_delays: &DelaySpec,
) -> Result<ScalarDelaySystem> {
    if l_r.n_args() != 1 + perturbed_delays.len() {
        return Err(AuxError::Shape(format!(
            "L_R takes {} arguments but there are {} perturbed delays",
            l_r.n_args(),
            perturbed_delays.len()
        )));
    }
    if l_r.is_zero() {
        return Ok(aux.clone());
    }
    let offset = aux.delays.len();
    let delays = aux.delays.concat(perturbed_delays);
    let n_args = 1 + delays.len();
    let mut out = aux.clone();
    out.perturbation = aux
        .perturbation
        .widened(n_args)
        .plus(&l_r.shifted_delays(offset, n_args));
    out.delays = delays;
    Ok(out)
}

// ============================================================================
// Linear response
// ============================================================================

/// `u = u_h + F0 u_nh` for a linear scalar system.
#[derive(Debug, Clone)]
pub struct LinearResponse {
    /// Actual history, no forcing.
    pub homogeneous: Trajectory,
    /// Zero history, unit forcing amplitude.
    pub unit_forced: Trajectory,
    pub amplitude: f64,
}

impl LinearResponse {
    pub fn reconstruct(&self, t: f64) -> Result<f64> {
        Ok(self.homogeneous.evaluate(t)?[0] + self.amplitude * self.unit_forced.evaluate(t)?[0])
    }
}

pub fn decompose_linear_response(
    lin: &ScalarDelaySystem,
    t_end: f64,
    tol: &ToleranceConfig,
) -> Result<LinearResponse> {
    if !lin.is_linear() {
        return Err(AuxError::NotLinear);
    }
    let mut hom = lin.clone();
    hom.forcing_amplitude = 0.0;
    let mut forced = lin.with_history(History::scalar(0.0));
    forced.forcing_amplitude = 1.0;
    Ok(LinearResponse {
        homogeneous: hom.solve(t_end, tol)?,
        unit_forced: forced.solve(t_end, tol)?,
        amplitude: lin.forcing_amplitude,
    })
}

// ============================================================================
// Verdicts
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictKind {
    Stable,
    UniformlyStable,
    AsymptoticallyStable,
    UniformlyAsymptoticallyStable,
    Bounded,
    Fts,
    Ftcs,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "kebab-case")]
pub enum Evidence {
    /// Sign condition `p_hat y + c_hat L_hat(y) < 0` on `(0, root)`.
    ClosedForm {
        p_hat: f64,
        c_hat: f64,
        root: Option<f64>,
        unbounded: bool,
        note: Option<String>,
    },
    /// Finite-horizon run of the linearized equation at the largest bounded level.
    Linearized {
        level: f64,
        homogeneous_sup: f64,
        forced_sup: f64,
        amplitude: f64,
        decaying: bool,
        nonlinear_sup: f64,
    },
    /// Sup-norm of a trajectory against finite-time thresholds.
    FiniteTime {
        alpha: f64,
        beta: f64,
        gamma: Option<f64>,
        history_sup: f64,
        sup_norm: f64,
        settle_time: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub kind: VerdictKind,
    pub certified_radius: f64,
    /// `None` for analytic certificates.
    pub horizon: Option<f64>,
    pub evidence: Evidence,
}

impl StabilityVerdict {
    pub fn is_conclusive(&self) -> bool {
        self.kind != VerdictKind::Inconclusive
    }
}

// ============================================================================
// Closed-form criterion
// ============================================================================

/// Strictness margin on `p_hat + c_hat L_hat(y) / y < 0`.
pub const STRICTNESS: f64 = 1e-12;
/// Largest root reported; beyond it the sign condition is taken as global.
pub const ROOT_CAP: f64 = 1e12;
const ROOT_FLOOR: f64 = 1e-9;
const ROOT_REL_TOL: f64 = 1e-13;
const SIGN_SAMPLES: usize = 1000;

/// Finds `y_+`, the end of the first interval `(0, y_+)` on which
/// `p_hat y + c_hat L_hat(y) < 0`, and turns it into a verdict. Returns an
/// inconclusive verdict when `p_hat >= 0` or no such interval exists.
pub fn closed_form_criterion(
    p_hat: f64,
    c_hat: f64,
    l_hat: &dyn Fn(f64) -> f64,
) -> Result<StabilityVerdict> {
    if !(c_hat > 0.0) || !c_hat.is_finite() {
        return Err(AuxError::InvalidSup(format!("c_hat = {c_hat}")));
    }
    if p_hat.is_nan() {
        return Err(AuxError::InvalidSup("p_hat is NaN".into()));
    }
    let inconclusive = |note: &str| StabilityVerdict {
        kind: VerdictKind::Inconclusive,
        certified_radius: 0.0,
        horizon: None,
        evidence: Evidence::ClosedForm {
            p_hat,
            c_hat,
            root: None,
            unbounded: false,
            note: Some(note.to_string()),
        },
    };
    if p_hat >= 0.0 {
        return Ok(inconclusive("p_hat >= 0"));
    }
    let negative = |y: f64| p_hat + c_hat * l_hat(y) / y < -STRICTNESS;
    if !negative(ROOT_FLOOR) {
        return Ok(inconclusive(
            "no interval (0, y) with p_hat y + c_hat L_hat(y) < 0",
        ));
    }
    // march outward to bracket the first sign change
    let mut lo = ROOT_FLOOR;
    let mut hi = 2.0 * lo;
    while negative(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > ROOT_CAP {
            return Ok(StabilityVerdict {
                kind: VerdictKind::UniformlyAsymptoticallyStable,
                certified_radius: ROOT_CAP,
                horizon: None,
                evidence: Evidence::ClosedForm {
                    p_hat,
                    c_hat,
                    root: None,
                    unbounded: true,
                    note: None,
                },
            });
        }
    }
    let mut root = bisect(&negative, lo, hi);
    // the march can step over a short positive excursion; sample to catch it
    let mut note = None;
    for k in 1..SIGN_SAMPLES {
        let y = root * k as f64 / SIGN_SAMPLES as f64;
        if y > ROOT_FLOOR && !negative(y) {
            let prev = root * (k - 1) as f64 / SIGN_SAMPLES as f64;
            root = bisect(&negative, prev.max(ROOT_FLOOR), y);
            note = Some("sign sampling shortened the root bracket".to_string());
            break;
        }
    }
    Ok(StabilityVerdict {
        kind: VerdictKind::UniformlyAsymptoticallyStable,
        certified_radius: root,
        horizon: None,
        evidence: Evidence::ClosedForm {
            p_hat,
            c_hat,
            root: Some(root),
            unbounded: false,
            note,
        },
    })
}

/// Like [`closed_form_criterion`] but a stability verdict is required:
/// `p_hat >= 0` is an error instead of an inconclusive result.
pub fn closed_form_certificate(
    p_hat: f64,
    c_hat: f64,
    l_hat: &dyn Fn(f64) -> f64,
) -> Result<StabilityVerdict> {
    if !(p_hat < 0.0) {
        return Err(AuxError::InvalidSup(format!(
            "p_hat = {p_hat} is not negative"
        )));
    }
    closed_form_criterion(p_hat, c_hat, l_hat)
}

/// Closed-form criterion of a system with constant coefficients (a majorant),
/// with `L_hat(y) = L(t0, y, .., y)`.
pub fn closed_form_for(majorant: &ScalarDelaySystem) -> Result<StabilityVerdict> {
    let (Some(p_hat), Some(c_hat)) = (constant_of(&majorant.p), constant_of(&majorant.c)) else {
        return Err(AuxError::InvalidSup("coefficients are not constant".into()));
    };
    let t0 = majorant.t0;
    let l = majorant.l.clone();
    closed_form_criterion(p_hat, c_hat, &move |y| l.on_diagonal(t0, y))
}

fn constant_of(f: &TimeFn) -> Option<f64> {
    match f {
        TimeFn::Constant(v) => Some(*v),
        _ => None,
    }
}

/// Bisection for the boundary of `pred` between `lo` (true) and `hi` (false).
fn bisect(pred: &dyn Fn(f64) -> bool, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..400 {
        if hi - lo <= ROOT_REL_TOL * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

// ============================================================================
// Finite-horizon evidence from the linearized equation
// ============================================================================

/// Parameters for [`linearized_evidence`].
#[derive(Debug, Clone)]
pub struct LevelSearch {
    pub horizon: f64,
    /// Relative width at which the level bisection stops.
    pub rel_tol: f64,
    pub tol: ToleranceConfig,
}

impl Default for LevelSearch {
    fn default() -> Self {
        Self {
            horizon: 40.0,
            rel_tol: 1e-3,
            tol: ToleranceConfig::default(),
        }
    }
}

/// Stops a run once the state leaves a bound.
struct Ceiling(f64);

impl StepMonitor for Ceiling {
    fn on_step(&mut self, _t: f64, x: &[f64]) -> StepControl {
        if x[0].abs() > self.0 {
            StepControl::Stop
        } else {
            StepControl::Continue
        }
    }
}

/// Max of `|y|` over `[a, b]` from mesh nodes plus the history value.
fn node_sup(traj: &Trajectory, a: f64, b: f64) -> f64 {
    traj.times()
        .iter()
        .enumerate()
        .filter(|(_, &t)| t >= a && t <= b)
        .map(|(k, _)| traj.state(k)[0].abs())
        .fold(0.0, f64::max)
}

/// Whether the homogeneous linearized equation at `level`, started from unit
/// constant history, has no larger excursion on `[T/2, T]` than on `[t0, T/2]`.
fn level_is_bounded(aux: &ScalarDelaySystem, level: f64, search: &LevelSearch) -> Result<bool> {
    let lin = linearize_l(&aux.l, level)?;
    let mut sys = build_linearized(aux, &lin)?.with_history(History::scalar(1.0));
    sys.forcing_amplitude = 0.0;
    let t_end = aux.t0 + search.horizon;
    let traj = match sys.solve_with(t_end, &search.tol, &[], &mut Ceiling(1e6)) {
        Ok(t) => t,
        Err(AuxError::Integration(_)) => return Ok(false),
        Err(e) => return Err(e),
    };
    if traj.stopped_at().is_some() {
        return Ok(false);
    }
    let mid = aux.t0 + 0.5 * search.horizon;
    let head = node_sup(&traj, aux.t0, mid).max(1.0);
    let tail = node_sup(&traj, mid, t_end);
    Ok(tail <= head)
}

/// Largest linearization level whose linear equation stays bounded on the
/// horizon, then the history radius `c*` for which the linear bound keeps the
/// nonlinear solution below that level.
pub fn linearized_evidence(
    aux: &ScalarDelaySystem,
    search: &LevelSearch,
) -> Result<StabilityVerdict> {
    let inconclusive = |evidence| StabilityVerdict {
        kind: VerdictKind::Inconclusive,
        certified_radius: 0.0,
        horizon: Some(search.horizon),
        evidence,
    };
    let empty = Evidence::Linearized {
        level: 0.0,
        homogeneous_sup: f64::NAN,
        forced_sup: f64::NAN,
        amplitude: aux.forcing_amplitude,
        decaying: false,
        nonlinear_sup: f64::NAN,
    };
    if !aux.perturbation.is_zero() {
        return Err(AuxError::NotLinear);
    }
    // bracket [lo bounded, hi unbounded]
    let mut lo = 1.0;
    let mut hi;
    if level_is_bounded(aux, lo, search)? {
        hi = 2.0;
        let mut n = 0;
        while level_is_bounded(aux, hi, search)? {
            lo = hi;
            hi *= 2.0;
            n += 1;
            if n > 40 {
                break;
            }
        }
    } else {
        hi = lo;
        let mut n = 0;
        loop {
            lo *= 0.5;
            n += 1;
            if n > 60 {
                return Ok(inconclusive(empty));
            }
            if level_is_bounded(aux, lo, search)? {
                break;
            }
            hi = lo;
        }
    }
    while hi - lo > search.rel_tol * lo {
        let mid = 0.5 * (lo + hi);
        if level_is_bounded(aux, mid, search)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let level = lo;
    let t_end = aux.t0 + search.horizon;
    let lin = build_linearized(aux, &linearize_l(&aux.l, level)?)?;
    let unit = lin.with_history(History::scalar(1.0));
    let response = decompose_linear_response(&unit, t_end, &search.tol)?;
    let homogeneous_sup = node_sup(&response.homogeneous, aux.t0, t_end).max(1.0);
    let forced_sup = node_sup(&response.unit_forced, aux.t0, t_end);
    let mid = aux.t0 + 0.5 * search.horizon;
    let decaying = node_sup(&response.homogeneous, mid, t_end) < 1.0;
    let radius = (level - aux.forcing_amplitude * forced_sup) / homogeneous_sup;
    if !(radius > 0.0) {
        return Ok(inconclusive(Evidence::Linearized {
            level,
            homogeneous_sup,
            forced_sup,
            amplitude: aux.forcing_amplitude,
            decaying,
            nonlinear_sup: f64::NAN,
        }));
    }
    let nonlinear = aux
        .with_history(History::scalar(radius))
        .solve(t_end, &search.tol)?;
    let nonlinear_sup = node_sup(&nonlinear, aux.t0, t_end);
    let kind = if nonlinear_sup > level * (1.0 + search.rel_tol) {
        VerdictKind::Inconclusive
    } else if aux.forcing_amplitude == 0.0 && decaying {
        VerdictKind::AsymptoticallyStable
    } else {
        VerdictKind::Bounded
    };
    Ok(StabilityVerdict {
        certified_radius: if kind == VerdictKind::Inconclusive {
            0.0
        } else {
            radius
        },
        kind,
        horizon: Some(search.horizon),
        evidence: Evidence::Linearized {
            level,
            homogeneous_sup,
            forced_sup,
            amplitude: aux.forcing_amplitude,
            decaying,
            nonlinear_sup,
        },
    })
}
