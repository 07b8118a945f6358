//! Retarded delay differential equations with bounded time-varying delays.
//!
//! Systems have the form
//!
//! ```text
//! x'(t) = g(t, x(t), x(t - h_1(t)), ..., x(t - h_m(t))),   t >= t0
//! x(t)  = phi(t),                                          t in [t0 - h_upper, t0]
//! ```
//!
//! and are integrated by the method of steps with an embedded
//! Bogacki–Shampine 2(3) pair and cubic Hermite dense output. Every step is
//! capped at the smallest delay, so delayed arguments always land in the
//! history or in a completed segment.

mod solver;
mod trajectory;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::func::ScalarFn;

pub use solver::{integrate, integrate_with, StepControl, StepMonitor};
pub use trajectory::Trajectory;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum DdeError {
    #[error("solution blew up at t = {t} (|x| = {norm:e})")]
    BlowUp { t: f64, norm: f64 },
    #[error("step size {step:e} fell below the minimum at t = {t} (|x| = {norm:e})")]
    StepUnderflow { t: f64, step: f64, norm: f64 },
    #[error("delay {index} evaluates to {value} at t = {t}, outside [{lower}, {upper}]")]
    DelayViolation {
        index: usize,
        t: f64,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("t = {t} is outside the trajectory domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },
    #[error("invalid integration window: t0 = {t0}, t_end = {t_end}")]
    InvalidWindow { t0: f64, t_end: f64 },
    #[error("maximum number of steps ({0}) exceeded")]
    MaxSteps(usize),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
}

pub type Result<T> = std::result::Result<T, DdeError>;

// ============================================================================
// Tolerances
// ============================================================================

/// Error control and safety limits for one integration run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Bound on `|x'(t) - g(t, ...)|_inf / (1 + |g|_inf)` at the midpoint of
    /// every accepted step.
    pub residual: f64,
    /// State norm that counts as blow-up.
    pub overflow: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
    /// Number of points used to check delay bounds on the integration window.
    pub delay_check_samples: usize,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-9,
            residual: 1e-3,
            overflow: 1e6,
            min_step: 1e-14,
            max_step: f64::INFINITY,
            max_steps: 5_000_000,
            delay_check_samples: 1000,
        }
    }
}

impl ToleranceConfig {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }

    /// Tight tolerances for fundamental-matrix and reference runs.
    pub fn fine() -> Self {
        Self::new(1e-10, 1e-12)
    }

    /// Same limits, with `rtol` and `atol` multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            rtol: self.rtol * k,
            atol: self.atol * k,
            ..*self
        }
    }

    /// Local error allowance for a value of magnitude `m`.
    pub fn allowance(&self, m: f64) -> f64 {
        self.atol + self.rtol * m.abs()
    }
}

// ============================================================================
// Delays
// ============================================================================

#[derive(Clone)]
pub enum Delay {
    Constant(f64),
    Varying { f: ScalarFn, lower: f64, upper: f64 },
}

impl Delay {
    pub fn varying<F>(f: F, lower: f64, upper: f64) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Delay::Varying {
            f: Arc::new(f),
            lower,
            upper,
        }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Delay::Constant(h) => *h,
            Delay::Varying { f, .. } => f(t),
        }
    }

    pub fn lower(&self) -> f64 {
        match self {
            Delay::Constant(h) => *h,
            Delay::Varying { lower, .. } => *lower,
        }
    }

    pub fn upper(&self) -> f64 {
        match self {
            Delay::Constant(h) => *h,
            Delay::Varying { upper, .. } => *upper,
        }
    }
}

impl fmt::Debug for Delay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Delay::Constant(h) => write!(f, "Constant({h})"),
            Delay::Varying { lower, upper, .. } => write!(f, "Varying([{lower}, {upper}])"),
        }
    }
}

/// The delays `h_1(t), ..., h_m(t)` of a system with their declared bounds.
#[derive(Debug, Clone, Default)]
pub struct DelaySpec {
    delays: Vec<Delay>,
}

impl DelaySpec {
    pub fn none() -> Self {
        Self { delays: Vec::new() }
    }

    pub fn constant(hs: &[f64]) -> Self {
        Self {
            delays: hs.iter().map(|&h| Delay::Constant(h)).collect(),
        }
    }

    pub fn new(delays: Vec<Delay>) -> Result<Self> {
        let spec = Self { delays };
        spec.check_bounds()?;
        Ok(spec)
    }

    fn check_bounds(&self) -> Result<()> {
        for (i, d) in self.delays.iter().enumerate() {
            let (lo, hi) = (d.lower(), d.upper());
            if !(lo > 0.0 && hi.is_finite() && hi >= lo) {
                return Err(DdeError::InvalidSystem(format!(
                    "delay {i} has bounds [{lo}, {hi}]; need 0 < lower <= upper < inf"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    pub fn delays(&self) -> &[Delay] {
        &self.delays
    }

    #[inline]
    pub fn eval(&self, i: usize, t: f64) -> f64 {
        self.delays[i].eval(t)
    }

    /// `max_i sup h_i`; zero when there are no delays.
    pub fn h_upper(&self) -> f64 {
        self.delays.iter().map(Delay::upper).fold(0.0, f64::max)
    }

    /// `min_i inf h_i`; infinite when there are no delays.
    pub fn h_lower(&self) -> f64 {
        self.delays
            .iter()
            .map(Delay::lower)
            .fold(f64::INFINITY, f64::min)
    }

    /// Concatenation (used when a perturbation brings its own delays).
    pub fn concat(&self, other: &DelaySpec) -> DelaySpec {
        let mut delays = self.delays.clone();
        delays.extend(other.delays.iter().cloned());
        DelaySpec { delays }
    }

    /// Checks every delay against its declared bounds on `samples` points of `[a, b]`.
    pub fn validate_on(&self, a: f64, b: f64, samples: usize) -> Result<()> {
        self.check_bounds()?;
        let n = samples.max(2);
        for (i, d) in self.delays.iter().enumerate() {
            if let Delay::Varying { f, lower, upper } = d {
                for k in 0..n {
                    let t = a + (b - a) * k as f64 / (n - 1) as f64;
                    let v = f(t);
                    if !(v >= *lower && v <= *upper) {
                        return Err(DdeError::DelayViolation {
                            index: i,
                            t,
                            value: v,
                            lower: *lower,
                            upper: *upper,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

// ============================================================================
// History
// ============================================================================

pub type HistoryFnPtr = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;

/// Initial function on `[t0 - h_upper, t0]`.
#[derive(Clone)]
pub enum History {
    Constant(Vec<f64>),
    Function { dim: usize, f: HistoryFnPtr },
}

impl History {
    pub fn constant(x0: &[f64]) -> Self {
        History::Constant(x0.to_vec())
    }

    pub fn scalar(c: f64) -> Self {
        History::Constant(vec![c])
    }

    pub fn function<F>(dim: usize, f: F) -> Self
    where
        F: Fn(f64, &mut [f64]) + Send + Sync + 'static,
    {
        History::Function {
            dim,
            f: Arc::new(f),
        }
    }

    /// Scalar history from a closure.
    pub fn scalar_fn<F>(f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        History::function(1, move |t, out| out[0] = f(t))
    }

    pub fn dim(&self) -> usize {
        match self {
            History::Constant(v) => v.len(),
            History::Function { dim, .. } => *dim,
        }
    }

    #[inline]
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        match self {
            History::Constant(v) => out.copy_from_slice(v),
            History::Function { f, .. } => f(t, out),
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        out
    }

    /// Euclidean norm of the history value at `t`.
    pub fn norm_at(&self, t: f64) -> f64 {
        norm2(&self.eval(t))
    }

    /// `sup |phi(t)|` over `[a, b]`; exact for constant histories, sampled otherwise.
    pub fn sup_norm(&self, a: f64, b: f64, samples: usize) -> f64 {
        match self {
            History::Constant(v) => norm2(v),
            History::Function { .. } => crate::func::sample_sup(|t| self.norm_at(t), a, b, samples),
        }
    }

    /// The scalar history `t -> |phi(t)|`.
    pub fn norm_history(&self) -> History {
        match self {
            History::Constant(v) => History::scalar(norm2(v)),
            History::Function { .. } => {
                let h = self.clone();
                History::scalar_fn(move |t| h.norm_at(t))
            }
        }
    }

    /// Largest jump between consecutive samples of the history on `[a, b]`,
    /// a sampled continuity diagnostic.
    pub fn max_sample_jump(&self, a: f64, b: f64, samples: usize) -> f64 {
        let n = samples.max(2);
        let mut prev = self.eval(a);
        let mut worst: f64 = 0.0;
        for k in 1..n {
            let t = a + (b - a) * k as f64 / (n - 1) as f64;
            let cur = self.eval(t);
            let d = prev
                .iter()
                .zip(&cur)
                .map(|(p, c)| (p - c).abs())
                .fold(0.0, f64::max);
            worst = worst.max(d);
            prev = cur;
        }
        worst
    }
}

impl fmt::Debug for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            History::Constant(v) => write!(f, "Constant({v:?})"),
            History::Function { dim, .. } => write!(f, "Function(dim = {dim})"),
        }
    }
}

// ============================================================================
// Systems
// ============================================================================

/// A retarded delay system `x' = g(t, x, x(t - h_1(t)), ..., x(t - h_m(t)))`.
pub trait DelaySystem: Send + Sync {
    fn dim(&self) -> usize;

    fn t0(&self) -> f64;

    fn delays(&self) -> &DelaySpec;

    fn history(&self) -> &History;

    /// Writes `g(t, x, lagged)` into `dx`.
    ///
    /// `lagged` holds `delays().len()` consecutive blocks of `dim()` values,
    /// block `i` being `x(t - h_i(t))`.
    fn rhs(&self, t: f64, x: &[f64], lagged: &[f64], dx: &mut [f64]);
}

/// A delay system given by a closure `g(t, x, lagged, dx)`.
pub struct FnSystem<F> {
    dim: usize,
    t0: f64,
    delays: DelaySpec,
    history: History,
    g: F,
}

impl<F> FnSystem<F>
where
    F: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(t0: f64, delays: DelaySpec, history: History, g: F) -> Self {
        Self {
            dim: history.dim(),
            t0,
            delays,
            history,
            g,
        }
    }
}

impl<F> DelaySystem for FnSystem<F>
where
    F: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
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

    fn rhs(&self, t: f64, x: &[f64], lagged: &[f64], dx: &mut [f64]) {
        (self.g)(t, x, lagged, dx)
    }
}

#[inline]
pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[inline]
pub(crate) fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}
