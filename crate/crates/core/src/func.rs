//! Time-dependent coefficient functions shared by every module.
//!
//! Coefficients of the vector and scalar systems are either constants,
//! closures, or tables sampled on a grid (e.g. the running condition number
//! of a numerically integrated fundamental matrix).

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

/// Scalar function of time.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Matrix function of time.
pub type MatrixFnPtr = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// Default number of samples used when a supremum has to be estimated.
pub const SUP_SAMPLES: usize = 10_000;

/// Piecewise-linear interpolant on a strictly increasing grid.
///
/// Outside the grid the end values are held constant.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinear {
    /// Panics if the grid is empty, not strictly increasing, or the lengths differ.
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Self {
        assert!(!grid.is_empty(), "empty interpolation grid");
        assert_eq!(grid.len(), values.len(), "grid/value length mismatch");
        assert!(
            grid.windows(2).all(|w| w[1] > w[0]),
            "interpolation grid must be strictly increasing"
        );
        Self { grid, values }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.grid.len();
        if t <= self.grid[0] {
            return self.values[0];
        }
        if t >= self.grid[n - 1] {
            return self.values[n - 1];
        }
        let j = self.grid.partition_point(|&g| g <= t);
        let (t0, t1) = (self.grid[j - 1], self.grid[j]);
        let (v0, v1) = (self.values[j - 1], self.values[j]);
        let s = (t - t0) / (t1 - t0);
        v0 + s * (v1 - v0)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A scalar coefficient `t -> value`.
#[derive(Clone)]
pub enum TimeFn {
    Constant(f64),
    Analytic(ScalarFn),
    Tabulated(Arc<PiecewiseLinear>),
}

impl TimeFn {
    pub fn analytic<F>(f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        TimeFn::Analytic(Arc::new(f))
    }

    pub fn tabulated(table: PiecewiseLinear) -> Self {
        TimeFn::Tabulated(Arc::new(table))
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFn::Constant(v) => *v,
            TimeFn::Analytic(f) => f(t),
            TimeFn::Tabulated(p) => p.eval(t),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, TimeFn::Constant(_))
    }

    /// Supremum over `[a, b]`.
    ///
    /// Exact for constants and tables (the interpolant attains its maximum at
    /// a node); estimated by `samples` uniform points for closures.
    pub fn sup_on(&self, a: f64, b: f64, samples: usize) -> f64 {
        match self {
            TimeFn::Constant(v) => *v,
            TimeFn::Tabulated(p) => {
                let mut m = p.eval(a).max(p.eval(b));
                for (&g, &v) in p.grid().iter().zip(p.values()) {
                    if g >= a && g <= b {
                        m = m.max(v);
                    }
                }
                m
            }
            TimeFn::Analytic(f) => sample_sup(|t| f(t), a, b, samples),
        }
    }

    /// Pointwise absolute value.
    pub fn abs(&self) -> TimeFn {
        match self {
            TimeFn::Constant(v) => TimeFn::Constant(v.abs()),
            TimeFn::Analytic(f) => {
                let f = f.clone();
                TimeFn::analytic(move |t| f(t).abs())
            }
            TimeFn::Tabulated(p) => {
                let f = p.clone();
                TimeFn::analytic(move |t| f.eval(t).abs())
            }
        }
    }

    /// Pointwise product with a constant.
    pub fn scaled(&self, k: f64) -> TimeFn {
        if k == 1.0 {
            return self.clone();
        }
        match self {
            TimeFn::Constant(v) => TimeFn::Constant(v * k),
            _ => {
                let f = self.clone();
                TimeFn::analytic(move |t| k * f.eval(t))
            }
        }
    }
    /// `sum_k w_k f_k(t)`; collapses to a constant when every part is constant.
    pub fn linear_combination(parts: Vec<(f64, TimeFn)>) -> TimeFn {
        if parts.iter().all(|(_, f)| f.is_constant()) {
            return TimeFn::Constant(parts.iter().map(|(w, f)| w * f.eval(0.0)).sum());
        }
        if parts.len() == 1 {
            let (w, f) = parts.into_iter().next().expect("one part");
            return f.scaled(w);
        }
        TimeFn::analytic(move |t| parts.iter().map(|(w, f)| w * f.eval(t)).sum())
    }
}

impl fmt::Debug for TimeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeFn::Constant(v) => write!(f, "Constant({v})"),
            TimeFn::Analytic(_) => write!(f, "Analytic(..)"),
            TimeFn::Tabulated(p) => write!(f, "Tabulated({} nodes)", p.grid().len()),
        }
    }
}

impl From<f64> for TimeFn {
    fn from(v: f64) -> Self {
        TimeFn::Constant(v)
    }
}

/// Supremum of `f` over `samples` uniform points on `[a, b]` (endpoints included).
pub fn sample_sup<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, samples: usize) -> f64 {
    let n = samples.max(2);
    let mut m = f64::NEG_INFINITY;
    for k in 0..n {
        let t = a + (b - a) * k as f64 / (n - 1) as f64;
        m = m.max(f(t));
    }
    m
}

/// A square matrix coefficient `t -> M(t)`.
#[derive(Clone)]
pub enum MatrixFn {
    Constant(DMatrix<f64>),
    Varying { dim: usize, f: MatrixFnPtr },
}

impl MatrixFn {
    pub fn varying<F>(dim: usize, f: F) -> Self
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        MatrixFn::Varying {
            dim,
            f: Arc::new(f),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            MatrixFn::Constant(m) => m.nrows(),
            MatrixFn::Varying { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        match self {
            MatrixFn::Constant(m) => m.clone(),
            MatrixFn::Varying { f, .. } => f(t),
        }
    }

    /// `out += scale * M(t) * x`.
    #[inline]
    pub fn mul_add(&self, t: f64, x: &[f64], scale: f64, out: &mut [f64]) {
        let apply = |m: &DMatrix<f64>, out: &mut [f64]| {
            let n = m.nrows();
            for (i, o) in out.iter_mut().enumerate().take(n) {
                let mut s = 0.0;
                for (j, xj) in x.iter().enumerate().take(n) {
                    s += m[(i, j)] * xj;
                }
                *o += scale * s;
            }
        };
        match self {
            MatrixFn::Constant(m) => apply(m, out),
            MatrixFn::Varying { f, .. } => apply(&f(t), out),
        }
    }
}

impl fmt::Debug for MatrixFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixFn::Constant(m) => write!(f, "Constant({}x{})", m.nrows(), m.ncols()),
            MatrixFn::Varying { dim, .. } => write!(f, "Varying({dim}x{dim})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_linear_interpolates_and_clamps() {
        let p = PiecewiseLinear::new(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 0.0]);
        assert_eq!(p.eval(-1.0), 0.0);
        assert_eq!(p.eval(0.5), 1.0);
        assert_eq!(p.eval(2.0), 1.0);
        assert_eq!(p.eval(10.0), 0.0);
        assert_eq!(p.max(), 2.0);
    }

    #[test]
    fn sup_of_sinusoid_is_close_to_amplitude() {
        let f = TimeFn::analytic(|t| 0.1 * (5.0 * t).sin());
        let s = f.sup_on(0.0, 20.0, SUP_SAMPLES);
        assert!((s - 0.1).abs() < 1e-5, "{s}");
    }

    #[test]
    fn tabulated_sup_is_exact() {
        let f = TimeFn::tabulated(PiecewiseLinear::new(
            vec![0.0, 1.0, 2.0],
            vec![1.0, 3.0, 2.0],
        ));
        assert_eq!(f.sup_on(0.0, 2.0, 3), 3.0);
        assert_eq!(f.sup_on(1.5, 2.0, 3), 2.5);
    }
}
