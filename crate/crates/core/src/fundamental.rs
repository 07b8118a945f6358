//! Fundamental matrix of the linear part and the scalar coefficients derived
//! from it.
//!
//! For `x' = A(t) x` with `w(t0) = I`, the auxiliary equation uses
//!
//! ```text
//! p(t) = d/dt ln |w(t)|          c(t) = |w(t)| |w(t)^-1|
//! ```
//!
//! where `|.|` is the induced 2-norm. When the linear part is declared as
//! `lambda(t) I` or diagonal, `w` is known in closed form and no matrix
//! integration is done.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::dde::{self, DdeError, DelaySpec, DelaySystem, History, ToleranceConfig, Trajectory};
use crate::func::{MatrixFn, PiecewiseLinear, TimeFn};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum FundamentalError {
    #[error("fundamental matrix is numerically singular at t = {t} (sigma_min = {sigma_min:e})")]
    SingularFundamental { t: f64, sigma_min: f64 },
    #[error("norm sample {index} is not positive ({value})")]
    NonPositiveNorm { index: usize, value: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Integration(#[from] DdeError),
}

pub type Result<T> = std::result::Result<T, FundamentalError>;

/// Default number of grid intervals when no grid step is given.
pub const DEFAULT_GRID_INTERVALS: usize = 2000;

// ============================================================================
// Linear part
// ============================================================================

/// The part `A(t)` of the vector system that feeds the fundamental matrix.
#[derive(Debug, Clone)]
pub enum LinearPart {
    /// `lambda(t) I` in dimension `dim`.
    ScalarIdentity {
        dim: usize,
        lambda: TimeFn,
    },
    /// `diag(lambda_1(t), ..., lambda_n(t))`.
    Diagonal(Vec<TimeFn>),
    General(MatrixFn),
}

impl LinearPart {
    pub fn dim(&self) -> usize {
        match self {
            LinearPart::ScalarIdentity { dim, .. } => *dim,
            LinearPart::Diagonal(ls) => ls.len(),
            LinearPart::General(m) => m.dim(),
        }
    }

    /// `out += A(t) x`.
    #[inline]
    pub fn apply_add(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match self {
            LinearPart::ScalarIdentity { lambda, .. } => {
                let l = lambda.eval(t);
                for (o, xi) in out.iter_mut().zip(x) {
                    *o += l * xi;
                }
            }
            LinearPart::Diagonal(ls) => {
                for ((o, xi), l) in out.iter_mut().zip(x).zip(ls) {
                    *o += l.eval(t) * xi;
                }
            }
            LinearPart::General(m) => m.mul_add(t, x, 1.0, out),
        }
    }

    pub fn matrix(&self, t: f64) -> DMatrix<f64> {
        match self {
            LinearPart::ScalarIdentity { dim, lambda } => {
                DMatrix::identity(*dim, *dim) * lambda.eval(t)
            }
            LinearPart::Diagonal(ls) => DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                ls.len(),
                ls.iter().map(|l| l.eval(t)),
            )),
            LinearPart::General(m) => m.eval(t),
        }
    }
}

// ============================================================================
// Norms
// ============================================================================

/// Largest singular value of `m` (the induced 2-norm).
pub fn induced_norm2(m: &DMatrix<f64>) -> f64 {
    singular_extremes(m).0
}

/// `(sigma_max, sigma_min)` of a square matrix.
pub fn singular_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (0.0, 0.0);
    }
    if m.nrows() == 1 && m.ncols() == 1 {
        let v = m[(0, 0)].abs();
        return (v, v);
    }
    if m.nrows() == 2 && m.ncols() == 2 {
        return singular_extremes_2x2(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    (max, min)
}

/// Closed form for 2x2: `sigma_max^2 = (T + sqrt(T^2 - 4 D^2)) / 2` with `T`
/// the squared Frobenius norm and `D` the determinant; `sigma_min = |D| / sigma_max`.
#[inline]
pub fn singular_extremes_2x2(a: f64, b: f64, c: f64, d: f64) -> (f64, f64) {
    let fro2 = a * a + b * b + c * c + d * d;
    if fro2 == 0.0 {
        return (0.0, 0.0);
    }
    let det = a * d - b * c;
    // (T - 2|D|)(T + 2|D|) avoids cancellation in T^2 - 4 D^2
    let p = (a - d) * (a - d) + (b + c) * (b + c);
    let q = (a + d) * (a + d) + (b - c) * (b - c);
    let (lo, hi) = if det >= 0.0 { (p, q) } else { (q, p) };
    let disc = (lo * hi).sqrt();
    let smax = (0.5 * (fro2 + disc)).sqrt();
    (smax, det.abs() / smax)
}

// ============================================================================
// Fundamental data
// ============================================================================

/// Samples of `|w|`, `|w^-1|`, `c` and `p` on a grid, plus the coefficient
/// functions handed to the auxiliary equation.
#[derive(Debug, Clone)]
pub struct FundamentalData {
    pub grid: Vec<f64>,
    pub w_norm: Vec<f64>,
    pub w_inv_norm: Vec<f64>,
    pub c: Vec<f64>,
    pub p: Vec<f64>,
    p_fn: TimeFn,
    c_fn: TimeFn,
}

impl FundamentalData {
    pub fn t0(&self) -> f64 {
        self.grid[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.grid.last().expect("non-empty grid")
    }

    /// `p(t)`, continuous in `t`.
    pub fn p_fn(&self) -> &TimeFn {
        &self.p_fn
    }

    /// `c(t)`, continuous in `t`.
    pub fn c_fn(&self) -> &TimeFn {
        &self.c_fn
    }

    pub fn p_hat(&self) -> f64 {
        self.p_fn
            .sup_on(self.t0(), self.t_end(), crate::func::SUP_SAMPLES)
    }

    pub fn c_hat(&self) -> f64 {
        self.c_fn
            .sup_on(self.t0(), self.t_end(), crate::func::SUP_SAMPLES)
    }

    pub fn inf_p(&self) -> f64 {
        -TimeFn::analytic({
            let p = self.p_fn.clone();
            move |t| -p.eval(t)
        })
        .sup_on(self.t0(), self.t_end(), crate::func::SUP_SAMPLES)
    }

    /// `max_j |exp(int_{t0}^{t_j} p) / |w(t_j)| - 1|` with the integral by the
    /// cumulative trapezoid rule on the grid samples of `p`.
    pub fn reconstruction_error(&self) -> f64 {
        let integral = cumulative_trapezoid(&self.grid, &self.p);
        integral
            .iter()
            .zip(&self.w_norm)
            .map(|(i, w)| (i.exp() / w - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn cumulative_trapezoid(grid: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    out.push(0.0);
    for j in 1..grid.len() {
        acc += 0.5 * (grid[j] - grid[j - 1]) * (f[j] + f[j - 1]);
        out.push(acc);
    }
    out
}

fn uniform_grid(t0: f64, t_end: f64, grid_step: Option<f64>) -> Result<Vec<f64>> {
    if !(t_end > t0) {
        return Err(FundamentalError::InvalidGrid(format!(
            "empty window [{t0}, {t_end}]"
        )));
    }
    let span = t_end - t0;
    let step = grid_step.unwrap_or(span / DEFAULT_GRID_INTERVALS as f64);
    if !(step > 0.0) {
        return Err(FundamentalError::InvalidGrid(format!("grid step {step}")));
    }
    let intervals = ((span / step).ceil() as usize).max(2);
    Ok((0..=intervals)
        .map(|j| {
            if j == intervals {
                t_end
            } else {
                t0 + span * j as f64 / intervals as f64
            }
        })
        .collect())
}

/// Cumulative integral of `f` on `grid` by composite Simpson on each interval.
fn cumulative_simpson(f: &TimeFn, grid: &[f64]) -> Vec<f64> {
    const SUB: usize = 8;
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = (b - a) / (2 * SUB) as f64;
        let mut s = f.eval(a) + f.eval(b);
        for k in 1..2 * SUB {
            let coef = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += coef * f.eval(a + k as f64 * h);
        }
        acc += s * h / 3.0;
        out.push(acc);
    }
    out
}

/// `W' = A(t) W`, `W(t0) = I`, as an `n^2`-dimensional system without delays.
struct MatrixFlow<'a> {
    a: &'a LinearPart,
    n: usize,
    t0: f64,
    delays: DelaySpec,
    history: History,
}

impl<'a> MatrixFlow<'a> {
    fn new(a: &'a LinearPart, t0: f64) -> Self {
        let n = a.dim();
        let id = DMatrix::<f64>::identity(n, n);
        Self {
            a,
            n,
            t0,
            delays: DelaySpec::none(),
            history: History::constant(id.as_slice()),
        }
    }
}

impl DelaySystem for MatrixFlow<'_> {
    fn dim(&self) -> usize {
        self.n * self.n
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

    fn rhs(&self, t: f64, x: &[f64], _lagged: &[f64], dx: &mut [f64]) {
        let n = self.n;
        dx.fill(0.0);
        // column-major: column j of W is x[j*n..(j+1)*n]
        for j in 0..n {
            self.a
                .apply_add(t, &x[j * n..(j + 1) * n], &mut dx[j * n..(j + 1) * n]);
        }
    }
}

/// `w(t) = exp(log_scale) phi(t) base` on `[start, end]`, where `phi` solves
/// the matrix equation from the identity at `start`.
struct FlowPiece {
    start: f64,
    end: f64,
    phi: Trajectory,
    base: DMatrix<f64>,
    log_scale: f64,
}

/// The fundamental matrix integrated in pieces short enough that `phi` stays
/// well scaled, with the running product renormalized between pieces.
struct RenormalizedFlow {
    n: usize,
    pieces: Vec<FlowPiece>,
}

/// Upper bound on the number of pieces over a window.
const MAX_PIECES: usize = 100_000;

impl RenormalizedFlow {
    fn integrate(
        linear: &LinearPart,
        t0: f64,
        t_end: f64,
        stops: &[f64],
        tol: &ToleranceConfig,
    ) -> Result<Self> {
        let n = linear.dim();
        let min_len = (t_end - t0) / MAX_PIECES as f64;
        let mut pieces = Vec::new();
        let mut start = t0;
        let mut base = DMatrix::<f64>::identity(n, n);
        let mut log_scale = 0.0;
        while start < t_end {
            let len = (1.0 / induced_norm2(&linear.matrix(start)).max(1.0)).max(min_len);
            let end = if t_end - start < 1.5 * len {
                t_end
            } else {
                start + len
            };
            let flow = MatrixFlow::new(linear, start);
            let inner: Vec<f64> = stops
                .iter()
                .copied()
                .filter(|&s| s > start && s < end)
                .collect();
            let phi = dde::integrate_with(&flow, end, tol, &inner, &mut NoStop)?;
            let next = DMatrix::from_vec(n, n, phi.evaluate(end)?) * &base;
            let k = next.norm();
            if !(k > 0.0 && k.is_finite()) {
                return Err(FundamentalError::SingularFundamental {
                    t: end,
                    sigma_min: 0.0,
                });
            }
            pieces.push(FlowPiece {
                start,
                end,
                phi,
                base,
                log_scale,
            });
            base = next / k;
            log_scale += k.ln();
            start = end;
        }
        Ok(Self { n, pieces })
    }

    /// `(log_scale, m)` with `w(t) = exp(log_scale) m`.
    fn eval(&self, t: f64) -> Result<(f64, DMatrix<f64>)> {
        let k = self
            .pieces
            .partition_point(|p| p.end < t)
            .min(self.pieces.len() - 1);
        let p = &self.pieces[k];
        let phi = DMatrix::from_vec(self.n, self.n, p.phi.evaluate(t.clamp(p.start, p.end))?);
        Ok((p.log_scale, phi * &p.base))
    }

    /// `ln|w|`, `ln|w^-1|` and `c` at `t`.
    fn log_norms(&self, t: f64) -> Result<(f64, f64, f64)> {
        let (ls, m) = self.eval(t)?;
        let (smax, smin) = singular_extremes(&m);
        let c = smax / smin;
        if !(smin > 0.0) || !c.is_finite() {
            return Err(FundamentalError::SingularFundamental {
                t,
                sigma_min: smin * ls.exp(),
            });
        }
        Ok((ls + smax.ln(), -ls - smin.ln(), c.max(1.0)))
    }
}

/// `w(t)` at increasing `times >= t0`, integrated with the times as forced
/// mesh points.
pub fn fundamental_matrices(
    linear: &LinearPart,
    t0: f64,
    times: &[f64],
    tol: &ToleranceConfig,
) -> Result<Vec<DMatrix<f64>>> {
    let Some(&t_end) = times.last() else {
        return Ok(Vec::new());
    };
    if times.windows(2).any(|w| w[1] < w[0]) || times[0] < t0 {
        return Err(FundamentalError::InvalidGrid(
            "times must be increasing and start at or after t0".into(),
        ));
    }
    let n = linear.dim();
    if t_end == t0 {
        return Ok(vec![DMatrix::identity(n, n); times.len()]);
    }
    let flow = RenormalizedFlow::integrate(linear, t0, t_end, times, tol)?;
    times
        .iter()
        .map(|&t| {
            let (ls, m) = flow.eval(t)?;
            Ok(m * ls.exp())
        })
        .collect()
}

/// Refinement passes over the general-case grid.
const REFINE_LEVELS: usize = 10;
/// Target for a quarter of the local second difference of `ln|w|`, which is
/// what the trapezoid of `p` misses at a node.
const CURVATURE_TOL: f64 = 1e-7;
const MAX_GRID_POINTS: usize = 400_000;

/// Halves grid intervals next to nodes where `ln|w|` bends more than
/// [`CURVATURE_TOL`] allows.
/// `(ln|w|, ln|w^-1|, c)` per grid point.
type LogSamples = Vec<(f64, f64, f64)>;

fn refine_grid(flow: &RenormalizedFlow, mut grid: Vec<f64>) -> Result<(Vec<f64>, LogSamples)> {
    let mut samples: Vec<(f64, f64, f64)> = grid
        .iter()
        .map(|&t| flow.log_norms(t))
        .collect::<Result<_>>()?;
    for _ in 0..REFINE_LEVELS {
        let n = grid.len();
        let mut split = vec![false; n - 1];
        for j in 1..n - 1 {
            let (h1, h2) = (grid[j] - grid[j - 1], grid[j + 1] - grid[j]);
            let (g0, g1, g2) = (samples[j - 1].0, samples[j].0, samples[j + 1].0);
            let second = 2.0 * ((g2 - g1) / h2 - (g1 - g0) / h1) / (h1 + h2);
            if 0.25 * h1 * h2 * second.abs() > CURVATURE_TOL {
                split[j - 1] = true;
                split[j] = true;
            }
        }
        let added = split.iter().filter(|&&s| s).count();
        if added == 0 || n + added > MAX_GRID_POINTS {
            break;
        }
        let mut g = Vec::with_capacity(n + added);
        let mut smp = Vec::with_capacity(n + added);
        for j in 0..n - 1 {
            g.push(grid[j]);
            smp.push(samples[j]);
            if split[j] {
                let mid = 0.5 * (grid[j] + grid[j + 1]);
                g.push(mid);
                smp.push(flow.log_norms(mid)?);
            }
        }
        g.push(grid[n - 1]);
        smp.push(samples[n - 1]);
        grid = g;
        samples = smp;
    }
    Ok((grid, samples))
}

/// Integrates the fundamental matrix of `linear` on `[t0, t_end]` and
/// tabulates `|w|`, `|w^-1|`, `c`, `p` on a uniform grid of spacing at most
/// `grid_step` (default: 2000 intervals).
pub fn compute_fundamental(
    linear: &LinearPart,
    t0: f64,
    t_end: f64,
    grid_step: Option<f64>,
    tol: &ToleranceConfig,
) -> Result<FundamentalData> {
    let grid = uniform_grid(t0, t_end, grid_step)?;
    match linear {
        LinearPart::ScalarIdentity { lambda, .. } => {
            let integral = cumulative_simpson(lambda, &grid);
            let w_norm: Vec<f64> = integral.iter().map(|v| v.exp()).collect();
            check_finite(&grid, &w_norm)?;
            let w_inv_norm: Vec<f64> = integral.iter().map(|v| (-v).exp()).collect();
            check_finite(&grid, &w_inv_norm)?;
            let p = grid.iter().map(|&t| lambda.eval(t)).collect();
            Ok(FundamentalData {
                c: vec![1.0; grid.len()],
                grid,
                w_norm,
                w_inv_norm,
                p,
                p_fn: lambda.clone(),
                c_fn: TimeFn::Constant(1.0),
            })
        }
        LinearPart::Diagonal(lambdas) => {
            let integrals: Vec<Vec<f64>> = lambdas
                .iter()
                .map(|l| cumulative_simpson(l, &grid))
                .collect();
            let mut w_norm = Vec::with_capacity(grid.len());
            let mut w_inv_norm = Vec::with_capacity(grid.len());
            let mut c = Vec::with_capacity(grid.len());
            let mut p = Vec::with_capacity(grid.len());
            for (j, &t) in grid.iter().enumerate() {
                let (mut imax, mut vmax, mut vmin) = (0, f64::NEG_INFINITY, f64::INFINITY);
                for (i, integ) in integrals.iter().enumerate() {
                    if integ[j] > vmax {
                        vmax = integ[j];
                        imax = i;
                    }
                    vmin = vmin.min(integ[j]);
                }
                w_norm.push(vmax.exp());
                w_inv_norm.push((-vmin).exp());
                c.push((vmax - vmin).exp());
                // the active branch of the max gives the one-sided derivative
                p.push(lambdas[imax].eval(t));
            }
            check_finite(&grid, &w_norm)?;
            check_finite(&grid, &w_inv_norm)?;
            let p_fn = TimeFn::tabulated(PiecewiseLinear::new(grid.clone(), p.clone()));
            let c_fn = TimeFn::tabulated(PiecewiseLinear::new(grid.clone(), c.clone()));
            Ok(FundamentalData {
                grid,
                w_norm,
                w_inv_norm,
                c,
                p,
                p_fn,
                c_fn,
            })
        }
        LinearPart::General(_) => {
            let flow = RenormalizedFlow::integrate(linear, t0, t_end, &grid, tol)?;
            let (grid, samples) = refine_grid(&flow, grid)?;
            let w_norm: Vec<f64> = samples.iter().map(|s| s.0.exp()).collect();
            let w_inv_norm: Vec<f64> = samples.iter().map(|s| s.1.exp()).collect();
            let c: Vec<f64> = samples.iter().map(|s| s.2).collect();
            check_finite(&grid, &w_norm)?;
            check_finite(&grid, &w_inv_norm)?;
            let lw: Vec<f64> = samples.iter().map(|s| s.0).collect();
            let p = rate_of_logs(&lw, &grid);
            let p_fn = TimeFn::tabulated(PiecewiseLinear::new(grid.clone(), p.clone()));
            let c_fn = TimeFn::tabulated(PiecewiseLinear::new(grid.clone(), c.clone()));
            Ok(FundamentalData {
                grid,
                w_norm,
                w_inv_norm,
                c,
                p,
                p_fn,
                c_fn,
            })
        }
    }
}

struct NoStop;

impl dde::StepMonitor for NoStop {
    fn on_step(&mut self, _t: f64, _x: &[f64]) -> dde::StepControl {
        dde::StepControl::Continue
    }
}

fn check_finite(grid: &[f64], v: &[f64]) -> Result<()> {
    for (t, x) in grid.iter().zip(v) {
        if !x.is_finite() || *x <= 0.0 {
            return Err(FundamentalError::SingularFundamental {
                t: *t,
                sigma_min: 0.0,
            });
        }
    }
    Ok(())
}

/// `d/dt ln|w(t)|` from samples: three-point central differences inside,
/// three-point one-sided differences at the ends.
pub fn log_norm_rate(w_norm: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    if w_norm.len() != grid.len() || grid.len() < 2 {
        return Err(FundamentalError::InvalidGrid(format!(
            "{} samples on {} grid points",
            w_norm.len(),
            grid.len()
        )));
    }
    if !grid.windows(2).all(|w| w[1] > w[0]) {
        return Err(FundamentalError::InvalidGrid(
            "grid is not increasing".into(),
        ));
    }
    for (index, &value) in w_norm.iter().enumerate() {
        if !(value > 0.0) {
            return Err(FundamentalError::NonPositiveNorm { index, value });
        }
    }
    let lw: Vec<f64> = w_norm.iter().map(|w| w.ln()).collect();
    Ok(rate_of_logs(&lw, grid))
}

fn rate_of_logs(lw: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    if n == 2 {
        let d = (lw[1] - lw[0]) / (grid[1] - grid[0]);
        return vec![d, d];
    }
    let mut p = vec![0.0; n];
    for j in 1..n - 1 {
        let h1 = grid[j] - grid[j - 1];
        let h2 = grid[j + 1] - grid[j];
        p[j] = -h2 / (h1 * (h1 + h2)) * lw[j - 1]
            + (h2 - h1) / (h1 * h2) * lw[j]
            + h1 / (h2 * (h1 + h2)) * lw[j + 1];
    }
    let (h1, h2) = (grid[1] - grid[0], grid[2] - grid[1]);
    p[0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * lw[0] + (h1 + h2) / (h1 * h2) * lw[1]
        - h1 / (h2 * (h1 + h2)) * lw[2];
    let (h1, h2) = (grid[n - 2] - grid[n - 3], grid[n - 1] - grid[n - 2]);
    p[n - 1] = h2 / (h1 * (h1 + h2)) * lw[n - 3] - (h1 + h2) / (h1 * h2) * lw[n - 2]
        + (2.0 * h2 + h1) / (h2 * (h1 + h2)) * lw[n - 1];
    p
}
