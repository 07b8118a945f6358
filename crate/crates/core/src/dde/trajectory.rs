use super::{norm2, DdeError, History, Result};

/// Dense-output solution of a delay system.
///
/// Stores the accepted mesh with states and slopes; between nodes the state
/// is the cubic Hermite interpolant, before `t_start` it is the history.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    history: History,
    h_upper: f64,
    times: Vec<f64>,
    states: Vec<f64>,
    slopes: Vec<f64>,
    pub(crate) max_residual: f64,
    pub(crate) stopped_at: Option<f64>,
}

impl Trajectory {
    pub(crate) fn start(history: History, h_upper: f64, t0: f64, x0: &[f64], f0: &[f64]) -> Self {
        let dim = x0.len();
        Self {
            dim,
            history,
            h_upper,
            times: vec![t0],
            states: x0.to_vec(),
            slopes: f0.to_vec(),
            max_residual: 0.0,
            stopped_at: None,
        }
    }

    pub(crate) fn push(&mut self, t: f64, x: &[f64], f: &[f64]) {
        self.times.push(t);
        self.states.extend_from_slice(x);
        self.slopes.extend_from_slice(f);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one node")
    }

    pub fn h_upper(&self) -> f64 {
        self.h_upper
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    /// Mesh nodes (accepted step endpoints).
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_nodes(&self) -> usize {
        self.times.len()
    }

    /// State stored at node `k`.
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    /// Right-hand side stored at node `k`.
    pub fn slope(&self, k: usize) -> &[f64] {
        &self.slopes[k * self.dim..(k + 1) * self.dim]
    }

    /// Largest scaled midpoint residual seen over all accepted steps.
    pub fn max_residual(&self) -> f64 {
        self.max_residual
    }

    /// Time at which a step monitor stopped the run early, if it did.
    pub fn stopped_at(&self) -> Option<f64> {
        self.stopped_at
    }

    pub fn evaluate(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.evaluate_into(t, &mut out)?;
        Ok(out)
    }

    /// Euclidean norm of the state at `t`.
    pub fn norm_at(&self, t: f64) -> Result<f64> {
        Ok(norm2(&self.evaluate(t)?))
    }

    pub fn evaluate_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let t0 = self.t_start();
        let t1 = self.t_end();
        let lo = t0 - self.h_upper;
        let slack = 1e-12 * t0.abs().max(1.0);
        if !(t >= lo - slack && t <= t1 + 1e-12 * t1.abs().max(1.0)) {
            return Err(DdeError::OutOfDomain { t, lo, hi: t1 });
        }
        if t <= t0 {
            if t == t0 {
                out.copy_from_slice(self.state(0));
            } else {
                self.history.eval_into(t, out);
            }
            return Ok(());
        }
        self.interpolate(t.min(t1), out);
        Ok(())
    }

    /// Hermite interpolation for `t` in `(t_start, t_end]`.
    #[inline]
    pub(crate) fn interpolate(&self, t: f64, out: &mut [f64]) {
        let n = self.times.len();
        // first node strictly greater than t, clamped to a valid segment
        let j = self.times.partition_point(|&s| s < t).clamp(1, n - 1);
        let (ta, tb) = (self.times[j - 1], self.times[j]);
        if t == tb {
            out.copy_from_slice(self.state(j));
            return;
        }
        let h = tb - ta;
        let s = (t - ta) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = (s3 - 2.0 * s2 + s) * h;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = (s3 - s2) * h;
        let (ya, yb) = (self.state(j - 1), self.state(j));
        let (fa, fb) = (self.slope(j - 1), self.slope(j));
        for i in 0..self.dim {
            out[i] = h00 * ya[i] + h10 * fa[i] + h01 * yb[i] + h11 * fb[i];
        }
    }

    /// Samples `|x(t)|` on the given times.
    pub fn norms_on(&self, grid: &[f64]) -> Result<Vec<f64>> {
        let mut buf = vec![0.0; self.dim];
        grid.iter()
            .map(|&t| {
                self.evaluate_into(t, &mut buf)?;
                Ok(norm2(&buf))
            })
            .collect()
    }

    /// Largest node norm on the mesh.
    pub fn max_node_norm(&self) -> f64 {
        (0..self.n_nodes())
            .map(|k| norm2(self.state(k)))
            .fold(0.0, f64::max)
    }
}

/// Value and derivative of the cubic Hermite interpolant on one segment.
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn hermite_with_derivative(
    h: f64,
    s: f64,
    ya: &[f64],
    fa: &[f64],
    yb: &[f64],
    fb: &[f64],
    val: &mut [f64],
    der: &mut [f64],
) {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let d00 = (6.0 * s2 - 6.0 * s) / h;
    let d10 = 3.0 * s2 - 4.0 * s + 1.0;
    let d01 = (-6.0 * s2 + 6.0 * s) / h;
    let d11 = 3.0 * s2 - 2.0 * s;
    for i in 0..ya.len() {
        val[i] = h00 * ya[i] + h10 * h * fa[i] + h01 * yb[i] + h11 * h * fb[i];
        der[i] = d00 * ya[i] + d10 * fa[i] + d01 * yb[i] + d11 * fb[i];
    }
}
