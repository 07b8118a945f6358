//! The vector delay system `x' = A(t) x + f(t, x, x(t - h_1), ..) + F0 e(t)`.

use std::fmt;
use std::sync::Arc;

use crate::dde::{norm2, DdeError, DelaySpec, DelaySystem, History, Result};
use crate::func::{sample_sup, TimeFn, SUP_SAMPLES};
use crate::fundamental::LinearPart;
use crate::nonlinearity::Nonlinearity;

/// `t -> e(t)` written into the output slice.
pub type ShapeFn = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;

/// Points at which `f(t, 0, .., 0) = 0` is checked.
const HOMOGENEITY_SAMPLES: usize = 64;

#[derive(Clone)]
pub struct VectorDelaySystem {
    t0: f64,
    linear: LinearPart,
    f: Nonlinearity,
    forcing_amplitude: f64,
    forcing_shape: Option<ShapeFn>,
    delays: DelaySpec,
    history: History,
}

impl fmt::Debug for VectorDelaySystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorDelaySystem")
            .field("t0", &self.t0)
            .field("linear", &self.linear)
            .field("f", &self.f)
            .field("forcing_amplitude", &self.forcing_amplitude)
            .field("delays", &self.delays)
            .field("history", &self.history)
            .finish()
    }
}

impl VectorDelaySystem {
    /// Unforced system. `f` must take `1 + delays.len()` arguments.
    pub fn new(
        t0: f64,
        linear: LinearPart,
        f: Nonlinearity,
        delays: DelaySpec,
        history: History,
    ) -> Result<Self> {
        let n = linear.dim();
        if n == 0 {
            return Err(DdeError::InvalidSystem("dimension must be positive".into()));
        }
        if f.dim() != n || history.dim() != n {
            return Err(DdeError::InvalidSystem(format!(
                "dimension mismatch: A is {n}x{n}, f has {} components, history has {}",
                f.dim(),
                history.dim()
            )));
        }
        if f.n_args() != 1 + delays.len() {
            return Err(DdeError::InvalidSystem(format!(
                "f takes {} arguments but there are {} delays",
                f.n_args(),
                delays.len()
            )));
        }
        f.validate()
            .map_err(|e| DdeError::InvalidSystem(e.to_string()))?;
        let span = 10.0 * delays.h_upper().max(1.0);
        let zeros = vec![0.0; n * f.n_args()];
        for k in 0..HOMOGENEITY_SAMPLES {
            let t = t0 + span * k as f64 / (HOMOGENEITY_SAMPLES - 1) as f64;
            let v = f.evaluate(t, &zeros);
            if norm2(&v) != 0.0 {
                return Err(DdeError::InvalidSystem(format!("f(t, 0) != 0 at t = {t}")));
            }
        }
        Ok(Self {
            t0,
            linear,
            f,
            forcing_amplitude: 0.0,
            forcing_shape: None,
            delays,
            history,
        })
    }

    /// Adds `F0 e(t)`. The shape is rescaled so that its sampled supremum of
    /// `|e(t)|` over `window` equals one.
    pub fn with_forcing<E>(mut self, amplitude: f64, shape: E, window: (f64, f64)) -> Result<Self>
    where
        E: Fn(f64, &mut [f64]) + Send + Sync + 'static,
    {
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(DdeError::InvalidSystem(format!(
                "forcing amplitude {amplitude}"
            )));
        }
        let n = self.dim();
        let sup = {
            sample_sup(
                |t| {
                    let mut buf = vec![0.0; n];
                    shape(t, &mut buf);
                    norm2(&buf)
                },
                window.0,
                window.1,
                SUP_SAMPLES,
            )
        };
        if !(sup.is_finite()) {
            return Err(DdeError::InvalidSystem(
                "forcing shape is not finite".into(),
            ));
        }
        if sup == 0.0 || amplitude == 0.0 {
            self.forcing_amplitude = 0.0;
            self.forcing_shape = None;
            return Ok(self);
        }
        let scale = 1.0 / sup;
        self.forcing_amplitude = amplitude;
        self.forcing_shape = Some(Arc::new(move |t, out: &mut [f64]| {
            shape(t, out);
            for v in out.iter_mut() {
                *v *= scale;
            }
        }));
        Ok(self)
    }

    /// Adds `F0 e(t)` for a shape the caller knows to satisfy `sup |e| = 1`.
    pub fn with_unit_forcing<E>(mut self, amplitude: f64, shape: E) -> Result<Self>
    where
        E: Fn(f64, &mut [f64]) + Send + Sync + 'static,
    {
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(DdeError::InvalidSystem(format!(
                "forcing amplitude {amplitude}"
            )));
        }
        if amplitude == 0.0 {
            self.forcing_amplitude = 0.0;
            self.forcing_shape = None;
        } else {
            self.forcing_amplitude = amplitude;
            self.forcing_shape = Some(Arc::new(shape));
        }
        Ok(self)
    }

    /// Same system with a different history of the same dimension.
    pub fn with_history(&self, history: History) -> Result<Self> {
        if history.dim() != self.dim() {
            return Err(DdeError::InvalidSystem(format!(
                "history has dimension {}, system has {}",
                history.dim(),
                self.dim()
            )));
        }
        let mut s = self.clone();
        s.history = history;
        Ok(s)
    }

    pub fn linear(&self) -> &LinearPart {
        &self.linear
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.f
    }

    pub fn forcing_amplitude(&self) -> f64 {
        self.forcing_amplitude
    }

    /// `e(t)` after normalization (zero when unforced).
    pub fn forcing_shape(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        if let Some(e) = &self.forcing_shape {
            e(t, &mut out);
        }
        out
    }

    /// `|e(t)|` as a scalar function.
    pub fn forcing_shape_norm(&self) -> TimeFn {
        match &self.forcing_shape {
            None => TimeFn::Constant(0.0),
            Some(e) => {
                let e = e.clone();
                let n = self.dim();
                TimeFn::analytic(move |t| {
                    let mut buf = vec![0.0; n];
                    e(t, &mut buf);
                    norm2(&buf)
                })
            }
        }
    }
}

impl DelaySystem for VectorDelaySystem {
    fn dim(&self) -> usize {
        self.linear.dim()
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
        dx.fill(0.0);
        self.linear.apply_add(t, x, dx);
        self.f.accumulate(t, x, lagged, dx);
        if let Some(e) = &self.forcing_shape {
            let n = dx.len();
            let mut buf = [0.0; 8];
            if n <= buf.len() {
                e(t, &mut buf[..n]);
                for (d, v) in dx.iter_mut().zip(&buf[..n]) {
                    *d += self.forcing_amplitude * v;
                }
            } else {
                let mut v = vec![0.0; n];
                e(t, &mut v);
                for (d, v) in dx.iter_mut().zip(&v) {
                    *d += self.forcing_amplitude * v;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::{Factor, MonomialTerm};

    #[test]
    fn forcing_is_normalized() {
        let sys = VectorDelaySystem::new(
            0.0,
            LinearPart::ScalarIdentity {
                dim: 2,
                lambda: TimeFn::Constant(-1.0),
            },
            Nonlinearity::zero(2, 1),
            DelaySpec::none(),
            History::constant(&[0.0, 0.0]),
        )
        .unwrap()
        .with_forcing(
            0.5,
            |t, out: &mut [f64]| out[1] = 3.0 * (t).sin(),
            (0.0, 10.0),
        )
        .unwrap();
        let sup = sample_sup(|t| norm2(&sys.forcing_shape(t)), 0.0, 10.0, 1000);
        assert!((sup - 1.0).abs() < 1e-6);
        assert_eq!(sys.forcing_amplitude(), 0.5);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let err = VectorDelaySystem::new(
            0.0,
            LinearPart::ScalarIdentity {
                dim: 2,
                lambda: TimeFn::Constant(-1.0),
            },
            Nonlinearity::zero(2, 2),
            DelaySpec::none(),
            History::constant(&[0.0, 0.0]),
        )
        .unwrap_err();
        assert!(matches!(err, DdeError::InvalidSystem(_)));
    }

    #[test]
    fn inhomogeneous_opaque_term_is_rejected() {
        let f = Nonlinearity::zero(1, 1).with_opaque(|_, _, _, out| out[0] += 1.0);
        let err = VectorDelaySystem::new(
            0.0,
            LinearPart::Diagonal(vec![TimeFn::Constant(-1.0)]),
            f,
            DelaySpec::none(),
            History::scalar(1.0),
        )
        .unwrap_err();
        assert!(matches!(err, DdeError::InvalidSystem(_)));
    }

    #[test]
    fn rhs_sums_all_parts() {
        let f = Nonlinearity::zero(1, 2).with_monomial(MonomialTerm::new(
            2.0,
            0,
            vec![Factor::new(1, 0, 2)],
        ));
        let sys = VectorDelaySystem::new(
            0.0,
            LinearPart::Diagonal(vec![TimeFn::Constant(-1.0)]),
            f,
            DelaySpec::constant(&[1.0]),
            History::scalar(1.0),
        )
        .unwrap()
        .with_forcing(1.0, |_, out: &mut [f64]| out[0] = 1.0, (0.0, 1.0))
        .unwrap();
        let mut dx = [0.0];
        sys.rhs(0.0, &[3.0], &[2.0], &mut dx);
        assert_eq!(dx[0], -3.0 + 8.0 + 1.0);
    }
}
