//! Polynomial nonlinearities and their scalar dominating functions.
//!
//! Arguments are indexed `0..=m`: index 0 is the current state `x(t)`, index
//! `k >= 1` is the delayed state `x(t - h_k(t))`. A dominating function `L`
//! takes one nonnegative scalar per argument (the norms) and satisfies
//! `|f(t, x_0, .., x_m)| <= L(t, |x_0|, .., |x_m|)`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::func::{MatrixFn, TimeFn};
use crate::fundamental::induced_norm2;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum NonlinearityError {
    #[error("unsupported nonlinearity form: {0}")]
    UnsupportedForm(String),
    #[error("term {index} has total degree zero")]
    DegreeZeroTerm { index: usize },
    #[error("linearization level must be positive and finite, got {0}")]
    InvalidLevel(f64),
}

pub type Result<T> = std::result::Result<T, NonlinearityError>;

/// One factor `x_arg[component]^exponent` of a monomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Factor {
    pub arg: usize,
    pub component: usize,
    pub exponent: u32,
}

impl Factor {
    pub fn new(arg: usize, component: usize, exponent: u32) -> Self {
        Self {
            arg,
            component,
            exponent,
        }
    }
}

/// `coefficient(t) * prod factors`, added to output component `target`.
#[derive(Debug, Clone)]
pub struct MonomialTerm {
    pub coefficient: TimeFn,
    pub target: usize,
    pub factors: Vec<Factor>,
}

impl MonomialTerm {
    pub fn new(coefficient: impl Into<TimeFn>, target: usize, factors: Vec<Factor>) -> Self {
        Self {
            coefficient: coefficient.into(),
            target,
            factors,
        }
    }

    pub fn degree(&self) -> u32 {
        self.factors.iter().map(|f| f.exponent).sum()
    }
}

/// `scale * M(t) x_arg`.
#[derive(Debug, Clone)]
pub struct LinearTerm {
    pub matrix: MatrixFn,
    pub arg: usize,
    pub scale: f64,
}

/// Closure-backed term with no monomial structure. Usable for simulation but
/// rejected by [`dominating_l`].
pub type OpaqueFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// `f(t, x_0, .., x_m)`: linear matrix terms plus monomials.
#[derive(Clone)]
pub struct Nonlinearity {
    dim: usize,
    n_args: usize,
    linear: Vec<LinearTerm>,
    monomials: Vec<MonomialTerm>,
    opaque: Option<OpaqueFn>,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("dim", &self.dim)
            .field("n_args", &self.n_args)
            .field("linear", &self.linear)
            .field("monomials", &self.monomials)
            .field("opaque", &self.opaque.is_some())
            .finish()
    }
}

impl Nonlinearity {
    /// The zero map on `n_args` arguments of dimension `dim`.
    pub fn zero(dim: usize, n_args: usize) -> Self {
        Self {
            dim,
            n_args,
            linear: Vec::new(),
            monomials: Vec::new(),
            opaque: None,
        }
    }

    pub fn with_monomial(mut self, term: MonomialTerm) -> Self {
        self.monomials.push(term);
        self
    }

    pub fn with_linear(mut self, matrix: MatrixFn, arg: usize, scale: f64) -> Self {
        self.linear.push(LinearTerm { matrix, arg, scale });
        self
    }

    /// Adds a closure term `g(t, x, lagged, out)` that accumulates into `out`.
    pub fn with_opaque<F>(mut self, g: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.opaque = Some(Arc::new(g));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_args(&self) -> usize {
        self.n_args
    }

    pub fn linear_terms(&self) -> &[LinearTerm] {
        &self.linear
    }

    pub fn monomials(&self) -> &[MonomialTerm] {
        &self.monomials
    }

    pub fn is_zero(&self) -> bool {
        self.linear.is_empty() && self.monomials.is_empty() && self.opaque.is_none()
    }

    /// Checks indices against the declared shape.
    pub fn validate(&self) -> Result<()> {
        for (j, m) in self.monomials.iter().enumerate() {
            if m.target >= self.dim {
                return Err(NonlinearityError::UnsupportedForm(format!(
                    "monomial {j} targets component {} of a {}-dimensional system",
                    m.target, self.dim
                )));
            }
            if m.degree() == 0 {
                return Err(NonlinearityError::UnsupportedForm(format!(
                    "monomial {j} has degree zero, so f(t, 0) != 0"
                )));
            }
            for fac in &m.factors {
                if fac.arg >= self.n_args || fac.component >= self.dim {
                    return Err(NonlinearityError::UnsupportedForm(format!(
                        "monomial {j} references argument {} component {}",
                        fac.arg, fac.component
                    )));
                }
            }
        }
        for (j, l) in self.linear.iter().enumerate() {
            if l.arg >= self.n_args || l.matrix.dim() != self.dim {
                return Err(NonlinearityError::UnsupportedForm(format!(
                    "linear term {j} does not fit argument {} of dimension {}",
                    l.arg, self.dim
                )));
            }
        }
        Ok(())
    }

    /// `out += f(t, x, lagged)`, with `lagged` holding `m` blocks of `dim`.
    #[inline]
    pub fn accumulate(&self, t: f64, x: &[f64], lagged: &[f64], out: &mut [f64]) {
        let n = self.dim;
        let arg = |k: usize| {
            if k == 0 {
                x
            } else {
                &lagged[(k - 1) * n..k * n]
            }
        };
        for l in &self.linear {
            l.matrix.mul_add(t, arg(l.arg), l.scale, out);
        }
        for m in &self.monomials {
            let mut v = m.coefficient.eval(t);
            for f in &m.factors {
                v *= powi(arg(f.arg)[f.component], f.exponent);
            }
            out[m.target] += v;
        }
        if let Some(g) = &self.opaque {
            g(t, x, lagged, out);
        }
    }

    /// `f(t, args)` with `args` holding all `n_args` blocks contiguously.
    pub fn evaluate(&self, t: f64, args: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.accumulate(t, &args[..self.dim], &args[self.dim..], &mut out);
        out
    }
}

#[inline]
fn powi(x: f64, e: u32) -> f64 {
    x.powi(e as i32)
}

// ============================================================================
// Dominating function
// ============================================================================

/// `coefficient(t) * prod_k chi_k^exponents[k]` with a nonnegative coefficient.
#[derive(Debug, Clone)]
pub struct DominatingTerm {
    pub coefficient: TimeFn,
    pub exponents: Vec<u32>,
}

impl DominatingTerm {
    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }
}

/// `L(t, chi) = sum_j |a_j(t)| prod_k chi_k^{e_jk}`.
#[derive(Debug, Clone)]
pub struct DominatingL {
    n_args: usize,
    terms: Vec<DominatingTerm>,
}

impl DominatingL {
    pub fn zero(n_args: usize) -> Self {
        Self {
            n_args,
            terms: Vec::new(),
        }
    }

    /// Adds `coefficient(t) * prod chi_k^exponents[k]`; the coefficient is
    /// taken in absolute value. Missing trailing exponents are zero.
    pub fn with_term(mut self, coefficient: impl Into<TimeFn>, exponents: &[u32]) -> Self {
        assert!(
            exponents.len() <= self.n_args,
            "more exponents than arguments"
        );
        let mut e = exponents.to_vec();
        e.resize(self.n_args, 0);
        self.terms.push(DominatingTerm {
            coefficient: coefficient.into().abs(),
            exponents: e,
        });
        self
    }

    pub fn n_args(&self) -> usize {
        self.n_args
    }

    pub fn terms(&self) -> &[DominatingTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// True when every term has total degree exactly one.
    pub fn is_linear(&self) -> bool {
        self.terms.iter().all(|t| t.degree() == 1)
    }

    /// Highest argument index carrying a positive exponent.
    pub fn max_arg(&self) -> Option<usize> {
        self.terms
            .iter()
            .filter_map(|t| t.exponents.iter().rposition(|&e| e > 0))
            .max()
    }

    #[inline]
    pub fn evaluate(&self, t: f64, chi: &[f64]) -> f64 {
        let mut s = 0.0;
        for term in &self.terms {
            let mut v = term.coefficient.eval(t);
            for (c, &e) in chi.iter().zip(&term.exponents) {
                if e > 0 {
                    v *= powi(*c, e);
                }
            }
            s += v;
        }
        s
    }

    /// `L(t, first, rest[0], ..)` without assembling the argument vector.
    #[inline]
    pub fn evaluate_parts(&self, t: f64, first: f64, rest: &[f64]) -> f64 {
        let mut s = 0.0;
        for term in &self.terms {
            let mut v = term.coefficient.eval(t);
            let e0 = term.exponents[0];
            if e0 > 0 {
                v *= powi(first, e0);
            }
            for (c, &e) in rest.iter().zip(&term.exponents[1..]) {
                if e > 0 {
                    v *= powi(*c, e);
                }
            }
            s += v;
        }
        s
    }

    /// `L(t, y, .., y)`.
    pub fn on_diagonal(&self, t: f64, y: f64) -> f64 {
        self.terms
            .iter()
            .map(|term| term.coefficient.eval(t) * powi(y, term.degree()))
            .sum()
    }

    /// Replaces each coefficient by its supremum over `[a, b]`.
    pub fn with_sup_coefficients(&self, a: f64, b: f64, samples: usize) -> DominatingL {
        DominatingL {
            n_args: self.n_args,
            terms: self
                .terms
                .iter()
                .map(|t| DominatingTerm {
                    coefficient: TimeFn::Constant(t.coefficient.sup_on(a, b, samples)),
                    exponents: t.exponents.clone(),
                })
                .collect(),
        }
    }

    /// Replaces term coefficients by the given values (same order as `terms`).
    pub fn with_coefficients(&self, coefficients: Vec<TimeFn>) -> DominatingL {
        assert_eq!(coefficients.len(), self.terms.len());
        DominatingL {
            n_args: self.n_args,
            terms: self
                .terms
                .iter()
                .zip(coefficients)
                .map(|(t, c)| DominatingTerm {
                    coefficient: c.abs(),
                    exponents: t.exponents.clone(),
                })
                .collect(),
        }
    }

    /// Appends the terms of `other`, which must have the same argument count.
    pub fn plus(&self, other: &DominatingL) -> DominatingL {
        assert_eq!(self.n_args, other.n_args);
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        DominatingL {
            n_args: self.n_args,
            terms,
        }
    }

    /// Same terms viewed on `n_args >= self.n_args` arguments.
    pub fn widened(&self, n_args: usize) -> DominatingL {
        assert!(n_args >= self.n_args);
        DominatingL {
            n_args,
            terms: self
                .terms
                .iter()
                .map(|t| {
                    let mut e = t.exponents.clone();
                    e.resize(n_args, 0);
                    DominatingTerm {
                        coefficient: t.coefficient.clone(),
                        exponents: e,
                    }
                })
                .collect(),
        }
    }

    /// Moves argument `k >= 1` to index `offset + k`, leaving index 0 alone.
    /// Used to give a second delay set its own argument slots.
    pub fn shifted_delays(&self, offset: usize, n_args: usize) -> DominatingL {
        DominatingL {
            n_args,
            terms: self
                .terms
                .iter()
                .map(|t| {
                    let mut e = vec![0; n_args];
                    for (k, &x) in t.exponents.iter().enumerate() {
                        let idx = if k == 0 { 0 } else { k + offset };
                        e[idx] += x;
                    }
                    DominatingTerm {
                        coefficient: t.coefficient.clone(),
                        exponents: e,
                    }
                })
                .collect(),
        }
    }
}

/// Builds `L` from `f`: `|f|_2 <= |f|_1` and `|x_i(s)| <= |x(s)|` turn every
/// monomial into `|a_j(t)| prod_k chi_k^{e_k}`, with `e_k` the summed exponents
/// on argument `k`. A linear term `B(t) x_k` contributes `|B(t)| chi_k`.
pub fn dominating_l(f: &Nonlinearity) -> Result<DominatingL> {
    if f.opaque.is_some() {
        return Err(NonlinearityError::UnsupportedForm(
            "closure terms have no monomial structure".into(),
        ));
    }
    f.validate()?;
    let mut l = DominatingL::zero(f.n_args);
    for lt in &f.linear {
        let mut e = vec![0; f.n_args];
        e[lt.arg] = 1;
        let k = lt.scale.abs();
        let coefficient = match &lt.matrix {
            MatrixFn::Constant(m) => TimeFn::Constant(k * induced_norm2(m)),
            MatrixFn::Varying { f: mf, .. } => {
                let mf = mf.clone();
                TimeFn::analytic(move |t| k * induced_norm2(&mf(t)))
            }
        };
        l.terms.push(DominatingTerm {
            coefficient,
            exponents: e,
        });
    }
    for m in &f.monomials {
        let mut e = vec![0; f.n_args];
        for fac in &m.factors {
            e[fac.arg] += fac.exponent;
        }
        l.terms.push(DominatingTerm {
            coefficient: m.coefficient.abs(),
            exponents: e,
        });
    }
    Ok(l)
}

// ============================================================================
// Linearization
// ============================================================================

/// Coefficients `mu_i(t)` with `L(t, chi) <= sum_i mu_i(t) chi_i` whenever
/// every `chi_k` lies in `[0, level]`.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub level: f64,
    pub mu: Vec<TimeFn>,
}

impl Linearization {
    pub fn evaluate(&self, t: f64, chi: &[f64]) -> f64 {
        self.mu.iter().zip(chi).map(|(m, c)| m.eval(t) * c).sum()
    }

    /// The bound as a linear dominating function.
    pub fn as_dominating(&self) -> DominatingL {
        let n = self.mu.len();
        let mut l = DominatingL::zero(n);
        for (i, m) in self.mu.iter().enumerate() {
            if matches!(m, TimeFn::Constant(v) if *v == 0.0) {
                continue;
            }
            let mut e = vec![0; n];
            e[i] = 1;
            l.terms.push(DominatingTerm {
                coefficient: m.clone(),
                exponents: e,
            });
        }
        l
    }
}

/// Assigns each term to its lowest argument with a positive exponent and
/// bounds it there by `|a_j| level^(deg - 1) chi_i`.
pub fn linearize_l(l: &DominatingL, level: f64) -> Result<Linearization> {
    if !(level > 0.0 && level.is_finite()) {
        return Err(NonlinearityError::InvalidLevel(level));
    }
    let mut parts: Vec<Vec<(f64, TimeFn)>> = vec![Vec::new(); l.n_args];
    for (index, term) in l.terms.iter().enumerate() {
        let Some(i) = term.exponents.iter().position(|&e| e > 0) else {
            return Err(NonlinearityError::DegreeZeroTerm { index });
        };
        let w = powi(level, term.degree() - 1);
        parts[i].push((w, term.coefficient.clone()));
    }
    let mu = parts
        .into_iter()
        .map(|p| {
            if p.is_empty() {
                TimeFn::Constant(0.0)
            } else {
                TimeFn::linear_combination(p)
            }
        })
        .collect();
    Ok(Linearization { level, mu })
}
