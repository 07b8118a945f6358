//! Scenario files: a TOML description of a vector system plus numerics.
//!
//! Two system kinds exist. `oscillator` is the two-dimensional benchmark
//!
//! ```text
//! x' = (A0(t) + A1(t)) x + rho A1(t) x(t - h) + [0, b x_1(t - h)^3] + F0 [0, sin(r3 t)]
//! A0 = lambda(t) I,  A1 = [[0, 1], [-omega(t), -alpha1]]
//! lambda = lambda0 + lambda_plus(t),  omega = omega0 + a1 sin(r1 t) + a2 sin(r2 t)
//! ```
//!
//! with `A0` handled by the fundamental matrix and `A1` folded into `L`.
//! `generic` takes a linear part, extra linear terms and monomials directly.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auxiliary::{
    build_autonomous_majorant, reduce, AuxError, ScalarDelaySystem, SupOverrides,
};
use crate::dde::{DdeError, DelaySpec, DelaySystem, History, ToleranceConfig};
use crate::func::{MatrixFn, TimeFn};
use crate::fundamental::{singular_extremes_2x2, FundamentalData, LinearPart};
use crate::nonlinearity::{DominatingL, Factor, MonomialTerm, Nonlinearity};
use crate::region::BlowUpDetector;
use crate::system::VectorDelaySystem;

#[derive(Error, Debug)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot write scenario: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("pipeline and hand-written auxiliary equations differ by {0:e}")]
    PipelineMismatch(f64),
    #[error(transparent)]
    System(#[from] DdeError),
    #[error(transparent)]
    Auxiliary(#[from] AuxError),
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

// ============================================================================
// Schema
// ============================================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// End of the simulation window for domination runs.
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    pub system: SystemSpec,
    #[serde(default)]
    pub numerics: Numerics,
}

fn default_t_end() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SystemSpec {
    Oscillator(OscillatorSpec),
    Generic(GenericSpec),
}

/// Parameters of the two-dimensional benchmark oscillator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorSpec {
    pub lambda0: f64,
    pub lambda_plus: LambdaPlus,
    pub omega0: f64,
    pub a1: f64,
    pub a2: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub alpha1: f64,
    pub rho: f64,
    pub b: f64,
    pub h: f64,
    pub f0: f64,
    pub x0: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LambdaPlus {
    /// `q sin(d t)`
    Sinusoidal { q: f64, d: f64 },
    /// `q exp(-d t)`
    Exponential { q: f64, d: f64 },
}

impl LambdaPlus {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            LambdaPlus::Sinusoidal { q, d } => q * (d * t).sin(),
            LambdaPlus::Exponential { q, d } => q * (-d * t).exp(),
        }
    }

    /// Supremum over `t >= 0` when known in closed form.
    pub fn sup(&self) -> Option<f64> {
        match *self {
            LambdaPlus::Sinusoidal { q, .. } => Some(q.abs()),
            LambdaPlus::Exponential { q, d } if d >= 0.0 => Some(q.max(0.0)),
            LambdaPlus::Exponential { .. } => None,
        }
    }
}

impl OscillatorSpec {
    /// Repository defaults with `lambda_plus = 0.1 sin(5 t)`.
    #[allow(clippy::approx_constant)]
    pub fn default_sinusoidal() -> Self {
        Self {
            lambda0: -3.0,
            lambda_plus: LambdaPlus::Sinusoidal { q: 0.1, d: 5.0 },
            omega0: 1.0,
            a1: 0.1,
            a2: 0.1,
            r1: 1.0,
            r2: 3.14,
            r3: 10.0,
            alpha1: 1.0,
            rho: 0.1,
            b: 0.1,
            h: 0.5,
            f0: 0.1,
            x0: [0.1, 0.1],
        }
    }

    /// Repository defaults with `lambda_plus = exp(-t)`.
    pub fn default_exponential() -> Self {
        Self {
            lambda_plus: LambdaPlus::Exponential { q: 1.0, d: 1.0 },
            ..Self::default_sinusoidal()
        }
    }

    pub fn lambda(&self, t: f64) -> f64 {
        self.lambda0 + self.lambda_plus.eval(t)
    }

    pub fn omega(&self, t: f64) -> f64 {
        self.omega0 + self.a1 * (self.r1 * t).sin() + self.a2 * (self.r2 * t).sin()
    }

    /// `sup lambda` over `t >= 0` in closed form, if available.
    pub fn lambda_hat(&self) -> Option<f64> {
        self.lambda_plus.sup().map(|s| self.lambda0 + s)
    }

    fn validate(&self) -> Result<()> {
        let finite = [
            self.lambda0,
            self.omega0,
            self.a1,
            self.a2,
            self.r1,
            self.r2,
            self.r3,
            self.alpha1,
            self.rho,
            self.b,
            self.h,
            self.f0,
            self.x0[0],
            self.x0[1],
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(ScenarioError::InvalidParameters(
                "non-finite parameter".into(),
            ));
        }
        if !(self.h > 0.0) {
            return Err(ScenarioError::InvalidParameters(format!(
                "delay h = {} must be positive",
                self.h
            )));
        }
        if self.rho < 0.0 || self.f0 < 0.0 {
            return Err(ScenarioError::InvalidParameters(
                "rho and f0 must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// A time-varying scalar coefficient: a number or a shaped function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientSpec {
    Constant(f64),
    Varying(VaryingSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum VaryingSpec {
    /// `offset + amplitude sin(frequency t + phase)`
    Sinusoid {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `offset + amplitude exp(-rate t)`
    Exponential {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        rate: f64,
    },
}

impl CoefficientSpec {
    pub fn to_time_fn(&self) -> TimeFn {
        match *self {
            CoefficientSpec::Constant(v) => TimeFn::Constant(v),
            CoefficientSpec::Varying(VaryingSpec::Sinusoid {
                offset,
                amplitude,
                frequency,
                phase,
            }) => TimeFn::analytic(move |t| offset + amplitude * (frequency * t + phase).sin()),
            CoefficientSpec::Varying(VaryingSpec::Exponential {
                offset,
                amplitude,
                rate,
            }) => TimeFn::analytic(move |t| offset + amplitude * (-rate * t).exp()),
        }
    }

    /// Supremum over `t >= 0` when known in closed form.
    pub fn sup(&self) -> Option<f64> {
        match *self {
            CoefficientSpec::Constant(v) => Some(v),
            CoefficientSpec::Varying(VaryingSpec::Sinusoid {
                offset, amplitude, ..
            }) => Some(offset + amplitude.abs()),
            CoefficientSpec::Varying(VaryingSpec::Exponential {
                offset,
                amplitude,
                rate,
            }) => (rate >= 0.0).then(|| offset + amplitude.max(0.0)),
        }
    }

    /// Supremum of the absolute value over `t >= 0` when known in closed form.
    pub fn abs_sup(&self) -> Option<f64> {
        match *self {
            CoefficientSpec::Constant(v) => Some(v.abs()),
            CoefficientSpec::Varying(VaryingSpec::Sinusoid {
                offset, amplitude, ..
            }) => Some(offset.abs() + amplitude.abs()),
            CoefficientSpec::Varying(VaryingSpec::Exponential {
                offset,
                amplitude,
                rate,
            }) => (rate >= 0.0).then(|| offset.abs().max((offset + amplitude).abs())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericSpec {
    pub dim: usize,
    #[serde(default)]
    pub delays: Vec<f64>,
    pub x0: Vec<f64>,
    pub linear: LinearSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub linear_terms: Vec<LinearTermSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub monomials: Vec<MonomialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<ForcingSpec>,
}

/// The part of the linear dynamics that feeds the fundamental matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LinearSpec {
    ScalarIdentity { lambda: CoefficientSpec },
    Diagonal { lambdas: Vec<CoefficientSpec> },
    Matrix { rows: Vec<Vec<f64>> },
}

/// `scale * M x_arg`, folded into `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearTermSpec {
    pub rows: Vec<Vec<f64>>,
    pub arg: usize,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonomialSpec {
    pub coefficient: CoefficientSpec,
    pub target: usize,
    pub factors: Vec<FactorSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub arg: usize,
    pub component: usize,
    pub exponent: u32,
}

/// `amplitude * e(t)` with one coefficient per component of `e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingSpec {
    pub amplitude: f64,
    pub shape: Vec<CoefficientSpec>,
}

/// Solver and search settings. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub rtol: f64,
    pub atol: f64,
    /// Horizon of region and certificate runs.
    pub horizon: f64,
    pub angle_step: f64,
    pub seed_radius: f64,
    pub search_tol: f64,
    pub radius_cap: f64,
    pub grid_points: usize,
    pub growth_ratio: f64,
    pub consecutive_steps: usize,
    pub overflow: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        let det = BlowUpDetector::default();
        Self {
            rtol: 1e-6,
            atol: 1e-9,
            horizon: 40.0,
            angle_step: PI / 100.0,
            seed_radius: 0.01,
            search_tol: 1e-3,
            radius_cap: 1e4,
            grid_points: 2000,
            growth_ratio: det.growth_ratio,
            consecutive_steps: det.consecutive_steps,
            overflow: det.overflow,
        }
    }
}

impl Numerics {
    pub fn tolerance(&self) -> ToleranceConfig {
        ToleranceConfig::new(self.rtol, self.atol)
    }

    pub fn detector(&self) -> BlowUpDetector {
        BlowUpDetector {
            overflow: self.overflow,
            growth_ratio: self.growth_ratio,
            consecutive_steps: self.consecutive_steps,
        }
    }
}

impl Scenario {
    pub fn oscillator(spec: OscillatorSpec) -> Self {
        Self {
            name: None,
            t_end: default_t_end(),
            system: SystemSpec::Oscillator(spec),
            numerics: Numerics::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Builds the vector system, its auxiliary equation and the autonomous
    /// majorant. Suprema are taken over `[0, window_end]` unless known in
    /// closed form.
    pub fn instantiate(&self, window_end: f64) -> Result<Instance> {
        if !(self.t_end > 0.0) || !(window_end > 0.0) {
            return Err(ScenarioError::InvalidParameters(
                "windows must be positive".into(),
            ));
        }
        match &self.system {
            SystemSpec::Oscillator(spec) => instantiate_oscillator(spec, window_end),
            SystemSpec::Generic(spec) => instantiate_generic(spec, window_end),
        }
    }
}

// ============================================================================
// Instantiation
// ============================================================================

/// A scenario turned into systems.
#[derive(Debug, Clone)]
pub struct Instance {
    pub vector: VectorDelaySystem,
    pub fundamental: FundamentalData,
    pub dominating: DominatingL,
    /// Auxiliary equation produced by the generic pipeline.
    pub auxiliary: ScalarDelaySystem,
    pub majorant: ScalarDelaySystem,
    /// Hand-written auxiliary equation, when the scenario kind has one.
    pub hand_coded: Option<ScalarDelaySystem>,
}

impl Instance {
    /// The three systems with a new constant history at `x0`.
    pub fn with_initial_state(&self, x0: &[f64]) -> Result<Instance> {
        let level = crate::dde::norm2(x0);
        let mut out = self.clone();
        out.vector = self.vector.with_history(History::constant(x0))?;
        out.auxiliary = self.auxiliary.with_history(History::scalar(level));
        out.majorant = self.majorant.with_history(History::scalar(level));
        out.hand_coded = self
            .hand_coded
            .as_ref()
            .map(|s| s.with_history(History::scalar(level)));
        Ok(out)
    }
}

fn a1_matrix(spec: &OscillatorSpec) -> MatrixFn {
    let s = spec.clone();
    MatrixFn::varying(2, move |t| {
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -s.omega(t), -s.alpha1])
    })
}

fn instantiate_oscillator(spec: &OscillatorSpec, window_end: f64) -> Result<Instance> {
    spec.validate()?;
    let s = spec.clone();
    let lambda = TimeFn::analytic(move |t| s.lambda(t));
    let f = Nonlinearity::zero(2, 2)
        .with_linear(a1_matrix(spec), 0, 1.0)
        .with_linear(a1_matrix(spec), 1, spec.rho)
        .with_monomial(MonomialTerm::new(spec.b, 1, vec![Factor::new(1, 0, 3)]));
    let r3 = spec.r3;
    let vector = VectorDelaySystem::new(
        0.0,
        LinearPart::ScalarIdentity {
            dim: 2,
            lambda: lambda.clone(),
        },
        f,
        DelaySpec::constant(&[spec.h]),
        History::constant(&spec.x0),
    )?
    .with_unit_forcing(spec.f0, move |t, out: &mut [f64]| out[1] = (r3 * t).sin())?;

    let (fundamental, dominating, auxiliary) = reduce(&vector, window_end, None)?;

    // the same equation written out term by term
    let s = spec.clone();
    let a1_norm =
        TimeFn::analytic(move |t| singular_extremes_2x2(0.0, 1.0, -s.omega(t), -s.alpha1).0);
    let hand = ScalarDelaySystem::new(
        0.0,
        lambda,
        TimeFn::Constant(1.0),
        DominatingL::zero(2)
            .with_term(a1_norm.clone(), &[1, 0])
            .with_term(a1_norm.scaled(spec.rho), &[0, 1])
            .with_term(spec.b.abs(), &[0, 3]),
        DelaySpec::constant(&[spec.h]),
        History::scalar(crate::dde::norm2(&spec.x0)),
    )?
    .with_forcing(spec.f0, TimeFn::analytic(move |t| (r3 * t).sin().abs()));
    let gap = rhs_gap(&auxiliary, &hand, window_end);
    if gap > 1e-12 {
        return Err(ScenarioError::PipelineMismatch(gap));
    }

    let overrides = SupOverrides {
        p_hat: spec.lambda_hat(),
        ..Default::default()
    };
    let majorant = build_autonomous_majorant(&auxiliary, (0.0, window_end), &overrides);
    Ok(Instance {
        vector,
        fundamental,
        dominating,
        auxiliary,
        majorant,
        hand_coded: Some(hand),
    })
}

/// Largest relative difference between the right-hand sides of two scalar
/// systems over a deterministic sample of times and states.
pub fn rhs_gap(a: &ScalarDelaySystem, b: &ScalarDelaySystem, window_end: f64) -> f64 {
    if a.delays().len() != b.delays().len() {
        return f64::INFINITY;
    }
    let m = a.delays().len();
    let mut worst: f64 = 0.0;
    let (mut da, mut db) = ([0.0], [0.0]);
    for i in 0..200 {
        let t = window_end * i as f64 / 199.0;
        for j in 0..10 {
            let y = 0.37 * j as f64;
            let lagged: Vec<f64> = (0..m)
                .map(|k| 0.23 * ((i + 3 * j + k) % 11) as f64)
                .collect();
            a.rhs(t, &[y], &lagged, &mut da);
            b.rhs(t, &[y], &lagged, &mut db);
            let scale = da[0].abs().max(db[0].abs()).max(1.0);
            worst = worst.max((da[0] - db[0]).abs() / scale);
        }
    }
    worst
}

fn matrix_from_rows(rows: &[Vec<f64>], dim: usize) -> Result<DMatrix<f64>> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(ScenarioError::InvalidParameters(format!(
            "matrix must be {dim}x{dim}"
        )));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

fn instantiate_generic(spec: &GenericSpec, window_end: f64) -> Result<Instance> {
    let n = spec.dim;
    if n == 0 || spec.x0.len() != n {
        return Err(ScenarioError::InvalidParameters(format!(
            "dimension {n} with {} initial values",
            spec.x0.len()
        )));
    }
    let mut p_hat = None;
    let linear = match &spec.linear {
        LinearSpec::ScalarIdentity { lambda } => {
            p_hat = lambda.sup();
            LinearPart::ScalarIdentity {
                dim: n,
                lambda: lambda.to_time_fn(),
            }
        }
        LinearSpec::Diagonal { lambdas } => {
            if lambdas.len() != n {
                return Err(ScenarioError::InvalidParameters(
                    "diagonal length differs from dim".into(),
                ));
            }
            LinearPart::Diagonal(lambdas.iter().map(CoefficientSpec::to_time_fn).collect())
        }
        LinearSpec::Matrix { rows } => {
            LinearPart::General(MatrixFn::Constant(matrix_from_rows(rows, n)?))
        }
    };
    let n_args = 1 + spec.delays.len();
    let mut f = Nonlinearity::zero(n, n_args);
    for lt in &spec.linear_terms {
        f = f.with_linear(
            MatrixFn::Constant(matrix_from_rows(&lt.rows, n)?),
            lt.arg,
            lt.scale,
        );
    }
    // linear terms come first in L and have constant coefficients already
    let mut l_sups: Vec<Option<f64>> = vec![None; spec.linear_terms.len()];
    for m in &spec.monomials {
        let factors = m
            .factors
            .iter()
            .map(|f| Factor::new(f.arg, f.component, f.exponent))
            .collect();
        f = f.with_monomial(MonomialTerm::new(
            m.coefficient.to_time_fn(),
            m.target,
            factors,
        ));
        l_sups.push(m.coefficient.abs_sup());
    }
    if spec.delays.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(ScenarioError::InvalidParameters(
            "delays must be positive".into(),
        ));
    }
    let mut vector = VectorDelaySystem::new(
        0.0,
        linear,
        f,
        DelaySpec::constant(&spec.delays),
        History::constant(&spec.x0),
    )?;
    if let Some(forcing) = &spec.forcing {
        if forcing.shape.len() != n {
            return Err(ScenarioError::InvalidParameters(
                "forcing shape length differs from dim".into(),
            ));
        }
        let shape: Vec<TimeFn> = forcing
            .shape
            .iter()
            .map(CoefficientSpec::to_time_fn)
            .collect();
        vector = vector.with_forcing(
            forcing.amplitude,
            move |t, out: &mut [f64]| {
                for (o, s) in out.iter_mut().zip(&shape) {
                    *o = s.eval(t);
                }
            },
            (0.0, window_end),
        )?;
    }
    let (fundamental, dominating, auxiliary) = reduce(&vector, window_end, None)?;
    let overrides = SupOverrides {
        p_hat,
        c_hat: None,
        l_coefficients: l_sups,
    };
    let majorant = build_autonomous_majorant(&auxiliary, (0.0, window_end), &overrides);
    Ok(Instance {
        vector,
        fundamental,
        dominating,
        auxiliary,
        majorant,
        hand_coded: None,
    })
}
