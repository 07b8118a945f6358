//! Boundedness regions by ray search.
//!
//! Along each ray the initial radius is doubled from a seed until a run
//! blows up, then bisected. A run "blows up" when the [`BlowUpDetector`]
//! fires on the horizon or the integrator gives up with a large state.
//! Results are relative to the horizon and detector settings.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auxiliary::{AuxError, ScalarDelaySystem};
use crate::dde::{
    self, norm2, DdeError, DelaySystem, History, StepControl, StepMonitor, ToleranceConfig,
};
use crate::system::VectorDelaySystem;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum RegionError {
    #[error("the seed radius {seed} already blows up along direction {ray}")]
    SeedBlowsUp { ray: usize, seed: f64 },
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("bad search parameters: {0}")]
    BadParameters(String),
    #[error(transparent)]
    Integration(#[from] DdeError),
    #[error(transparent)]
    Auxiliary(#[from] AuxError),
}

pub type Result<T> = std::result::Result<T, RegionError>;

// ============================================================================
// Detector
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowUpDetector {
    /// Hard cap on the state norm.
    pub overflow: f64,
    /// Per-step growth factor that counts as rapid.
    pub growth_ratio: f64,
    /// Number of consecutive rapid steps that trigger.
    pub consecutive_steps: usize,
}

impl Default for BlowUpDetector {
    fn default() -> Self {
        Self {
            overflow: 1e6,
            growth_ratio: 10.0,
            consecutive_steps: 2,
        }
    }
}

/// Running state of a [`BlowUpDetector`] during one integration.
#[derive(Debug, Clone)]
pub struct DetectorMonitor {
    cfg: BlowUpDetector,
    initial: f64,
    prev: f64,
    streak: usize,
    fired_at: Option<f64>,
}

impl DetectorMonitor {
    pub fn new(cfg: BlowUpDetector) -> Self {
        Self {
            cfg,
            initial: 0.0,
            prev: 0.0,
            streak: 0,
            fired_at: None,
        }
    }

    pub fn fired_at(&self) -> Option<f64> {
        self.fired_at
    }
}

impl StepMonitor for DetectorMonitor {
    fn on_start(&mut self, _t0: f64, x0: &[f64]) {
        self.initial = norm2(x0);
        self.prev = self.initial;
    }

    fn on_step(&mut self, t: f64, x: &[f64]) -> StepControl {
        let n = norm2(x);
        // growth below the starting level is transient, not escape
        let rapid = n > self.initial && n >= self.cfg.growth_ratio * self.prev;
        self.streak = if rapid { self.streak + 1 } else { 0 };
        self.prev = n;
        if !(n <= self.cfg.overflow) || self.streak >= self.cfg.consecutive_steps.max(1) {
            self.fired_at = Some(t);
            return StepControl::Stop;
        }
        StepControl::Continue
    }
}

/// Integrates `sys` on `[t0, t0 + horizon]` and reports whether it stayed
/// bounded. Integrator failures with a state above the starting norm and
/// above one count as blow-up; other failures propagate.
pub fn stays_bounded(
    sys: &dyn DelaySystem,
    horizon: f64,
    detector: &BlowUpDetector,
    tol: &ToleranceConfig,
) -> Result<bool> {
    let mut mon = DetectorMonitor::new(*detector);
    let mut tol = *tol;
    tol.overflow = tol.overflow.max(detector.overflow);
    let start = sys.history().norm_at(sys.t0());
    match dde::integrate_with(sys, sys.t0() + horizon, &tol, &[], &mut mon) {
        Ok(_) => Ok(mon.fired_at().is_none()),
        Err(DdeError::BlowUp { .. }) => Ok(false),
        Err(DdeError::StepUnderflow { norm, .. }) if !(norm <= start.max(1.0)) => Ok(false),
        Err(e) => Err(e.into()),
    }
}

// ============================================================================
// Ray search
// ============================================================================

/// Settings shared by boundary and disk searches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub horizon: f64,
    pub search_tol: f64,
    pub seed: f64,
    /// Doubling stops here; radii at the cap are flagged.
    pub cap: f64,
    pub detector: BlowUpDetector,
    pub tol: ToleranceConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            horizon: 40.0,
            search_tol: 1e-3,
            seed: 0.01,
            cap: 1e4,
            detector: BlowUpDetector::default(),
            tol: ToleranceConfig::default(),
        }
    }
}

impl SearchConfig {
    fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0
            && self.search_tol > 0.0
            && self.seed > 0.0
            && self.cap >= self.seed)
        {
            return Err(RegionError::BadParameters(format!(
                "horizon {}, search_tol {}, seed {}, cap {}",
                self.horizon, self.search_tol, self.seed, self.cap
            )));
        }
        Ok(())
    }

    /// Same horizon, tolerance and detector, which is what makes two
    /// searches comparable.
    pub fn compatible(&self, other: &SearchConfig) -> bool {
        self.horizon == other.horizon
            && self.search_tol == other.search_tol
            && self.detector == other.detector
    }
}

/// Radius found along one ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayRadius {
    pub radius: f64,
    /// True when no blow-up was found up to the cap.
    pub capped: bool,
    /// Largest radius that stayed bounded.
    pub bounded: f64,
    /// Smallest radius that blew up (the cap when capped).
    pub blown: f64,
}

/// Doubling then bisection on a monotone-looking predicate `bounded(r)`.
pub fn search_ray(
    ray: usize,
    cfg: &SearchConfig,
    bounded: &dyn Fn(f64) -> Result<bool>,
) -> Result<RayRadius> {
    cfg.validate()?;
    if !bounded(cfg.seed)? {
        return Err(RegionError::SeedBlowsUp {
            ray,
            seed: cfg.seed,
        });
    }
    let mut lo = cfg.seed;
    let mut hi = lo;
    loop {
        hi = (2.0 * hi).min(cfg.cap);
        if !bounded(hi)? {
            break;
        }
        lo = hi;
        if hi >= cfg.cap {
            return Ok(RayRadius {
                radius: cfg.cap,
                capped: true,
                bounded: cfg.cap,
                blown: cfg.cap,
            });
        }
    }
    while hi - lo > cfg.search_tol * lo {
        let mid = 0.5 * (lo + hi);
        if bounded(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(RayRadius {
        radius: 0.5 * (lo + hi),
        capped: false,
        bounded: lo,
        blown: hi,
    })
}

/// Boundary samples `R(theta_k)` with the settings that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionBoundary {
    pub angles: Vec<f64>,
    pub radii: Vec<RayRadius>,
    pub config: SearchConfig,
}

impl RegionBoundary {
    pub fn min_radius(&self) -> f64 {
        self.radii
            .iter()
            .map(|r| r.radius)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn all_capped(&self) -> bool {
        self.radii.iter().all(|r| r.capped)
    }
}

/// Angles `k * step` in `[0, 2 pi)`.
pub fn polar_angles(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= std::f64::consts::TAU) {
        return Err(RegionError::BadParameters(format!("angle step {step}")));
    }
    let ratio = std::f64::consts::TAU / step;
    let n = if (ratio - ratio.round()).abs() < 1e-9 * ratio {
        ratio.round()
    } else {
        ratio.ceil()
    } as usize;
    Ok((0..n).map(|k| k as f64 * step).collect())
}

/// Ray search for a system of any dimension along the given unit directions,
/// with constant histories `r * direction`. Rays run in parallel; results
/// keep the input order.
pub fn estimate_boundary_rays(
    sys: &VectorDelaySystem,
    directions: &[Vec<f64>],
    cfg: &SearchConfig,
) -> Result<Vec<RayRadius>> {
    cfg.validate()?;
    let n = sys.dim();
    if directions.iter().any(|d| d.len() != n) {
        return Err(RegionError::BadParameters(format!(
            "directions must have {n} components"
        )));
    }
    directions
        .par_iter()
        .enumerate()
        .map(|(k, dir)| {
            let scale = norm2(dir);
            let probe = |r: f64| -> Result<bool> {
                let x0: Vec<f64> = dir.iter().map(|v| r * v / scale).collect();
                let s = sys.with_history(History::constant(&x0))?;
                stays_bounded(&s, cfg.horizon, &cfg.detector, &cfg.tol)
            };
            search_ray(k, cfg, &probe)
        })
        .collect()
}

/// Polar boundary of a two-dimensional system at angles `k * angle_step`.
pub fn estimate_boundary_polar(
    sys: &VectorDelaySystem,
    angle_step: f64,
    cfg: &SearchConfig,
) -> Result<RegionBoundary> {
    if sys.dim() != 2 {
        return Err(RegionError::BadParameters(format!(
            "polar search needs a 2-dimensional system, got {}",
            sys.dim()
        )));
    }
    let angles = polar_angles(angle_step)?;
    let dirs: Vec<Vec<f64>> = angles.iter().map(|a| vec![a.cos(), a.sin()]).collect();
    let radii = estimate_boundary_rays(sys, &dirs, cfg)?;
    Ok(RegionBoundary {
        angles,
        radii,
        config: cfg.clone(),
    })
}

/// Largest constant history level of a scalar system that stays bounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskRadius {
    pub radius: RayRadius,
    pub config: SearchConfig,
}

pub fn embedded_disk_radius(sys: &ScalarDelaySystem, cfg: &SearchConfig) -> Result<DiskRadius> {
    let t_end = sys.t0() + cfg.horizon;
    if t_end > sys.valid_until() {
        return Err(AuxError::WindowMismatch {
            requested: t_end,
            available: sys.valid_until(),
        }
        .into());
    }
    let probe = |c: f64| -> Result<bool> {
        let s = sys.with_history(History::scalar(c));
        stays_bounded(&s, cfg.horizon, &cfg.detector, &cfg.tol)
    };
    Ok(DiskRadius {
        radius: search_ray(0, cfg, &probe)?,
        config: cfg.clone(),
    })
}

/// `r <= min_k R(theta_k) (1 + search_tol)`.
pub fn radius_in_region(boundary: &RegionBoundary, r: f64) -> bool {
    r <= boundary.min_radius() * (1.0 + boundary.config.search_tol)
}

/// [`radius_in_region`] after checking that both searches used the same
/// horizon, tolerance and detector.
pub fn verify_disk_in_region(boundary: &RegionBoundary, disk: &DiskRadius) -> Result<bool> {
    if !boundary.config.compatible(&disk.config) {
        return Err(RegionError::ConfigMismatch(format!(
            "boundary uses {:?}, disk uses {:?}",
            boundary.config, disk.config
        )));
    }
    Ok(radius_in_region(boundary, disk.radius.radius))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles_cover_the_circle() {
        let a = polar_angles(std::f64::consts::PI / 100.0).unwrap();
        assert_eq!(a.len(), 200);
        assert_eq!(a[0], 0.0);
        assert!(*a.last().unwrap() < std::f64::consts::TAU);
        assert_eq!(polar_angles(1.0).unwrap().len(), 7);
    }

    #[test]
    fn ray_search_brackets_a_threshold() {
        let cfg = SearchConfig {
            seed: 0.1,
            ..Default::default()
        };
        let r = search_ray(0, &cfg, &|r| Ok(r < 3.7)).unwrap();
        assert!(!r.capped);
        assert!(r.bounded < 3.7 && r.blown >= 3.7);
        assert!((r.radius - 3.7).abs() <= 3.7 * cfg.search_tol);
    }

    #[test]
    fn ray_search_caps_and_rejects_seed() {
        let cfg = SearchConfig {
            seed: 0.1,
            cap: 10.0,
            ..Default::default()
        };
        let r = search_ray(0, &cfg, &|_| Ok(true)).unwrap();
        assert!(r.capped);
        assert_eq!(r.radius, 10.0);
        let err = search_ray(3, &cfg, &|_| Ok(false)).unwrap_err();
        assert_eq!(err, RegionError::SeedBlowsUp { ray: 3, seed: 0.1 });
    }

    #[test]
    fn detector_needs_consecutive_growth() {
        let mut m = DetectorMonitor::new(BlowUpDetector::default());
        m.on_start(0.0, &[1.0]);
        assert_eq!(m.on_step(0.1, &[20.0]), StepControl::Continue);
        assert_eq!(m.on_step(0.2, &[30.0]), StepControl::Continue);
        assert_eq!(m.on_step(0.3, &[400.0]), StepControl::Continue);
        assert_eq!(m.on_step(0.4, &[5000.0]), StepControl::Stop);
        assert_eq!(m.fired_at(), Some(0.4));
        let mut m = DetectorMonitor::new(BlowUpDetector::default());
        m.on_start(0.0, &[1.0]);
        assert_eq!(m.on_step(0.1, &[2e6]), StepControl::Stop);
    }
}
