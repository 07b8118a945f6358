use std::f64::consts::PI;
use std::path::PathBuf;

use majorant::auxiliary::ScalarDelaySystem;
use majorant::commands::search_config;
use majorant::dde::{DelaySpec, FnSystem, History, ToleranceConfig};
use majorant::func::TimeFn;
use majorant::nonlinearity::DominatingL;
use majorant::region::*;
use majorant::scenarios::{OscillatorSpec, Scenario};

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    Scenario::load(&path).unwrap()
}

/// `y' = -y + k y^3`, whose bounded set is `[0, 1 / sqrt(k))`.
fn cubic_scalar(k: f64) -> ScalarDelaySystem {
    let l = if k > 0.0 {
        DominatingL::zero(1).with_term(k, &[3])
    } else {
        DominatingL::zero(1)
    };
    ScalarDelaySystem::new(
        0.0,
        TimeFn::Constant(-1.0),
        TimeFn::Constant(1.0),
        l,
        DelaySpec::none(),
        History::scalar(0.1),
    )
    .unwrap()
}

// ============================================================================
// Boundary estimation
// ============================================================================

#[test]
fn separatrix_is_the_unit_circle() {
    let sc = scenario("cubic_separatrix.toml");
    let cfg = search_config(&sc);
    let inst = sc.instantiate(cfg.horizon).unwrap();
    let b = estimate_boundary_polar(&inst.vector, PI / 8.0, &cfg).unwrap();
    assert_eq!(b.angles.len(), 16);
    for (theta, r) in b.angles.iter().zip(&b.radii) {
        assert!(!r.capped);
        assert!((r.radius - 1.0).abs() <= 1e-2, "R({theta}) = {}", r.radius);
        assert!(r.blown - r.bounded <= cfg.search_tol * r.bounded);
    }
}

#[test]
fn bracket_brackets_the_blow_up() {
    let sc = scenario("cubic_separatrix.toml");
    let cfg = search_config(&sc);
    let inst = sc.instantiate(cfg.horizon).unwrap();
    let dirs = vec![vec![1.0, 0.0], vec![-0.6, 0.8]];
    let radii = estimate_boundary_rays(&inst.vector, &dirs, &cfg).unwrap();
    for (d, r) in dirs.iter().zip(&radii) {
        let probe = |rad: f64| {
            let x0: Vec<f64> = d.iter().map(|v| rad * v).collect();
            let s = inst.vector.with_history(History::constant(&x0)).unwrap();
            stays_bounded(&s, cfg.horizon, &cfg.detector, &cfg.tol).unwrap()
        };
        assert!(probe(r.radius * (1.0 - cfg.search_tol)));
        assert!(!probe(r.radius * (1.0 + cfg.search_tol)));
        assert!(probe(r.bounded));
        assert!(!probe(r.blown));
    }
}

#[test]
fn linear_stable_system_reaches_the_cap() {
    let sc = scenario("linear_stable.toml");
    let cfg = search_config(&sc);
    let inst = sc.instantiate(cfg.horizon).unwrap();
    let b = estimate_boundary_polar(&inst.vector, PI / 4.0, &cfg).unwrap();
    assert!(b.all_capped());
    assert!(b.radii.iter().all(|r| r.radius == cfg.cap));
}

#[test]
fn boundary_is_deterministic() {
    let sc = scenario("cubic_separatrix.toml");
    let cfg = SearchConfig {
        horizon: 20.0,
        ..search_config(&sc)
    };
    let inst = sc.instantiate(cfg.horizon).unwrap();
    let a = estimate_boundary_polar(&inst.vector, PI / 6.0, &cfg).unwrap();
    let b = estimate_boundary_polar(&inst.vector, PI / 6.0, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn polar_search_needs_two_dimensions() {
    let sc = scenario("quadratic.toml");
    let inst = sc.instantiate(10.0).unwrap();
    assert!(matches!(
        estimate_boundary_polar(&inst.vector, PI / 4.0, &SearchConfig::default()),
        Err(RegionError::BadParameters(_))
    ));
}

#[test]
fn blown_seed_is_reported() {
    let sys = cubic_scalar(1.0);
    let cfg = SearchConfig {
        seed: 2.0,
        horizon: 10.0,
        ..Default::default()
    };
    assert!(
        matches!(embedded_disk_radius(&sys, &cfg), Err(RegionError::SeedBlowsUp { seed, .. }) if seed == 2.0)
    );
}

// ============================================================================
// Blow-up classification
// ============================================================================

#[test]
fn exponential_growth_is_blow_up() {
    let grow = FnSystem::new(
        0.0,
        DelaySpec::none(),
        History::scalar(1.0),
        |_, x, _, dx| dx[0] = x[0],
    );
    let decay = FnSystem::new(
        0.0,
        DelaySpec::none(),
        History::scalar(1.0),
        |_, x, _, dx| dx[0] = -x[0],
    );
    let det = BlowUpDetector::default();
    let tol = ToleranceConfig::default();
    assert!(!stays_bounded(&grow, 40.0, &det, &tol).unwrap());
    assert!(stays_bounded(&decay, 40.0, &det, &tol).unwrap());
    // below the overflow threshold and growing slowly
    assert!(stays_bounded(&grow, 5.0, &det, &tol).unwrap());
}

// ============================================================================
// Embedded disks
// ============================================================================

#[test]
fn cubic_disk_radius() {
    let cfg = SearchConfig::default();
    let d = embedded_disk_radius(&cubic_scalar(1.0), &cfg).unwrap();
    assert!((d.radius.radius - 1.0).abs() <= 1e-2, "{}", d.radius.radius);
    let d = embedded_disk_radius(&cubic_scalar(4.0), &cfg).unwrap();
    assert!((d.radius.radius - 0.5).abs() <= 5e-3, "{}", d.radius.radius);
    let d = embedded_disk_radius(&cubic_scalar(0.0), &SearchConfig { cap: 100.0, ..cfg }).unwrap();
    assert!(d.radius.capped);
}

#[test]
fn disk_containment_checks() {
    let sc = scenario("cubic_separatrix.toml");
    let cfg = SearchConfig {
        horizon: 20.0,
        ..search_config(&sc)
    };
    let inst = sc.instantiate(cfg.horizon).unwrap();
    let b = estimate_boundary_polar(&inst.vector, PI / 4.0, &cfg).unwrap();
    assert!(radius_in_region(&b, 0.0));
    assert!(!radius_in_region(&b, 2.0 * b.min_radius()));
    let disk = embedded_disk_radius(&inst.auxiliary, &cfg).unwrap();
    assert!(verify_disk_in_region(&b, &disk).unwrap());
    let other = DiskRadius {
        config: SearchConfig {
            horizon: 30.0,
            ..cfg
        },
        ..disk
    };
    assert!(matches!(
        verify_disk_in_region(&b, &other),
        Err(RegionError::ConfigMismatch(_))
    ));
}

#[test]
fn oscillator_disk_shrinks_with_forcing_and_cubic_gain() {
    let cfg = SearchConfig::default();
    let disk = |spec: OscillatorSpec| {
        let inst = Scenario::oscillator(spec).instantiate(cfg.horizon).unwrap();
        embedded_disk_radius(&inst.auxiliary, &cfg)
            .unwrap()
            .radius
            .radius
    };
    let base = OscillatorSpec::default_sinusoidal();
    let by_f0: Vec<f64> = [0.0, 0.05, 0.1]
        .iter()
        .map(|&f0| disk(OscillatorSpec { f0, ..base.clone() }))
        .collect();
    let by_b: Vec<f64> = [0.1, 0.2, 0.3]
        .iter()
        .map(|&b| disk(OscillatorSpec { b, ..base.clone() }))
        .collect();
    for w in by_f0.windows(2).chain(by_b.windows(2)) {
        assert!(w[1] <= w[0] * (1.0 + cfg.search_tol), "{by_f0:?} {by_b:?}");
    }
}
