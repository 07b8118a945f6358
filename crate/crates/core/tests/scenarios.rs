use std::path::PathBuf;

use majorant::comparison::{compare_scalar, Slack};
use majorant::dde::{DelaySystem, ToleranceConfig};
use majorant::scenarios::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn shipped_scenarios_load_and_instantiate() {
    let mut count = 0;
    for entry in std::fs::read_dir(scenario_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let sc = Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            sc.instantiate(sc.t_end)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 8, "found {count} scenarios");
}

#[test]
fn shipped_oscillator_files_match_the_defaults() {
    let a = Scenario::load(&scenario_dir().join("oscillator_sinusoidal.toml")).unwrap();
    assert_eq!(
        a.system,
        SystemSpec::Oscillator(OscillatorSpec::default_sinusoidal())
    );
    let b = Scenario::load(&scenario_dir().join("oscillator_exponential.toml")).unwrap();
    assert_eq!(
        b.system,
        SystemSpec::Oscillator(OscillatorSpec::default_exponential())
    );
}

#[test]
fn exponential_case_lambda_hat() {
    assert_eq!(
        OscillatorSpec::default_exponential().lambda_hat(),
        Some(-2.0)
    );
    assert!((OscillatorSpec::default_sinusoidal().lambda_hat().unwrap() + 2.9).abs() < 1e-15);
}

#[test]
fn pipeline_agrees_with_hand_coded_auxiliary() {
    for spec in [
        OscillatorSpec::default_sinusoidal(),
        OscillatorSpec::default_exponential(),
    ] {
        let inst = Scenario::oscillator(spec).instantiate(20.0).unwrap();
        let hand = inst.hand_coded.as_ref().unwrap();
        assert!(rhs_gap(&inst.auxiliary, hand, 20.0) < 1e-9);
        let tol = ToleranceConfig::default();
        let a = inst.auxiliary.solve(20.0, &tol).unwrap();
        let b = hand.solve(20.0, &tol).unwrap();
        let s = Slack::from_tolerances(2.0, &tol, &tol);
        assert!(compare_scalar(&a, &b, 2000, s).unwrap().passed());
        assert!(compare_scalar(&b, &a, 2000, s).unwrap().passed());
    }
}

#[test]
fn three_systems_share_delay_and_history() {
    let spec = OscillatorSpec::default_sinusoidal();
    let inst = Scenario::oscillator(spec.clone())
        .instantiate(20.0)
        .unwrap();
    let level = (spec.x0[0].powi(2) + spec.x0[1].powi(2)).sqrt();
    for sys in [&inst.auxiliary, &inst.majorant] {
        assert_eq!(sys.history().norm_at(0.0), level);
        assert_eq!(sys.delays().h_upper(), spec.h);
    }
    assert_eq!(inst.vector.history().norm_at(0.0), level);
    assert_eq!(inst.vector.delays().h_upper(), spec.h);
}

#[test]
fn degenerate_oscillator_is_linear_in_the_norm() {
    let spec = OscillatorSpec {
        rho: 0.0,
        b: 0.0,
        f0: 0.0,
        ..OscillatorSpec::default_sinusoidal()
    };
    let inst = Scenario::oscillator(spec.clone())
        .instantiate(20.0)
        .unwrap();
    let mut dy = [0.0];
    for k in 0..200 {
        let t = 20.0 * k as f64 / 199.0;
        let a1 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -spec.omega(t), -spec.alpha1])
            .singular_values()
            .max();
        for y in [0.0, 0.3, 2.0] {
            inst.auxiliary.rhs(t, &[y], &[0.7], &mut dy);
            let expected = (spec.lambda(t) + a1) * y;
            assert!(
                (dy[0] - expected).abs() <= 1e-12 * expected.abs().max(1.0),
                "t = {t}, y = {y}"
            );
        }
    }
}

#[test]
fn invalid_parameters_are_rejected() {
    let bad = [
        OscillatorSpec {
            h: 0.0,
            ..OscillatorSpec::default_sinusoidal()
        },
        OscillatorSpec {
            rho: -0.1,
            ..OscillatorSpec::default_sinusoidal()
        },
        OscillatorSpec {
            f0: -1.0,
            ..OscillatorSpec::default_sinusoidal()
        },
        OscillatorSpec {
            b: f64::NAN,
            ..OscillatorSpec::default_sinusoidal()
        },
    ];
    for spec in bad {
        assert!(matches!(
            Scenario::oscillator(spec).instantiate(10.0),
            Err(ScenarioError::InvalidParameters(_))
        ));
    }
    let text = std::fs::read_to_string(scenario_dir().join("oscillator_sinusoidal.toml")).unwrap();
    let unknown = text.replace("[system]", "[system]\nunknown_key = 1");
    assert!(Scenario::from_toml_str(&unknown).is_err());
    let generic = std::fs::read_to_string(scenario_dir().join("linear_stable.toml")).unwrap();
    let wrong_dim = generic.replace("x0 = [0.1, 0.1]", "x0 = [0.1]");
    let sc = Scenario::from_toml_str(&wrong_dim).unwrap();
    assert!(matches!(
        sc.instantiate(10.0),
        Err(ScenarioError::InvalidParameters(_))
    ));
}

fn arb_oscillator() -> impl Strategy<Value = OscillatorSpec> {
    (
        (-5.0f64..-0.5, 0.0f64..1.0, 0.1f64..6.0, any::<bool>()),
        (0.5f64..2.0, 0.0f64..0.3, 0.0f64..0.3),
        (0.0f64..2.0, 0.0f64..0.5, 0.0f64..0.5, 0.01f64..2.0),
        (-1.0f64..1.0, -1.0f64..1.0),
    )
        .prop_map(
            |((lambda0, q, d, sinusoidal), (omega0, a1, a2), (alpha1, rho, b, h), (x, y))| {
                OscillatorSpec {
                    lambda0,
                    lambda_plus: if sinusoidal {
                        LambdaPlus::Sinusoidal { q, d }
                    } else {
                        LambdaPlus::Exponential { q, d }
                    },
                    omega0,
                    a1,
                    a2,
                    alpha1,
                    rho,
                    b,
                    h,
                    x0: [x, y],
                    ..OscillatorSpec::default_sinusoidal()
                }
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn toml_round_trip(spec in arb_oscillator(), t_end in 1.0f64..50.0, rtol in 1e-9f64..1e-4) {
        let mut sc = Scenario::oscillator(spec);
        sc.t_end = t_end;
        sc.numerics.rtol = rtol;
        let text = sc.to_toml_string().unwrap();
        prop_assert_eq!(Scenario::from_toml_str(&text).unwrap(), sc);
    }
}
