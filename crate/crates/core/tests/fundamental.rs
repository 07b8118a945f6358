use majorant::dde::ToleranceConfig;
use majorant::func::{MatrixFn, TimeFn};
use majorant::fundamental::*;
use majorant::scenarios::OscillatorSpec;
use nalgebra::DMatrix;
use proptest::prelude::*;

mod common;
use common::{expm, rel_diff, trapezoid_exp};

#[test]
fn pade_oracle_sanity() {
    // rotation generator: exp(A t) = [[cos, sin], [-sin, cos]]
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    for &t in &[0.3, 2.0, 7.5] {
        let e = expm(&(&a * t));
        let expected = DMatrix::from_row_slice(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()]);
        assert!(rel_diff(&e, &expected) < 1e-13);
    }
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 0.5, 2.0]));
    let e = expm(&d);
    assert!((e[(0, 0)] - (-1f64).exp()).abs() < 1e-14);
    assert!((e[(2, 2)] - 2f64.exp()).abs() < 1e-13);
}

// ============================================================================
// Reconstruction from p
// ============================================================================

fn oscillator_matrix(spec: &OscillatorSpec) -> LinearPart {
    let s = spec.clone();
    LinearPart::General(MatrixFn::varying(2, move |t| {
        let l = s.lambda(t);
        DMatrix::from_row_slice(2, 2, &[l, 1.0, -s.omega(t), l - s.alpha1])
    }))
}

#[test]
fn oscillator_window_reconstruction() {
    for spec in [
        OscillatorSpec::default_sinusoidal(),
        OscillatorSpec::default_exponential(),
    ] {
        let fd = compute_fundamental(
            &oscillator_matrix(&spec),
            0.0,
            20.0,
            None,
            &ToleranceConfig::fine(),
        )
        .unwrap();
        let rebuilt = trapezoid_exp(&fd.grid, &fd.p);
        let worst = rebuilt
            .iter()
            .zip(&fd.w_norm)
            .map(|(r, w)| (r / w - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-4, "relative reconstruction error {worst}");
        assert!(fd.reconstruction_error() < 1e-4);
        assert!(fd.c.iter().all(|&c| c >= 1.0));
    }
}

#[test]
fn scalar_identity_is_exact() {
    let lambda = TimeFn::analytic(|t| -3.0 + 0.1 * (5.0 * t).sin());
    let fd = compute_fundamental(
        &LinearPart::ScalarIdentity { dim: 2, lambda },
        0.0,
        20.0,
        None,
        &ToleranceConfig::default(),
    )
    .unwrap();
    for (j, &t) in fd.grid.iter().enumerate() {
        let exact = (-3.0 * t - 0.02 * ((5.0 * t).cos() - 1.0)).exp();
        assert!((fd.w_norm[j] / exact - 1.0).abs() < 1e-9, "t = {t}");
        assert_eq!(fd.c[j], 1.0);
    }
    assert!((fd.p_fn().eval(1.234) - (-3.0 + 0.1 * (5.0f64 * 1.234).sin())).abs() < 1e-15);
}

#[test]
fn diagonal_uses_the_dominant_branch() {
    // lambda_1 = -1 + sin t, lambda_2 = -1.2: branch 1 dominates while
    // 1 - cos t > 0.2 t
    let lin = LinearPart::Diagonal(vec![
        TimeFn::analytic(|t| -1.0 + t.sin()),
        TimeFn::Constant(-1.2),
    ]);
    let fd = compute_fundamental(&lin, 0.0, 6.0, None, &ToleranceConfig::default()).unwrap();
    for (j, &t) in fd.grid.iter().enumerate() {
        let e1: f64 = (-t + 1.0 - t.cos()).exp();
        let e2: f64 = (-1.2 * t).exp();
        assert!((fd.w_norm[j] / e1.max(e2) - 1.0).abs() < 1e-8, "t = {t}");
        assert!(
            (fd.w_inv_norm[j] * e1.min(e2) - 1.0).abs() < 1e-8,
            "t = {t}"
        );
    }
}

// ============================================================================
// Constant matrices
// ============================================================================

#[test]
fn rotation_has_unit_condition_and_zero_rate() {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let fd = compute_fundamental(
        &LinearPart::General(MatrixFn::Constant(a)),
        0.0,
        20.0,
        None,
        &ToleranceConfig::fine(),
    )
    .unwrap();
    for (j, &t) in fd.grid.iter().enumerate() {
        assert!((fd.c[j] - 1.0).abs() <= 1e-8, "c({t}) = {}", fd.c[j]);
        assert!(fd.p[j].abs() <= 1e-6, "p({t}) = {}", fd.p[j]);
    }
}

#[test]
fn constant_matrix_matches_exponential() {
    let cases = [
        [-1.0, 2.0, -0.5, -0.3],
        [0.2, -1.0, 3.0, -2.0],
        [-0.7, 0.0, 4.0, -0.1],
        [0.0, 1.0, -4.0, -0.4],
    ];
    for m in cases {
        let a = DMatrix::from_row_slice(2, 2, &m);
        let lin = LinearPart::General(MatrixFn::Constant(a.clone()));
        let times: Vec<f64> = (0..=40).map(|k| 0.25 * k as f64).collect();
        let ws = fundamental_matrices(&lin, 0.0, &times, &ToleranceConfig::fine()).unwrap();
        for (w, &t) in ws.iter().zip(&times) {
            let oracle = expm(&(&a * t));
            assert!(
                rel_diff(w, &oracle) < 1e-8,
                "A = {m:?}, t = {t}: {}",
                rel_diff(w, &oracle)
            );
        }
        let fd = compute_fundamental(&lin, 0.0, 10.0, None, &ToleranceConfig::fine()).unwrap();
        for (j, &t) in fd.grid.iter().enumerate().step_by(50) {
            let oracle = expm(&(&a * t));
            let (smax, smin) = singular_extremes(&oracle);
            assert!((fd.w_norm[j] / smax - 1.0).abs() < 1e-8);
            assert!((fd.w_inv_norm[j] * smin - 1.0).abs() < 1e-8);
        }
    }
}

#[test]
fn empty_window_is_rejected() {
    let lin = LinearPart::ScalarIdentity {
        dim: 1,
        lambda: TimeFn::Constant(-1.0),
    };
    assert!(matches!(
        compute_fundamental(&lin, 1.0, 1.0, None, &ToleranceConfig::default()),
        Err(FundamentalError::InvalidGrid(_))
    ));
}

#[test]
fn log_norm_rate_of_exponential() {
    let grid: Vec<f64> = (0..=100)
        .map(|k| (k as f64 / 100.0).powi(2) * 3.0)
        .collect();
    let w: Vec<f64> = grid.iter().map(|t| (0.5 * t * t).exp()).collect();
    let p = log_norm_rate(&w, &grid).unwrap();
    for (pj, t) in p.iter().zip(&grid).skip(1).take(99) {
        assert!((pj - t).abs() < 1e-2, "p({t}) = {pj}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn closed_form_singular_values_match_svd(
        a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, d in -5.0f64..5.0,
    ) {
        let m = DMatrix::from_row_slice(2, 2, &[a, b, c, d]);
        let sv = m.clone().singular_values();
        let (smax, smin) = singular_extremes_2x2(a, b, c, d);
        let big = sv.max();
        prop_assert!((smax - big).abs() <= 1e-12 * big.max(1.0));
        prop_assert!((smin - sv.min()).abs() <= 1e-12 * big.max(1.0));
    }

    #[test]
    fn random_constant_matrices_match_exponential(
        entries in proptest::collection::vec(-2.0f64..2.0, 9),
        t in 0.1f64..3.0,
    ) {
        let a = DMatrix::from_row_slice(3, 3, &entries);
        let lin = LinearPart::General(MatrixFn::Constant(a.clone()));
        let ws = fundamental_matrices(&lin, 0.0, &[t], &ToleranceConfig::fine()).unwrap();
        let oracle = expm(&(&a * t));
        prop_assert!(rel_diff(&ws[0], &oracle) < 1e-8, "{}", rel_diff(&ws[0], &oracle));
    }
}
