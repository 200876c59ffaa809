use std::f64::consts::{FRAC_PI_2, PI};

use cbjj::circuit::{
    approx_wavenumber, derive_circuit, junction_phase, mode_ratio, solve_ktank, solve_wavenumber, CircuitParams,
};
use proptest::prelude::*;

fn params(i_c: f64, z_0: f64, f_ghz: f64) -> CircuitParams {
    CircuitParams { i_c, z_0, omega_bare: 2.0 * PI * f_ghz * 1e9, ..CircuitParams::reference() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn root_stays_on_its_branch(bias in 0.0f64..=0.99, j in 0usize..5) {
        let d = derive_circuit(&CircuitParams::reference()).unwrap();
        let kd = solve_wavenumber(&d, bias, j).unwrap();
        let lo = j as f64 * PI;
        prop_assert!(kd > lo && kd < lo + FRAC_PI_2, "kd = {kd} outside branch {j}");
        let r = mode_ratio(&d, bias).unwrap();
        let res = kd * kd.tan() - r;
        prop_assert!(res.abs() < 1e-12 * (1.0 + r), "residual {res}");
    }

    #[test]
    fn root_residual_for_any_ratio(r in 1e-3f64..1e3, j in 0usize..4) {
        let k = solve_ktank(r, j);
        prop_assert!((k * k.tan() - r).abs() < 1e-12 * (1.0 + r));
    }

    #[test]
    fn wavenumber_falls_with_bias(a in 0.0f64..0.98, step in 1e-4f64..0.01) {
        let d = derive_circuit(&CircuitParams::reference()).unwrap();
        let b = (a + step).min(0.99);
        prop_assume!(b > a);
        let ka = solve_wavenumber(&d, a, 0).unwrap();
        let kb = solve_wavenumber(&d, b, 0).unwrap();
        prop_assert!(kb < ka);
    }

    #[test]
    fn line_totals_round_trip(z_0 in 5.0f64..500.0, f in 0.5f64..50.0) {
        let p = params(2e-6, z_0, f);
        let d = derive_circuit(&p).unwrap();
        let z = (d.l_t_total / d.c_t_total).sqrt();
        let w = PI / (2.0 * (d.l_t_total * d.c_t_total).sqrt());
        prop_assert!((z - z_0).abs() <= 1e-12 * z_0);
        prop_assert!((w - p.omega_bare).abs() <= 1e-12 * p.omega_bare);
    }

    #[test]
    fn closed_form_wavenumber_in_its_regime(
        i_c in 0.5e-6f64..50e-6,
        z_0 in 20.0f64..200.0,
        bias in 0.0f64..0.95,
    ) {
        let d = derive_circuit(&params(i_c, z_0, 7.0)).unwrap();
        let x = d.l_j / (d.l_t_total * junction_phase(bias).unwrap().cos());
        prop_assume!(x < 0.1);
        let exact = solve_wavenumber(&d, bias, 0).unwrap();
        let approx = approx_wavenumber(&d, bias, 0).unwrap();
        prop_assert!((approx - exact).abs() <= 0.02 * exact, "x = {x}: {approx} vs {exact}");
    }
}

#[test]
fn reference_device_wavenumber_close_to_quarter_wave() {
    let d = derive_circuit(&CircuitParams::reference()).unwrap();
    let kd = solve_wavenumber(&d, 0.0, 0).unwrap();
    // oracle: r = L_T d / L_J at zero bias, root by plain bisection
    let r = d.l_t_total / d.l_j;
    let (mut lo, mut hi) = (1e-9, FRAC_PI_2 - 1e-12);
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if m * m.tan() < r {
            lo = m;
        } else {
            hi = m;
        }
    }
    assert!((kd - 0.5 * (lo + hi)).abs() < 1e-12);
}
