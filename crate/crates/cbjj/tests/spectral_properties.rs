use cbjj::circuit::CircuitParams;
use cbjj::linalg::{self, eigen::matrix_scale};
use cbjj::spectral::{analyze, single_mode_validity, transition_coupling, BiasSpectrum, BoundRule, CoupledSystem};

fn spectrum(bias: f64, rule: &BoundRule) -> (CoupledSystem, BiasSpectrum) {
    let sys = CoupledSystem::new(&CircuitParams::reference(), bias, 512, 8).unwrap();
    let spec = analyze(&sys, 40, rule).unwrap();
    (sys, spec)
}

#[test]
fn eigenpairs_orthonormal_with_small_residuals() {
    let (sys, spec) = spectrum(0.92, &BoundRule::default());
    let scale = matrix_scale(&sys.hamiltonian.matrix);
    for (i, p) in spec.pairs.iter().enumerate() {
        let hv = sys.hamiltonian.matrix.matvec(&p.state.amplitudes);
        let r: Vec<_> = hv
            .iter()
            .zip(&p.state.amplitudes)
            .map(|(a, b)| a - b * p.energy)
            .collect();
        assert!(linalg::norm(&r) <= 1e-8 * scale, "pair {i}: residual {}", linalg::norm(&r));
        for q in &spec.pairs[i..] {
            let o = linalg::dot(&p.state.amplitudes, &q.state.amplitudes);
            let want = if std::ptr::eq(p, q) { 1.0 } else { 0.0 };
            assert!((o - want).norm() < 1e-10);
        }
    }
}

#[test]
fn census_at_reference_biases() {
    let (_, s92) = spectrum(0.92, &BoundRule::default());
    assert_eq!(s92.lowest_band_bound(), 2);
    let (_, s94) = spectrum(0.94, &BoundRule::default());
    assert_eq!(s94.bound_count(), 0);
    let (_, s85) = spectrum(0.85, &BoundRule::default());
    let bands: std::collections::BTreeSet<_> = s85.levels.iter().filter(|l| l.bound).map(|l| l.band).collect();
    assert!(bands.len() >= 3, "bands with bound states at 0.85: {bands:?}");
}

#[test]
fn census_insensitive_to_threshold() {
    for t in [0.85, 0.9, 0.95] {
        let (_, s) = spectrum(0.92, &BoundRule { in_well_threshold: t });
        assert_eq!(s.lowest_band_bound(), 2, "threshold {t}");
    }
}

#[test]
fn coupling_linear_in_output_capacitor() {
    let omega = |c_out: f64| {
        let p = CircuitParams { c_out, ..CircuitParams::reference() };
        let sys = CoupledSystem::new(&p, 0.92, 512, 8).unwrap();
        let spec = analyze(&sys, 40, &BoundRule::default()).unwrap();
        transition_coupling(&spec, &sys, None).unwrap().omega.norm()
    };
    let a = omega(5e-15);
    let b = omega(10e-15);
    assert!((b / a - 2.0).abs() < 1e-10);
    assert_eq!(omega(0.0), 0.0);
}

#[test]
fn validity_estimate_is_consistent() {
    let v = single_mode_validity(&CircuitParams::reference(), 0.92, 512, 8, 40).unwrap();
    assert!(!v.mode_mode_coupling_included);
    assert!(v.g_1a_1b.is_finite() && v.g_0_1b.is_finite());
    assert!((v.ratio_1a_1b - (v.g_1a_1b / v.delta_1a_1b).abs()).abs() < 1e-12 * v.ratio_1a_1b);
    assert!((v.ratio_0_1b - (v.g_0_1b / v.delta_0_1b).abs()).abs() < 1e-12 * v.ratio_0_1b);
    assert!((v.est_population - v.ratio_1a_1b.powi(2)).abs() <= 1e-15 * v.est_population.max(1.0));
}
