use cbjj::circuit::{derive_circuit, solve_mode, CircuitParams};
use cbjj::hamiltonian::{assemble_hamiltonian, coefficients, kerr_matrix, HamiltonianCoefficients, ProductBasis};
use cbjj::linalg::EigenOptions;
use cbjj::spectral::{analyze, eigensolve, eigensolve_with, BoundRule, CoupledSystem};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn coeffs_at(bias: f64) -> HamiltonianCoefficients {
    let d = derive_circuit(&CircuitParams::reference()).unwrap();
    coefficients(&solve_mode(&d, bias, 0).unwrap(), &d)
}

/// Junction-only Hamiltonian built straight from the five-point stencil.
fn junction_dense(c: &HamiltonianCoefficients, basis: &ProductBasis) -> DMatrix<f64> {
    let n = basis.n_phi;
    let h = basis.d_phi;
    let w = [-1.0 / 12.0, 4.0 / 3.0, -2.5, 4.0 / 3.0, -1.0 / 12.0];
    DMatrix::from_fn(n, n, |i, j| {
        let off = j as i64 - i as i64;
        let mut v = 0.0;
        if off.abs() <= 2 {
            v -= c.kinetic * w[(off + 2) as usize] / (h * h);
        }
        if i == j {
            v += c.washboard(basis.phi(i));
        }
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn assembled_hamiltonian_is_hermitian(bias in 0.5f64..0.98, n_fock in 2usize..10) {
        let c = coeffs_at(bias);
        let basis = ProductBasis::around_well(c.phi_j, 128, n_fock).unwrap();
        let h = assemble_hamiltonian(&c, &basis).unwrap();
        prop_assert!(h.hermitian_defect() <= 1e-12 * h.matrix.max_abs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coefficient_magnitudes_ordered(bias in 0.85f64..=0.93) {
        let c = coeffs_at(bias);
        prop_assert!(c.mu_scaled.abs() > c.eta);
        prop_assert!(c.eta > c.chi_scaled.abs());
        prop_assert!(c.chi_scaled.abs() > c.kappa.abs());
    }

    #[test]
    fn kerr_matrix_symmetric_and_reduces_to_single_mode(bias in 0.5f64..0.98) {
        let d = derive_circuit(&CircuitParams::reference()).unwrap();
        let k = kerr_matrix(&d, bias, &[0, 1, 2]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((k[(i, j)] - k[(j, i)]).abs() <= 1e-15 * k[(i, j)].abs());
            }
        }
        let c = coeffs_at(bias);
        let want = c.kappa * c.phi_j.cos();
        prop_assert!((k[(0, 0)] - want).abs() <= 1e-10 * want.abs());
    }
}

#[test]
fn decoupled_spectrum_is_a_tensor_sum() {
    let mut c = coeffs_at(0.9);
    c.eta = 0.0;
    c.kappa = 0.0;
    c.lambda_scaled = 0.0;
    c.mu_scaled = 0.0;
    c.chi_scaled = 0.0;
    let nf = 4;
    let basis = ProductBasis::around_well(c.phi_j, 96, nf).unwrap();
    let h = assemble_hamiltonian(&c, &basis).unwrap();
    let full = eigensolve(&h, &basis, 12).unwrap();

    let junction = junction_dense(&c, &basis).symmetric_eigenvalues();
    let mut sum: Vec<f64> = junction
        .iter()
        .flat_map(|e| (0..nf).map(move |n| e + n as f64 * c.omega))
        .collect();
    sum.sort_by(f64::total_cmp);
    for (got, want) in full.iter().zip(&sum) {
        assert!((got.energy - want).abs() <= 1e-9 * want.abs(), "{} vs {}", got.energy, want);
    }
}

#[test]
fn junction_level_spacing_near_plasma_frequency() {
    // deep well: the first spacing sits a fraction of a percent below ω_p
    let c = coeffs_at(0.5);
    let basis = ProductBasis::around_well(c.phi_j, 256, 1).unwrap();
    let h = assemble_hamiltonian(&c, &basis).unwrap();
    let bottom = c.washboard(c.phi_j);
    let opts = EigenOptions::default();
    let pairs = eigensolve_with(&h, &basis, 2, Some(bottom), &opts).unwrap();
    let gap = pairs[1].energy - pairs[0].energy;
    let wp = c.plasma_frequency();
    assert!(gap < wp && gap > 0.99 * wp, "gap {gap} vs plasma {wp}");
}

#[test]
fn larger_fock_space_lowers_ground_energy() {
    let c = coeffs_at(0.92);
    let mut last = f64::INFINITY;
    for nf in [2, 4, 6, 8] {
        let basis = ProductBasis::around_well(c.phi_j, 64, nf).unwrap();
        let h = assemble_hamiltonian(&c, &basis).unwrap();
        let e0 = eigensolve(&h, &basis, 1).unwrap()[0].energy;
        assert!(e0 <= last + 1e-9 * e0.abs(), "n_fock {nf}: {e0} above {last}");
        last = e0;
    }
}

#[test]
fn two_lowest_well_levels_converged_in_basis() {
    // with 16 Fock states the second well level mixes with a continuum state
    // and its band label becomes marginal, so take the lowest bound levels
    let well = |n_phi, n_fock, n_states| {
        let sys = CoupledSystem::new(&CircuitParams::reference(), 0.92, n_phi, n_fock).unwrap();
        let spec = analyze(&sys, n_states, &BoundRule::default()).unwrap();
        let mut e: Vec<f64> = spec.levels.iter().filter(|l| l.bound).map(|l| l.energy).collect();
        e.sort_by(f64::total_cmp);
        [e[0], e[1]]
    };
    let coarse = well(512, 8, 40);
    let fine = well(1024, 16, 160);
    for k in 0..2 {
        let rel = ((coarse[k] - fine[k]) / fine[k]).abs();
        assert!(rel < 1e-3, "level {k}: {} vs {} ({rel:e})", coarse[k], fine[k]);
    }
}
