//! Eigenstates of the coupled Hamiltonian, bound-state census, phase
//! distributions, the external coupling strength and the single-mode check.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{derive_circuit, solve_mode, CircuitParams, DerivedCircuit, ModeSolution};
use crate::error::{Error, Result};
use crate::hamiltonian::{
    assemble_hamiltonian, assemble_terms, coefficients, momentum, HamiltonianCoefficients,
    OperatorMatrix, ProductBasis, QuantumState, Terms,
};
use crate::linalg::{self, dot, EigenOptions};
use crate::mean_field::{effective_potential, find_barrier, moments, Barrier, Moments};
use crate::units::HBAR;

type C = Complex64;

/// Everything needed to work at one bias point.
#[derive(Clone, Debug)]
pub struct CoupledSystem {
    pub params: CircuitParams,
    pub derived: DerivedCircuit,
    pub mode: ModeSolution,
    pub coeffs: HamiltonianCoefficients,
    pub basis: ProductBasis,
    pub hamiltonian: OperatorMatrix,
}

impl CoupledSystem {
    pub fn new(params: &CircuitParams, bias: f64, n_phi: usize, n_fock: usize) -> Result<Self> {
        params.validate()?;
        let derived = derive_circuit(params)?;
        let mode = solve_mode(&derived, bias, 0)?;
        let coeffs = coefficients(&mode, &derived);
        let basis = ProductBasis::around_well(mode.phi_j, n_phi, n_fock)?;
        let hamiltonian = assemble_hamiltonian(&coeffs, &basis)?;
        Ok(Self { params: params.clone(), derived, mode, coeffs, basis, hamiltonian })
    }

    /// Bottom of the bare well, −E_J(cos φ̂_J + I φ̂_J).
    pub fn well_bottom(&self) -> f64 {
        self.coeffs.washboard(self.coeffs.phi_j)
    }
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    /// rad/ns
    pub energy: f64,
    pub state: QuantumState,
    pub mean_photon: f64,
    pub residual: f64,
    pub bound: bool,
}

fn to_pairs(basis: &ProductBasis, eig: linalg::Eigen) -> Vec<EigenPair> {
    eig.values
        .into_iter()
        .zip(eig.vectors)
        .zip(eig.residuals)
        .map(|((energy, v), residual)| EigenPair {
            energy,
            mean_photon: moments(basis, &v).n_bar,
            state: QuantumState::new(v),
            residual,
            bound: false,
        })
        .collect()
}

/// Lowest `n_states` eigenpairs of H.
pub fn eigensolve(h: &OperatorMatrix, basis: &ProductBasis, n_states: usize) -> Result<Vec<EigenPair>> {
    eigensolve_with(h, basis, n_states, None, &EigenOptions::default())
}

/// `n_states` eigenpairs closest to `shift`, ascending.
pub fn eigensolve_near(
    h: &OperatorMatrix,
    basis: &ProductBasis,
    shift: f64,
    n_states: usize,
) -> Result<Vec<EigenPair>> {
    eigensolve_with(h, basis, n_states, Some(shift), &EigenOptions::default())
}

pub fn eigensolve_with(
    h: &OperatorMatrix,
    basis: &ProductBasis,
    n_states: usize,
    shift: Option<f64>,
    opts: &EigenOptions,
) -> Result<Vec<EigenPair>> {
    if !h.hermitian {
        return Err(Error::Parameter("eigensolve needs a Hermitian operator".into()));
    }
    let eig = match shift {
        Some(s) => linalg::nearest(&h.matrix, s, n_states, opts)?,
        None => linalg::lowest(&h.matrix, n_states, opts)?,
    };
    Ok(to_pairs(basis, eig))
}

/// Eigenpairs around the bottom of the well. The lowest eigenvalues of the
/// box belong to states running down the washboard, so the physical
/// spectrum is found by shift-invert near the well.
pub fn well_spectrum(sys: &CoupledSystem, n_states: usize) -> Result<Vec<EigenPair>> {
    eigensolve_near(&sys.hamiltonian, &sys.basis, sys.well_bottom(), n_states)
}

/// Marginal phase density: P(φ_k) = Σ_n |ψ(φ_k, n)|² / dφ, so that
/// Σ_k P(φ_k) dφ = ‖ψ‖².
pub fn phase_distribution(basis: &ProductBasis, state: &QuantumState) -> Vec<f64> {
    state
        .amplitudes
        .chunks_exact(basis.n_fock)
        .map(|b| b.iter().map(|a| a.norm_sqr()).sum::<f64>() / basis.d_phi)
        .collect()
}

/// Fraction of the phase probability at or left of grid index `edge`.
pub fn weight_left_of(basis: &ProductBasis, state: &QuantumState, edge: usize) -> f64 {
    let p = phase_distribution(basis, state);
    let total: f64 = p.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    p[..=edge.min(p.len() - 1)].iter().sum::<f64>() / total
}

/// Parameters of the bound-state test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRule {
    /// Minimum phase weight inside the well.
    pub in_well_threshold: f64,
}

impl Default for BoundRule {
    fn default() -> Self {
        Self { in_well_threshold: 0.9 }
    }
}

/// Result of the bound-state classification at one bias.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Census {
    /// Index (into the classified list) of the state whose moments dress
    /// the barrier.
    pub reference: Option<usize>,
    pub reference_moments: Moments,
    pub barrier: Barrier,
    pub in_well: Vec<f64>,
    pub bound: Vec<bool>,
}

/// Mark bound states.
///
/// The barrier is that of the effective potential dressed by the field
/// moments of the reference state, the lowest state with at least the
/// threshold weight inside the bare well. A state is bound when its weight
/// left of that barrier meets the threshold and its energy lies below the
/// barrier top.
pub fn classify_bound(sys: &CoupledSystem, pairs: &mut [EigenPair], rule: &BoundRule) -> Census {
    let grid = sys.basis.grid();
    let bare = effective_potential(&sys.coeffs, &Moments::default(), &grid);
    let bare_barrier = find_barrier(&bare, &grid, sys.coeffs.phi_j);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[a].energy.total_cmp(&pairs[b].energy));
    let reference = order.iter().copied().find(|&i| {
        weight_left_of(&sys.basis, &pairs[i].state, bare_barrier.index) >= rule.in_well_threshold
    });
    let reference_moments = reference
        .map(|i| moments(&sys.basis, &pairs[i].state.amplitudes))
        .unwrap_or_default();
    let dressed = effective_potential(&sys.coeffs, &reference_moments, &grid);
    let barrier = find_barrier(&dressed, &grid, sys.coeffs.phi_j);
    let mut in_well = Vec::with_capacity(pairs.len());
    let mut bound = Vec::with_capacity(pairs.len());
    for p in pairs.iter_mut() {
        let w = weight_left_of(&sys.basis, &p.state, barrier.index);
        p.bound = reference.is_some()
            && barrier.exists
            && w >= rule.in_well_threshold
            && p.energy < barrier.height;
        in_well.push(w);
        bound.push(p.bound);
    }
    Census { reference, reference_moments, barrier, in_well, bound }
}

/// Normal modes of the junction-resonator system linearized about φ̂_J.
#[derive(Clone, Debug)]
pub struct NormalModes {
    /// Mode frequencies (rad/ns), ascending.
    pub frequencies: [f64; 2],
    /// Coefficients of the upper-mode annihilation operator on
    /// (φ − φ̂_J, Q, p, P) with Q = (a + a†)/√2, P = (a − a†)/(√2 i).
    pub upper: [C; 4],
    pub lower: [C; 4],
}

/// Quadratic part of H on ξ = (φ − φ̂_J, Q, p, P), H ≈ ½ ξᵀ A ξ.
fn quadratic_form(c: &HamiltonianCoefficients) -> Matrix4<f64> {
    let k = c.e_j * c.phi_j.cos();
    let w = c.omega + c.eta * c.phi_j.cos();
    let l = SQRT_2 * c.lambda_scaled;
    let m = -SQRT_2 * c.mu_scaled;
    Matrix4::new(
        k, 0.0, 0.0, m, //
        0.0, w, l, 0.0, //
        0.0, l, 2.0 * c.kinetic, 0.0, //
        m, 0.0, 0.0, w,
    )
}

pub fn normal_modes(c: &HamiltonianCoefficients) -> Result<NormalModes> {
    let a = quadratic_form(c);
    let j = Matrix4::new(
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0, //
        -1.0, 0.0, 0.0, 0.0, //
        0.0, -1.0, 0.0, 0.0,
    );
    // an annihilator b = cᵀξ with [b, H] = Ω b satisfies A J c = iΩ c
    let aj = a * j;
    let ev = aj.complex_eigenvalues();
    let mut freqs: Vec<f64> = ev.iter().filter(|z| z.im > 0.0).map(|z| z.im).collect();
    if freqs.len() != 2 {
        return Err(Error::Undefined("linearized well is not stable".into()));
    }
    freqs.sort_by(f64::total_cmp);
    let ajc: DMatrix<C> = DMatrix::from_fn(4, 4, |r, s| C::new(aj[(r, s)], 0.0));
    let jc: DMatrix<C> = DMatrix::from_fn(4, 4, |r, s| C::new(j[(r, s)], 0.0));
    let coeff = |w: f64| -> Result<[C; 4]> {
        let m = &ajc - DMatrix::<C>::identity(4, 4) * C::new(0.0, w);
        let svd = m.svd(false, true);
        let vt = svd.v_t.ok_or_else(|| Error::Undefined("normal mode SVD".into()))?;
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .unwrap();
        let v: Vec<C> = vt.row(imin).iter().map(|z| z.conj()).collect();
        let cv = nalgebra::DVector::from_vec(v);
        let s = (cv.transpose() * &jc * cv.map(|z| z.conj()))[(0, 0)] * C::new(0.0, 1.0);
        if s.re <= 0.0 {
            return Err(Error::Undefined("normal mode has wrong symplectic sign".into()));
        }
        let f = 1.0 / s.re.sqrt();
        Ok([cv[0] * f, cv[1] * f, cv[2] * f, cv[3] * f])
    };
    let lower = coeff(freqs[0])?;
    let upper = coeff(freqs[1])?;
    Ok(NormalModes { frequencies: [freqs[0], freqs[1]], upper, lower })
}

/// ⟨b†b⟩ for a normal-mode annihilator with the given coefficients.
pub fn mode_occupation(sys: &CoupledSystem, coeffs: &[C; 4], state: &QuantumState) -> f64 {
    let basis = &sys.basis;
    let nf = basis.n_fock;
    let psi = &state.amplitudes;
    let grid = basis.grid();
    let p = momentum(basis.n_phi, basis.d_phi);
    let s = 1.0 / SQRT_2;
    let mut out = vec![C::new(0.0, 0.0); psi.len()];
    // φ − φ̂_J and p act on the grid index, Q and P on the Fock index
    let mut col = vec![C::new(0.0, 0.0); basis.n_phi];
    for n in 0..nf {
        for (k, c) in col.iter_mut().enumerate() {
            *c = psi[k * nf + n];
        }
        let pc = p.matvec(&col);
        for k in 0..basis.n_phi {
            out[k * nf + n] += coeffs[0] * (grid[k] - sys.coeffs.phi_j) * col[k] + coeffs[2] * pc[k];
        }
    }
    for block in 0..basis.n_phi {
        let b = &psi[block * nf..(block + 1) * nf];
        for n in 0..nf {
            // Q = (a + a†)/√2, P = −i(a − a†)/√2
            let up = if n + 1 < nf { (n as f64 + 1.0).sqrt() * b[n + 1] } else { C::new(0.0, 0.0) };
            let down = if n > 0 { (n as f64).sqrt() * b[n - 1] } else { C::new(0.0, 0.0) };
            let q = (up + down) * s;
            let pp = (up - down) * C::new(0.0, -s);
            out[block * nf + n] += coeffs[1] * q + coeffs[3] * pp;
        }
    }
    let n2 = linalg::norm(psi).powi(2);
    linalg::norm(&out).powi(2) / n2
}

/// One row of a band-structure table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelInfo {
    pub index: usize,
    /// rad/ns
    pub energy: f64,
    pub mean_photon: f64,
    pub upper_quanta: f64,
    pub band: usize,
    pub in_well: f64,
    pub bound: bool,
}

#[derive(Clone, Debug)]
pub struct BiasSpectrum {
    pub bias: f64,
    pub pairs: Vec<EigenPair>,
    pub levels: Vec<LevelInfo>,
    pub census: Census,
    pub modes: NormalModes,
}

impl BiasSpectrum {
    /// Bound states in the lowest band (no upper-polariton quantum).
    pub fn lowest_band_bound(&self) -> usize {
        self.levels.iter().filter(|l| l.bound && l.band == 0).count()
    }

    pub fn bound_count(&self) -> usize {
        self.levels.iter().filter(|l| l.bound).count()
    }

    /// Bound states of the lowest band, ascending in energy.
    pub fn lowest_band_states(&self) -> Vec<&EigenPair> {
        self.levels
            .iter()
            .filter(|l| l.bound && l.band == 0)
            .map(|l| &self.pairs[l.index])
            .collect()
    }
}

/// Diagonalize near the well, classify and label every level.
///
/// Bands are labelled by the rounded occupation of the upper normal mode:
/// the lowest band is the ladder of the lower polariton.
pub fn analyze(sys: &CoupledSystem, n_states: usize, rule: &BoundRule) -> Result<BiasSpectrum> {
    let mut pairs = well_spectrum(sys, n_states)?;
    let census = classify_bound(sys, &mut pairs, rule);
    let modes = normal_modes(&sys.coeffs)?;
    let levels = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let up = mode_occupation(sys, &modes.upper, &p.state);
            LevelInfo {
                index: i,
                energy: p.energy,
                mean_photon: p.mean_photon,
                upper_quanta: up,
                band: up.round().max(0.0) as usize,
                in_well: census.in_well[i],
                bound: p.bound,
            }
        })
        .collect();
    Ok(BiasSpectrum { bias: sys.coeffs.bias, pairs, levels, census, modes })
}

/// Coupling of the output line to the 0 → 1 transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingResult {
    /// C_out·sqrt(ħω_out²Z_out/2) (C)
    pub alpha: f64,
    /// V
    pub beta1: f64,
    /// V
    pub beta2: f64,
    /// ⟨0|−i∂/∂φ|1⟩
    pub q_phi_01: C,
    /// ⟨0|a + a†|1⟩
    pub x_01: C,
    /// Drive frequency (rad/ns)
    pub omega_out: f64,
    /// Coupling strength Ω (rad/ns)
    pub omega: C,
}

/// α, β1, β2 for a drive at `omega_out` (rad/ns).
pub fn drive_weights(mode: &ModeSolution, params: &CircuitParams, omega_out: f64) -> (f64, f64, f64) {
    let w = omega_out * 1e9;
    let alpha = params.c_out * (HBAR * w * w * params.z_out / 2.0).sqrt();
    let den = 2.0 * (mode.c_c * mode.c_c - mode.c_e * mode.c_0);
    let beta1 = crate::units::CHARGE_2E * (mode.c_e - mode.c_c) / den;
    let s1 = (HBAR / (2.0 * mode.omega * mode.l_e)).sqrt();
    let beta2 = s1 * (mode.c_0 - mode.c_c) / den;
    (alpha, beta1, beta2)
}

/// Ω = α(β1⟨0|q_φ|1⟩ + β2⟨0|a+a†|1⟩)/ħ between two states. `omega_out`
/// defaults to the transition frequency.
pub fn external_coupling(
    sys: &CoupledSystem,
    ground: &EigenPair,
    excited: &EigenPair,
    omega_out: Option<f64>,
) -> CouplingResult {
    let w_out = omega_out.unwrap_or(excited.energy - ground.energy);
    let (alpha, beta1, beta2) = drive_weights(&sys.mode, &sys.params, w_out);
    let basis = &sys.basis;
    let id = DMatrix::<C>::identity(basis.n_fock, basis.n_fock);
    let q = crate::hamiltonian::kron(&momentum(basis.n_phi, basis.d_phi), &id);
    let ones = vec![1.0; basis.n_phi];
    let x = crate::hamiltonian::kron_diag(&ones, &crate::hamiltonian::Ladder::new(basis.n_fock).x);
    let g = &ground.state.amplitudes;
    let e = &excited.state.amplitudes;
    let q01 = dot(g, &q.matvec(e));
    let x01 = dot(g, &x.matvec(e));
    let omega = (q01 * beta1 + x01 * beta2) * (alpha / HBAR / 1e9);
    CouplingResult { alpha, beta1, beta2, q_phi_01: q01, x_01: x01, omega_out: w_out, omega }
}

/// Coupling from the two lowest bound states of the lowest band.
pub fn transition_coupling(spec: &BiasSpectrum, sys: &CoupledSystem, omega_out: Option<f64>) -> Result<CouplingResult> {
    let states = spec.lowest_band_states();
    if states.len() < 2 {
        return Err(Error::NoTransition(states.len()));
    }
    Ok(external_coupling(sys, states[0], states[1], omega_out))
}

/// Second-mode admixture estimate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidityResult {
    /// rad/ns
    pub g_1a_1b: f64,
    pub g_0_1b: f64,
    pub delta_1a_1b: f64,
    pub delta_0_1b: f64,
    pub ratio_1a_1b: f64,
    pub ratio_0_1b: f64,
    /// (g_1a,1b/Δ_1a,1b)²
    pub est_population: f64,
    /// The direct mode-mode coupling is not included.
    pub mode_mode_coupling_included: bool,
}

/// Lowest two well-localized eigenpairs of a single-mode system.
fn two_lowest_in_well(sys: &CoupledSystem, n_states: usize) -> Result<(EigenPair, EigenPair)> {
    let mut pairs = well_spectrum(sys, n_states)?;
    let census = classify_bound(sys, &mut pairs, &BoundRule::default());
    let mut local: Vec<(usize, f64)> = census
        .in_well
        .iter()
        .enumerate()
        .filter(|(_, &w)| w >= BoundRule::default().in_well_threshold)
        .map(|(i, _)| (i, pairs[i].energy))
        .collect();
    local.sort_by(|a, b| a.1.total_cmp(&b.1));
    if local.len() < 2 {
        return Err(Error::NoTransition(local.len()));
    }
    let (i0, i1) = (local[0].0, local[1].0);
    Ok((pairs[i0].clone(), pairs[i1].clone()))
}

/// Couplings between the first excited state of the fundamental mode and
/// that of the second mode, using product-state ansätze. Each mode with the
/// junction is diagonalized on its own; the second mode's coupling terms
/// then act on the fundamental-mode states padded with its vacuum.
pub fn single_mode_validity(
    params: &CircuitParams,
    bias: f64,
    n_phi: usize,
    n_fock: usize,
    n_states: usize,
) -> Result<ValidityResult> {
    let sys_a = CoupledSystem::new(params, bias, n_phi, n_fock)?;
    let mode_b = solve_mode(&sys_a.derived, bias, 1)?;
    let coeffs_b = coefficients(&mode_b, &sys_a.derived);
    let basis = sys_a.basis.clone();
    let sys_b = CoupledSystem {
        params: params.clone(),
        derived: sys_a.derived.clone(),
        mode: mode_b,
        coeffs: coeffs_b.clone(),
        basis: basis.clone(),
        hamiltonian: assemble_hamiltonian(&coeffs_b, &basis)?,
    };
    let (a0, a1) = two_lowest_in_well(&sys_a, n_states)?;
    let (_, b1) = two_lowest_in_well(&sys_b, n_states)?;
    let h_b = assemble_terms(&coeffs_b, &basis, Terms::FIELD_ONLY)?;
    let nf = basis.n_fock;
    // ψ_a ⊗ |0_b⟩ after projecting mode a onto its vacuum for the overlap
    // with ψ_a^0 ψ_{b,JJ}^1
    let pad = |s: &EigenPair| -> Vec<C> {
        let mut v = vec![C::new(0.0, 0.0); s.state.amplitudes.len()];
        for k in 0..basis.n_phi {
            v[k * nf] = s.state.amplitudes[k * nf];
        }
        v
    };
    let g1 = dot(&b1.state.amplitudes, &h_b.matrix.matvec(&pad(&a1))).norm();
    let g0 = dot(&b1.state.amplitudes, &h_b.matrix.matvec(&pad(&a0))).norm();
    let d1 = b1.energy - a1.energy;
    let d0 = b1.energy - a0.energy;
    let r1 = (g1 / d1).abs();
    Ok(ValidityResult {
        g_1a_1b: g1,
        g_0_1b: g0,
        delta_1a_1b: d1,
        delta_0_1b: d0,
        ratio_1a_1b: r1,
        ratio_0_1b: (g0 / d0).abs(),
        est_population: r1 * r1,
        mode_mode_coupling_included: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_density_normalization() {
        let b = ProductBasis::new(32, 3, -1.0, 1.0).unwrap();
        let amps: Vec<C> = (0..b.dim()).map(|i| C::new((i % 5) as f64, 0.5)).collect();
        let s = QuantumState::new(amps).normalized();
        let p = phase_distribution(&b, &s);
        let total: f64 = p.iter().sum::<f64>() * b.d_phi;
        assert!((total - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn normal_modes_of_decoupled_system() {
        let d = derive_circuit(&CircuitParams::reference()).unwrap();
        let m = solve_mode(&d, 0.9, 0).unwrap();
        let mut c = coefficients(&m, &d);
        c.lambda_scaled = 0.0;
        c.mu_scaled = 0.0;
        let nm = normal_modes(&c).unwrap();
        let wf = c.omega + c.eta * c.phi_j.cos();
        let wp = c.plasma_frequency();
        let mut want = [wf, wp];
        want.sort_by(f64::total_cmp);
        assert!((nm.frequencies[0] - want[0]).abs() < 1e-9 * want[0]);
        assert!((nm.frequencies[1] - want[1]).abs() < 1e-9 * want[1]);
    }
}
