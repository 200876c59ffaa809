//! Hamiltonian coefficients and operators on the phase grid ⊗ Fock basis.
//!
//! Product states are stored phase-major: index = i_phi·n_fock + n.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{lumped_constants, solve_wavenumber, DerivedCircuit, ModeSolution};
use crate::error::{Error, Result};
use crate::linalg::BandMatrix;
use crate::units::{from_si_rate, CHARGE_2E, HBAR};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

/// Coefficients of the single-mode Hamiltonian, in rad/ns unless noted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianCoefficients {
    pub bias: f64,
    pub phi_j: f64,
    pub omega: f64,
    pub eta: f64,
    pub kappa: f64,
    /// λ·sqrt(ħ/2ωL_E)
    pub lambda_scaled: f64,
    /// μ·sqrt(ħωL_E/2)
    pub mu_scaled: f64,
    /// χ·sqrt(ħωL_E/2)
    pub chi_scaled: f64,
    pub e_j: f64,
    /// Junction mass ħ²(C_0 − C_c²/C_E)/(2e)² (J·s²).
    pub mass: f64,
    /// ħ/2M, the prefactor of −∂²/∂φ².
    pub kinetic: f64,
    /// Charge zero-point scale sqrt(ħ/2ωL_E) (C).
    pub charge_scale: f64,
    /// Flux zero-point scale sqrt(ħωL_E/2) (Wb).
    pub flux_scale: f64,
}

pub fn coefficients(mode: &ModeSolution, derived: &DerivedCircuit) -> HamiltonianCoefficients {
    let e_j = derived.e_j;
    let q = CHARGE_2E;
    let c = mode.kd.cos();
    let cj = mode.phi_j.cos();
    let w = mode.omega;
    let le = mode.l_e;
    let eta = 0.5 * e_j * q * q / (HBAR * HBAR) * c * c * le * w;
    let kappa = -0.25 * e_j * q.powi(4) / HBAR.powi(3) * c.powi(4) * le * le * w * w;
    let lambda = -(q / HBAR) * mode.c_c / (mode.c_0 * mode.c_e - mode.c_c * mode.c_c);
    let mu = -(e_j / HBAR) * (q / HBAR) * c * cj;
    let chi = e_j / (4.0 * HBAR) * q.powi(3) / (HBAR * HBAR) * c.powi(3) * le * w * cj;
    let s1 = (HBAR / (2.0 * w * le)).sqrt();
    let s2 = (HBAR * w * le / 2.0).sqrt();
    let c_eff = mode.c_0 - mode.c_c * mode.c_c / mode.c_e;
    let mass = HBAR * HBAR * c_eff / (q * q);
    HamiltonianCoefficients {
        bias: mode.bias,
        phi_j: mode.phi_j,
        omega: from_si_rate(w),
        eta: from_si_rate(eta),
        kappa: from_si_rate(kappa),
        lambda_scaled: from_si_rate(lambda * s1),
        mu_scaled: from_si_rate(mu * s2),
        chi_scaled: from_si_rate(chi * s2),
        e_j: from_si_rate(e_j / HBAR),
        mass,
        kinetic: from_si_rate(HBAR / (2.0 * mass)),
        charge_scale: s1,
        flux_scale: s2,
    }
}

impl HamiltonianCoefficients {
    /// Bare washboard −E_J(cos φ + Iφ).
    pub fn washboard(&self, phi: f64) -> f64 {
        -self.e_j * (phi.cos() + self.bias * phi)
    }

    /// Small-oscillation frequency at the well bottom, sqrt(2·kinetic·E_J cos φ̂_J).
    pub fn plasma_frequency(&self) -> f64 {
        (2.0 * self.kinetic * self.e_j * self.phi_j.cos()).sqrt()
    }
}

/// Phase grid times truncated Fock space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductBasis {
    pub n_fock: usize,
    pub n_phi: usize,
    pub phi_min: f64,
    pub phi_max: f64,
    pub d_phi: f64,
}

impl ProductBasis {
    /// Interior grid of `n_phi` points with Dirichlet edges at phi_min and
    /// phi_max.
    pub fn new(n_phi: usize, n_fock: usize, phi_min: f64, phi_max: f64) -> Result<Self> {
        if n_fock < 1 {
            return Err(Error::Parameter("n_fock must be at least 1".into()));
        }
        if n_phi < 16 {
            return Err(Error::Parameter(format!("n_phi must be at least 16, got {n_phi}")));
        }
        if !(phi_max > phi_min) {
            return Err(Error::Parameter("empty phase box".into()));
        }
        Ok(Self {
            n_fock,
            n_phi,
            phi_min,
            phi_max,
            d_phi: (phi_max - phi_min) / (n_phi + 1) as f64,
        })
    }

    /// Box of length 2.5π starting a quarter period left of the uphill
    /// barrier maximum at −π − φ̂_J, leaving a single well.
    pub fn around_well(phi_j: f64, n_phi: usize, n_fock: usize) -> Result<Self> {
        let lo = -1.25 * PI - phi_j;
        Self::new(n_phi, n_fock, lo, lo + 2.5 * PI)
    }

    pub fn dim(&self) -> usize {
        self.n_phi * self.n_fock
    }

    pub fn index(&self, i_phi: usize, n: usize) -> usize {
        i_phi * self.n_fock + n
    }

    pub fn phi(&self, i_phi: usize) -> f64 {
        self.phi_min + (i_phi + 1) as f64 * self.d_phi
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.n_phi).map(|i| self.phi(i)).collect()
    }

    /// Index of the first grid point at or beyond φ.
    pub fn locate(&self, phi: f64) -> usize {
        let x = ((phi - self.phi_min) / self.d_phi - 1.0).ceil();
        x.clamp(0.0, self.n_phi as f64) as usize
    }
}

/// Amplitudes over a [`ProductBasis`].
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    pub amplitudes: Vec<C>,
}

impl QuantumState {
    pub fn new(amplitudes: Vec<C>) -> Self {
        Self { amplitudes }
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.amplitudes)
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self.amplitudes.iter_mut().for_each(|a| *a /= n);
        }
        self
    }

    /// Product of a junction wave function and a Fock-space vector.
    pub fn product(junction: &[C], field: &[C]) -> Self {
        let mut amps = Vec::with_capacity(junction.len() * field.len());
        for j in junction {
            for f in field {
                amps.push(j * f);
            }
        }
        Self { amplitudes: amps }
    }
}

/// Matrix on the product space with a record of whether it is Hermitian.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    pub matrix: BandMatrix,
    pub hermitian: bool,
}

impl OperatorMatrix {
    pub fn hermitian(matrix: BandMatrix) -> Self {
        Self { matrix, hermitian: true }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// max|A − A†| / max|A|
    pub fn hermitian_defect(&self) -> f64 {
        let m = self.matrix.max_abs();
        if m == 0.0 {
            return 0.0;
        }
        self.matrix.hermitian_defect() / m
    }

    pub fn expectation(&self, state: &QuantumState) -> C {
        self.matrix.expectation(&state.amplitudes, &state.amplitudes)
    }
}

/// Grid-space operators from a five-point stencil (offsets −2..=2).
fn stencil(n: usize, w: [C; 5]) -> BandMatrix {
    let mut m = BandMatrix::zeros(n, 2);
    for i in 0..n {
        for (o, &c) in w.iter().enumerate() {
            let j = i as isize + o as isize - 2;
            if j >= 0 && (j as usize) < n && c != ZERO {
                m.add(i, j as usize, c);
            }
        }
    }
    m
}

/// Fourth-order −∂²/∂φ² with Dirichlet edges.
pub fn neg_laplacian(n: usize, h: f64) -> BandMatrix {
    let s = 1.0 / (h * h);
    let w = [1.0 / 12.0, -4.0 / 3.0, 2.5, -4.0 / 3.0, 1.0 / 12.0].map(|x| C::new(x * s, 0.0));
    stencil(n, w)
}

/// Fourth-order −i∂/∂φ.
pub fn momentum(n: usize, h: f64) -> BandMatrix {
    let s = 1.0 / h;
    let w = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0].map(|x| C::new(0.0, -x * s));
    stencil(n, w)
}

/// grid ⊗ fock on the phase-major product space.
pub fn kron(grid: &BandMatrix, fock: &DMatrix<C>) -> BandMatrix {
    let nf = fock.nrows();
    let np = grid.dim();
    let kg = grid.bandwidth();
    let mut trip = Vec::new();
    for i in 0..np {
        for j in i.saturating_sub(kg)..(i + kg + 1).min(np) {
            let g = grid.get(i, j);
            if g == ZERO {
                continue;
            }
            for a in 0..nf {
                for b in 0..nf {
                    let f = fock[(a, b)];
                    if f != ZERO {
                        trip.push((i * nf + a, j * nf + b, g * f));
                    }
                }
            }
        }
    }
    BandMatrix::from_triplets(np * nf, &trip)
}

/// diag(values) ⊗ fock
pub fn kron_diag(values: &[f64], fock: &DMatrix<C>) -> BandMatrix {
    kron(&BandMatrix::from_diagonal(values), fock)
}

/// Ladder operators on an n-level Fock space.
pub struct Ladder {
    pub a: DMatrix<C>,
    pub adag: DMatrix<C>,
    pub n: DMatrix<C>,
    /// a + a†
    pub x: DMatrix<C>,
    /// i(a − a†)
    pub y: DMatrix<C>,
    /// a†a†aa
    pub kerr: DMatrix<C>,
}

impl Ladder {
    pub fn new(n_fock: usize) -> Self {
        let a = DMatrix::from_fn(n_fock, n_fock, |i, j| {
            if j == i + 1 {
                C::new((j as f64).sqrt(), 0.0)
            } else {
                ZERO
            }
        });
        let adag = a.adjoint();
        let n = &adag * &a;
        let x = &a + &adag;
        let y = (&a - &adag) * C::new(0.0, 1.0);
        let kerr = &adag * &adag * &a * &a;
        Self { a, adag, n, x, y, kerr }
    }
}

/// Junction-sector operators lifted to the product space.
pub struct JunctionOperators {
    /// (ħ/2M)(−∂²/∂φ²)
    pub kinetic: OperatorMatrix,
    pub cos_phi: OperatorMatrix,
    pub phi: OperatorMatrix,
    /// −i∂/∂φ (units of ħ)
    pub q_phi: OperatorMatrix,
}

pub fn junction_operators(basis: &ProductBasis, kinetic: f64) -> JunctionOperators {
    let id = DMatrix::<C>::identity(basis.n_fock, basis.n_fock);
    let grid = basis.grid();
    let cos: Vec<f64> = grid.iter().map(|x| x.cos()).collect();
    JunctionOperators {
        kinetic: OperatorMatrix::hermitian(kron(
            &neg_laplacian(basis.n_phi, basis.d_phi).scale(C::new(kinetic, 0.0)),
            &id,
        )),
        cos_phi: OperatorMatrix::hermitian(kron_diag(&cos, &id)),
        phi: OperatorMatrix::hermitian(kron_diag(&grid, &id)),
        q_phi: OperatorMatrix::hermitian(kron(&momentum(basis.n_phi, basis.d_phi), &id)),
    }
}

/// Field-sector operators lifted to the product space. `x` and `y` are the
/// dimensionless quadratures; multiply by the charge and flux scales of the
/// coefficients for q_field and phi_field.
pub struct FieldOperators {
    pub a: OperatorMatrix,
    pub n: OperatorMatrix,
    pub x: OperatorMatrix,
    pub y: OperatorMatrix,
    pub kerr: OperatorMatrix,
}

pub fn field_operators(basis: &ProductBasis) -> FieldOperators {
    let l = Ladder::new(basis.n_fock);
    let ones = vec![1.0; basis.n_phi];
    let lift = |m: &DMatrix<C>| kron_diag(&ones, m);
    FieldOperators {
        a: OperatorMatrix { matrix: lift(&l.a), hermitian: false },
        n: OperatorMatrix::hermitian(lift(&l.n)),
        x: OperatorMatrix::hermitian(lift(&l.x)),
        y: OperatorMatrix::hermitian(lift(&l.y)),
        kerr: OperatorMatrix::hermitian(lift(&l.kerr)),
    }
}

/// Which parts of the Hamiltonian to assemble.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Terms {
    pub junction: bool,
    pub field: bool,
}

impl Terms {
    pub const ALL: Terms = Terms { junction: true, field: true };
    /// Only the terms that involve the resonator mode.
    pub const FIELD_ONLY: Terms = Terms { junction: false, field: true };
}

/// Full Hamiltonian on the product basis, in rad/ns.
pub fn assemble_hamiltonian(coeffs: &HamiltonianCoefficients, basis: &ProductBasis) -> Result<OperatorMatrix> {
    assemble_terms(coeffs, basis, Terms::ALL)
}

pub fn assemble_terms(
    coeffs: &HamiltonianCoefficients,
    basis: &ProductBasis,
    terms: Terms,
) -> Result<OperatorMatrix> {
    let nf = basis.n_fock;
    let l = Ladder::new(nf);
    let id = DMatrix::<C>::identity(nf, nf);
    let grid = basis.grid();
    let cos: Vec<f64> = grid.iter().map(|x| x.cos()).collect();
    let sin: Vec<f64> = grid.iter().map(|x| (x - coeffs.phi_j).sin()).collect();
    let re = |x: f64| C::new(x, 0.0);

    let mut h = BandMatrix::zeros(basis.dim(), 0);
    if terms.junction {
        let kin = neg_laplacian(basis.n_phi, basis.d_phi).scale(re(coeffs.kinetic));
        let pot: Vec<f64> = grid.iter().map(|&x| coeffs.washboard(x)).collect();
        let hj = kin.axpy(re(1.0), &BandMatrix::from_diagonal(&pot))?;
        h = h.axpy(re(1.0), &kron(&hj, &id))?;
    }
    if terms.field {
        let dressed: Vec<f64> = cos.iter().map(|c| coeffs.omega + coeffs.eta * c).collect();
        let sym = (&l.n * &l.y + &l.y * &l.n) * re(0.5);
        let p = momentum(basis.n_phi, basis.d_phi);
        let pieces = [
            (re(1.0), kron_diag(&dressed, &l.n)),
            (re(coeffs.kappa), kron_diag(&cos, &l.kerr)),
            (re(coeffs.lambda_scaled), kron(&p, &l.x)),
            (re(coeffs.mu_scaled), kron_diag(&sin, &l.y)),
            (re(coeffs.chi_scaled), kron_diag(&sin, &sym)),
        ];
        for (c, m) in pieces {
            if c != ZERO {
                h = h.axpy(c, &m)?;
            }
        }
    }
    let op = OperatorMatrix::hermitian(h);
    if op.dim() != basis.dim() {
        return Err(Error::Assembly("operator and basis dimensions differ".into()));
    }
    Ok(op)
}

/// Time-independent part of the classical drive, αβ(β1 q_φ + β2(a + a†))/ħ,
/// in rad/ns. Here q_φ is the dimensionless −i∂/∂φ, so `alpha·beta1` and
/// `alpha·beta2` are both energies (J).
pub fn drive_operator(basis: &ProductBasis, alpha: f64, beta: f64, beta1: f64, beta2: f64) -> OperatorMatrix {
    let l = Ladder::new(basis.n_fock);
    let id = DMatrix::<C>::identity(basis.n_fock, basis.n_fock);
    let ones = vec![1.0; basis.n_phi];
    let scale = alpha * beta / HBAR / 1e9;
    let p = kron(&momentum(basis.n_phi, basis.d_phi), &id).scale(C::new(scale * beta1, 0.0));
    let x = kron_diag(&ones, &l.x).scale(C::new(scale * beta2, 0.0));
    OperatorMatrix::hermitian(p.axpy(C::new(1.0, 0.0), &x).expect("same basis"))
}

/// Cross-Kerr matrix κ_ij (rad/ns) for the listed modes.
///
/// Each mode contributes cos²(k_i d)·L_E,i·ω_i, so κ_ii reduces to the
/// single-mode Kerr coefficient times cos φ̂_J.
pub fn kerr_matrix(derived: &DerivedCircuit, bias: f64, modes: &[usize]) -> Result<DMatrix<f64>> {
    let sols = modes
        .iter()
        .map(|&j| {
            let kd = solve_wavenumber(derived, bias, j)?;
            lumped_constants(derived, bias, kd, j)
        })
        .collect::<Result<Vec<_>>>()?;
    let q = CHARGE_2E;
    let pref = -derived.e_j / (4.0 * HBAR) * q.powi(4) / (HBAR * HBAR);
    let f: Vec<f64> = sols
        .iter()
        .map(|m| m.kd.cos().powi(2) * m.l_e * m.omega)
        .collect();
    let cphi = sols.first().map_or(1.0, |m| m.phi_j.cos());
    Ok(DMatrix::from_fn(modes.len(), modes.len(), |i, j| {
        from_si_rate(pref * f[i] * f[j] * cphi)
    }))
}
