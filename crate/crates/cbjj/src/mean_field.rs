//! Field moments of a state and the resulting effective junction potential.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::hamiltonian::{HamiltonianCoefficients, ProductBasis};

type C = Complex64;

/// Resonator moments of a (possibly unnormalized) state, normalized by its
/// own norm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub norm2: f64,
    /// ⟨a†a⟩
    pub n_bar: f64,
    /// ⟨a†a†aa⟩
    pub kerr: f64,
    /// ⟨i(a − a†)⟩, the field flux in units of its zero-point scale
    pub y: f64,
}

pub fn moments(basis: &ProductBasis, amps: &[C]) -> Moments {
    let nf = basis.n_fock;
    let mut norm2 = 0.0;
    let mut n_bar = 0.0;
    let mut kerr = 0.0;
    let mut y = 0.0;
    for block in amps.chunks_exact(nf) {
        for (n, a) in block.iter().enumerate() {
            let p = a.norm_sqr();
            let nn = n as f64;
            norm2 += p;
            n_bar += nn * p;
            kerr += nn * (nn - 1.0) * p;
            if n + 1 < nf {
                // ⟨ψ|i(a − a†)|ψ⟩ = −2 Im Σ √(n+1) ψ_n* ψ_{n+1}
                y -= 2.0 * (n as f64 + 1.0).sqrt() * (a.conj() * block[n + 1]).im;
            }
        }
    }
    if norm2 > 0.0 {
        n_bar /= norm2;
        kerr /= norm2;
        y /= norm2;
    }
    Moments { norm2, n_bar, kerr, y }
}

/// Mean-field junction potential (rad/ns) on the basis grid:
/// ωn̄ − (E_J − ηn̄ − κ⟨a†a†aa⟩) cos φ − (E_J I − μ'⟨Y⟩ − χ'n̄⟨Y⟩) φ.
///
/// The field-dependent signs follow the assembled Hamiltonian, in which the
/// η, κ terms enter with + cos φ and the μ, χ terms as + sin(φ − φ̂_J)·Y,
/// linearized about the well.
pub fn effective_potential(coeffs: &HamiltonianCoefficients, m: &Moments, grid: &[f64]) -> Vec<f64> {
    let cos_amp = coeffs.e_j - coeffs.eta * m.n_bar - coeffs.kappa * m.kerr;
    let tilt = coeffs.e_j * coeffs.bias - coeffs.mu_scaled * m.y - coeffs.chi_scaled * m.n_bar * m.y;
    grid.iter()
        .map(|&x| coeffs.omega * m.n_bar - cos_amp * x.cos() - tilt * x)
        .collect()
}

/// Barrier on the downhill side of the well.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Barrier {
    /// Grid index of the well minimum.
    pub well_index: usize,
    /// Grid index of the barrier maximum.
    pub index: usize,
    pub phi: f64,
    pub height: f64,
    /// False when the potential rises monotonically to the box edge or has
    /// no interior maximum.
    pub exists: bool,
}

/// Locate the well minimum near φ̂_J and climb to the first maximum on its
/// right.
pub fn find_barrier(u: &[f64], grid: &[f64], phi_j: f64) -> Barrier {
    let n = u.len();
    let mut im = 0;
    let mut best = f64::INFINITY;
    for (i, (&x, &v)) in grid.iter().zip(u).enumerate() {
        if (x - phi_j).abs() < 1.0 && v < best {
            best = v;
            im = i;
        }
    }
    let mut j = im;
    while j + 1 < n && u[j + 1] >= u[j] {
        j += 1;
    }
    Barrier {
        well_index: im,
        index: j,
        phi: grid[j],
        height: u[j],
        exists: j + 1 < n && j > im,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_fock_state() {
        let b = ProductBasis::new(16, 4, 0.0, 1.0).unwrap();
        let mut amps = vec![C::new(0.0, 0.0); b.dim()];
        amps[b.index(3, 2)] = C::new(2.0, 0.0);
        let m = moments(&b, &amps);
        assert!((m.norm2 - 4.0).abs() < 1e-14);
        assert!((m.n_bar - 2.0).abs() < 1e-14);
        assert!((m.kerr - 2.0).abs() < 1e-14);
        assert!(m.y.abs() < 1e-14);
    }

    #[test]
    fn quadrature_sign() {
        // compare with the dense quadrature on (|0⟩ + i|1⟩)/√2
        let b = ProductBasis::new(16, 2, 0.0, 1.0).unwrap();
        let mut amps = vec![C::new(0.0, 0.0); b.dim()];
        let s = 0.5f64.sqrt();
        amps[0] = C::new(s, 0.0);
        amps[1] = C::new(0.0, s);
        let l = crate::hamiltonian::Ladder::new(2);
        let v = nalgebra::DVector::from_vec(vec![amps[0], amps[1]]);
        let want = (v.adjoint() * &l.y * &v)[(0, 0)].re;
        assert!((moments(&b, &amps).y - want).abs() < 1e-14);
    }
}
