//! Driven propagation with a time-dependent complex absorbing potential.
//!
//! The state obeys i dψ/dt = (H + f(t)·D − iV(t))ψ, where V is placed
//! beyond the classical turning point of the mean-field junction potential
//! and recomputed from the current state every step. Norm lost to V counts
//! as a switching event.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{
    momentum, neg_laplacian, HamiltonianCoefficients, OperatorMatrix, ProductBasis, QuantumState,
};
use crate::linalg::{self, BandLu, CsrMatrix};
use crate::mean_field::{find_barrier, moments, Moments};

pub use crate::mean_field::effective_potential;

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

/// Polynomial absorbing potential ramping from the turning point to the
/// box edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapConfig {
    /// Value at the box edge (rad/ns).
    pub strength: f64,
    pub power: f64,
    /// Distance (rad) between turning point and onset.
    pub onset_margin: f64,
}

impl Default for CapConfig {
    fn default() -> Self {
        Self { strength: 300.0, power: 2.0, onset_margin: 0.0 }
    }
}

impl CapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.strength >= 0.0) || !(self.power >= 1.0) || !(self.onset_margin >= 0.0) {
            return Err(Error::Parameter(format!("invalid absorbing potential {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrictionModel {
    Off,
    /// Mean-field force −γ⟨p⟩ on the junction phase.
    MomentumDamping,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrictionConfig {
    pub model: FrictionModel,
    /// 1/s
    pub rate: f64,
}

impl Default for FrictionConfig {
    fn default() -> Self {
        Self { model: FrictionModel::Off, rate: 0.0 }
    }
}

/// Sampled history of one propagation. Times in ns, rates in 1/ns.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PropagationRecord {
    pub times: Vec<f64>,
    /// ‖ψ‖²
    pub norms: Vec<f64>,
    pub mean_photon: Vec<f64>,
    /// 1 − ‖ψ‖²
    pub switching_prob: Vec<f64>,
    /// −d‖ψ‖²/dt over the step ending at each record, 2⟨ψ|V|ψ⟩ at t = 0
    pub rate: Vec<f64>,
    pub turning_point: Vec<f64>,
    pub steps: usize,
}

impl PropagationRecord {
    fn push(&mut self, t: f64, norm2: f64, n_bar: f64, rate: f64, phi_t: f64) {
        self.times.push(t);
        self.norms.push(norm2);
        self.mean_photon.push(n_bar);
        self.switching_prob.push((1.0 - norm2).clamp(0.0, 1.0));
        self.rate.push(rate);
        self.turning_point.push(phi_t);
    }

    pub fn final_probability(&self) -> f64 {
        self.switching_prob.last().copied().unwrap_or(0.0)
    }

    /// Switching probability at time `t` (ns), linearly interpolated.
    pub fn probability_at(&self, t: f64) -> f64 {
        interpolate(&self.times, &self.switching_prob, t)
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    if x <= xs[0] {
        return ys[0];
    }
    for i in 1..xs.len() {
        if xs[i] >= x {
            let w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
            return ys[i - 1] + w * (ys[i] - ys[i - 1]);
        }
    }
    *ys.last().unwrap()
}

/// Classical turning point on the downhill side of the well.
///
/// If the energy reaches the barrier top the barrier position is returned;
/// otherwise the crossing U_eff = energy beyond the barrier, interpolated
/// between grid points. Without any barrier the potential minimum near the
/// well is used as the barrier.
pub fn turning_point(u: &[f64], grid: &[f64], phi_j: f64, energy: f64) -> f64 {
    let b = find_barrier(u, grid, phi_j);
    if u[b.index] <= energy {
        return b.phi;
    }
    for k in b.index + 1..u.len() {
        if u[k] < energy {
            let w = (u[k - 1] - energy) / (u[k - 1] - u[k]);
            return grid[k - 1] + w * (grid[k] - grid[k - 1]);
        }
    }
    b.phi
}

/// V(φ) = S·((φ − φ_t − m)/(edge − φ_t − m))^p beyond the onset, zero before.
pub fn cap_profile(cap: &CapConfig, phi_t: f64, grid: &[f64], edge: f64) -> Vec<f64> {
    let onset = phi_t + cap.onset_margin;
    let span = edge - onset;
    grid.iter()
        .map(|&x| {
            if x <= onset || span <= 0.0 || cap.strength == 0.0 {
                0.0
            } else {
                cap.strength * ((x - onset) / span).powf(cap.power)
            }
        })
        .collect()
}

/// π/|Ω|
pub fn rabi_time(omega: f64) -> Result<f64> {
    if omega == 0.0 || !omega.is_finite() {
        return Err(Error::Undefined("Rabi time of a vanishing coupling".into()));
    }
    Ok(std::f64::consts::PI / omega.abs())
}

/// Efficiency curve ξ(t) = P_signal(t) − P_dark(t).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub times: Vec<f64>,
    pub xi: Vec<f64>,
    pub xi_max: f64,
    pub t_max: f64,
}

impl Efficiency {
    pub fn at(&self, t: f64) -> f64 {
        interpolate(&self.times, &self.xi, t)
    }
}

pub fn efficiency(signal: &PropagationRecord, dark: &PropagationRecord) -> Result<Efficiency> {
    if signal.times.len() != dark.times.len()
        || signal
            .times
            .iter()
            .zip(&dark.times)
            .any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0))
    {
        return Err(Error::Interface("signal and dark records use different time grids".into()));
    }
    let xi: Vec<f64> = signal
        .switching_prob
        .iter()
        .zip(&dark.switching_prob)
        .map(|(s, d)| s - d)
        .collect();
    let (mut k, mut best) = (0, f64::NEG_INFINITY);
    for (i, &x) in xi.iter().enumerate() {
        if x > best {
            best = x;
            k = i;
        }
    }
    Ok(Efficiency {
        times: signal.times.clone(),
        t_max: signal.times.get(k).copied().unwrap_or(0.0),
        xi_max: if xi.is_empty() { 0.0 } else { best },
        xi,
    })
}

/// Settings for one propagation.
#[derive(Clone, Debug)]
pub struct Propagation<'a> {
    pub coeffs: &'a HamiltonianCoefficients,
    pub basis: &'a ProductBasis,
    pub hamiltonian: &'a OperatorMatrix,
    /// Time-independent drive operator (rad/ns), multiplied by sin(ω_out t).
    pub drive: Option<&'a OperatorMatrix>,
    /// rad/ns
    pub omega_out: f64,
    pub cap: CapConfig,
    pub friction: FrictionConfig,
    /// ns
    pub t_final: f64,
    /// ns
    pub dt: f64,
    /// Energy subtracted from H (rad/ns); only changes the global phase.
    pub energy_ref: f64,
    /// Record every this many steps.
    pub record_stride: usize,
    /// Keep V fixed at the profile of the initial state.
    pub freeze_moments: bool,
}

/// Mean-field bookkeeping shared by each step.
struct MeanField<'a> {
    coeffs: &'a HamiltonianCoefficients,
    basis: &'a ProductBasis,
    grid: Vec<f64>,
    kinetic: CsrMatrix,
    momentum: CsrMatrix,
    scratch: Vec<C>,
}

struct Snapshot {
    moments: Moments,
    phi_t: f64,
    cap: Vec<f64>,
    mean_p: f64,
    mean_phi: f64,
}

impl<'a> MeanField<'a> {
    fn new(coeffs: &'a HamiltonianCoefficients, basis: &'a ProductBasis) -> Self {
        let id = nalgebra::DMatrix::<C>::identity(basis.n_fock, basis.n_fock);
        let kin = neg_laplacian(basis.n_phi, basis.d_phi).scale(C::new(coeffs.kinetic, 0.0));
        let kinetic = CsrMatrix::from_band(&crate::hamiltonian::kron(&kin, &id));
        let momentum =
            CsrMatrix::from_band(&crate::hamiltonian::kron(&momentum(basis.n_phi, basis.d_phi), &id));
        Self {
            coeffs,
            basis,
            grid: basis.grid(),
            kinetic,
            momentum,
            scratch: vec![ZERO; basis.dim()],
        }
    }

    fn snapshot(&mut self, psi: &[C], cap: &CapConfig, friction: bool) -> Snapshot {
        let m = moments(self.basis, psi);
        let u = effective_potential(self.coeffs, &m, &self.grid);
        let nf = self.basis.n_fock;
        let mut pot = 0.0;
        let mut mean_phi = 0.0;
        for (k, block) in psi.chunks_exact(nf).enumerate() {
            let p: f64 = block.iter().map(|a| a.norm_sqr()).sum();
            pot += p * u[k];
            mean_phi += p * self.grid[k];
        }
        self.kinetic.matvec_into(psi, &mut self.scratch);
        let kin = linalg::dot(psi, &self.scratch).re;
        let norm2 = m.norm2.max(f64::MIN_POSITIVE);
        let energy = (kin + pot) / norm2;
        let phi_t = turning_point(&u, &self.grid, self.coeffs.phi_j, energy);
        let cap = cap_profile(cap, phi_t, &self.grid, self.basis.phi_max);
        let mean_p = if friction {
            self.momentum.matvec_into(psi, &mut self.scratch);
            linalg::dot(psi, &self.scratch).re / norm2
        } else {
            0.0
        };
        Snapshot { moments: m, phi_t, cap, mean_p, mean_phi: mean_phi / norm2 }
    }
}

/// Complex energy (rad/ns) of the decaying state continued from `state`
/// once its absorbing potential is switched on.
///
/// The potential is built from the state's own moments and turning point;
/// inverse iteration on H − iV is started from the state at its Rayleigh
/// quotient. The real part is the resonance position, −2·Im the decay
/// rate. Fails if the iteration drifts to an unrelated eigenvector.
pub fn resonance(
    coeffs: &HamiltonianCoefficients,
    basis: &ProductBasis,
    hamiltonian: &OperatorMatrix,
    cap: &CapConfig,
    state: &QuantumState,
) -> Result<C> {
    cap.validate()?;
    let n = basis.dim();
    let nf = basis.n_fock;
    let psi = state.clone().normalized().amplitudes;
    let mut mf = MeanField::new(coeffs, basis);
    let v = mf.snapshot(&psi, cap, false).cap;
    let sigma = hamiltonian.matrix.expectation(&psi, &psi).re;
    let mut a = hamiltonian.matrix.clone();
    for i in 0..n {
        a.add(i, i, C::new(-sigma, -v[i / nf]));
    }
    let lu = a.factorize()?;
    let mut x = psi.clone();
    let mut lambda = C::new(sigma, 0.0);
    for _ in 0..200 {
        let mut y = x.clone();
        lu.solve_in_place(&mut y);
        let mu = linalg::dot(&x, &y);
        let next = C::new(sigma, 0.0) + 1.0 / mu;
        let s = 1.0 / linalg::norm(&y);
        x = y.into_iter().map(|z| z * s).collect();
        let done = (next - lambda).norm() <= 1e-12 * sigma.abs().max(1.0);
        lambda = next;
        if done {
            let overlap = linalg::dot(&psi, &x).norm();
            if overlap < 0.5 {
                return Err(Error::Undefined(format!(
                    "resonance search left the initial state (overlap {overlap:.3})"
                )));
            }
            return Ok(lambda);
        }
    }
    Err(Error::Undefined("resonance inverse iteration did not settle".into()))
}

/// Symmetric split-step propagation with a lagged, state-dependent
/// absorbing potential.
///
/// One step of length dt is
/// e^{−V dt/2} · e^{−i f D dt/2} · CN(H) · e^{−i f D dt/2} · e^{−V dt/2},
/// where CN is the Crank-Nicolson (Cayley) step for the time-independent
/// H − E_ref, factorized once per run. V and the optional damping potential
/// are diagonal and exponentiated exactly; the drive factor uses a Taylor
/// series summed to round-off. Every factor except the V one is unitary,
/// so the norm can only decrease.
pub fn propagate(setup: &Propagation<'_>, psi0: &QuantumState) -> Result<PropagationRecord> {
    propagate_with(setup, psi0, |_, _| {})
}

/// As [`propagate`], calling `observe(t, ψ)` at every recorded time.
pub fn propagate_with<F>(setup: &Propagation<'_>, psi0: &QuantumState, mut observe: F) -> Result<PropagationRecord>
where
    F: FnMut(f64, &[C]),
{
    setup.cap.validate()?;
    let basis = setup.basis;
    let n = basis.dim();
    let nf = basis.n_fock;
    if psi0.amplitudes.len() != n || setup.hamiltonian.dim() != n {
        return Err(Error::Interface("state, operator and basis dimensions differ".into()));
    }
    if let Some(d) = setup.drive {
        if d.dim() != n {
            return Err(Error::Interface("drive operator dimension differs".into()));
        }
    }
    if !(setup.dt > 0.0) || !(setup.t_final >= 0.0) {
        return Err(Error::Parameter("time step and final time must be positive".into()));
    }
    let dt = setup.dt;
    let tau = 0.5 * dt;
    let steps = (setup.t_final / dt).round() as usize;
    let stride = setup.record_stride.max(1);
    let friction = setup.friction.model == FrictionModel::MomentumDamping && setup.friction.rate > 0.0;
    let gamma_f = setup.friction.rate * 1e-9;

    // (1 + iτ(H − E_ref)) is I plus i·Hermitian, so elimination without
    // pivoting is stable
    let mut a = setup.hamiltonian.matrix.scale(C::new(0.0, tau));
    for i in 0..n {
        a.add(i, i, C::new(1.0, -tau * setup.energy_ref));
    }
    let lu: BandLu = a.factorize_unpivoted()?;
    let h = CsrMatrix::from_band(&setup.hamiltonian.matrix);
    let drive = setup.drive.map(|d| CsrMatrix::from_band(&d.matrix));
    let mut mf = MeanField::new(setup.coeffs, basis);
    let grid = basis.grid();

    let mut psi = psi0.amplitudes.clone();
    let mut snap = mf.snapshot(&psi, &setup.cap, friction);
    let mut rec = PropagationRecord::default();
    // 2⟨ψ|V|ψ⟩ only at t = 0; afterwards the loss of the last step
    let rate_of = |psi: &[C], v: &[f64]| -> f64 {
        let mut s = 0.0;
        for (k, block) in psi.chunks_exact(nf).enumerate() {
            if v[k] != 0.0 {
                s += v[k] * block.iter().map(|a| a.norm_sqr()).sum::<f64>();
            }
        }
        2.0 * s
    };
    rec.push(0.0, snap.moments.norm2, snap.moments.n_bar, rate_of(&psi, &snap.cap), snap.phi_t);
    observe(0.0, &psi);

    let mut work = vec![ZERO; n];
    let mut term = vec![ZERO; n];
    let mut half = vec![ZERO; basis.n_phi];

    for s in 0..steps {
        let t = s as f64 * dt;
        for k in 0..basis.n_phi {
            // damping potential γ⟨p⟩(φ − ⟨φ⟩)
            let f = if friction { gamma_f * snap.mean_p * (grid[k] - snap.mean_phi) } else { 0.0 };
            half[k] = C::new(-tau * snap.cap[k], -tau * f).exp();
        }
        let f = (setup.omega_out * (t + tau)).sin();
        let drive_now = drive.as_ref().filter(|_| f != 0.0);

        scale_blocks(&mut psi, &half, nf);
        if let Some(d) = drive_now {
            exp_apply(d, C::new(0.0, -tau * f), &mut psi, &mut work, &mut term)?;
        }
        // Cayley step for H − E_ref
        h.matvec_into(&psi, &mut work);
        for i in 0..n {
            work[i] = psi[i] - C::new(0.0, tau) * (work[i] - setup.energy_ref * psi[i]);
        }
        lu.solve_in_place(&mut work);
        std::mem::swap(&mut psi, &mut work);
        if let Some(d) = drive_now {
            exp_apply(d, C::new(0.0, -tau * f), &mut psi, &mut work, &mut term)?;
        }
        scale_blocks(&mut psi, &half, nf);

        let old_norm2 = snap.moments.norm2;
        if !setup.freeze_moments {
            snap = mf.snapshot(&psi, &setup.cap, friction);
        } else {
            snap.moments = moments(basis, &psi);
        }
        let norm2 = snap.moments.norm2;
        if !norm2.is_finite() || norm2 > old_norm2 * (1.0 + 1e-9) {
            return Err(Error::StepSize { growth: norm2 / old_norm2 - 1.0, time_ns: t + dt });
        }
        if (s + 1) % stride == 0 || s + 1 == steps {
            // V dt is not small near the box edge, so 2⟨V⟩ at the record time
            // misses part of the loss; the step difference keeps ∫rate = 1 − ‖ψ‖²
            rec.push((s + 1) as f64 * dt, norm2, snap.moments.n_bar, (old_norm2 - norm2) / dt, snap.phi_t);
            observe((s + 1) as f64 * dt, &psi);
        }
    }
    rec.steps = steps;
    Ok(rec)
}

fn scale_blocks(psi: &mut [C], factor: &[C], nf: usize) {
    for (block, &d) in psi.chunks_exact_mut(nf).zip(factor) {
        if d != C::new(1.0, 0.0) {
            block.iter_mut().for_each(|a| *a *= d);
        }
    }
}

/// ψ ← e^{zD}ψ by Taylor series, summed until the terms drop below round-off.
fn exp_apply(d: &CsrMatrix, z: C, psi: &mut [C], acc: &mut [C], term: &mut [C]) -> Result<()> {
    let size = linalg::norm(psi);
    if size == 0.0 {
        return Ok(());
    }
    acc.copy_from_slice(psi);
    let mut prev = psi.to_vec();
    for k in 1..40 {
        d.matvec_into(&prev, term);
        let c = z / k as f64;
        term.iter_mut().for_each(|x| *x *= c);
        let mut t2 = 0.0;
        for (a, x) in acc.iter_mut().zip(term.iter()) {
            *a += *x;
            t2 += x.norm_sqr();
        }
        if t2.sqrt() <= 1e-17 * size {
            psi.copy_from_slice(acc);
            return Ok(());
        }
        prev.copy_from_slice(term);
    }
    Err(Error::Undefined("drive exponential series did not converge; reduce dt".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cap_shape() {
        let grid: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let cap = CapConfig { strength: 10.0, power: 2.0, onset_margin: 0.1 };
        let v = cap_profile(&cap, 0.4, &grid, 1.0);
        for (x, y) in grid.iter().zip(&v) {
            if *x <= 0.5 {
                assert_eq!(*y, 0.0);
            } else {
                let want = 10.0 * ((x - 0.5) / 0.5).powi(2);
                assert!((y - want).abs() < 1e-12);
            }
        }
        assert!(v.windows(2).all(|w| w[1] >= w[0]));
        let off = CapConfig { strength: 0.0, ..cap };
        assert!(cap_profile(&off, 0.4, &grid, 1.0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn turning_point_rules() {
        // well at 0, barrier at 1, downhill beyond
        let grid: Vec<f64> = (0..400).map(|i| -1.0 + i as f64 * 0.01).collect();
        let u: Vec<f64> = grid.iter().map(|&x| x * x * (1.5 - x)).collect();
        let b = find_barrier(&u, &grid, 0.0);
        assert!((b.phi - 1.0).abs() < 0.011);
        let below = turning_point(&u, &grid, 0.0, 0.2);
        assert!(below > b.phi);
        let ub = below * below * (1.5 - below);
        assert!((ub - 0.2).abs() < 1e-3);
        let above = turning_point(&u, &grid, 0.0, 1.0);
        assert_eq!(above, b.phi);
    }

    #[test]
    fn rabi_time_formula() {
        let w = 2.0 * std::f64::consts::PI * 0.029;
        assert!((rabi_time(w).unwrap() - 17.241).abs() < 1e-3);
        assert!((rabi_time(2.0 * w).unwrap() - rabi_time(w).unwrap() / 2.0).abs() < 1e-12);
        assert!(rabi_time(0.0).is_err());
    }

    #[test]
    fn efficiency_of_identical_records() {
        let mut r = PropagationRecord::default();
        for i in 0..5 {
            r.push(i as f64, 1.0 - 0.1 * i as f64, 0.0, 0.0, 0.0);
        }
        let e = efficiency(&r, &r).unwrap();
        assert!(e.xi.iter().all(|&x| x == 0.0));
        let mut other = r.clone();
        other.times[2] = 7.0;
        assert!(efficiency(&r, &other).is_err());
    }
}
