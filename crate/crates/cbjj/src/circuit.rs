//! Circuit parameters, derived line quantities and the bias-dependent
//! resonator mode.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{CHARGE_2E, HBAR, PHI0_RED};

/// Raw device parameters in SI units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    /// Critical current (A).
    pub i_c: f64,
    /// Junction capacitance (F).
    pub c_j: f64,
    /// Resonator impedance (Ω).
    pub z_0: f64,
    /// Bare λ/4 angular frequency (rad/s).
    pub omega_bare: f64,
    /// Junction resistance (Ω).
    pub r_j: f64,
    /// Output coupling capacitance (F).
    pub c_out: f64,
    /// External line impedance (Ω).
    pub z_out: f64,
}

impl CircuitParams {
    /// Device used throughout the reference calculations: 2 μA junction with
    /// 1500 fF, 50 Ω line at 7 GHz, 5 fF output capacitor.
    ///
    /// The external impedance is not a measured quantity of that device; the
    /// value here is the one that reproduces its quoted 29 MHz coupling.
    pub fn reference() -> Self {
        Self {
            i_c: 2e-6,
            c_j: 1500e-15,
            z_0: 50.0,
            omega_bare: 2.0 * PI * 7e9,
            r_j: 300.0,
            c_out: 5e-15,
            z_out: 20e3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("i_c", self.i_c),
            ("c_j", self.c_j),
            ("z_0", self.z_0),
            ("omega_bare", self.omega_bare),
            ("r_j", self.r_j),
            ("z_out", self.z_out),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        // a vanishing output capacitor simply decouples the drive
        if !(self.c_out.is_finite() && self.c_out >= 0.0) {
            return Err(Error::Parameter(format!("c_out must be non-negative, got {}", self.c_out)));
        }
        Ok(())
    }
}

/// Quantities that follow from the circuit alone, independent of bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedCircuit {
    /// Josephson energy (J).
    pub e_j: f64,
    /// Josephson inductance (H).
    pub l_j: f64,
    /// Total line inductance L_T·d (H).
    pub l_t_total: f64,
    /// Total line capacitance C_T·d (F).
    pub c_t_total: f64,
    /// Junction capacitance (F).
    pub c_j: f64,
    /// Bare junction mass ħ²C_J/(2e)² (J·s²).
    pub bare_mass: f64,
}

pub fn derive_circuit(params: &CircuitParams) -> Result<DerivedCircuit> {
    // Output-line quantities are allowed to vanish here: they only matter
    // for the coupling to the outside.
    for (name, v) in [
        ("i_c", params.i_c),
        ("c_j", params.c_j),
        ("z_0", params.z_0),
        ("omega_bare", params.omega_bare),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
        }
    }
    let e_j = PHI0_RED * params.i_c;
    let l_j = PHI0_RED * PHI0_RED / e_j;
    let quarter = PI / (2.0 * params.omega_bare);
    Ok(DerivedCircuit {
        e_j,
        l_j,
        l_t_total: params.z_0 * quarter,
        c_t_total: quarter / params.z_0,
        c_j: params.c_j,
        bare_mass: HBAR * HBAR * params.c_j / (CHARGE_2E * CHARGE_2E),
    })
}

/// Static junction phase arcsin(I).
pub fn junction_phase(bias: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&bias) {
        if bias >= 1.0 {
            return Err(Error::OvercriticalBias(bias));
        }
        return Err(Error::Parameter(format!("bias must be in [0, 1), got {bias}")));
    }
    Ok(bias.asin())
}

/// Right-hand side r = L_T d cos φ̂_J / L_J of the mode equation.
pub fn mode_ratio(derived: &DerivedCircuit, bias: f64) -> Result<f64> {
    let phi_j = junction_phase(bias)?;
    Ok(derived.l_t_total * phi_j.cos() / derived.l_j)
}

/// Solve k tan k = r on the branch (jπ, jπ + π/2).
///
/// Works on k sin k − r cos k, which has no pole on the branch. Newton steps
/// are kept inside a shrinking bisection bracket.
pub fn solve_ktank(r: f64, mode_index: usize) -> f64 {
    let lo0 = mode_index as f64 * PI;
    let sign = if mode_index % 2 == 0 { 1.0 } else { -1.0 };
    let f = |k: f64| sign * (k * k.sin() - r * k.cos());
    let df = |k: f64| sign * (k.sin() + k * k.cos() + r * k.sin());
    let (mut lo, mut hi) = (lo0, lo0 + FRAC_PI_2);
    if r <= 0.0 {
        return lo0;
    }
    let mut k = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fk = f(k);
        if fk == 0.0 {
            return k;
        }
        if fk < 0.0 {
            lo = k;
        } else {
            hi = k;
        }
        let d = df(k);
        let mut next = k - fk / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - k).abs() <= 1e-16 * k.abs().max(1.0) || hi - lo <= 4.0 * f64::EPSILON * hi {
            return next;
        }
        k = next;
    }
    k
}

pub fn solve_wavenumber(derived: &DerivedCircuit, bias: f64, mode_index: usize) -> Result<f64> {
    let r = mode_ratio(derived, bias)?;
    Ok(solve_ktank(r, mode_index))
}

/// Closed-form estimate valid when L_J ≪ L_T d cos φ̂_J.
pub fn approx_wavenumber(derived: &DerivedCircuit, bias: f64, mode_index: usize) -> Result<f64> {
    let phi_j = junction_phase(bias)?;
    let x = derived.l_j / (derived.l_t_total * phi_j.cos());
    Ok(PI * (1.0 + 2.0 * mode_index as f64) / (2.0 * (1.0 + x)))
}

/// Solved wavenumber and lumped constants of one resonator mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSolution {
    pub mode_index: usize,
    pub kd: f64,
    /// Static junction phase (rad).
    pub phi_j: f64,
    pub bias: f64,
    pub c_e: f64,
    pub c_0: f64,
    pub c_c: f64,
    pub l_e: f64,
    /// Mode angular frequency (rad/s).
    pub omega: f64,
}

pub fn lumped_constants(
    derived: &DerivedCircuit,
    bias: f64,
    kd: f64,
    mode_index: usize,
) -> Result<ModeSolution> {
    let phi_j = junction_phase(bias)?;
    let ct = derived.c_t_total;
    let cj = derived.c_j;
    let (s, c) = kd.sin_cos();
    let sinc2 = if kd == 0.0 { 1.0 } else { (2.0 * kd).sin() / (2.0 * kd) };
    let c_e = 0.5 * ct * (1.0 + sinc2) + cj * c * c;
    let c_0 = ct + cj;
    let c_c = ct * if kd == 0.0 { 1.0 } else { s / kd } + cj * c;
    let inv_l = kd * kd / (2.0 * derived.l_t_total) * (1.0 - sinc2);
    if !(inv_l > 0.0) {
        return Err(Error::Parameter(format!("kd = {kd} gives no mode inductance")));
    }
    let l_e = 1.0 / inv_l;
    let c_red = c_e - c_c * c_c / c_0;
    if !(c_red > 0.0) {
        return Err(Error::Parameter(format!("kd = {kd} gives non-positive mode capacitance")));
    }
    Ok(ModeSolution {
        mode_index,
        kd,
        phi_j,
        bias,
        c_e,
        c_0,
        c_c,
        l_e,
        omega: 1.0 / (l_e * c_red).sqrt(),
    })
}

/// Wavenumber plus lumped constants for mode `mode_index` at the given bias.
pub fn solve_mode(derived: &DerivedCircuit, bias: f64, mode_index: usize) -> Result<ModeSolution> {
    let kd = solve_wavenumber(derived, bias, mode_index)?;
    lumped_constants(derived, bias, kd, mode_index)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn derived() -> DerivedCircuit {
        derive_circuit(&CircuitParams::reference()).unwrap()
    }

    #[test]
    fn line_totals() {
        let d = derived();
        assert!((d.l_t_total - 1.7857e-9).abs() < 1e-12);
        assert!((d.c_t_total - 0.7143e-12).abs() < 1e-15);
        assert!((d.l_j - 0.16456e-9).abs() < 1e-13);
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = CircuitParams::reference();
        p.c_j = -1.0;
        assert!(matches!(derive_circuit(&p), Err(Error::Parameter(_))));
        assert!(matches!(junction_phase(1.0), Err(Error::OvercriticalBias(_))));
        assert!(junction_phase(-0.1).is_err());
    }

    #[test]
    fn unit_ratio_root() {
        let k = solve_ktank(1.0, 0);
        assert!((k - 0.860_333_589_019_38).abs() < 1e-12);
    }

    #[test]
    fn higher_branch() {
        let k = solve_ktank(4.0, 2);
        assert!(k > 2.0 * PI && k < 2.0 * PI + FRAC_PI_2);
        assert!((k * k.tan() - 4.0).abs() < 1e-11);
    }

    #[test]
    fn open_limit_constants() {
        let mut d = derived();
        d.c_j = 0.0;
        let m = lumped_constants(&d, 0.0, FRAC_PI_2, 0).unwrap();
        assert!((m.c_e - d.c_t_total / 2.0).abs() < 1e-12 * d.c_t_total);
        assert!((m.c_c - d.c_t_total * 2.0 / PI).abs() < 1e-12 * d.c_t_total);
        assert!((m.c_0 - d.c_t_total).abs() < 1e-24);
    }
}
