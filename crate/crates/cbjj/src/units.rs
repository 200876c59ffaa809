//! Physical constants and the internal unit system.
//!
//! Internally ħ = 1 and all energies and rates are angular frequencies in
//! rad/ns. Circuit parameters stay in SI.

use std::f64::consts::PI;

/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Elementary charge (C).
pub const E_CHARGE: f64 = 1.602_176_634e-19;
/// Cooper pair charge 2e (C).
pub const CHARGE_2E: f64 = 2.0 * E_CHARGE;
/// Reduced flux quantum ħ/2e (Wb).
pub const PHI0_RED: f64 = HBAR / CHARGE_2E;

/// rad/s per internal unit (rad/ns).
pub const RATE_SCALE: f64 = 1e9;

/// SI angular frequency (rad/s) to internal rad/ns.
pub fn from_si_rate(w: f64) -> f64 {
    w / RATE_SCALE
}

/// Internal rad/ns to SI rad/s.
pub fn to_si_rate(w: f64) -> f64 {
    w * RATE_SCALE
}

/// Energy in joules to internal rad/ns.
pub fn from_joule(e: f64) -> f64 {
    e / HBAR / RATE_SCALE
}

/// Internal rad/ns to cyclic GHz.
pub fn to_ghz(w: f64) -> f64 {
    w / (2.0 * PI)
}

/// Cyclic GHz to internal rad/ns.
pub fn from_ghz(f: f64) -> f64 {
    2.0 * PI * f
}
