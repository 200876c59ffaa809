//! Declarative experiment configurations and the sweeps that produce the
//! result tables.
//!
//! Every sweep evaluates its points independently (in parallel when a
//! thread pool is available) and keeps failures as flagged rows instead of
//! aborting.

use std::path::{Path, PathBuf};

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::storage::Owned;
use nalgebra::{DVector, Dyn, OMatrix, Vector4, U4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::circuit::{derive_circuit, CircuitParams};
use crate::dynamics::{
    efficiency, propagate, rabi_time, resonance, CapConfig, Efficiency, FrictionConfig, Propagation,
    PropagationRecord,
};
use crate::error::{Error, Result};
use crate::hamiltonian::{drive_operator, kerr_matrix};
use crate::io::{metadata, num, write_table, Table};
use crate::mean_field::{effective_potential, Moments};
use crate::spectral::{
    analyze, drive_weights, phase_distribution, single_mode_validity, transition_coupling,
    BiasSpectrum, BoundRule, CoupledSystem, CouplingResult, ValidityResult,
};
use crate::units::{from_ghz, to_ghz};

type C = num_complex::Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SpectrumSweep,
    PhaseDist,
    Dynamics,
    EffVsBeta,
    #[serde(rename = "eff_vs_I")]
    EffVsBias,
    EffVsFreq,
    KerrTable,
    ValidityCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::SpectrumSweep => "spectrum_sweep",
            Self::PhaseDist => "phase_dist",
            Self::Dynamics => "dynamics",
            Self::EffVsBeta => "eff_vs_beta",
            Self::EffVsBias => "eff_vs_I",
            Self::EffVsFreq => "eff_vs_freq",
            Self::KerrTable => "kerr_table",
            Self::ValidityCheck => "validity_check",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(json!(s)).map_err(|_| Error::Config(format!("unknown experiment kind `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    pub n_phi: usize,
    pub n_fock: usize,
    /// Eigenpairs computed around the well bottom.
    pub n_states: usize,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self { n_phi: 512, n_fock: 8, n_states: 40 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrequencyMode {
    /// Resonant with the decaying excited state: the splitting of the real
    /// parts of the complex energies of the two lowest bound states under
    /// their absorbing potentials.
    AutoResonant,
    /// Splitting of the two lowest bound eigenvalues of the Hermitian box
    /// Hamiltonian.
    EigenSplitting,
}

/// Output-line frequency: a fixed value in GHz or resonant with the
/// detector transition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DriveFrequency {
    Fixed(f64),
    Mode(FrequencyMode),
}

impl Default for DriveFrequency {
    fn default() -> Self {
        Self::Mode(FrequencyMode::AutoResonant)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveConfig {
    /// Amplitude of the classical drive in units of a single photon field.
    pub beta: f64,
    pub omega_out: DriveFrequency,
    /// Amplitudes for the β sweep.
    pub betas: Vec<f64>,
    /// Explicit frequencies (GHz) for the frequency sweep. When empty,
    /// `freq_points` frequencies spanning `freq_span_mhz` are centred on the
    /// resonance.
    pub freqs_ghz: Vec<f64>,
    pub freq_span_mhz: f64,
    pub freq_points: usize,
    /// Evaluation time (ns) for fixed-time efficiencies. Defaults to the
    /// optimal time of a resonant run at `reference_bias`.
    pub eval_time: Option<f64>,
    pub reference_bias: f64,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            omega_out: DriveFrequency::default(),
            betas: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.75, 1.0],
            freqs_ghz: Vec::new(),
            freq_span_mhz: 300.0,
            freq_points: 13,
            eval_time: None,
            reference_bias: 0.92,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    /// ns
    pub t_final: f64,
    /// ns
    pub dt: f64,
    pub record_stride: usize,
    pub cap: CapConfig,
    pub friction: FrictionConfig,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            t_final: 110.0,
            dt: 0.002,
            record_stride: 50,
            cap: CapConfig::default(),
            friction: FrictionConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasRange {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub out_dir: PathBuf,
    pub circuit: CircuitParams,
    pub biases: Vec<f64>,
    /// Appended to `biases` when present.
    pub bias_range: Option<BiasRange>,
    pub basis: BasisConfig,
    pub bound: BoundRule,
    pub dynamics: DynamicsConfig,
    pub drive: DriveConfig,
    /// Number of line modes in the Kerr table.
    pub kerr_modes: usize,
    /// Rows of the display table keep states with at most this many photons.
    pub display_max_photons: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::SpectrumSweep,
            out_dir: PathBuf::from("out"),
            circuit: CircuitParams::reference(),
            biases: vec![0.92],
            bias_range: None,
            basis: BasisConfig::default(),
            bound: BoundRule::default(),
            dynamics: DynamicsConfig::default(),
            drive: DriveConfig::default(),
            kerr_modes: 3,
            display_max_photons: 3.0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Explicit biases followed by the range, if any.
    pub fn bias_points(&self) -> Vec<f64> {
        let mut out = self.biases.clone();
        if let Some(r) = &self.bias_range {
            if r.count == 1 {
                out.push(r.start);
            } else {
                let step = (r.stop - r.start) / (r.count - 1) as f64;
                out.extend((0..r.count).map(|i| r.start + step * i as f64));
            }
        }
        out
    }

    /// Frequencies (rad/ns) of the frequency sweep around `resonance`.
    pub fn sweep_frequencies(&self, resonance: f64) -> Vec<f64> {
        if !self.drive.freqs_ghz.is_empty() {
            return self.drive.freqs_ghz.iter().map(|&f| from_ghz(f)).collect();
        }
        let n = self.drive.freq_points;
        let span = from_ghz(self.drive.freq_span_mhz * 1e-3);
        if n == 1 {
            return vec![resonance];
        }
        (0..n)
            .map(|i| resonance - 0.5 * span + span * i as f64 / (n - 1) as f64)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        self.circuit.validate().map_err(|e| Error::Config(e.to_string()))?;
        let biases = self.bias_points();
        if biases.is_empty() {
            return cfg("bias list is empty".into());
        }
        if let Some(r) = &self.bias_range {
            if r.count == 0 {
                return cfg("bias range has no points".into());
            }
        }
        if let Some(b) = biases.iter().find(|b| !(0.0..=0.99).contains(*b)) {
            return cfg(format!("bias {b} outside [0, 0.99]"));
        }
        let b = &self.basis;
        if b.n_phi < 16 || b.n_fock < 2 || b.n_states < 2 {
            return cfg(format!("basis too small: {b:?}"));
        }
        if b.n_states > b.n_phi * b.n_fock {
            return cfg("more states requested than basis dimension".into());
        }
        if !(self.bound.in_well_threshold > 0.0 && self.bound.in_well_threshold <= 1.0) {
            return cfg("in-well threshold must lie in (0, 1]".into());
        }
        let d = &self.dynamics;
        if !(d.dt > 0.0) || !(d.t_final > 0.0) || d.record_stride == 0 {
            return cfg(format!("invalid time stepping: {d:?}"));
        }
        d.cap.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(d.friction.rate >= 0.0) {
            return cfg("friction rate must be non-negative".into());
        }
        let dr = &self.drive;
        if !dr.beta.is_finite() || dr.betas.iter().any(|x| !x.is_finite()) {
            return cfg("drive amplitudes must be finite".into());
        }
        if let DriveFrequency::Fixed(f) = dr.omega_out {
            if !(f > 0.0) {
                return cfg(format!("output frequency {f} GHz must be positive"));
            }
        }
        if dr.freqs_ghz.iter().any(|f| !(*f > 0.0)) {
            return cfg("sweep frequencies must be positive".into());
        }
        if let Some(t) = dr.eval_time {
            if !(t > 0.0) {
                return cfg("evaluation time must be positive".into());
            }
        }
        match self.kind {
            ExperimentKind::EffVsBeta if dr.betas.is_empty() => return cfg("β sweep is empty".into()),
            ExperimentKind::EffVsFreq if dr.freqs_ghz.is_empty() && dr.freq_points == 0 => {
                return cfg("frequency sweep is empty".into())
            }
            ExperimentKind::KerrTable if self.kerr_modes == 0 => return cfg("no modes for the Kerr table".into()),
            _ => {}
        }
        Ok(())
    }
}

/// One sweep point: the swept value and either its result or the error.
#[derive(Clone, Debug)]
pub struct Point<T> {
    pub x: f64,
    pub result: std::result::Result<T, String>,
}

impl<T> Point<T> {
    pub fn ok(&self) -> Option<&T> {
        self.result.as_ref().ok()
    }
}

fn sweep<T: Send, F>(xs: &[f64], f: F) -> Vec<Point<T>>
where
    F: Fn(f64) -> Result<T> + Sync,
{
    xs.par_iter()
        .map(|&x| Point { x, result: f(x).map_err(|e| e.to_string()) })
        .collect()
}

fn system(cfg: &ExperimentConfig, bias: f64) -> Result<CoupledSystem> {
    CoupledSystem::new(&cfg.circuit, bias, cfg.basis.n_phi, cfg.basis.n_fock)
}

/// Spectrum at one bias with its bound-state counts.
#[derive(Clone, Debug)]
pub struct SpectrumPoint {
    pub spectrum: BiasSpectrum,
    pub lowest_band_bound: usize,
    pub bound_total: usize,
    /// Dressed barrier top (rad/ns).
    pub barrier: f64,
    /// Energy of the reference state (rad/ns), the origin of relative
    /// energies.
    pub reference_energy: f64,
}

pub fn spectrum_point(cfg: &ExperimentConfig, bias: f64) -> Result<SpectrumPoint> {
    let sys = system(cfg, bias)?;
    let spectrum = analyze(&sys, cfg.basis.n_states, &cfg.bound)?;
    let reference_energy = spectrum
        .census
        .reference
        .map_or(f64::NAN, |i| spectrum.pairs[i].energy);
    Ok(SpectrumPoint {
        lowest_band_bound: spectrum.lowest_band_bound(),
        bound_total: spectrum.bound_count(),
        barrier: spectrum.census.barrier.height,
        reference_energy,
        spectrum,
    })
}

pub fn spectrum_sweep(cfg: &ExperimentConfig) -> Vec<Point<SpectrumPoint>> {
    sweep(&cfg.bias_points(), |b| spectrum_point(cfg, b))
}

/// Level table, display table (photon filter applied) and per-bias summary.
pub fn spectrum_tables(cfg: &ExperimentConfig, points: &[Point<SpectrumPoint>]) -> (Table, Table, Table) {
    let cols = [
        "bias", "index", "energy_ghz", "energy_rel_ghz", "mean_photon", "upper_quanta", "band",
        "in_well", "bound", "residual_ghz",
    ];
    let mut levels = Table::new(&cols);
    let mut display = Table::new(&cols);
    let mut summary = Table::new(&[
        "bias", "status", "lowest_band_bound", "bound_total", "barrier_rel_ghz", "error",
    ]);
    for p in points {
        match &p.result {
            Ok(s) => {
                for l in &s.spectrum.levels {
                    let row = vec![
                        num(p.x),
                        l.index.to_string(),
                        num(to_ghz(l.energy)),
                        num(to_ghz(l.energy - s.reference_energy)),
                        num(l.mean_photon),
                        num(l.upper_quanta),
                        l.band.to_string(),
                        num(l.in_well),
                        (l.bound as u8).to_string(),
                        num(to_ghz(s.spectrum.pairs[l.index].residual)),
                    ];
                    if l.mean_photon <= cfg.display_max_photons {
                        display.push(row.clone());
                    }
                    levels.push(row);
                }
                summary.push(vec![
                    num(p.x),
                    "ok".into(),
                    s.lowest_band_bound.to_string(),
                    s.bound_total.to_string(),
                    num(to_ghz(s.barrier - s.reference_energy)),
                    String::new(),
                ]);
            }
            Err(e) => summary.push(vec![
                num(p.x),
                "failed".into(),
                String::new(),
                String::new(),
                String::new(),
                e.clone(),
            ]),
        }
    }
    (levels, display, summary)
}

/// Phase densities of the lowest-band bound states with the bare and
/// dressed potentials, all on the basis grid.
pub fn phase_table(cfg: &ExperimentConfig, bias: f64) -> Result<Table> {
    let sys = system(cfg, bias)?;
    let spec = analyze(&sys, cfg.basis.n_states, &cfg.bound)?;
    let grid = sys.basis.grid();
    let bare = effective_potential(&sys.coeffs, &Moments::default(), &grid);
    let dressed = effective_potential(&sys.coeffs, &spec.census.reference_moments, &grid);
    let states = spec.lowest_band_states();
    let dens: Vec<Vec<f64>> = states
        .iter()
        .map(|s| phase_distribution(&sys.basis, &s.state.clone().normalized()))
        .collect();
    let mut header = vec!["phi".to_string(), "u_bare_ghz".into(), "u_eff_ghz".into()];
    header.extend((0..dens.len()).map(|i| format!("density_{i}")));
    let mut t = Table { header, rows: Vec::new() };
    for k in 0..grid.len() {
        let mut row = vec![grid[k], to_ghz(bare[k]), to_ghz(dressed[k])];
        row.extend(dens.iter().map(|d| d[k]));
        t.push_numbers(&row);
    }
    Ok(t)
}

/// A bias point prepared for detection runs: the coupled system, its
/// spectrum, the transition coupling and the initial (ground) state.
pub struct Detector {
    pub bias: f64,
    pub sys: CoupledSystem,
    pub spectrum: BiasSpectrum,
    pub coupling: CouplingResult,
    /// Complex energies (rad/ns) of the two lowest bound states with their
    /// absorbing potentials switched on.
    pub resonances: [C; 2],
}

impl Detector {
    pub fn new(cfg: &ExperimentConfig, bias: f64) -> Result<Self> {
        let sys = system(cfg, bias)?;
        let spectrum = analyze(&sys, cfg.basis.n_states, &cfg.bound)?;
        let coupling = transition_coupling(&spectrum, &sys, None)?;
        let states = spectrum.lowest_band_states();
        let res = |i: usize| {
            resonance(&sys.coeffs, &sys.basis, &sys.hamiltonian, &cfg.dynamics.cap, &states[i].state)
        };
        let resonances = [res(0)?, res(1)?];
        Ok(Self { bias, sys, spectrum, coupling, resonances })
    }

    /// Transition frequency to the decaying excited state (rad/ns).
    pub fn resonance(&self) -> f64 {
        self.resonances[1].re - self.resonances[0].re
    }

    /// Splitting of the two lowest bound eigenvalues (rad/ns).
    pub fn splitting(&self) -> f64 {
        self.coupling.omega_out
    }

    pub fn frequency(&self, f: DriveFrequency) -> f64 {
        match f {
            DriveFrequency::Fixed(ghz) => from_ghz(ghz),
            DriveFrequency::Mode(FrequencyMode::AutoResonant) => self.resonance(),
            DriveFrequency::Mode(FrequencyMode::EigenSplitting) => self.splitting(),
        }
    }

    pub fn rabi_time(&self) -> Result<f64> {
        rabi_time(self.coupling.omega.norm())
    }

    /// Propagate from the ground state with drive amplitude `beta` at
    /// `omega_out` (rad/ns) up to `t_final` (ns).
    pub fn run(&self, d: &DynamicsConfig, beta: f64, omega_out: f64, t_final: f64) -> Result<PropagationRecord> {
        let ground = self.spectrum.lowest_band_states()[0];
        let (alpha, b1, b2) = drive_weights(&self.sys.mode, &self.sys.params, omega_out);
        let drive = (beta != 0.0).then(|| drive_operator(&self.sys.basis, alpha, beta, b1, b2));
        let setup = Propagation {
            coeffs: &self.sys.coeffs,
            basis: &self.sys.basis,
            hamiltonian: &self.sys.hamiltonian,
            drive: drive.as_ref(),
            omega_out,
            cap: d.cap.clone(),
            friction: d.friction.clone(),
            t_final,
            dt: d.dt,
            energy_ref: ground.energy,
            record_stride: d.record_stride,
            freeze_moments: false,
        };
        propagate(&setup, &ground.state.clone().normalized())
    }
}

/// Signal and dark runs at one bias with the resulting efficiency.
#[derive(Clone, Debug)]
pub struct Detection {
    pub bias: f64,
    pub beta: f64,
    /// rad/ns
    pub omega_out: f64,
    /// rad/ns
    pub coupling: f64,
    pub rabi_time: f64,
    pub signal: PropagationRecord,
    pub dark: PropagationRecord,
    pub efficiency: Efficiency,
}

/// Switching record from the ground state for drive amplitude `beta`.
pub fn detection_run(cfg: &ExperimentConfig, bias: f64, beta: f64) -> Result<PropagationRecord> {
    let det = Detector::new(cfg, bias)?;
    let w = det.frequency(cfg.drive.omega_out);
    det.run(&cfg.dynamics, beta, w, cfg.dynamics.t_final)
}

pub fn detection(cfg: &ExperimentConfig, bias: f64, beta: f64) -> Result<Detection> {
    let det = Detector::new(cfg, bias)?;
    let w = det.frequency(cfg.drive.omega_out);
    let t = cfg.dynamics.t_final;
    let dark = det.run(&cfg.dynamics, 0.0, w, t)?;
    let signal = det.run(&cfg.dynamics, beta, w, t)?;
    let efficiency = efficiency(&signal, &dark)?;
    Ok(Detection {
        bias,
        beta,
        omega_out: w,
        coupling: det.coupling.omega.norm(),
        rabi_time: det.rabi_time()?,
        signal,
        dark,
        efficiency,
    })
}

/// ξ at time `t` from two records that need not share a grid.
pub fn efficiency_at(signal: &PropagationRecord, dark: &PropagationRecord, t: f64) -> f64 {
    signal.probability_at(t) - dark.probability_at(t)
}

/// Peak efficiency of one sweep point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyPoint {
    /// rad/ns
    pub omega_out: f64,
    pub xi_max: f64,
    pub t_max: f64,
    /// ξ at the evaluation time, when one applies.
    pub xi_eval: Option<f64>,
}

fn peak(w: f64, signal: &PropagationRecord, dark: &PropagationRecord, t_eval: Option<f64>) -> Result<EfficiencyPoint> {
    let e = efficiency(signal, dark)?;
    Ok(EfficiencyPoint {
        omega_out: w,
        xi_max: e.xi_max,
        t_max: e.t_max,
        xi_eval: t_eval.map(|t| efficiency_at(signal, dark, t)),
    })
}

/// Optimal time of the resonant β run at the reference bias, or the
/// configured evaluation time.
pub fn evaluation_time(cfg: &ExperimentConfig) -> Result<f64> {
    if let Some(t) = cfg.drive.eval_time {
        return Ok(t);
    }
    let det = Detector::new(cfg, cfg.drive.reference_bias)?;
    let w = det.resonance();
    let t = cfg.dynamics.t_final;
    let dark = det.run(&cfg.dynamics, 0.0, w, t)?;
    let signal = det.run(&cfg.dynamics, cfg.drive.beta, w, t)?;
    Ok(efficiency(&signal, &dark)?.t_max)
}

/// ξ_max and t_max against drive amplitude at the first bias.
pub fn eff_vs_beta(cfg: &ExperimentConfig) -> Result<Vec<Point<EfficiencyPoint>>> {
    let bias = cfg.bias_points()[0];
    let det = Detector::new(cfg, bias)?;
    let w = det.frequency(cfg.drive.omega_out);
    let t = cfg.dynamics.t_final;
    let dark = det.run(&cfg.dynamics, 0.0, w, t)?;
    Ok(sweep(&cfg.drive.betas, |beta| {
        let signal = det.run(&cfg.dynamics, beta, w, t)?;
        peak(w, &signal, &dark, None)
    }))
}

/// ξ_max and t_max against bias. With a fixed output frequency ξ is also
/// reported at the evaluation time.
pub fn eff_vs_bias(cfg: &ExperimentConfig) -> Result<Vec<Point<EfficiencyPoint>>> {
    let t_eval = match cfg.drive.omega_out {
        DriveFrequency::Fixed(_) => Some(evaluation_time(cfg)?),
        DriveFrequency::Mode(_) => cfg.drive.eval_time,
    };
    let t = cfg.dynamics.t_final;
    Ok(sweep(&cfg.bias_points(), |bias| {
        let det = Detector::new(cfg, bias)?;
        let w = det.frequency(cfg.drive.omega_out);
        let dark = det.run(&cfg.dynamics, 0.0, w, t)?;
        let signal = det.run(&cfg.dynamics, cfg.drive.beta, w, t)?;
        peak(w, &signal, &dark, t_eval)
    }))
}

/// Frequency sweep at one bias, evaluated at a fixed time.
#[derive(Clone, Debug)]
pub struct FrequencySweep {
    pub bias: f64,
    /// rad/ns
    pub resonance: f64,
    /// ns
    pub eval_time: f64,
    pub points: Vec<Point<EfficiencyPoint>>,
    pub fit: std::result::Result<Linewidth, String>,
}

impl FrequencySweep {
    /// Width (rad/ns) of the contiguous frequency window around the best
    /// point where ξ at the evaluation time exceeds `level`, with linear
    /// interpolation at the edges. Zero when no point exceeds it.
    pub fn window_above(&self, level: f64) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .points
            .iter()
            .filter_map(|p| p.ok().and_then(|e| e.xi_eval).map(|x| (p.x, x)))
            .collect();
        let Some((ibest, _)) = pts.iter().enumerate().max_by(|a, b| a.1 .1.total_cmp(&b.1 .1)) else {
            return 0.0;
        };
        if pts[ibest].1 <= level {
            return 0.0;
        }
        let cross = |a: (f64, f64), b: (f64, f64)| a.0 + (level - a.1) / (b.1 - a.1) * (b.0 - a.0);
        let mut lo = pts[ibest].0;
        let mut i = ibest;
        while i > 0 {
            if pts[i - 1].1 > level {
                i -= 1;
                lo = pts[i].0;
            } else {
                lo = cross(pts[i - 1], pts[i]);
                break;
            }
        }
        let mut hi = pts[ibest].0;
        let mut j = ibest;
        while j + 1 < pts.len() {
            if pts[j + 1].1 > level {
                j += 1;
                hi = pts[j].0;
            } else {
                hi = cross(pts[j], pts[j + 1]);
                break;
            }
        }
        hi - lo
    }
}

/// ξ against drive frequency at the first bias, each point propagated only
/// up to the evaluation time.
pub fn eff_vs_freq(cfg: &ExperimentConfig) -> Result<FrequencySweep> {
    let bias = cfg.bias_points()[0];
    let det = Detector::new(cfg, bias)?;
    let w0 = det.resonance();
    let d = &cfg.dynamics;
    let (eval_time, dark) = match cfg.drive.eval_time {
        Some(t) => (t, det.run(d, 0.0, w0, t.min(d.t_final))?),
        None => {
            let t = if (bias - cfg.drive.reference_bias).abs() < 1e-12 {
                let dark = det.run(d, 0.0, w0, d.t_final)?;
                let signal = det.run(d, cfg.drive.beta, w0, d.t_final)?;
                efficiency(&signal, &dark)?.t_max
            } else {
                evaluation_time(cfg)?
            };
            (t, det.run(d, 0.0, w0, t)?)
        }
    };
    // whole record intervals so every run ends on the same sample
    let t_run = dark.times.last().copied().unwrap_or(0.0);
    let freqs = cfg.sweep_frequencies(w0);
    let points = sweep(&freqs, |w| {
        let signal = det.run(d, cfg.drive.beta, w, t_run)?;
        peak(w, &signal, &dark, Some(eval_time))
    });
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter_map(|p| p.ok().and_then(|e| e.xi_eval).map(|x| (to_ghz(p.x), x)))
        .unzip();
    let fit = fit_linewidth(&xs, &ys).map_err(|e| e.to_string());
    Ok(FrequencySweep { bias, resonance: w0, eval_time, points, fit })
}

/// Lorentzian y = c + A/(1 + ((f − f₀)/γ)²) fitted to a peak.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linewidth {
    /// GHz
    pub center: f64,
    /// Full width at half maximum (GHz).
    pub fwhm: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// 1/FWHM (ns)
    pub t1: f64,
    pub rms_residual: f64,
}

struct Lorentzian<'a> {
    x: &'a [f64],
    y: &'a [f64],
    /// (A, f₀, γ, c)
    p: Vector4<f64>,
}

impl LeastSquaresProblem<f64, Dyn, U4> for Lorentzian<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U4>;
    type ParameterStorage = Owned<f64, U4>;

    fn set_params(&mut self, p: &Vector4<f64>) {
        self.p = *p;
    }

    fn params(&self) -> Vector4<f64> {
        self.p
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let (a, f0, g, c) = (self.p[0], self.p[1], self.p[2], self.p[3]);
        Some(DVector::from_iterator(
            self.x.len(),
            self.x.iter().zip(self.y).map(|(&x, &y)| {
                let u = (x - f0) / g;
                c + a / (1.0 + u * u) - y
            }),
        ))
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U4>> {
        let (a, f0, g) = (self.p[0], self.p[1], self.p[2]);
        let mut j = OMatrix::<f64, Dyn, U4>::zeros(self.x.len());
        for (r, &x) in self.x.iter().enumerate() {
            let u = (x - f0) / g;
            let d = 1.0 + u * u;
            j[(r, 0)] = 1.0 / d;
            j[(r, 1)] = 2.0 * a * u / (g * d * d);
            j[(r, 2)] = 2.0 * a * u * u / (g * d * d);
            j[(r, 3)] = 1.0;
        }
        Some(j)
    }
}

/// Least-squares Lorentzian fit of a peaked curve sampled at frequencies
/// `x` (GHz). T₁ is the inverse full width.
pub fn fit_linewidth(x: &[f64], y: &[f64]) -> Result<Linewidth> {
    if x.len() != y.len() {
        return Err(Error::Interface("frequency and value columns differ in length".into()));
    }
    if x.len() < 5 {
        return Err(Error::Fit(format!("{} points cannot constrain a Lorentzian", x.len())));
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let (imax, &ymax) = ys.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let ymin = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = ymax.abs().max(ymin.abs()).max(f64::MIN_POSITIVE);
    if ymax - ymin <= 1e-9 * scale {
        return Err(Error::Fit("data are flat".into()));
    }
    if imax == 0 || imax + 1 == xs.len() {
        return Err(Error::Fit("maximum lies on the edge of the sweep".into()));
    }
    // half width from the half-maximum crossings around the peak
    let half = 0.5 * (ymax + ymin);
    let left = (0..imax).rev().find(|&i| ys[i] < half).map_or(xs[0], |i| xs[i]);
    let right = (imax + 1..xs.len()).find(|&i| ys[i] < half).map_or(xs[xs.len() - 1], |i| xs[i]);
    let g0 = (0.5 * (right - left)).max(1e-3 * (xs[xs.len() - 1] - xs[0]));
    let problem = Lorentzian { x: &xs, y: &ys, p: Vector4::new(ymax - ymin, xs[imax], g0, ymin) };
    let (fitted, report) = LevenbergMarquardt::new()
        .with_ftol(1e-15)
        .with_xtol(1e-15)
        .with_gtol(1e-15)
        .minimize(problem);
    if !report.termination.was_successful() && report.objective_function.is_nan() {
        return Err(Error::Fit(format!("{:?}", report.termination)));
    }
    let p = fitted.p;
    let fwhm = 2.0 * p[2].abs();
    if !(fwhm > 0.0) || !fwhm.is_finite() || !(p[0] > 0.0) {
        return Err(Error::Fit(format!("no peak found (amplitude {}, width {})", p[0], fwhm)));
    }
    if p[1] < xs[0] || p[1] > xs[xs.len() - 1] {
        return Err(Error::Fit(format!("fitted centre {} GHz outside the sweep", p[1])));
    }
    let rms = (2.0 * report.objective_function / xs.len() as f64).sqrt();
    Ok(Linewidth { center: p[1], fwhm, amplitude: p[0], offset: p[3], t1: 1.0 / fwhm, rms_residual: rms })
}

/// Cross-Kerr coefficients of the first `kerr_modes` line modes at each
/// bias (GHz).
pub fn kerr_table(cfg: &ExperimentConfig) -> (Table, Vec<String>) {
    let modes: Vec<usize> = (0..cfg.kerr_modes).collect();
    let mut t = Table::new(&["bias", "i", "j", "kappa_ghz"]);
    let mut failures = Vec::new();
    let derived = derive_circuit(&cfg.circuit);
    for b in cfg.bias_points() {
        match derived.as_ref().map_err(|e| e.to_string()).and_then(|d| {
            kerr_matrix(d, b, &modes).map_err(|e| e.to_string())
        }) {
            Ok(k) => {
                for i in 0..modes.len() {
                    for j in 0..modes.len() {
                        t.push(vec![num(b), i.to_string(), j.to_string(), num(to_ghz(k[(i, j)]))]);
                    }
                }
            }
            Err(e) => failures.push(format!("bias {b}: {e}")),
        }
    }
    (t, failures)
}

pub fn validity_sweep(cfg: &ExperimentConfig) -> Vec<Point<ValidityResult>> {
    sweep(&cfg.bias_points(), |b| {
        single_mode_validity(&cfg.circuit, b, cfg.basis.n_phi, cfg.basis.n_fock, cfg.basis.n_states)
    })
}

/// Files written by a run and the points that failed.
#[derive(Clone, Debug, Default)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
}

impl RunReport {
    pub fn complete(&self) -> bool {
        self.failures.is_empty()
    }

    fn write(&mut self, cfg: &ExperimentConfig, name: &str, table: &Table, extra: serde_json::Value) -> Result<()> {
        let path = cfg.out_dir.join(name);
        write_table(&path, table, &metadata(cfg.kind.name(), cfg, extra)?)?;
        self.files.push(path);
        Ok(())
    }

    fn collect<T>(&mut self, what: &str, points: &[Point<T>]) {
        for p in points {
            if let Err(e) = &p.result {
                self.failures.push(format!("{what} {}: {e}", num(p.x)));
            }
        }
    }
}

/// Columns t_ns, norm2, mean_photon, P_switch.
pub fn record_table(r: &PropagationRecord) -> Table {
    let mut t = Table::new(&["t_ns", "norm2", "mean_photon", "P_switch"]);
    for i in 0..r.times.len() {
        t.push_numbers(&[r.times[i], r.norms[i], r.mean_photon[i], r.switching_prob[i]]);
    }
    t
}

pub fn efficiency_table(d: &Detection) -> Table {
    let mut t = Table::new(&["t_ns", "P_signal", "P_dark", "xi"]);
    for i in 0..d.efficiency.times.len() {
        t.push_numbers(&[
            d.efficiency.times[i],
            d.signal.switching_prob[i],
            d.dark.switching_prob[i],
            d.efficiency.xi[i],
        ]);
    }
    t
}

fn efficiency_points_table(name: &str, points: &[Point<EfficiencyPoint>]) -> Table {
    let mut t = Table::new(&[name, "status", "omega_out_ghz", "xi_max", "t_max_ns", "xi_eval"]);
    for p in points {
        t.push(match &p.result {
            Ok(e) => vec![
                num(p.x),
                "ok".into(),
                num(to_ghz(e.omega_out)),
                num(e.xi_max),
                num(e.t_max),
                e.xi_eval.map(num).unwrap_or_default(),
            ],
            Err(_) => vec![num(p.x), "failed".into(), String::new(), String::new(), String::new(), String::new()],
        });
    }
    t
}

fn bias_tag(b: f64) -> String {
    format!("I{}", num(b))
}

/// Run the configured experiment and write its tables under `out_dir`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let mut rep = RunReport::default();
    match cfg.kind {
        ExperimentKind::SpectrumSweep => {
            let pts = spectrum_sweep(cfg);
            let (levels, display, summary) = spectrum_tables(cfg, &pts);
            rep.collect("bias", &pts);
            let note = json!({"display_filter": format!("mean_photon <= {}", cfg.display_max_photons)});
            rep.write(cfg, "spectrum_levels.csv", &levels, json!({}))?;
            rep.write(cfg, "spectrum_display.csv", &display, note)?;
            rep.write(cfg, "spectrum_summary.csv", &summary, json!({"failures": rep.failures}))?;
        }
        ExperimentKind::PhaseDist => {
            let pts = sweep(&cfg.bias_points(), |b| phase_table(cfg, b));
            for p in &pts {
                if let Ok(t) = &p.result {
                    rep.write(cfg, &format!("phase_dist_{}.csv", bias_tag(p.x)), t, json!({"bias": p.x}))?;
                }
            }
            rep.collect("bias", &pts);
        }
        ExperimentKind::Dynamics => {
            let beta = cfg.drive.beta;
            let pts = sweep(&cfg.bias_points(), |b| detection(cfg, b, beta));
            let mut summary = Table::new(&[
                "bias", "status", "omega_out_ghz", "coupling_mhz", "rabi_time_ns", "xi_max", "t_max_ns",
                "P_final",
            ]);
            for p in &pts {
                match &p.result {
                    Ok(d) => {
                        let tag = bias_tag(p.x);
                        let extra = json!({"bias": p.x, "beta": beta, "omega_out_ghz": to_ghz(d.omega_out)});
                        rep.write(cfg, &format!("dynamics_{tag}_signal.csv"), &record_table(&d.signal), extra.clone())?;
                        rep.write(cfg, &format!("dynamics_{tag}_dark.csv"), &record_table(&d.dark), extra.clone())?;
                        rep.write(cfg, &format!("dynamics_{tag}_efficiency.csv"), &efficiency_table(d), extra)?;
                        summary.push(vec![
                            num(p.x),
                            "ok".into(),
                            num(to_ghz(d.omega_out)),
                            num(to_ghz(d.coupling) * 1e3),
                            num(d.rabi_time),
                            num(d.efficiency.xi_max),
                            num(d.efficiency.t_max),
                            num(d.signal.final_probability()),
                        ]);
                    }
                    Err(_) => {
                        let mut row = vec![num(p.x), "failed".into()];
                        row.resize(8, String::new());
                        summary.push(row);
                    }
                }
            }
            rep.collect("bias", &pts);
            rep.write(cfg, "dynamics_summary.csv", &summary, json!({"failures": rep.failures}))?;
        }
        ExperimentKind::EffVsBeta => {
            let pts = eff_vs_beta(cfg)?;
            rep.collect("beta", &pts);
            let extra = json!({"bias": cfg.bias_points()[0], "failures": rep.failures});
            rep.write(cfg, "eff_vs_beta.csv", &efficiency_points_table("beta", &pts), extra)?;
        }
        ExperimentKind::EffVsBias => {
            let pts = eff_vs_bias(cfg)?;
            rep.collect("bias", &pts);
            let extra = json!({"failures": rep.failures});
            rep.write(cfg, "eff_vs_I.csv", &efficiency_points_table("bias", &pts), extra)?;
        }
        ExperimentKind::EffVsFreq => {
            let fs = eff_vs_freq(cfg)?;
            rep.collect("omega_out", &fs.points);
            let mut t = efficiency_points_table("omega_out_rad_per_ns", &fs.points);
            t.header[0] = "omega_out_ghz".into();
            for (row, p) in t.rows.iter_mut().zip(&fs.points) {
                row[0] = num(to_ghz(p.x));
            }
            let window = to_ghz(fs.window_above(0.9)) * 1e3;
            let fit = match &fs.fit {
                Ok(l) => serde_json::to_value(l)?,
                Err(e) => {
                    rep.failures.push(format!("linewidth fit: {e}"));
                    json!({"error": e})
                }
            };
            let extra = json!({
                "bias": fs.bias,
                "resonance_ghz": to_ghz(fs.resonance),
                "eval_time_ns": fs.eval_time,
                "window_above_0.9_mhz": window,
                "linewidth": fit,
                "failures": rep.failures,
            });
            rep.write(cfg, "eff_vs_freq.csv", &t, extra)?;
            let mut lt = Table::new(&["center_ghz", "fwhm_mhz", "t1_ns", "window_above_0.9_mhz"]);
            if let Ok(l) = &fs.fit {
                lt.push_numbers(&[l.center, l.fwhm * 1e3, l.t1, window]);
            }
            rep.write(cfg, "linewidth.csv", &lt, json!({"bias": fs.bias}))?;
        }
        ExperimentKind::KerrTable => {
            let (t, failures) = kerr_table(cfg);
            rep.failures.extend(failures);
            rep.write(cfg, "kerr_table.csv", &t, json!({"failures": rep.failures}))?;
        }
        ExperimentKind::ValidityCheck => {
            let pts = validity_sweep(cfg);
            rep.collect("bias", &pts);
            let mut t = Table::new(&[
                "bias", "status", "g_1a_1b_ghz", "delta_1a_1b_ghz", "ratio_1a_1b", "g_0_1b_ghz",
                "delta_0_1b_ghz", "ratio_0_1b", "est_population",
            ]);
            for p in &pts {
                match &p.result {
                    Ok(v) => t.push(vec![
                        num(p.x),
                        "ok".into(),
                        num(to_ghz(v.g_1a_1b)),
                        num(to_ghz(v.delta_1a_1b)),
                        num(v.ratio_1a_1b),
                        num(to_ghz(v.g_0_1b)),
                        num(to_ghz(v.delta_0_1b)),
                        num(v.ratio_0_1b),
                        num(v.est_population),
                    ]),
                    Err(_) => {
                        let mut row = vec![num(p.x), "failed".into()];
                        row.resize(9, String::new());
                        t.push(row);
                    }
                }
            }
            let extra = json!({"mode_mode_coupling_included": false, "failures": rep.failures});
            rep.write(cfg, "validity.csv", &t, extra)?;
        }
    }
    Ok(rep)
}
