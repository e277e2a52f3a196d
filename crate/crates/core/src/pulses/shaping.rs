//! Sine-envelope sideband pulses with AC-Stark chirp, compared with
//! equal-area rectangular pulses under the full off-resonant Hamiltonian.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{evolve_timedep, DrivenTerm, Envelope, IntegratorOptions};
use crate::hamiltonians::{offresonant_terms, Drive, SystemConfig};
use crate::hilbert::{BasisState, HilbertSpace, Mode, QuantumState, Qubit, StateVector};
use crate::optim::grid_then_golden;

/// Field of the shaped pulse,
/// `(πA/2) sin(πt/T) · sin[ωt + (π²δ/8)(2πt − T sin(2πt/T)) + φ]`,
/// zero outside `[0, T]`.
pub fn shaped_envelope(t: f64, duration: f64, amplitude: f64, stark: f64, omega: f64, phase: f64) -> f64 {
    if !(0.0..=duration).contains(&t) {
        return 0.0;
    }
    let chirp = PI * PI * stark / 8.0 * (2.0 * PI * t - duration * (2.0 * PI * t / duration).sin());
    PI * amplitude / 2.0 * (PI * t / duration).sin() * (omega * t + chirp + phase).sin()
}

/// Field of the rectangular pulse, `A sin((ω − δ)t + φ)` on `[0, T]`.
pub fn rectangular_field(t: f64, duration: f64, amplitude: f64, stark: f64, omega: f64, phase: f64) -> f64 {
    if !(0.0..=duration).contains(&t) {
        return 0.0;
    }
    amplitude * ((omega - stark) * t + phase).sin()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PulseShape {
    Rectangular,
    Sine,
}

/// A blue-sideband π-pulse on `mode` with resonant sideband Rabi frequency
/// `sideband_rabi` (`ηΩ`, rad/s) and Stark compensation `stark` (rad/s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SidebandPulse {
    pub shape: PulseShape,
    pub mode: Mode,
    pub sideband_rabi: f64,
    pub stark: f64,
    pub phase: f64,
}

impl SidebandPulse {
    /// π-pulse duration on the `|↓,0⟩ ↔ |↑,1⟩` pair (equal area for both shapes).
    pub fn duration(&self) -> f64 {
        PI / self.sideband_rabi
    }

    /// Every first-order coupling the drive produces, with the pulse's
    /// envelope and frequency.
    pub fn terms(&self, cfg: &SystemConfig) -> Vec<DrivenTerm> {
        let t = self.duration();
        let (offset, envelope) = match self.shape {
            PulseShape::Rectangular => (cfg.trap_frequency(self.mode) - self.stark, Envelope::Constant),
            PulseShape::Sine => (
                cfg.trap_frequency(self.mode),
                Envelope::Sine { duration: t, stark: self.stark },
            ),
        };
        let drive = Drive {
            rabi: self.sideband_rabi / cfg.eta(self.mode),
            freq_offset: offset,
            phase: self.phase,
        };
        offresonant_terms(cfg, &drive)
            .into_iter()
            .map(|term| DrivenTerm { term, envelope })
            .collect()
    }

    pub fn evolve(&self, cfg: &SystemConfig, state: &StateVector) -> Result<StateVector> {
        let opts = IntegratorOptions { tol: 1e-11, ..Default::default() };
        Ok(evolve_timedep(state, &self.terms(cfg), self.duration(), opts)?.state)
    }
}

/// Outcome of a π-pulse from `|↓,0,0⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub shape: PulseShape,
    pub stark: f64,
    /// `1 − P(|↑,1⟩)` on the driven mode.
    pub transfer_error: f64,
    /// Population outside `{|↓,0,0⟩, |↑,1⟩}`: spurious off-resonant excitation.
    pub leakage: f64,
}

fn space_for_transfer() -> HilbertSpace {
    HilbertSpace::new(4, 4).expect("fixed non-zero dimensions")
}

fn target(mode: Mode) -> BasisState {
    BasisState::new(Qubit::Up, 0, 0).with_occupation(mode, 1)
}

/// Transfer and leakage of `pulse` applied to `|↓,0,0⟩`.
pub fn transfer_report(cfg: &SystemConfig, pulse: &SidebandPulse) -> Result<TransferReport> {
    let space = space_for_transfer();
    let out = pulse.evolve(cfg, &StateVector::vacuum(space))?;
    let p_target = out.population(target(pulse.mode));
    let p_start = out.population(BasisState::new(Qubit::Down, 0, 0));
    Ok(TransferReport {
        shape: pulse.shape,
        stark: pulse.stark,
        transfer_error: 1.0 - p_target,
        leakage: (1.0 - p_target - p_start).max(0.0),
    })
}

/// Rough AC-Stark compensation for the shape: the carrier light shift
/// `Ω²/(2ω_M)` for the rectangle, divided by `2π` for the sine chirp whose
/// mean frequency shift is `π³δ/4`.
pub fn stark_estimate(cfg: &SystemConfig, shape: PulseShape, mode: Mode, sideband_rabi: f64) -> f64 {
    let rabi = sideband_rabi / cfg.eta(mode);
    let shift = rabi * rabi / (2.0 * cfg.trap_frequency(mode));
    match shape {
        PulseShape::Rectangular => shift,
        PulseShape::Sine => shift / (2.0 * PI),
    }
}

/// Stark compensation minimizing the transfer error: grid over
/// `±2|estimate|`, then golden-section refinement.
pub fn calibrate_stark(cfg: &SystemConfig, shape: PulseShape, mode: Mode, sideband_rabi: f64) -> Result<f64> {
    if !(sideband_rabi > 0.0 && sideband_rabi.is_finite()) {
        return Err(Error::invalid("sideband Rabi frequency must be positive"));
    }
    let span = 2.0 * stark_estimate(cfg, shape, mode, sideband_rabi).abs();
    let cost = |stark: f64| {
        let pulse = SidebandPulse { shape, mode, sideband_rabi, stark, phase: 0.0 };
        transfer_report(cfg, &pulse).map_or(f64::INFINITY, |r| r.transfer_error)
    };
    let (best, err) = grid_then_golden(cost, -span, span, 41, span * 1e-7);
    if !err.is_finite() {
        return Err(Error::Numerical("Stark calibration failed to evaluate".into()));
    }
    Ok(best)
}

/// Calibrated π-pulses of both shapes with equal area.
pub fn compare_shapes(cfg: &SystemConfig, mode: Mode, sideband_rabi: f64) -> Result<[TransferReport; 2]> {
    let mut out = Vec::with_capacity(2);
    for shape in [PulseShape::Rectangular, PulseShape::Sine] {
        let stark = calibrate_stark(cfg, shape, mode, sideband_rabi)?;
        out.push(transfer_report(cfg, &SidebandPulse { shape, mode, sideband_rabi, stark, phase: 0.0 })?);
    }
    Ok([out[0], out[1]])
}
