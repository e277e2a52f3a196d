//! Choice of the output-mode drive duration and recovery of the NOON
//! phase from the phase-scanned sideband fluorescence.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::OutputModeProbe;
use crate::error::{Error, Result};
use crate::hilbert::{HilbertSpace, QuantumState, StateVector, C64};
use crate::optim::golden_section;

/// Minimum peak-to-peak fluorescence fringe accepted by [`align_phase`].
pub const FRINGE_THRESHOLD: f64 = 0.05;

/// Rotation angles scanned when searching for the optimal duration.
const THETA_WINDOW: f64 = 6.0 * PI;
const THETA_POINTS: usize = 6000;
const HARMONIC_SAMPLES: usize = 16;

/// `P_↑` after a resonant output-mode sideband rotation of angle `theta`
/// on the `|↓,n⟩→|↑,n+1⟩` ladder.
fn excited(dist: &[f64], theta: f64) -> f64 {
    dist.iter()
        .enumerate()
        .map(|(n, p)| p * (theta * ((n + 1) as f64).sqrt() / 2.0).sin().powi(2))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalDuration {
    /// `θ* = Ω_O t*` (rad).
    pub theta: f64,
    /// `t*` (s).
    pub time: f64,
    /// Peak-to-peak variation of `P_↑` over the phase at `θ*`.
    pub sensitivity: f64,
}

/// Scans `θ = Ω_O t` over `(0, 6π]` for the ideal N-phonon NOON state and
/// returns the angle where the phase fringe of `P_↑` is largest.
pub fn find_optimal_duration(n: usize, output_rabi: f64) -> Result<OptimalDuration> {
    if n == 0 {
        return Err(Error::invalid("NOON number must be at least 1"));
    }
    if !(output_rabi > 0.0 && output_rabi.is_finite()) {
        return Err(Error::invalid("output Rabi frequency must be positive"));
    }
    let space = HilbertSpace::for_noon(n);
    let psi = StateVector::noon(space, n, 0.0)?;
    let probe = OutputModeProbe::new(space)?;
    // the distribution is a_n + b_n cos(Nφ + c_n); extract the N-th harmonic
    let mut harmonic = vec![C64::new(0.0, 0.0); space.dx()];
    for j in 0..HARMONIC_SAMPLES {
        let phi = 2.0 * PI * j as f64 / (HARMONIC_SAMPLES as f64 * n as f64);
        let dist = probe.distribution(&psi, phi)?;
        let w = C64::from_polar(2.0 / HARMONIC_SAMPLES as f64, -(n as f64) * phi);
        for (h, p) in harmonic.iter_mut().zip(&dist) {
            *h += w * p;
        }
    }
    let sensitivity = |theta: f64| {
        let amp: C64 = harmonic
            .iter()
            .enumerate()
            .map(|(k, h)| h * (theta * ((k + 1) as f64).sqrt() / 2.0).sin().powi(2))
            .sum();
        2.0 * amp.norm()
    };
    let step = THETA_WINDOW / THETA_POINTS as f64;
    let best = (1..=THETA_POINTS)
        .map(|i| i as f64 * step)
        .max_by(|a, b| sensitivity(*a).total_cmp(&sensitivity(*b)))
        .unwrap_or(step);
    let (theta, neg) = golden_section(
        |t| -sensitivity(t),
        (best - step).max(0.0),
        (best + step).min(THETA_WINDOW),
        1e-12,
    );
    Ok(OptimalDuration { theta, time: theta / output_rabi, sensitivity: -neg })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseAlignment {
    /// Recovered `φ_S` in `[0, 2π/N)`.
    pub phase_s: f64,
    /// Peak-to-peak fringe of `P_↑`.
    pub contrast: f64,
    pub mean: f64,
    pub phases: Vec<f64>,
    pub signal: Vec<f64>,
}

/// Fits `C + R cos(Nφ − ψ)` to `P_↑(φ)` by linear least squares.
fn fringe(phases: &[f64], values: &[f64], n: usize) -> Result<(f64, f64, f64)> {
    if phases.len() < 3 {
        return Err(Error::Fit("need at least three phases".into()));
    }
    let k = n as f64;
    let a = DMatrix::from_fn(phases.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => (k * phases[i]).cos(),
        _ => (k * phases[i]).sin(),
    });
    let y = DVector::from_column_slice(values);
    let sol = a
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| Error::Fit(e.to_string()))?;
    Ok((sol[0], sol[1].hypot(sol[2]), sol[2].atan2(sol[1])))
}

fn fluorescence_fringe<S: QuantumState>(
    probe: &OutputModeProbe,
    state: &S,
    theta: f64,
    phases: &[f64],
) -> Result<Vec<f64>> {
    phases
        .iter()
        .map(|&phi| Ok(excited(&probe.distribution(state, phi)?, theta)))
        .collect()
}

/// Recovers `φ_S` from the output-mode fluorescence at rotation `theta`
/// scanned over `phases`. The fringe offset is referenced to the ideal
/// NOON state with `φ_S = 0` in the same space.
pub fn align_phase<S: QuantumState>(state: &S, n: usize, theta: f64, phases: &[f64]) -> Result<PhaseAlignment> {
    if n == 0 {
        return Err(Error::invalid("NOON number must be at least 1"));
    }
    let space = *state.space();
    let probe = OutputModeProbe::new(space)?;
    let signal = fluorescence_fringe(&probe, state, theta, phases)?;
    let (mean, amp, psi) = fringe(phases, &signal, n)?;
    if 2.0 * amp < FRINGE_THRESHOLD {
        return Err(Error::NoFringe { contrast: 2.0 * amp, threshold: FRINGE_THRESHOLD });
    }
    let reference = StateVector::noon(space, n, 0.0)?;
    let ref_signal = fluorescence_fringe(&probe, &reference, theta, phases)?;
    let (_, _, psi_ref) = fringe(phases, &ref_signal, n)?;
    let period = 2.0 * PI / n as f64;
    let phase_s = ((psi - psi_ref) / n as f64).rem_euclid(period);
    Ok(PhaseAlignment {
        phase_s: if (period - phase_s) < 1e-12 { 0.0 } else { phase_s },
        contrast: 2.0 * amp,
        mean,
        phases: phases.to_vec(),
        signal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{BasisState, DensityMatrix, Qubit};
    use crate::measure::phase_grid;

    /// Distance between two phases modulo `period`.
    fn modular_gap(a: f64, b: f64, period: f64) -> f64 {
        let d = (a - b).rem_euclid(period);
        d.min(period - d)
    }

    #[test]
    fn optimal_duration_for_five() {
        let d = find_optimal_duration(5, 1e5).unwrap();
        assert!((d.theta / PI - 3.55).abs() < 0.05, "θ* = {}π", d.theta / PI);
        assert!((d.time - d.theta / 1e5).abs() < 1e-18);
        assert!(find_optimal_duration(0, 1e5).is_err());
    }

    #[test]
    fn single_phonon_peak_is_a_rabi_extremum() {
        // N = 1 splits into |0⟩ and |1⟩ of the output mode; the fringe is
        // sin²(θ/2) − sin²(θ/√2), evaluated by brute force
        let d = find_optimal_duration(1, 1.0).unwrap();
        let brute = (1..=60_000)
            .map(|i| i as f64 * THETA_WINDOW / 60_000.0)
            .map(|t| ((t / 2.0).sin().powi(2) - (t / 2f64.sqrt()).sin().powi(2)).abs())
            .fold(0.0, f64::max);
        assert!((d.sensitivity - brute).abs() < 1e-6, "{} vs {brute}", d.sensitivity);
    }

    #[test]
    fn recovers_injected_phase() {
        for n in [1, 3, 5] {
            let theta = find_optimal_duration(n, 1.0).unwrap().theta;
            let space = HilbertSpace::for_noon(n);
            let period = 2.0 * PI / n as f64;
            for inject in [0.0, 0.15 * PI, 0.6 * PI] {
                let psi = StateVector::noon(space, n, inject).unwrap();
                let got = align_phase(&psi, n, theta, &phase_grid(48, period)).unwrap();
                assert!(modular_gap(got.phase_s, inject, period) < 1e-9, "N = {n}: {} vs {inject}", got.phase_s);
            }
        }
    }

    #[test]
    fn mixed_state_has_no_fringe() {
        let space = HilbertSpace::for_noon(3);
        let rho = DensityMatrix::diagonal(
            space,
            &[(0.5, BasisState::new(Qubit::Down, 3, 0)), (0.5, BasisState::new(Qubit::Down, 0, 3))],
        )
        .unwrap();
        let r = align_phase(&rho, 3, 2.9 * PI, &phase_grid(24, 2.0 * PI / 3.0));
        assert!(matches!(r, Err(Error::NoFringe { .. })));
    }
}
