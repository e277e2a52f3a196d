//! Imperfection models: quasi-static trap-frequency offsets, arithmetic
//! operation failures and the motional decay envelope.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::SystemConfig;
use crate::hilbert::{DensityMatrix, HilbertSpace, Mode, QuantumState, StateVector};
use crate::measure::point_rng;
use crate::pulses::{check_edge, noon_sequence, rotate_sideband_pairs, sideband_angle, PulseOp, PulseSequence};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Standard deviation of the per-shot trap-frequency offset (rad/s).
    pub sigma_trap: f64,
    /// Success probability of one arithmetic operation.
    pub op_fidelity: f64,
    /// Motional decay rate λ (1/s) of the fluorescence envelope.
    pub decay: f64,
    pub decay_exponent: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_trap: 2.0 * PI * 10e3,
            op_fidelity: 0.9776,
            decay: 0.0,
            decay_exponent: 0.7,
            seed: 2024,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_trap >= 0.0 && self.sigma_trap.is_finite()) {
            return Err(Error::InvalidConfiguration("sigma_trap must be non-negative".into()));
        }
        if !(self.op_fidelity > 0.0 && self.op_fidelity <= 1.0) {
            return Err(Error::InvalidConfiguration("op_fidelity must lie in (0, 1]".into()));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return Err(Error::InvalidConfiguration("decay must be non-negative".into()));
        }
        if !self.decay_exponent.is_finite() {
            return Err(Error::InvalidConfiguration("decay exponent must be finite".into()));
        }
        Ok(())
    }
}

/// One shot's trap-frequency offsets `(δ_x, δ_y)`.
pub fn sample_detuning<R: Rng + ?Sized>(cfg: &NoiseConfig, rng: &mut R) -> Result<(f64, f64)> {
    cfg.validate()?;
    if cfg.sigma_trap == 0.0 {
        return Ok((0.0, 0.0));
    }
    let normal = Normal::new(0.0, cfg.sigma_trap).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok((normal.sample(rng), normal.sample(rng)))
}

/// Applies `seq` with every sideband pulse detuned by the mode's offset:
/// the pair rotation becomes a generalized Rabi rotation over the pulse
/// duration `θ/(ηΩ√(n_ref+1))`. Carrier pulses are unaffected.
pub fn apply_sequence_detuned(
    state: &StateVector,
    seq: &PulseSequence,
    cfg: &SystemConfig,
    detuning: (f64, f64),
) -> Result<StateVector> {
    let mut cur = state.clone();
    for (i, op) in seq.ops().iter().enumerate() {
        for prim in op.expand() {
            cur = apply_detuned(&cur, &prim, cfg, detuning).map_err(|e| e.at_step(i))?;
        }
    }
    Ok(cur)
}

fn apply_detuned(state: &StateVector, op: &PulseOp, cfg: &SystemConfig, detuning: (f64, f64)) -> Result<StateVector> {
    match *op {
        PulseOp::Sideband { mode, theta, phase, ref_n } => {
            let delta = match mode {
                Mode::X => detuning.0,
                Mode::Y => detuning.1,
            };
            if delta == 0.0 {
                return op.apply(state);
            }
            op.validate()?;
            if ref_n + 1 >= state.space().mode_dim(mode) {
                return op.apply(state);
            }
            check_edge(state, mode)?;
            let duration = theta / (cfg.sideband_rabi(mode) * ((ref_n + 1) as f64).sqrt());
            let eps = delta * duration;
            let mut out = state.clone();
            rotate_sideband_pairs(&mut out, mode, phase, |n| (sideband_angle(theta, n, ref_n), eps));
            Ok(out)
        }
        _ => op.apply(state),
    }
}

/// Shot-averaged density matrix of the compiled N-phonon NOON sequence
/// under quasi-static trap-frequency noise. Shot `i` draws its offsets
/// from stream `i` of the seed.
pub fn noisy_generation(
    n: usize,
    system: &SystemConfig,
    noise: &NoiseConfig,
    shots: usize,
) -> Result<DensityMatrix> {
    if shots == 0 {
        return Err(Error::invalid("shots must be at least 1"));
    }
    system.validate()?;
    noise.validate()?;
    let seq = noon_sequence(n)?;
    let space = HilbertSpace::for_noon(n);
    let start = StateVector::vacuum(space);
    let states: Vec<StateVector> = (0..shots)
        .into_par_iter()
        .map(|i| {
            let det = sample_detuning(noise, &mut point_rng(noise.seed, i))?;
            apply_sequence_detuned(&start, &seq, system, det)
        })
        .collect::<Result<_>>()?;
    let w = 1.0 / shots as f64;
    let mut rho = DensityMatrix::zeros(space);
    for psi in &states {
        rho.add_pure(w, psi);
    }
    Ok(rho)
}

/// Retained population after `k_ops` operations each succeeding with
/// probability `op_fidelity`.
pub fn op_success_channel(op_fidelity: f64, k_ops: u32) -> Result<f64> {
    if !(op_fidelity > 0.0 && op_fidelity <= 1.0) {
        return Err(Error::invalid("operation fidelity must lie in (0, 1]"));
    }
    Ok(op_fidelity.powi(k_ops as i32))
}

/// `exp(−(n+1)^x λ t)`: decay of the n-th fluorescence component.
pub fn decay_envelope(n: usize, decay: f64, exponent: f64, t: f64) -> f64 {
    (-((n + 1) as f64).powf(exponent) * decay * t).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrology::aligned_fidelity;
    use crate::pulses::apply_sequence;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_sigma_gives_zero_offsets() {
        let cfg = NoiseConfig { sigma_trap: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_detuning(&cfg, &mut rng).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn sample_std_matches_sigma() {
        let cfg = NoiseConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws: Vec<f64> = (0..50_000)
            .flat_map(|_| {
                let (a, b) = sample_detuning(&cfg, &mut rng).unwrap();
                [a, b]
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        assert!((var.sqrt() / cfg.sigma_trap - 1.0).abs() < 0.02);
    }

    #[test]
    fn seeded_draws_repeat() {
        let cfg = NoiseConfig::default();
        let a = sample_detuning(&cfg, &mut point_rng(9, 3)).unwrap();
        let b = sample_detuning(&cfg, &mut point_rng(9, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noiseless_generation_is_pure_ideal() {
        let sys = SystemConfig::default();
        let cfg = NoiseConfig { sigma_trap: 0.0, ..Default::default() };
        let rho = noisy_generation(3, &sys, &cfg, 5).unwrap();
        let ideal = apply_sequence(&StateVector::vacuum(HilbertSpace::for_noon(3)), &noon_sequence(3).unwrap()).unwrap();
        let diff = rho.matrix() - ideal.to_density().matrix();
        assert!(diff.camax() < 1e-12);
    }

    #[test]
    fn single_shot_is_pure_and_noisy_state_valid() {
        let sys = SystemConfig::default();
        let rho = noisy_generation(2, &sys, &NoiseConfig::default(), 1).unwrap();
        let purity = (rho.matrix() * rho.matrix()).trace().re;
        assert!((purity - 1.0).abs() < 1e-10);
        let rho = noisy_generation(4, &sys, &NoiseConfig::default(), 40).unwrap();
        rho.validate().unwrap();
        assert!((rho.trace() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn detuning_degrades_single_run() {
        let sys = SystemConfig::default();
        let space = HilbertSpace::for_noon(3);
        let out = apply_sequence_detuned(&StateVector::vacuum(space), &noon_sequence(3).unwrap(), &sys, (2e4, -3e4)).unwrap();
        assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
        assert!(aligned_fidelity(&out, 3) < 0.999);
    }

    #[test]
    fn channel_values() {
        assert!((op_success_channel(0.9776, 10).unwrap() - 0.797).abs() < 1e-3);
        assert!((op_success_channel(0.9778, 18).unwrap() - 0.667).abs() < 1e-3);
        assert_eq!(op_success_channel(0.5, 0).unwrap(), 1.0);
        assert!(op_success_channel(1.5, 2).is_err());
        assert_eq!(decay_envelope(3, 0.0, 0.7, 1.0), 1.0);
    }
}
