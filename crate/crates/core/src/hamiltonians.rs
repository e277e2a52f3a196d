//! Interaction-frame Hamiltonians for the carrier and motional sidebands
//! (ħ = 1, all frequencies angular).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{BasisState, CMatrix, HilbertSpace, LadderKind, Mode, Operator, Qubit, C64, I};

const TWO_PI: f64 = 2.0 * PI;

/// Trap, qubit and drive parameters of a single ion with two radial modes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Trap frequency of mode X (rad/s).
    pub omega_x: f64,
    /// Trap frequency of mode Y (rad/s).
    pub omega_y: f64,
    /// Qubit splitting (rad/s).
    pub omega_hf: f64,
    pub eta_x: f64,
    pub eta_y: f64,
    /// Carrier Rabi frequency (rad/s).
    pub rabi_carrier: f64,
    /// Bare Rabi frequency of the X sideband drive; the sideband Rabi
    /// frequency is `eta_x * rabi_x`.
    pub rabi_x: f64,
    pub rabi_y: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let sideband = TWO_PI * 50e3;
        Self {
            omega_x: TWO_PI * 3.2e6,
            omega_y: TWO_PI * 2.6e6,
            omega_hf: TWO_PI * 12.6428e9,
            eta_x: 0.0538,
            eta_y: 0.0597,
            rabi_carrier: TWO_PI * 250e3,
            rabi_x: sideband / 0.0538,
            rabi_y: sideband / 0.0597,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, eta) in [("eta_x", self.eta_x), ("eta_y", self.eta_y)] {
            if !(eta > 0.0 && eta < 0.3) {
                return Err(Error::InvalidConfiguration(format!(
                    "{name} = {eta} outside the Lamb-Dicke regime (0, 0.3)"
                )));
            }
        }
        for (name, v) in [
            ("omega_x", self.omega_x),
            ("omega_y", self.omega_y),
            ("omega_hf", self.omega_hf),
            ("rabi_carrier", self.rabi_carrier),
            ("rabi_x", self.rabi_x),
            ("rabi_y", self.rabi_y),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfiguration(format!("{name} must be positive")));
            }
        }
        if self.omega_x == self.omega_y {
            return Err(Error::InvalidConfiguration(
                "mode frequencies must differ".into(),
            ));
        }
        Ok(())
    }

    pub fn eta(&self, mode: Mode) -> f64 {
        match mode {
            Mode::X => self.eta_x,
            Mode::Y => self.eta_y,
        }
    }

    pub fn trap_frequency(&self, mode: Mode) -> f64 {
        match mode {
            Mode::X => self.omega_x,
            Mode::Y => self.omega_y,
        }
    }

    /// `η_M Ω_M`, the Rabi frequency of the `|↓,0⟩ ↔ |↑,1⟩` sideband pair.
    pub fn sideband_rabi(&self, mode: Mode) -> f64 {
        match mode {
            Mode::X => self.eta_x * self.rabi_x,
            Mode::Y => self.eta_y * self.rabi_y,
        }
    }

    /// `Ω_O = √2 η_X Ω_X`, provided the two sideband drives are matched.
    pub fn output_rabi(&self) -> Result<f64> {
        let gx = self.sideband_rabi(Mode::X);
        let gy = self.sideband_rabi(Mode::Y);
        if (gx - gy).abs() > 1e-9 * gx.abs().max(gy.abs()) {
            return Err(Error::InvalidConfiguration(format!(
                "output-mode drive needs eta_x*rabi_x = eta_y*rabi_y (got {gx} vs {gy})"
            )));
        }
        Ok(std::f64::consts::SQRT_2 * gx)
    }

    /// Copy with both sideband drives rescaled so that `Ω_O` equals `omega_o`.
    pub fn with_output_rabi(&self, omega_o: f64) -> Self {
        let g = omega_o / std::f64::consts::SQRT_2;
        Self {
            rabi_x: g / self.eta_x,
            rabi_y: g / self.eta_y,
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransitionKind {
    Carrier,
    BlueSideband(Mode),
    RedSideband(Mode),
}

impl TransitionKind {
    /// Transition frequency relative to the qubit splitting.
    pub fn frequency(&self, cfg: &SystemConfig) -> f64 {
        match self {
            TransitionKind::Carrier => 0.0,
            TransitionKind::BlueSideband(m) => cfg.trap_frequency(*m),
            TransitionKind::RedSideband(m) => -cfg.trap_frequency(*m),
        }
    }
}

/// One coupling term `H = e^{iδt} M + h.c.` with
///
/// * carrier: `M = (Ω/2) e^{iφ} σ⁺`
/// * blue sideband: `M = (iΩ/2) e^{iφ} σ⁺ a†`
/// * red sideband: `M = (iΩ/2) e^{iφ} σ⁺ a`
///
/// where `Ω` is `amplitude` (already including any η factor).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianTerm {
    pub kind: TransitionKind,
    pub amplitude: f64,
    pub phase: f64,
    pub detuning: f64,
}

impl HamiltonianTerm {
    pub fn resonant(kind: TransitionKind, amplitude: f64, phase: f64) -> Self {
        Self {
            kind,
            amplitude,
            phase,
            detuning: 0.0,
        }
    }

    /// The `σ⁺`-side matrix `M` of the term (without the `e^{iδt}` factor).
    pub fn raising_matrix(&self, space: HilbertSpace) -> CMatrix {
        let pref = match self.kind {
            TransitionKind::Carrier => C64::from_polar(self.amplitude / 2.0, self.phase),
            _ => I * C64::from_polar(self.amplitude / 2.0, self.phase),
        };
        let op = Operator::from_basis_map(space, |b| {
            if b.qubit != Qubit::Down {
                return vec![];
            }
            let up = BasisState { qubit: Qubit::Up, ..b };
            match self.kind {
                TransitionKind::Carrier => vec![(pref, up)],
                TransitionKind::BlueSideband(m) => {
                    let n = b.occupation(m);
                    let amp = ((n + 1) as f64).sqrt();
                    vec![(pref * amp, up.with_occupation(m, n + 1))]
                }
                TransitionKind::RedSideband(m) => {
                    let n = b.occupation(m);
                    if n == 0 {
                        vec![]
                    } else {
                        vec![(pref * (n as f64).sqrt(), up.with_occupation(m, n - 1))]
                    }
                }
            }
        });
        op.into_matrix()
    }

    pub fn operator_at(&self, space: HilbertSpace, t: f64) -> Operator {
        let m = self.raising_matrix(space) * C64::from_polar(1.0, self.detuning * t);
        let h = &m + m.adjoint();
        Operator::wrap(space, h)
    }
}

pub fn carrier_h(cfg: &SystemConfig, space: HilbertSpace, phase: f64) -> Operator {
    HamiltonianTerm::resonant(TransitionKind::Carrier, cfg.rabi_carrier, phase).operator_at(space, 0.0)
}

pub fn sideband_h(cfg: &SystemConfig, space: HilbertSpace, mode: Mode, phase: f64) -> Operator {
    HamiltonianTerm::resonant(TransitionKind::BlueSideband(mode), cfg.sideband_rabi(mode), phase)
        .operator_at(space, 0.0)
}

/// Simultaneous X and Y blue-sideband drive, `H_X(0) + H_Y(φ)`, which equals
/// `(iΩ_O/2)(σ⁺a_O† − σ⁻a_O)` with `a_O = (a_X + e^{−iφ}a_Y)/√2`.
pub fn output_drive_h(cfg: &SystemConfig, space: HilbertSpace, phase: f64) -> Result<Operator> {
    cfg.output_rabi()?;
    Ok(&sideband_h(cfg, space, Mode::X, 0.0) + &sideband_h(cfg, space, Mode::Y, phase))
}

/// A single laser drive: bare Rabi frequency, frequency offset from the
/// qubit resonance and phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Drive {
    pub rabi: f64,
    pub freq_offset: f64,
    pub phase: f64,
}

/// All first-order couplings a single drive produces, each with its
/// interaction-frame detuning `δ_k = ω_k − offset`.
pub fn offresonant_terms(cfg: &SystemConfig, drive: &Drive) -> Vec<HamiltonianTerm> {
    let kinds = [
        (TransitionKind::Carrier, 1.0),
        (TransitionKind::BlueSideband(Mode::X), cfg.eta_x),
        (TransitionKind::RedSideband(Mode::X), cfg.eta_x),
        (TransitionKind::BlueSideband(Mode::Y), cfg.eta_y),
        (TransitionKind::RedSideband(Mode::Y), cfg.eta_y),
    ];
    kinds
        .into_iter()
        .map(|(kind, eta)| HamiltonianTerm {
            kind,
            amplitude: eta * drive.rabi,
            phase: drive.phase,
            detuning: kind.frequency(cfg) - drive.freq_offset,
        })
        .collect()
}

/// Full first-order Hamiltonian of one drive at time `t`, keeping the
/// off-resonant terms the rotating-wave approximation would drop.
pub fn offresonant_h(cfg: &SystemConfig, space: HilbertSpace, drive: &Drive, t: f64) -> Operator {
    offresonant_terms(cfg, drive)
        .iter()
        .fold(Operator::zeros(space), |acc, term| &acc + &term.operator_at(space, t))
}

/// Generalized Laguerre polynomial `L_n^α(x)` by the three-term recurrence.
pub fn laguerre(n: usize, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * cur - (kf + alpha) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Debye-Waller corrected sideband frequency factor `L_n^1(η²)/√(n+1)`.
pub fn laguerre_rabi(n: usize, eta: f64) -> f64 {
    laguerre(n, 1.0, eta * eta) / ((n + 1) as f64).sqrt()
}

/// Number operator of the output mode, `a_O†a_O`, for a beam splitter of
/// mixing angle `theta`.
pub fn output_mode_lowering(space: HilbertSpace, theta: f64, phase: f64) -> Operator {
    let ax = Operator::mode(space, Mode::X, LadderKind::Lower);
    let ay = Operator::mode(space, Mode::Y, LadderKind::Lower);
    &(&ax * theta.cos()) + &(&ay * C64::from_polar(theta.sin(), -phase))
}
