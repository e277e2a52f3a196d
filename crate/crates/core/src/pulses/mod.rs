//! Pulse instructions and their exact action on the qubit–two-mode state.
//!
//! Angles follow the `R_M(θ, φ, n)` convention: the stored angle `θ` is the
//! rotation of the `|↓, n⟩ ↔ |↑, n+1⟩` reference pair, and every other pair
//! `k` of the same mode rotates by `θ·√((k+1)/(n+1))`.

mod compile;
mod dsl;
pub mod shaping;

pub use compile::noon_sequence;
pub use dsl::{format_angle, parse_angle, parse_sequence};

use std::f64::consts::FRAC_PI_2;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{evolve_timedep, DrivenTerm, Envelope, IntegratorOptions};
use crate::hamiltonians::{HamiltonianTerm, TransitionKind};
use crate::hilbert::{BasisState, CMatrix, HilbertSpace, Mode, QuantumState, Qubit, StateVector, C64, I};

/// Population allowed on a Fock level a sideband pulse would push out of
/// the truncated space.
pub const EDGE_TOLERANCE: f64 = 1e-12;

const SHAPED_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PulseOp {
    /// Carrier rotation by `theta` with drive phase `phase`.
    Carrier { theta: f64, phase: f64 },
    /// Blue-sideband rotation `R_M(θ, φ, ref_n)`.
    Sideband {
        mode: Mode,
        theta: f64,
        phase: f64,
        ref_n: usize,
    },
    /// `C_M(a, b) = R_M(π/2, 0, a), R_M(π, π/2, b), R_M(π/2, 0, a)`.
    Composite { mode: Mode, a: usize, b: usize },
    /// Sine-envelope blue-sideband pulse of duration `duration`, sideband
    /// Rabi scale `amplitude` (rad/s, `|↓,0⟩↔|↑,1⟩` pair), AC-Stark
    /// compensation `stark` (rad/s) and phase.
    Shaped {
        mode: Mode,
        duration: f64,
        amplitude: f64,
        stark: f64,
        phase: f64,
    },
}

impl PulseOp {
    /// Primitive pulses this op stands for (a composite counts three).
    pub fn primitive_count(&self) -> usize {
        match self {
            PulseOp::Composite { .. } => 3,
            _ => 1,
        }
    }

    /// Composite ops as their three sideband rotations, everything else as is.
    pub fn expand(&self) -> Vec<PulseOp> {
        match *self {
            PulseOp::Composite { mode, a, b } => vec![
                PulseOp::Sideband { mode, theta: FRAC_PI_2, phase: 0.0, ref_n: a },
                PulseOp::Sideband { mode, theta: PI, phase: FRAC_PI_2, ref_n: b },
                PulseOp::Sideband { mode, theta: FRAC_PI_2, phase: 0.0, ref_n: a },
            ],
            op => vec![op],
        }
    }

    /// Parameter checks that do not depend on a space.
    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} must be finite")))
            }
        };
        match *self {
            PulseOp::Carrier { theta, phase } | PulseOp::Sideband { theta, phase, .. } => {
                finite(theta, "rotation angle")?;
                finite(phase, "phase")?;
                if theta < 0.0 {
                    return Err(Error::invalid("rotation angle must be non-negative"));
                }
            }
            PulseOp::Composite { a, b, .. } => {
                if a == b {
                    return Err(Error::invalid("composite pulse requires a≠b"));
                }
            }
            PulseOp::Shaped { duration, amplitude, stark, phase, .. } => {
                finite(amplitude, "amplitude")?;
                finite(stark, "Stark compensation")?;
                finite(phase, "phase")?;
                if !(duration > 0.0 && duration.is_finite()) {
                    return Err(Error::invalid("shaped pulse duration must be positive"));
                }
                if amplitude < 0.0 {
                    return Err(Error::invalid("shaped pulse amplitude must be non-negative"));
                }
            }
        }
        Ok(())
    }

    /// Ideal (noise-free) action on a state.
    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        self.validate()?;
        match *self {
            PulseOp::Carrier { theta, phase } => Ok(apply_carrier(state, theta, phase)),
            PulseOp::Sideband { mode, theta, phase, ref_n } => {
                apply_sideband(state, mode, theta, phase, ref_n)
            }
            PulseOp::Composite { mode, a, b } => composite(state, mode, a, b),
            PulseOp::Shaped { mode, duration, amplitude, stark, phase } => {
                apply_shaped(state, mode, duration, amplitude, stark, phase)
            }
        }
    }

    /// Dense matrix of the op on `space`, column by column.
    pub fn unitary(&self, space: HilbertSpace) -> Result<CMatrix> {
        let n = space.dim();
        let mut u = CMatrix::zeros(n, n);
        for j in 0..n {
            let b = space.basis(j);
            let col = StateVector::basis_state(space, b.qubit, b.nx, b.ny)?;
            let out = rotate_all(self, &col)?;
            u.set_column(j, out.amplitudes());
        }
        Ok(u)
    }
}

/// Apply without the edge-population check (used to materialize matrices).
fn rotate_all(op: &PulseOp, state: &StateVector) -> Result<StateVector> {
    match *op {
        PulseOp::Sideband { mode, theta, phase, ref_n } => {
            check_pair(state.space(), mode, ref_n)?;
            let mut out = state.clone();
            rotate_sideband_pairs(&mut out, mode, phase, |n| (sideband_angle(theta, n, ref_n), 0.0));
            Ok(out)
        }
        PulseOp::Composite { mode, a, b } => {
            op.validate()?;
            check_pair(state.space(), mode, a.max(b))?;
            op.expand().iter().try_fold(state.clone(), |s, p| rotate_all(p, &s))
        }
        PulseOp::Shaped { mode, duration, amplitude, stark, phase } => {
            op.validate()?;
            shaped_rotation(state, mode, duration, amplitude, stark, phase)
        }
        PulseOp::Carrier { .. } => op.apply(state),
    }
}

#[inline]
pub(crate) fn sideband_angle(theta: f64, n: usize, ref_n: usize) -> f64 {
    if n == ref_n {
        theta
    } else {
        theta * (((n + 1) as f64) / ((ref_n + 1) as f64)).sqrt()
    }
}

/// Carrier rotation of every `(|↓,n_x,n_y⟩, |↑,n_x,n_y⟩)` pair by `theta`.
pub fn apply_carrier(state: &StateVector, theta: f64, phase: f64) -> StateVector {
    let mut out = state.clone();
    let space = *state.space();
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    // U = [[c, −i e^{−iφ} s], [−i e^{iφ} s, c]] in (↓, ↑)
    let u01 = -I * C64::from_polar(s, -phase);
    let u10 = -I * C64::from_polar(s, phase);
    let block = space.mode_space_dim();
    let amps = out.amplitudes_mut();
    for i in 0..block {
        let (dn, up) = (amps[i], amps[i + block]);
        amps[i] = dn * c + u01 * up;
        amps[i + block] = u10 * dn + up * c;
    }
    out
}

fn check_pair(space: &HilbertSpace, mode: Mode, n: usize) -> Result<()> {
    if n + 1 >= space.mode_dim(mode) {
        return Err(Error::Truncation(format!(
            "sideband pair n = {n} of mode {mode} needs {} levels (have {})",
            n + 2,
            space.mode_dim(mode)
        )));
    }
    Ok(())
}

/// Errors if the top level of `mode` carries `|↓⟩` population that a blue
/// sideband would drive out of the truncation.
pub(crate) fn check_edge(state: &StateVector, mode: Mode) -> Result<()> {
    let space = *state.space();
    let top = space.mode_dim(mode) - 1;
    let other = space.mode_dim(mode.other());
    let pop: f64 = (0..other)
        .map(|m| {
            let b = BasisState::new(Qubit::Down, 0, 0)
                .with_occupation(mode, top)
                .with_occupation(mode.other(), m);
            state.amplitude(b).norm_sqr()
        })
        .sum();
    if pop > EDGE_TOLERANCE {
        return Err(Error::Truncation(format!(
            "population {pop:e} at n = {top} of mode {mode} would leave the truncated space"
        )));
    }
    Ok(())
}

/// Rotates each `(|↓,n⟩, |↑,n+1⟩)` pair of `mode` with rotation angle and
/// detuning angle given by `angles(n)`, under
/// `H t = [[−ε/2, −i(θ/2)e^{−iφ}], [i(θ/2)e^{iφ}, ε/2]]`.
pub(crate) fn rotate_sideband_pairs(
    state: &mut StateVector,
    mode: Mode,
    phase: f64,
    angles: impl Fn(usize) -> (f64, f64),
) {
    let space = *state.space();
    let d = space.mode_dim(mode);
    let d_other = space.mode_dim(mode.other());
    let amps = state.amplitudes_mut();
    let e_plus = C64::from_polar(1.0, phase);
    let e_minus = e_plus.conj();
    for n in 0..d.saturating_sub(1) {
        let (theta, eps) = angles(n);
        let w = theta.hypot(eps);
        if w == 0.0 {
            continue;
        }
        let (c, s) = ((w / 2.0).cos(), (w / 2.0).sin());
        let u00 = C64::new(c, s * eps / w);
        let u11 = C64::new(c, -s * eps / w);
        let u01 = -e_minus * (s * theta / w);
        let u10 = e_plus * (s * theta / w);
        for m in 0..d_other {
            let base = BasisState::new(Qubit::Down, 0, 0).with_occupation(mode.other(), m);
            let i_dn = space.index(base.with_occupation(mode, n));
            let i_up = space.index(BasisState { qubit: Qubit::Up, ..base.with_occupation(mode, n + 1) });
            let (dn, up) = (amps[i_dn], amps[i_up]);
            amps[i_dn] = u00 * dn + u01 * up;
            amps[i_up] = u10 * dn + u11 * up;
        }
    }
}

/// `R_M(θ, φ, ref_n)`: exact blue-sideband block rotation.
pub fn apply_sideband(
    state: &StateVector,
    mode: Mode,
    theta: f64,
    phase: f64,
    ref_n: usize,
) -> Result<StateVector> {
    PulseOp::Sideband { mode, theta, phase, ref_n }.validate()?;
    check_pair(state.space(), mode, ref_n)?;
    check_edge(state, mode)?;
    let mut out = state.clone();
    rotate_sideband_pairs(&mut out, mode, phase, |n| (sideband_angle(theta, n, ref_n), 0.0));
    Ok(out)
}

/// Composite pulse `C_M(a, b)`: π-transfer on both the `a` and `b` pairs.
pub fn composite(state: &StateVector, mode: Mode, a: usize, b: usize) -> Result<StateVector> {
    let op = PulseOp::Composite { mode, a, b };
    op.validate()?;
    check_pair(state.space(), mode, a.max(b))?;
    op.expand().iter().try_fold(state.clone(), |s, p| p.apply(&s))
}

fn apply_shaped(
    state: &StateVector,
    mode: Mode,
    duration: f64,
    amplitude: f64,
    stark: f64,
    phase: f64,
) -> Result<StateVector> {
    check_edge(state, mode)?;
    shaped_rotation(state, mode, duration, amplitude, stark, phase)
}

fn shaped_rotation(
    state: &StateVector,
    mode: Mode,
    duration: f64,
    amplitude: f64,
    stark: f64,
    phase: f64,
) -> Result<StateVector> {
    if stark == 0.0 {
        // envelope area equals the rectangular area, and without chirp all
        // instants commute
        let mut out = state.clone();
        let theta0 = amplitude * duration;
        rotate_sideband_pairs(&mut out, mode, phase, |n| (sideband_angle(theta0, n, 0), 0.0));
        return Ok(out);
    }
    let term = DrivenTerm {
        term: HamiltonianTerm::resonant(TransitionKind::BlueSideband(mode), amplitude, phase),
        envelope: Envelope::Sine { duration, stark },
    };
    let opts = IntegratorOptions {
        tol: SHAPED_TOLERANCE,
        ..Default::default()
    };
    Ok(evolve_timedep(state, &[term], duration, opts)?.state)
}

/// Ordered pulse schedule.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    ops: Vec<PulseOp>,
    /// Target NOON number when the sequence was compiled for one.
    target_n: Option<usize>,
}

impl PulseSequence {
    pub fn new(ops: Vec<PulseOp>) -> Self {
        Self { ops, target_n: None }
    }

    pub fn with_target(mut self, n: usize) -> Self {
        self.target_n = Some(n);
        self
    }

    pub fn ops(&self) -> &[PulseOp] {
        &self.ops
    }

    pub fn push(&mut self, op: PulseOp) {
        self.ops.push(op);
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn target_n(&self) -> Option<usize> {
        self.target_n
    }

    /// Number of primitive pulses, counting composites as three.
    pub fn primitive_count(&self) -> usize {
        self.ops.iter().map(PulseOp::primitive_count).sum()
    }

    /// `5N − 2` for a compiled NOON sequence.
    pub fn expected_count(&self) -> Option<usize> {
        self.target_n.map(|n| 5 * n - 2)
    }

    /// Sequence with composites replaced by their primitive rotations.
    pub fn expanded(&self) -> PulseSequence {
        PulseSequence {
            ops: self.ops.iter().flat_map(PulseOp::expand).collect(),
            target_n: self.target_n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, op) in self.ops.iter().enumerate() {
            op.validate().map_err(|e| e.at_step(i))?;
        }
        Ok(())
    }

    /// Canonical DSL text.
    pub fn to_text(&self) -> String {
        dsl::print_sequence(self)
    }
}

/// Applies the sequence left to right; errors name the failing step.
pub fn apply_sequence(state: &StateVector, seq: &PulseSequence) -> Result<StateVector> {
    seq.ops()
        .iter()
        .enumerate()
        .try_fold(state.clone(), |s, (i, op)| op.apply(&s).map_err(|e| e.at_step(i)))
}

/// Like [`apply_sequence`], also returning the state after every step.
pub fn apply_sequence_logged(
    state: &StateVector,
    seq: &PulseSequence,
) -> Result<(StateVector, Vec<StateVector>)> {
    let mut log = Vec::with_capacity(seq.len());
    let mut cur = state.clone();
    for (i, op) in seq.ops().iter().enumerate() {
        cur = op.apply(&cur).map_err(|e| e.at_step(i))?;
        log.push(cur.clone());
    }
    Ok((cur, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::ONE;

    fn bs(q: Qubit, nx: usize, ny: usize) -> BasisState {
        BasisState::new(q, nx, ny)
    }

    fn space() -> HilbertSpace {
        HilbertSpace::new(6, 6).unwrap()
    }

    fn assert_unitary(u: &CMatrix) {
        let n = u.nrows();
        let d = u.adjoint() * u - CMatrix::identity(n, n);
        assert!(d.camax() < 1e-12, "‖U†U − 1‖max = {}", d.camax());
    }

    #[test]
    fn carrier_pi_and_two_pi() {
        let s = space();
        let out = apply_carrier(&StateVector::vacuum(s), PI, 0.0);
        assert!((out.population(bs(Qubit::Up, 0, 0)) - 1.0).abs() < 1e-15);
        let psi = StateVector::noon(s, 2, 0.3).unwrap();
        let out = apply_carrier(&psi, 2.0 * PI, 0.7);
        assert!((out.amplitudes() + psi.amplitudes()).camax() < 1e-15);
    }

    #[test]
    fn carrier_swaps_final_noon_branches() {
        let s = space();
        let psi = StateVector::superposition(s, &[(ONE, bs(Qubit::Down, 3, 0)), (ONE, bs(Qubit::Up, 0, 3))]).unwrap();
        let out = apply_carrier(&psi, PI, 0.0);
        assert!((out.population(bs(Qubit::Up, 3, 0)) - 0.5).abs() < 1e-15);
        assert!((out.population(bs(Qubit::Down, 0, 3)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sideband_half_pulse_on_one_one() {
        let s = space();
        let psi = StateVector::basis_state(s, Qubit::Down, 1, 1).unwrap();
        let out = apply_sideband(&psi, Mode::X, FRAC_PI_2, 0.0, 1).unwrap();
        assert!((out.population(bs(Qubit::Up, 2, 1)) - 0.5).abs() < 1e-15);
        assert!((out.population(bs(Qubit::Down, 1, 1)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sideband_pi_and_angle_ratio() {
        let s = space();
        let out = apply_sideband(&StateVector::vacuum(s), Mode::X, PI, 0.0, 0).unwrap();
        assert!((out.population(bs(Qubit::Up, 1, 0)) - 1.0).abs() < 1e-15);
        // n = 3 pair turns by π·√4 = 2π... per pair angle ratio √(n+1)
        let psi = StateVector::basis_state(s, Qubit::Down, 3, 0).unwrap();
        let out = apply_sideband(&psi, Mode::X, PI, 0.0, 0).unwrap();
        // rotation by 2π on the pair: back to |↓,3,0⟩ with sign −1
        assert!((out.amplitude(bs(Qubit::Down, 3, 0)) + ONE).norm() < 1e-14);
        let out = apply_sideband(&psi, Mode::X, 2.0 * PI, 0.0, 0).unwrap();
        assert!((out.amplitude(bs(Qubit::Down, 3, 0)) - ONE).norm() < 1e-14);
    }

    #[test]
    fn sideband_matches_matrix_exponential() {
        use crate::evolve::evolve_const;
        use crate::hamiltonians::{sideband_h, SystemConfig};
        let cfg = SystemConfig::default();
        let s = space();
        let h = sideband_h(&cfg, s, Mode::Y, 0.8);
        let g = cfg.sideband_rabi(Mode::Y);
        let psi = StateVector::superposition(
            s,
            &[(ONE, bs(Qubit::Down, 1, 2)), (C64::new(0.3, 0.2), bs(Qubit::Up, 0, 4)), (I, bs(Qubit::Down, 2, 0))],
        )
        .unwrap();
        let theta = 1.37;
        let t = theta / (g * 2f64.sqrt());
        let exact = evolve_const(&psi, &h, t).unwrap();
        let fast = apply_sideband(&psi, Mode::Y, theta, 0.8, 1).unwrap();
        assert!((exact.amplitudes() - fast.amplitudes()).camax() < 1e-12);
    }

    #[test]
    fn truncation_errors() {
        let s = HilbertSpace::new(3, 3).unwrap();
        let psi = StateVector::vacuum(s);
        assert!(matches!(apply_sideband(&psi, Mode::X, PI, 0.0, 2), Err(Error::Truncation(_))));
        let top = StateVector::basis_state(s, Qubit::Down, 2, 0).unwrap();
        assert!(matches!(apply_sideband(&top, Mode::X, PI, 0.0, 0), Err(Error::Truncation(_))));
        assert!(composite(&psi, Mode::Y, 0, 2).is_err());
    }

    #[test]
    fn composite_rejects_equal_pairs() {
        let psi = StateVector::vacuum(space());
        assert!(composite(&psi, Mode::X, 2, 2).is_err());
        assert!(PulseOp::Sideband { mode: Mode::X, theta: -1.0, phase: 0.0, ref_n: 0 }.validate().is_err());
    }

    #[test]
    fn composite_transfers_both_pairs() {
        let s = HilbertSpace::new(4, 4).unwrap();
        // C_Y(0, 1) on the |↓,·,1⟩ component: pair b = 1 → |↑,·,2⟩
        let psi = StateVector::basis_state(s, Qubit::Down, 2, 1).unwrap();
        let out = composite(&psi, Mode::Y, 0, 1).unwrap();
        assert!((out.population(bs(Qubit::Up, 2, 2)) - 1.0).abs() < 1e-12);
        let psi = StateVector::basis_state(s, Qubit::Down, 2, 0).unwrap();
        let out = composite(&psi, Mode::Y, 0, 1).unwrap();
        assert!((out.population(bs(Qubit::Up, 2, 1)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn every_op_is_unitary() {
        let s = HilbertSpace::new(5, 4).unwrap();
        let ops = [
            PulseOp::Carrier { theta: 1.1, phase: 0.4 },
            PulseOp::Sideband { mode: Mode::X, theta: 2.3, phase: -0.9, ref_n: 2 },
            PulseOp::Sideband { mode: Mode::Y, theta: PI, phase: 0.0, ref_n: 0 },
            PulseOp::Composite { mode: Mode::X, a: 3, b: 0 },
            PulseOp::Composite { mode: Mode::Y, a: 0, b: 2 },
            PulseOp::Shaped { mode: Mode::X, duration: 1e-5, amplitude: 2e5, stark: 0.0, phase: 0.2 },
        ];
        for op in ops {
            assert_unitary(&op.unitary(s).unwrap());
        }
    }

    #[test]
    fn shaped_without_chirp_is_area_rotation() {
        let s = space();
        let amplitude = 2.0 * PI * 10e3;
        let duration = PI / amplitude;
        let op = PulseOp::Shaped { mode: Mode::X, duration, amplitude, stark: 0.0, phase: 0.0 };
        let out = op.apply(&StateVector::vacuum(s)).unwrap();
        assert!((out.population(bs(Qubit::Up, 1, 0)) - 1.0).abs() < 1e-12);
        // a tiny chirp goes through the integrator and stays close
        let chirped = PulseOp::Shaped { mode: Mode::X, duration, amplitude, stark: 1e-3, phase: 0.0 };
        let out2 = chirped.apply(&StateVector::vacuum(s)).unwrap();
        assert!((out2.population(bs(Qubit::Up, 1, 0)) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_sequence_is_identity() {
        let psi = StateVector::noon(space(), 2, 0.1).unwrap();
        let out = apply_sequence(&psi, &PulseSequence::default()).unwrap();
        assert_eq!(out, psi);
    }

    #[test]
    fn sequence_error_names_step() {
        let s = HilbertSpace::new(3, 3).unwrap();
        let seq = PulseSequence::new(vec![
            PulseOp::Sideband { mode: Mode::X, theta: PI, phase: 0.0, ref_n: 0 },
            PulseOp::Carrier { theta: PI, phase: 0.0 },
            PulseOp::Sideband { mode: Mode::X, theta: PI, phase: 0.0, ref_n: 1 },
            PulseOp::Carrier { theta: PI, phase: 0.0 },
            PulseOp::Sideband { mode: Mode::X, theta: PI, phase: 0.0, ref_n: 2 },
        ]);
        match apply_sequence(&StateVector::vacuum(s), &seq) {
            Err(Error::Step { index, .. }) => assert_eq!(index, 4),
            other => panic!("expected step error, got {other:?}"),
        }
        let (out, log) = apply_sequence_logged(&StateVector::vacuum(s), &PulseSequence::new(seq.ops()[..4].to_vec())).unwrap();
        assert_eq!(log.len(), 4);
        assert!((out.population(bs(Qubit::Down, 2, 0)) - 1.0).abs() < 1e-14);
    }
}
