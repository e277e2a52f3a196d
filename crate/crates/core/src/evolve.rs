//! Propagators: exact evolution under a constant Hamiltonian and adaptive
//! integration for time-dependent drives.

use std::f64::consts::PI;

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::hamiltonians::HamiltonianTerm;
use crate::hilbert::{CMatrix, CVector, HilbertSpace, Operator, QuantumState, StateVector, C64, I, ZERO};

/// Norm drift tolerated (and then removed by renormalization) in
/// time-dependent runs.
pub const NORM_DRIFT_BOUND: f64 = 1e-9;

struct Block {
    indices: Vec<usize>,
    vectors: CMatrix,
    energies: Vec<f64>,
}

/// Spectral decomposition of a constant Hermitian Hamiltonian, split into
/// its connected blocks so that `exp(−iHt)` is cheap to evaluate for many `t`.
pub struct Propagator {
    space: HilbertSpace,
    blocks: Vec<Block>,
}

impl Propagator {
    pub fn new(h: &Operator) -> Result<Self> {
        if !h.is_hermitian() {
            return Err(Error::invalid(format!(
                "Hamiltonian is not Hermitian (deviation {:e})",
                h.hermitian_deviation()
            )));
        }
        let m = h.matrix();
        let n = m.nrows();
        let mut parent: Vec<usize> = (0..n).collect();
        fn root(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for j in 0..n {
            for i in 0..j {
                if m[(i, j)] != ZERO {
                    let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            let r = root(&mut parent, i);
            groups[r].push(i);
        }
        let blocks = groups
            .into_iter()
            .filter(|g| !g.is_empty())
            .map(|indices| {
                let k = indices.len();
                let sub = CMatrix::from_fn(k, k, |r, c| m[(indices[r], indices[c])]);
                if k == 1 {
                    Block {
                        indices,
                        vectors: CMatrix::identity(1, 1),
                        energies: vec![sub[(0, 0)].re],
                    }
                } else {
                    let eig = SymmetricEigen::new(sub);
                    Block {
                        indices,
                        energies: eig.eigenvalues.iter().copied().collect(),
                        vectors: eig.eigenvectors,
                    }
                }
            })
            .collect();
        Ok(Self {
            space: *h.space(),
            blocks,
        })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    /// `exp(−iHt)|ψ⟩`.
    pub fn apply(&self, state: &StateVector, t: f64) -> Result<StateVector> {
        if state.space() != &self.space {
            return Err(Error::DimensionMismatch {
                expected: self.space.dim(),
                found: state.space().dim(),
            });
        }
        let src = state.amplitudes();
        let mut out = CVector::zeros(src.len());
        for b in &self.blocks {
            let k = b.indices.len();
            let local = CVector::from_iterator(k, b.indices.iter().map(|&i| src[i]));
            if local.iter().all(|c| *c == ZERO) {
                continue;
            }
            let mut coeff = b.vectors.ad_mul(&local);
            for (c, e) in coeff.iter_mut().zip(&b.energies) {
                *c *= C64::from_polar(1.0, -e * t);
            }
            let evolved = &b.vectors * coeff;
            for (r, &i) in b.indices.iter().enumerate() {
                out[i] = evolved[r];
            }
        }
        StateVector::from_amplitudes(self.space, out)
    }

    /// Dense `exp(−iHt)`.
    pub fn unitary(&self, t: f64) -> CMatrix {
        let n = self.space.dim();
        let mut u = CMatrix::zeros(n, n);
        for b in &self.blocks {
            let k = b.indices.len();
            let phases = CMatrix::from_diagonal(&CVector::from_iterator(
                k,
                b.energies.iter().map(|e| C64::from_polar(1.0, -e * t)),
            ));
            let sub = &b.vectors * phases * b.vectors.adjoint();
            for (r, &i) in b.indices.iter().enumerate() {
                for (c, &j) in b.indices.iter().enumerate() {
                    u[(i, j)] = sub[(r, c)];
                }
            }
        }
        u
    }
}

/// `exp(−iHt)|ψ⟩` via Hermitian eigendecomposition.
pub fn evolve_const(state: &StateVector, h: &Operator, t: f64) -> Result<StateVector> {
    Propagator::new(h)?.apply(state, t)
}

/// Time profile of a driven term: amplitude scale and extra phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Envelope {
    /// Unit amplitude, no extra phase.
    Constant,
    /// `(π/2) sin(πt/T)` amplitude; the field carries the AC-Stark
    /// compensating phase `χ(t) = (π²δ/8)(2πt − T sin(2πt/T))`, which enters
    /// the `σ⁺` coupling as `e^{−iχ(t)}`.
    Sine { duration: f64, stark: f64 },
}

impl Envelope {
    pub fn amplitude(&self, t: f64) -> f64 {
        match *self {
            Envelope::Constant => 1.0,
            Envelope::Sine { duration, .. } => {
                if (0.0..=duration).contains(&t) {
                    0.5 * PI * (PI * t / duration).sin()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn phase(&self, t: f64) -> f64 {
        match *self {
            Envelope::Constant => 0.0,
            Envelope::Sine { duration, stark } => {
                -PI * PI * stark / 8.0 * (2.0 * PI * t - duration * (2.0 * PI * t / duration).sin())
            }
        }
    }
}

/// A Hamiltonian term modulated by an envelope:
/// `H(t) = a(t) e^{i(δt + χ(t))} M + h.c.`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DrivenTerm {
    pub term: HamiltonianTerm,
    pub envelope: Envelope,
}

impl DrivenTerm {
    pub fn constant(term: HamiltonianTerm) -> Self {
        Self {
            term,
            envelope: Envelope::Constant,
        }
    }

    fn coefficient(&self, t: f64) -> C64 {
        let a = self.envelope.amplitude(t);
        if a == 0.0 {
            return ZERO;
        }
        C64::from_polar(a, self.term.detuning * t + self.envelope.phase(t))
    }
}

/// Sparse `(row, col, value)` entries of one raising matrix.
struct SparseCoupling {
    entries: Vec<(usize, usize, C64)>,
}

impl SparseCoupling {
    fn from_dense(m: &CMatrix) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)] != ZERO {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        Self { entries }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorOptions {
    /// Local error bound per step (max-norm on the state vector).
    pub tol: f64,
    /// Initial step; zero picks `T/1000`.
    pub initial_step: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            initial_step: 0.0,
            max_steps: 5_000_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PropagatorResult {
    pub state: StateVector,
    /// `|‖ψ(T)‖² − 1|` before renormalization.
    pub norm_drift: f64,
    pub steps: usize,
    pub rejected: usize,
    pub max_local_error: f64,
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Rhs {
    terms: Vec<(DrivenTerm, SparseCoupling)>,
}

impl Rhs {
    /// `dψ/dt = −i H(t) ψ`
    fn eval(&self, t: f64, psi: &CVector, out: &mut CVector) {
        out.fill(ZERO);
        for (term, coupling) in &self.terms {
            let c = term.coefficient(t);
            if c == ZERO {
                continue;
            }
            let cc = c.conj();
            for &(i, j, m) in &coupling.entries {
                // H_ij = c M_ij, H_ji = conj(c M_ij)
                out[i] += c * m * psi[j];
                out[j] += cc * m.conj() * psi[i];
            }
        }
        *out *= -I;
    }
}

/// Adaptive Dormand–Prince 5(4) integration of `i dψ/dt = H(t)ψ` over
/// `[0, duration]` with PI step-size control.
pub fn evolve_timedep(
    state: &StateVector,
    terms: &[DrivenTerm],
    duration: f64,
    opts: IntegratorOptions,
) -> Result<PropagatorResult> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::invalid("duration must be positive"));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let space = *state.space();
    let rhs = Rhs {
        terms: terms
            .iter()
            .map(|t| (*t, SparseCoupling::from_dense(&t.term.raising_matrix(space))))
            .collect(),
    };
    let norm0 = state.norm_sqr();
    let n = space.dim();
    let mut y = state.amplitudes().clone();
    let mut k: Vec<CVector> = (0..7).map(|_| CVector::zeros(n)).collect();
    let mut stage = CVector::zeros(n);
    let mut t = 0.0;
    let mut h = if opts.initial_step > 0.0 {
        opts.initial_step
    } else {
        duration / 1000.0
    };
    let h_min = duration * 1e-15;
    let (alpha, beta) = (0.7 / 5.0, 0.4 / 5.0);
    let mut err_prev: f64 = 1.0;
    let (mut steps, mut rejected, mut max_err) = (0usize, 0usize, 0.0f64);

    rhs.eval(t, &y, &mut k[0]);
    while t < duration {
        if steps + rejected >= opts.max_steps {
            return Err(Error::Numerical(format!(
                "integrator exceeded {} steps",
                opts.max_steps
            )));
        }
        let last = t + h >= duration;
        if last {
            h = duration - t;
        }
        for s in 1..7 {
            stage.copy_from(&y);
            for (r, a) in A[s].iter().enumerate().take(s) {
                if *a != 0.0 {
                    stage.axpy(C64::new(h * a, 0.0), &k[r], ONE_C);
                }
            }
            rhs.eval(t + C[s] * h, &stage, &mut k[s]);
        }
        // stage 6 was evaluated at the 5th-order solution (FSAL)
        let mut err: f64 = 0.0;
        for i in 0..n {
            let mut e = ZERO;
            for s in 0..7 {
                e += k[s][i] * (B5[s] - B4[s]);
            }
            err = err.max((e * h).norm());
        }
        let ratio = err / opts.tol;
        if ratio <= 1.0 {
            y.copy_from(&stage);
            t = if last { duration } else { t + h };
            steps += 1;
            max_err = max_err.max(err);
            let k6 = k[6].clone();
            k[0] = k6;
            let fac = if ratio == 0.0 {
                5.0
            } else {
                (0.9 * ratio.powf(-alpha) * err_prev.powf(beta)).clamp(0.2, 5.0)
            };
            err_prev = ratio.max(1e-4);
            h *= fac;
        } else {
            rejected += 1;
            h *= (0.9 * ratio.powf(-alpha)).clamp(0.1, 0.9);
            if h < h_min {
                return Err(Error::StepUnderflow { t, h });
            }
        }
    }
    let norm1 = y.norm_squared();
    let drift = (norm1 - norm0).abs();
    if drift >= NORM_DRIFT_BOUND {
        return Err(Error::NormDrift {
            drift,
            bound: NORM_DRIFT_BOUND,
        });
    }
    if norm1 > 0.0 {
        y *= C64::new((norm0 / norm1).sqrt(), 0.0);
    }
    Ok(PropagatorResult {
        state: StateVector::from_amplitudes(space, y)?,
        norm_drift: drift,
        steps,
        rejected,
        max_local_error: max_err,
    })
}

const ONE_C: C64 = C64::new(1.0, 0.0);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::{carrier_h, output_drive_h, sideband_h, SystemConfig, TransitionKind};
    use crate::hilbert::{BasisState, Mode, Qubit};

    #[test]
    fn zero_time_is_identity() {
        let cfg = SystemConfig::default();
        let s = HilbertSpace::new(4, 4).unwrap();
        let psi = StateVector::noon(s, 2, 0.4).unwrap();
        let h = output_drive_h(&cfg, s, 0.3).unwrap();
        let out = evolve_const(&psi, &h, 0.0).unwrap();
        assert!((out.amplitudes() - psi.amplitudes()).norm() < 1e-14);
    }

    #[test]
    fn carrier_pi_pulse() {
        let cfg = SystemConfig::default();
        let s = HilbertSpace::new(2, 2).unwrap();
        let h = carrier_h(&cfg, s, 0.0);
        let out = evolve_const(&StateVector::vacuum(s), &h, PI / cfg.rabi_carrier).unwrap();
        assert!((out.population(BasisState::new(Qubit::Up, 0, 0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_hermitian() {
        let s = HilbertSpace::new(2, 2).unwrap();
        let op = Operator::sigma_plus(s);
        assert!(Propagator::new(&op).is_err());
    }

    #[test]
    fn composition_and_reversal() {
        let cfg = SystemConfig::default();
        let s = HilbertSpace::new(5, 5).unwrap();
        let h = &sideband_h(&cfg, s, Mode::X, 0.2) + &carrier_h(&cfg, s, 1.0);
        let p = Propagator::new(&h).unwrap();
        let psi = StateVector::basis_state(s, Qubit::Down, 1, 2).unwrap();
        let (t1, t2) = (3.1e-6, 4.7e-6);
        let a = p.apply(&p.apply(&psi, t1).unwrap(), t2).unwrap();
        let b = p.apply(&psi, t1 + t2).unwrap();
        assert!((a.amplitudes() - b.amplitudes()).norm() < 1e-12);
        let back = p.apply(&b, -(t1 + t2)).unwrap();
        assert!((back.amplitudes() - psi.amplitudes()).norm() < 1e-12);
        let u = p.unitary(t1);
        let dense = psi.transformed(&u);
        assert!((dense.amplitudes() - p.apply(&psi, t1).unwrap().amplitudes()).norm() < 1e-12);
        let eye = u.adjoint() * &u;
        assert!((eye - CMatrix::identity(s.dim(), s.dim())).norm() < 1e-11);
    }

    #[test]
    fn timedep_constant_envelope_matches_exact() {
        let cfg = SystemConfig::default();
        let s = HilbertSpace::new(4, 3).unwrap();
        let term = HamiltonianTerm::resonant(TransitionKind::BlueSideband(Mode::X), cfg.sideband_rabi(Mode::X), 0.3);
        let psi = StateVector::basis_state(s, Qubit::Down, 1, 0).unwrap();
        let t = 1.3 * PI / cfg.sideband_rabi(Mode::X);
        let tol = 1e-10;
        let num = evolve_timedep(&psi, &[DrivenTerm::constant(term)], t, IntegratorOptions { tol, ..Default::default() }).unwrap();
        let exact = evolve_const(&psi, &term.operator_at(s, 0.0), t).unwrap();
        let err = (num.state.amplitudes() - exact.amplitudes()).camax();
        assert!(err < 100.0 * tol, "err {err}");
        assert!(num.norm_drift < NORM_DRIFT_BOUND);
    }

    #[test]
    fn timedep_time_reversal() {
        let cfg = SystemConfig::default();
        let s = HilbertSpace::new(3, 3).unwrap();
        let term = HamiltonianTerm {
            kind: TransitionKind::BlueSideband(Mode::Y),
            amplitude: cfg.sideband_rabi(Mode::Y),
            phase: 0.1,
            detuning: 2e4,
        };
        let t = 2.0 * PI / cfg.sideband_rabi(Mode::Y);
        let tol = 1e-11;
        let opts = IntegratorOptions { tol, ..Default::default() };
        let psi = StateVector::basis_state(s, Qubit::Down, 0, 1).unwrap();
        let fwd = evolve_timedep(&psi, &[DrivenTerm::constant(term)], t, opts).unwrap();
        // reverse: H(t) → −H(T − t) is generated by negating the amplitude,
        // shifting the phase to the end point and flipping the detuning.
        let rev_term = HamiltonianTerm {
            amplitude: -term.amplitude,
            phase: term.phase + term.detuning * t,
            detuning: -term.detuning,
            ..term
        };
        let back = evolve_timedep(&fwd.state, &[DrivenTerm::constant(rev_term)], t, opts).unwrap();
        let err = (back.state.amplitudes() - psi.amplitudes()).camax();
        assert!(err < 10.0 * tol * (fwd.steps + back.steps) as f64, "err {err}");
        assert!(err < 1e-8);
    }

    #[test]
    fn invalid_duration() {
        let s = HilbertSpace::new(2, 2).unwrap();
        let psi = StateVector::vacuum(s);
        assert!(evolve_timedep(&psi, &[], 0.0, IntegratorOptions::default()).is_err());
    }

    #[test]
    fn sine_envelope_area() {
        let env = Envelope::Sine { duration: 2.0, stark: 0.0 };
        let n = 200_000;
        let h = 2.0 / n as f64;
        let area: f64 = (0..n).map(|i| env.amplitude((i as f64 + 0.5) * h) * h).sum();
        assert!((area - 2.0).abs() < 1e-9);
        assert_eq!(env.amplitude(2.5), 0.0);
    }
}
