//! Output-mode measurements: beam splitter, parity, fluorescence signals
//! and their fits, the staged projective protocol and phase alignment.

mod fluorescence;
mod phase;
mod projective;

pub use fluorescence::{
    fit_phonon_distribution, fluorescence_signal, output_parity_from_fit, simulate_output_fluorescence,
    FluorescenceModel, FluorescenceSignal, PhononFit, PhononFitOptions,
};
pub use phase::{align_phase, find_optimal_duration, OptimalDuration, PhaseAlignment, FRINGE_THRESHOLD};
pub use projective::{arithmetic_round_trip, projective_population, NoonBranch, ProjectiveOptions, ProjectiveResult};

use std::f64::consts::FRAC_PI_4;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::Propagator;
use crate::hamiltonians::output_mode_lowering;
use crate::hilbert::{CMatrix, HilbertSpace, LadderKind, Mode, Operator, QuantumState, C64, I};

/// `U(φ, θ) = exp[θ(e^{−iφ} a_X†a_Y − e^{iφ} a_X a_Y†)]`, so that
/// `U† a_X U = cos θ a_X + e^{−iφ} sin θ a_Y`.
pub fn beam_splitter(space: HilbertSpace, phase: f64, theta: f64) -> Result<Operator> {
    let ax = Operator::mode(space, Mode::X, LadderKind::Lower);
    let ay = Operator::mode(space, Mode::Y, LadderKind::Lower);
    let hop = &ax.adjoint() * &ay;
    let hop = &hop * C64::from_polar(theta, -phase);
    // U = exp(G) with G = hop − hop†; as exp(−iH) with H = iG
    let g = &hop - &hop.adjoint();
    let h = Operator::new(space, g.matrix() * I)?;
    Operator::new(space, Propagator::new(&h)?.unitary(1.0))
}

/// `e^{−iφ n_X}` as a diagonal.
fn phase_diagonal(space: &HilbertSpace, phase: f64) -> Vec<C64> {
    (0..space.dim())
        .map(|i| C64::from_polar(1.0, -phase * space.basis(i).nx as f64))
        .collect()
}

/// Balanced (θ = π/4) output-mode observables at arbitrary phase, built
/// from the φ = 0 beam splitter: `U(φ) = D U(0) D†` with `D = e^{−iφ n_X}`.
pub struct OutputModeProbe {
    space: HilbertSpace,
    splitter: CMatrix,
    parity: CMatrix,
}

impl OutputModeProbe {
    pub fn new(space: HilbertSpace) -> Result<Self> {
        let u0 = beam_splitter(space, 0.0, FRAC_PI_4)?;
        let px = Operator::parity(space, Mode::X);
        let parity = u0.matrix().adjoint() * px.matrix() * u0.matrix();
        Ok(Self { space, splitter: u0.into_matrix(), parity })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    /// `U(φ)† Π_X U(φ)`.
    pub fn parity_operator(&self, phase: f64) -> CMatrix {
        let d = phase_diagonal(&self.space, phase);
        CMatrix::from_fn(self.space.dim(), self.space.dim(), |i, j| d[i] * self.parity[(i, j)] * d[j].conj())
    }

    pub fn parity<S: QuantumState>(&self, state: &S, phase: f64) -> Result<f64> {
        self.space.check_same(state.space())?;
        Ok(state.expect_matrix(&self.parity_operator(phase)).re)
    }

    /// Phonon-number distribution of the output mode `a_O` (qubit traced
    /// out), up to the mode truncation.
    pub fn distribution<S: QuantumState>(&self, state: &S, phase: f64) -> Result<Vec<f64>> {
        self.space.check_same(state.space())?;
        // populations of n_X in U(φ)ψ; the leading D does not change them
        let d = phase_diagonal(&self.space, phase);
        let u = CMatrix::from_fn(self.space.dim(), self.space.dim(), |i, j| self.splitter[(i, j)] * d[j].conj());
        let pops = state.transformed(&u).populations();
        let mut dist = vec![0.0; self.space.dx()];
        for (i, p) in pops.iter().enumerate() {
            dist[self.space.basis(i).nx] += p;
        }
        Ok(dist)
    }
}

/// `⟨U(φ)† Π_X U(φ)⟩` at θ = π/4.
pub fn parity_expect<S: QuantumState>(state: &S, phase: f64) -> Result<f64> {
    OutputModeProbe::new(*state.space())?.parity(state, phase)
}

/// Same observable built from `exp(iπ a_O†a_O)` directly. Exact only on
/// states whose total phonon number fits in both modes' truncation.
pub fn parity_expect_direct<S: QuantumState>(state: &S, phase: f64) -> Result<f64> {
    let space = *state.space();
    let a = output_mode_lowering(space, FRAC_PI_4, phase);
    let n_o = &a.adjoint() * &a;
    let parity = Propagator::new(&n_o)?.unitary(-std::f64::consts::PI);
    Ok(state.expect_matrix(&parity).re)
}

/// Exact expectations or binomially sampled shots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shots {
    Exact,
    Sampled { shots: u64, seed: u64 },
}

/// Per-point RNG: one ChaCha stream per grid index, so results do not
/// depend on scheduling.
pub(crate) fn point_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Fraction of `shots` successes for success probability `p`.
pub(crate) fn sample_fraction(p: f64, shots: u64, seed: u64, index: usize) -> Result<f64> {
    let p = p.clamp(0.0, 1.0);
    let dist = Binomial::new(shots, p).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(dist.sample(&mut point_rng(seed, index)) as f64 / shots as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityScan {
    pub phases: Vec<f64>,
    pub values: Vec<f64>,
    /// One-sigma shot noise per point; `None` for exact scans.
    pub sigmas: Option<Vec<f64>>,
}

impl ParityScan {
    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }
}

/// Parity at each phase of `grid`, exact or shot-sampled.
pub fn parity_scan<S: QuantumState>(state: &S, grid: &[f64], shots: Shots) -> Result<ParityScan> {
    if grid.is_empty() {
        return Err(Error::invalid("phase grid is empty"));
    }
    let probe = OutputModeProbe::new(*state.space())?;
    let exact: Vec<f64> = grid
        .par_iter()
        .map(|&phi| probe.parity(state, phi))
        .collect::<Result<_>>()?;
    match shots {
        Shots::Exact => Ok(ParityScan { phases: grid.to_vec(), values: exact, sigmas: None }),
        Shots::Sampled { shots, seed } => {
            if shots == 0 {
                return Err(Error::invalid("shot count must be positive"));
            }
            let values: Vec<f64> = exact
                .par_iter()
                .enumerate()
                .map(|(i, v)| sample_fraction((1.0 + v) / 2.0, shots, seed, i).map(|f| 2.0 * f - 1.0))
                .collect::<Result<_>>()?;
            let sigmas = values.iter().map(|v| ((1.0 - v * v).max(0.0) / shots as f64).sqrt()).collect();
            Ok(ParityScan { phases: grid.to_vec(), values, sigmas: Some(sigmas) })
        }
    }
}

/// `points` phases evenly spaced over `[0, span)`.
pub fn phase_grid(points: usize, span: f64) -> Vec<f64> {
    (0..points).map(|i| span * i as f64 / points as f64).collect()
}
