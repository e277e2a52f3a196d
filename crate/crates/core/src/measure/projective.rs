//! Staged projective measurement of `|↓,N,0⟩` / `|↓,0,N⟩` populations with
//! arithmetic subtraction. Every map involved sends basis states to basis
//! states, so only the populations need tracking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{BasisState, HilbertSpace, Mode, QuantumState, Qubit};

/// Which NOON branch the protocol tests for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoonBranch {
    /// `|↓, N, 0⟩`
    AllX,
    /// `|↓, 0, N⟩`
    AllY,
}

impl NoonBranch {
    /// Mode holding the phonons in this branch.
    fn counted(self) -> Mode {
        match self {
            NoonBranch::AllX => Mode::X,
            NoonBranch::AllY => Mode::Y,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectiveOptions {
    /// Success probability of one arithmetic subtraction.
    pub op_fidelity: f64,
    /// Probability that a detection reports the wrong qubit level.
    pub detection_flip: f64,
}

impl Default for ProjectiveOptions {
    fn default() -> Self {
        Self { op_fidelity: 1.0, detection_flip: 0.0 }
    }
}

/// Branch probabilities of the protocol; they sum to the state's trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectiveResult {
    pub branch: NoonBranch,
    pub n: usize,
    /// Fluorescence at the final detection: the measured population.
    pub probability: f64,
    /// Population discarded by the three intermediate detections.
    pub eliminated: [f64; 3],
    /// Population lost to failed arithmetic operations.
    pub failed: f64,
    /// Dark outcome of the final detection.
    pub dark: f64,
    pub operations: usize,
}

impl ProjectiveResult {
    pub fn total(&self) -> f64 {
        self.probability + self.eliminated.iter().sum::<f64>() + self.failed + self.dark
    }
}

struct Ladder {
    space: HilbertSpace,
    pops: Vec<f64>,
    failed: f64,
}

impl Ladder {
    /// `|↓,n⟩→|↓,n−1⟩`, `|↓,0⟩→|↑,0⟩`, `|↑,n⟩→|↑,n+1⟩` on `mode`, succeeding
    /// with probability `f`.
    fn subtract(&mut self, mode: Mode, f: f64) -> Result<()> {
        let mut next = vec![0.0; self.pops.len()];
        let top = self.space.mode_dim(mode) - 1;
        for (i, &p) in self.pops.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let b = self.space.basis(i);
            let n = b.occupation(mode);
            let img = match (b.qubit, n) {
                (Qubit::Down, 0) => BasisState { qubit: Qubit::Up, ..b },
                (Qubit::Down, n) => b.with_occupation(mode, n - 1),
                (Qubit::Up, n) if n == top => {
                    return Err(Error::Truncation(format!(
                        "subtraction pushes population {p:e} past n = {top} of mode {mode}"
                    )))
                }
                (Qubit::Up, n) => b.with_occupation(mode, n + 1),
            };
            next[self.space.index(img)] += p * f;
        }
        self.failed += self.pops.iter().sum::<f64>() * (1.0 - f);
        self.pops = next;
        Ok(())
    }

    /// `|↓,n⟩→|↓,n+1⟩`, `|↑,0⟩→|↓,0⟩`, `|↑,n⟩→|↑,n−1⟩`: inverse of `subtract`.
    fn add(&mut self, mode: Mode, f: f64) -> Result<()> {
        let mut next = vec![0.0; self.pops.len()];
        let top = self.space.mode_dim(mode) - 1;
        for (i, &p) in self.pops.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let b = self.space.basis(i);
            let n = b.occupation(mode);
            let img = match (b.qubit, n) {
                (Qubit::Up, 0) => BasisState { qubit: Qubit::Down, ..b },
                (Qubit::Up, n) => b.with_occupation(mode, n - 1),
                (Qubit::Down, n) if n == top => {
                    return Err(Error::Truncation(format!(
                        "addition pushes population {p:e} past n = {top} of mode {mode}"
                    )))
                }
                (Qubit::Down, n) => b.with_occupation(mode, n + 1),
            };
            next[self.space.index(img)] += p * f;
        }
        self.failed += self.pops.iter().sum::<f64>() * (1.0 - f);
        self.pops = next;
        Ok(())
    }

    fn carrier_flip(&mut self) {
        let block = self.space.mode_space_dim();
        let (dn, up) = self.pops.split_at_mut(block);
        dn.swap_with_slice(up);
    }

    /// Keeps the "dark" (`|↓⟩`) outcome; returns the discarded population.
    fn detect_keep_down(&mut self, flip: f64) -> f64 {
        let block = self.space.mode_space_dim();
        let mut lost = 0.0;
        for (i, p) in self.pops.iter_mut().enumerate() {
            let keep = if i < block { 1.0 - flip } else { flip };
            lost += *p * (1.0 - keep);
            *p *= keep;
        }
        lost
    }
}

fn validate(opts: &ProjectiveOptions) -> Result<()> {
    if !(opts.op_fidelity > 0.0 && opts.op_fidelity <= 1.0) {
        return Err(Error::invalid("operation fidelity must lie in (0, 1]"));
    }
    if !(0.0..=1.0).contains(&opts.detection_flip) {
        return Err(Error::invalid("detection flip probability must lie in [0, 1]"));
    }
    Ok(())
}

/// Probability that the staged protocol reports the `branch` NOON component.
///
/// 1. detect, keep `|↓⟩`
/// 2. subtract once on the other mode, carrier π, detect (keeps an empty other mode)
/// 3. subtract `N` times on the counted mode, detect
/// 4. subtract once more; fluorescence means exactly `N` phonons were present
pub fn projective_population<S: QuantumState>(
    state: &S,
    branch: NoonBranch,
    n: usize,
    opts: &ProjectiveOptions,
) -> Result<ProjectiveResult> {
    validate(opts)?;
    let space = *state.space();
    let counted = branch.counted();
    if n == 0 || n + 1 >= space.mode_dim(counted) {
        return Err(Error::invalid(format!(
            "N = {n} must be positive and below the truncation of mode {counted} ({})",
            space.mode_dim(counted)
        )));
    }
    let f = opts.op_fidelity;
    let mut lad = Ladder { space, pops: state.populations(), failed: 0.0 };
    let mut eliminated = [0.0; 3];

    eliminated[0] = lad.detect_keep_down(opts.detection_flip);

    lad.subtract(counted.other(), f)?;
    lad.carrier_flip();
    eliminated[1] = lad.detect_keep_down(opts.detection_flip);

    for _ in 0..n {
        lad.subtract(counted, f)?;
    }
    eliminated[2] = lad.detect_keep_down(opts.detection_flip);

    lad.subtract(counted, f)?;
    let block = space.mode_space_dim();
    let dn: f64 = lad.pops[..block].iter().sum();
    let up: f64 = lad.pops[block..].iter().sum();
    let flip = opts.detection_flip;
    Ok(ProjectiveResult {
        branch,
        n,
        probability: up * (1.0 - flip) + dn * flip,
        eliminated,
        failed: lad.failed,
        dark: dn * (1.0 - flip) + up * flip,
        operations: n + 2,
    })
}

/// Population of `|↓,0,0⟩` left after `n` additions followed by `n`
/// subtractions on mode X, each succeeding with probability `op_fidelity`.
pub fn arithmetic_round_trip(n: usize, op_fidelity: f64) -> Result<f64> {
    validate(&ProjectiveOptions { op_fidelity, detection_flip: 0.0 })?;
    let space = HilbertSpace::new(n + 2, 1)?;
    let mut pops = vec![0.0; space.dim()];
    pops[space.index(BasisState::new(Qubit::Down, 0, 0))] = 1.0;
    let mut lad = Ladder { space, pops, failed: 0.0 };
    for _ in 0..n {
        lad.add(Mode::X, op_fidelity)?;
    }
    for _ in 0..n {
        lad.subtract(Mode::X, op_fidelity)?;
    }
    Ok(lad.pops[space.index(BasisState::new(Qubit::Down, 0, 0))])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{DensityMatrix, StateVector};

    #[test]
    fn ideal_noon_gives_half() {
        for n in 1..=9 {
            let s = HilbertSpace::for_noon(n);
            let psi = StateVector::noon(s, n, 0.4).unwrap();
            let a = projective_population(&psi, NoonBranch::AllX, n, &ProjectiveOptions::default()).unwrap();
            let b = projective_population(&psi, NoonBranch::AllY, n, &ProjectiveOptions::default()).unwrap();
            assert!((a.probability - 0.5).abs() < 1e-12);
            assert!((b.probability - 0.5).abs() < 1e-12);
            assert!((a.total() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn vacuum_is_eliminated() {
        let s = HilbertSpace::for_noon(3);
        let vac = StateVector::vacuum(s);
        let r = projective_population(&vac, NoonBranch::AllY, 3, &ProjectiveOptions::default()).unwrap();
        assert_eq!(r.probability, 0.0);
        assert!((r.eliminated[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn neighbouring_numbers_are_rejected() {
        let s = HilbertSpace::for_noon(4);
        let rho = DensityMatrix::diagonal(
            s,
            &[
                (0.25, BasisState::new(Qubit::Down, 0, 3)),
                (0.25, BasisState::new(Qubit::Down, 0, 5)),
                (0.25, BasisState::new(Qubit::Down, 1, 4)),
                (0.25, BasisState::new(Qubit::Down, 0, 4)),
            ],
        )
        .unwrap();
        let r = projective_population(&rho, NoonBranch::AllY, 4, &ProjectiveOptions::default()).unwrap();
        assert!((r.probability - 0.25).abs() < 1e-15);
        assert!((r.total() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn failures_scale_by_op_count() {
        let n = 3;
        let s = HilbertSpace::for_noon(n);
        let psi = StateVector::noon(s, n, 0.0).unwrap();
        let opts = ProjectiveOptions { op_fidelity: 0.97, detection_flip: 0.0 };
        let r = projective_population(&psi, NoonBranch::AllX, n, &opts).unwrap();
        assert!((r.probability - 0.5 * 0.97f64.powi(n as i32 + 2)).abs() < 1e-12);
        assert!(r.total() <= 1.0 + 1e-10);
    }

    #[test]
    fn round_trip_matches_power_law() {
        assert!((arithmetic_round_trip(5, 0.9776).unwrap() - 0.9776f64.powi(10)).abs() < 1e-12);
        assert!((arithmetic_round_trip(9, 0.9778).unwrap() - 0.9778f64.powi(18)).abs() < 1e-12);
        assert_eq!(arithmetic_round_trip(0, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn argument_checks() {
        let s = HilbertSpace::for_noon(2);
        let psi = StateVector::noon(s, 2, 0.0).unwrap();
        let bad = ProjectiveOptions { op_fidelity: 0.0, detection_flip: 0.0 };
        assert!(projective_population(&psi, NoonBranch::AllX, 2, &bad).is_err());
        assert!(projective_population(&psi, NoonBranch::AllX, 0, &ProjectiveOptions::default()).is_err());
        assert!(projective_population(&psi, NoonBranch::AllX, 5, &ProjectiveOptions::default()).is_err());
    }

    #[test]
    fn detector_flips_are_conserved() {
        let s = HilbertSpace::for_noon(2);
        let psi = StateVector::noon(s, 2, 0.0).unwrap();
        let opts = ProjectiveOptions { op_fidelity: 0.99, detection_flip: 0.02 };
        let r = projective_population(&psi, NoonBranch::AllY, 2, &opts).unwrap();
        assert!((r.total() - 1.0).abs() < 1e-12);
        assert!(r.probability < 0.5);
    }
}
