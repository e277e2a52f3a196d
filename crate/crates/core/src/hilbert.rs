//! Composite Hilbert space of one qubit and two truncated motional modes.
//!
//! Basis states are `|σ, n_x, n_y⟩` with the flat index
//! `σ·d_x·d_y + n_x·d_y + n_y` (σ-major, then `n_x`, then `n_y`, with
//! `|↓⟩ = 0` and `|↑⟩ = 1`). The order is fixed so serialized states are
//! portable between runs and tools.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Population on the two highest Fock levels above which a run is flagged.
pub const LEAKAGE_BOUND: f64 = 1e-8;

/// Tolerance on `|‖ψ‖² − 1|` after a unitary map.
pub const NORM_TOLERANCE: f64 = 1e-10;

const HERMITIAN_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Qubit {
    Down,
    Up,
}

impl Qubit {
    pub fn index(self) -> usize {
        match self {
            Qubit::Down => 0,
            Qubit::Up => 1,
        }
    }

    pub fn flipped(self) -> Qubit {
        match self {
            Qubit::Down => Qubit::Up,
            Qubit::Up => Qubit::Down,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    X,
    Y,
}

impl Mode {
    pub fn other(self) -> Mode {
        match self {
            Mode::X => Mode::Y,
            Mode::Y => Mode::X,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::X => f.write_str("X"),
            Mode::Y => f.write_str("Y"),
        }
    }
}

/// A basis label `|σ, n_x, n_y⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BasisState {
    pub qubit: Qubit,
    pub nx: usize,
    pub ny: usize,
}

impl BasisState {
    pub fn new(qubit: Qubit, nx: usize, ny: usize) -> Self {
        Self { qubit, nx, ny }
    }

    pub fn occupation(&self, mode: Mode) -> usize {
        match mode {
            Mode::X => self.nx,
            Mode::Y => self.ny,
        }
    }

    pub fn with_occupation(self, mode: Mode, n: usize) -> Self {
        match mode {
            Mode::X => Self { nx: n, ..self },
            Mode::Y => Self { ny: n, ..self },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HilbertSpace {
    dx: usize,
    dy: usize,
}

impl HilbertSpace {
    pub fn new(dx: usize, dy: usize) -> Result<Self> {
        if dx == 0 || dy == 0 {
            return Err(Error::invalid(format!(
                "Fock truncation must be at least 1 (got d_x = {dx}, d_y = {dy})"
            )));
        }
        Ok(Self { dx, dy })
    }

    /// Default truncation for a target NOON state: `N + 4` levels per mode.
    pub fn for_noon(n: usize) -> Self {
        Self { dx: n + 4, dy: n + 4 }
    }

    pub fn dx(&self) -> usize {
        self.dx
    }

    pub fn dy(&self) -> usize {
        self.dy
    }

    pub fn mode_dim(&self, mode: Mode) -> usize {
        match mode {
            Mode::X => self.dx,
            Mode::Y => self.dy,
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.dx * self.dy
    }

    /// Dimension of the two-mode (phonon-only) factor.
    pub fn mode_space_dim(&self) -> usize {
        self.dx * self.dy
    }

    pub fn contains(&self, b: BasisState) -> bool {
        b.nx < self.dx && b.ny < self.dy
    }

    /// Flat index of a basis state; the caller guarantees it is in range.
    #[inline]
    pub fn index(&self, b: BasisState) -> usize {
        debug_assert!(self.contains(b), "basis state {b:?} outside {self:?}");
        b.qubit.index() * self.dx * self.dy + b.nx * self.dy + b.ny
    }

    pub fn checked_index(&self, b: BasisState) -> Result<usize> {
        if self.contains(b) {
            Ok(self.index(b))
        } else {
            Err(Error::invalid(format!(
                "occupation (n_x = {}, n_y = {}) outside truncation (d_x = {}, d_y = {})",
                b.nx, b.ny, self.dx, self.dy
            )))
        }
    }

    #[inline]
    pub fn basis(&self, i: usize) -> BasisState {
        debug_assert!(i < self.dim());
        let block = self.dx * self.dy;
        let qubit = if i < block { Qubit::Down } else { Qubit::Up };
        let r = i % block;
        BasisState::new(qubit, r / self.dy, r % self.dy)
    }

    pub fn basis_iter(&self) -> impl Iterator<Item = (usize, BasisState)> + '_ {
        (0..self.dim()).map(move |i| (i, self.basis(i)))
    }

    pub(crate) fn check_same(&self, other: &HilbertSpace) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            })
        }
    }
}

/// `⟨ψ|O|ψ⟩` or `Tr[ρO]`. For Hermitian operators `im` is the numerical
/// residual of the imaginary part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Expectation {
    pub re: f64,
    pub im: f64,
}

impl Expectation {
    pub fn value(&self) -> C64 {
        C64::new(self.re, self.im)
    }
}

/// Common surface of pure and mixed states.
pub trait QuantumState: Clone + Send + Sync {
    fn space(&self) -> &HilbertSpace;

    /// `Tr[ρM]` without dimension checks.
    fn expect_matrix(&self, m: &CMatrix) -> C64;

    /// Diagonal populations in the flat basis order.
    fn populations(&self) -> Vec<f64>;

    /// The state after the unitary (or any linear map) `u`.
    fn transformed(&self, u: &CMatrix) -> Self;

    fn trace(&self) -> f64 {
        self.populations().iter().sum()
    }

    fn population(&self, b: BasisState) -> f64 {
        self.populations()[self.space().index(b)]
    }

    /// Total population of the given qubit level.
    fn qubit_population(&self, q: Qubit) -> f64 {
        let block = self.space().mode_space_dim();
        let p = self.populations();
        p[q.index() * block..(q.index() + 1) * block].iter().sum()
    }

    /// Population on the two highest Fock levels of either mode.
    fn edge_population(&self) -> f64 {
        let s = *self.space();
        let edge = |n: usize, d: usize| n + 2 >= d;
        self.populations()
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let b = s.basis(*i);
                edge(b.nx, s.dx()) || edge(b.ny, s.dy())
            })
            .map(|(_, p)| p)
            .sum()
    }

    /// `⟨(−1)^{n_x}⟩`-style diagonal observables, computed from populations.
    fn diagonal_expectation(&self, f: impl Fn(BasisState) -> f64) -> f64 {
        let s = *self.space();
        self.populations()
            .iter()
            .enumerate()
            .map(|(i, p)| p * f(s.basis(i)))
            .sum()
    }
}

pub fn expectation<S: QuantumState>(state: &S, op: &Operator) -> Result<Expectation> {
    state.space().check_same(&op.space)?;
    let v = state.expect_matrix(&op.matrix);
    Ok(Expectation { re: v.re, im: v.im })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    space: HilbertSpace,
    amplitudes: CVector,
}

impl StateVector {
    pub fn from_amplitudes(space: HilbertSpace, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                found: amplitudes.len(),
            });
        }
        Ok(Self { space, amplitudes })
    }

    pub fn basis_state(space: HilbertSpace, qubit: Qubit, nx: usize, ny: usize) -> Result<Self> {
        let i = space.checked_index(BasisState::new(qubit, nx, ny))?;
        let mut amplitudes = CVector::zeros(space.dim());
        amplitudes[i] = ONE;
        Ok(Self { space, amplitudes })
    }

    pub fn vacuum(space: HilbertSpace) -> Self {
        Self::basis_state(space, Qubit::Down, 0, 0).expect("vacuum is always in range")
    }

    /// `(|↓,N,0⟩ + e^{iNφ_S}|↓,0,N⟩)/√2`.
    pub fn noon(space: HilbertSpace, n: usize, phase_s: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("NOON state requires N ≥ 1"));
        }
        let a = space.checked_index(BasisState::new(Qubit::Down, n, 0))?;
        let b = space.checked_index(BasisState::new(Qubit::Down, 0, n))?;
        let mut amplitudes = CVector::zeros(space.dim());
        let h = std::f64::consts::FRAC_1_SQRT_2;
        amplitudes[a] = C64::new(h, 0.0);
        amplitudes[b] = C64::from_polar(h, n as f64 * phase_s);
        Ok(Self { space, amplitudes })
    }

    /// Normalized superposition of basis states with the given weights.
    pub fn superposition(space: HilbertSpace, terms: &[(C64, BasisState)]) -> Result<Self> {
        let mut amplitudes = CVector::zeros(space.dim());
        for (c, b) in terms {
            amplitudes[space.checked_index(*b)?] += *c;
        }
        let norm = amplitudes.norm();
        if norm == 0.0 {
            return Err(Error::invalid("superposition has zero norm"));
        }
        amplitudes /= C64::new(norm, 0.0);
        Ok(Self { space, amplitudes })
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut CVector {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amplitudes
    }

    pub fn amplitude(&self, b: BasisState) -> C64 {
        self.amplitudes[self.space.index(b)]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn normalized(mut self) -> Self {
        let n = self.amplitudes.norm();
        if n > 0.0 {
            self.amplitudes /= C64::new(n, 0.0);
        }
        self
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.space.check_same(&other.space)?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// `|⟨self|other⟩|²`.
    pub fn overlap(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    pub fn apply(&self, op: &Operator) -> Result<StateVector> {
        self.space.check_same(&op.space)?;
        Ok(StateVector {
            space: self.space,
            amplitudes: &op.matrix * &self.amplitudes,
        })
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            space: self.space,
            matrix: &self.amplitudes * self.amplitudes.adjoint(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl QuantumState for StateVector {
    fn space(&self) -> &HilbertSpace {
        &self.space
    }

    fn expect_matrix(&self, m: &CMatrix) -> C64 {
        self.amplitudes.dotc(&(m * &self.amplitudes))
    }

    fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }

    fn transformed(&self, u: &CMatrix) -> Self {
        StateVector {
            space: self.space,
            amplitudes: u * &self.amplitudes,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct StateRecord {
    d_x: usize,
    d_y: usize,
    amplitudes: Vec<[f64; 2]>,
}

impl Serialize for StateVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StateRecord {
            d_x: self.space.dx,
            d_y: self.space.dy,
            amplitudes: self.amplitudes.iter().map(|c| [c.re, c.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for StateVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let rec = StateRecord::deserialize(d)?;
        let space = HilbertSpace::new(rec.d_x, rec.d_y).map_err(D::Error::custom)?;
        let amps = CVector::from_iterator(
            rec.amplitudes.len(),
            rec.amplitudes.iter().map(|[re, im]| C64::new(*re, *im)),
        );
        StateVector::from_amplitudes(space, amps).map_err(D::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    space: HilbertSpace,
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Wraps a matrix after checking shape and Hermiticity.
    pub fn new(space: HilbertSpace, matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != space.dim() || matrix.ncols() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                found: matrix.nrows(),
            });
        }
        let dev = hermitian_deviation(&matrix);
        if dev > HERMITIAN_TOLERANCE {
            return Err(Error::invalid(format!(
                "density matrix is not Hermitian (deviation {dev:e})"
            )));
        }
        Ok(Self { space, matrix })
    }

    pub fn zeros(space: HilbertSpace) -> Self {
        Self {
            space,
            matrix: CMatrix::zeros(space.dim(), space.dim()),
        }
    }

    /// Diagonal (incoherent) state with the given basis populations.
    pub fn diagonal(space: HilbertSpace, entries: &[(f64, BasisState)]) -> Result<Self> {
        let mut rho = Self::zeros(space);
        for (p, b) in entries {
            if *p < 0.0 {
                return Err(Error::invalid("negative population"));
            }
            let i = space.checked_index(*b)?;
            rho.matrix[(i, i)] += C64::new(*p, 0.0);
        }
        Ok(rho)
    }

    /// `Σ_k w_k |ψ_k⟩⟨ψ_k|`.
    pub fn mixture(space: HilbertSpace, terms: &[(f64, StateVector)]) -> Result<Self> {
        let mut rho = Self::zeros(space);
        for (w, psi) in terms {
            space.check_same(&psi.space)?;
            rho.add_pure(*w, psi);
        }
        Ok(rho)
    }

    pub(crate) fn add_pure(&mut self, w: f64, psi: &StateVector) {
        let a = &psi.amplitudes;
        let wc = C64::new(w, 0.0);
        for j in 0..a.len() {
            if a[j] == ZERO {
                continue;
            }
            let cj = a[j].conj() * wc;
            for i in 0..a.len() {
                self.matrix[(i, j)] += a[i] * cj;
            }
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn element(&self, row: BasisState, col: BasisState) -> C64 {
        self.matrix[(self.space.index(row), self.space.index(col))]
    }

    pub fn apply_unitary(&self, op: &Operator) -> Result<DensityMatrix> {
        self.space.check_same(&op.space)?;
        Ok(self.transformed(&op.matrix))
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.matrix.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    /// Checks Hermiticity (1e−12), trace in `[0, 1]` and positivity (−1e−10).
    pub fn validate(&self) -> Result<()> {
        let dev = hermitian_deviation(&self.matrix);
        if dev > HERMITIAN_TOLERANCE {
            return Err(Error::Numerical(format!("ρ not Hermitian ({dev:e})")));
        }
        let tr = self.trace();
        if !(-NORM_TOLERANCE..=1.0 + NORM_TOLERANCE).contains(&tr) {
            return Err(Error::Numerical(format!("trace {tr} outside [0, 1]")));
        }
        let min = self.eigenvalues().first().copied().unwrap_or(0.0);
        if min < -NORM_TOLERANCE {
            return Err(Error::Numerical(format!("ρ has negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// Reduced density matrix of the two motional modes (qubit traced out),
    /// indexed by `n_x·d_y + n_y`.
    pub fn reduced_modes(&self) -> CMatrix {
        let m = self.space.mode_space_dim();
        let mut out = CMatrix::zeros(m, m);
        for q in 0..2 {
            out += self.matrix.view((q * m, q * m), (m, m));
        }
        out
    }
}

impl QuantumState for DensityMatrix {
    fn space(&self) -> &HilbertSpace {
        &self.space
    }

    fn expect_matrix(&self, m: &CMatrix) -> C64 {
        // Tr[ρM] = Σ_ij ρ_ij M_ji
        let n = self.matrix.nrows();
        let mut acc = ZERO;
        for j in 0..n {
            for i in 0..n {
                acc += self.matrix[(i, j)] * m[(j, i)];
            }
        }
        acc
    }

    fn populations(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|c| c.re).collect()
    }

    fn transformed(&self, u: &CMatrix) -> Self {
        DensityMatrix {
            space: self.space,
            matrix: u * &self.matrix * u.adjoint(),
        }
    }
}

impl From<&StateVector> for DensityMatrix {
    fn from(psi: &StateVector) -> Self {
        psi.to_density()
    }
}

pub(crate) fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for j in 0..n {
        for i in 0..=j {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, c| acc.max(c.norm()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LadderKind {
    Lower,
    Raise,
    Number,
}

/// Dense operator on a [`HilbertSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    space: HilbertSpace,
    matrix: CMatrix,
    hermitian: bool,
}

impl Operator {
    /// Wraps a matrix; the Hermitian flag is determined numerically
    /// (relative tolerance 1e−12).
    pub fn new(space: HilbertSpace, matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != space.dim() || matrix.ncols() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                found: matrix.nrows(),
            });
        }
        Ok(Self::wrap(space, matrix))
    }

    pub(crate) fn wrap(space: HilbertSpace, matrix: CMatrix) -> Self {
        let scale = max_abs(&matrix).max(1.0);
        let hermitian = hermitian_deviation(&matrix) <= HERMITIAN_TOLERANCE * scale;
        Self {
            space,
            matrix,
            hermitian,
        }
    }

    pub fn zeros(space: HilbertSpace) -> Self {
        Self {
            space,
            matrix: CMatrix::zeros(space.dim(), space.dim()),
            hermitian: true,
        }
    }

    pub fn identity(space: HilbertSpace) -> Self {
        Self {
            space,
            matrix: CMatrix::identity(space.dim(), space.dim()),
            hermitian: true,
        }
    }

    /// Builds an operator from a sparse map `|b⟩ ↦ Σ c |b'⟩` on basis states;
    /// images outside the truncation are dropped.
    pub fn from_basis_map(
        space: HilbertSpace,
        f: impl Fn(BasisState) -> Vec<(C64, BasisState)>,
    ) -> Self {
        let mut m = CMatrix::zeros(space.dim(), space.dim());
        for (j, b) in space.basis_iter() {
            for (c, img) in f(b) {
                if space.contains(img) {
                    m[(space.index(img), j)] += c;
                }
            }
        }
        Self::wrap(space, m)
    }

    /// Diagonal operator with entries `f(b)`.
    pub fn diagonal(space: HilbertSpace, f: impl Fn(BasisState) -> C64) -> Self {
        Self::from_basis_map(space, |b| vec![(f(b), b)])
    }

    /// `a`, `a†` or `a†a` of one motional mode.
    pub fn mode(space: HilbertSpace, mode: Mode, kind: LadderKind) -> Self {
        Self::from_basis_map(space, |b| {
            let n = b.occupation(mode);
            match kind {
                LadderKind::Lower if n > 0 => {
                    vec![(C64::new((n as f64).sqrt(), 0.0), b.with_occupation(mode, n - 1))]
                }
                LadderKind::Lower => vec![],
                LadderKind::Raise => vec![(
                    C64::new(((n + 1) as f64).sqrt(), 0.0),
                    b.with_occupation(mode, n + 1),
                )],
                LadderKind::Number => vec![(C64::new(n as f64, 0.0), b)],
            }
        })
    }

    /// `σ⁺ = |↑⟩⟨↓|` on the qubit.
    pub fn sigma_plus(space: HilbertSpace) -> Self {
        Self::from_basis_map(space, |b| match b.qubit {
            Qubit::Down => vec![(ONE, BasisState { qubit: Qubit::Up, ..b })],
            Qubit::Up => vec![],
        })
    }

    pub fn sigma_minus(space: HilbertSpace) -> Self {
        Self::sigma_plus(space).adjoint()
    }

    pub fn sigma_x(space: HilbertSpace) -> Self {
        &Self::sigma_plus(space) + &Self::sigma_minus(space)
    }

    /// `σ_y = −iσ⁺ + iσ⁻`.
    pub fn sigma_y(space: HilbertSpace) -> Self {
        &(&Self::sigma_plus(space) * -I) + &(&Self::sigma_minus(space) * I)
    }

    /// `σ_z = |↑⟩⟨↑| − |↓⟩⟨↓|`.
    pub fn sigma_z(space: HilbertSpace) -> Self {
        Self::diagonal(space, |b| match b.qubit {
            Qubit::Up => ONE,
            Qubit::Down => -ONE,
        })
    }

    /// `exp(iπ a†a)` of one mode.
    pub fn parity(space: HilbertSpace, mode: Mode) -> Self {
        Self::diagonal(space, |b| {
            if b.occupation(mode) % 2 == 0 {
                ONE
            } else {
                -ONE
            }
        })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn hermitian_deviation(&self) -> f64 {
        hermitian_deviation(&self.matrix)
    }

    pub fn adjoint(&self) -> Self {
        Self {
            space: self.space,
            matrix: self.matrix.adjoint(),
            hermitian: self.hermitian,
        }
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        &(self * other) - &(other * self)
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        max_abs(&self.matrix)
    }

    /// Element `⟨row|O|col⟩`.
    pub fn element(&self, row: BasisState, col: BasisState) -> C64 {
        self.matrix[(self.space.index(row), self.space.index(col))]
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator spaces differ");
        Operator::wrap(self.space, &self.matrix + &rhs.matrix)
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator spaces differ");
        Operator::wrap(self.space, &self.matrix - &rhs.matrix)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator spaces differ");
        Operator::wrap(self.space, &self.matrix * &rhs.matrix)
    }
}

impl Mul<C64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: C64) -> Operator {
        Operator::wrap(self.space, &self.matrix * rhs)
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        Operator {
            space: self.space,
            matrix: &self.matrix * C64::new(rhs, 0.0),
            hermitian: self.hermitian,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: C64, b: C64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn space_dimensions() {
        assert_eq!(HilbertSpace::new(1, 1).unwrap().dim(), 2);
        assert_eq!(HilbertSpace::new(13, 13).unwrap().dim(), 338);
        assert!(HilbertSpace::new(0, 5).is_err());
        assert!(HilbertSpace::new(5, 0).is_err());
        assert_eq!(HilbertSpace::for_noon(9), HilbertSpace::new(13, 13).unwrap());
    }

    #[test]
    fn index_round_trip() {
        let s = HilbertSpace::new(3, 5).unwrap();
        for i in 0..s.dim() {
            assert_eq!(s.index(s.basis(i)), i);
        }
        assert_eq!(s.index(BasisState::new(Qubit::Up, 0, 0)), 15);
        assert_eq!(s.index(BasisState::new(Qubit::Down, 1, 2)), 7);
    }

    #[test]
    fn basis_states() {
        let s = HilbertSpace::new(4, 4).unwrap();
        let v = StateVector::basis_state(s, Qubit::Down, 0, 0).unwrap();
        assert!((v.norm_sqr() - 1.0).abs() < 1e-15);
        let v = StateVector::basis_state(s, Qubit::Down, 1, 1).unwrap();
        assert_eq!(v.amplitude(BasisState::new(Qubit::Down, 1, 1)), ONE);
        assert!(StateVector::basis_state(s, Qubit::Up, 4, 0).is_err());
    }

    #[test]
    fn ladder_elements() {
        let s = HilbertSpace::new(6, 3).unwrap();
        let raise = Operator::mode(s, Mode::X, LadderKind::Raise);
        let lower = Operator::mode(s, Mode::X, LadderKind::Lower);
        let vac = StateVector::vacuum(s);
        let r = vac.apply(&raise).unwrap();
        assert!(close(r.amplitude(BasisState::new(Qubit::Down, 1, 0)), ONE));
        let four = StateVector::basis_state(s, Qubit::Down, 4, 0).unwrap();
        let l = four.apply(&lower).unwrap();
        assert!(close(l.amplitude(BasisState::new(Qubit::Down, 3, 0)), C64::new(2.0, 0.0)));
        let num = Operator::mode(s, Mode::X, LadderKind::Number);
        assert!(num.is_hermitian());
        assert_eq!(expectation(&vac, &num).unwrap().re, 0.0);
    }

    #[test]
    fn truncated_commutator_is_identity_below_edge() {
        let s = HilbertSpace::new(7, 5).unwrap();
        for mode in [Mode::X, Mode::Y] {
            let a = Operator::mode(s, mode, LadderKind::Lower);
            let ad = Operator::mode(s, mode, LadderKind::Raise);
            let c = a.commutator(&ad);
            for (i, b) in s.basis_iter() {
                if b.occupation(mode) + 1 < s.mode_dim(mode) {
                    for j in 0..s.dim() {
                        let want = if i == j { ONE } else { ZERO };
                        assert!(close(c.matrix()[(j, i)], want));
                    }
                }
            }
        }
    }

    #[test]
    fn parity_of_fock_state() {
        let s = HilbertSpace::new(8, 8).unwrap();
        let px = Operator::parity(s, Mode::X);
        for n in 0..8 {
            let v = StateVector::basis_state(s, Qubit::Down, n, 0).unwrap();
            let want = if n % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(expectation(&v, &px).unwrap().re, want);
        }
    }

    #[test]
    fn sigma_y_convention() {
        let s = HilbertSpace::new(1, 1).unwrap();
        let y = Operator::sigma_y(s);
        let up = BasisState::new(Qubit::Up, 0, 0);
        let down = BasisState::new(Qubit::Down, 0, 0);
        assert!(close(y.element(up, down), -I));
        assert!(close(y.element(down, up), I));
        assert!(y.is_hermitian());
    }

    #[test]
    fn expectation_dimension_mismatch() {
        let a = HilbertSpace::new(2, 2).unwrap();
        let b = HilbertSpace::new(3, 2).unwrap();
        let v = StateVector::vacuum(a);
        assert!(expectation(&v, &Operator::identity(b)).is_err());
    }

    #[test]
    fn density_matrix_agrees_with_pure() {
        let s = HilbertSpace::new(4, 4).unwrap();
        let psi = StateVector::noon(s, 3, 0.3).unwrap();
        let rho = psi.to_density();
        rho.validate().unwrap();
        let op = &Operator::mode(s, Mode::X, LadderKind::Number) + &Operator::sigma_x(s);
        let a = expectation(&psi, &op).unwrap();
        let b = expectation(&rho, &op).unwrap();
        assert!((a.re - b.re).abs() < 1e-14 && b.im.abs() < 1e-14);
        assert!((rho.trace() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn reduced_modes_traces_qubit() {
        let s = HilbertSpace::new(3, 3).unwrap();
        let psi = StateVector::superposition(
            s,
            &[
                (ONE, BasisState::new(Qubit::Down, 1, 0)),
                (ONE, BasisState::new(Qubit::Up, 1, 0)),
            ],
        )
        .unwrap();
        let red = psi.to_density().reduced_modes();
        assert!((red[(3, 3)].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn state_json_round_trip() {
        let s = HilbertSpace::new(2, 3).unwrap();
        let psi = StateVector::noon(s, 1, 0.7).unwrap();
        let text = psi.to_json().unwrap();
        assert!(text.starts_with("{\"d_x\":2,\"d_y\":3,\"amplitudes\":[["));
        let back = StateVector::from_json(&text).unwrap();
        assert_eq!(back, psi);
        assert!(StateVector::from_json("{\"d_x\":2,\"d_y\":3,\"amplitudes\":[[1,0]]}").is_err());
    }

    #[test]
    fn invalid_density_matrix_rejected() {
        let s = HilbertSpace::new(1, 1).unwrap();
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 1)] = ONE;
        assert!(DensityMatrix::new(s, m).is_err());
    }
}
