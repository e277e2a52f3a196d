//! Parity-fringe fits, NOON fidelity and quantum Fisher information.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    BasisState, CMatrix, DensityMatrix, HilbertSpace, LadderKind, Mode, Operator, QuantumState, Qubit, StateVector,
    C64, I,
};
use crate::measure::ParityScan;
use crate::optim::{levenberg_marquardt, LmOptions};

/// `⟨Π(φ)⟩ = A cos kφ + B sin kφ + C` with contrast `√(A²+B²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub k: f64,
    pub contrast: f64,
    pub residual_norm: f64,
    /// One-sigma errors of `(A, B, C, k, C_P)`; `None` if the fit is
    /// degenerate (no fringe).
    pub std_errors: Option<[f64; 5]>,
}

impl FringeFit {
    pub fn k_error(&self) -> Option<f64> {
        self.std_errors.map(|e| e[3])
    }

    pub fn contrast_error(&self) -> Option<f64> {
        self.std_errors.map(|e| e[4])
    }
}

fn linear_fringe(phases: &[f64], values: &DVector<f64>, k: f64) -> (DVector<f64>, f64) {
    let a = DMatrix::from_fn(phases.len(), 3, |i, j| match j {
        0 => (k * phases[i]).cos(),
        1 => (k * phases[i]).sin(),
        _ => 1.0,
    });
    let sol = a
        .clone()
        .svd(true, true)
        .solve(values, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(3));
    let res = (a * &sol - values).norm();
    (sol, res)
}

/// Nonlinear least-squares fit of `(A, B, C, k)`, starting from a scan of
/// `k` around `k_init`.
pub fn fit_parity_fringe(scan: &ParityScan, k_init: f64) -> Result<FringeFit> {
    let m = scan.phases.len();
    if scan.values.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: scan.values.len() });
    }
    if m < 8 {
        return Err(Error::Fit(format!("under-sampled: {m} points (need at least 8)")));
    }
    if !(k_init > 0.0 && k_init.is_finite()) {
        return Err(Error::invalid("initial frequency must be positive"));
    }
    let (lo, hi) = scan
        .phases
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(*p), b.max(*p)));
    let period = 2.0 * PI / k_init;
    if hi - lo < period * (m - 1) as f64 / m as f64 - 1e-12 {
        return Err(Error::Fit(format!(
            "phase range {:.4} shorter than one expected period {period:.4}",
            hi - lo
        )));
    }
    let y = DVector::from_column_slice(&scan.values);
    let (k0, _) = (0..=400)
        .map(|i| k_init * (0.5 + i as f64 / 400.0))
        .map(|k| (k, linear_fringe(&scan.phases, &y, k).1))
        .fold((k_init, f64::INFINITY), |best, (k, r)| if r < best.1 { (k, r) } else { best });
    let (lin, _) = linear_fringe(&scan.phases, &y, k0);

    let phases = &scan.phases;
    let model = |p: &DVector<f64>| {
        let mut r = DVector::zeros(m);
        let mut j = DMatrix::zeros(m, 4);
        for i in 0..m {
            let x = phases[i];
            let (s, c) = (p[3] * x).sin_cos();
            r[i] = p[0] * c + p[1] * s + p[2] - y[i];
            j[(i, 0)] = c;
            j[(i, 1)] = s;
            j[(i, 2)] = 1.0;
            j[(i, 3)] = x * (p[1] * c - p[0] * s);
        }
        (r, j)
    };
    let x0 = DVector::from_vec(vec![lin[0], lin[1], lin[2], k0]);
    let lower = DVector::from_vec(vec![-2.0, -2.0, -2.0, k_init * 0.25]);
    let upper = DVector::from_vec(vec![2.0, 2.0, 2.0, k_init * 4.0]);
    let res = levenberg_marquardt(model, x0, &lower, &upper, LmOptions::default())?;
    let p = &res.params;
    let contrast = p[0].hypot(p[1]);
    let std_errors = if contrast > 1e-9 {
        res.std_errors(Some((m, 4))).map(|e| {
            let ce = ((p[0] * e[0]).powi(2) + (p[1] * e[1]).powi(2)).sqrt() / contrast;
            [e[0], e[1], e[2], e[3], ce]
        })
    } else {
        None
    };
    Ok(FringeFit {
        a: p[0],
        b: p[1],
        c: p[2],
        k: p[3],
        contrast,
        residual_norm: (2.0 * res.cost).sqrt(),
        std_errors,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub value: f64,
    /// `F > ½`: genuine NOON-type entanglement.
    pub witness: bool,
}

fn unit_interval(v: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} = {v} outside [0, 1]")))
    }
}

/// `F = ½(C_P + P_N0 + P_0N)`.
pub fn fidelity(contrast: f64, p_n0: f64, p_0n: f64) -> Result<Fidelity> {
    unit_interval(contrast, "contrast")?;
    unit_interval(p_n0, "P_N0")?;
    unit_interval(p_0n, "P_0N")?;
    let value = 0.5 * (contrast + p_n0 + p_0n);
    Ok(Fidelity { value, witness: value > 0.5 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QfiBound {
    pub qfi: f64,
    /// `1/√F_Q`; infinite when `F_Q = 0`.
    pub cramer_rao: f64,
}

/// `F_Q = N² C_P² / (P_N0 + P_0N)`.
pub fn qfi_closed(n: usize, contrast: f64, p_sum: f64) -> Result<QfiBound> {
    if !(p_sum > 0.0) {
        return Err(Error::invalid("population sum must be positive"));
    }
    if !(contrast >= 0.0) {
        return Err(Error::invalid("contrast must be non-negative"));
    }
    let qfi = (n * n) as f64 * contrast * contrast / p_sum;
    Ok(QfiBound { qfi, cramer_rao: 1.0 / qfi.sqrt() })
}

/// Two-mode density matrix restricted to the NOON populations, their
/// coherence and diagonal noise elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoonDensityModel {
    pub n: usize,
    pub p_n0: f64,
    pub p_0n: f64,
    /// `|ρ_{N0,0N}|`.
    pub coherence: f64,
    /// Phase `φ` in `ρ_{N0,0N} = |ρ_{N0,0N}| e^{−iNφ}`.
    pub phase: f64,
    /// Diagonal populations on other basis states (all with qubit `|↓⟩`
    /// when materialized), `(weight, n_x, n_y)`.
    pub noise: Vec<(f64, usize, usize)>,
}

/// Eigen-decomposition of the NOON block: eigenvalues `λ₁ ≥ λ₂` and
/// mixing angle `θ ∈ [0, π]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoonDecomposition {
    pub lambda1: f64,
    pub lambda2: f64,
    pub theta: f64,
    pub phase: f64,
}

impl NoonDensityModel {
    /// Model from `λ₁, λ₂ ≥ 0`, angle `θ` and phase; the remaining weight
    /// `1 − λ₁ − λ₂` is spread evenly over `noise_states`.
    pub fn from_decomposition(
        n: usize,
        d: NoonDecomposition,
        noise_states: &[(usize, usize)],
    ) -> Result<Self> {
        let rest = 1.0 - d.lambda1 - d.lambda2;
        if d.lambda1 < 0.0 || d.lambda2 < 0.0 || rest < -1e-12 {
            return Err(Error::invalid("eigenvalues must be non-negative with sum ≤ 1"));
        }
        if rest > 1e-15 && noise_states.is_empty() {
            return Err(Error::invalid("missing weight needs at least one noise state"));
        }
        let (c, s) = ((d.theta / 2.0).cos().powi(2), (d.theta / 2.0).sin().powi(2));
        let w = if noise_states.is_empty() { 0.0 } else { rest.max(0.0) / noise_states.len() as f64 };
        let model = Self {
            n,
            p_n0: d.lambda1 * c + d.lambda2 * s,
            p_0n: d.lambda1 * s + d.lambda2 * c,
            coherence: (d.lambda1 - d.lambda2).abs() * d.theta.sin().abs() / 2.0,
            phase: d.phase,
            noise: noise_states.iter().map(|&(x, y)| (w, x, y)).collect(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("NOON number must be at least 1"));
        }
        unit_interval(self.p_n0, "P_N0")?;
        unit_interval(self.p_0n, "P_0N")?;
        if self.coherence < 0.0 || self.coherence > (self.p_n0 * self.p_0n).sqrt() * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::invalid("coherence violates positivity of the NOON block"));
        }
        for &(w, x, y) in &self.noise {
            if w < 0.0 {
                return Err(Error::invalid("noise weights must be non-negative"));
            }
            if (x, y) == (self.n, 0) || (x, y) == (0, self.n) {
                return Err(Error::invalid("noise states must differ from the NOON components"));
            }
        }
        let total = self.p_n0 + self.p_0n + self.noise.iter().map(|e| e.0).sum::<f64>();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("trace {total} differs from 1")));
        }
        Ok(())
    }

    /// `C_P = 2|ρ_{N0,0N}|`.
    pub fn contrast(&self) -> f64 {
        2.0 * self.coherence
    }

    pub fn population_sum(&self) -> f64 {
        self.p_n0 + self.p_0n
    }

    pub fn decomposition(&self) -> NoonDecomposition {
        let diff = self.p_n0 - self.p_0n;
        let split = diff.hypot(2.0 * self.coherence);
        let sum = self.population_sum();
        NoonDecomposition {
            lambda1: (sum + split) / 2.0,
            lambda2: (sum - split) / 2.0,
            theta: (2.0 * self.coherence).atan2(diff),
            phase: self.phase,
        }
    }

    fn coherence_element(&self) -> C64 {
        C64::from_polar(self.coherence, -(self.n as f64) * self.phase)
    }

    /// Compact matrix on `(|N,0⟩, |0,N⟩, noise…)` and its φ-derivative.
    fn compact(&self) -> (CMatrix, CMatrix) {
        let k = 2 + self.noise.len();
        let mut rho = CMatrix::zeros(k, k);
        rho[(0, 0)] = C64::new(self.p_n0, 0.0);
        rho[(1, 1)] = C64::new(self.p_0n, 0.0);
        let c = self.coherence_element();
        rho[(0, 1)] = c;
        rho[(1, 0)] = c.conj();
        for (i, &(w, _, _)) in self.noise.iter().enumerate() {
            rho[(2 + i, 2 + i)] = C64::new(w, 0.0);
        }
        let mut drho = CMatrix::zeros(k, k);
        let nn = self.n as f64;
        drho[(0, 1)] = -I * nn * c;
        drho[(1, 0)] = I * nn * c.conj();
        (rho, drho)
    }

    /// Materializes the model with qubit `|↓⟩`.
    pub fn to_density(&self, space: HilbertSpace) -> Result<DensityMatrix> {
        self.validate()?;
        let at = |x: usize, y: usize| space.checked_index(BasisState::new(Qubit::Down, x, y));
        let (i0, i1) = (at(self.n, 0)?, at(0, self.n)?);
        let mut m = CMatrix::zeros(space.dim(), space.dim());
        m[(i0, i0)] = C64::new(self.p_n0, 0.0);
        m[(i1, i1)] = C64::new(self.p_0n, 0.0);
        let c = self.coherence_element();
        m[(i0, i1)] = c;
        m[(i1, i0)] = c.conj();
        for &(w, x, y) in &self.noise {
            let i = at(x, y)?;
            m[(i, i)] += C64::new(w, 0.0);
        }
        DensityMatrix::new(space, m)
    }
}

/// SLD quantum Fisher information `2 Σ |⟨i|∂ρ|j⟩|² / (λ_i + λ_j)` over pairs
/// with `λ_i + λ_j > 1e−12·Tr ρ`.
pub fn sld_qfi(rho: &CMatrix, drho: &CMatrix) -> Result<f64> {
    if rho.shape() != drho.shape() || rho.nrows() != rho.ncols() {
        return Err(Error::DimensionMismatch { expected: rho.nrows(), found: drho.nrows() });
    }
    let trace: f64 = (0..rho.nrows()).map(|i| rho[(i, i)].re).sum();
    if !(trace > 0.0) {
        return Err(Error::Numerical(format!("trace {trace:e} leaves no support for the SLD")));
    }
    let cutoff = 1e-12 * trace;
    // rows where both ρ and ∂ρ vanish only add zero eigenvalues
    let active: Vec<usize> = (0..rho.nrows())
        .filter(|&i| (0..rho.ncols()).any(|j| rho[(i, j)] != C64::new(0.0, 0.0) || drho[(i, j)] != C64::new(0.0, 0.0)))
        .collect();
    let rho = CMatrix::from_fn(active.len(), active.len(), |i, j| rho[(active[i], active[j])]);
    let drho = CMatrix::from_fn(active.len(), active.len(), |i, j| drho[(active[i], active[j])]);
    let eig = rho.symmetric_eigen();
    if eig.eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numerical("eigendecomposition of ρ failed".into()));
    }
    let v = &eig.eigenvectors;
    let d = v.adjoint() * &drho * v;
    let lam = &eig.eigenvalues;
    let mut f = 0.0;
    for i in 0..lam.len() {
        for j in 0..lam.len() {
            let s = lam[i] + lam[j];
            if s > cutoff {
                f += 2.0 * d[(i, j)].norm_sqr() / s;
            }
        }
    }
    Ok(f)
}

/// SLD QFI of a full density matrix whose phase dependence sits only on
/// the `|↓,N,0⟩⟨↓,0,N|` coherence (and its conjugate).
pub fn qfi_sld(rho: &DensityMatrix, n: usize) -> Result<f64> {
    let space = *rho.space();
    let at = |x: usize, y: usize| space.checked_index(BasisState::new(Qubit::Down, x, y));
    let (i0, i1) = (at(n, 0)?, at(0, n)?);
    let mut drho = CMatrix::zeros(space.dim(), space.dim());
    let c = rho.matrix()[(i0, i1)];
    drho[(i0, i1)] = -I * n as f64 * c;
    drho[(i1, i0)] = I * n as f64 * c.conj();
    sld_qfi(rho.matrix(), &drho)
}

/// SLD QFI of the model from its compact matrix.
pub fn qfi_sld_model(model: &NoonDensityModel) -> Result<f64> {
    model.validate()?;
    let (rho, drho) = model.compact();
    sld_qfi(&rho, &drho)
}

/// `|⟨ψ_NOON(φ)|ρ|ψ_NOON(φ)⟩|` for `(|↓,N,0⟩ + e^{iNφ}|↓,0,N⟩)/√2`.
pub fn noon_overlap<S: QuantumState>(state: &S, n: usize, phase: f64) -> Result<f64> {
    let noon = StateVector::noon(*state.space(), n, phase)?;
    let proj = noon.amplitudes() * noon.amplitudes().adjoint();
    Ok(state.expect_matrix(&proj).re)
}

/// `(|a| + |b|)² / 2` with `a, b` the `|↓,N,0⟩`, `|↓,0,N⟩` amplitudes:
/// overlap with the NOON state of the best-matching phase.
pub fn aligned_fidelity(psi: &StateVector, n: usize) -> f64 {
    let a = psi.amplitude(BasisState::new(Qubit::Down, n, 0)).norm();
    let b = psi.amplitude(BasisState::new(Qubit::Down, 0, n)).norm();
    (a + b).powi(2) / 2.0
}

/// NOON phase `φ_S` of a state, `arg(b/a)/N` wrapped to `[0, 2π/N)`.
pub fn noon_phase(psi: &StateVector, n: usize) -> f64 {
    let a = psi.amplitude(BasisState::new(Qubit::Down, n, 0));
    let b = psi.amplitude(BasisState::new(Qubit::Down, 0, n));
    ((b / a).arg() / n as f64).rem_euclid(2.0 * PI / n as f64)
}

/// Schwinger angular momentum `(J_X, J_Y, J_Z)` of the two modes.
pub fn schwinger_ops(space: HilbertSpace) -> (Operator, Operator, Operator) {
    let ax = Operator::mode(space, Mode::X, LadderKind::Lower);
    let ay = Operator::mode(space, Mode::Y, LadderKind::Lower);
    let xy = &ax.adjoint() * &ay;
    let yx = xy.adjoint();
    let jx = &(&xy + &yx) * 0.5;
    let jy = &(&xy - &yx) * C64::new(0.0, -0.5);
    let nx = Operator::mode(space, Mode::X, LadderKind::Number);
    let ny = Operator::mode(space, Mode::Y, LadderKind::Number);
    let jz = &(&nx - &ny) * 0.5;
    (jx, jy, jz)
}

/// `exp(iπ N̂/2) exp(iπ J_Z)`, which equals the X-mode parity.
pub fn parity_from_schwinger(space: HilbertSpace) -> Operator {
    Operator::diagonal(space, |b| {
        let total = (b.nx + b.ny) as f64 / 2.0;
        let jz = (b.nx as f64 - b.ny as f64) / 2.0;
        C64::from_polar(1.0, PI * (total + jz))
    })
}

/// Precision summary for one N.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetrologyReport {
    pub n: usize,
    pub contrast: f64,
    pub contrast_err: Option<f64>,
    pub k: f64,
    pub k_err: Option<f64>,
    pub p_n0: f64,
    pub p_0n: f64,
    pub fidelity: f64,
    pub entanglement_witness: bool,
    pub qfi: f64,
    pub cramer_rao_bound: f64,
    /// `1/N`
    pub heisenberg_bound: f64,
    /// `1/√N`
    pub classical_bound: f64,
    /// `1/√(N·(P_N0+P_0N))`
    pub classical_bound_postselected: f64,
}

impl MetrologyReport {
    pub fn new(n: usize, fringe: &FringeFit, p_n0: f64, p_0n: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("NOON number must be at least 1"));
        }
        let contrast = fringe.contrast.min(1.0);
        let f = fidelity(contrast, p_n0, p_0n)?;
        let q = qfi_closed(n, contrast, p_n0 + p_0n)?;
        let nn = n as f64;
        Ok(Self {
            n,
            contrast: fringe.contrast,
            contrast_err: fringe.contrast_error(),
            k: fringe.k,
            k_err: fringe.k_error(),
            p_n0,
            p_0n,
            fidelity: f.value,
            entanglement_witness: f.witness,
            qfi: q.qfi,
            cramer_rao_bound: q.cramer_rao,
            heisenberg_bound: 1.0 / nn,
            classical_bound: 1.0 / nn.sqrt(),
            classical_bound_postselected: 1.0 / (nn * (p_n0 + p_0n)).sqrt(),
        })
    }

    /// `F_Q > N`: phase sensitivity beyond the classical limit.
    pub fn beats_classical(&self) -> bool {
        self.qfi > self.n as f64
    }
}
