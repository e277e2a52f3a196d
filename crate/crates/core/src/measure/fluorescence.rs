use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sample_fraction, OutputModeProbe};
use crate::error::{Error, Result};
use crate::hamiltonians::laguerre_rabi;
use crate::hilbert::QuantumState;
use crate::optim::{levenberg_marquardt, nnls, LmOptions};

/// Sideband fluorescence model
/// `P_↑(t) = A − ½ Σ_n P_n e^{−(n+1)^x λ t} cos(L_n^1(η²) Ω t / √(n+1))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluorescenceModel {
    pub populations: Vec<f64>,
    /// Base sideband Rabi frequency (rad/s).
    pub rabi: f64,
    /// Decay rate λ (1/s).
    pub decay: f64,
    pub eta: f64,
    pub offset: f64,
    pub exponent: f64,
}

impl FluorescenceModel {
    pub fn validate(&self) -> Result<()> {
        if self.populations.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::invalid("populations must be non-negative"));
        }
        let total: f64 = self.populations.iter().sum();
        if total > 1.0 + 1e-9 {
            return Err(Error::invalid(format!("populations sum to {total} > 1")));
        }
        if !(self.decay >= 0.0) || !self.rabi.is_finite() || !self.eta.is_finite() {
            return Err(Error::invalid("decay must be non-negative and rates finite"));
        }
        Ok(())
    }

    fn frequencies(&self) -> Vec<f64> {
        (0..self.populations.len()).map(|n| laguerre_rabi(n, self.eta)).collect()
    }

    fn decay_weights(&self) -> Vec<f64> {
        (0..self.populations.len()).map(|n| ((n + 1) as f64).powf(self.exponent)).collect()
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        let f = self.frequencies();
        let c = self.decay_weights();
        self.offset
            - 0.5
                * self
                    .populations
                    .iter()
                    .enumerate()
                    .map(|(n, p)| p * (-c[n] * self.decay * t).exp() * (f[n] * self.rabi * t).cos())
                    .sum::<f64>()
    }
}

/// Sampled sideband fluorescence of the output mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluorescenceSignal {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub sigmas: Option<Vec<f64>>,
    /// Drive metadata: sideband Rabi frequency, phase, Lamb–Dicke factor.
    pub rabi: f64,
    pub phase: f64,
    pub eta: f64,
}

/// Evaluates the model on `times`.
pub fn fluorescence_signal(model: &FluorescenceModel, times: &[f64]) -> Result<FluorescenceSignal> {
    model.validate()?;
    Ok(FluorescenceSignal {
        times: times.to_vec(),
        values: times.iter().map(|&t| model.evaluate(t)).collect(),
        sigmas: None,
        rabi: model.rabi,
        phase: 0.0,
        eta: model.eta,
    })
}

/// Fluorescence of the output mode at `phase` for a state, from its
/// output-mode phonon distribution; optional shot sampling `(shots, seed)`.
pub fn simulate_output_fluorescence<S: QuantumState>(
    state: &S,
    phase: f64,
    model: &FluorescenceModel,
    times: &[f64],
    shots: Option<(u64, u64)>,
) -> Result<FluorescenceSignal> {
    let probe = OutputModeProbe::new(*state.space())?;
    let populations = probe.distribution(state, phase)?;
    let m = FluorescenceModel { populations, ..model.clone() };
    let mut sig = fluorescence_signal(&m, times)?;
    sig.phase = phase;
    if let Some((n, seed)) = shots {
        if n == 0 {
            return Err(Error::invalid("shot count must be positive"));
        }
        sig.values = sig
            .values
            .par_iter()
            .enumerate()
            .map(|(i, &p)| sample_fraction(p, n, seed, i))
            .collect::<Result<_>>()?;
        sig.sigmas = Some(sig.values.iter().map(|p| (p * (1.0 - p) / n as f64).sqrt()).collect());
    }
    Ok(sig)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhononFitOptions {
    pub n_max: usize,
    pub eta: f64,
    pub exponent: f64,
    /// Relative half-width of the Rabi-frequency grid around the signal's
    /// nominal value.
    pub rabi_span: f64,
    pub rabi_points: usize,
    pub decay_points: usize,
}

impl PhononFitOptions {
    pub fn new(n_max: usize) -> Self {
        Self { n_max, eta: 0.0597, exponent: 0.7, rabi_span: 0.15, rabi_points: 81, decay_points: 24 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhononFit {
    pub populations: Vec<f64>,
    pub decay: f64,
    pub rabi: f64,
    pub offset: f64,
    pub residual_norm: f64,
    /// One-sigma errors in the order (Ω, λ, A, P_0 … P_nmax), if the
    /// normal matrix is invertible.
    pub std_errors: Option<Vec<f64>>,
    pub iterations: usize,
}

impl PhononFit {
    pub fn model(&self, eta: f64, exponent: f64) -> FluorescenceModel {
        FluorescenceModel {
            populations: self.populations.clone(),
            rabi: self.rabi,
            decay: self.decay,
            eta,
            offset: self.offset,
            exponent,
        }
    }
}

struct Design<'a> {
    times: &'a [f64],
    freq: Vec<f64>,
    weight: Vec<f64>,
}

impl Design<'_> {
    /// Columns `[1, −½ e^{−c_n λ t} cos(f_n Ω t)]`.
    fn linear_matrix(&self, rabi: f64, decay: f64) -> DMatrix<f64> {
        let k = self.freq.len();
        DMatrix::from_fn(self.times.len(), k + 1, |i, j| {
            if j == 0 {
                1.0
            } else {
                let (n, t) = (j - 1, self.times[i]);
                -0.5 * (-self.weight[n] * decay * t).exp() * (self.freq[n] * rabi * t).cos()
            }
        })
    }

    /// Residuals and Jacobian for parameters `(Ω, λ, A, P_0 …)`.
    fn residuals(&self, p: &DVector<f64>, y: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let (m, k) = (self.times.len(), self.freq.len());
        let (rabi, decay, offset) = (p[0], p[1], p[2]);
        let mut r = DVector::zeros(m);
        let mut j = DMatrix::zeros(m, k + 3);
        for i in 0..m {
            let t = self.times[i];
            let mut v = offset;
            j[(i, 2)] = 1.0;
            for n in 0..k {
                let e = (-self.weight[n] * decay * t).exp();
                let arg = self.freq[n] * rabi * t;
                let (s, c) = arg.sin_cos();
                let pn = p[3 + n];
                v -= 0.5 * pn * e * c;
                j[(i, 0)] += 0.5 * pn * e * s * self.freq[n] * t;
                j[(i, 1)] += 0.5 * pn * e * c * self.weight[n] * t;
                j[(i, 3 + n)] = -0.5 * e * c;
            }
            r[i] = v - y[i];
        }
        (r, j)
    }
}

/// Projects `(·, ·, ·, P…)` so that `P ≥ 0` and `ΣP ≤ 1`.
fn project_populations(p: &mut DVector<f64>) {
    let k = p.len() - 3;
    for i in 0..k {
        p[3 + i] = p[3 + i].max(0.0);
    }
    let total: f64 = (0..k).map(|i| p[3 + i]).sum();
    if total <= 1.0 {
        return;
    }
    // Euclidean projection onto the probability simplex
    let mut v: Vec<f64> = (0..k).map(|i| p[3 + i]).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (i, x) in v.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            tau = t;
        }
    }
    for i in 0..k {
        p[3 + i] = (p[3 + i] - tau).max(0.0);
    }
}

/// Two-stage fit of a sideband fluorescence signal: a grid over (Ω, λ)
/// with non-negative least squares for (A, P_n), then bounded
/// Levenberg–Marquardt on all parameters.
pub fn fit_phonon_distribution(signal: &FluorescenceSignal, opts: &PhononFitOptions) -> Result<PhononFit> {
    let k = opts.n_max + 1;
    let m = signal.times.len();
    if signal.values.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: signal.values.len() });
    }
    if m < 3 * (k + 1) {
        return Err(Error::Fit(format!("under-determined: {m} samples for {} parameters", k + 3)));
    }
    if !(signal.rabi > 0.0 && signal.rabi.is_finite()) {
        return Err(Error::invalid("signal must carry a positive nominal Rabi frequency"));
    }
    let (lo, hi) = signal
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if !(hi - lo > 1e-9) {
        return Err(Error::Fit("signal has no oscillation (degenerate)".into()));
    }
    let t_max = signal.times.iter().cloned().fold(0.0, f64::max);
    if !(t_max > 0.0) {
        return Err(Error::Fit("time grid must extend beyond zero".into()));
    }

    let design = Design {
        times: &signal.times,
        freq: (0..k).map(|n| laguerre_rabi(n, opts.eta)).collect(),
        weight: (0..k).map(|n| ((n + 1) as f64).powf(opts.exponent)).collect(),
    };
    let y = DVector::from_column_slice(&signal.values);

    let rabis: Vec<f64> = (0..opts.rabi_points.max(2))
        .map(|i| signal.rabi * (1.0 - opts.rabi_span + 2.0 * opts.rabi_span * i as f64 / (opts.rabi_points.max(2) - 1) as f64))
        .collect();
    let mut decays = vec![0.0];
    let dp = opts.decay_points.max(2);
    for i in 0..dp {
        // λ t_max between 1e−3 and 3
        decays.push(10f64.powf(-3.0 + 3.5 * i as f64 / (dp - 1) as f64) / t_max);
    }
    let grid: Vec<(f64, f64)> = rabis.iter().flat_map(|&r| decays.iter().map(move |&d| (r, d))).collect();
    let stage1 = grid
        .par_iter()
        .map(|&(rabi, decay)| {
            let a = design.linear_matrix(rabi, decay);
            let x = nnls(&a, &y)?;
            let res = (&a * &x - &y).norm();
            Ok((res, rabi, decay, x))
        })
        .collect::<Result<Vec<_>>>()?;
    let (_, rabi0, decay0, x0) = stage1
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or_else(|| Error::Fit("empty search grid".into()))?;

    let mut p0 = DVector::zeros(k + 3);
    p0[0] = rabi0;
    p0[1] = decay0;
    p0[2] = x0[0];
    for n in 0..k {
        p0[3 + n] = x0[1 + n];
    }
    project_populations(&mut p0);

    let mut lower = DVector::zeros(k + 3);
    let mut upper = DVector::from_element(k + 3, 1.0);
    lower[0] = signal.rabi * 0.5;
    upper[0] = signal.rabi * 1.5;
    upper[1] = 100.0 / t_max;
    upper[2] = 1.5;
    // simplex projection after the box clamp
    let model = |p: &DVector<f64>| {
        let mut q = p.clone();
        project_populations(&mut q);
        design.residuals(&q, &signal.values)
    };
    let res = levenberg_marquardt(model, p0, &lower, &upper, LmOptions::default())?;
    let mut p = res.params.clone();
    project_populations(&mut p);
    let (r, _) = design.residuals(&p, &signal.values);
    let std_errors = res.std_errors(Some((m, k + 3))).map(|v| v.iter().copied().collect());
    Ok(PhononFit {
        populations: (0..k).map(|n| p[3 + n]).collect(),
        decay: p[1],
        rabi: p[0],
        offset: p[2],
        residual_norm: r.norm(),
        std_errors,
        iterations: res.iterations,
    })
}

/// `Σ_n (−1)^n P_n` of the fitted distribution (not renormalized).
pub fn output_parity_from_fit(fit: &PhononFit) -> f64 {
    fit.populations
        .iter()
        .enumerate()
        .map(|(n, p)| if n % 2 == 0 { *p } else { -*p })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{HilbertSpace, StateVector};
    use crate::measure::parity_expect;
    use std::f64::consts::PI;

    fn model(populations: Vec<f64>, decay: f64) -> FluorescenceModel {
        FluorescenceModel { populations, rabi: 2.0 * PI * 10e3, decay, eta: 0.0597, offset: 0.5, exponent: 0.7 }
    }

    fn grid(points: usize, t_max: f64) -> Vec<f64> {
        (0..points).map(|i| t_max * i as f64 / (points - 1) as f64).collect()
    }

    #[test]
    fn single_flop_and_baseline() {
        let m = FluorescenceModel { eta: 0.0, ..model(vec![1.0], 0.0) };
        for t in [0.0, 1e-5, 3.7e-5] {
            let expect = 0.5 * (1.0 - (m.rabi * t).cos());
            assert!((m.evaluate(t) - expect).abs() < 1e-15);
        }
        let m = model(vec![0.3, 0.2, 0.1], 500.0);
        assert!((m.evaluate(0.0) - (0.5 - 0.3)).abs() < 1e-15);
    }

    #[test]
    fn noiseless_round_trip() {
        let truth = vec![0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0];
        let sig = fluorescence_signal(&model(truth.clone(), 0.0), &grid(240, 6e-4)).unwrap();
        let fit = fit_phonon_distribution(&sig, &PhononFitOptions::new(8)).unwrap();
        for (a, b) in fit.populations.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-3, "{:?}", fit.populations);
        }
        assert!(fit.populations.iter().sum::<f64>() <= 1.0 + 1e-6);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let sig = FluorescenceSignal {
            times: grid(60, 1e-4),
            values: vec![0.0; 60],
            sigmas: None,
            rabi: 1e5,
            phase: 0.0,
            eta: 0.0597,
        };
        assert!(fit_phonon_distribution(&sig, &PhononFitOptions::new(3)).is_err());
        let short = FluorescenceSignal { times: grid(8, 1e-4), values: (0..8).map(|i| i as f64 / 8.0).collect(), ..sig };
        assert!(matches!(fit_phonon_distribution(&short, &PhononFitOptions::new(3)), Err(Error::Fit(_))));
    }

    #[test]
    fn fitted_parity_matches_direct_parity() {
        let n = 4;
        let s = HilbertSpace::for_noon(n);
        let psi = StateVector::noon(s, n, 0.0).unwrap();
        let m = model(vec![], 0.0);
        let sig = simulate_output_fluorescence(&psi, 0.0, &m, &grid(240, 6e-4), None).unwrap();
        let fit = fit_phonon_distribution(&sig, &PhononFitOptions::new(n + 2)).unwrap();
        let direct = parity_expect(&psi, 0.0).unwrap();
        assert!((output_parity_from_fit(&fit) - direct).abs() < 0.02);
    }

    #[test]
    fn parity_of_fock_fits() {
        let fit = |p: Vec<f64>| PhononFit {
            populations: p,
            decay: 0.0,
            rabi: 1.0,
            offset: 0.5,
            residual_norm: 0.0,
            std_errors: None,
            iterations: 0,
        };
        assert_eq!(output_parity_from_fit(&fit(vec![1.0])), 1.0);
        assert_eq!(output_parity_from_fit(&fit(vec![0.0, 1.0])), -1.0);
    }
}
