//! Small numerical optimizers: golden-section search, non-negative least
//! squares (Lawson–Hanson) and box-bounded Levenberg–Marquardt.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Minimizes a unimodal `f` on `[lo, hi]` to absolute tolerance `tol`.
/// Returns `(x, f(x))`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while (hi - lo).abs() > tol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 < f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Grid scan followed by golden-section refinement around the best point.
pub fn grid_then_golden(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    points: usize,
    tol: f64,
) -> (f64, f64) {
    let points = points.max(3);
    let step = (hi - lo) / (points - 1) as f64;
    let (best, _) = (0..points)
        .map(|i| (i, f(lo + step * i as f64)))
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let c = lo + step * best as f64;
    golden_section(f, c - step, c + step, tol)
}

/// `argmin ‖Ax − b‖₂` subject to `x ≥ 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: b.len() });
    }
    let tol = 10.0 * f64::EPSILON * a.norm() * (m.max(n) as f64);
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let max_outer = 3 * n + 10;

    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let mut z = DVector::zeros(n);
        if idx.is_empty() {
            return z;
        }
        let sub = DMatrix::from_fn(m, idx.len(), |i, k| a[(i, idx[k])]);
        let sol = sub
            .clone()
            .svd(true, true)
            .solve(b, 1e-14)
            .unwrap_or_else(|_| DVector::zeros(idx.len()));
        for (k, &j) in idx.iter().enumerate() {
            z[j] = sol[k];
        }
        z
    };

    for _ in 0..max_outer {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else {
            return Ok(x);
        };
        passive[j] = true;
        loop {
            let z = solve_passive(&passive);
            let infeasible: Vec<usize> = (0..n).filter(|&k| passive[k] && z[k] <= 0.0).collect();
            if infeasible.is_empty() {
                x = z;
                break;
            }
            let alpha = infeasible
                .iter()
                .map(|&k| x[k] / (x[k] - z[k]))
                .fold(f64::INFINITY, f64::min);
            x += (z - &x) * alpha;
            for k in 0..n {
                if passive[k] && x[k].abs() <= tol {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: max_outer,
        residual: (b - a * &x).norm(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative cost decrease below which iteration stops.
    pub ftol: f64,
    /// Relative parameter step below which iteration stops.
    pub xtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 500, ftol: 1e-15, xtol: 1e-12 }
    }
}

#[derive(Clone, Debug)]
pub struct LmResult {
    pub params: DVector<f64>,
    /// `½‖r‖²` at the solution.
    pub cost: f64,
    pub iterations: usize,
    /// `(JᵀJ)⁻¹` at the solution, unscaled; `None` when singular.
    pub inverse_hessian: Option<DMatrix<f64>>,
}

impl LmResult {
    /// One-sigma uncertainties from the inverse Hessian, scaled by the
    /// reduced residual variance when `scale` is given.
    pub fn std_errors(&self, scale: Option<(usize, usize)>) -> Option<DVector<f64>> {
        let cov = self.inverse_hessian.as_ref()?;
        let s2 = match scale {
            Some((m, p)) if m > p => 2.0 * self.cost / (m - p) as f64,
            _ => 1.0,
        };
        Some(DVector::from_iterator(cov.nrows(), (0..cov.nrows()).map(|i| (cov[(i, i)] * s2).max(0.0).sqrt())))
    }
}

/// Box-bounded Levenberg–Marquardt: steps are projected onto
/// `[lower, upper]`. `model` returns residuals and their Jacobian.
pub fn levenberg_marquardt(
    model: impl Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
    x0: DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    opts: LmOptions,
) -> Result<LmResult> {
    let p = x0.len();
    if lower.len() != p || upper.len() != p {
        return Err(Error::DimensionMismatch { expected: p, found: lower.len().min(upper.len()) });
    }
    let project = |x: &mut DVector<f64>| {
        for i in 0..p {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut x = x0;
    project(&mut x);
    let (mut r, mut jac) = model(&x);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite residual at the initial point".into()));
    }
    let mut cost = 0.5 * r.norm_squared();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut improved = false;
        while lambda < 1e16 {
            let mut damped = jtj.clone();
            for i in 0..p {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = &x + &step;
            project(&mut trial);
            let (r_new, j_new) = model(&trial);
            let cost_new = 0.5 * r_new.norm_squared();
            if cost_new.is_finite() && cost_new <= cost {
                let dx = (&trial - &x).norm();
                let dc = cost - cost_new;
                x = trial;
                r = r_new;
                jac = j_new;
                cost = cost_new;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                if dc <= opts.ftol * cost.max(f64::MIN_POSITIVE) || dx <= opts.xtol * (x.norm() + opts.xtol) {
                    return Ok(finish(x, cost, iterations, &jac));
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no downhill step at any damping: stationary to working precision
            return Ok(finish(x, cost, iterations, &jac));
        }
    }
    Err(Error::NonConvergence { iterations, residual: (2.0 * cost).sqrt() })
}

fn finish(params: DVector<f64>, cost: f64, iterations: usize, jac: &DMatrix<f64>) -> LmResult {
    let inverse_hessian = (jac.transpose() * jac).try_inverse();
    LmResult { params, cost, iterations, inverse_hessian }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_minimum() {
        let (x, fx) = golden_section(|x| (x - 1.3).powi(2) + 2.0, -5.0, 5.0, 1e-10);
        assert!((x - 1.3).abs() < 1e-7);
        assert!((fx - 2.0).abs() < 1e-12);
        let (x, _) = grid_then_golden(|x| (3.0 * x).cos(), 0.0, 2.0, 21, 1e-10);
        assert!((x - std::f64::consts::PI / 3.0).abs() < 1e-7);
    }

    #[test]
    fn nnls_matches_unconstrained_when_interior() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0]);
        let x_true = DVector::from_vec(vec![0.7, 0.2]);
        let b = &a * &x_true;
        let x = nnls(&a, &b).unwrap();
        assert!((x - x_true).amax() < 1e-12);
    }

    #[test]
    fn nnls_clamps_negative_component() {
        let a = DMatrix::<f64>::identity(3, 3);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = nnls(&a, &b).unwrap();
        assert!((x - DVector::from_vec(vec![1.0, 0.0, 0.5])).amax() < 1e-14);
    }

    #[test]
    fn lm_fits_exponential() {
        let ts: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.5 * (-1.3 * t).exp() + 0.1).collect();
        let model = |p: &DVector<f64>| {
            let r = DVector::from_iterator(ts.len(), ts.iter().zip(&ys).map(|(t, y)| p[0] * (-p[1] * t).exp() + p[2] - y));
            let j = DMatrix::from_fn(ts.len(), 3, |i, k| {
                let e = (-p[1] * ts[i]).exp();
                match k {
                    0 => e,
                    1 => -p[0] * ts[i] * e,
                    _ => 1.0,
                }
            });
            (r, j)
        };
        let lo = DVector::from_vec(vec![0.0, 0.0, -1.0]);
        let hi = DVector::from_vec(vec![10.0, 10.0, 1.0]);
        let res = levenberg_marquardt(model, DVector::from_vec(vec![1.0, 0.5, 0.0]), &lo, &hi, LmOptions::default()).unwrap();
        assert!((res.params[0] - 2.5).abs() < 1e-8);
        assert!((res.params[1] - 1.3).abs() < 1e-8);
        assert!(res.cost < 1e-20);
    }

    #[test]
    fn lm_respects_bounds() {
        let model = |p: &DVector<f64>| (DVector::from_vec(vec![p[0] - 3.0]), DMatrix::from_element(1, 1, 1.0));
        let res = levenberg_marquardt(
            model,
            DVector::from_vec(vec![0.0]),
            &DVector::from_vec(vec![-1.0]),
            &DVector::from_vec(vec![1.0]),
            LmOptions::default(),
        )
        .unwrap();
        assert_eq!(res.params[0], 1.0);
    }
}
