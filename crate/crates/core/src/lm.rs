//! Levenberg–Marquardt nonlinear least squares with curvature-based
//! parameter uncertainties.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A residual model `r(x) ∈ Rᵐ` with an analytic Jacobian.
pub trait Residuals {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, params: &[f64], out: &mut [f64]);
    /// Fills the `m × n` Jacobian ∂rᵢ/∂xⱼ.
    fn jacobian(&self, params: &[f64], jac: &mut DMatrix<f64>);
    /// Maps parameters back into their feasible set after each step.
    fn project(&self, _params: &mut [f64]) {}
}

#[derive(Debug, Clone, Copy)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Converged when an accepted step satisfies ‖δ‖ ≤ tol·(‖x‖ + tol).
    pub rel_step_tol: f64,
    pub initial_lambda: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            max_iterations: 200,
            rel_step_tol: 1e-8,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmFit {
    pub params: Vec<f64>,
    /// Covariance estimate s²(JᵀJ)⁻¹ with s² = SSR/(m − n).
    pub covariance: DMatrix<f64>,
    /// Sum of squared residuals.
    pub ssr: f64,
    pub iterations: usize,
    pub residual_rms: f64,
}

impl LmFit {
    pub fn sigma(&self, i: usize) -> f64 {
        self.covariance[(i, i)].max(0.0).sqrt()
    }
}

fn ssr(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

pub fn levenberg_marquardt<M: Residuals>(model: &M, x0: &[f64], cfg: &LmConfig) -> Result<LmFit> {
    let n = model.n_params();
    let m = model.n_residuals();
    if x0.len() != n {
        return Err(Error::invalid("initial parameter vector has wrong length"));
    }
    if m < n {
        return Err(Error::invalid(format!(
            "underdetermined fit: {m} residuals for {n} parameters"
        )));
    }

    let mut x = x0.to_vec();
    model.project(&mut x);
    let mut r = vec![0.0; m];
    model.residuals(&x, &mut r);
    let mut cost = ssr(&r);
    if !cost.is_finite() {
        return Err(Error::computation("initial residuals are not finite"));
    }
    let mut jac = DMatrix::zeros(m, n);
    model.jacobian(&x, &mut jac);

    let mut lambda = cfg.initial_lambda;
    let mut nu = 2.0;
    let mut diag_scale = DVector::<f64>::zeros(n);
    let mut last_step = f64::INFINITY;
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; m];

    for iter in 1..=cfg.max_iterations {
        let jtj = jac.tr_mul(&jac);
        let rv = DVector::from_column_slice(&r);
        let grad = jac.tr_mul(&rv);
        for j in 0..n {
            diag_scale[j] = diag_scale[j].max(jtj[(j, j)]).max(1e-300);
        }
        if cost == 0.0 || grad.amax() <= 1e-300 {
            return finish(model, x, r, jac, iter, cost);
        }

        // inner loop: raise λ until the step reduces the cost
        loop {
            let mut a = jtj.clone();
            for j in 0..n {
                a[(j, j)] += lambda * diag_scale[j];
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= nu;
                    nu *= 2.0;
                    if lambda > 1e30 {
                        return Err(Error::computation("normal equations are singular"));
                    }
                    continue;
                }
            };
            for j in 0..n {
                trial[j] = x[j] + step[j];
            }
            model.project(&mut trial);
            let actual: Vec<f64> = trial.iter().zip(&x).map(|(t, v)| t - v).collect();
            let step_norm = actual.iter().map(|v| v * v).sum::<f64>().sqrt();
            let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            last_step = step_norm / (x_norm + cfg.rel_step_tol);

            model.residuals(&trial, &mut r_trial);
            let new_cost = ssr(&r_trial);
            if new_cost.is_finite() && new_cost <= cost {
                let dv = DVector::from_column_slice(&actual);
                let predicted = -(2.0 * grad.dot(&dv) + (&jac * &dv).norm_squared());
                let rho = if predicted > 0.0 {
                    (cost - new_cost) / predicted
                } else {
                    1.0
                };
                lambda *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                nu = 2.0;
                std::mem::swap(&mut x, &mut trial);
                std::mem::swap(&mut r, &mut r_trial);
                cost = new_cost;
                model.jacobian(&x, &mut jac);
                if step_norm <= cfg.rel_step_tol * (x_norm + cfg.rel_step_tol) {
                    return finish(model, x, r, jac, iter, cost);
                }
                break;
            }
            if step_norm <= cfg.rel_step_tol * 1e-3 * (x_norm + cfg.rel_step_tol) {
                // no descent possible at machine resolution: at the minimum
                return finish(model, x, r, jac, iter, cost);
            }
            lambda *= nu;
            nu *= 2.0;
            if lambda > 1e30 {
                return finish(model, x, r, jac, iter, cost);
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iterations,
        cost,
        step: last_step,
    })
}

fn finish<M: Residuals>(
    model: &M,
    x: Vec<f64>,
    r: Vec<f64>,
    jac: DMatrix<f64>,
    iterations: usize,
    cost: f64,
) -> Result<LmFit> {
    let n = model.n_params();
    let m = model.n_residuals();
    let dof = (m - n).max(1) as f64;
    let s2 = cost / dof;
    let jtj = jac.tr_mul(&jac);
    let inv = jtj
        .clone()
        .pseudo_inverse(1e-14 * jtj.amax().max(1e-300))
        .map_err(|e| Error::computation(format!("covariance inversion failed: {e}")))?;
    Ok(LmFit {
        params: x,
        covariance: inv * s2,
        ssr: cost,
        iterations,
        residual_rms: (cost / r.len() as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y = a·exp(−b·t)
    struct ExpDecay {
        t: Vec<f64>,
        y: Vec<f64>,
    }

    impl Residuals for ExpDecay {
        fn n_params(&self) -> usize {
            2
        }
        fn n_residuals(&self) -> usize {
            self.t.len()
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            for (i, (&t, &y)) in self.t.iter().zip(&self.y).enumerate() {
                out[i] = p[0] * (-p[1] * t).exp() - y;
            }
        }
        fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
            for (i, &t) in self.t.iter().enumerate() {
                let e = (-p[1] * t).exp();
                jac[(i, 0)] = e;
                jac[(i, 1)] = -p[0] * t * e;
            }
        }
    }

    #[test]
    fn recovers_exact_exponential() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y = t.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        let fit =
            levenberg_marquardt(&ExpDecay { t, y }, &[1.0, 0.1], &LmConfig::default()).unwrap();
        assert!((fit.params[0] - 3.0).abs() < 1e-9);
        assert!((fit.params[1] - 0.7).abs() < 1e-9);
        assert!(fit.ssr < 1e-20);
    }

    #[test]
    fn iteration_cap_reports_diagnostics() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y = t.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        let cfg = LmConfig {
            max_iterations: 1,
            ..LmConfig::default()
        };
        let err = levenberg_marquardt(&ExpDecay { t, y }, &[1.0, 0.1], &cfg).unwrap_err();
        assert!(
            matches!(err, Error::NoConvergence { iterations: 1, .. }),
            "{err}"
        );
    }
}
