//! Levenberg-Marquardt for small dense least-squares problems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmSettings {
    pub max_iter: usize,
    /// Stop when the infinity norm of the gradient falls below this.
    pub gtol: f64,
    /// Stop when the relative step length falls below this.
    pub xtol: f64,
    /// Stop when half the squared residual norm falls below this.
    pub ftol_abs: f64,
    /// Initial damping relative to the largest diagonal of `J^T J`.
    pub tau: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self { max_iter: 200, gtol: 1e-14, xtol: 1e-15, ftol_abs: 0.0, tau: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LmStatus {
    Gradient,
    Step,
    Cost,
    /// Accepted steps no longer reduce the cost by a relative 1e-12.
    Stagnated,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmReport {
    pub x: DVector<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub status: LmStatus,
}

impl LmReport {
    pub fn converged(&self) -> bool {
        matches!(self.status, LmStatus::Gradient | LmStatus::Step | LmStatus::Cost)
    }
}

fn finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Minimizes `0.5 |r(x)|^2` with Nielsen's damping update.
pub fn lm_minimize<R, J>(residual: R, jacobian: J, x0: DVector<f64>, settings: &LmSettings) -> Result<LmReport>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let mut x = x0;
    let mut r = residual(&x);
    if !finite(&r) || !finite(&x) {
        return Err(Error::Generation("non-finite residual at the starting point".into()));
    }
    let mut cost = 0.5 * r.norm_squared();
    let mut jac = jacobian(&x);
    let mut a = jac.tr_mul(&jac);
    let mut g = jac.tr_mul(&r);
    let mut mu = settings.tau * a.diagonal().max().max(1e-300);
    let mut nu = 2.0;
    let n = x.len();
    for it in 0..settings.max_iter {
        let gn = g.amax();
        if gn <= settings.gtol {
            return Ok(LmReport { x, cost, iterations: it, grad_norm: gn, status: LmStatus::Gradient });
        }
        if cost <= settings.ftol_abs {
            return Ok(LmReport { x, cost, iterations: it, grad_norm: gn, status: LmStatus::Cost });
        }
        let damped = &a + DMatrix::identity(n, n) * mu;
        let Some(chol) = damped.cholesky() else {
            mu *= nu;
            nu *= 2.0;
            continue;
        };
        let h = -chol.solve(&g);
        if h.norm() <= settings.xtol * (x.norm() + settings.xtol) {
            return Ok(LmReport { x, cost, iterations: it, grad_norm: gn, status: LmStatus::Step });
        }
        let x_new = &x + &h;
        let r_new = residual(&x_new);
        if !finite(&r_new) {
            return Err(Error::Generation(format!("non-finite residual at iteration {it}")));
        }
        let cost_new = 0.5 * r_new.norm_squared();
        let predicted = 0.5 * h.dot(&(&h * mu - &g));
        let rho = (cost - cost_new) / predicted;
        if rho > 0.0 {
            let rel = (cost - cost_new) / cost;
            x = x_new;
            r = r_new;
            cost = cost_new;
            jac = jacobian(&x);
            a = jac.tr_mul(&jac);
            g = jac.tr_mul(&r);
            mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
            if rel < 1e-12 && cost > settings.ftol_abs {
                let gn = g.amax();
                return Ok(LmReport { x, cost, iterations: it + 1, grad_norm: gn, status: LmStatus::Stagnated });
            }
        } else {
            mu *= nu;
            nu *= 2.0;
        }
    }
    let gn = g.amax();
    Ok(LmReport { x, cost, iterations: settings.max_iter, grad_norm: gn, status: LmStatus::MaxIter })
}

/// Central finite-difference Jacobian.
pub fn numeric_jacobian<R>(residual: R, x: &DVector<f64>, step: f64) -> DMatrix<f64>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
{
    let r0 = residual(x);
    let mut jac = DMatrix::zeros(r0.len(), x.len());
    for k in 0..x.len() {
        let hk = step * x[k].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += hk;
        xm[k] -= hk;
        let d = (residual(&xp) - residual(&xm)) / (2.0 * hk);
        jac.set_column(k, &d);
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_residual() {
        let rep = lm_minimize(
            |x| DVector::from_element(1, x[0] - 3.0),
            |_| DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 0.0),
            &LmSettings::default(),
        )
        .unwrap();
        assert!((rep.x[0] - 3.0).abs() < 1e-12);
        assert!(rep.converged());
    }

    #[test]
    fn rosenbrock() {
        let r = |x: &DVector<f64>| DVector::from_vec(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]]);
        let j = |x: &DVector<f64>| DMatrix::from_row_slice(2, 2, &[-20.0 * x[0], 10.0, -1.0, 0.0]);
        let rep = lm_minimize(r, j, DVector::from_vec(vec![-1.2, 1.0]), &LmSettings::default()).unwrap();
        assert!((rep.x[0] - 1.0).abs() < 1e-6 && (rep.x[1] - 1.0).abs() < 1e-6, "{:?}", rep.x);
        assert!(rep.cost < 1e-20);
    }

    #[test]
    fn non_finite_start_is_rejected() {
        let err = lm_minimize(
            |x| DVector::from_element(1, x[0].ln()),
            |_| DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, -1.0),
            &LmSettings::default(),
        );
        assert!(err.is_err());
    }
}
