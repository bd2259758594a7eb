//! Levenberg–Marquardt with identity damping and a gain-ratio controlled
//! damping update.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub trait LeastSquares {
    fn residuals(&self, x: &[f64]) -> Result<DVector<f64>>;
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmSettings {
    pub max_iter: usize,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub ftol: f64,
    /// Stop when `‖δ‖ ≤ xtol·(‖x‖ + xtol)`.
    pub xtol: f64,
    /// Stop when `‖Jᵀr‖∞ ≤ gtol`.
    pub gtol: f64,
    pub initial_damping: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            max_iter: 500,
            ftol: 1e-10,
            xtol: 1e-10,
            gtol: 1e-9,
            initial_damping: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    SmallCostReduction,
    SmallStep,
    SmallGradient,
    MaxIterations,
    /// Damping grew without bound: no step reduced the cost.
    DampingOverflow,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(
            self,
            Termination::SmallCostReduction | Termination::SmallStep | Termination::SmallGradient
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmReport {
    pub x: Vec<f64>,
    /// `‖r(x)‖²`
    pub cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub cost_trace: Vec<f64>,
    /// Steps rejected because the model failed (e.g. equilibrium divergence).
    pub failed_evaluations: usize,
}

pub fn levenberg_marquardt<P: LeastSquares + ?Sized>(problem: &P, x0: &[f64], settings: &LmSettings) -> Result<LmReport> {
    let mut x = DVector::from_column_slice(x0);
    let mut r = problem.residuals(x.as_slice())?;
    let mut cost = r.norm_squared();
    let mut cost_trace = vec![cost];
    let mut failed_evaluations = 0;
    let n = x.len();
    if n == 0 {
        return Ok(LmReport {
            x: x.as_slice().to_vec(),
            cost,
            iterations: 0,
            termination: Termination::SmallStep,
            cost_trace,
            failed_evaluations,
        });
    }
    let mut jac = problem.jacobian(x.as_slice())?;
    let mut a = jac.tr_mul(&jac);
    let mut g = jac.tr_mul(&r);
    let mut mu = settings.initial_damping;
    let mut nu = 2.0;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    'outer: while iterations < settings.max_iter {
        iterations += 1;
        if g.amax() <= settings.gtol {
            termination = Termination::SmallGradient;
            break;
        }
        loop {
            let mut m = a.clone();
            for i in 0..n {
                m[(i, i)] += mu;
            }
            let Some(chol) = m.cholesky() else {
                mu *= nu;
                nu *= 2.0;
                if mu > 1e30 {
                    termination = Termination::DampingOverflow;
                    break 'outer;
                }
                continue;
            };
            let delta = chol.solve(&(-&g));
            if delta.norm() <= settings.xtol * (x.norm() + settings.xtol) {
                termination = Termination::SmallStep;
                break 'outer;
            }
            let x_new = &x + &delta;
            let trial = problem.residuals(x_new.as_slice());
            let (accepted, cost_new, r_new) = match trial {
                Ok(r_new) => {
                    let cost_new = r_new.norm_squared();
                    let predicted = -(2.0 * delta.dot(&g) + delta.dot(&(&a * &delta)));
                    let ratio = (cost - cost_new) / predicted;
                    (cost_new.is_finite() && predicted > 0.0 && ratio > 1e-4, cost_new, Some((r_new, ratio)))
                }
                Err(e) if e.is_numerical() => {
                    failed_evaluations += 1;
                    (false, f64::INFINITY, None)
                }
                Err(e) => return Err(e),
            };
            if accepted {
                let (r_new, ratio) = r_new.expect("accepted steps have residuals");
                let reduction = (cost - cost_new) / cost.max(f64::MIN_POSITIVE);
                x = x_new;
                r = r_new;
                cost = cost_new;
                cost_trace.push(cost);
                mu *= f64::max(1.0 / 3.0, 1.0 - (2.0 * ratio - 1.0).powi(3));
                nu = 2.0;
                if reduction < settings.ftol {
                    termination = Termination::SmallCostReduction;
                    break 'outer;
                }
                jac = problem.jacobian(x.as_slice())?;
                a = jac.tr_mul(&jac);
                g = jac.tr_mul(&r);
                break;
            }
            mu *= nu;
            nu *= 2.0;
            if mu > 1e30 {
                termination = Termination::DampingOverflow;
                break 'outer;
            }
        }
    }
    Ok(LmReport {
        x: x.as_slice().to_vec(),
        cost,
        iterations,
        termination,
        cost_trace,
        failed_evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rosenbrock as a least-squares problem.
    struct Rosenbrock;

    impl LeastSquares for Rosenbrock {
        fn residuals(&self, x: &[f64]) -> Result<DVector<f64>> {
            Ok(DVector::from_vec(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]]))
        }
        fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
            Ok(DMatrix::from_row_slice(2, 2, &[-20.0 * x[0], 10.0, -1.0, 0.0]))
        }
    }

    #[test]
    fn solves_rosenbrock() {
        let rep = levenberg_marquardt(&Rosenbrock, &[-1.2, 1.0], &LmSettings::default()).unwrap();
        assert!(rep.termination.converged(), "{:?}", rep.termination);
        assert!((rep.x[0] - 1.0).abs() < 1e-6 && (rep.x[1] - 1.0).abs() < 1e-6);
        assert!(rep.cost_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    struct Linear;

    impl LeastSquares for Linear {
        fn residuals(&self, x: &[f64]) -> Result<DVector<f64>> {
            Ok(DVector::from_vec(vec![x[0] + x[1] - 3.0, x[0] - x[1] - 1.0, 0.1 * x[0]]))
        }
        fn jacobian(&self, _x: &[f64]) -> Result<DMatrix<f64>> {
            Ok(DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, -1.0, 0.1, 0.0]))
        }
    }

    #[test]
    fn linear_problem_matches_normal_equations() {
        let rep = levenberg_marquardt(&Linear, &[0.0, 0.0], &LmSettings::default()).unwrap();
        let j = Linear.jacobian(&[0.0, 0.0]).unwrap();
        let b = -Linear.residuals(&[0.0, 0.0]).unwrap();
        let x = (j.transpose() * &j).cholesky().unwrap().solve(&(j.transpose() * b));
        assert!((rep.x[0] - x[0]).abs() < 1e-8 && (rep.x[1] - x[1]).abs() < 1e-8);
    }
}
