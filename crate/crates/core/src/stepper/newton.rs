//! Damped Newton iteration on an assembled residual/Jacobian pair with
//! homogeneous constraints on a fixed set of unknowns.

use log::debug;
use thiserror::Error;

use crate::fem::dirichlet::{apply_dirichlet, DirichletSet};
use crate::fem::solve::{DirectSolver, Factorization, SolveError, SolverOptions};
use crate::fem::sparse::{norm2, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub abs_tol: f64,
    /// Relative to the larger of the initial residual and the load norm.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Growth factor over two consecutive iterates that counts as divergence.
    pub divergence_guard: f64,
    /// Backtrack on the residual norm when a full step increases it.
    pub line_search: bool,
    /// Keep the factorized Jacobian across iterations and solves.
    pub lagged: bool,
    /// With `lagged`, refactor once an iteration reduces the residual by
    /// less than this factor.
    pub lag_ratio: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-14,
            rel_tol: 1e-10,
            max_iter: 30,
            divergence_guard: 1e3,
            line_search: true,
            lagged: false,
            lag_ratio: 0.1,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.abs_tol > 0.0) {
            return Err("newton_abs_tol must be positive".into());
        }
        if !(self.rel_tol > 0.0) {
            return Err("newton_rel_tol must be positive".into());
        }
        if self.max_iter == 0 {
            return Err("newton_max_iter must be at least 1".into());
        }
        if !(self.divergence_guard > 1.0) {
            return Err("newton_divergence_guard must exceed 1".into());
        }
        if !(self.lag_ratio > 0.0 && self.lag_ratio < 1.0) {
            return Err("newton_lag_ratio must lie in (0, 1)".into());
        }
        Ok(())
    }
}

/// Linear solver for Newton corrections. With a lagged configuration the
/// last factorized Jacobian is kept until convergence slows down.
#[derive(Debug, Default)]
pub struct JacobianSolver {
    direct: DirectSolver,
    frozen: Option<Factorization>,
    factorizations: usize,
}

impl JacobianSolver {
    pub fn new(options: SolverOptions) -> Self {
        Self {
            direct: DirectSolver::new(options),
            frozen: None,
            factorizations: 0,
        }
    }

    /// Number of Jacobian factorizations so far.
    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    /// Drops a kept Jacobian.
    pub fn reset(&mut self) {
        self.frozen = None;
    }

    fn factor(&mut self, jac: &SparseMatrix) -> Result<Factorization, SolveError> {
        self.factorizations += 1;
        self.direct.factor(jac)
    }
}

/// Residual norms before the first and after every Newton update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NewtonLog {
    pub residuals: Vec<f64>,
    pub step_lengths: Vec<f64>,
    /// Whether each update used a Jacobian assembled at its own iterate.
    pub fresh_jacobian: Vec<bool>,
    pub tolerance: f64,
}

impl NewtonLog {
    pub fn iterations(&self) -> usize {
        self.residuals.len().saturating_sub(1)
    }

    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(f64::NAN)
    }

    /// Ratios `r_{k+1} / r_k²` over full Newton steps with a fresh Jacobian
    /// whose residuals stay above `floor`.
    pub fn quadratic_ratios(&self, floor: f64) -> Vec<f64> {
        self.residuals
            .windows(2)
            .zip(self.step_lengths.iter().zip(&self.fresh_jacobian))
            .filter(|(w, (s, f))| **s == 1.0 && **f && w[0] > floor && w[1] > floor)
            .map(|(w, _)| w[1] / (w[0] * w[0]))
            .collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NewtonError {
    #[error("Newton did not converge in {} iterations (residual {:.3e}, tolerance {:.3e})", .0.iterations(), .0.final_residual(), .0.tolerance)]
    NonConvergence(NewtonLog),
    #[error("Newton diverged (residuals {:?})", .0.residuals)]
    DivergenceDetected(NewtonLog),
    #[error("linear solve failed: {0}")]
    Linear(SolveError),
}

/// Runs Newton from `x`, which must already satisfy the constraints.
/// `residual` returns the full residual vector; rows in `fixed` are
/// ignored. `jacobian` returns the unconstrained Jacobian.
///
/// With `lagged`, a solve that needs a damped step or fails is restarted
/// from `x` with exact Newton.
pub fn newton_solve<R, J>(
    x: &mut [f64],
    fixed: &DirichletSet,
    load_norm: f64,
    config: &NewtonConfig,
    solver: &mut JacobianSolver,
    mut residual: R,
    mut jacobian: J,
) -> Result<NewtonLog, NewtonError>
where
    R: FnMut(&[f64]) -> Vec<f64>,
    J: FnMut(&[f64]) -> SparseMatrix,
{
    if config.lagged {
        let start = x.to_vec();
        match attempt(x, fixed, load_norm, config, true, solver, &mut residual, &mut jacobian) {
            Ok(log) => return Ok(log),
            Err(e) => {
                debug!("lagged Newton abandoned: {e}");
                x.copy_from_slice(&start);
                solver.frozen = None;
            }
        }
    }
    attempt(x, fixed, load_norm, config, false, solver, &mut residual, &mut jacobian)
}

#[allow(clippy::too_many_arguments)]
fn attempt<R, J>(
    x: &mut [f64],
    fixed: &DirichletSet,
    load_norm: f64,
    config: &NewtonConfig,
    lagged: bool,
    solver: &mut JacobianSolver,
    residual: &mut R,
    jacobian: &mut J,
) -> Result<NewtonLog, NewtonError>
where
    R: FnMut(&[f64]) -> Vec<f64>,
    J: FnMut(&[f64]) -> SparseMatrix,
{
    let mask = fixed.mask(x.len());
    let eval = |r: &mut dyn FnMut(&[f64]) -> Vec<f64>, x: &[f64]| {
        let mut v = r(x);
        for (vi, m) in v.iter_mut().zip(&mask) {
            if *m {
                *vi = 0.0;
            }
        }
        let n = norm2(&v);
        (v, n)
    };
    let (mut r, mut rn) = eval(residual, x);
    let tol = config.abs_tol.max(config.rel_tol * rn.max(load_norm));
    let mut log = NewtonLog {
        residuals: vec![rn],
        step_lengths: Vec::new(),
        fresh_jacobian: Vec::new(),
        tolerance: tol,
    };
    let zeros = fixed.map_values(|_, _| 0.0);
    while rn > tol {
        if log.iterations() >= config.max_iter {
            return Err(NewtonError::NonConvergence(log));
        }
        if !rn.is_finite() {
            return Err(NewtonError::DivergenceDetected(log));
        }
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let mut assemble = |x: &[f64]| {
            let mut jac = jacobian(x);
            let mut dummy = vec![0.0; x.len()];
            apply_dirichlet(&mut jac, &mut dummy, &zeros).expect("constraint dofs within system");
            jac
        };
        let (dx, fresh) = if lagged {
            let kept = solver.frozen.as_ref().map(|f| f.solve(&rhs));
            match kept {
                Some(Ok(dx)) => (dx, false),
                _ => {
                    let factor = solver.factor(&assemble(x)).map_err(NewtonError::Linear)?;
                    let dx = factor.solve(&rhs).map_err(NewtonError::Linear)?;
                    solver.frozen = Some(factor);
                    (dx, true)
                }
            }
        } else {
            let jac = assemble(x);
            solver.factorizations += 1;
            (solver.direct.solve(&jac, &rhs).map_err(NewtonError::Linear)?, true)
        };

        let x0 = x.to_vec();
        let mut step = 1.0;
        let (mut r_new, mut rn_new);
        loop {
            for ((xi, x0i), d) in x.iter_mut().zip(&x0).zip(&dx) {
                *xi = x0i + step * d;
            }
            (r_new, rn_new) = eval(residual, x);
            if !fresh {
                break;
            }
            if !config.line_search || (rn_new.is_finite() && rn_new < rn) || step < 1e-3 {
                break;
            }
            step *= 0.5;
        }
        if lagged && fresh && step < 1.0 {
            log.residuals.push(rn_new);
            return Err(NewtonError::NonConvergence(log));
        }
        if !fresh && !(rn_new < config.lag_ratio * rn) {
            // A kept Jacobian that does not contract the residual is replaced.
            x.copy_from_slice(&x0);
            solver.frozen = None;
            continue;
        }
        debug!(
            "newton iter {}: residual {rn_new:.3e} step {step} fresh {fresh}",
            log.iterations() + 1
        );
        r = r_new;
        rn = rn_new;
        log.residuals.push(rn);
        log.step_lengths.push(step);
        log.fresh_jacobian.push(fresh);
        if lagged && !(rn < config.lag_ratio * log.residuals[log.residuals.len() - 2]) {
            solver.frozen = None;
        }
        let k = log.residuals.len();
        if k >= 3 && log.residuals[k - 1] > config.divergence_guard * log.residuals[k - 3] {
            return Err(NewtonError::DivergenceDetected(log));
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_quadratic_convergence() {
        // x² − 2 = 0
        let mut x = vec![1.0];
        let cfg = NewtonConfig {
            abs_tol: 1e-15,
            rel_tol: 1e-16,
            ..Default::default()
        };
        let log = newton_solve(
            &mut x,
            &DirichletSet::new(),
            0.0,
            &cfg,
            &mut JacobianSolver::default(),
            |x| vec![x[0] * x[0] - 2.0],
            |x| SparseMatrix::from_dense(&[vec![2.0 * x[0]]]),
        )
        .unwrap();
        assert!((x[0] - 2f64.sqrt()).abs() < 1e-14, "{x:?} {log:?}");
        let ratios = log.quadratic_ratios(1e-12);
        assert!(!ratios.is_empty());
        assert!(ratios.iter().all(|r| *r < 1.0));
    }

    #[test]
    fn linear_problem_one_iteration() {
        let mut x = vec![0.0, 0.0];
        let a = SparseMatrix::from_dense(&[vec![3.0, 1.0], vec![1.0, 2.0]]);
        let log = newton_solve(
            &mut x,
            &DirichletSet::new(),
            0.0,
            &NewtonConfig::default(),
            &mut JacobianSolver::default(),
            |x| {
                let mut r = a.matvec(x);
                r[0] -= 1.0;
                r[1] -= 2.0;
                r
            },
            |_| a.clone(),
        )
        .unwrap();
        assert_eq!(log.iterations(), 1);
    }

    #[test]
    fn lagged_jacobian_converges_with_fewer_factorizations() {
        // x³ + x − 3 = 0
        let cfg = NewtonConfig {
            abs_tol: 1e-13,
            rel_tol: 1e-16,
            lagged: true,
            lag_ratio: 0.5,
            ..Default::default()
        };
        let mut solver = JacobianSolver::default();
        let mut x = vec![1.0];
        let log = newton_solve(
            &mut x,
            &DirichletSet::new(),
            0.0,
            &cfg,
            &mut solver,
            |x| vec![x[0].powi(3) + x[0] - 3.0],
            |x| SparseMatrix::from_dense(&[vec![3.0 * x[0] * x[0] + 1.0]]),
        )
        .unwrap();
        assert!((x[0].powi(3) + x[0] - 3.0).abs() < 1e-13);
        assert!(solver.factorizations() < log.iterations(), "{log:?}");
        assert!(log.fresh_jacobian[0]);
    }

    #[test]
    fn lagged_restarts_exact_when_damping_is_needed() {
        // atan(x) = 0 from x = 3: full Newton steps overshoot.
        let residual = |x: &[f64]| vec![x[0].atan()];
        let jacobian = |x: &[f64]| SparseMatrix::from_dense(&[vec![1.0 / (1.0 + x[0] * x[0])]]);
        let mut results = Vec::new();
        for lagged in [false, true] {
            let cfg = NewtonConfig {
                lagged,
                ..Default::default()
            };
            let mut x = vec![3.0];
            let log = newton_solve(
                &mut x,
                &DirichletSet::new(),
                0.0,
                &cfg,
                &mut JacobianSolver::default(),
                residual,
                jacobian,
            )
            .unwrap();
            assert!(x[0].abs() < 1e-13);
            results.push((x[0], log.residuals));
        }
        assert_eq!(results[0], results[1]);
    }

    #[test]
    fn iteration_cap_reported() {
        let mut x = vec![10.0];
        let cfg = NewtonConfig {
            max_iter: 2,
            ..Default::default()
        };
        let err = newton_solve(
            &mut x,
            &DirichletSet::new(),
            0.0,
            &cfg,
            &mut JacobianSolver::default(),
            |x| vec![x[0].powi(3) - 1.0],
            |x| SparseMatrix::from_dense(&[vec![3.0 * x[0] * x[0]]]),
        )
        .unwrap_err();
        match err {
            NewtonError::NonConvergence(log) => assert_eq!(log.iterations(), 2),
            other => panic!("{other:?}"),
        }
    }
}
