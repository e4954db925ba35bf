//! Linear solves: sparse LU (faer) with iterative refinement, and Krylov
//! fallbacks (preconditioned CG for symmetric systems, restarted GMRES with
//! ILU(0) otherwise).
//!
//! A CSR matrix is handed to faer as the CSC storage of its transpose, so the
//! factorization is of `Aᵀ` and solves go through the transpose solve.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::ColMut;
use log::{debug, warn};
use thiserror::Error;

use super::sparse::{dot, norm2, SparseMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("matrix is {rows}x{cols}, rhs has length {rhs}")]
    DimensionMismatch { rows: usize, cols: usize, rhs: usize },
    #[error("matrix is singular or ill-conditioned (estimated 1-norm condition {condition:.3e}, relative residual {residual:.3e})")]
    Singular { condition: f64, residual: f64 },
    #[error("iterative solver stalled at relative residual {residual:.3e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Required `‖Ax − b‖ / ‖b‖`.
    pub rel_tol: f64,
    pub refinement_steps: usize,
    pub krylov_max_iter: usize,
    pub gmres_restart: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            refinement_steps: 4,
            krylov_max_iter: 5000,
            gmres_restart: 60,
        }
    }
}

fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64], bn: f64) -> (Vec<f64>, f64) {
    let mut r = a.matvec(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let rn = norm2(&r);
    (r, if bn > 0.0 { rn / bn } else { rn })
}

fn check_dims(a: &SparseMatrix, b: &[f64]) -> Result<(), SolveError> {
    if a.nrows() != a.ncols() || b.len() != a.nrows() {
        return Err(SolveError::DimensionMismatch {
            rows: a.nrows(),
            cols: a.ncols(),
            rhs: b.len(),
        });
    }
    Ok(())
}

/// Numeric LU of one matrix, reusable for many right-hand sides.
pub struct Factorization {
    matrix: SparseMatrix,
    lu: Lu<usize, f64>,
    options: SolverOptions,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorization")
            .field("n", &self.matrix.nrows())
            .finish()
    }
}

impl Factorization {
    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.lu.solve_transpose_in_place(ColMut::from_slice_mut(&mut x));
        x
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    /// Solves with iterative refinement; errors if the residual target is
    /// missed.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SolveError> {
        check_dims(&self.matrix, b)?;
        let bn = norm2(b);
        if bn == 0.0 {
            return Ok(vec![0.0; b.len()]);
        }
        let mut x = self.raw_solve(b);
        let (mut r, mut rel) = relative_residual(&self.matrix, &x, b, bn);
        for _ in 0..self.options.refinement_steps {
            if rel <= self.options.rel_tol || !rel.is_finite() {
                break;
            }
            let dx = self.raw_solve(&r);
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += d;
            }
            let (r2, rel2) = relative_residual(&self.matrix, &x, b, bn);
            r = r2;
            rel = rel2;
        }
        if rel <= self.options.rel_tol {
            Ok(x)
        } else {
            Err(SolveError::Singular {
                condition: self.condition_estimate(),
                residual: rel,
            })
        }
    }

    /// Hager's estimate of `‖A‖₁ ‖A⁻¹‖₁`.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut col_sums = vec![0.0; n];
        for i in 0..n {
            for (j, v) in self.matrix.row(i) {
                col_sums[j] += v.abs();
            }
        }
        let anorm = col_sums.iter().cloned().fold(0.0, f64::max);
        let mut x = vec![1.0 / n as f64; n];
        let mut est = 0.0;
        for _ in 0..5 {
            // y = A⁻¹ x
            let y = self.raw_solve(&x);
            let ynorm: f64 = y.iter().map(|v| v.abs()).sum();
            if !ynorm.is_finite() {
                return f64::INFINITY;
            }
            if ynorm <= est {
                break;
            }
            est = ynorm;
            // z = A⁻ᵀ sign(y)
            let mut z: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
            self.lu.solve_in_place(ColMut::from_slice_mut(&mut z));
            let (jmax, zmax) = z.iter().enumerate().fold(
                (0, 0.0),
                |(bj, bv), (j, v)| if v.abs() > bv { (j, v.abs()) } else { (bj, bv) },
            );
            if zmax <= dot(&z, &x) {
                break;
            }
            x.iter_mut().for_each(|v| *v = 0.0);
            x[jmax] = 1.0;
        }
        anorm * est
    }
}

/// Sparse direct solver that caches the symbolic analysis of the last
/// sparsity pattern it saw.
#[derive(Default)]
pub struct DirectSolver {
    symbolic: Option<(Vec<usize>, Vec<usize>, SymbolicLu<usize>)>,
    pub options: SolverOptions,
}

impl std::fmt::Debug for DirectSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DirectSolver")
            .field("cached", &self.symbolic.is_some())
            .field("options", &self.options)
            .finish()
    }
}

impl DirectSolver {
    pub fn new(options: SolverOptions) -> Self {
        Self {
            symbolic: None,
            options,
        }
    }

    fn symbolic_for(&mut self, a: &SparseMatrix) -> Result<SymbolicLu<usize>, SolveError> {
        if let Some((rp, ci, sym)) = &self.symbolic {
            if rp.as_slice() == a.row_ptr() && ci.as_slice() == a.col_idx() {
                return Ok(sym.clone());
            }
        }
        let n = a.nrows();
        let pattern = SymbolicSparseColMatRef::new_checked(n, n, a.row_ptr(), None, a.col_idx());
        let sym = SymbolicLu::try_new(pattern).map_err(|_| SolveError::Singular {
            condition: f64::INFINITY,
            residual: f64::NAN,
        })?;
        self.symbolic = Some((a.row_ptr().to_vec(), a.col_idx().to_vec(), sym.clone()));
        Ok(sym)
    }

    pub fn factor(&mut self, a: &SparseMatrix) -> Result<Factorization, SolveError> {
        if a.nrows() != a.ncols() {
            return Err(SolveError::DimensionMismatch {
                rows: a.nrows(),
                cols: a.ncols(),
                rhs: a.nrows(),
            });
        }
        let sym = self.symbolic_for(a)?;
        let n = a.nrows();
        let pattern = SymbolicSparseColMatRef::new_checked(n, n, a.row_ptr(), None, a.col_idx());
        let view = SparseColMatRef::new(pattern, a.values());
        let lu = Lu::try_new_with_symbolic(sym, view).map_err(|_| SolveError::Singular {
            condition: f64::INFINITY,
            residual: f64::NAN,
        })?;
        Ok(Factorization {
            matrix: a.clone(),
            lu,
            options: self.options,
        })
    }

    /// Direct solve; on failure falls back to a Krylov method.
    pub fn solve(&mut self, a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>, SolveError> {
        check_dims(a, b)?;
        let direct = self.factor(a).and_then(|f| f.solve(b));
        match direct {
            Ok(x) => Ok(x),
            Err(err) => {
                warn!("direct solve failed ({err}); trying iterative fallback");
                let x = if a.is_symmetric() {
                    conjugate_gradient(a, b, None, &self.options)
                } else {
                    gmres_ilu(a, b, None, &self.options)
                };
                match x {
                    Ok(x) => Ok(x),
                    Err(SolveError::NotConverged { .. }) => Err(err),
                    Err(e) => Err(e),
                }
            }
        }
    }
}

/// One-shot solve of `A x = b` to relative residual 1e-10.
pub fn solve_linear(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>, SolveError> {
    DirectSolver::default().solve(a, b)
}

/// Jacobi-preconditioned conjugate gradients.
pub fn conjugate_gradient(
    a: &SparseMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    options: &SolverOptions,
) -> Result<Vec<f64>, SolveError> {
    check_dims(a, b)?;
    let n = b.len();
    let bn = norm2(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if bn == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let inv_diag: Vec<f64> = (0..n)
        .map(|i| {
            let d = a.get(i, i);
            if d != 0.0 {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect();
    let (mut r, mut rel) = relative_residual(a, &x, b, bn);
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..options.krylov_max_iter {
        if rel <= options.rel_tol {
            debug!("cg converged in {it} iterations");
            return Ok(x);
        }
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        rel = norm2(&r) / bn;
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let (_, rel) = relative_residual(a, &x, b, bn);
    if rel <= options.rel_tol {
        Ok(x)
    } else {
        Err(SolveError::NotConverged {
            residual: rel,
            iterations: options.krylov_max_iter,
        })
    }
}

/// Incomplete LU factorization with the sparsity pattern of `A`.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: SparseMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &SparseMatrix) -> Self {
        let mut lu = a.clone();
        let n = a.nrows();
        let rp = a.row_ptr().to_vec();
        let ci = a.col_idx().to_vec();
        let diag: Vec<usize> = (0..n)
            .map(|i| rp[i] + ci[rp[i]..rp[i + 1]].binary_search(&i).expect("diagonal stored"))
            .collect();
        let vals = lu.values_mut();
        for i in 0..n {
            for kk in rp[i]..diag[i] {
                let k = ci[kk];
                let pivot = vals[diag[k]];
                let pivot = if pivot.abs() > 1e-300 { pivot } else { 1e-300 };
                vals[kk] /= pivot;
                let lik = vals[kk];
                // a_ij -= l_ik u_kj for j > k within the pattern of row i
                let (mut p, mut q) = (kk + 1, diag[k] + 1);
                while p < rp[i + 1] && q < rp[k + 1] {
                    match ci[p].cmp(&ci[q]) {
                        std::cmp::Ordering::Less => p += 1,
                        std::cmp::Ordering::Greater => q += 1,
                        std::cmp::Ordering::Equal => {
                            vals[p] -= lik * vals[q];
                            p += 1;
                            q += 1;
                        }
                    }
                }
            }
        }
        Self { lu, diag }
    }

    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let n = r.len();
        let (rp, ci, v) = (self.lu.row_ptr(), self.lu.col_idx(), self.lu.values());
        let mut y = r.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in rp[i]..self.diag[i] {
                s -= v[k] * y[ci[k]];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in self.diag[i] + 1..rp[i + 1] {
                s -= v[k] * y[ci[k]];
            }
            let d = v[self.diag[i]];
            y[i] = if d != 0.0 { s / d } else { s };
        }
        y
    }
}

/// Restarted GMRES with right ILU(0) preconditioning.
pub fn gmres_ilu(
    a: &SparseMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    options: &SolverOptions,
) -> Result<Vec<f64>, SolveError> {
    check_dims(a, b)?;
    let n = b.len();
    let bn = norm2(b);
    if bn == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let m = options.gmres_restart.max(1);
    let ilu = Ilu0::new(a);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut total = 0;
    while total < options.krylov_max_iter {
        let (r, rel) = relative_residual(a, &x, b, bn);
        if rel <= options.rel_tol {
            return Ok(x);
        }
        let beta = norm2(&r);
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            total += 1;
            let mut w = a.matvec(&ilu.apply(&v[k]));
            for (j, vj) in v.iter().enumerate() {
                h[j][k] = dot(&w, vj);
                for (wi, vji) in w.iter_mut().zip(vj) {
                    *wi -= h[j][k] * vji;
                }
            }
            h[k + 1][k] = norm2(&w);
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            cs[k] = if d != 0.0 { h[k][k] / d } else { 1.0 };
            sn[k] = if d != 0.0 { h[k + 1][k] / d } else { 0.0 };
            h[k][k] = d;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            let hk1 = h[k + 1][k];
            if g[k + 1].abs() / bn <= 0.1 * options.rel_tol || total >= options.krylov_max_iter {
                break;
            }
            h[k + 1][k] = 0.0;
            if hk1 == 0.0 {
                break;
            }
            v.push(w.iter().map(|wi| wi / hk1).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut z = vec![0.0; n];
        for (yj, vj) in y.iter().zip(&v) {
            for (zi, vji) in z.iter_mut().zip(vj) {
                *zi += yj * vji;
            }
        }
        for (xi, d) in x.iter_mut().zip(ilu.apply(&z)) {
            *xi += d;
        }
    }
    let (_, rel) = relative_residual(a, &x, b, bn);
    if rel <= options.rel_tol {
        Ok(x)
    } else {
        Err(SolveError::NotConverged {
            residual: rel,
            iterations: total,
        })
    }
}
