//! Dirichlet constraints imposed by symmetric elimination.

use std::collections::BTreeMap;

use thiserror::Error;

use super::sparse::SparseMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum DirichletError {
    #[error("dof {dof} constrained to both {first} and {second}")]
    Conflict { dof: usize, first: f64, second: f64 },
    #[error("dof {dof} out of range for a system of size {size}")]
    OutOfRange { dof: usize, size: usize },
}

/// Prescribed values keyed by global dof.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DirichletSet {
    values: BTreeMap<usize, f64>,
}

impl DirichletSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a constraint. Re-adding a dof is accepted when the values agree
    /// to 1e-12 (absolute or relative).
    pub fn insert(&mut self, dof: usize, value: f64) -> Result<(), DirichletError> {
        if let Some(&old) = self.values.get(&dof) {
            let tol = 1e-12 * old.abs().max(value.abs()).max(1.0);
            if (old - value).abs() > tol {
                return Err(DirichletError::Conflict {
                    dof,
                    first: old,
                    second: value,
                });
            }
            return Ok(());
        }
        self.values.insert(dof, value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, dof: usize) -> bool {
        self.values.contains_key(&dof)
    }

    pub fn get(&self, dof: usize) -> Option<f64> {
        self.values.get(&dof).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().map(|(d, v)| (*d, *v))
    }

    pub fn dofs(&self) -> impl Iterator<Item = usize> + '_ {
        self.values.keys().copied()
    }

    /// Same dofs with every value replaced by `f(dof, value)`.
    pub fn map_values<F: Fn(usize, f64) -> f64>(&self, f: F) -> Self {
        Self {
            values: self.values.iter().map(|(d, v)| (*d, f(*d, *v))).collect(),
        }
    }

    /// Shifts every key by `offset` (for placing a block into a larger system).
    pub fn offset(&self, offset: usize) -> Self {
        Self {
            values: self.values.iter().map(|(d, v)| (d + offset, *v)).collect(),
        }
    }

    pub fn extend(&mut self, other: &DirichletSet) -> Result<(), DirichletError> {
        for (d, v) in other.iter() {
            self.insert(d, v)?;
        }
        Ok(())
    }

    pub fn mask(&self, size: usize) -> Vec<bool> {
        let mut m = vec![false; size];
        for d in self.values.keys() {
            if *d < size {
                m[*d] = true;
            }
        }
        m
    }

    fn check(&self, size: usize) -> Result<(), DirichletError> {
        match self.values.keys().next_back() {
            Some(&d) if d >= size => Err(DirichletError::OutOfRange { dof: d, size }),
            _ => Ok(()),
        }
    }

    /// Right-hand side of the eliminated system computed from the
    /// unconstrained matrix, for reuse with a cached constrained factorization.
    pub fn lift_rhs(&self, original: &SparseMatrix, rhs: &mut [f64]) -> Result<(), DirichletError> {
        self.check(rhs.len())?;
        let mask = self.mask(rhs.len());
        for (i, ri) in rhs.iter_mut().enumerate() {
            if mask[i] {
                continue;
            }
            for (j, v) in original.row(i) {
                if mask[j] {
                    *ri -= v * self.values[&j];
                }
            }
        }
        for (d, v) in self.iter() {
            rhs[d] = v;
        }
        Ok(())
    }
}

/// Replaces constrained rows by identity rows, moves known values to the
/// right-hand side and zeroes the constrained columns.
pub fn apply_dirichlet(
    matrix: &mut SparseMatrix,
    rhs: &mut [f64],
    constraints: &DirichletSet,
) -> Result<(), DirichletError> {
    let n = matrix.nrows();
    constraints.check(n)?;
    constraints.lift_rhs(matrix, rhs)?;
    let mask = constraints.mask(n);
    let (row_ptr, col_idx) = (matrix.row_ptr().to_vec(), matrix.col_idx().to_vec());
    let values = matrix.values_mut();
    for i in 0..n {
        for k in row_ptr[i]..row_ptr[i + 1] {
            let j = col_idx[k];
            if mask[i] {
                values[k] = if i == j { 1.0 } else { 0.0 };
            } else if mask[j] {
                values[k] = 0.0;
            }
        }
    }
    Ok(())
}
