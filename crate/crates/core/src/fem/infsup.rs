//! Discrete inf-sup constant of the P2–P1 divergence coupling.
//!
//! β_h² is the smallest nonzero eigenvalue of `B A⁻¹ Bᵀ q = β² M q`, where
//! `A` is the vector H¹-seminorm matrix on displacements vanishing on the
//! whole boundary, `B` the `(div v, q)` coupling and `M` the P1 mass matrix.
//! Constants lie in the kernel of `Bᵀ`, which removes exactly one eigenvalue;
//! the second-smallest eigenvalue is therefore the mean-zero constant.

use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use super::assembly::{assemble_bilinear, mass_kernel, stiffness_kernel, AssemblyError};
use super::quadrature::QuadratureRule;
use super::solve::{DirectSolver, SolveError};
use super::space::FunctionSpace;
use crate::mesh::{Entity, Mesh};

/// Largest vertex count accepted by the dense eigensolve.
pub const MAX_VERTICES: usize = 2000;

#[derive(Debug, Error, PartialEq)]
pub enum InfSupError {
    #[error("at least two meshes are required, got {0}")]
    TooFewMeshes(usize),
    #[error("mesh with {0} vertices exceeds the dense eigensolve cap")]
    TooLarge(usize),
    #[error("mesh has no interior displacement dofs")]
    Degenerate,
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

/// Inf-sup constant of one mesh.
pub fn inf_sup_constant(mesh: &Arc<Mesh>) -> Result<f64, InfSupError> {
    if mesh.vertex_count() > MAX_VERTICES {
        return Err(InfSupError::TooLarge(mesh.vertex_count()));
    }
    let vspace = FunctionSpace::p2_vector(mesh.clone());
    let pspace = FunctionSpace::p1_scalar(mesh.clone());
    let rule = QuadratureRule::default();

    let mut on_boundary = vec![false; vspace.dof_count()];
    for (e, _) in mesh.boundary_edges() {
        let [a, b] = mesh.edges()[e].vertices;
        for ent in [Entity::Vertex(a), Entity::Vertex(b), Entity::Edge(e)] {
            if let Some(node) = vspace.entity_node(ent) {
                on_boundary[2 * node] = true;
                on_boundary[2 * node + 1] = true;
            }
        }
    }
    let interior: Vec<usize> = (0..vspace.dof_count()).filter(|d| !on_boundary[*d]).collect();
    if interior.is_empty() || pspace.dof_count() < 2 {
        return Err(InfSupError::Degenerate);
    }
    let mut local = vec![usize::MAX; vspace.dof_count()];
    for (k, &d) in interior.iter().enumerate() {
        local[d] = k;
    }

    let a = assemble_bilinear(&rule, &vspace, &vspace, stiffness_kernel)?;
    let b = assemble_bilinear(&rule, &vspace, &pspace, |_, v, q| v.div() * q.phi())?;
    let m = assemble_bilinear(&rule, &pspace, &pspace, mass_kernel)?;

    // Interior block of A.
    let ni = interior.len();
    let mut trip = Vec::new();
    for (k, &d) in interior.iter().enumerate() {
        for (j, v) in a.row(d) {
            if local[j] != usize::MAX {
                trip.push((k, local[j], v));
            }
        }
    }
    let mut a_ii = super::sparse::SparseMatrix::from_triplets(ni, ni, &trip);
    a_ii.set_symmetric(true);
    let factor = DirectSolver::default().factor(&a_ii)?;

    // S = B A⁻¹ Bᵀ, column by column.
    let np = pspace.dof_count();
    let bt_cols: Vec<Vec<f64>> = {
        let mut cols = vec![vec![0.0; ni]; np];
        for q in 0..np {
            for (j, v) in b.row(q) {
                if local[j] != usize::MAX {
                    cols[q][local[j]] = v;
                }
            }
        }
        cols
    };
    let mut s = DMatrix::<f64>::zeros(np, np);
    for (q, col) in bt_cols.iter().enumerate() {
        let y = factor.solve(col)?;
        for (r, row) in bt_cols.iter().enumerate() {
            s[(r, q)] = row.iter().zip(&y).map(|(a, b)| a * b).sum();
        }
    }
    let s = (&s + s.transpose()) * 0.5;

    let m_dense = DMatrix::from_fn(np, np, |i, j| m.get(i, j));
    let l = m_dense.cholesky().ok_or(InfSupError::Degenerate)?.l();
    let l_inv = l.clone().try_inverse().ok_or(InfSupError::Degenerate)?;
    let c = &l_inv * s * l_inv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut eig: Vec<f64> = c.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(eig[1].max(0.0).sqrt())
}

/// Inf-sup constants for a sequence of meshes.
pub fn inf_sup_smoke(meshes: &[Arc<Mesh>]) -> Result<Vec<f64>, InfSupError> {
    if meshes.len() < 2 {
        return Err(InfSupError::TooFewMeshes(meshes.len()));
    }
    if let Some(m) = meshes.iter().find(|m| m.vertex_count() > MAX_VERTICES) {
        return Err(InfSupError::TooLarge(m.vertex_count()));
    }
    meshes.iter().map(inf_sup_constant).collect()
}
