//! Element loops for bilinear forms, load vectors and boundary integrals.
//!
//! Kernels are evaluated pointwise: the assembler supplies the quadrature
//! point context plus one trial and one test shape function, and multiplies
//! the returned integrand value by the quadrature weight.

use std::sync::Arc;

use nalgebra::{Point2, Vector2};
use thiserror::Error;

use super::basis::{Shape, TriangleGeometry};
use super::quadrature::{gauss_legendre, QuadratureRule};
use super::space::FunctionSpace;
use super::sparse::{SparseError, SparseMatrix};
use crate::mesh::{BoundaryTag, Mesh};

#[derive(Debug, Error, PartialEq)]
pub enum AssemblyError {
    #[error("trial and test spaces live on different meshes")]
    MeshMismatch,
    #[error("block at ({row}, {col}) with shape {rows}x{cols} does not fit the target matrix")]
    BlockOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Quadrature point seen by a kernel.
#[derive(Debug, Clone, Copy)]
pub struct PointContext {
    pub x: Point2<f64>,
    pub triangle: usize,
    pub qp: usize,
    pub bary: [f64; 3],
}

/// Shape functions of one space tabulated at every point of a rule on one
/// triangle.
#[derive(Debug, Clone)]
pub struct ElementValues {
    pub geometry: TriangleGeometry,
    pub points: Vec<Point2<f64>>,
    /// Physical weights (reference weight × 2·area).
    pub weights: Vec<f64>,
    /// `shapes[qp * local_dofs + i]`.
    pub shapes: Vec<Shape>,
    pub local_dofs: usize,
}

impl ElementValues {
    pub fn new(space: &FunctionSpace, t: usize, rule: &QuadratureRule) -> Self {
        let geometry = space.geometry(t);
        let local_dofs = space.local_dofs();
        let mut shapes = Vec::with_capacity(rule.len() * local_dofs);
        let mut buf = Vec::with_capacity(local_dofs);
        for p in rule.points() {
            space.eval_basis_into(&geometry, p, &mut buf);
            shapes.extend_from_slice(&buf);
        }
        Self {
            points: rule.points().iter().map(|p| geometry.point(p)).collect(),
            weights: rule.weights().iter().map(|w| w * 2.0 * geometry.area).collect(),
            geometry,
            shapes,
            local_dofs,
        }
    }

    pub fn at(&self, qp: usize) -> &[Shape] {
        &self.shapes[qp * self.local_dofs..(qp + 1) * self.local_dofs]
    }
}

fn same_mesh(a: &FunctionSpace, b: &FunctionSpace) -> bool {
    Arc::ptr_eq(a.mesh(), b.mesh())
}

/// Sparsity pattern coupling every dof of `trial` with every dof of `test`
/// on shared triangles.
pub fn coupling_pattern(trial: &FunctionSpace, test: &FunctionSpace) -> Vec<Vec<usize>> {
    let mut rows = vec![Vec::new(); test.dof_count()];
    for t in 0..test.mesh().triangle_count() {
        for &i in test.triangle_dofs(t) {
            rows[i].extend_from_slice(trial.triangle_dofs(t));
        }
    }
    rows
}

/// Pattern for a block system whose unknowns are the concatenation of
/// `spaces` (each with its offset); every block is coupled.
pub fn block_pattern(spaces: &[&FunctionSpace]) -> (usize, Vec<usize>, Vec<Vec<usize>>) {
    let mut offsets = Vec::with_capacity(spaces.len());
    let mut n = 0;
    for s in spaces {
        offsets.push(n);
        n += s.dof_count();
    }
    let mut rows = vec![Vec::new(); n];
    let mesh = spaces[0].mesh();
    let mut local = Vec::new();
    for t in 0..mesh.triangle_count() {
        local.clear();
        for (s, off) in spaces.iter().zip(&offsets) {
            local.extend(s.triangle_dofs(t).iter().map(|d| d + off));
        }
        for &i in &local {
            rows[i].extend_from_slice(&local);
        }
    }
    for r in rows.iter_mut() {
        r.sort_unstable();
        r.dedup();
    }
    (n, offsets, rows)
}

/// Assembles `∫ kernel(x, trial_j, test_i) dx` into a fresh matrix with rows
/// indexed by test dofs and columns by trial dofs.
pub fn assemble_bilinear<K>(
    rule: &QuadratureRule,
    trial: &FunctionSpace,
    test: &FunctionSpace,
    kernel: K,
) -> Result<SparseMatrix, AssemblyError>
where
    K: Fn(&PointContext, &Shape, &Shape) -> f64,
{
    if !same_mesh(trial, test) {
        return Err(AssemblyError::MeshMismatch);
    }
    let mut m = SparseMatrix::with_pattern(test.dof_count(), trial.dof_count(), coupling_pattern(trial, test));
    assemble_into(&mut m, 0, 0, rule, trial, test, kernel)?;
    Ok(m)
}

/// Adds a bilinear form into the block of `target` starting at
/// (`row_offset`, `col_offset`).
pub fn assemble_into<K>(
    target: &mut SparseMatrix,
    row_offset: usize,
    col_offset: usize,
    rule: &QuadratureRule,
    trial: &FunctionSpace,
    test: &FunctionSpace,
    kernel: K,
) -> Result<(), AssemblyError>
where
    K: Fn(&PointContext, &Shape, &Shape) -> f64,
{
    if !same_mesh(trial, test) {
        return Err(AssemblyError::MeshMismatch);
    }
    if row_offset + test.dof_count() > target.nrows() || col_offset + trial.dof_count() > target.ncols() {
        return Err(AssemblyError::BlockOutOfRange {
            row: row_offset,
            col: col_offset,
            rows: test.dof_count(),
            cols: trial.dof_count(),
        });
    }
    let (nt, ns) = (trial.local_dofs(), test.local_dofs());
    let mut local = vec![0.0; nt * ns];
    for t in 0..trial.mesh().triangle_count() {
        let tv = ElementValues::new(trial, t, rule);
        let sv = ElementValues::new(test, t, rule);
        local.iter_mut().for_each(|v| *v = 0.0);
        for qp in 0..rule.len() {
            let ctx = PointContext {
                x: tv.points[qp],
                triangle: t,
                qp,
                bary: rule.points()[qp],
            };
            let w = tv.weights[qp];
            let (trial_shapes, test_shapes) = (tv.at(qp), sv.at(qp));
            for (i, si) in test_shapes.iter().enumerate() {
                for (j, sj) in trial_shapes.iter().enumerate() {
                    local[i * nt + j] += w * kernel(&ctx, sj, si);
                }
            }
        }
        let (rows, cols) = (test.triangle_dofs(t), trial.triangle_dofs(t));
        for (i, &gi) in rows.iter().enumerate() {
            for (j, &gj) in cols.iter().enumerate() {
                let v = local[i * nt + j];
                if v != 0.0 {
                    target.add(row_offset + gi, col_offset + gj, v)?;
                }
            }
        }
    }
    Ok(())
}

/// Assembles `∫ f(x, test_i) dx`.
pub fn assemble_linear<F>(rule: &QuadratureRule, test: &FunctionSpace, f: F) -> Vec<f64>
where
    F: Fn(&PointContext, &Shape) -> f64,
{
    let mut out = vec![0.0; test.dof_count()];
    for t in 0..test.mesh().triangle_count() {
        let ev = ElementValues::new(test, t, rule);
        let dofs = test.triangle_dofs(t);
        for qp in 0..rule.len() {
            let ctx = PointContext {
                x: ev.points[qp],
                triangle: t,
                qp,
                bary: rule.points()[qp],
            };
            for (s, &d) in ev.at(qp).iter().zip(dofs) {
                out[d] += ev.weights[qp] * f(&ctx, s);
            }
        }
    }
    out
}

/// Point on a boundary edge handed to boundary kernels.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryPoint {
    pub x: Point2<f64>,
    pub normal: Vector2<f64>,
    pub tag: BoundaryTag,
    pub edge: usize,
}

/// Owning triangle, local edge index and outward normal of a boundary edge.
pub fn boundary_edge_frame(mesh: &Mesh, e: usize) -> (usize, usize, Vector2<f64>, f64) {
    let t = mesh.edges()[e].triangles[0];
    let k = mesh.triangle_edges()[t]
        .iter()
        .position(|&x| x == e)
        .expect("edge belongs to its triangle");
    let tri = mesh.triangles()[t];
    let (a, b) = (mesh.vertices()[tri[k]], mesh.vertices()[tri[(k + 1) % 3]]);
    let d = b - a;
    let len = d.norm();
    (t, k, Vector2::new(d.y, -d.x) / len, len)
}

/// Adds `∫_e g(point, test_i) ds` over every boundary edge accepted by
/// `select`, using `points`-point Gauss–Legendre on each edge.
pub fn assemble_boundary<S, G>(test: &FunctionSpace, points: usize, select: S, g: G, out: &mut [f64])
where
    S: Fn(BoundaryTag) -> bool,
    G: Fn(&BoundaryPoint, &Shape) -> f64,
{
    let mesh = test.mesh();
    let (nodes, weights) = gauss_legendre(points);
    let mut shapes = Vec::with_capacity(test.local_dofs());
    for (e, tag) in mesh.boundary_edges() {
        if !select(tag) {
            continue;
        }
        let (t, k, normal, len) = boundary_edge_frame(mesh, e);
        let geo = test.geometry(t);
        let dofs = test.triangle_dofs(t);
        for (s, w) in nodes.iter().zip(&weights) {
            let mut bary = [0.0; 3];
            bary[k] = 1.0 - s;
            bary[(k + 1) % 3] = *s;
            test.eval_basis_into(&geo, &bary, &mut shapes);
            let bp = BoundaryPoint {
                x: geo.point(&bary),
                normal,
                tag,
                edge: e,
            };
            for (sh, &d) in shapes.iter().zip(dofs) {
                if sh.value.x != 0.0 || sh.value.y != 0.0 {
                    out[d] += w * len * g(&bp, sh);
                }
            }
        }
    }
}

/// `∫ u·v` mass-type kernel.
pub fn mass_kernel(_: &PointContext, u: &Shape, v: &Shape) -> f64 {
    u.value.dot(&v.value)
}

/// `∫ ∇u : ∇v` stiffness kernel (scalar or vector).
pub fn stiffness_kernel(_: &PointContext, u: &Shape, v: &Shape) -> f64 {
    u.grad.dot(&v.grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spaces(n: usize) -> (FunctionSpace, FunctionSpace) {
        let mesh = Arc::new(Mesh::unit_square(n).unwrap());
        (FunctionSpace::p1_scalar(mesh.clone()), FunctionSpace::p2_vector(mesh))
    }

    #[test]
    fn p1_mass_sums_to_area() {
        let (p1, _) = spaces(4);
        let m = assemble_bilinear(&QuadratureRule::default(), &p1, &p1, mass_kernel).unwrap();
        let total: f64 = m.values().iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!(m.asymmetry() < 1e-15);
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let (p1, p2) = spaces(3);
        let rule = QuadratureRule::default();
        let k = assemble_bilinear(&rule, &p1, &p1, stiffness_kernel).unwrap();
        let ones = vec![1.0; p1.dof_count()];
        assert!(k.matvec(&ones).iter().all(|v| v.abs() < 1e-13));
        let kv = assemble_bilinear(&rule, &p2, &p2, stiffness_kernel).unwrap();
        let ones = vec![1.0; p2.dof_count()];
        assert!(kv.matvec(&ones).iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn bilinear_in_kernel() {
        let (p1, p2) = spaces(2);
        let rule = QuadratureRule::default();
        let a = assemble_bilinear(&rule, &p2, &p1, |_, u, q| u.div() * q.phi()).unwrap();
        let b = assemble_bilinear(&rule, &p2, &p1, |c, u, q| c.x.x * u.value.x * q.phi()).unwrap();
        let ab = assemble_bilinear(&rule, &p2, &p1, |c, u, q| {
            u.div() * q.phi() + c.x.x * u.value.x * q.phi()
        })
        .unwrap();
        let scale = ab.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for ((x, y), z) in a.values().iter().zip(b.values()).zip(ab.values()) {
            assert!((x + y - z).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn mesh_mismatch_rejected() {
        let (p1, _) = spaces(2);
        let (other, _) = spaces(2);
        let err = assemble_bilinear(&QuadratureRule::default(), &p1, &other, mass_kernel).unwrap_err();
        assert_eq!(err, AssemblyError::MeshMismatch);
    }

    #[test]
    fn boundary_integral_of_normal_component() {
        // ∮ x·n ds = ∫ div x = 2 on the unit square; test with P1 partition of unity.
        let (p1, _) = spaces(3);
        let mut out = vec![0.0; p1.dof_count()];
        assemble_boundary(
            &p1,
            3,
            |_| true,
            |bp, s| bp.x.coords.dot(&bp.normal) * s.phi(),
            &mut out,
        );
        assert!((out.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }
}
