//! Continuous Lagrange spaces on a [`Mesh`] and their degree-of-freedom maps.
//!
//! Global numbering: P1 scalar dofs are vertex indices. P2 nodes are the
//! vertices followed by the edges (`vertex_count + edge`). Vector spaces
//! interleave components, so node `k` owns dofs `2k` and `2k + 1`.

use std::sync::Arc;

use nalgebra::{Point2, Vector2};

use super::basis::{p1_gradients, p1_values, p2_gradients, p2_values, Shape, TriangleGeometry};
use crate::mesh::{Entity, Mesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    /// Continuous piecewise quadratics, two components.
    P2Vector,
    /// Continuous piecewise linears, one component.
    P1Scalar,
    /// Continuous piecewise linears, two components (equal-order baseline).
    P1Vector,
}

impl SpaceKind {
    pub fn components(self) -> usize {
        match self {
            SpaceKind::P1Scalar => 1,
            SpaceKind::P2Vector | SpaceKind::P1Vector => 2,
        }
    }

    pub fn nodes_per_triangle(self) -> usize {
        match self {
            SpaceKind::P2Vector => 6,
            SpaceKind::P1Scalar | SpaceKind::P1Vector => 3,
        }
    }

    pub fn local_dofs(self) -> usize {
        self.components() * self.nodes_per_triangle()
    }

    pub fn degree(self) -> usize {
        match self {
            SpaceKind::P2Vector => 2,
            SpaceKind::P1Scalar | SpaceKind::P1Vector => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FunctionSpace {
    kind: SpaceKind,
    mesh: Arc<Mesh>,
    node_count: usize,
    dof_count: usize,
    /// `local_dofs` global indices per triangle, flattened.
    dof_map: Vec<usize>,
}

impl FunctionSpace {
    pub fn new(mesh: Arc<Mesh>, kind: SpaceKind) -> Self {
        let nv = mesh.vertex_count();
        let node_count = match kind {
            SpaceKind::P2Vector => nv + mesh.edge_count(),
            _ => nv,
        };
        let comps = kind.components();
        let mut dof_map = Vec::with_capacity(mesh.triangle_count() * kind.local_dofs());
        for (tri, edges) in mesh.triangles().iter().zip(mesh.triangle_edges()) {
            let nodes: Vec<usize> = match kind {
                SpaceKind::P2Vector => {
                    vec![tri[0], tri[1], tri[2], nv + edges[0], nv + edges[1], nv + edges[2]]
                }
                _ => tri.to_vec(),
            };
            for node in nodes {
                for c in 0..comps {
                    dof_map.push(comps * node + c);
                }
            }
        }
        Self {
            kind,
            mesh,
            node_count,
            dof_count: comps * node_count,
            dof_map,
        }
    }

    pub fn p2_vector(mesh: Arc<Mesh>) -> Self {
        Self::new(mesh, SpaceKind::P2Vector)
    }

    pub fn p1_scalar(mesh: Arc<Mesh>) -> Self {
        Self::new(mesh, SpaceKind::P1Scalar)
    }

    pub fn p1_vector(mesh: Arc<Mesh>) -> Self {
        Self::new(mesh, SpaceKind::P1Vector)
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn dof_count(&self) -> usize {
        self.dof_count
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn components(&self) -> usize {
        self.kind.components()
    }

    pub fn local_dofs(&self) -> usize {
        self.kind.local_dofs()
    }

    pub fn triangle_dofs(&self, t: usize) -> &[usize] {
        let n = self.local_dofs();
        &self.dof_map[t * n..(t + 1) * n]
    }

    pub fn geometry(&self, t: usize) -> TriangleGeometry {
        let v = self.mesh.vertices();
        TriangleGeometry::new(self.mesh.triangles()[t].map(|i| v[i]))
    }

    /// Entity carrying global node `node`.
    pub fn node_entity(&self, node: usize) -> Entity {
        let nv = self.mesh.vertex_count();
        if node < nv {
            Entity::Vertex(node)
        } else {
            Entity::Edge(node - nv)
        }
    }

    /// Global node of an entity, if the space has one there.
    pub fn entity_node(&self, entity: Entity) -> Option<usize> {
        match (entity, self.kind) {
            (Entity::Vertex(v), _) => Some(v),
            (Entity::Edge(e), SpaceKind::P2Vector) => Some(self.mesh.vertex_count() + e),
            (Entity::Edge(_), _) => None,
        }
    }

    pub fn node_point(&self, node: usize) -> Point2<f64> {
        self.mesh.entity_point(self.node_entity(node))
    }

    /// Values and gradients of every local shape function of triangle `t` at
    /// barycentric point `bary`, in local dof order.
    pub fn eval_basis(&self, t: usize, bary: &[f64; 3]) -> Vec<Shape> {
        let geo = self.geometry(t);
        let mut out = Vec::with_capacity(self.local_dofs());
        self.eval_basis_into(&geo, bary, &mut out);
        out
    }

    pub fn eval_basis_into(&self, geo: &TriangleGeometry, bary: &[f64; 3], out: &mut Vec<Shape>) {
        out.clear();
        match self.kind {
            SpaceKind::P1Scalar => {
                let v = p1_values(bary);
                let g = p1_gradients(geo);
                out.extend((0..3).map(|k| Shape::scalar(v[k], g[k])));
            }
            SpaceKind::P1Vector => {
                let v = p1_values(bary);
                let g = p1_gradients(geo);
                for k in 0..3 {
                    for c in 0..2 {
                        out.push(Shape::vector(c, v[k], g[k]));
                    }
                }
            }
            SpaceKind::P2Vector => {
                let v = p2_values(bary);
                let g = p2_gradients(bary, geo);
                for k in 0..6 {
                    for c in 0..2 {
                        out.push(Shape::vector(c, v[k], g[k]));
                    }
                }
            }
        }
    }

    /// Nodal interpolant of a scalar function (P1 spaces) or a vector
    /// function (vector spaces; pass the component map).
    pub fn interpolate<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(&Point2<f64>) -> Vector2<f64>,
    {
        let comps = self.components();
        let mut out = vec![0.0; self.dof_count];
        for node in 0..self.node_count {
            let value = f(&self.node_point(node));
            for c in 0..comps {
                out[comps * node + c] = value[c];
            }
        }
        out
    }

    pub fn interpolate_scalar<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(&Point2<f64>) -> f64,
    {
        self.interpolate(|x| Vector2::new(f(x), 0.0))
    }

    /// Value and gradient of the finite-element field `coeffs` at a point of
    /// triangle `t`. Scalar fields use the first component / first row.
    pub fn evaluate(&self, coeffs: &[f64], t: usize, bary: &[f64; 3]) -> (Vector2<f64>, nalgebra::Matrix2<f64>) {
        let shapes = self.eval_basis(t, bary);
        let dofs = self.triangle_dofs(t);
        let mut value = Vector2::zeros();
        let mut grad = nalgebra::Matrix2::zeros();
        for (s, &d) in shapes.iter().zip(dofs) {
            value += s.value * coeffs[d];
            grad += s.grad * coeffs[d];
        }
        (value, grad)
    }

    /// Point evaluation anywhere in the domain (brute-force triangle search).
    pub fn evaluate_at(&self, coeffs: &[f64], x: &Point2<f64>) -> Option<Vector2<f64>> {
        let (t, bary) = self.mesh.locate_point(x)?;
        Some(self.evaluate(coeffs, t, &bary).0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::quadrature::QuadratureRule;
    use rand::{Rng, SeedableRng};

    fn mesh(n: usize) -> Arc<Mesh> {
        Arc::new(Mesh::unit_square(n).unwrap())
    }

    #[test]
    fn dof_counts() {
        let m = mesh(3);
        let p2 = FunctionSpace::p2_vector(m.clone());
        let p1 = FunctionSpace::p1_scalar(m.clone());
        assert_eq!(p2.dof_count(), 2 * (m.vertex_count() + m.edge_count()));
        assert_eq!(p1.dof_count(), m.vertex_count());
        for t in 0..m.triangle_count() {
            assert!(p2.triangle_dofs(t).iter().all(|&d| d < p2.dof_count()));
            assert!(p1.triangle_dofs(t).iter().all(|&d| d < p1.dof_count()));
        }
    }

    #[test]
    fn partition_of_unity_random_points() {
        let m = mesh(2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for kind in [SpaceKind::P1Scalar, SpaceKind::P2Vector] {
            let space = FunctionSpace::new(m.clone(), kind);
            for _ in 0..50 {
                let a: f64 = rng.gen();
                let b: f64 = rng.gen::<f64>() * (1.0 - a);
                let bary = [1.0 - a - b, a, b];
                let t = rng.gen_range(0..m.triangle_count());
                let shapes = space.eval_basis(t, &bary);
                let sum: Vector2<f64> = shapes.iter().map(|s| s.value).sum();
                let expected = if kind.components() == 2 {
                    Vector2::new(1.0, 1.0)
                } else {
                    Vector2::new(1.0, 0.0)
                };
                assert!((sum - expected).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn p2_interpolates_quadratics_exactly() {
        let m = mesh(3);
        let space = FunctionSpace::p2_vector(m.clone());
        let f = |x: &Point2<f64>| Vector2::new(x.x * x.x - 2.0 * x.x * x.y + 0.5, 3.0 * x.y * x.y + x.x);
        let coeffs = space.interpolate(f);
        let rule = QuadratureRule::seven_point();
        for t in 0..m.triangle_count() {
            let geo = space.geometry(t);
            for p in rule.points() {
                let (v, _) = space.evaluate(&coeffs, t, p);
                assert!((v - f(&geo.point(p))).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn p1_interpolates_linears_exactly() {
        let m = mesh(4);
        let space = FunctionSpace::p1_scalar(m.clone());
        let f = |x: &Point2<f64>| 2.0 * x.x - x.y + 0.25;
        let coeffs = space.interpolate_scalar(f);
        let x = Point2::new(0.37, 0.61);
        let v = space.evaluate_at(&coeffs, &x).unwrap();
        assert!((v.x - f(&x)).abs() < 1e-14);
    }
}
