//! Lagrange shape functions on triangles, written in barycentric coordinates.
//!
//! Local P2 node order: the three vertices, then the midpoints of local edges
//! (0,1), (1,2), (2,0).

use nalgebra::{Matrix2, Point2, Vector2};

/// Affine geometry of one triangle.
#[derive(Debug, Clone, Copy)]
pub struct TriangleGeometry {
    pub vertices: [Point2<f64>; 3],
    pub area: f64,
    /// Constant gradients of the barycentric coordinates.
    pub grad_lambda: [Vector2<f64>; 3],
}

impl TriangleGeometry {
    pub fn new(vertices: [Point2<f64>; 3]) -> Self {
        let [a, b, c] = vertices;
        let det = (b - a).perp(&(c - a));
        let area = 0.5 * det;
        // ∇λ_i is the inward edge normal opposite vertex i scaled by 1/(2·area).
        let rot = |v: Vector2<f64>| Vector2::new(-v.y, v.x) / det;
        let g1 = rot(a - c);
        let g2 = rot(b - a);
        let g0 = -(g1 + g2);
        Self {
            vertices,
            area,
            grad_lambda: [g0, g1, g2],
        }
    }

    pub fn point(&self, bary: &[f64; 3]) -> Point2<f64> {
        Point2::from(
            self.vertices[0].coords * bary[0] + self.vertices[1].coords * bary[1] + self.vertices[2].coords * bary[2],
        )
    }
}

pub fn p1_values(l: &[f64; 3]) -> [f64; 3] {
    *l
}

pub fn p1_gradients(geo: &TriangleGeometry) -> [Vector2<f64>; 3] {
    geo.grad_lambda
}

pub fn p2_values(l: &[f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

pub fn p2_gradients(l: &[f64; 3], geo: &TriangleGeometry) -> [Vector2<f64>; 6] {
    let g = &geo.grad_lambda;
    [
        g[0] * (4.0 * l[0] - 1.0),
        g[1] * (4.0 * l[1] - 1.0),
        g[2] * (4.0 * l[2] - 1.0),
        (g[0] * l[1] + g[1] * l[0]) * 4.0,
        (g[1] * l[2] + g[2] * l[1]) * 4.0,
        (g[2] * l[0] + g[0] * l[2]) * 4.0,
    ]
}

/// One local shape function evaluated at a point.
///
/// Scalar functions occupy the first component: `value = (φ, 0)` and the
/// first row of `grad` holds ∇φ. For vector functions `grad[(i, j)] = ∂v_i/∂x_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub value: Vector2<f64>,
    pub grad: Matrix2<f64>,
}

impl Shape {
    pub fn scalar(phi: f64, grad: Vector2<f64>) -> Self {
        Self {
            value: Vector2::new(phi, 0.0),
            grad: Matrix2::new(grad.x, grad.y, 0.0, 0.0),
        }
    }

    pub fn vector(component: usize, phi: f64, grad: Vector2<f64>) -> Self {
        let mut value = Vector2::zeros();
        let mut g = Matrix2::zeros();
        value[component] = phi;
        g[(component, 0)] = grad.x;
        g[(component, 1)] = grad.y;
        Self { value, grad: g }
    }

    /// Value of a scalar shape function.
    pub fn phi(&self) -> f64 {
        self.value.x
    }

    /// Gradient of a scalar shape function.
    pub fn grad_phi(&self) -> Vector2<f64> {
        Vector2::new(self.grad[(0, 0)], self.grad[(0, 1)])
    }

    pub fn div(&self) -> f64 {
        self.grad.trace()
    }

    pub fn strain(&self) -> Matrix2<f64> {
        (self.grad + self.grad.transpose()) * 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> TriangleGeometry {
        TriangleGeometry::new([Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)])
    }

    #[test]
    fn p1_nodal_kronecker() {
        let verts = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for (i, l) in verts.iter().enumerate() {
            let v = p1_values(l);
            for (j, vj) in v.iter().enumerate() {
                assert_eq!(*vj, if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn p2_nodal_kronecker() {
        let nodes = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.5, 0.5, 0.0],
            [0.0, 0.5, 0.5],
            [0.5, 0.0, 0.5],
        ];
        for (i, l) in nodes.iter().enumerate() {
            let v = p2_values(l);
            for (j, vj) in v.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((vj - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn partition_of_unity_at_barycenter() {
        let c = [1.0 / 3.0; 3];
        assert!((p1_values(&c).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((p2_values(&c).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let geo = reference();
        let gsum: Vector2<f64> = p2_gradients(&c, &geo).iter().sum();
        assert!(gsum.norm() < 1e-14);
    }

    #[test]
    fn p2_gradient_matches_central_difference() {
        let geo = TriangleGeometry::new([Point2::new(0.1, 0.2), Point2::new(0.9, 0.35), Point2::new(0.3, 0.8)]);
        let l = [1.0 / 3.0; 3];
        let x = geo.point(&l);
        let bary_of = |p: Point2<f64>| {
            let [a, b, c] = geo.vertices;
            let det = (b - a).perp(&(c - a));
            let l1 = (p - a).perp(&(c - a)) / det;
            let l2 = (b - a).perp(&(p - a)) / det;
            [1.0 - l1 - l2, l1, l2]
        };
        let s = 1e-6;
        let grads = p2_gradients(&l, &geo);
        for k in 0..6 {
            for d in 0..2 {
                let mut e = Vector2::zeros();
                e[d] = s;
                let fp = p2_values(&bary_of(x + e))[k];
                let fm = p2_values(&bary_of(x - e))[k];
                let fd = (fp - fm) / (2.0 * s);
                assert!((fd - grads[k][d]).abs() < 1e-8, "k={k} d={d}");
            }
        }
    }

    #[test]
    fn geometry_of_reference_triangle() {
        let geo = reference();
        assert_eq!(geo.area, 0.5);
        assert_eq!(geo.grad_lambda[1], Vector2::new(1.0, 0.0));
        assert_eq!(geo.grad_lambda[2], Vector2::new(0.0, 1.0));
        assert_eq!(geo.grad_lambda[0], Vector2::new(-1.0, -1.0));
    }
}
