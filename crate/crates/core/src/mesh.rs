//! Conforming triangulations of the unit square with tagged boundary segments.
//!
//! The four segments follow the usual numbering for the unit square:
//! `Gamma1` is the right side (x₁ = 1), `Gamma2` the bottom (x₂ = 0),
//! `Gamma3` the left side (x₁ = 0) and `Gamma4` the top (x₂ = 1).
//!
//! Meshes are immutable once built; [`Mesh::refine`] returns a new mesh.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use nalgebra::{Point2, Vector2};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("grid resolution must be at least 1")]
    EmptyGrid,
    #[error("triangle {0} has non-positive signed area")]
    InvertedTriangle(usize),
    #[error("edge ({0}, {1}) is shared by more than two triangles")]
    NonManifoldEdge(usize, usize),
    #[error("boundary edge ({0}, {1}) does not lie on a tagged segment")]
    UntaggedBoundary(usize, usize),
    #[error("no boundary segments requested")]
    NoTags,
    #[error("unknown boundary tag `{0}`")]
    UnknownTag(String),
    #[error("boundary segment {0} has no edges in this mesh")]
    TagNotPresent(BoundaryTag),
}

/// One of the four sides of the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoundaryTag {
    Gamma1,
    Gamma2,
    Gamma3,
    Gamma4,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 4] = [
        BoundaryTag::Gamma1,
        BoundaryTag::Gamma2,
        BoundaryTag::Gamma3,
        BoundaryTag::Gamma4,
    ];

    pub fn index(self) -> usize {
        match self {
            BoundaryTag::Gamma1 => 0,
            BoundaryTag::Gamma2 => 1,
            BoundaryTag::Gamma3 => 2,
            BoundaryTag::Gamma4 => 3,
        }
    }

    /// Outward unit normal of the segment on the unit square.
    pub fn outward_normal(self) -> Vector2<f64> {
        match self {
            BoundaryTag::Gamma1 => Vector2::new(1.0, 0.0),
            BoundaryTag::Gamma2 => Vector2::new(0.0, -1.0),
            BoundaryTag::Gamma3 => Vector2::new(-1.0, 0.0),
            BoundaryTag::Gamma4 => Vector2::new(0.0, 1.0),
        }
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gamma{}", self.index() + 1)
    }
}

impl FromStr for BoundaryTag {
    type Err = MeshError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let digit = lower
            .strip_prefix("gamma")
            .or_else(|| lower.strip_prefix("g"))
            .unwrap_or(&lower);
        match digit {
            "1" => Ok(BoundaryTag::Gamma1),
            "2" => Ok(BoundaryTag::Gamma2),
            "3" => Ok(BoundaryTag::Gamma3),
            "4" => Ok(BoundaryTag::Gamma4),
            _ => Err(MeshError::UnknownTag(s.to_string())),
        }
    }
}

/// An undirected mesh edge with its (one or two) incident triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub vertices: [usize; 2],
    pub triangles: [usize; 2],
    pub triangle_count: usize,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.triangle_count == 1
    }
}

/// Geometric entity carrying a degree of freedom: a vertex or an edge midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Entity {
    Vertex(usize),
    Edge(usize),
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point2<f64>>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    /// Local edge `k` of a triangle joins local vertices `k` and `(k + 1) % 3`.
    triangle_edges: Vec<[usize; 3]>,
    boundary_tags: Vec<Option<BoundaryTag>>,
    h: f64,
}

/// Tags an edge of the unit square by the side it lies on.
pub fn tag_unit_square_edge(a: &Point2<f64>, b: &Point2<f64>) -> Option<BoundaryTag> {
    const EPS: f64 = 1e-12;
    if (a.x - 1.0).abs() < EPS && (b.x - 1.0).abs() < EPS {
        Some(BoundaryTag::Gamma1)
    } else if a.y.abs() < EPS && b.y.abs() < EPS {
        Some(BoundaryTag::Gamma2)
    } else if a.x.abs() < EPS && b.x.abs() < EPS {
        Some(BoundaryTag::Gamma3)
    } else if (a.y - 1.0).abs() < EPS && (b.y - 1.0).abs() < EPS {
        Some(BoundaryTag::Gamma4)
    } else {
        None
    }
}

impl Mesh {
    /// Builds a mesh from raw parts, deriving edges and tagging boundary edges
    /// with `tagger`. Every invariant is checked.
    pub fn from_parts<F>(vertices: Vec<Point2<f64>>, triangles: Vec<[usize; 3]>, tagger: F) -> Result<Self, MeshError>
    where
        F: Fn(&Point2<f64>, &Point2<f64>) -> Option<BoundaryTag>,
    {
        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        let mut h: f64 = 0.0;

        for (t, tri) in triangles.iter().enumerate() {
            let [a, b, c] = tri.map(|i| vertices[i]);
            let signed = (b - a).perp(&(c - a));
            if signed <= 0.0 {
                return Err(MeshError::InvertedTriangle(t));
            }
            let mut local = [0usize; 3];
            for k in 0..3 {
                let (i, j) = (tri[k], tri[(k + 1) % 3]);
                let key = (i.min(j), i.max(j));
                h = h.max((vertices[i] - vertices[j]).norm());
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        vertices: [key.0, key.1],
                        triangles: [t, usize::MAX],
                        triangle_count: 0,
                    });
                    edges.len() - 1
                });
                let edge = &mut edges[e];
                if edge.triangle_count >= 2 {
                    return Err(MeshError::NonManifoldEdge(key.0, key.1));
                }
                edge.triangles[edge.triangle_count] = t;
                edge.triangle_count += 1;
                local[k] = e;
            }
            triangle_edges.push(local);
        }

        let mut boundary_tags = vec![None; edges.len()];
        for (e, edge) in edges.iter().enumerate() {
            if edge.is_boundary() {
                let [i, j] = edge.vertices;
                let tag = tagger(&vertices[i], &vertices[j]).ok_or(MeshError::UntaggedBoundary(i, j))?;
                boundary_tags[e] = Some(tag);
            }
        }

        Ok(Self {
            vertices,
            triangles,
            edges,
            triangle_edges,
            boundary_tags,
            h,
        })
    }

    /// Uniform `n × n` grid on [0,1]², each cell cut by the diagonal running
    /// from its lower-left to its upper-right corner.
    pub fn unit_square(n: usize) -> Result<Self, MeshError> {
        if n == 0 {
            return Err(MeshError::EmptyGrid);
        }
        let step = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push(Point2::new(i as f64 * step, j as f64 * step));
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (ll, lr, ur, ul) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                triangles.push([ll, lr, ur]);
                triangles.push([ll, ur, ul]);
            }
        }
        Self::from_parts(vertices, triangles, tag_unit_square_edge)
    }

    /// Uniform red refinement: every triangle is split into four similar
    /// children through its edge midpoints. Child boundary edges inherit the
    /// tag of the parent edge they lie on.
    pub fn refine(&self) -> Self {
        let nv = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend(self.edges.iter().map(|e| {
            let [a, b] = e.vertices;
            Point2::from((self.vertices[a].coords + self.vertices[b].coords) * 0.5)
        }));

        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for (tri, te) in self.triangles.iter().zip(&self.triangle_edges) {
            let [v0, v1, v2] = *tri;
            let (m01, m12, m20) = (nv + te[0], nv + te[1], nv + te[2]);
            triangles.push([v0, m01, m20]);
            triangles.push([m01, v1, m12]);
            triangles.push([m20, m12, v2]);
            triangles.push([m01, m12, m20]);
        }

        // child edge (parent vertex, midpoint) -> parent tag
        let mut inherited: HashMap<(usize, usize), BoundaryTag> = HashMap::new();
        for (e, edge) in self.edges.iter().enumerate() {
            if let Some(tag) = self.boundary_tags[e] {
                let m = nv + e;
                for &v in &edge.vertices {
                    inherited.insert((v.min(m), v.max(m)), tag);
                }
            }
        }
        let lookup: HashMap<[u64; 4], BoundaryTag> = inherited
            .iter()
            .map(|(&(a, b), &tag)| (point_pair_key(&vertices[a], &vertices[b]), tag))
            .collect();

        let mut refined = Self::from_parts(vertices, triangles, |a, b| lookup.get(&point_pair_key(a, b)).copied())
            .expect("red refinement of a valid mesh is valid");
        // Midpoints of congruent children halve every edge exactly.
        refined.h = self.h * 0.5;
        refined
    }

    pub fn vertices(&self) -> &[Point2<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn triangle_edges(&self) -> &[[usize; 3]] {
        &self.triangle_edges
    }

    pub fn boundary_tag(&self, edge: usize) -> Option<BoundaryTag> {
        self.boundary_tags[edge]
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        0.5 * (b - a).perp(&(c - a))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    pub fn edge_midpoint(&self, e: usize) -> Point2<f64> {
        let [a, b] = self.edges[e].vertices;
        Point2::from((self.vertices[a].coords + self.vertices[b].coords) * 0.5)
    }

    pub fn boundary_edges(&self) -> impl Iterator<Item = (usize, BoundaryTag)> + '_ {
        self.boundary_tags
            .iter()
            .enumerate()
            .filter_map(|(e, tag)| tag.map(|t| (e, t)))
    }

    /// Coordinates of a vertex or edge-midpoint entity.
    pub fn entity_point(&self, entity: Entity) -> Point2<f64> {
        match entity {
            Entity::Vertex(v) => self.vertices[v],
            Entity::Edge(e) => self.edge_midpoint(e),
        }
    }

    /// All vertices and edge midpoints lying on edges tagged with one of
    /// `tags`. Corners belong to every segment they touch.
    pub fn locate_boundary_dofs(&self, tags: &[BoundaryTag]) -> Result<BTreeSet<Entity>, MeshError> {
        if tags.is_empty() {
            return Err(MeshError::NoTags);
        }
        for &tag in tags {
            if !self.boundary_tags.contains(&Some(tag)) {
                return Err(MeshError::TagNotPresent(tag));
            }
        }
        let mut found = BTreeSet::new();
        for (e, tag) in self.boundary_edges() {
            if tags.contains(&tag) {
                let [a, b] = self.edges[e].vertices;
                found.insert(Entity::Vertex(a));
                found.insert(Entity::Vertex(b));
                found.insert(Entity::Edge(e));
            }
        }
        Ok(found)
    }

    /// Returns the triangle containing `x` and the barycentric coordinates of
    /// `x` in it, or `None` when `x` lies outside the mesh.
    pub fn locate_point(&self, x: &Point2<f64>) -> Option<(usize, [f64; 3])> {
        const TOL: f64 = 1e-12;
        self.triangles.iter().enumerate().find_map(|(t, tri)| {
            let [a, b, c] = tri.map(|i| self.vertices[i]);
            let det = (b - a).perp(&(c - a));
            let l1 = (x - a).perp(&(c - a)) / det;
            let l2 = (b - a).perp(&(x - a)) / det;
            let l0 = 1.0 - l1 - l2;
            (l0 >= -TOL && l1 >= -TOL && l2 >= -TOL).then_some((t, [l0, l1, l2]))
        })
    }

    /// Writes the mesh in a plain-text OFF-like layout:
    ///
    /// ```text
    /// OFF
    /// <vertex count> <triangle count> 0
    /// <x> <y> 0            (one line per vertex)
    /// 3 <i> <j> <k>        (one line per triangle, counterclockwise)
    /// ```
    ///
    /// Coordinates use Rust's shortest round-trip float formatting.
    pub fn write_off<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "OFF")?;
        writeln!(out, "{} {} 0", self.vertices.len(), self.triangles.len())?;
        for v in &self.vertices {
            writeln!(out, "{} {} 0", v.x, v.y)?;
        }
        for [i, j, k] in &self.triangles {
            writeln!(out, "3 {i} {j} {k}")?;
        }
        Ok(())
    }
}

fn point_pair_key(a: &Point2<f64>, b: &Point2<f64>) -> [u64; 4] {
    let ka = [a.x.to_bits(), a.y.to_bits()];
    let kb = [b.x.to_bits(), b.y.to_bits()];
    let (lo, hi) = if ka <= kb { (ka, kb) } else { (kb, ka) };
    [lo[0], lo[1], hi[0], hi[1]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_grid() {
        let m = Mesh::unit_square(1).unwrap();
        assert_eq!(m.vertex_count(), 4);
        assert_eq!(m.triangle_count(), 2);
        assert_eq!(m.boundary_edges().count(), 4);
        assert_eq!(m.h(), 2f64.sqrt());
    }

    #[test]
    fn rejects_zero_resolution() {
        assert_eq!(Mesh::unit_square(0).unwrap_err(), MeshError::EmptyGrid);
    }

    #[test]
    fn coarsest_table_mesh_size() {
        let m = Mesh::unit_square(8).unwrap();
        assert!((m.h() - 2f64.sqrt() / 8.0).abs() < 1e-15);
        assert!((m.h() - 0.176).abs() < 1e-3);
    }

    #[test]
    fn areas_partition_the_square() {
        for n in 1..=9 {
            let m = Mesh::unit_square(n).unwrap();
            assert!((m.total_area() - 1.0).abs() < 1e-14, "n = {n}");
        }
        assert_eq!(Mesh::unit_square(2).unwrap().total_area(), 1.0);
    }

    #[test]
    fn edge_sharing_and_tags() {
        let m = Mesh::unit_square(3).unwrap();
        for (e, edge) in m.edges().iter().enumerate() {
            match edge.triangle_count {
                1 => assert!(m.boundary_tag(e).is_some()),
                2 => assert!(m.boundary_tag(e).is_none()),
                c => panic!("edge {e} shared by {c} triangles"),
            }
        }
        let mut counts = [0; 4];
        for (_, tag) in m.boundary_edges() {
            counts[tag.index()] += 1;
        }
        assert_eq!(counts, [3, 3, 3, 3]);
    }

    #[test]
    fn refine_quadruples_and_halves() {
        let m = Mesh::unit_square(1).unwrap();
        let r = m.refine();
        assert_eq!(r.triangle_count(), 8);
        assert_eq!(r.vertex_count(), 9);
        assert_eq!(r.h(), m.h() / 2.0);
        assert_eq!(r.total_area(), 1.0);
        let coarse = Mesh::unit_square(8).unwrap();
        assert!((coarse.refine().h() - 0.088).abs() < 1e-3);
    }

    #[test]
    fn refined_boundary_tags_inherit() {
        let r = Mesh::unit_square(2).unwrap().refine();
        for (e, tag) in r.boundary_edges() {
            let mid = r.edge_midpoint(e);
            let expected = tag_unit_square_edge(&mid, &mid).unwrap();
            assert_eq!(tag, expected);
        }
    }

    #[test]
    fn boundary_entities_single_segment() {
        let m = Mesh::unit_square(1).unwrap();
        let set = m.locate_boundary_dofs(&[BoundaryTag::Gamma2]).unwrap();
        let vertices = set.iter().filter(|e| matches!(e, Entity::Vertex(_))).count();
        let mids = set.iter().filter(|e| matches!(e, Entity::Edge(_))).count();
        assert_eq!((vertices, mids), (2, 1));
        for e in &set {
            assert_eq!(m.entity_point(*e).y, 0.0);
        }
    }

    #[test]
    fn corner_belongs_to_both_segments() {
        let m = Mesh::unit_square(2).unwrap();
        let origin = Entity::Vertex(0);
        assert_eq!(m.entity_point(origin), Point2::new(0.0, 0.0));
        assert!(m
            .locate_boundary_dofs(&[BoundaryTag::Gamma2])
            .unwrap()
            .contains(&origin));
        assert!(m
            .locate_boundary_dofs(&[BoundaryTag::Gamma3])
            .unwrap()
            .contains(&origin));
    }

    #[test]
    fn tag_errors() {
        let m = Mesh::unit_square(1).unwrap();
        assert_eq!(m.locate_boundary_dofs(&[]).unwrap_err(), MeshError::NoTags);
        assert!(matches!("Gamma7".parse::<BoundaryTag>(), Err(MeshError::UnknownTag(_))));
        assert_eq!("gamma3".parse::<BoundaryTag>().unwrap(), BoundaryTag::Gamma3);
    }

    #[test]
    fn rejects_clockwise_triangle() {
        let v = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)];
        let err = Mesh::from_parts(v, vec![[0, 2, 1]], |_, _| Some(BoundaryTag::Gamma1)).unwrap_err();
        assert_eq!(err, MeshError::InvertedTriangle(0));
    }

    #[test]
    fn locate_point_in_grid() {
        let m = Mesh::unit_square(4).unwrap();
        let (t, bary) = m.locate_point(&Point2::new(0.3, 0.7)).unwrap();
        let tri = m.triangles()[t];
        let x: Vector2<f64> = (0..3).map(|k| m.vertices()[tri[k]].coords * bary[k]).sum();
        assert!((x - Vector2::new(0.3, 0.7)).norm() < 1e-14);
        assert!(m.locate_point(&Point2::new(1.5, 0.5)).is_none());
    }

    #[test]
    fn off_export_layout() {
        let m = Mesh::unit_square(1).unwrap();
        let mut buf = Vec::new();
        m.write_off(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "OFF");
        assert_eq!(lines[1], "4 2 0");
        assert_eq!(lines[2], "0 0 0");
        assert_eq!(lines[6], "3 0 1 3");
        assert_eq!(lines.len(), 8);
    }
}
