//! Field sampling: structured-grid snapshots, SVG heatmaps and the
//! total-variation oscillation indicator.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::Point2;

use crate::mesh::Mesh;

/// Bucketed triangle lookup.
#[derive(Debug, Clone)]
pub struct PointLocator {
    mesh: Arc<Mesh>,
    origin: Point2<f64>,
    cell: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl PointLocator {
    pub fn new(mesh: Arc<Mesh>) -> Self {
        let verts = mesh.vertices();
        let (mut lo, mut hi) = (verts[0], verts[0]);
        for v in verts {
            lo = Point2::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Point2::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        let side = ((mesh.triangle_count() as f64).sqrt().ceil() as usize).max(1);
        let dims = [side, side];
        let cell = [
            ((hi.x - lo.x) / side as f64).max(f64::MIN_POSITIVE),
            ((hi.y - lo.y) / side as f64).max(f64::MIN_POSITIVE),
        ];
        let mut buckets = vec![Vec::new(); side * side];
        let index = |v: f64, o: f64, c: f64, d: usize| (((v - o) / c).floor().max(0.0) as usize).min(d - 1);
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let p = tri.map(|i| verts[i]);
            let (x0, x1) = (
                p.iter().map(|q| q.x).fold(f64::MAX, f64::min),
                p.iter().map(|q| q.x).fold(f64::MIN, f64::max),
            );
            let (y0, y1) = (
                p.iter().map(|q| q.y).fold(f64::MAX, f64::min),
                p.iter().map(|q| q.y).fold(f64::MIN, f64::max),
            );
            for j in index(y0, lo.y, cell[1], side)..=index(y1, lo.y, cell[1], side) {
                for i in index(x0, lo.x, cell[0], side)..=index(x1, lo.x, cell[0], side) {
                    buckets[j * side + i].push(t);
                }
            }
        }
        Self {
            mesh,
            origin: lo,
            cell,
            dims,
            buckets,
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    /// Triangle and barycentric coordinates of `x`.
    pub fn locate(&self, x: &Point2<f64>) -> Option<(usize, [f64; 3])> {
        const TOL: f64 = 1e-10;
        let i = ((x.x - self.origin.x) / self.cell[0]).floor();
        let j = ((x.y - self.origin.y) / self.cell[1]).floor();
        if i < -1.0 || j < -1.0 || i > self.dims[0] as f64 || j > self.dims[1] as f64 {
            return None;
        }
        let i = (i.max(0.0) as usize).min(self.dims[0] - 1);
        let j = (j.max(0.0) as usize).min(self.dims[1] - 1);
        let verts = self.mesh.vertices();
        self.buckets[j * self.dims[0] + i].iter().find_map(|&t| {
            let [a, b, c] = self.mesh.triangles()[t].map(|k| verts[k]);
            let det = (b - a).perp(&(c - a));
            let l1 = (x - a).perp(&(c - a)) / det;
            let l2 = (b - a).perp(&(x - a)) / det;
            let l0 = 1.0 - l1 - l2;
            (l0 >= -TOL && l1 >= -TOL && l2 >= -TOL).then_some((t, [l0, l1, l2]))
        })
    }

    /// Value of a P1 field at `x`.
    pub fn eval_p1(&self, coeffs: &[f64], x: &Point2<f64>) -> Option<f64> {
        let (t, l) = self.locate(x)?;
        let tri = self.mesh.triangles()[t];
        Some((0..3).map(|k| l[k] * coeffs[tri[k]]).sum())
    }
}

/// P1 values at `count` equispaced points of the diagonal `x₁ = x₂`.
pub fn diagonal_samples(locator: &PointLocator, coeffs: &[f64], count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| {
            let s = if count > 1 { i as f64 / (count - 1) as f64 } else { 0.5 };
            locator.eval_p1(coeffs, &Point2::new(s, s)).unwrap_or(f64::NAN)
        })
        .collect()
}

/// Total variation of a sampled profile.
pub fn total_variation(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Number of diagonal samples in the oscillation indicator.
pub const TV_SAMPLES: usize = 200;

/// Oscillation indicator of a P1 pressure on the unit square.
pub fn tv_indicator(locator: &PointLocator, p: &[f64]) -> f64 {
    total_variation(&diagonal_samples(locator, p, TV_SAMPLES))
}

/// Values on the `(m+1) × (m+1)` grid of [0,1]², row-major in `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSnapshot {
    pub m: usize,
    pub values: Vec<f64>,
}

impl GridSnapshot {
    pub fn from_fn<F: Fn(&Point2<f64>) -> f64>(m: usize, f: F) -> Self {
        let mut values = Vec::with_capacity((m + 1) * (m + 1));
        for j in 0..=m {
            for i in 0..=m {
                values.push(f(&Point2::new(i as f64 / m as f64, j as f64 / m as f64)));
            }
        }
        Self { m, values }
    }

    pub fn from_p1(locator: &PointLocator, coeffs: &[f64], m: usize) -> Self {
        Self::from_fn(m, |x| locator.eval_p1(coeffs, x).unwrap_or(f64::NAN))
    }

    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,y,value")?;
        for j in 0..=self.m {
            for i in 0..=self.m {
                writeln!(
                    out,
                    "{:.6},{:.6},{:.12e}",
                    i as f64 / self.m as f64,
                    j as f64 / self.m as f64,
                    self.values[j * (self.m + 1) + i]
                )?;
            }
        }
        Ok(())
    }

    /// Heatmap with one rectangle per grid point and a colour bar legend.
    pub fn to_svg(&self, title: &str) -> String {
        let px = 400.0;
        let cell = px / (self.m + 1) as f64;
        let (lo, hi) = self.range();
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
            w = px + 120.0,
            h = px + 40.0
        );
        let _ = writeln!(
            s,
            r#"<text x="4" y="16" font-family="sans-serif" font-size="13">{}</text>"#,
            escape(title)
        );
        for j in 0..=self.m {
            for i in 0..=self.m {
                let v = self.values[j * (self.m + 1) + i];
                let (r, g, b) = colour((v - lo) / span);
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({r},{g},{b})"/>"#,
                    i as f64 * cell,
                    30.0 + (self.m - j) as f64 * cell,
                    cell + 0.3,
                    cell + 0.3
                );
            }
        }
        for k in 0..50 {
            let (r, g, b) = colour(1.0 - k as f64 / 49.0);
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.2}" width="20" height="{:.2}" fill="rgb({r},{g},{b})"/>"#,
                px + 20.0,
                30.0 + k as f64 * px / 50.0,
                px / 50.0 + 0.3
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="40" font-family="sans-serif" font-size="11">{hi:.4e}</text>"#,
            px + 44.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{lo:.4e}</text>"#,
            px + 44.0,
            px + 30.0
        );
        s.push_str("</svg>\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Blue–white–red ramp on `[0, 1]`.
fn colour(t: f64) -> (u8, u8, u8) {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.5 };
    let lerp = |a: f64, b: f64, s: f64| (a + (b - a) * s).round() as u8;
    if t < 0.5 {
        let s = t / 0.5;
        (lerp(33.0, 247.0, s), lerp(102.0, 247.0, s), lerp(172.0, 247.0, s))
    } else {
        let s = (t - 0.5) / 0.5;
        (lerp(247.0, 178.0, s), lerp(247.0, 24.0, s), lerp(247.0, 43.0, s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locator_agrees_with_brute_force() {
        let mesh = Arc::new(Mesh::unit_square(5).unwrap());
        let loc = PointLocator::new(mesh.clone());
        for k in 0..40 {
            let x = Point2::new((k as f64 * 0.137).fract(), (k as f64 * 0.291).fract());
            let (t, l) = loc.locate(&x).unwrap();
            let tri = mesh.triangles()[t];
            let back = mesh.vertices()[tri[0]].coords * l[0]
                + mesh.vertices()[tri[1]].coords * l[1]
                + mesh.vertices()[tri[2]].coords * l[2];
            assert!((back - x.coords).norm() < 1e-12);
        }
        assert!(loc.locate(&Point2::new(1.5, 0.5)).is_none());
    }

    #[test]
    fn linear_field_has_monotone_profile() {
        let mesh = Arc::new(Mesh::unit_square(4).unwrap());
        let loc = PointLocator::new(mesh.clone());
        let p: Vec<f64> = mesh.vertices().iter().map(|v| v.x + v.y).collect();
        let tv = tv_indicator(&loc, &p);
        assert!((tv - 2.0).abs() < 1e-12);
        let zero = vec![0.0; p.len()];
        assert_eq!(tv_indicator(&loc, &zero), 0.0);
    }

    #[test]
    fn svg_is_well_formed() {
        let g = GridSnapshot::from_fn(4, |x| x.x * x.y);
        let svg = g.to_svg("p <h>");
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("p &lt;h&gt;"));
        assert_eq!(g.range(), (0.0, 1.0));
    }
}
