//! Boundary-condition layout and the data callbacks of a problem instance.

use std::sync::Arc;

use nalgebra::{Point2, Vector2};

use crate::mesh::BoundaryTag;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcKind {
    Dirichlet,
    Neumann,
}

/// Condition kind for every (segment, field component) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryLayout {
    /// `displacement[segment][component]`.
    pub displacement: [[BcKind; 2]; 4],
    pub pressure: [BcKind; 4],
}

impl BoundaryLayout {
    pub fn all_dirichlet() -> Self {
        Self {
            displacement: [[BcKind::Dirichlet; 2]; 4],
            pressure: [BcKind::Dirichlet; 4],
        }
    }

    /// Normal displacement prescribed on every side, tangential traction
    /// given, pressure prescribed everywhere.
    pub fn normal_dirichlet() -> Self {
        use BcKind::*;
        Self {
            displacement: [
                [Dirichlet, Neumann], // Γ1, x₁ = 1
                [Neumann, Dirichlet], // Γ2, x₂ = 0
                [Dirichlet, Neumann], // Γ3, x₁ = 0
                [Neumann, Dirichlet], // Γ4, x₂ = 1
            ],
            pressure: [Dirichlet; 4],
        }
    }

    pub fn displacement_kind(&self, tag: BoundaryTag, component: usize) -> BcKind {
        self.displacement[tag.index()][component]
    }

    pub fn pressure_kind(&self, tag: BoundaryTag) -> BcKind {
        self.pressure[tag.index()]
    }

    /// Each displacement component must be prescribed on at least one
    /// segment; pure traction problems are not supported.
    pub fn is_supported(&self) -> bool {
        (0..2).all(|c| self.displacement.iter().any(|seg| seg[c] == BcKind::Dirichlet))
    }
}

/// Sources and boundary values of one problem. Time-dependent data are
/// evaluated at the new time level.
pub trait ProblemData: Send + Sync {
    /// Body force `f`.
    fn body_force(&self, x: &Point2<f64>, t: f64) -> Vector2<f64>;
    /// Fluid source `φ`.
    fn fluid_source(&self, x: &Point2<f64>, t: f64) -> f64;
    /// Total traction `σ(u)n − αpn`.
    fn traction(&self, x: &Point2<f64>, n: &Vector2<f64>, t: f64) -> Vector2<f64>;
    /// Outward Darcy flux `−(K/μ_f)(∇p − ρ_f g)·n`.
    fn flux(&self, x: &Point2<f64>, n: &Vector2<f64>, t: f64) -> f64;
    /// Displacement values used on Dirichlet components.
    fn displacement(&self, x: &Point2<f64>, t: f64) -> Vector2<f64>;
    /// Pressure values used on Dirichlet segments.
    fn pressure(&self, x: &Point2<f64>, t: f64) -> f64;

    fn initial_displacement(&self, x: &Point2<f64>) -> Vector2<f64> {
        self.displacement(x, 0.0)
    }

    fn initial_pressure(&self, x: &Point2<f64>) -> f64 {
        self.pressure(x, 0.0)
    }
}

/// All data identically zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroData;

impl ProblemData for ZeroData {
    fn body_force(&self, _: &Point2<f64>, _: f64) -> Vector2<f64> {
        Vector2::zeros()
    }
    fn fluid_source(&self, _: &Point2<f64>, _: f64) -> f64 {
        0.0
    }
    fn traction(&self, _: &Point2<f64>, _: &Vector2<f64>, _: f64) -> Vector2<f64> {
        Vector2::zeros()
    }
    fn flux(&self, _: &Point2<f64>, _: &Vector2<f64>, _: f64) -> f64 {
        0.0
    }
    fn displacement(&self, _: &Point2<f64>, _: f64) -> Vector2<f64> {
        Vector2::zeros()
    }
    fn pressure(&self, _: &Point2<f64>, _: f64) -> f64 {
        0.0
    }
}

#[derive(Clone)]
pub struct BoundaryData {
    pub layout: BoundaryLayout,
    pub data: Arc<dyn ProblemData>,
}

impl std::fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoundaryData")
            .field("layout", &self.layout)
            .finish_non_exhaustive()
    }
}

impl BoundaryData {
    pub fn new(layout: BoundaryLayout, data: Arc<dyn ProblemData>) -> Self {
        Self { layout, data }
    }

    pub fn zero() -> Self {
        Self::new(BoundaryLayout::all_dirichlet(), Arc::new(ZeroData))
    }
}
