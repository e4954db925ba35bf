//! Terminal-state gap between the `θ = 0` and `θ = 1` schemes as `Δt`
//! shrinks.

use std::sync::Arc;

use super::cases::ManufacturedCase;
use super::MmsError;
use crate::fem::assembly::{assemble_bilinear, mass_kernel};
use crate::fem::quadrature::QuadratureRule;
use crate::fem::space::FunctionSpace;
use crate::fem::sparse::SparseMatrix;
use crate::mesh::Mesh;
use crate::stepper::{Discretization, State, Stepper, StepperConfig, Theta, TimeGrid};

/// One time-step size of a θ-gap study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaGap {
    pub steps: usize,
    pub dt: f64,
    /// `‖u⁰ − u¹‖_{L²}` at `T`.
    pub gap_u: f64,
    /// `‖p⁰ − p¹‖_{L²}` at `T`.
    pub gap_p: f64,
    /// Whether `Δt ≤ c h²` held for the `θ = 0` run.
    pub guard_ok: bool,
}

impl ThetaGap {
    /// Combined gap `sqrt(gap_u² + gap_p²)`.
    pub fn gap(&self) -> f64 {
        self.gap_u.hypot(self.gap_p)
    }
}

fn mass_norm(m: &SparseMatrix, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    d.iter()
        .zip(m.matvec(&d))
        .map(|(x, y)| x * y)
        .sum::<f64>()
        .max(0.0)
        .sqrt()
}

fn terminal(
    case: &ManufacturedCase,
    mesh: &Arc<Mesh>,
    grid: TimeGrid,
    config: StepperConfig,
) -> Result<State, MmsError> {
    let disc = Discretization::new(mesh.clone(), case.params, case.model, case.boundary_data())?;
    let mut st = Stepper::new(disc, grid, config)?;
    Ok(st.run(|_, _, _| {})?.0)
}

/// Runs both schemes on the `n × n` mesh for every entry of `steps`.
/// `guard_c` is the constant of the `Δt ≤ c h²` restriction on `θ = 0`.
pub fn theta_gap_study(
    case: &ManufacturedCase,
    n: usize,
    steps: &[usize],
    guard_c: f64,
    config: StepperConfig,
) -> Result<Vec<ThetaGap>, MmsError> {
    let mesh = Arc::new(Mesh::unit_square(n).map_err(|e| MmsError::Setup(e.to_string()))?);
    let rule = QuadratureRule::default();
    let vspace = FunctionSpace::p2_vector(mesh.clone());
    let pspace = FunctionSpace::p1_scalar(mesh.clone());
    let setup = |e: crate::fem::AssemblyError| MmsError::Setup(e.to_string());
    let mu = assemble_bilinear(&rule, &vspace, &vspace, mass_kernel).map_err(setup)?;
    let mp = assemble_bilinear(&rule, &pspace, &pspace, mass_kernel).map_err(setup)?;
    let mut out = Vec::with_capacity(steps.len());
    for &k in steps {
        let explicit = TimeGrid::new(case.t_final, k, Theta::Zero)?;
        let implicit = TimeGrid::new(case.t_final, k, Theta::One)?;
        let guard_ok = explicit.stability_guard(mesh.h(), guard_c).unwrap_or(true);
        let s0 = terminal(case, &mesh, explicit, config)?;
        let s1 = terminal(case, &mesh, implicit, config)?;
        out.push(ThetaGap {
            steps: k,
            dt: explicit.dt,
            gap_u: mass_norm(&mu, &s0.u, &s1.u),
            gap_p: mass_norm(&mp, &s0.p, &s1.p),
            guard_ok,
        });
    }
    Ok(out)
}

/// Ratios `gap(Δt) / gap(Δt/2)` of consecutive entries.
pub fn halving_ratios(gaps: &[ThetaGap]) -> Vec<f64> {
    gaps.windows(2).map(|w| w[0].gap() / w[1].gap()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_problem_has_no_gap() {
        let gaps = theta_gap_study(&ManufacturedCase::zero(), 2, &[2, 4], 1.0, StepperConfig::default()).unwrap();
        assert!(gaps.iter().all(|g| g.gap() == 0.0 && g.guard_ok));
    }

    #[test]
    fn guard_flags_large_steps() {
        let gaps = theta_gap_study(&ManufacturedCase::zero(), 8, &[1], 1.0, StepperConfig::default()).unwrap();
        assert!(!gaps[0].guard_ok);
    }
}
