//! Multiphysics solver against the naive two-field baseline on one mesh.

use std::sync::Arc;

use super::cases::ManufacturedCase;
use super::output::{tv_indicator, PointLocator};
use super::MmsError;
use crate::mesh::Mesh;
use crate::stepper::naive::{NaiveRecord, NaiveSolver};
use crate::stepper::{Discretization, StepRecord, Stepper, StepperConfig, TimeGrid};

#[derive(Debug, Clone)]
pub struct Comparison {
    pub mesh: Arc<Mesh>,
    /// Terminal pressure of the multiphysics solver (P1 coefficients).
    pub p_multiphysics: Vec<f64>,
    /// Terminal pressure of the two-field baseline.
    pub p_naive: Vec<f64>,
    /// Exact pressure interpolated at `T`.
    pub p_exact: Vec<f64>,
    pub tv_multiphysics: f64,
    pub tv_naive: f64,
    pub tv_exact: f64,
    pub records: Vec<StepRecord>,
    pub naive_records: Vec<NaiveRecord>,
}

impl Comparison {
    /// `tv_naive − tv_multiphysics`.
    pub fn margin(&self) -> f64 {
        self.tv_naive - self.tv_multiphysics
    }
}

/// Runs both discretizations of `case` on the `n × n` mesh.
pub fn oscillation_comparison(
    case: &ManufacturedCase,
    n: usize,
    grid: TimeGrid,
    config: StepperConfig,
) -> Result<Comparison, MmsError> {
    let mesh = Arc::new(Mesh::unit_square(n).map_err(|e| MmsError::Setup(e.to_string()))?);
    let disc = Discretization::new(mesh.clone(), case.params, case.model, case.boundary_data())?;
    let mut stepper = Stepper::new(disc, grid, config)?;
    let (last, records) = stepper.run(|_, _, _| {})?;
    let mut naive = NaiveSolver::new(
        mesh.clone(),
        case.params,
        case.model,
        case.boundary_data(),
        grid,
        config,
    )?;
    let mut state = naive.initialize();
    let mut naive_records = Vec::with_capacity(grid.steps);
    for k in 1..=grid.steps {
        let (s, r) = naive.advance(&state, k)?;
        state = s;
        naive_records.push(r);
    }
    let p_exact: Vec<f64> = mesh.vertices().iter().map(|v| case.p(v, grid.t_final)).collect();
    let loc = PointLocator::new(mesh.clone());
    Ok(Comparison {
        tv_multiphysics: tv_indicator(&loc, &last.p),
        tv_naive: tv_indicator(&loc, &state.p),
        tv_exact: tv_indicator(&loc, &p_exact),
        mesh,
        p_multiphysics: last.p,
        p_naive: state.p,
        p_exact,
        records,
        naive_records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stepper::Theta;

    #[test]
    fn zero_problem_has_zero_indicators() {
        let case = ManufacturedCase::zero();
        let grid = TimeGrid::new(0.1, 2, Theta::One).unwrap();
        let c = oscillation_comparison(&case, 3, grid, StepperConfig::default()).unwrap();
        assert_eq!(c.tv_multiphysics, 0.0);
        assert_eq!(c.tv_naive, 0.0);
    }
}
