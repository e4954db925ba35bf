//! Manufactured-solution verification: exact fields and sources, error
//! norms, convergence studies, and the pressure oscillation comparison.

pub mod cases;
pub mod compare;
pub mod errors;
pub mod output;
pub mod theta;

use thiserror::Error;

use crate::stepper::StepError;

pub use cases::{source_discrepancy, CaseData, CaseName, ManufacturedCase, PrintedSources, SourceMode, Sources};
pub use compare::{oscillation_comparison, Comparison};
pub use errors::{
    convergence_study, rate, run_level, space_time_error, DtPolicy, ErrorAccumulator, ErrorReport, ErrorRow, Field,
    LevelResult, Norm, Rate, StudyConfig, Trajectory,
};
pub use output::{tv_indicator, GridSnapshot, PointLocator};
pub use theta::{halving_ratios, theta_gap_study, ThetaGap};

#[derive(Debug, Error)]
pub enum MmsError {
    #[error("unknown case `{0}` (expected test1, test2, zero or polynomial)")]
    UnknownCase(String),
    #[error("unknown source mode `{0}` (expected paper_printed or derived)")]
    UnknownSourceMode(String),
    #[error("stress divergence at ({x}, {y}), t = {t} failed the Richardson check (estimate {estimate:.3e})")]
    Derivative { x: f64, y: f64, t: f64, estimate: f64 },
    #[error("{0}")]
    MissingLevels(String),
    #[error("{0}")]
    Setup(String),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("level {level}: {source}")]
    Level { level: usize, source: StepError },
}

impl MmsError {
    pub fn is_solver_failure(&self) -> bool {
        match self {
            MmsError::Step(e) | MmsError::Level { source: e, .. } => e.is_solver_failure(),
            _ => false,
        }
    }
}
