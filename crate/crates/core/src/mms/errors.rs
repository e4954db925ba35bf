//! Space-time error norms, the convergence study and its report.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;
use std::time::Instant;

use log::info;

use super::cases::ManufacturedCase;
use super::MmsError;
use crate::fem::assembly::ElementValues;
use crate::fem::quadrature::QuadratureRule;
use crate::mesh::Mesh;
use crate::stepper::{Discretization, NewtonConfig, State, StepRecord, Stepper, StepperConfig, Theta, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L2L2,
    L2H1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    U,
    P,
}

/// Squared spatial error norms at one time level.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpatialErrors {
    pub u_l2: f64,
    pub u_h1_semi: f64,
    pub p_l2: f64,
    pub p_h1_semi: f64,
    /// `‖∇(I_h p − p_h)‖² + ‖I_h p − p_h‖²` with `I_h` the P1 interpolant.
    pub p_interp_h1: f64,
    /// `‖ε(u − u_h)‖²`.
    pub strain: f64,
    /// `κ₂‖η − η_h‖² + κ₃‖ξ − ξ_h‖²`.
    pub pseudo: f64,
}

impl SpatialErrors {
    fn axpy(&mut self, a: f64, o: &SpatialErrors) {
        self.u_l2 += a * o.u_l2;
        self.u_h1_semi += a * o.u_h1_semi;
        self.p_l2 += a * o.p_l2;
        self.p_h1_semi += a * o.p_h1_semi;
        self.p_interp_h1 += a * o.p_interp_h1;
        self.strain += a * o.strain;
        self.pseudo += a * o.pseudo;
    }
}

/// Running `Δt Σₙ ‖e(tₙ)‖²` sums over the levels `n = 1..N`, plus the
/// exact-solution energy used to bound the discrete one.
pub struct ErrorAccumulator {
    vcache: Vec<ElementValues>,
    pcache: Vec<ElementValues>,
    dt: f64,
    sums: SpatialErrors,
    levels: usize,
    /// `Δt Σ (K/μ_f)‖∇p(tₙ)‖²`.
    exact_dissipation: f64,
    exact_energy_max: f64,
    /// `Δt Σ (K/μ_f)‖∇(p − p_h)‖²`.
    error_dissipation: f64,
    error_energy_max: f64,
}

impl fmt::Debug for ErrorAccumulator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ErrorAccumulator")
            .field("levels", &self.levels)
            .field("sums", &self.sums)
            .finish_non_exhaustive()
    }
}

impl ErrorAccumulator {
    pub fn new(disc: &Discretization, rule: &QuadratureRule, dt: f64) -> Self {
        let nt = disc.mesh.triangle_count();
        Self {
            vcache: (0..nt).map(|t| ElementValues::new(&disc.vspace, t, rule)).collect(),
            pcache: (0..nt).map(|t| ElementValues::new(&disc.pspace, t, rule)).collect(),
            dt,
            sums: SpatialErrors::default(),
            levels: 0,
            exact_dissipation: 0.0,
            exact_energy_max: 0.0,
            error_dissipation: 0.0,
            error_energy_max: 0.0,
        }
    }

    /// Squared spatial errors of `state` against the exact fields at
    /// `state.time`; also returns `(κ₂‖η‖² + κ₃‖ξ‖², ‖∇p‖²)` of the exact
    /// solution.
    pub fn spatial(&self, disc: &Discretization, case: &ManufacturedCase, state: &State) -> (SpatialErrors, f64, f64) {
        let t = state.time;
        let pr = &disc.params;
        let k = &disc.kappas;
        let mut e = SpatialErrors::default();
        let mut exact_pseudo = 0.0;
        let mut exact_grad_p = 0.0;
        for tri in 0..self.vcache.len() {
            let (ev, ep) = (&self.vcache[tri], &self.pcache[tri]);
            let (vd, pd) = (disc.vspace.triangle_dofs(tri), disc.pspace.triangle_dofs(tri));
            let nodes: Vec<f64> = pd.iter().map(|&v| case.p(&disc.mesh.vertices()[v], t)).collect();
            for qp in 0..ev.points.len() {
                let x = &ev.points[qp];
                let w = ev.weights[qp];
                let (mut uh, mut gh) = (nalgebra::Vector2::zeros(), nalgebra::Matrix2::zeros());
                for (s, &d) in ev.at(qp).iter().zip(vd) {
                    uh += s.value * state.u[d];
                    gh += s.grad * state.u[d];
                }
                let (mut ph, mut gph, mut xih, mut etah) = (0.0, nalgebra::Vector2::zeros(), 0.0, 0.0);
                let (mut pi, mut gpi) = (0.0, nalgebra::Vector2::zeros());
                for ((s, &d), &nv) in ep.at(qp).iter().zip(pd).zip(&nodes) {
                    ph += s.phi() * state.p[d];
                    gph += s.grad_phi() * state.p[d];
                    xih += s.phi() * state.xi[d];
                    etah += s.phi() * state.eta[d];
                    pi += s.phi() * nv;
                    gpi += s.grad_phi() * nv;
                }
                let g = case.grad_u(x, t);
                let eg = g - gh;
                let p = case.p(x, t);
                let gp = case.grad_p(x, t);
                let q = g.trace();
                let xi = pr.alpha * p - pr.lambda * q;
                let eta = pr.c0 * p + pr.alpha * q;
                e.u_l2 += w * (case.u(x, t) - uh).norm_squared();
                e.u_h1_semi += w * eg.norm_squared();
                e.p_l2 += w * (p - ph).powi(2);
                e.p_h1_semi += w * (gp - gph).norm_squared();
                e.p_interp_h1 += w * ((pi - ph).powi(2) + (gpi - gph).norm_squared());
                e.strain += w * ((eg + eg.transpose()) * 0.5).norm_squared();
                e.pseudo += w * (k.kappa2 * (eta - etah).powi(2) + k.kappa3 * (xi - xih).powi(2));
                exact_pseudo += w * (k.kappa2 * eta * eta + k.kappa3 * xi * xi);
                exact_grad_p += w * gp.norm_squared();
            }
        }
        (e, exact_pseudo, exact_grad_p)
    }

    /// Adds the level `state` (any `n ≥ 1`).
    pub fn push(&mut self, disc: &Discretization, case: &ManufacturedCase, state: &State) {
        let (e, exact_pseudo, exact_grad_p) = self.spatial(disc, case, state);
        let kf = disc.params.k / disc.params.mu_f;
        self.sums.axpy(self.dt, &e);
        self.levels += 1;
        self.exact_dissipation += self.dt * kf * exact_grad_p;
        self.exact_energy_max = self.exact_energy_max.max(exact_pseudo + self.exact_dissipation);
        self.error_dissipation += self.dt * kf * e.p_h1_semi;
        self.error_energy_max = self.error_energy_max.max(e.strain + e.pseudo + self.error_dissipation);
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn norm(&self, norm: Norm, field: Field) -> f64 {
        let s = &self.sums;
        match (norm, field) {
            (Norm::L2L2, Field::U) => s.u_l2.sqrt(),
            (Norm::L2H1, Field::U) => (s.u_l2 + s.u_h1_semi).sqrt(),
            (Norm::L2L2, Field::P) => s.p_l2.sqrt(),
            (Norm::L2H1, Field::P) => (s.p_l2 + s.p_h1_semi).sqrt(),
        }
    }

    /// `L²(0,T;H¹)` distance between `p_h` and the P1 interpolant of `p`.
    pub fn superclose_p(&self) -> f64 {
        self.sums.p_interp_h1.sqrt()
    }

    /// Largest `κ₂‖η‖² + κ₃‖ξ‖² + Δt Σ (K/μ_f)‖∇p‖²` of the exact solution.
    pub fn exact_energy_max(&self) -> f64 {
        self.exact_energy_max
    }

    /// Largest `‖ε(e_u)‖² + κ₂‖e_η‖² + κ₃‖e_ξ‖² + Δt Σ (K/μ_f)‖∇e_p‖²`.
    pub fn error_energy_max(&self) -> f64 {
        self.error_energy_max
    }
}

/// Coefficients at every time level, the initial one included.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<State>,
}

/// `sqrt(Δt Σₙ ‖e(tₙ)‖²_B)` over the levels `n = 1..N` of `trajectory`.
pub fn space_time_error(
    disc: &Discretization,
    case: &ManufacturedCase,
    trajectory: &Trajectory,
    norm: Norm,
    field: Field,
    rule: &QuadratureRule,
) -> Result<f64, MmsError> {
    if trajectory.states.len() < 2 {
        return Err(MmsError::MissingLevels(
            "trajectory needs at least two time levels".into(),
        ));
    }
    for (n, s) in trajectory.states.iter().enumerate() {
        let expected = n as f64 * trajectory.dt;
        if (s.time - expected).abs() > 1e-9 * expected.max(1.0) {
            return Err(MmsError::MissingLevels(format!(
                "level {n} has time {} instead of {expected}",
                s.time
            )));
        }
    }
    let mut acc = ErrorAccumulator::new(disc, rule, trajectory.dt);
    for s in &trajectory.states[1..] {
        acc.push(disc, case, s);
    }
    Ok(acc.norm(norm, field))
}

/// Time step per refinement level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtPolicy {
    /// The same number of steps on every level.
    Fixed { steps: usize },
    /// `Δt ≤ c·h²`, rounded down to divide `T`.
    ScaledH2 { c: f64 },
}

impl DtPolicy {
    pub fn grid(&self, t_final: f64, h: f64, theta: Theta) -> Result<TimeGrid, MmsError> {
        let steps = match *self {
            DtPolicy::Fixed { steps } => steps,
            DtPolicy::ScaledH2 { c } => {
                if !(c > 0.0) {
                    return Err(MmsError::Setup("dt scaling constant must be positive".into()));
                }
                (t_final / (c * h * h)).ceil().max(1.0) as usize
            }
        };
        Ok(TimeGrid::new(t_final, steps, theta)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    /// Cells per side of the coarsest mesh.
    pub n0: usize,
    pub levels: usize,
    pub theta: Theta,
    pub dt: DtPolicy,
    pub stepper: StepperConfig,
    /// Degree of the error quadrature (at least 5).
    pub rule_degree: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            n0: 8,
            levels: 4,
            theta: Theta::One,
            dt: DtPolicy::Fixed { steps: 512 },
            // Kept Jacobians: a study repeats thousands of nearly identical
            // Newton solves.
            stepper: StepperConfig {
                newton: NewtonConfig {
                    lagged: true,
                    ..Default::default()
                },
                ..Default::default()
            },
            rule_degree: 5,
        }
    }
}

/// Outcome of one mesh level.
#[derive(Debug, Clone)]
pub struct LevelResult {
    pub mesh: Arc<Mesh>,
    pub n: usize,
    pub h: f64,
    pub grid: TimeGrid,
    pub err_u_l2l2: f64,
    pub err_u_l2h1: f64,
    pub err_p_l2l2: f64,
    pub err_p_l2h1: f64,
    pub superclose_p: f64,
    pub records: Vec<StepRecord>,
    /// Discrete energy at `t = 0`.
    pub initial_energy: f64,
    pub exact_energy_max: f64,
    pub error_energy_max: f64,
    pub final_state: State,
    pub seconds: f64,
}

impl LevelResult {
    /// Bound on the discrete energy: twice the larger of its initial value
    /// and the exact-solution energy.
    pub fn energy_bound(&self) -> f64 {
        2.0 * self.initial_energy.max(self.exact_energy_max)
    }

    pub fn energy_bounded(&self) -> bool {
        crate::stepper::energy_bounded(&self.records, self.energy_bound())
    }

    pub fn max_newton_iterations(&self) -> usize {
        self.records
            .iter()
            .flat_map(|r| r.newton_logs.iter().map(|l| l.iterations()))
            .max()
            .unwrap_or(0)
    }

    pub fn max_coupled_iterations(&self) -> usize {
        self.records.iter().map(|r| r.coupled_iterations).max().unwrap_or(0)
    }

    pub fn row(&self) -> ErrorRow {
        ErrorRow {
            h: self.h,
            n: self.n,
            steps: self.grid.steps,
            err_u_l2l2: self.err_u_l2l2,
            err_u_l2h1: self.err_u_l2h1,
            err_p_l2l2: self.err_p_l2l2,
            err_p_l2h1: self.err_p_l2h1,
            superclose_p: self.superclose_p,
        }
    }
}

/// Runs one mesh level of a manufactured case.
pub fn run_level(
    case: &ManufacturedCase,
    mesh: Arc<Mesh>,
    grid: TimeGrid,
    stepper: StepperConfig,
    rule: &QuadratureRule,
) -> Result<LevelResult, MmsError> {
    let start = Instant::now();
    let n = (1.0 / mesh.h() * std::f64::consts::SQRT_2).round() as usize;
    let h = mesh.h();
    let disc = Discretization::new(mesh.clone(), case.params, case.model, case.boundary_data())?;
    let mut acc = ErrorAccumulator::new(&disc, rule, grid.dt);
    let mut st = Stepper::new(disc, grid, stepper)?;
    let mut initial_energy = 0.0;
    let (final_state, records) = st.run(|disc, state, rec| match rec {
        None => {
            let (_, eta, xi) = disc.energy_terms(&state.u, &state.xi, &state.eta);
            initial_energy = eta + xi;
        }
        Some(_) => acc.push(disc, case, state),
    })?;
    Ok(LevelResult {
        mesh,
        n,
        h,
        grid,
        err_u_l2l2: acc.norm(Norm::L2L2, Field::U),
        err_u_l2h1: acc.norm(Norm::L2H1, Field::U),
        err_p_l2l2: acc.norm(Norm::L2L2, Field::P),
        err_p_l2h1: acc.norm(Norm::L2H1, Field::P),
        superclose_p: acc.superclose_p(),
        records,
        initial_energy,
        exact_energy_max: acc.exact_energy_max(),
        error_energy_max: acc.error_energy_max(),
        final_state,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs the refinement sequence `n0, 2·n0, …`; `on_level` sees each level
/// as soon as it finishes.
pub fn convergence_study<F>(
    case: &ManufacturedCase,
    config: &StudyConfig,
    mut on_level: F,
) -> Result<ErrorReport, MmsError>
where
    F: FnMut(&LevelResult),
{
    if config.levels == 0 {
        return Err(MmsError::Setup("levels must be at least 1".into()));
    }
    if config.rule_degree < 5 {
        return Err(MmsError::Setup("error quadrature degree must be at least 5".into()));
    }
    let rule = QuadratureRule::of_degree(config.rule_degree);
    let mut rows = Vec::with_capacity(config.levels);
    let mut mesh = Arc::new(Mesh::unit_square(config.n0).map_err(|e| MmsError::Setup(e.to_string()))?);
    for level in 0..config.levels {
        if level > 0 {
            mesh = Arc::new(mesh.refine());
        }
        let grid = config.dt.grid(case.t_final, mesh.h(), config.theta)?;
        let result = run_level(case, mesh.clone(), grid, config.stepper, &rule).map_err(|e| match e {
            MmsError::Step(source) => MmsError::Level { level, source },
            other => other,
        })?;
        info!(
            "level {level}: h={:.4} steps={} err_u={:.3e} err_p={:.3e} ({:.1}s)",
            result.h, grid.steps, result.err_u_l2h1, result.err_p_l2h1, result.seconds
        );
        rows.push(result.row());
        on_level(&result);
    }
    Ok(ErrorReport {
        case: case.name.to_string(),
        rows,
    })
}

/// One line of the report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub h: f64,
    pub n: usize,
    pub steps: usize,
    pub err_u_l2l2: f64,
    pub err_u_l2h1: f64,
    pub err_p_l2l2: f64,
    pub err_p_l2h1: f64,
    pub superclose_p: f64,
}

impl ErrorRow {
    pub fn error(&self, norm: Norm, field: Field) -> f64 {
        match (norm, field) {
            (Norm::L2L2, Field::U) => self.err_u_l2l2,
            (Norm::L2H1, Field::U) => self.err_u_l2h1,
            (Norm::L2L2, Field::P) => self.err_p_l2l2,
            (Norm::L2H1, Field::P) => self.err_p_l2h1,
        }
    }
}

/// Errors below this are treated as round-off.
pub const EXACT_FLOOR: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rate {
    /// Both errors at round-off level.
    Exact,
    Value(f64),
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rate::Exact => f.write_str("exact"),
            Rate::Value(v) => write!(f, "{v:.4}"),
        }
    }
}

/// `log₂(e_coarse / e_fine)` for an exact halving of `h`.
pub fn rate(coarse: f64, fine: f64) -> Rate {
    if coarse < EXACT_FLOOR && fine < EXACT_FLOOR {
        Rate::Exact
    } else {
        Rate::Value((coarse / fine).log2())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub case: String,
    pub rows: Vec<ErrorRow>,
}

pub const REPORT_HEADER: &str = "h,err_u_L2L2,err_u_L2H1,rate_u,err_p_L2L2,err_p_L2H1,rate_p";

impl ErrorReport {
    /// Rates between consecutive rows (one fewer than the rows).
    pub fn rates(&self, norm: Norm, field: Field) -> Vec<Rate> {
        self.rows
            .windows(2)
            .map(|w| rate(w[0].error(norm, field), w[1].error(norm, field)))
            .collect()
    }

    pub fn superclose_rates(&self) -> Vec<Rate> {
        self.rows
            .windows(2)
            .map(|w| rate(w[0].superclose_p, w[1].superclose_p))
            .collect()
    }

    /// Whether every error of `field` in `norm` decreases strictly.
    pub fn monotone(&self, norm: Norm, field: Field) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].error(norm, field) < w[0].error(norm, field))
    }

    /// CSV with rates in the `L²(0,T;H¹)` norm; the first row has empty
    /// rate cells.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{REPORT_HEADER}")?;
        let ru = self.rates(Norm::L2H1, Field::U);
        let rp = self.rates(Norm::L2H1, Field::P);
        for (i, r) in self.rows.iter().enumerate() {
            let cell = |v: &[Rate]| if i == 0 { String::new() } else { v[i - 1].to_string() };
            writeln!(
                out,
                "{:.6},{:.6e},{:.6e},{},{:.6e},{:.6e},{}",
                r.h,
                r.err_u_l2l2,
                r.err_u_l2h1,
                cell(&ru),
                r.err_p_l2l2,
                r.err_p_l2h1,
                cell(&rp)
            )?;
        }
        Ok(())
    }
}
