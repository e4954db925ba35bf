//! Backward-Euler multiphysics time stepping.
//!
//! Each step solves a generalized nonlinear Stokes problem for `(u, ξ)` by
//! Newton's method and a linear diffusion problem for `η`, then recovers
//! `(p, q)`. With `θ = 0` the Stokes step sees the previous `η`; with
//! `θ = 1` the two sub-problems are iterated to a fixed point.
//!
//! Unknown layout of the Stokes system: the P2 displacement dofs followed by
//! the P1 dofs of `ξ`.

pub mod naive;
pub mod newton;
pub mod problem;

use std::cell::Cell;
use std::collections::BTreeSet;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::sync::Arc;

use log::{debug, warn};
use nalgebra::Matrix2;
use thiserror::Error;

use crate::constitutive::{from_pseudo, to_pseudo, KappaSet, MaterialParams, ParamError, StressModel};
use crate::fem::assembly::{
    assemble_bilinear, assemble_boundary, block_pattern, mass_kernel, stiffness_kernel, ElementValues,
};
use crate::fem::dirichlet::{apply_dirichlet, DirichletSet};
use crate::fem::quadrature::QuadratureRule;
use crate::fem::solve::{DirectSolver, Factorization, SolveError, SolverOptions};
use crate::fem::space::FunctionSpace;
use crate::fem::sparse::{norm2, SparseMatrix};
use crate::mesh::{Entity, Mesh};

pub use newton::{newton_solve, JacobianSolver, NewtonConfig, NewtonError, NewtonLog};
pub use problem::{BcKind, BoundaryData, BoundaryLayout, ProblemData, ZeroData};

/// `(u, ξ, η)`, the Newton log and the diffusion tolerance of a coupled step.
type CoupledSolution = (Vec<f64>, Vec<f64>, Vec<f64>, NewtonLog, f64);

#[derive(Debug, Error)]
pub enum StepError {
    #[error("invalid setup: {0}")]
    Setup(String),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("step {step}: {source}")]
    Newton { step: usize, source: NewtonError },
    #[error("step {step}: coupling loop stalled after {iterations} iterations (relative change {change:.3e})")]
    Coupling {
        step: usize,
        iterations: usize,
        change: f64,
    },
    #[error("step {step}: diffusion solve failed: {source}")]
    Diffusion { step: usize, source: SolveError },
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

impl StepError {
    /// True for failures of the nonlinear or linear solvers (as opposed to
    /// invalid input).
    pub fn is_solver_failure(&self) -> bool {
        !matches!(
            self,
            StepError::Setup(_) | StepError::Params(_) | StepError::LengthMismatch(..)
        )
    }
}

/// Time-level superscript on `η` in the Stokes step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theta {
    Zero,
    One,
}

impl FromStr for Theta {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "0" => Ok(Theta::Zero),
            "1" => Ok(Theta::One),
            other => Err(format!("theta must be 0 or 1, got `{other}`")),
        }
    }
}

impl fmt::Display for Theta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Theta::Zero => "0",
            Theta::One => "1",
        })
    }
}

/// Pressure recovery after a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PUpdate {
    /// `p = κ₁ξⁿ⁺¹ + κ₂ηⁿ⁺ᶿ`.
    #[default]
    AsPrinted,
    /// `p = κ₁ξⁿ⁺¹ + κ₂ηⁿ⁺¹`.
    Consistent,
}

impl FromStr for PUpdate {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "as_printed" => Ok(PUpdate::AsPrinted),
            "consistent" => Ok(PUpdate::Consistent),
            other => Err(format!("p_update must be as_printed or consistent, got `{other}`")),
        }
    }
}

impl fmt::Display for PUpdate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PUpdate::AsPrinted => "as_printed",
            PUpdate::Consistent => "consistent",
        })
    }
}

/// Solution of the coupled `θ = 1` step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coupling {
    /// Alternate Stokes and diffusion solves until the iterates settle.
    FixedPoint,
    /// Newton on `(u, ξ, η)` jointly.
    #[default]
    Monolithic,
}

impl FromStr for Coupling {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed_point" => Ok(Coupling::FixedPoint),
            "monolithic" => Ok(Coupling::Monolithic),
            other => Err(format!("coupling must be fixed_point or monolithic, got `{other}`")),
        }
    }
}

impl fmt::Display for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Coupling::FixedPoint => "fixed_point",
            Coupling::Monolithic => "monolithic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_final: f64,
    pub dt: f64,
    pub steps: usize,
    pub theta: Theta,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize, theta: Theta) -> Result<Self, StepError> {
        if !(t_final > 0.0) || steps == 0 {
            return Err(StepError::Setup(format!(
                "need T > 0 and at least one step (T = {t_final}, steps = {steps})"
            )));
        }
        Ok(Self {
            t_final,
            dt: t_final / steps as f64,
            steps,
            theta,
        })
    }

    /// Grid with step `dt`; `T/dt` must be an integer to 1e-12.
    pub fn from_dt(t_final: f64, dt: f64, theta: Theta) -> Result<Self, StepError> {
        if !(dt > 0.0) || !(t_final > 0.0) {
            return Err(StepError::Setup(format!(
                "dt and T must be positive (dt = {dt}, T = {t_final})"
            )));
        }
        let steps = (t_final / dt).round() as usize;
        if steps == 0 || (steps as f64 * dt - t_final).abs() > 1e-12 * t_final.max(1.0) {
            return Err(StepError::Setup(format!("dt = {dt} does not divide T = {t_final}")));
        }
        Ok(Self {
            t_final,
            dt,
            steps,
            theta,
        })
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.t_final
        } else {
            n as f64 * self.dt
        }
    }

    /// For `θ = 0`, whether `dt ≤ c·h²`; `None` for `θ = 1`.
    pub fn stability_guard(&self, h: f64, c: f64) -> Option<bool> {
        match self.theta {
            Theta::Zero => Some(self.dt <= c * h * h * (1.0 + 1e-12)),
            Theta::One => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub newton: NewtonConfig,
    pub coupled_tol: f64,
    pub coupled_max_iter: usize,
    pub coupling: Coupling,
    pub p_update: PUpdate,
    pub solver: SolverOptions,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            newton: NewtonConfig::default(),
            coupled_tol: 1e-9,
            coupled_max_iter: 50,
            coupling: Coupling::default(),
            p_update: PUpdate::AsPrinted,
            solver: SolverOptions::default(),
        }
    }
}

/// Coefficients of all fields at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub time: f64,
}

/// One row of the energy diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyDiagnostic {
    /// `‖ε(u_h)‖²`.
    pub strain: f64,
    /// `κ₂‖η_h‖²`.
    pub eta: f64,
    /// `κ₃‖ξ_h‖²`.
    pub xi: f64,
    /// `Δt Σ (1/μ_f)(K∇p̂, ∇p̂)` with `p̂ = κ₁ξ + κ₂η`, accumulated.
    pub dissipation: f64,
}

impl EnergyDiagnostic {
    pub fn total(&self) -> f64 {
        self.eta + self.xi + self.dissipation
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub newton_iterations: usize,
    pub coupled_iterations: usize,
    pub stokes_residual: f64,
    pub stokes_tolerance: f64,
    pub diffusion_residual: f64,
    pub diffusion_tolerance: f64,
    pub energy: EnergyDiagnostic,
    /// Quadrature points where the shear coefficient went negative.
    pub negative_shear_points: usize,
    pub newton_logs: Vec<NewtonLog>,
}

impl StepRecord {
    /// Whether both re-assembled residuals are within `factor` times their
    /// solver tolerances.
    pub fn residuals_within(&self, factor: f64) -> bool {
        self.stokes_residual <= factor * self.stokes_tolerance
            && self.diffusion_residual <= factor * self.diffusion_tolerance
    }
}

pub const STEP_LOG_HEADER: &str = "step,time,newton_iterations,coupled_iterations,stokes_residual,diffusion_residual,strain_energy,eta_energy,xi_energy,dissipation";

pub fn write_step_log<W: Write>(records: &[StepRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{STEP_LOG_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{:.12e},{},{},{:.6e},{:.6e},{:.12e},{:.12e},{:.12e},{:.12e}",
            r.step,
            r.time,
            r.newton_iterations,
            r.coupled_iterations,
            r.stokes_residual,
            r.diffusion_residual,
            r.energy.strain,
            r.energy.eta,
            r.energy.xi,
            r.energy.dissipation
        )?;
    }
    Ok(())
}

/// `(p, q)` from the new pseudo pressures; `eta_theta` is `ηⁿ⁺ᶿ`.
pub fn update_pq(
    xi_new: &[f64],
    eta_new: &[f64],
    eta_theta: &[f64],
    kappas: &KappaSet,
) -> Result<(Vec<f64>, Vec<f64>), StepError> {
    if xi_new.len() != eta_new.len() {
        return Err(StepError::LengthMismatch(xi_new.len(), eta_new.len()));
    }
    if eta_theta.len() != eta_new.len() {
        return Err(StepError::LengthMismatch(eta_theta.len(), eta_new.len()));
    }
    let p = xi_new
        .iter()
        .zip(eta_theta)
        .map(|(x, e)| kappas.kappa1 * x + kappas.kappa2 * e)
        .collect();
    let q = xi_new
        .iter()
        .zip(eta_new)
        .map(|(x, e)| kappas.kappa1 * e - kappas.kappa3 * x)
        .collect();
    Ok((p, q))
}

/// Spaces, cached element data and the constant matrices of one mesh.
pub struct Discretization {
    pub mesh: Arc<Mesh>,
    pub vspace: FunctionSpace,
    pub pspace: FunctionSpace,
    pub rule: QuadratureRule,
    pub params: MaterialParams,
    pub kappas: KappaSet,
    pub model: StressModel,
    pub data: BoundaryData,
    vcache: Vec<ElementValues>,
    pcache: Vec<ElementValues>,
    /// P1 mass matrix.
    pub mass: SparseMatrix,
    /// `K`-weighted P1 stiffness matrix.
    pub stiffness_k: SparseMatrix,
    /// `(div v, φ)`: rows P1, columns P2.
    pub divergence: SparseMatrix,
    saddle: SparseMatrix,
    /// `(dof, node, component)` of constrained displacement dofs.
    u_fixed: Vec<(usize, usize, usize)>,
    /// Vertices carrying pressure data.
    p_fixed: Vec<usize>,
    p_mask: Vec<bool>,
}

impl fmt::Debug for Discretization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Discretization")
            .field("vertices", &self.mesh.vertex_count())
            .field("u_dofs", &self.vspace.dof_count())
            .field("p_dofs", &self.pspace.dof_count())
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl Discretization {
    pub fn new(
        mesh: Arc<Mesh>,
        params: MaterialParams,
        model: StressModel,
        data: BoundaryData,
    ) -> Result<Self, StepError> {
        params.validate()?;
        if !data.layout.is_supported() {
            return Err(StepError::Setup(
                "each displacement component needs Dirichlet data on at least one segment".into(),
            ));
        }
        let kappas = params.kappas()?;
        let vspace = FunctionSpace::p2_vector(mesh.clone());
        let pspace = FunctionSpace::p1_scalar(mesh.clone());
        let rule = QuadratureRule::default();
        let vcache = (0..mesh.triangle_count())
            .map(|t| ElementValues::new(&vspace, t, &rule))
            .collect();
        let pcache = (0..mesh.triangle_count())
            .map(|t| ElementValues::new(&pspace, t, &rule))
            .collect();
        let setup = |e: crate::fem::AssemblyError| StepError::Setup(e.to_string());
        let mass = assemble_bilinear(&rule, &pspace, &pspace, mass_kernel).map_err(setup)?;
        let mut stiffness_k = assemble_bilinear(&rule, &pspace, &pspace, stiffness_kernel).map_err(setup)?;
        stiffness_k.scale(params.k);
        let divergence = assemble_bilinear(&rule, &vspace, &pspace, |_, v, q| v.div() * q.phi()).map_err(setup)?;
        let (n, _, pattern) = block_pattern(&[&vspace, &pspace]);
        let saddle = SparseMatrix::with_pattern(n, n, pattern);

        let mut u_fixed = BTreeSet::new();
        let mut p_fixed = BTreeSet::new();
        for (e, tag) in mesh.boundary_edges() {
            let [a, b] = mesh.edges()[e].vertices;
            for c in 0..2 {
                if data.layout.displacement_kind(tag, c) == BcKind::Dirichlet {
                    for ent in [Entity::Vertex(a), Entity::Vertex(b), Entity::Edge(e)] {
                        let node = vspace.entity_node(ent).expect("P2 has vertex and edge nodes");
                        u_fixed.insert((2 * node + c, node, c));
                    }
                }
            }
            if data.layout.pressure_kind(tag) == BcKind::Dirichlet {
                p_fixed.insert(a);
                p_fixed.insert(b);
            }
        }
        let pspace_len = pspace.dof_count();
        if !p_fixed.is_empty() && kappas.kappa2 == 0.0 {
            return Err(StepError::Setup("pressure Dirichlet data needs lambda > 0".into()));
        }
        Ok(Self {
            mesh,
            vspace,
            pspace,
            rule,
            params,
            kappas,
            model,
            data,
            vcache,
            pcache,
            mass,
            stiffness_k,
            divergence,
            saddle,
            u_fixed: u_fixed.into_iter().collect(),
            p_mask: (0..pspace_len).map(|v| p_fixed.contains(&v)).collect(),
            p_fixed: p_fixed.into_iter().collect(),
        })
    }

    pub fn u_dofs(&self) -> usize {
        self.vspace.dof_count()
    }

    pub fn p_dofs(&self) -> usize {
        self.pspace.dof_count()
    }

    pub fn element_values(&self, t: usize) -> (&ElementValues, &ElementValues) {
        (&self.vcache[t], &self.pcache[t])
    }

    /// `(f, v) + ⟨f₁, v⟩` over traction components.
    pub fn momentum_load(&self, t: f64) -> Vec<f64> {
        let data = &self.data.data;
        let mut out = vec![0.0; self.u_dofs()];
        for (tri, ev) in self.vcache.iter().enumerate() {
            let dofs = self.vspace.triangle_dofs(tri);
            for qp in 0..ev.points.len() {
                let f = data.body_force(&ev.points[qp], t);
                for (s, &d) in ev.at(qp).iter().zip(dofs) {
                    out[d] += ev.weights[qp] * f.dot(&s.value);
                }
            }
        }
        let layout = self.data.layout;
        let neumann = |tag, c| layout.displacement_kind(tag, c) == BcKind::Neumann;
        assemble_boundary(
            &self.vspace,
            3,
            |tag| neumann(tag, 0) || neumann(tag, 1),
            |bp, s| {
                let tr = data.traction(&bp.x, &bp.normal, t);
                (0..2).filter(|&c| neumann(bp.tag, c)).map(|c| tr[c] * s.value[c]).sum()
            },
            &mut out,
        );
        out
    }

    /// `(φ, ψ) + (1/μ_f)(Kρ_f g, ∇ψ) − ⟨φ₁, ψ⟩` over flux segments.
    pub fn fluid_load(&self, t: f64) -> Vec<f64> {
        let data = &self.data.data;
        let gk = self.params.rho_f_g * (self.params.k / self.params.mu_f);
        let mut out = vec![0.0; self.p_dofs()];
        for (tri, ev) in self.pcache.iter().enumerate() {
            let dofs = self.pspace.triangle_dofs(tri);
            for qp in 0..ev.points.len() {
                let phi = data.fluid_source(&ev.points[qp], t);
                for (s, &d) in ev.at(qp).iter().zip(dofs) {
                    out[d] += ev.weights[qp] * (phi * s.phi() + gk.dot(&s.grad_phi()));
                }
            }
        }
        let layout = self.data.layout;
        assemble_boundary(
            &self.pspace,
            3,
            |tag| layout.pressure_kind(tag) == BcKind::Neumann,
            |bp, s| -data.flux(&bp.x, &bp.normal, t) * s.phi(),
            &mut out,
        );
        out
    }

    pub fn displacement_constraints(&self, t: f64) -> DirichletSet {
        let mut set = DirichletSet::new();
        for &(dof, node, c) in &self.u_fixed {
            let g = self.data.data.displacement(&self.vspace.node_point(node), t);
            set.insert(dof, g[c]).expect("single data function per component");
        }
        set
    }

    /// `η = (p − κ₁ξ)/κ₂` at vertices carrying pressure data.
    pub fn eta_constraints(&self, t: f64, xi: &[f64]) -> DirichletSet {
        let k = &self.kappas;
        let mut set = DirichletSet::new();
        for &v in &self.p_fixed {
            let p = self.data.data.pressure(&self.mesh.vertices()[v], t);
            set.insert(v, (p - k.kappa1 * xi[v]) / k.kappa2)
                .expect("unique vertices");
        }
        set
    }

    pub fn pressure_vertices(&self) -> &[usize] {
        &self.p_fixed
    }

    /// Pressure data at [`Self::pressure_vertices`].
    pub fn boundary_pressure(&self, t: f64) -> Vec<f64> {
        self.p_fixed
            .iter()
            .map(|&v| self.data.data.pressure(&self.mesh.vertices()[v], t))
            .collect()
    }

    /// `eta` with the values at pressure-data vertices replaced by
    /// `(p_b − κ₁ξ)/κ₂`.
    pub fn substitute_boundary_eta(&self, eta: &[f64], xi: &[f64], p_b: &[f64]) -> Vec<f64> {
        let k = &self.kappas;
        let mut out = eta.to_vec();
        for (&v, p) in self.p_fixed.iter().zip(p_b) {
            out[v] = (p - k.kappa1 * xi[v]) / k.kappa2;
        }
        out
    }

    fn local_gradient(&self, t: usize, qp: usize, u: &[f64]) -> Matrix2<f64> {
        let mut g = Matrix2::zeros();
        for (s, &d) in self.vcache[t].at(qp).iter().zip(self.vspace.triangle_dofs(t)) {
            g += s.grad * u[d];
        }
        g
    }

    fn local_scalar(&self, t: usize, qp: usize, c: &[f64]) -> f64 {
        self.pcache[t]
            .at(qp)
            .iter()
            .zip(self.pspace.triangle_dofs(t))
            .map(|(s, &d)| s.phi() * c[d])
            .sum()
    }

    /// Residual of the Stokes step at `x = [u; ξ]`, unconstrained rows
    /// included. `load_u` is [`Self::momentum_load`]. At vertices carrying
    /// pressure data `η` is tied to the unknown `ξ` through `p_b`, so the
    /// boundary relation between `p`, `ξ` and `η` holds at the new level.
    pub fn stokes_residual(
        &self,
        x: &[f64],
        eta_ref: &[f64],
        p_b: &[f64],
        load_u: &[f64],
        negative: &Cell<usize>,
    ) -> Vec<f64> {
        let nu = self.u_dofs();
        let (u, xi) = x.split_at(nu);
        let eta_eff = self.substitute_boundary_eta(eta_ref, xi, p_b);
        let eta_ref = &eta_eff[..];
        let (k1, k3) = (self.kappas.kappa1, self.kappas.kappa3);
        let mut r = vec![0.0; x.len()];
        let mut neg = 0;
        for t in 0..self.mesh.triangle_count() {
            let (ev, ep) = (&self.vcache[t], &self.pcache[t]);
            let (vd, pd) = (self.vspace.triangle_dofs(t), self.pspace.triangle_dofs(t));
            for qp in 0..ev.points.len() {
                let w = ev.weights[qp];
                let g = self.local_gradient(t, qp, u);
                let xiv = self.local_scalar(t, qp, xi);
                let etav = self.local_scalar(t, qp, eta_ref);
                let n = self.model.stress_n(&g);
                if self.model.shear_coefficient(&g) < 0.0 {
                    neg += 1;
                }
                for (s, &d) in ev.at(qp).iter().zip(vd) {
                    r[d] += w * (n.dot(&s.strain()) - xiv * s.div());
                }
                let c = w * (k3 * xiv + g.trace() - k1 * etav);
                for (s, &d) in ep.at(qp).iter().zip(pd) {
                    r[nu + d] += c * s.phi();
                }
            }
        }
        negative.set(negative.get().max(neg));
        for (ri, l) in r.iter_mut().zip(load_u) {
            *ri -= l;
        }
        r
    }

    /// Jacobian `[DN, −Bᵀ; B, κ₃M + (κ₁²/κ₂)M_b]` at `x = [u; ξ]`, where
    /// `M_b` keeps the mass columns of pressure-data vertices.
    pub fn stokes_jacobian(&self, x: &[f64]) -> SparseMatrix {
        let nu = self.u_dofs();
        let k3 = self.kappas.kappa3;
        let kb = if self.p_fixed.is_empty() {
            0.0
        } else {
            self.kappas.kappa1 * self.kappas.kappa1 / self.kappas.kappa2
        };
        let mut jac = self.saddle.clone();
        let nv = self.vspace.local_dofs();
        let np = self.pspace.local_dofs();
        let nl = nv + np;
        let mut local = vec![0.0; nl * nl];
        let mut idx = vec![0usize; nl];
        let mut tangents = vec![Matrix2::zeros(); nv];
        for t in 0..self.mesh.triangle_count() {
            let (ev, ep) = (&self.vcache[t], &self.pcache[t]);
            let pd = self.pspace.triangle_dofs(t);
            local.iter_mut().for_each(|v| *v = 0.0);
            for qp in 0..ev.points.len() {
                let w = ev.weights[qp];
                let g = self.local_gradient(t, qp, &x[..nu]);
                let (vs, ps) = (ev.at(qp), ep.at(qp));
                for (tj, sj) in tangents.iter_mut().zip(vs) {
                    *tj = self.model.tangent(&g, &sj.grad);
                }
                for (i, si) in vs.iter().enumerate() {
                    let ei = si.strain();
                    let (di, row) = (si.div(), i * nl);
                    for (j, tj) in tangents.iter().enumerate() {
                        local[row + j] += w * tj.dot(&ei);
                    }
                    for (k, sk) in ps.iter().enumerate() {
                        let c = w * di * sk.phi();
                        local[row + nv + k] -= c;
                        local[(nv + k) * nl + i] += c;
                    }
                }
                for (k, sk) in ps.iter().enumerate() {
                    for (l, sl) in ps.iter().enumerate() {
                        let c = if self.p_mask[pd[l]] { k3 + kb } else { k3 };
                        local[(nv + k) * nl + nv + l] += w * c * sk.phi() * sl.phi();
                    }
                }
            }
            idx[..nv].copy_from_slice(self.vspace.triangle_dofs(t));
            for (k, &d) in self.pspace.triangle_dofs(t).iter().enumerate() {
                idx[nv + k] = nu + d;
            }
            for i in 0..nl {
                for j in 0..nl {
                    let v = local[i * nl + j];
                    if v != 0.0 {
                        jac.add(idx[i], idx[j], v)
                            .expect("saddle pattern covers element couplings");
                    }
                }
            }
        }
        jac
    }

    /// `M/Δt + (κ₂/μ_f) A_K`.
    pub fn diffusion_matrix(&self, dt: f64) -> SparseMatrix {
        let mut d = self.mass.clone();
        d.scale(1.0 / dt);
        d.axpy(self.kappas.kappa2 / self.params.mu_f, &self.stiffness_k);
        d.set_symmetric(true);
        d
    }

    /// Right-hand side of the diffusion step before constraints.
    pub fn diffusion_rhs(&self, eta_prev: &[f64], xi_new: &[f64], dt: f64, fluid_load: &[f64]) -> Vec<f64> {
        let m_eta = self.mass.matvec(eta_prev);
        let a_xi = self.stiffness_k.matvec(xi_new);
        let c = self.kappas.kappa1 / self.params.mu_f;
        m_eta
            .iter()
            .zip(&a_xi)
            .zip(fluid_load)
            .map(|((m, a), f)| m / dt - c * a + f)
            .collect()
    }

    /// Residual of the coupled backward-Euler step at `z = [u; ξ; η]`.
    /// Diffusion rows are `w(Dη + (κ₁/μ_f)A_K ξ − b)`; rows of
    /// pressure-data vertices are `w D_ii (η_i − (p_b − κ₁ξ_i)/κ₂)`.
    pub fn coupled_residual(&self, z: &[f64], step: &CoupledStep, negative: &Cell<usize>) -> Vec<f64> {
        let (nu, np) = (self.u_dofs(), self.p_dofs());
        let (x, eta) = z.split_at(nu + np);
        let mut r = self.stokes_residual(x, eta, &step.p_b, &step.load_u, negative);
        let xi = &x[nu..];
        let c = self.kappas.kappa1 / self.params.mu_f;
        let d_eta = step.diffusion.matvec(eta);
        let a_xi = self.stiffness_k.matvec(xi);
        let mut re: Vec<f64> = (0..np)
            .map(|i| step.weight * (d_eta[i] + c * a_xi[i] - step.rhs_eta[i]))
            .collect();
        let k = &self.kappas;
        for (&v, &pb) in self.p_fixed.iter().zip(&step.p_b) {
            re[v] = step.weight * step.diffusion.get(v, v) * (eta[v] - (pb - k.kappa1 * xi[v]) / k.kappa2);
        }
        r.extend(re);
        r
    }

    /// Jacobian of [`Self::coupled_residual`].
    pub fn coupled_jacobian(&self, z: &[f64], step: &CoupledStep) -> SparseMatrix {
        let (nu, np) = (self.u_dofs(), self.p_dofs());
        let n = nu + 2 * np;
        let stokes = self.stokes_jacobian(&z[..nu + np]);
        let k = &self.kappas;
        let c = k.kappa1 / self.params.mu_f;
        let w = step.weight;
        let mut trip = Vec::with_capacity(stokes.nnz() + 3 * (self.mass.nnz() + self.stiffness_k.nnz()));
        for i in 0..nu + np {
            trip.extend(stokes.row(i).map(|(j, v)| (i, j, v)));
        }
        for i in 0..np {
            trip.extend(
                self.mass
                    .row(i)
                    .map(|(j, v)| (nu + i, nu + np + j, if self.p_mask[j] { 0.0 } else { -k.kappa1 * v })),
            );
            if self.p_mask[i] {
                let s = w * step.diffusion.get(i, i);
                trip.push((nu + np + i, nu + i, s * k.kappa1 / k.kappa2));
                trip.push((nu + np + i, nu + np + i, s));
            } else {
                trip.extend(self.stiffness_k.row(i).map(|(j, v)| (nu + np + i, nu + j, w * c * v)));
                trip.extend(step.diffusion.row(i).map(|(j, v)| (nu + np + i, nu + np + j, w * v)));
            }
        }
        SparseMatrix::from_triplets(n, n, &trip)
    }

    /// Norm of the Stokes residual with constrained rows removed.
    pub fn stokes_residual_norm(&self, u: &[f64], xi: &[f64], eta_ref: &[f64], t: f64) -> f64 {
        let load = self.momentum_load(t);
        let mut x = u.to_vec();
        x.extend_from_slice(xi);
        let p_b = self.boundary_pressure(t);
        let mut r = self.stokes_residual(&x, eta_ref, &p_b, &load, &Cell::new(0));
        for d in self.displacement_constraints(t).dofs() {
            r[d] = 0.0;
        }
        norm2(&r)
    }

    /// Relative residual of the diffusion equations at `eta`, assembled from
    /// scratch.
    pub fn diffusion_residual_norm(&self, eta: &[f64], eta_prev: &[f64], xi: &[f64], t: f64, dt: f64) -> f64 {
        let full = self.diffusion_matrix(dt);
        let mut rhs = self.diffusion_rhs(eta_prev, xi, dt, &self.fluid_load(t));
        let constraints = self.eta_constraints(t, xi);
        let mut constrained = full.clone();
        apply_dirichlet(&mut constrained, &mut rhs, &constraints).expect("vertex dofs in range");
        constrained_residual(&constrained, eta, &rhs)
    }

    /// `(‖ε(u)‖², κ₂‖η‖², κ₃‖ξ‖²)`.
    pub fn energy_terms(&self, u: &[f64], xi: &[f64], eta: &[f64]) -> (f64, f64, f64) {
        let mut strain = 0.0;
        for t in 0..self.mesh.triangle_count() {
            let ev = &self.vcache[t];
            for qp in 0..ev.points.len() {
                let g = self.local_gradient(t, qp, u);
                let e = (g + g.transpose()) * 0.5;
                strain += ev.weights[qp] * e.norm_squared();
            }
        }
        let m_norm = |v: &[f64]| -> f64 { v.iter().zip(self.mass.matvec(v)).map(|(a, b)| a * b).sum() };
        (
            strain,
            self.kappas.kappa2 * m_norm(eta),
            self.kappas.kappa3 * m_norm(xi),
        )
    }

    /// `(1/μ_f)(K∇p̂, ∇p̂)`.
    pub fn dissipation_rate(&self, p_hat: &[f64]) -> f64 {
        let a = self.stiffness_k.matvec(p_hat);
        p_hat.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>() / self.params.mu_f
    }

    /// Initial state: interpolated `u₀`, `p₀`; `q` is the L² projection of
    /// `div u_h⁰` into P1.
    pub fn initialize(&self) -> Result<State, StepError> {
        let data = &self.data.data;
        let u = self.vspace.interpolate(|x| data.initial_displacement(x));
        let p = self.pspace.interpolate_scalar(|x| data.initial_pressure(x));
        let bu = self.divergence.matvec(&u);
        let q = if bu.iter().all(|v| *v == 0.0) {
            vec![0.0; p.len()]
        } else {
            let mut m = self.mass.clone();
            m.set_symmetric(true);
            DirectSolver::default()
                .solve(&m, &bu)
                .map_err(|source| StepError::Diffusion { step: 0, source })?
        };
        let (xi, eta) = to_pseudo(&p, &q, &self.params);
        Ok(State {
            u,
            xi,
            eta,
            p,
            q,
            time: 0.0,
        })
    }
}

/// Data of one coupled step that does not depend on the iterate.
#[derive(Debug, Clone)]
pub struct CoupledStep {
    pub diffusion: SparseMatrix,
    /// `Mηⁿ/Δt + fluid load`.
    pub rhs_eta: Vec<f64>,
    pub p_b: Vec<f64>,
    pub load_u: Vec<f64>,
    /// Scale of the diffusion rows.
    pub weight: f64,
}

struct DiffusionCache {
    dt: f64,
    full: SparseMatrix,
    factor: Factorization,
}

/// Drives the time loop on one discretization.
pub struct Stepper {
    pub disc: Discretization,
    pub grid: TimeGrid,
    pub config: StepperConfig,
    stokes_solver: JacobianSolver,
    coupled_solver: JacobianSolver,
    coupled_dt: f64,
    coupled_weight: Option<f64>,
    diffusion: Option<DiffusionCache>,
    dissipation: f64,
}

impl fmt::Debug for Stepper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stepper")
            .field("disc", &self.disc)
            .field("grid", &self.grid)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

/// Largest relative change among paired vectors.
fn relative_change(pairs: &[(&[f64], &[f64])]) -> f64 {
    pairs
        .iter()
        .map(|(new, old)| {
            let d: f64 = new
                .iter()
                .zip(old.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let n = norm2(new);
            if d == 0.0 {
                0.0
            } else {
                d / n.max(f64::MIN_POSITIVE)
            }
        })
        .fold(0.0, f64::max)
}

impl Stepper {
    pub fn new(disc: Discretization, grid: TimeGrid, config: StepperConfig) -> Result<Self, StepError> {
        config.newton.validate().map_err(StepError::Setup)?;
        if !(config.coupled_tol > 0.0) || config.coupled_max_iter == 0 {
            return Err(StepError::Setup(
                "coupled_tol must be positive and coupled_max_iter ≥ 1".into(),
            ));
        }
        Ok(Self {
            disc,
            grid,
            stokes_solver: JacobianSolver::new(config.solver),
            coupled_solver: JacobianSolver::new(config.solver),
            coupled_dt: f64::NAN,
            coupled_weight: None,
            config,
            diffusion: None,
            dissipation: 0.0,
        })
    }

    pub fn initialize(&mut self) -> Result<State, StepError> {
        self.dissipation = 0.0;
        self.stokes_solver.reset();
        self.coupled_solver.reset();
        self.coupled_weight = None;
        self.disc.initialize()
    }

    /// Newton solve of the Stokes step starting from `(u_prev, ξ_prev)`.
    #[allow(clippy::too_many_arguments)]
    pub fn stokes_newton_step(
        &mut self,
        u_prev: &[f64],
        xi_prev: &[f64],
        eta_ref: &[f64],
        p_b: &[f64],
        load_u: &[f64],
        constraints: &DirichletSet,
        negative: &Cell<usize>,
    ) -> Result<(Vec<f64>, Vec<f64>, NewtonLog), NewtonError> {
        let disc = &self.disc;
        let nu = disc.u_dofs();
        let mut x = Vec::with_capacity(nu + xi_prev.len());
        x.extend_from_slice(u_prev);
        x.extend_from_slice(xi_prev);
        for (d, v) in constraints.iter() {
            x[d] = v;
        }
        let m_eta = disc.mass.matvec(eta_ref);
        let load_norm = (norm2(load_u).powi(2) + (disc.kappas.kappa1 * norm2(&m_eta)).powi(2)).sqrt();
        let log = newton_solve(
            &mut x,
            constraints,
            load_norm,
            &self.config.newton,
            &mut self.stokes_solver,
            |x| disc.stokes_residual(x, eta_ref, p_b, load_u, negative),
            |x| disc.stokes_jacobian(x),
        )?;
        let xi = x.split_off(nu);
        Ok((x, xi, log))
    }

    /// Newton solve of the coupled `θ = 1` step from `state`. Returns
    /// `(u, ξ, η)`, the log and the relative diffusion tolerance implied by
    /// the Newton tolerance.
    #[allow(clippy::too_many_arguments)]
    pub fn coupled_newton_step(
        &mut self,
        state: &State,
        p_b: &[f64],
        load_u: &[f64],
        fluid_load: &[f64],
        constraints: &DirichletSet,
        negative: &Cell<usize>,
    ) -> Result<CoupledSolution, NewtonError> {
        let dt = self.grid.dt;
        if self.coupled_dt != dt {
            self.coupled_solver.reset();
            self.coupled_dt = dt;
            self.coupled_weight = None;
        }
        let disc = &self.disc;
        let (nu, np) = (disc.u_dofs(), disc.p_dofs());
        let m_eta = disc.mass.matvec(&state.eta);
        let rhs_eta: Vec<f64> = m_eta.iter().zip(fluid_load).map(|(m, f)| m / dt + f).collect();
        let stokes_load = (norm2(load_u).powi(2) + (disc.kappas.kappa1 * norm2(&m_eta)).powi(2)).sqrt();
        let eta_load = norm2(&rhs_eta);
        // Fixed per run so that a kept Jacobian stays consistent.
        let weight = *self
            .coupled_weight
            .get_or_insert(if stokes_load > 0.0 && eta_load > 0.0 {
                stokes_load / eta_load
            } else {
                1.0
            });
        let step = CoupledStep {
            diffusion: disc.diffusion_matrix(dt),
            rhs_eta,
            p_b: p_b.to_vec(),
            load_u: load_u.to_vec(),
            weight,
        };
        let mut z = Vec::with_capacity(nu + 2 * np);
        z.extend_from_slice(&state.u);
        z.extend_from_slice(&state.xi);
        z.extend_from_slice(&state.eta);
        for (d, v) in constraints.iter() {
            z[d] = v;
        }
        let load_norm = (stokes_load.powi(2) + (weight * eta_load).powi(2)).sqrt();
        let log = newton_solve(
            &mut z,
            constraints,
            load_norm,
            &self.config.newton,
            &mut self.coupled_solver,
            |z| disc.coupled_residual(z, &step, negative),
            |z| disc.coupled_jacobian(z, &step),
        )?;
        let diffusion_tol = if eta_load > 0.0 {
            log.tolerance / (weight * eta_load)
        } else {
            log.tolerance
        };
        let eta = z.split_off(nu + np);
        let xi = z.split_off(nu);
        Ok((z, xi, eta, log, diffusion_tol))
    }

    fn diffusion_cache(&mut self) -> Result<&DiffusionCache, SolveError> {
        let dt = self.grid.dt;
        if self.diffusion.as_ref().is_none_or(|c| c.dt != dt) {
            let full = self.disc.diffusion_matrix(dt);
            let mut constrained = full.clone();
            let zeros: DirichletSet = {
                let mut s = DirichletSet::new();
                for &v in self.disc.pressure_vertices() {
                    s.insert(v, 0.0).expect("unique");
                }
                s
            };
            let mut dummy = vec![0.0; full.nrows()];
            apply_dirichlet(&mut constrained, &mut dummy, &zeros).expect("vertex dofs in range");
            let factor = DirectSolver::new(self.config.solver).factor(&constrained)?;
            self.diffusion = Some(DiffusionCache { dt, full, factor });
        }
        Ok(self.diffusion.as_ref().expect("just built"))
    }

    /// Backward-Euler diffusion solve for `ηⁿ⁺¹`. Returns `η` and the
    /// relative residual of the constrained system.
    pub fn diffusion_step(
        &mut self,
        eta_prev: &[f64],
        xi_new: &[f64],
        t_next: f64,
        fluid_load: &[f64],
    ) -> Result<(Vec<f64>, f64), SolveError> {
        let dt = self.grid.dt;
        let mut rhs = self.disc.diffusion_rhs(eta_prev, xi_new, dt, fluid_load);
        let constraints = self.disc.eta_constraints(t_next, xi_new);
        let cache = self.diffusion_cache()?;
        constraints
            .lift_rhs(&cache.full, &mut rhs)
            .expect("vertex dofs in range");
        let eta = cache.factor.solve(&rhs)?;
        let res = constrained_residual(cache.factor.matrix(), &eta, &rhs);
        Ok((eta, res))
    }

    /// One time step from `state`.
    pub fn advance(&mut self, state: &State, step: usize) -> Result<(State, StepRecord), StepError> {
        let t = self.grid.time(step);
        let load_u = self.disc.momentum_load(t);
        let fluid = self.disc.fluid_load(t);
        let constraints = self.disc.displacement_constraints(t);
        let p_b = self.disc.boundary_pressure(t);
        let negative = Cell::new(0);
        let mut logs = Vec::new();
        let newton_err = |source| StepError::Newton { step, source };
        let diff_err = |source| StepError::Diffusion { step, source };

        let (u, xi, eta, eta_theta, coupled, diff_res, stokes_res, stokes_tol);
        let mut diff_tol = self.config.solver.rel_tol;
        match self.grid.theta {
            Theta::One if self.config.coupling == Coupling::Monolithic => {
                let (u1, xi1, eta1, log, tol) = self
                    .coupled_newton_step(state, &p_b, &load_u, &fluid, &constraints, &negative)
                    .map_err(newton_err)?;
                stokes_res = self.disc.stokes_residual_norm(&u1, &xi1, &eta1, t);
                stokes_tol = log.tolerance;
                diff_res = self
                    .disc
                    .diffusion_residual_norm(&eta1, &state.eta, &xi1, t, self.grid.dt);
                diff_tol = diff_tol.max(tol);
                logs.push(log);
                u = u1;
                xi = xi1;
                eta = eta1.clone();
                eta_theta = eta1;
                coupled = 1;
            }
            Theta::Zero => {
                let (u1, xi1, log) = self
                    .stokes_newton_step(&state.u, &state.xi, &state.eta, &p_b, &load_u, &constraints, &negative)
                    .map_err(newton_err)?;
                let (eta1, res) = self.diffusion_step(&state.eta, &xi1, t, &fluid).map_err(diff_err)?;
                stokes_res = log.final_residual();
                stokes_tol = log.tolerance;
                logs.push(log);
                u = u1;
                xi = xi1;
                eta = eta1;
                eta_theta = state.eta.clone();
                coupled = 1;
                diff_res = res;
            }
            Theta::One => {
                let (mut uk, mut xik, mut etak) = (state.u.clone(), state.xi.clone(), state.eta.clone());
                let mut k = 0;
                let mut last_res;
                loop {
                    k += 1;
                    let (u1, xi1, log) = self
                        .stokes_newton_step(&uk, &xik, &etak, &p_b, &load_u, &constraints, &negative)
                        .map_err(newton_err)?;
                    let tol = log.tolerance;
                    logs.push(log);
                    let (eta1, res) = self.diffusion_step(&state.eta, &xi1, t, &fluid).map_err(diff_err)?;
                    let change = relative_change(&[(&u1, &uk), (&xi1, &xik), (&eta1, &etak)]);
                    uk = u1;
                    xik = xi1;
                    etak = eta1;
                    last_res = res;
                    // Stokes residual with the updated η decides whether the
                    // pair is a fixed point.
                    let r_new = {
                        let mut x = uk.clone();
                        x.extend_from_slice(&xik);
                        let mut r = self.disc.stokes_residual(&x, &etak, &p_b, &load_u, &negative);
                        for d in constraints.dofs() {
                            r[d] = 0.0;
                        }
                        norm2(&r)
                    };
                    debug!("step {step} coupling iteration {k}: change {change:.3e}, residual {r_new:.3e}");
                    if r_new <= tol || change <= self.config.coupled_tol {
                        stokes_res = r_new;
                        stokes_tol = tol;
                        break;
                    }
                    if k >= self.config.coupled_max_iter {
                        return Err(StepError::Coupling {
                            step,
                            iterations: k,
                            change,
                        });
                    }
                }
                u = uk;
                xi = xik;
                eta = etak.clone();
                eta_theta = etak;
                coupled = k;
                diff_res = last_res;
            }
        }
        let eta_for_p = match self.config.p_update {
            PUpdate::AsPrinted => &eta_theta,
            PUpdate::Consistent => &eta,
        };
        let (p, q) = update_pq(&xi, &eta, eta_for_p, &self.disc.kappas)?;
        let (strain, eta_e, xi_e) = self.disc.energy_terms(&u, &xi, &eta);
        let (p_hat, _) = from_pseudo(&xi, &eta, &self.disc.kappas);
        self.dissipation += self.grid.dt * self.disc.dissipation_rate(&p_hat);
        if negative.get() > 0 {
            warn!(
                "step {step}: shear coefficient negative at {} quadrature points",
                negative.get()
            );
        }
        let record = StepRecord {
            step,
            time: t,
            newton_iterations: logs.iter().map(NewtonLog::iterations).sum(),
            coupled_iterations: coupled,
            stokes_residual: stokes_res,
            stokes_tolerance: stokes_tol,
            diffusion_residual: diff_res,
            diffusion_tolerance: diff_tol,
            energy: EnergyDiagnostic {
                strain,
                eta: eta_e,
                xi: xi_e,
                dissipation: self.dissipation,
            },
            negative_shear_points: negative.get(),
            newton_logs: logs,
        };
        Ok((
            State {
                u,
                xi,
                eta,
                p,
                q,
                time: t,
            },
            record,
        ))
    }

    /// Runs every step. `observe` sees the initial state (without a record)
    /// and then every new state.
    pub fn run<F>(&mut self, mut observe: F) -> Result<(State, Vec<StepRecord>), StepError>
    where
        F: FnMut(&Discretization, &State, Option<&StepRecord>),
    {
        let mut state = self.initialize()?;
        observe(&self.disc, &state, None);
        let mut records = Vec::with_capacity(self.grid.steps);
        for n in 1..=self.grid.steps {
            let (next, rec) = self.advance(&state, n)?;
            observe(&self.disc, &next, Some(&rec));
            records.push(rec);
            state = next;
        }
        Ok((state, records))
    }
}

/// `‖A x − b‖ / ‖b‖` (or the absolute norm when `b = 0`).
fn constrained_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r: f64 = ax.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let bn = norm2(b);
    if bn > 0.0 {
        r / bn
    } else {
        r
    }
}

/// Whether `κ₂‖ηⁿ‖² + κ₃‖ξⁿ‖² + dissipation` never exceeds `bound`.
pub fn energy_bounded(records: &[StepRecord], bound: f64) -> bool {
    records
        .iter()
        .all(|r| r.energy.total().is_finite() && r.energy.total() <= bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::DevSign;
    use nalgebra::{Point2, Vector2};

    fn params() -> MaterialParams {
        MaterialParams::from_lame(0.7, 0.4, 0.9, 0.2, 0.3, 1.0).unwrap()
    }

    fn linear(p: &MaterialParams) -> StressModel {
        StressModel::Linear {
            lambda: p.lambda,
            mu: p.mu,
        }
    }

    /// u quadratic per component, p linear, constant in time; sources from
    /// the linear model.
    struct InSpace {
        p: MaterialParams,
    }

    impl InSpace {
        fn u(x: &Point2<f64>) -> Vector2<f64> {
            Vector2::new(x.x * x.x + 0.5 * x.x * x.y, -0.3 * x.y * x.y + x.x)
        }
        fn grad() -> Matrix2<f64> {
            // not constant; only the divergence of σ is used below
            Matrix2::zeros()
        }
        fn pressure(x: &Point2<f64>) -> f64 {
            1.0 + 2.0 * x.x - x.y
        }
    }

    impl ProblemData for InSpace {
        fn body_force(&self, _: &Point2<f64>, _: f64) -> Vector2<f64> {
            // σ = 2με + λ div u I with ∇u = [[2x+0.5y, 0.5x], [1, −0.6y]]
            // div σ = μΔu + (μ+λ)∇div u; Δu = (2, −0.6); ∇div u = (2, −0.1)
            let (l, m, a) = (self.p.lambda, self.p.mu, self.p.alpha);
            let _ = Self::grad();
            let div_sigma = Vector2::new(2.0, -0.6) * m + Vector2::new(2.0, -0.1) * (m + l);
            -div_sigma + Vector2::new(2.0, -1.0) * a
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
        fn displacement(&self, x: &Point2<f64>, _: f64) -> Vector2<f64> {
            Self::u(x)
        }
        fn pressure(&self, x: &Point2<f64>, _: f64) -> f64 {
            Self::pressure(x)
        }
    }

    fn stepper(n: usize, model: Option<StressModel>, data: BoundaryData, theta: Theta, steps: usize) -> Stepper {
        let p = params();
        let mesh = Arc::new(Mesh::unit_square(n).unwrap());
        let disc = Discretization::new(mesh, p, model.unwrap_or(linear(&p)), data).unwrap();
        // short steps keep the coupling loop contractive on these coarse meshes
        let grid = TimeGrid::new(0.01 * steps as f64, steps, theta).unwrap();
        Stepper::new(disc, grid, StepperConfig::default()).unwrap()
    }

    #[test]
    fn time_grid_validation() {
        assert!(TimeGrid::from_dt(1.0, 0.3, Theta::One).is_err());
        let g = TimeGrid::from_dt(1.0, 0.25, Theta::Zero).unwrap();
        assert_eq!(g.steps, 4);
        assert_eq!(g.stability_guard(0.5, 1.0), Some(true));
        assert_eq!(g.stability_guard(0.25, 1.0), Some(false));
        assert!("2".parse::<Theta>().unwrap_err().contains("theta"));
    }

    #[test]
    fn zero_problem_stays_zero() {
        for theta in [Theta::Zero, Theta::One] {
            let mut s = stepper(2, None, BoundaryData::zero(), theta, 3);
            let (last, recs) = s.run(|_, _, _| {}).unwrap();
            assert!(last
                .u
                .iter()
                .chain(&last.p)
                .chain(&last.xi)
                .chain(&last.eta)
                .all(|v| *v == 0.0));
            assert_eq!(recs.len(), 3);
        }
    }

    #[test]
    fn constant_pressure_initial_state() {
        struct ConstP;
        impl ProblemData for ConstP {
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
                1.0
            }
        }
        let s = stepper(
            2,
            None,
            BoundaryData::new(BoundaryLayout::all_dirichlet(), Arc::new(ConstP)),
            Theta::One,
            1,
        );
        let st = s.disc.initialize().unwrap();
        let p = params();
        assert!(st.xi.iter().all(|v| (v - p.alpha).abs() < 1e-15));
        assert!(st.eta.iter().all(|v| (v - p.c0).abs() < 1e-15));
        let (pp, qq) = from_pseudo(&st.xi, &st.eta, &s.disc.kappas);
        assert!(pp.iter().zip(&st.p).all(|(a, b)| (a - b).abs() < 1e-13));
        assert!(qq.iter().zip(&st.q).all(|(a, b)| (a - b).abs() < 1e-13));
    }

    #[test]
    fn linear_model_is_exact_in_space_and_one_newton_iteration() {
        let p = params();
        let data = BoundaryData::new(BoundaryLayout::all_dirichlet(), Arc::new(InSpace { p }));
        let mut s = stepper(3, None, data, Theta::One, 2);
        let (last, recs) = s.run(|_, _, _| {}).unwrap();
        let exact_u = s.disc.vspace.interpolate(InSpace::u);
        let exact_p = s.disc.pspace.interpolate_scalar(InSpace::pressure);
        let eu = last
            .u
            .iter()
            .zip(&exact_u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let ep = last
            .p
            .iter()
            .zip(&exact_p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(eu < 1e-10 && ep < 1e-10, "eu {eu:e} ep {ep:e}");
        assert!(recs.iter().all(|r| r.residuals_within(10.0)));
        // from a zero guess the linear Stokes step converges in one update
        let t = s.grid.time(1);
        let load = s.disc.momentum_load(t);
        let cons = s.disc.displacement_constraints(t);
        let p_b = s.disc.boundary_pressure(t);
        let zero_u = vec![0.0; s.disc.u_dofs()];
        let zero_xi = vec![0.0; s.disc.p_dofs()];
        let (u1, _, log) = s
            .stokes_newton_step(&zero_u, &zero_xi, &last.eta, &p_b, &load, &cons, &Cell::new(0))
            .unwrap();
        assert_eq!(log.iterations(), 1);
        let eu = u1.iter().zip(&exact_u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(eu < 1e-10);
    }

    #[test]
    fn diffusion_preserves_constant_under_pure_flux_conditions() {
        let mut layout = BoundaryLayout::all_dirichlet();
        layout.pressure = [BcKind::Neumann; 4];
        let mut s = stepper(3, None, BoundaryData::new(layout, Arc::new(ZeroData)), Theta::Zero, 4);
        let np = s.disc.p_dofs();
        let mut eta = vec![0.37; np];
        let xi = vec![0.0; np];
        let fluid = vec![0.0; np];
        for n in 1..=4 {
            let (e, _) = s.diffusion_step(&eta, &xi, s.grid.time(n), &fluid).unwrap();
            eta = e;
        }
        assert!(eta.iter().all(|v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn stationary_limit_matches_direct_solve() {
        let p = params();
        let data = BoundaryData::new(BoundaryLayout::all_dirichlet(), Arc::new(InSpace { p }));
        let mut s = stepper(4, None, data, Theta::Zero, 1);
        s.grid.dt = 1e14;
        let np = s.disc.p_dofs();
        let xi: Vec<f64> = (0..np).map(|i| 0.01 * i as f64).collect();
        let eta_prev = vec![1.0; np];
        let fluid = vec![0.0; np];
        let (eta, res) = s.diffusion_step(&eta_prev, &xi, 1.0, &fluid).unwrap();
        assert!(res < 1e-10);
        // stationary oracle: (κ₂/μ_f) A η = −(κ₁/μ_f) A ξ with the same constraints
        let k = s.disc.kappas;
        let mut a = s.disc.stiffness_k.clone();
        a.scale(k.kappa2);
        let mut rhs: Vec<f64> = s.disc.stiffness_k.matvec(&xi).iter().map(|v| -k.kappa1 * v).collect();
        apply_dirichlet(&mut a, &mut rhs, &s.disc.eta_constraints(1.0, &xi)).unwrap();
        let direct = crate::fem::solve::solve_linear(&a, &rhs).unwrap();
        let scale = norm2(&direct);
        let diff: f64 = eta
            .iter()
            .zip(&direct)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(diff / scale < 1e-10, "{}", diff / scale);
    }

    #[test]
    fn update_pq_examples() {
        let k = params().kappas().unwrap();
        let (p, q) = update_pq(&[0.0; 3], &[0.0; 3], &[0.0; 3], &k).unwrap();
        assert!(p.iter().chain(&q).all(|v| *v == 0.0));
        let xi = [0.3, -1.2];
        let eta = [2.0, 0.1];
        let (p, q) = update_pq(&xi, &eta, &eta, &k).unwrap();
        let (xi2, eta2) = to_pseudo(&p, &q, &params());
        for i in 0..2 {
            assert!((xi2[i] - xi[i]).abs() < 1e-13 && (eta2[i] - eta[i]).abs() < 1e-13);
        }
        assert!(matches!(
            update_pq(&xi, &eta[..1], &eta, &k),
            Err(StepError::LengthMismatch(..))
        ));
    }

    #[test]
    fn test2_model_negative_shear_is_counted_not_fatal() {
        let p = params();
        let model = StressModel::Test2 {
            lambda: p.lambda,
            dev_sign: DevSign::Positive,
        };
        let mut s = stepper(2, Some(model), BoundaryData::zero(), Theta::Zero, 1);
        let (_, recs) = s.run(|_, _, _| {}).unwrap();
        assert_eq!(recs[0].negative_shear_points, 0);
    }
}
