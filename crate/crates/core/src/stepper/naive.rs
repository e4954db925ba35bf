//! Equal-order P1–P1 discretization of the original displacement–pressure
//! system, backward Euler in time, Newton on the stress. No reformulation and
//! no stabilization; kept as the reference for pressure oscillations.
//!
//! Unknown layout: interleaved P1 displacement dofs, then P1 pressure.

use std::sync::Arc;

use nalgebra::Matrix2;

use super::newton::JacobianSolver;
use super::newton::{newton_solve, NewtonLog};
use super::problem::{BcKind, BoundaryData};
use super::{StepError, StepperConfig, TimeGrid};
use crate::constitutive::{MaterialParams, StressModel};
use crate::fem::assembly::{assemble_boundary, block_pattern, ElementValues};
use crate::fem::dirichlet::DirichletSet;
use crate::fem::quadrature::QuadratureRule;
use crate::fem::space::FunctionSpace;
use crate::fem::sparse::{norm2, SparseMatrix};
use crate::mesh::Mesh;

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveState {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveRecord {
    pub step: usize,
    pub time: f64,
    pub newton: NewtonLog,
    /// Residual norm of the re-assembled system at the accepted solution.
    pub residual: f64,
}

pub struct NaiveSolver {
    pub vspace: FunctionSpace,
    pub pspace: FunctionSpace,
    pub params: MaterialParams,
    pub model: StressModel,
    pub data: BoundaryData,
    pub grid: TimeGrid,
    pub config: StepperConfig,
    vcache: Vec<ElementValues>,
    pcache: Vec<ElementValues>,
    pattern: SparseMatrix,
    solver: JacobianSolver,
    /// `(dof, vertex, component)` for displacement, then pressure vertices.
    u_fixed: Vec<(usize, usize, usize)>,
    p_fixed: Vec<usize>,
}

impl std::fmt::Debug for NaiveSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NaiveSolver")
            .field("u_dofs", &self.vspace.dof_count())
            .field("p_dofs", &self.pspace.dof_count())
            .finish_non_exhaustive()
    }
}

impl NaiveSolver {
    pub fn new(
        mesh: Arc<Mesh>,
        params: MaterialParams,
        model: StressModel,
        data: BoundaryData,
        grid: TimeGrid,
        config: StepperConfig,
    ) -> Result<Self, StepError> {
        params.validate()?;
        config.newton.validate().map_err(StepError::Setup)?;
        if !data.layout.is_supported() {
            return Err(StepError::Setup(
                "each displacement component needs Dirichlet data on at least one segment".into(),
            ));
        }
        let vspace = FunctionSpace::p1_vector(mesh.clone());
        let pspace = FunctionSpace::p1_scalar(mesh.clone());
        let rule = QuadratureRule::default();
        let vcache = (0..mesh.triangle_count())
            .map(|t| ElementValues::new(&vspace, t, &rule))
            .collect();
        let pcache = (0..mesh.triangle_count())
            .map(|t| ElementValues::new(&pspace, t, &rule))
            .collect();
        let (n, _, rows) = block_pattern(&[&vspace, &pspace]);
        let mut u_fixed = std::collections::BTreeSet::new();
        let mut p_fixed = std::collections::BTreeSet::new();
        for (e, tag) in mesh.boundary_edges() {
            for v in mesh.edges()[e].vertices {
                for c in 0..2 {
                    if data.layout.displacement_kind(tag, c) == BcKind::Dirichlet {
                        u_fixed.insert((2 * v + c, v, c));
                    }
                }
                if data.layout.pressure_kind(tag) == BcKind::Dirichlet {
                    p_fixed.insert(v);
                }
            }
        }
        Ok(Self {
            vspace,
            pspace,
            params,
            model,
            data,
            grid,
            solver: JacobianSolver::new(config.solver),
            config,
            vcache,
            pcache,
            pattern: SparseMatrix::with_pattern(n, n, rows),
            u_fixed: u_fixed.into_iter().collect(),
            p_fixed: p_fixed.into_iter().collect(),
        })
    }

    pub fn initialize(&self) -> NaiveState {
        let d = &self.data.data;
        NaiveState {
            u: self.vspace.interpolate(|x| d.initial_displacement(x)),
            p: self.pspace.interpolate_scalar(|x| d.initial_pressure(x)),
            time: 0.0,
        }
    }

    fn constraints(&self, t: f64) -> DirichletSet {
        let d = &self.data.data;
        let nu = self.vspace.dof_count();
        let verts = self.vspace.mesh().vertices();
        let mut set = DirichletSet::new();
        for &(dof, v, c) in &self.u_fixed {
            set.insert(dof, d.displacement(&verts[v], t)[c]).expect("unique dofs");
        }
        for &v in &self.p_fixed {
            set.insert(nu + v, d.pressure(&verts[v], t)).expect("unique dofs");
        }
        set
    }

    /// External load `[(f, v) + ⟨f₁, v⟩; (φ, ψ) + (Kρ_f g/μ_f, ∇ψ) − ⟨φ₁, ψ⟩]`.
    fn load(&self, t: f64) -> Vec<f64> {
        let d = &self.data.data;
        let nu = self.vspace.dof_count();
        let mut out = vec![0.0; nu + self.pspace.dof_count()];
        let gk = self.params.rho_f_g * (self.params.k / self.params.mu_f);
        for tri in 0..self.vcache.len() {
            let (ev, ep) = (&self.vcache[tri], &self.pcache[tri]);
            let (vd, pd) = (self.vspace.triangle_dofs(tri), self.pspace.triangle_dofs(tri));
            for qp in 0..ev.points.len() {
                let w = ev.weights[qp];
                let f = d.body_force(&ev.points[qp], t);
                for (s, &i) in ev.at(qp).iter().zip(vd) {
                    out[i] += w * f.dot(&s.value);
                }
                let phi = d.fluid_source(&ev.points[qp], t);
                for (s, &i) in ep.at(qp).iter().zip(pd) {
                    out[nu + i] += w * (phi * s.phi() + gk.dot(&s.grad_phi()));
                }
            }
        }
        let layout = self.data.layout;
        let neumann = |tag, c| layout.displacement_kind(tag, c) == BcKind::Neumann;
        let (head, tail) = out.split_at_mut(nu);
        assemble_boundary(
            &self.vspace,
            3,
            |tag| neumann(tag, 0) || neumann(tag, 1),
            |bp, s| {
                let tr = d.traction(&bp.x, &bp.normal, t);
                (0..2).filter(|&c| neumann(bp.tag, c)).map(|c| tr[c] * s.value[c]).sum()
            },
            head,
        );
        assemble_boundary(
            &self.pspace,
            3,
            |tag| layout.pressure_kind(tag) == BcKind::Neumann,
            |bp, s| -d.flux(&bp.x, &bp.normal, t) * s.phi(),
            tail,
        );
        out
    }

    fn gradient(&self, t: usize, qp: usize, u: &[f64]) -> Matrix2<f64> {
        let mut g = Matrix2::zeros();
        for (s, &d) in self.vcache[t].at(qp).iter().zip(self.vspace.triangle_dofs(t)) {
            g += s.grad * u[d];
        }
        g
    }

    fn scalar(&self, t: usize, qp: usize, p: &[f64]) -> (f64, nalgebra::Vector2<f64>) {
        let mut v = 0.0;
        let mut g = nalgebra::Vector2::zeros();
        for (s, &d) in self.pcache[t].at(qp).iter().zip(self.pspace.triangle_dofs(t)) {
            v += s.phi() * p[d];
            g += s.grad_phi() * p[d];
        }
        (v, g)
    }

    /// Residual at `x = [u; p]` given the previous level and the load.
    pub fn residual(&self, x: &[f64], prev: &NaiveState, load: &[f64]) -> Vec<f64> {
        let nu = self.vspace.dof_count();
        let (u, p) = x.split_at(nu);
        let (alpha, c0) = (self.params.alpha, self.params.c0);
        let kf = self.params.k / self.params.mu_f;
        let dt = self.grid.dt;
        let mut r = vec![0.0; x.len()];
        for t in 0..self.vcache.len() {
            let (ev, ep) = (&self.vcache[t], &self.pcache[t]);
            let (vd, pd) = (self.vspace.triangle_dofs(t), self.pspace.triangle_dofs(t));
            for qp in 0..ev.points.len() {
                let w = ev.weights[qp];
                let g = self.gradient(t, qp, u);
                let g0 = self.gradient(t, qp, &prev.u);
                let (pv, pg) = self.scalar(t, qp, p);
                let (p0, _) = self.scalar(t, qp, &prev.p);
                let sigma = self.model.sigma(&g);
                for (s, &i) in ev.at(qp).iter().zip(vd) {
                    r[i] += w * (sigma.dot(&s.strain()) - alpha * pv * s.div());
                }
                let storage = (c0 * (pv - p0) + alpha * (g.trace() - g0.trace())) / dt;
                for (s, &i) in ep.at(qp).iter().zip(pd) {
                    r[nu + i] += w * (storage * s.phi() + kf * pg.dot(&s.grad_phi()));
                }
            }
        }
        for (ri, l) in r.iter_mut().zip(load) {
            *ri -= l;
        }
        r
    }

    pub fn jacobian(&self, x: &[f64]) -> SparseMatrix {
        let nu = self.vspace.dof_count();
        let (alpha, c0, lambda) = (self.params.alpha, self.params.c0, self.model.lambda());
        let kf = self.params.k / self.params.mu_f;
        let dt = self.grid.dt;
        let mut jac = self.pattern.clone();
        for t in 0..self.vcache.len() {
            let (ev, ep) = (&self.vcache[t], &self.pcache[t]);
            let (vd, pd) = (self.vspace.triangle_dofs(t), self.pspace.triangle_dofs(t));
            for qp in 0..ev.points.len() {
                let w = ev.weights[qp];
                let g = self.gradient(t, qp, &x[..nu]);
                let (vs, ps) = (ev.at(qp), ep.at(qp));
                for (sj, &j) in vs.iter().zip(vd) {
                    let dsig = self.model.tangent(&g, &sj.grad) + Matrix2::identity() * (lambda * sj.div());
                    for (si, &i) in vs.iter().zip(vd) {
                        jac.add(i, j, w * dsig.dot(&si.strain())).expect("pattern");
                    }
                    for (sk, &k) in ps.iter().zip(pd) {
                        jac.add(nu + k, j, w * alpha * sj.div() * sk.phi() / dt)
                            .expect("pattern");
                        jac.add(j, nu + k, -w * alpha * sk.phi() * sj.div()).expect("pattern");
                    }
                }
                for (sk, &k) in ps.iter().zip(pd) {
                    for (sl, &l) in ps.iter().zip(pd) {
                        let v = c0 / dt * sk.phi() * sl.phi() + kf * sk.grad_phi().dot(&sl.grad_phi());
                        jac.add(nu + k, nu + l, w * v).expect("pattern");
                    }
                }
            }
        }
        jac
    }

    pub fn advance(&mut self, prev: &NaiveState, step: usize) -> Result<(NaiveState, NaiveRecord), StepError> {
        let t = self.grid.time(step);
        let load = self.load(t);
        let fixed = self.constraints(t);
        let nu = self.vspace.dof_count();
        let mut x = prev.u.clone();
        x.extend_from_slice(&prev.p);
        for (d, v) in fixed.iter() {
            x[d] = v;
        }
        let load_norm = norm2(&load);
        let mut solver = std::mem::take(&mut self.solver);
        let this = &*self;
        let result = newton_solve(
            &mut x,
            &fixed,
            load_norm,
            &this.config.newton,
            &mut solver,
            |x| this.residual(x, prev, &load),
            |x| this.jacobian(x),
        );
        self.solver = solver;
        let log = result.map_err(|source| StepError::Newton { step, source })?;
        let mut r = self.residual(&x, prev, &load);
        for d in fixed.dofs() {
            r[d] = 0.0;
        }
        let residual = norm2(&r);
        let p = x.split_off(nu);
        Ok((
            NaiveState { u: x, p, time: t },
            NaiveRecord {
                step,
                time: t,
                newton: log,
                residual,
            },
        ))
    }

    /// Full trajectory, initial level included.
    pub fn run(&mut self) -> Result<(Vec<NaiveState>, Vec<NaiveRecord>), StepError> {
        let mut states = vec![self.initialize()];
        let mut records = Vec::with_capacity(self.grid.steps);
        for n in 1..=self.grid.steps {
            let (s, r) = self.advance(states.last().expect("nonempty"), n)?;
            states.push(s);
            records.push(r);
        }
        Ok((states, records))
    }
}
