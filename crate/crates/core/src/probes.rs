//! Randomized and deterministic property probes: coefficient identities,
//! pseudo-variable round trips, stress tangents, assembly against a dense
//! oracle, Newton behaviour and per-step diagnostics of a Test 1 run.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Point2, Vector2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::constitutive::{
    compute_kappas, from_pseudo, monotonicity_probe, to_pseudo, DevSign, MaterialParams, StressModel,
};
use crate::fem::assembly::{assemble_bilinear, mass_kernel, stiffness_kernel};
use crate::fem::quadrature::QuadratureRule;
use crate::fem::space::FunctionSpace;
use crate::fem::sparse::SparseMatrix;
use crate::mesh::Mesh;
use crate::mms::{ErrorAccumulator, ManufacturedCase};
use crate::stepper::{Discretization, State, Stepper, StepperConfig, Theta, TimeGrid};

/// Outcome of one probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl ProbeResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

impl fmt::Display for ProbeResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {} {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbeReport {
    pub results: Vec<ProbeResult>,
}

impl ProbeReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ProbeResult> {
        self.results.iter().filter(|r| !r.passed)
    }
}

impl fmt::Display for ProbeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub seed: u64,
    pub kappa_draws: usize,
    pub tangent_samples: usize,
    pub monotonicity_samples: usize,
    /// Subdivisions of the Test 1 run.
    pub test1_n: usize,
    pub test1_steps: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            seed: 20240607,
            kappa_draws: 1000,
            tangent_samples: 100,
            monotonicity_samples: 200,
            test1_n: 8,
            test1_steps: 64,
        }
    }
}

pub const KAPPA_TOL: f64 = 1e-13;
pub const TANGENT_TOL: f64 = 1e-6;
pub const ORACLE_TOL: f64 = 1e-12;
/// Residual norms below this are treated as round-off in the
/// quadratic-convergence check.
pub const QUADRATIC_FLOOR: f64 = 1e-12;
/// Largest accepted `r_{k+1}/r_k²`.
pub const QUADRATIC_BOUND: f64 = 1e6;

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn random_params<R: Rng>(rng: &mut R) -> (f64, f64, f64) {
    let alpha = rng.gen_range(0.05..=1.0);
    let lambda = log_uniform(rng, 1e-4, 1e3);
    let c0 = log_uniform(rng, 1e-6, 1.0);
    (alpha, lambda, c0)
}

/// `ακ₁ + c₀κ₂ = 1`, `λκ₁ = ακ₂` and `c₀κ₁ = ακ₃`, each relative to the
/// size of its terms.
pub fn kappa_identities<R: Rng>(draws: usize, rng: &mut R) -> ProbeResult {
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let (alpha, lambda, c0) = random_params(rng);
        let k = compute_kappas(lambda, alpha, c0).expect("positive denominator");
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        let e1 = (alpha * k.kappa1 + c0 * k.kappa2 - 1.0).abs();
        worst = worst
            .max(e1)
            .max(rel(lambda * k.kappa1, alpha * k.kappa2))
            .max(rel(c0 * k.kappa1, alpha * k.kappa3));
    }
    ProbeResult::new(
        "kappa_identities",
        worst <= KAPPA_TOL,
        format!("draws={draws} max_err={worst:.3e} tol={KAPPA_TOL:.0e}"),
    )
}

/// `(p, q) → (ξ, η) → (p, q)`, relative to the magnitude of the summed terms.
pub fn pseudo_round_trip<R: Rng>(draws: usize, rng: &mut R) -> ProbeResult {
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let (alpha, lambda, c0) = random_params(rng);
        let params = MaterialParams::from_lame(lambda, 1.0, alpha, c0, 1.0, 1.0).expect("valid draw");
        let k = params.kappas().expect("positive denominator");
        let p: Vec<f64> = (0..8).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let q: Vec<f64> = (0..8).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let (xi, eta) = to_pseudo(&p, &q, &params);
        let (p2, q2) = from_pseudo(&xi, &eta, &k);
        for i in 0..p.len() {
            let sp = (k.kappa1 * xi[i]).abs() + (k.kappa2 * eta[i]).abs();
            let sq = (k.kappa1 * eta[i]).abs() + (k.kappa3 * xi[i]).abs();
            worst = worst
                .max((p2[i] - p[i]).abs() / sp.max(f64::MIN_POSITIVE))
                .max((q2[i] - q[i]).abs() / sq.max(f64::MIN_POSITIVE));
        }
    }
    ProbeResult::new(
        "pseudo_round_trip",
        worst <= KAPPA_TOL,
        format!("draws={draws} max_err={worst:.3e} tol={KAPPA_TOL:.0e}"),
    )
}

/// Stress laws covered by the tangent and monotonicity probes.
pub fn probe_models() -> Vec<StressModel> {
    let t1 = ManufacturedCase::test1();
    let t2 = ManufacturedCase::test2(DevSign::AsPrinted);
    vec![
        StressModel::Linear { lambda: 1.3, mu: 0.7 },
        t1.model,
        t2.model,
        StressModel::Test2 {
            lambda: t2.model.lambda(),
            dev_sign: DevSign::Positive,
        },
    ]
}

fn model_label(m: &StressModel) -> String {
    match m {
        StressModel::Test2 { dev_sign, .. } => format!("test2_{dev_sign}"),
        other => other.name().to_string(),
    }
}

/// Central differences of `N` against the analytic tangent.
pub fn tangent_fd<R: Rng>(model: &StressModel, samples: usize, rng: &mut R) -> ProbeResult {
    const STEP: f64 = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let g = Matrix2::from_fn(|_, _| rng.gen_range(-0.5..0.5));
        let w = Matrix2::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let exact = model.tangent(&g, &w);
        let fd = (model.stress_n(&(g + w * STEP)) - model.stress_n(&(g - w * STEP))) / (2.0 * STEP);
        let scale = exact
            .norm()
            .max(1e-8 * model.stress_n(&g).norm())
            .max(f64::MIN_POSITIVE);
        worst = worst.max((fd - exact).norm() / scale);
    }
    ProbeResult::new(
        &format!("tangent_fd[{}]", model_label(model)),
        worst <= TANGENT_TOL,
        format!("samples={samples} max_rel_gap={worst:.3e} tol={TANGENT_TOL:.0e}"),
    )
}

/// Coercivity and monotonicity quotients on random gradients. Only the
/// linear law is required to pass; the nonlinear laws are reported.
pub fn monotonicity<R: Rng>(model: &StressModel, samples: usize, rng: &mut R) -> ProbeResult {
    let report = monotonicity_probe(model, samples, 0.5, rng);
    let required = model.is_linear();
    ProbeResult::new(
        &format!("monotonicity[{}]", model_label(model)),
        !required || !report.violated(),
        format!(
            "samples={samples} min_coercivity={:.3e} min_monotonicity={:.3e} max_lipschitz={:.3e} violations={}{}",
            report.min_coercivity,
            report.min_monotonicity,
            report.max_lipschitz,
            report.violations,
            if required { "" } else { " (informational)" }
        ),
    )
}

/// Polynomial in barycentric coordinates: `Σ c λ₀^a λ₁^b λ₂^c`.
#[derive(Debug, Clone, Default)]
struct BaryPoly(Vec<([u32; 3], f64)>);

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

impl BaryPoly {
    fn term(exps: [u32; 3], c: f64) -> Self {
        Self(vec![(exps, c)])
    }

    fn add(mut self, other: &BaryPoly) -> Self {
        self.0.extend_from_slice(&other.0);
        self
    }

    fn scale(&self, s: f64) -> Self {
        Self(self.0.iter().map(|(e, c)| (*e, c * s)).collect())
    }

    fn mul(&self, other: &BaryPoly) -> Self {
        let mut out = Vec::with_capacity(self.0.len() * other.0.len());
        for (ea, ca) in &self.0 {
            for (eb, cb) in &other.0 {
                out.push(([ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]], ca * cb));
            }
        }
        Self(out)
    }

    fn d_lambda(&self, m: usize) -> Self {
        Self(
            self.0
                .iter()
                .filter(|(e, _)| e[m] > 0)
                .map(|(e, c)| {
                    let mut e2 = *e;
                    e2[m] -= 1;
                    (e2, c * f64::from(e[m]))
                })
                .collect(),
        )
    }

    /// `∫_T` with `∫ λ₀^a λ₁^b λ₂^c = 2|T| a! b! c! / (a + b + c + 2)!`.
    fn integrate(&self, area: f64) -> f64 {
        self.0
            .iter()
            .map(|(e, c)| {
                c * 2.0 * area * factorial(e[0]) * factorial(e[1]) * factorial(e[2]) / factorial(e[0] + e[1] + e[2] + 2)
            })
            .sum()
    }
}

/// Per-triangle data of the dense oracle.
struct OracleElement {
    area: f64,
    /// P2 basis (vertices, then edges (0,1), (1,2), (2,0)) and x/y derivatives.
    p2: Vec<(BaryPoly, [BaryPoly; 2])>,
    p1: Vec<BaryPoly>,
    p2_nodes: [usize; 6],
    vertices: [usize; 3],
}

fn oracle_element(mesh: &Mesh, t: usize) -> OracleElement {
    let tri = mesh.triangles()[t];
    let p: Vec<Point2<f64>> = tri.iter().map(|&v| mesh.vertices()[v]).collect();
    let jac = Matrix2::from_columns(&[p[1] - p[0], p[2] - p[0]]);
    let area = 0.5 * jac.determinant().abs();
    let inv = jac.try_inverse().expect("non-degenerate triangle");
    let g1 = Vector2::new(inv[(0, 0)], inv[(0, 1)]);
    let g2 = Vector2::new(inv[(1, 0)], inv[(1, 1)]);
    let grad_l = [-(g1 + g2), g1, g2];
    let unit = |m: usize| {
        let mut e = [0; 3];
        e[m] = 1;
        e
    };
    let lam = |m: usize| BaryPoly::term(unit(m), 1.0);
    let mut p2_phi = Vec::new();
    for k in 0..3 {
        let mut sq = [0; 3];
        sq[k] = 2;
        p2_phi.push(BaryPoly::term(sq, 2.0).add(&lam(k).scale(-1.0)));
    }
    for (a, b) in [(0, 1), (1, 2), (2, 0)] {
        p2_phi.push(lam(a).mul(&lam(b)).scale(4.0));
    }
    let gradient = |phi: &BaryPoly| -> [BaryPoly; 2] {
        let mut out = [BaryPoly::default(), BaryPoly::default()];
        for m in 0..3 {
            let d = phi.d_lambda(m);
            for (c, o) in out.iter_mut().enumerate() {
                *o = std::mem::take(o).add(&d.scale(grad_l[m][c]));
            }
        }
        out
    };
    let p2 = p2_phi.into_iter().map(|phi| {
        let g = gradient(&phi);
        (phi, g)
    });
    let edge_of = |a: usize, b: usize| {
        mesh.edges()
            .iter()
            .position(|e| (e.vertices[0] == a && e.vertices[1] == b) || (e.vertices[0] == b && e.vertices[1] == a))
            .expect("triangle edge present")
    };
    let nv = mesh.vertex_count();
    OracleElement {
        area,
        p2: p2.collect(),
        p1: (0..3).map(lam).collect(),
        p2_nodes: [
            tri[0],
            tri[1],
            tri[2],
            nv + edge_of(tri[0], tri[1]),
            nv + edge_of(tri[1], tri[2]),
            nv + edge_of(tri[2], tri[0]),
        ],
        vertices: tri,
    }
}

/// Largest entrywise gap between a sparse matrix and a dense one.
fn max_gap(a: &SparseMatrix, dense: &[Vec<f64>]) -> f64 {
    if a.nrows() != dense.len() || dense.first().map_or(0, Vec::len) != a.ncols() {
        return f64::INFINITY;
    }
    let ad = a.to_dense();
    ad.iter()
        .zip(dense)
        .flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

/// Dense matrices of the two-triangle oracle: P2 vector stiffness and mass,
/// divergence (P1 rows, P2 columns), P1 mass and the saddle Jacobian of the
/// linear law `[2μ(ε, ε), −Bᵀ; B, C]` with `C` the P1 mass scaled per column
/// by `κ₃` or, at pressure-data vertices, `κ₃ + κ₁²/κ₂`.
pub struct DenseOracle {
    pub stiffness: Vec<Vec<f64>>,
    pub vector_mass: Vec<Vec<f64>>,
    pub divergence: Vec<Vec<f64>>,
    pub mass: Vec<Vec<f64>>,
    pub saddle: Vec<Vec<f64>>,
}

pub fn dense_oracle(mesh: &Mesh, mu: f64, kappa3: f64, kappa_b: f64, pressure_vertices: &[usize]) -> DenseOracle {
    let nv = mesh.vertex_count();
    let nu = 2 * (nv + mesh.edge_count());
    let zeros = |r: usize, c: usize| vec![vec![0.0; c]; r];
    let (mut k, mut mv, mut b, mut m, mut s) = (
        zeros(nu, nu),
        zeros(nu, nu),
        zeros(nv, nu),
        zeros(nv, nv),
        zeros(nu + nv, nu + nv),
    );
    for t in 0..mesh.triangle_count() {
        let el = oracle_element(mesh, t);
        let a = el.area;
        // Vector shape (node i, component c): value φ e_c, ∂_d v_c = ∂_d φ.
        for (i, (phi_i, g_i)) in el.p2.iter().enumerate() {
            for (j, (phi_j, g_j)) in el.p2.iter().enumerate() {
                let grad_dot = g_i[0].mul(&g_j[0]).add(&g_i[1].mul(&g_j[1])).integrate(a);
                let mass = phi_i.mul(phi_j).integrate(a);
                for ci in 0..2 {
                    for cj in 0..2 {
                        let (r, c) = (2 * el.p2_nodes[i] + ci, 2 * el.p2_nodes[j] + cj);
                        if ci == cj {
                            k[r][c] += grad_dot;
                            mv[r][c] += mass;
                        }
                        // ε(v_i):ε(v_j) = ½(δ ∇φ_i·∇φ_j + ∂_{cj}φ_i ∂_{ci}φ_j).
                        let cross = g_i[cj].mul(&g_j[ci]).integrate(a);
                        let strain = 0.5 * (if ci == cj { grad_dot } else { 0.0 } + cross);
                        s[r][c] += 2.0 * mu * strain;
                    }
                }
            }
            for (l, psi) in el.p1.iter().enumerate() {
                for c in 0..2 {
                    let v = g_i[c].mul(psi).integrate(a);
                    let (row, col) = (el.vertices[l], 2 * el.p2_nodes[i] + c);
                    b[row][col] += v;
                    s[col][nu + row] -= v;
                    s[nu + row][col] += v;
                }
            }
        }
        for (i, pi) in el.p1.iter().enumerate() {
            for (j, pj) in el.p1.iter().enumerate() {
                let v = pi.mul(pj).integrate(a);
                let (r, c) = (el.vertices[i], el.vertices[j]);
                m[r][c] += v;
                let coef = if pressure_vertices.contains(&c) {
                    kappa3 + kappa_b
                } else {
                    kappa3
                };
                s[nu + r][nu + c] += coef * v;
            }
        }
    }
    DenseOracle {
        stiffness: k,
        vector_mass: mv,
        divergence: b,
        mass: m,
        saddle: s,
    }
}

/// Assembled operators on the two-triangle mesh against [`dense_oracle`].
pub fn assembly_oracle() -> ProbeResult {
    let mesh = Arc::new(Mesh::unit_square(1).expect("two-triangle mesh"));
    let case = ManufacturedCase::polynomial();
    let rule = QuadratureRule::default();
    let vspace = FunctionSpace::p2_vector(mesh.clone());
    let disc = match Discretization::new(mesh.clone(), case.params, case.model, case.boundary_data()) {
        Ok(d) => d,
        Err(e) => return ProbeResult::new("assembly_oracle", false, format!("setup failed: {e}")),
    };
    let k = disc.kappas;
    let kb = if disc.pressure_vertices().is_empty() {
        0.0
    } else {
        k.kappa1 * k.kappa1 / k.kappa2
    };
    let oracle = dense_oracle(&mesh, case.params.mu, k.kappa3, kb, disc.pressure_vertices());
    let stiffness = assemble_bilinear(&rule, &vspace, &vspace, stiffness_kernel).expect("assembly");
    let vmass = assemble_bilinear(&rule, &vspace, &vspace, mass_kernel).expect("assembly");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x: Vec<f64> = (0..disc.u_dofs() + disc.p_dofs())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let gaps = [
        ("stiffness", max_gap(&stiffness, &oracle.stiffness)),
        ("vector_mass", max_gap(&vmass, &oracle.vector_mass)),
        ("divergence", max_gap(&disc.divergence, &oracle.divergence)),
        ("mass", max_gap(&disc.mass, &oracle.mass)),
        ("saddle_jacobian", max_gap(&disc.stokes_jacobian(&x), &oracle.saddle)),
    ];
    let worst = gaps.iter().map(|g| g.1).fold(0.0, f64::max);
    let detail = gaps
        .iter()
        .map(|(n, g)| format!("{n}={g:.2e}"))
        .collect::<Vec<_>>()
        .join(" ");
    ProbeResult::new(
        "assembly_oracle",
        worst <= ORACLE_TOL,
        format!("{detail} tol={ORACLE_TOL:.0e}"),
    )
}

/// Linear law: from a zero guess one Newton update solves a step, for
/// `θ = 0` and `θ = 1`.
pub fn newton_linear_one_iteration() -> ProbeResult {
    let case = ManufacturedCase::polynomial();
    let mesh = Arc::new(Mesh::unit_square(4).expect("mesh"));
    let mut counts = Vec::new();
    for theta in [Theta::Zero, Theta::One] {
        let run = || -> Result<usize, String> {
            let disc = Discretization::new(mesh.clone(), case.params, case.model, case.boundary_data())
                .map_err(|e| e.to_string())?;
            let grid = TimeGrid::new(case.t_final, 4, theta).map_err(|e| e.to_string())?;
            let mut st = Stepper::new(disc, grid, StepperConfig::default()).map_err(|e| e.to_string())?;
            let s0 = st.initialize().map_err(|e| e.to_string())?;
            let zero = State {
                u: vec![0.0; s0.u.len()],
                xi: vec![0.0; s0.xi.len()],
                eta: vec![0.0; s0.eta.len()],
                p: vec![0.0; s0.p.len()],
                q: vec![0.0; s0.q.len()],
                time: 0.0,
            };
            let (_, rec) = st.advance(&zero, 1).map_err(|e| e.to_string())?;
            Ok(rec.newton_logs.iter().map(|l| l.iterations()).max().unwrap_or(0))
        };
        counts.push(run());
    }
    let ok = counts.iter().all(|c| matches!(c, Ok(1)));
    let fmt_count = |c: &Result<usize, String>| match c {
        Ok(k) => k.to_string(),
        Err(e) => format!("error({e})"),
    };
    ProbeResult::new(
        "newton_linear_one_iteration",
        ok,
        format!(
            "theta0_iterations={} theta1_iterations={}",
            fmt_count(&counts[0]),
            fmt_count(&counts[1])
        ),
    )
}

/// Quadratic convergence, residual re-assembly and energy boundedness on
/// a Test 1 run with exact Newton and `θ = 1`.
pub fn test1_run_checks(n: usize, steps: usize) -> Vec<ProbeResult> {
    let names = [
        "newton_quadratic_test1",
        "residual_reassembly_test1",
        "energy_bounded_test1",
    ];
    let fail_all = |msg: String| names.iter().map(|n| ProbeResult::new(n, false, msg.clone())).collect();
    let case = ManufacturedCase::test1();
    let mesh = match Mesh::unit_square(n) {
        Ok(m) => Arc::new(m),
        Err(e) => return fail_all(format!("mesh: {e}")),
    };
    let disc = match Discretization::new(mesh, case.params, case.model, case.boundary_data()) {
        Ok(d) => d,
        Err(e) => return fail_all(format!("setup: {e}")),
    };
    let grid = match TimeGrid::new(case.t_final, steps, Theta::One) {
        Ok(g) => g,
        Err(e) => return fail_all(format!("grid: {e}")),
    };
    let rule = QuadratureRule::of_degree(5);
    let mut acc = ErrorAccumulator::new(&disc, &rule, grid.dt);
    let mut st = match Stepper::new(disc, grid, StepperConfig::default()) {
        Ok(s) => s,
        Err(e) => return fail_all(format!("setup: {e}")),
    };
    let mut prev: Option<State> = None;
    let mut initial_energy = 0.0;
    let mut worst_stokes = 0.0f64;
    let mut worst_diffusion = 0.0f64;
    let dt = grid.dt;
    let result = st.run(|disc, state, rec| {
        match (rec, &prev) {
            (None, _) => {
                let (_, eta, xi) = disc.energy_terms(&state.u, &state.xi, &state.eta);
                initial_energy = eta + xi;
            }
            (Some(rec), Some(before)) => {
                let rs = disc.stokes_residual_norm(&state.u, &state.xi, &state.eta, state.time);
                let rd = disc.diffusion_residual_norm(&state.eta, &before.eta, &state.xi, state.time, dt);
                worst_stokes = worst_stokes.max(rs / rec.stokes_tolerance);
                worst_diffusion = worst_diffusion.max(rd / rec.diffusion_tolerance);
                acc.push(disc, &case, state);
            }
            (Some(_), None) => {}
        }
        prev = Some(state.clone());
    });
    let records = match result {
        Ok((_, r)) => r,
        Err(e) => return fail_all(format!("run failed: {e}")),
    };
    let ratios: Vec<f64> = records
        .iter()
        .flat_map(|r| r.newton_logs.iter())
        .flat_map(|l| l.quadratic_ratios(QUADRATIC_FLOOR).into_iter().skip(1))
        .collect();
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    let quad_ok = !ratios.is_empty() && ratios.iter().all(|c| c.is_finite()) && max_ratio <= QUADRATIC_BOUND;
    let bound = 2.0 * initial_energy.max(acc.exact_energy_max());
    let max_energy = records.iter().map(|r| r.energy.total()).fold(0.0, f64::max);
    let energy_ok = crate::stepper::energy_bounded(&records, bound);
    vec![
        ProbeResult::new(
            names[0],
            quad_ok,
            format!(
                "n={n} steps={steps} ratios={} max_ratio={max_ratio:.3e} bound={QUADRATIC_BOUND:.0e}",
                ratios.len()
            ),
        ),
        ProbeResult::new(
            names[1],
            worst_stokes <= 10.0 && worst_diffusion <= 10.0,
            format!("max_stokes_over_tol={worst_stokes:.3} max_diffusion_over_tol={worst_diffusion:.3} limit=10"),
        ),
        ProbeResult::new(
            names[2],
            energy_ok,
            format!("max_energy={max_energy:.6e} bound={bound:.6e}"),
        ),
    ]
}

/// Every probe, in a fixed order, from one seed.
pub fn run_probes(config: &ProbeConfig) -> ProbeReport {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut results = vec![
        kappa_identities(config.kappa_draws, &mut rng),
        pseudo_round_trip(config.kappa_draws, &mut rng),
    ];
    for model in probe_models() {
        results.push(tangent_fd(&model, config.tangent_samples, &mut rng));
    }
    for model in probe_models() {
        results.push(monotonicity(&model, config.monotonicity_samples, &mut rng));
    }
    results.push(assembly_oracle());
    results.push(newton_linear_one_iteration());
    results.extend(test1_run_checks(config.test1_n, config.test1_steps));
    ProbeReport { results }
}
