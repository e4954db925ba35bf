//! Subcommand bodies. All files of a run are written from this thread.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use porofem::mesh::Mesh;
use porofem::mms::output::TV_SAMPLES;
use porofem::mms::{convergence_study, oscillation_comparison, GridSnapshot, MmsError, PointLocator};
use porofem::probes::{run_probes, ProbeConfig};
use porofem::stepper::write_step_log;

use crate::config::{ConfigError, RunConfig};

/// Grid resolution of the SVG snapshots.
const SNAPSHOT_GRID: usize = 64;

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Io(PathBuf, io::Error),
    Solver(String),
    Probes(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(..) => 1,
            CliError::Solver(_) => 2,
            CliError::Probes(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Solver(m) => write!(f, "solver failure: {m}"),
            CliError::Probes(n) => write!(f, "{n} probe(s) failed"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<MmsError> for CliError {
    fn from(e: MmsError) -> Self {
        if e.is_solver_failure() {
            CliError::Solver(e.to_string())
        } else {
            CliError::Config(ConfigError {
                key: "case".into(),
                message: e.to_string(),
            })
        }
    }
}

/// Sole writer for one run directory.
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    /// Creates `output/run_name` (or a timestamped name) and echoes the
    /// resolved configuration into it.
    pub fn create(command: &str, config: &RunConfig) -> Result<Self, CliError> {
        let name = config.run_name.clone().unwrap_or_else(|| {
            let secs = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            format!("{command}-{}-{secs}", config.case)
        });
        let path = config.output.join(name);
        fs::create_dir_all(&path).map_err(|e| CliError::Io(path.clone(), e))?;
        let dir = Self { path };
        dir.write("config.txt", |w| w.write_all(config.echo().as_bytes()))?;
        Ok(dir)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write<F>(&self, name: &str, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
    {
        let path = self.path.join(name);
        let io_err = |e| CliError::Io(path.clone(), e);
        let mut w = BufWriter::new(File::create(&path).map_err(io_err)?);
        body(&mut w).and_then(|_| w.flush()).map_err(io_err)
    }
}

fn svg(dir: &RunDir, name: &str, snapshot: &GridSnapshot, title: &str) -> Result<(), CliError> {
    let text = snapshot.to_svg(title);
    dir.write(name, |w| w.write_all(text.as_bytes()))
}

/// Convergence study: CSV report, per-level step logs and pressure
/// snapshots.
pub fn run(config: &RunConfig) -> Result<(), CliError> {
    let case = config.case()?;
    let study = config.study()?;
    let dir = RunDir::create("run", config)?;
    let mut written: Result<(), CliError> = Ok(());
    let result = convergence_study(&case, &study, |level| {
        if written.is_err() {
            return;
        }
        written = (|| {
            dir.write(&format!("steps_n{}.csv", level.n), |w| {
                write_step_log(&level.records, w)
            })?;
            let loc = PointLocator::new(level.mesh.clone());
            let snap = GridSnapshot::from_p1(&loc, &level.final_state.p, SNAPSHOT_GRID);
            svg(
                &dir,
                &format!("p_n{}.svg", level.n),
                &snap,
                &format!("pressure, n = {}, t = {}", level.n, case.t_final),
            )
        })();
        println!(
            "n={} h={:.6} steps={} err_u_L2H1={:.6e} err_p_L2H1={:.6e} ({:.1}s)",
            level.n, level.h, level.grid.steps, level.err_u_l2h1, level.err_p_l2h1, level.seconds
        );
    });
    written?;
    let exact = GridSnapshot::from_fn(SNAPSHOT_GRID, |x| case.p(x, case.t_final));
    svg(
        &dir,
        "p_exact.svg",
        &exact,
        &format!("exact pressure, t = {}", case.t_final),
    )?;
    let report = result?;
    dir.write("errors.csv", |w| report.write_csv(w))?;
    let mut text = Vec::new();
    report
        .write_csv(&mut text)
        .map_err(|e| CliError::Io(dir.path().join("errors.csv"), e))?;
    print!("{}", String::from_utf8_lossy(&text));
    println!("run directory: {}", dir.path().display());
    Ok(())
}

/// Multiphysics solver against the two-field baseline on the coarsest mesh.
pub fn compare(config: &RunConfig) -> Result<(), CliError> {
    let case = config.case()?;
    let mesh = Mesh::unit_square(config.n0).map_err(|e| ConfigError {
        key: "n0".into(),
        message: e.to_string(),
    })?;
    let grid = config.grid(mesh.h())?;
    let dir = RunDir::create("compare", config)?;
    let c = oscillation_comparison(&case, config.n0, grid, config.stepper())?;
    let loc = PointLocator::new(c.mesh.clone());
    let title = |what: &str| format!("{what} pressure, n = {}, t = {}", config.n0, case.t_final);
    svg(
        &dir,
        "p_multiphysics.svg",
        &GridSnapshot::from_p1(&loc, &c.p_multiphysics, SNAPSHOT_GRID),
        &title("multiphysics"),
    )?;
    svg(
        &dir,
        "p_naive.svg",
        &GridSnapshot::from_p1(&loc, &c.p_naive, SNAPSHOT_GRID),
        &title("two-field P1-P1"),
    )?;
    svg(
        &dir,
        "p_exact.svg",
        &GridSnapshot::from_p1(&loc, &c.p_exact, SNAPSHOT_GRID),
        &title("interpolated exact"),
    )?;
    let summary = format!(
        "multiphysics tv={:.6e} samples={TV_SAMPLES}\nnaive tv={:.6e} samples={TV_SAMPLES}\n",
        c.tv_multiphysics, c.tv_naive
    );
    dir.write("indicators.txt", |w| w.write_all(summary.as_bytes()))?;
    print!("{summary}");
    println!("interpolated exact tv={:.6e}", c.tv_exact);
    println!("run directory: {}", dir.path().display());
    Ok(())
}

/// Seeded property suites; exit code 3 on any failure.
pub fn probe(config: &RunConfig) -> Result<(), CliError> {
    let dir = RunDir::create("probe", config)?;
    let report = run_probes(&ProbeConfig {
        seed: config.seed,
        ..ProbeConfig::default()
    });
    let text = report.to_string();
    dir.write("probes.txt", |w| w.write_all(text.as_bytes()))?;
    print!("{text}");
    match report.failures().count() {
        0 => Ok(()),
        n => Err(CliError::Probes(n)),
    }
}

/// OFF export of the refinement sequence.
pub fn mesh(config: &RunConfig) -> Result<(), CliError> {
    let dir = RunDir::create("mesh", config)?;
    let mut mesh = Arc::new(Mesh::unit_square(config.n0).map_err(|e| ConfigError {
        key: "n0".into(),
        message: e.to_string(),
    })?);
    for level in 0..config.levels {
        if level > 0 {
            mesh = Arc::new(mesh.refine());
        }
        let n = config.n0 << level;
        dir.write(&format!("mesh_n{n}.off"), |w| mesh.write_off(w))?;
        println!(
            "n={n} vertices={} triangles={} edges={} h={:.6}",
            mesh.vertex_count(),
            mesh.triangle_count(),
            mesh.edge_count(),
            mesh.h()
        );
    }
    println!("run directory: {}", dir.path().display());
    Ok(())
}
