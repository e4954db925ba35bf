//! `porofem`: convergence studies, oscillation comparison, property probes
//! and mesh export.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;
use config::{read_file, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "porofem",
    version,
    about = "Nonlinear poroelasticity with the multiphysics finite element method"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convergence study over a refinement sequence.
    Run(Overrides),
    /// Multiphysics solver against the two-field P1-P1 baseline.
    Compare(Overrides),
    /// Seeded property suites.
    Probe(Overrides),
    /// Export the refinement sequence as OFF files.
    Mesh(Overrides),
}

/// Flags override the configuration file. Multi-word flags also accept
/// the configuration key spelling, e.g. `--dev_sign`.
#[derive(Debug, Args)]
struct Overrides {
    /// Plain-text `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// test1, test2, zero or polynomial.
    #[arg(long)]
    case: Option<String>,
    #[arg(long)]
    levels: Option<String>,
    /// Cells per side of the coarsest mesh.
    #[arg(long)]
    n0: Option<String>,
    /// 0 or 1.
    #[arg(long)]
    theta: Option<String>,
    /// `small` (T/512), a step size, or `h2:<c>` for dt <= c h^2.
    #[arg(long)]
    dt: Option<String>,
    #[arg(long, alias = "t_final")]
    t_final: Option<String>,
    /// derived or paper_printed.
    #[arg(long, alias = "source_mode")]
    source_mode: Option<String>,
    /// as_printed or positive.
    #[arg(long, alias = "dev_sign")]
    dev_sign: Option<String>,
    /// as_printed or consistent.
    #[arg(long, alias = "p_update")]
    p_update: Option<String>,
    /// monolithic or fixed_point.
    #[arg(long)]
    coupling: Option<String>,
    /// exact or lagged.
    #[arg(long)]
    jacobian: Option<String>,
    #[arg(long, alias = "newton_tol")]
    newton_tol: Option<String>,
    #[arg(long, alias = "coupled_tol")]
    coupled_tol: Option<String>,
    /// Base directory for run directories.
    #[arg(long)]
    output: Option<String>,
    #[arg(long, alias = "run_name")]
    run_name: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Any other key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut pairs = match &self.config {
            Some(path) => read_file(path)?,
            None => Vec::new(),
        };
        let flags = [
            ("case", &self.case),
            ("levels", &self.levels),
            ("n0", &self.n0),
            ("theta", &self.theta),
            ("dt", &self.dt),
            ("t_final", &self.t_final),
            ("source_mode", &self.source_mode),
            ("dev_sign", &self.dev_sign),
            ("p_update", &self.p_update),
            ("coupling", &self.coupling),
            ("jacobian", &self.jacobian),
            ("newton_tol", &self.newton_tol),
            ("coupled_tol", &self.coupled_tol),
            ("output", &self.output),
            ("run_name", &self.run_name),
            ("seed", &self.seed),
        ];
        for item in &self.set {
            pairs.extend(config::parse_pairs(item, "--set")?);
        }
        pairs.extend(
            flags
                .into_iter()
                .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone()))),
        );
        Ok(RunConfig::from_pairs(pairs)?)
    }
}

fn execute(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Run(o) => commands::run(&o.resolve()?),
        Command::Compare(o) => commands::compare(&o.resolve()?),
        Command::Probe(o) => commands::probe(&o.resolve()?),
        Command::Mesh(o) => commands::mesh(&o.resolve()?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
