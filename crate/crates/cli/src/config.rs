//! Run configuration: a plain `key = value` file merged with command-line
//! overrides, validated key by key.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use porofem::constitutive::{DevSign, MaterialParams, StressModel};
use porofem::mms::{CaseName, DtPolicy, ManufacturedCase, SourceMode, StudyConfig};
use porofem::stepper::{Coupling, NewtonConfig, PUpdate, StepperConfig, Theta, TimeGrid};

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "case",
    "source_mode",
    "dev_sign",
    "stress",
    "lambda",
    "mu",
    "alpha",
    "c0",
    "permeability",
    "mu_f",
    "levels",
    "n0",
    "theta",
    "dt",
    "t_final",
    "p_update",
    "coupling",
    "jacobian",
    "newton_tol",
    "newton_max_iter",
    "coupled_tol",
    "coupled_max_iter",
    "output",
    "run_name",
    "seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: &str, message: impl Into<String>) -> Self {
        Self {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration key `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Stress law used by the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StressChoice {
    /// The law that belongs to the case.
    Case,
    Linear,
}

/// Newton Jacobian policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Jacobian {
    Exact,
    /// Factorizations kept across iterations and steps.
    Lagged,
}

/// Time-step choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtSpec {
    /// `T / 512`.
    Small,
    Value(f64),
    /// `Δt ≤ c·h²` per level.
    ScaledH2(f64),
}

impl DtSpec {
    const SMALL_STEPS: usize = 512;

    fn policy(&self, t_final: f64) -> Result<DtPolicy, ConfigError> {
        match *self {
            DtSpec::Small => Ok(DtPolicy::Fixed {
                steps: Self::SMALL_STEPS,
            }),
            DtSpec::Value(dt) => {
                let steps = (t_final / dt).round();
                if steps < 1.0 || (steps * dt - t_final).abs() > 1e-9 * t_final {
                    return Err(ConfigError::new(
                        "dt",
                        format!("{dt} does not divide t_final = {t_final}"),
                    ));
                }
                Ok(DtPolicy::Fixed { steps: steps as usize })
            }
            DtSpec::ScaledH2(c) => Ok(DtPolicy::ScaledH2 { c }),
        }
    }
}

impl fmt::Display for DtSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DtSpec::Small => f.write_str("small"),
            DtSpec::Value(v) => write!(f, "{v}"),
            DtSpec::ScaledH2(c) => write!(f, "h2:{c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub case: CaseName,
    pub source_mode: SourceMode,
    pub dev_sign: DevSign,
    pub stress: StressChoice,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub alpha: Option<f64>,
    pub c0: Option<f64>,
    pub permeability: Option<f64>,
    pub mu_f: Option<f64>,
    pub levels: usize,
    pub n0: usize,
    pub theta: Theta,
    pub dt: DtSpec,
    pub t_final: Option<f64>,
    pub p_update: PUpdate,
    pub coupling: Coupling,
    pub jacobian: Jacobian,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub coupled_tol: f64,
    pub coupled_max_iter: usize,
    pub output: PathBuf,
    pub run_name: Option<String>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let stepper = StepperConfig::default();
        Self {
            case: CaseName::Test1,
            source_mode: SourceMode::Derived,
            dev_sign: DevSign::AsPrinted,
            stress: StressChoice::Case,
            lambda: None,
            mu: None,
            alpha: None,
            c0: None,
            permeability: None,
            mu_f: None,
            levels: 4,
            n0: 8,
            theta: Theta::One,
            dt: DtSpec::Small,
            t_final: None,
            p_update: stepper.p_update,
            coupling: stepper.coupling,
            jacobian: Jacobian::Lagged,
            newton_tol: stepper.newton.rel_tol,
            newton_max_iter: stepper.newton.max_iter,
            coupled_tol: stepper.coupled_tol,
            coupled_max_iter: stepper.coupled_max_iter,
            output: PathBuf::from("runs"),
            run_name: None,
            seed: porofem::probes::ProbeConfig::default().seed,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::new(key, e.to_string()))
}

fn positive(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = parse(key, value)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::new(
            key,
            format!("must be a positive number, got `{value}`"),
        ))
    }
}

fn at_least_one(key: &str, value: &str) -> Result<usize, ConfigError> {
    match parse::<usize>(key, value)? {
        0 => Err(ConfigError::new(key, "must be at least 1")),
        v => Ok(v),
    }
}

/// `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str, origin: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::new(line, format!("{origin}:{}: expected `key = value`", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Reads a configuration file into pairs.
pub fn read_file(path: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::new("config", format!("{}: {e}", path.display())))?;
    parse_pairs(&text, &path.display().to_string())
}

impl RunConfig {
    /// Applies pairs in order; later pairs win.
    pub fn from_pairs<I>(pairs: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut merged = BTreeMap::new();
        for (k, v) in pairs {
            if !KEYS.contains(&k.as_str()) {
                return Err(ConfigError::new(&k, "unknown key"));
            }
            merged.insert(k, v);
        }
        let mut c = RunConfig::default();
        for (k, v) in &merged {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "case" => self.case = parse(key, v)?,
            "source_mode" => self.source_mode = parse(key, v)?,
            "dev_sign" => self.dev_sign = parse(key, v)?,
            "stress" => {
                self.stress = match v {
                    "case" => StressChoice::Case,
                    "linear" => StressChoice::Linear,
                    _ => return Err(ConfigError::new(key, format!("expected case or linear, got `{v}`"))),
                }
            }
            "lambda" => self.lambda = Some(parse(key, v)?),
            "mu" => self.mu = Some(parse(key, v)?),
            "alpha" => self.alpha = Some(parse(key, v)?),
            "c0" => self.c0 = Some(parse(key, v)?),
            "permeability" => self.permeability = Some(parse(key, v)?),
            "mu_f" => self.mu_f = Some(parse(key, v)?),
            "levels" => self.levels = at_least_one(key, v)?,
            "n0" => self.n0 = at_least_one(key, v)?,
            "theta" => self.theta = parse(key, v)?,
            "dt" => {
                self.dt = if v == "small" {
                    DtSpec::Small
                } else if let Some(c) = v.strip_prefix("h2:") {
                    DtSpec::ScaledH2(positive(key, c)?)
                } else {
                    DtSpec::Value(positive(key, v)?)
                }
            }
            "t_final" => self.t_final = Some(positive(key, v)?),
            "p_update" => self.p_update = parse(key, v)?,
            "coupling" => self.coupling = parse(key, v)?,
            "jacobian" => {
                self.jacobian = match v {
                    "exact" => Jacobian::Exact,
                    "lagged" => Jacobian::Lagged,
                    _ => return Err(ConfigError::new(key, format!("expected exact or lagged, got `{v}`"))),
                }
            }
            "newton_tol" => self.newton_tol = positive(key, v)?,
            "newton_max_iter" => self.newton_max_iter = at_least_one(key, v)?,
            "coupled_tol" => self.coupled_tol = positive(key, v)?,
            "coupled_max_iter" => self.coupled_max_iter = at_least_one(key, v)?,
            "output" => self.output = PathBuf::from(v),
            "run_name" => {
                if v.is_empty() || v.contains(['/', '\\']) {
                    return Err(ConfigError::new(key, format!("`{v}` is not a plain directory name")));
                }
                self.run_name = Some(v.to_string())
            }
            "seed" => self.seed = parse(key, v)?,
            _ => return Err(ConfigError::new(key, "unknown key")),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.case()?;
        self.stepper()
            .newton
            .validate()
            .map_err(|e| ConfigError::new("newton_tol", e))?;
        self.study()?;
        Ok(())
    }

    /// The manufactured case with overrides applied.
    pub fn case(&self) -> Result<ManufacturedCase, ConfigError> {
        let mut case = ManufacturedCase::preset(self.case, self.dev_sign);
        case.source_mode = self.source_mode;
        if let Some(t) = self.t_final {
            case.t_final = t;
        }
        let overrides = [
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("alpha", self.alpha),
            ("c0", self.c0),
            ("permeability", self.permeability),
            ("mu_f", self.mu_f),
        ];
        let mut p = case.params;
        for (key, value) in overrides {
            let Some(v) = value else { continue };
            let mut q = p;
            match key {
                "lambda" => q.lambda = v,
                "mu" => q.mu = v,
                "alpha" => q.alpha = v,
                "c0" => q.c0 = v,
                "permeability" => q.k = v,
                _ => q.mu_f = v,
            }
            let mut checked = MaterialParams::from_lame(q.lambda, q.mu, q.alpha, q.c0, q.k, q.mu_f)
                .map_err(|e| ConfigError::new(key, e.to_string()))?;
            checked.rho_f_g = q.rho_f_g;
            p = checked;
        }
        if p != case.params {
            case.model = match case.model {
                StressModel::Linear { .. } => StressModel::Linear {
                    lambda: p.lambda,
                    mu: p.mu,
                },
                StressModel::Test1 { .. } => StressModel::Test1 {
                    lambda: p.lambda,
                    mu: p.mu,
                },
                StressModel::Test2 { dev_sign, .. } => StressModel::Test2 {
                    lambda: p.lambda,
                    dev_sign,
                },
            };
            case.params = p;
        }
        if self.stress == StressChoice::Linear {
            case = case.with_linear_stress();
        }
        Ok(case)
    }

    pub fn stepper(&self) -> StepperConfig {
        let base = StepperConfig::default();
        StepperConfig {
            newton: NewtonConfig {
                rel_tol: self.newton_tol,
                max_iter: self.newton_max_iter,
                lagged: self.jacobian == Jacobian::Lagged,
                ..base.newton
            },
            coupled_tol: self.coupled_tol,
            coupled_max_iter: self.coupled_max_iter,
            coupling: self.coupling,
            p_update: self.p_update,
            solver: base.solver,
        }
    }

    pub fn study(&self) -> Result<StudyConfig, ConfigError> {
        let t_final = self.case()?.t_final;
        Ok(StudyConfig {
            n0: self.n0,
            levels: self.levels,
            theta: self.theta,
            dt: self.dt.policy(t_final)?,
            stepper: self.stepper(),
            ..StudyConfig::default()
        })
    }

    /// Time grid on a mesh of width `h`.
    pub fn grid(&self, h: f64) -> Result<TimeGrid, ConfigError> {
        let t_final = self.case()?.t_final;
        self.dt
            .policy(t_final)?
            .grid(t_final, h, self.theta)
            .map_err(|e| ConfigError::new("dt", e.to_string()))
    }

    /// Resolved configuration, one `key = value` line per key.
    pub fn echo(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "default".into());
        let mut s = String::new();
        for key in KEYS {
            let value = match *key {
                "case" => self.case.to_string(),
                "source_mode" => self.source_mode.to_string(),
                "dev_sign" => self.dev_sign.to_string(),
                "stress" => match self.stress {
                    StressChoice::Case => "case".into(),
                    StressChoice::Linear => "linear".into(),
                },
                "lambda" => opt(self.lambda),
                "mu" => opt(self.mu),
                "alpha" => opt(self.alpha),
                "c0" => opt(self.c0),
                "permeability" => opt(self.permeability),
                "mu_f" => opt(self.mu_f),
                "levels" => self.levels.to_string(),
                "n0" => self.n0.to_string(),
                "theta" => self.theta.to_string(),
                "dt" => self.dt.to_string(),
                "t_final" => opt(self.t_final),
                "p_update" => self.p_update.to_string(),
                "coupling" => self.coupling.to_string(),
                "jacobian" => match self.jacobian {
                    Jacobian::Exact => "exact".into(),
                    Jacobian::Lagged => "lagged".into(),
                },
                "newton_tol" => self.newton_tol.to_string(),
                "newton_max_iter" => self.newton_max_iter.to_string(),
                "coupled_tol" => self.coupled_tol.to_string(),
                "coupled_max_iter" => self.coupled_max_iter.to_string(),
                "output" => self.output.display().to_string(),
                "run_name" => self.run_name.clone().unwrap_or_else(|| "default".into()),
                _ => self.seed.to_string(),
            };
            s.push_str(&format!("{key} = {value}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_resolve() {
        let c = RunConfig::from_pairs(Vec::new()).unwrap();
        assert_eq!(c.case, CaseName::Test1);
        assert_eq!(c.study().unwrap().dt, DtPolicy::Fixed { steps: 512 });
    }

    #[test]
    fn theta_two_names_theta() {
        let e = RunConfig::from_pairs(pairs(&[("theta", "2")])).unwrap_err();
        assert_eq!(e.key, "theta");
        assert!(e.to_string().contains("theta"));
    }

    #[test]
    fn unknown_key_is_named() {
        let e = RunConfig::from_pairs(pairs(&[("thetta", "1")])).unwrap_err();
        assert_eq!(e.key, "thetta");
    }

    #[test]
    fn later_pairs_win() {
        let c = RunConfig::from_pairs(pairs(&[("levels", "2"), ("levels", "3")])).unwrap();
        assert_eq!(c.levels, 3);
    }

    #[test]
    fn file_syntax() {
        let p = parse_pairs("# comment\ncase = test2  # trailing\n\nlevels=3\n", "f").unwrap();
        assert_eq!(p, pairs(&[("case", "test2"), ("levels", "3")]));
        assert!(parse_pairs("levels 3", "f").is_err());
    }

    #[test]
    fn dt_forms() {
        let c = RunConfig::from_pairs(pairs(&[("dt", "0.001")])).unwrap();
        assert_eq!(c.study().unwrap().dt, DtPolicy::Fixed { steps: 1000 });
        let c = RunConfig::from_pairs(pairs(&[("dt", "h2:2")])).unwrap();
        assert_eq!(c.study().unwrap().dt, DtPolicy::ScaledH2 { c: 2.0 });
        assert_eq!(RunConfig::from_pairs(pairs(&[("dt", "0.3")])).unwrap_err().key, "dt");
        assert_eq!(RunConfig::from_pairs(pairs(&[("dt", "-1")])).unwrap_err().key, "dt");
    }

    #[test]
    fn parameter_overrides_reach_the_model() {
        let c = RunConfig::from_pairs(pairs(&[("case", "test2"), ("lambda", "10")])).unwrap();
        let case = c.case().unwrap();
        assert_eq!(case.params.lambda, 10.0);
        assert!(matches!(case.model, StressModel::Test2 { lambda, .. } if lambda == 10.0));
        let e = RunConfig::from_pairs(pairs(&[("permeability", "-1")])).unwrap_err();
        assert_eq!(e.key, "permeability");
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig::from_pairs(pairs(&[("case", "test2"), ("dt", "0.001"), ("jacobian", "exact")])).unwrap();
        let back: Vec<(String, String)> = parse_pairs(&c.echo(), "echo")
            .unwrap()
            .into_iter()
            .filter(|(_, v)| v != "default")
            .collect();
        assert_eq!(RunConfig::from_pairs(back).unwrap(), c);
    }
}
