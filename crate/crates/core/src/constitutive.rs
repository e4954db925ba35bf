//! Material parameters, the pseudo-pressure change of variables and the
//! nonlinear stress laws with their exact directional derivatives.
//!
//! Gradients follow `G[(i, j)] = ∂u_i/∂x_j`, and `ε = (G + Gᵀ)/2`.
//! Every law is split as `σ(G) = N(G) + λ tr(ε) I`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("Poisson ratio {0} must lie in [0, 0.5)")]
    PoissonRatio(f64),
    #[error("Young's modulus {0} must be positive")]
    YoungModulus(f64),
    #[error("parameter `{name}` = {value} violates {rule}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        rule: &'static str,
    },
    #[error("alpha² + lambda·c0 vanishes")]
    ZeroDenominator,
    #[error("`{name}` = {given} disagrees with {derived} derived from (E, nu)")]
    Inconsistent {
        name: &'static str,
        given: f64,
        derived: f64,
    },
    #[error("unknown value `{0}`")]
    UnknownVariant(String),
}

/// Lamé constants from Young's modulus and Poisson ratio.
pub fn derive_lame(e: f64, nu: f64) -> Result<(f64, f64), ParamError> {
    if !(e > 0.0) {
        return Err(ParamError::YoungModulus(e));
    }
    if !(0.0..0.5).contains(&nu) {
        return Err(ParamError::PoissonRatio(nu));
    }
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = e / (2.0 * (1.0 + nu));
    Ok((lambda, mu))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    pub lambda: f64,
    pub mu: f64,
    /// Biot–Willis constant.
    pub alpha: f64,
    /// Constrained specific storage.
    pub c0: f64,
    /// Isotropic permeability.
    pub k: f64,
    /// Fluid viscosity.
    pub mu_f: f64,
    /// Gravity body force `ρ_f g`.
    pub rho_f_g: Vector2<f64>,
    /// Informational (E, ν) pair, when known.
    pub young: Option<(f64, f64)>,
}

impl MaterialParams {
    pub fn from_lame(lambda: f64, mu: f64, alpha: f64, c0: f64, k: f64, mu_f: f64) -> Result<Self, ParamError> {
        let p = Self {
            lambda,
            mu,
            alpha,
            c0,
            k,
            mu_f,
            rho_f_g: Vector2::zeros(),
            young: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_young(e: f64, nu: f64, alpha: f64, c0: f64, k: f64, mu_f: f64) -> Result<Self, ParamError> {
        let (lambda, mu) = derive_lame(e, nu)?;
        let mut p = Self::from_lame(lambda, mu, alpha, c0, k, mu_f)?;
        p.young = Some((e, nu));
        Ok(p)
    }

    /// Checks given (λ, μ) against those derived from (E, ν) at `rel_tol`.
    pub fn check_consistency(lambda: f64, mu: f64, e: f64, nu: f64, rel_tol: f64) -> Result<(), ParamError> {
        let (l, m) = derive_lame(e, nu)?;
        let close = |a: f64, b: f64| (a - b).abs() <= rel_tol * b.abs().max(f64::MIN_POSITIVE);
        if !close(lambda, l) {
            return Err(ParamError::Inconsistent {
                name: "lambda",
                given: lambda,
                derived: l,
            });
        }
        if !close(mu, m) {
            return Err(ParamError::Inconsistent {
                name: "mu",
                given: mu,
                derived: m,
            });
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let positive = [("c0", self.c0), ("K", self.k), ("mu_f", self.mu_f)];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ParamError::OutOfRange {
                    name,
                    value,
                    rule: "> 0",
                });
            }
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(ParamError::OutOfRange {
                name: "alpha",
                value: self.alpha,
                rule: "in (0, 1]",
            });
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(ParamError::OutOfRange {
                name: "lambda",
                value: self.lambda,
                rule: ">= 0",
            });
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(ParamError::OutOfRange {
                name: "mu",
                value: self.mu,
                rule: "> 0",
            });
        }
        Ok(())
    }

    pub fn kappas(&self) -> Result<KappaSet, ParamError> {
        compute_kappas(self.lambda, self.alpha, self.c0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaSet {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
}

pub fn compute_kappas(lambda: f64, alpha: f64, c0: f64) -> Result<KappaSet, ParamError> {
    let d = alpha * alpha + lambda * c0;
    if d == 0.0 || !d.is_finite() {
        return Err(ParamError::ZeroDenominator);
    }
    Ok(KappaSet {
        kappa1: alpha / d,
        kappa2: lambda / d,
        kappa3: c0 / d,
    })
}

/// `(ξ, η) = (αp − λq, c₀p + αq)`.
pub fn to_pseudo(p: &[f64], q: &[f64], params: &MaterialParams) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(p.len(), q.len());
    let xi = p
        .iter()
        .zip(q)
        .map(|(p, q)| params.alpha * p - params.lambda * q)
        .collect();
    let eta = p.iter().zip(q).map(|(p, q)| params.c0 * p + params.alpha * q).collect();
    (xi, eta)
}

/// `(p, q) = (κ₁ξ + κ₂η, κ₁η − κ₃ξ)`.
pub fn from_pseudo(xi: &[f64], eta: &[f64], k: &KappaSet) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(xi.len(), eta.len());
    let p = xi.iter().zip(eta).map(|(x, e)| k.kappa1 * x + k.kappa2 * e).collect();
    let q = xi.iter().zip(eta).map(|(x, e)| k.kappa1 * e - k.kappa3 * x).collect();
    (p, q)
}

/// Sign convention for the exponent of the second law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DevSign {
    /// `−dev(ε) = tr(ε²) − ½tr²(ε)`, so the exponential is `exp(tr(ε²) − ½tr²(ε))`.
    #[default]
    AsPrinted,
    /// Exponential `exp(−(tr(ε²) − ½tr²(ε)))`, bounded by one.
    Positive,
}

impl fmt::Display for DevSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DevSign::AsPrinted => "as_printed",
            DevSign::Positive => "positive",
        })
    }
}

impl FromStr for DevSign {
    type Err = ParamError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "as_printed" => Ok(DevSign::AsPrinted),
            "positive" => Ok(DevSign::Positive),
            other => Err(ParamError::UnknownVariant(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StressModel {
    /// `N = 2με`.
    Linear { lambda: f64, mu: f64 },
    /// `N = με + μGᵀG + λ‖G‖²_F I`.
    Test1 { lambda: f64, mu: f64 },
    /// `N = (4 − 2g)ε + (1 + g) tr(ε) I` with `g = exp(±(tr(ε²) − ½tr²(ε)))`.
    Test2 { lambda: f64, dev_sign: DevSign },
}

fn sym(g: &Matrix2<f64>) -> Matrix2<f64> {
    (g + g.transpose()) * 0.5
}

impl StressModel {
    pub fn name(&self) -> &'static str {
        match self {
            StressModel::Linear { .. } => "linear",
            StressModel::Test1 { .. } => "test1",
            StressModel::Test2 { .. } => "test2",
        }
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            StressModel::Linear { lambda, .. }
            | StressModel::Test1 { lambda, .. }
            | StressModel::Test2 { lambda, .. } => lambda,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, StressModel::Linear { .. })
    }

    /// Exponential factor `g` of the second law and its exponent.
    fn test2_factor(e: &Matrix2<f64>, sign: DevSign) -> (f64, f64) {
        let tr = e.trace();
        let s = (e * e).trace() - 0.5 * tr * tr;
        let sgn = match sign {
            DevSign::AsPrinted => 1.0,
            DevSign::Positive => -1.0,
        };
        ((sgn * s).exp(), sgn)
    }

    /// Shear coefficient `4 − 2g` of the second law (2μ for the others).
    pub fn shear_coefficient(&self, g: &Matrix2<f64>) -> f64 {
        match *self {
            StressModel::Linear { mu, .. } => 2.0 * mu,
            StressModel::Test1 { mu, .. } => mu,
            StressModel::Test2 { dev_sign, .. } => 4.0 - 2.0 * Self::test2_factor(&sym(g), dev_sign).0,
        }
    }

    pub fn stress_n(&self, g: &Matrix2<f64>) -> Matrix2<f64> {
        let e = sym(g);
        match *self {
            StressModel::Linear { mu, .. } => e * (2.0 * mu),
            StressModel::Test1 { lambda, mu } => {
                e * mu + g.transpose() * g * mu + Matrix2::identity() * (lambda * g.norm_squared())
            }
            StressModel::Test2 { dev_sign, .. } => {
                let (f, _) = Self::test2_factor(&e, dev_sign);
                e * (4.0 - 2.0 * f) + Matrix2::identity() * ((1.0 + f) * e.trace())
            }
        }
    }

    pub fn sigma(&self, g: &Matrix2<f64>) -> Matrix2<f64> {
        self.stress_n(g) + Matrix2::identity() * (self.lambda() * g.trace())
    }

    /// Directional derivative `DN(G)[W]`.
    pub fn tangent(&self, g: &Matrix2<f64>, w: &Matrix2<f64>) -> Matrix2<f64> {
        let de = sym(w);
        match *self {
            StressModel::Linear { mu, .. } => de * (2.0 * mu),
            StressModel::Test1 { lambda, mu } => {
                de * mu + (w.transpose() * g + g.transpose() * w) * mu + Matrix2::identity() * (2.0 * lambda * g.dot(w))
            }
            StressModel::Test2 { dev_sign, .. } => {
                let e = sym(g);
                let tr = e.trace();
                let dtr = de.trace();
                let (f, sgn) = Self::test2_factor(&e, dev_sign);
                let ds = 2.0 * e.dot(&de) - tr * dtr;
                let df = sgn * f * ds;
                de * (4.0 - 2.0 * f) - e * (2.0 * df) + Matrix2::identity() * ((1.0 + f) * dtr + df * tr)
            }
        }
    }
}

/// Extremes of the coercivity, monotonicity and Lipschitz quotients found by
/// random sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityReport {
    pub samples: usize,
    /// `min (N(G), ε) / ‖ε‖²`.
    pub min_coercivity: f64,
    /// `min (N(G₁) − N(G₂), ε₁ − ε₂) / ‖ε₁ − ε₂‖²`.
    pub min_monotonicity: f64,
    /// `max ‖N(G₁) − N(G₂)‖ / ‖ε₁ − ε₂‖`.
    pub max_lipschitz: f64,
    /// Samples with a non-positive coercivity or monotonicity quotient.
    pub violations: usize,
}

impl MonotonicityReport {
    pub fn violated(&self) -> bool {
        self.violations > 0
    }
}

/// Samples gradients with entries uniform in `[−scale, scale]`.
pub fn monotonicity_probe<R: Rng>(model: &StressModel, samples: usize, scale: f64, rng: &mut R) -> MonotonicityReport {
    let mut draw = || Matrix2::from_fn(|_, _| rng.gen_range(-scale..=scale));
    let mut report = MonotonicityReport {
        samples,
        min_coercivity: f64::INFINITY,
        min_monotonicity: f64::INFINITY,
        max_lipschitz: 0.0,
        violations: 0,
    };
    for _ in 0..samples {
        let (g1, g2) = (draw(), draw());
        let (e1, e2) = (sym(&g1), sym(&g2));
        let n1 = model.stress_n(&g1);
        let n2 = model.stress_n(&g2);
        let mut bad = false;
        if e1.norm_squared() > 0.0 {
            let c = n1.dot(&e1) / e1.norm_squared();
            report.min_coercivity = report.min_coercivity.min(c);
            bad |= c <= 0.0;
        }
        let de = e1 - e2;
        if de.norm_squared() > 0.0 {
            let m = (n1 - n2).dot(&de) / de.norm_squared();
            report.min_monotonicity = report.min_monotonicity.min(m);
            report.max_lipschitz = report.max_lipschitz.max((n1 - n2).norm() / de.norm());
            bad |= m <= 0.0;
        }
        if bad {
            report.violations += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn models() -> [StressModel; 4] {
        [
            StressModel::Linear { lambda: 1.3, mu: 0.7 },
            StressModel::Test1 { lambda: 3.0, mu: 2.0 },
            StressModel::Test2 {
                lambda: 576.923,
                dev_sign: DevSign::AsPrinted,
            },
            StressModel::Test2 {
                lambda: 576.923,
                dev_sign: DevSign::Positive,
            },
        ]
    }

    #[test]
    fn lame_from_young() {
        let (l, m) = derive_lame(0.01, 0.04).unwrap();
        assert!((l - 0.00042).abs() < 5e-6 && (m - 0.0048).abs() < 5e-5);
        let (l, m) = derive_lame(1000.0, 0.3).unwrap();
        assert!((l - 576.923).abs() < 1e-3 && (m - 384.615).abs() < 1e-3);
        assert_eq!(derive_lame(1.0, 0.0).unwrap(), (0.0, 0.5));
        assert_eq!(derive_lame(1.0, 0.5), Err(ParamError::PoissonRatio(0.5)));
    }

    #[test]
    fn consistency_check_tolerance() {
        let (l, m) = derive_lame(1000.0, 0.3).unwrap();
        assert!(MaterialParams::check_consistency(l, m, 1000.0, 0.3, 1e-10).is_ok());
        assert!(MaterialParams::check_consistency(576.923, m, 1000.0, 0.3, 1e-10).is_err());
    }

    #[test]
    fn kappa_examples() {
        let k = compute_kappas(0.0, 1.0, 1.0).unwrap();
        assert_eq!((k.kappa1, k.kappa2, k.kappa3), (1.0, 0.0, 1.0));
        let k = compute_kappas(1.0, 1.0, 1.0).unwrap();
        assert_eq!((k.kappa1, k.kappa2, k.kappa3), (0.5, 0.5, 0.5));
        let k = compute_kappas(0.00042, 0.83, 1e-5).unwrap();
        assert!((k.kappa1 - 1.2048).abs() < 1e-4);
        assert!((0.83 * k.kappa1 + 1e-5 * k.kappa2 - 1.0).abs() < 1e-13);
        assert_eq!(compute_kappas(0.0, 0.0, 1.0), Err(ParamError::ZeroDenominator));
    }

    #[test]
    fn zero_gradient_gives_zero_stress() {
        for m in models() {
            assert_eq!(m.stress_n(&Matrix2::zeros()), Matrix2::zeros());
        }
    }

    #[test]
    fn test1_hand_value() {
        let m = StressModel::Test1 { lambda: 3.0, mu: 2.0 };
        let n = m.stress_n(&Matrix2::new(1.0, 0.0, 0.0, 0.0));
        assert_eq!(n, Matrix2::new(7.0, 0.0, 0.0, 3.0));
    }

    #[test]
    fn linear_model_identity_gradient() {
        let m = StressModel::Linear { lambda: 1.0, mu: 0.25 };
        assert_eq!(m.stress_n(&Matrix2::identity()), Matrix2::identity() * 0.5);
    }

    #[test]
    fn tangent_at_rest_for_test1() {
        let m = StressModel::Test1 { lambda: 3.0, mu: 2.0 };
        let w = Matrix2::new(0.3, -0.2, 0.7, 0.1);
        assert_relative_eq!(m.tangent(&Matrix2::zeros(), &w), sym(&w) * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn sigma_minus_n_is_volumetric() {
        let g = Matrix2::new(0.05, -0.02, 0.03, 0.08);
        for m in models() {
            let d = m.sigma(&g) - m.stress_n(&g) - Matrix2::identity() * (m.lambda() * g.trace());
            assert!(d.norm() < 1e-13);
        }
    }

    #[test]
    fn monotonicity_linear_quotient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = StressModel::Linear { lambda: 1.0, mu: 0.3 };
        let r = monotonicity_probe(&m, 200, 0.1, &mut rng);
        assert!((r.min_coercivity - 0.6).abs() < 1e-12);
        assert!(!r.violated());
    }

    #[test]
    fn monotonicity_test1_small_strain() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = StressModel::Test1 {
            lambda: 0.00042,
            mu: 0.0048,
        };
        let r = monotonicity_probe(&m, 1000, 0.1, &mut rng);
        assert!(r.min_coercivity > 0.0);
    }

    #[test]
    fn monotonicity_test2_large_strain_flags() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = StressModel::Test2 {
            lambda: 576.923,
            dev_sign: DevSign::AsPrinted,
        };
        let r = monotonicity_probe(&m, 1000, 10.0, &mut rng);
        assert!(r.violated());
        assert!(r.min_coercivity < 0.0);
    }

    #[test]
    fn dev_sign_parsing() {
        assert_eq!("positive".parse::<DevSign>().unwrap(), DevSign::Positive);
        assert_eq!(DevSign::default().to_string(), "as_printed");
        assert!("nope".parse::<DevSign>().is_err());
    }
}
