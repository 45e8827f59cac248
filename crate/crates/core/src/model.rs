//! Model specification: design matrices, link functions, the power transform
//! of the beta parameters and its feasibility conditions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::numeric::ShapePair;

const MU_FLOOR: f64 = 1e-12;
const PHI_FLOOR: f64 = 1e-12;
const PHI_CEIL: f64 = 1e12;

/// Link functions for the mean (`logit`, `probit`, `cloglog`) and the
/// precision (`log`) submodels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Logit,
    Probit,
    Cloglog,
    Log,
}

impl LinkKind {
    /// True for links whose domain is the unit interval.
    pub fn is_mean_link(self) -> bool {
        !matches!(self, LinkKind::Log)
    }

    fn in_domain(self, v: f64) -> bool {
        match self {
            LinkKind::Log => v > 0.0 && v.is_finite(),
            _ => v > 0.0 && v < 1.0,
        }
    }

    /// `g(v)` without a domain check.
    #[inline]
    pub fn eval(self, v: f64) -> f64 {
        match self {
            LinkKind::Logit => (v / (1.0 - v)).ln(),
            LinkKind::Probit => {
                // one Newton step polishes the inverse complementary error function
                let eta = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * v);
                let cdf = 0.5 * erfc(-eta / std::f64::consts::SQRT_2);
                let dens = (-0.5 * eta * eta).exp() / (2.0 * std::f64::consts::PI).sqrt();
                eta - (cdf - v) / dens
            }
            LinkKind::Cloglog => (-(-v).ln_1p()).ln(),
            LinkKind::Log => v.ln(),
        }
    }

    /// `g^{-1}(eta)`.
    #[inline]
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            LinkKind::Logit => {
                if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                }
            }
            LinkKind::Probit => 0.5 * erfc(-eta / std::f64::consts::SQRT_2),
            LinkKind::Cloglog => -(-eta.exp()).exp_m1(),
            LinkKind::Log => eta.exp(),
        }
    }

    /// `g'(v)` without a domain check.
    #[inline]
    pub fn deriv(self, v: f64) -> f64 {
        match self {
            LinkKind::Logit => 1.0 / (v * (1.0 - v)),
            LinkKind::Probit => {
                let eta = self.eval(v);
                let dens = (-0.5 * eta * eta).exp() / (2.0 * std::f64::consts::PI).sqrt();
                1.0 / dens
            }
            LinkKind::Cloglog => -1.0 / ((1.0 - v) * (-v).ln_1p()),
            LinkKind::Log => 1.0 / v,
        }
    }

    /// Inverse link followed by clamping into `[1e-12, 1 - 1e-12]` (mean) or
    /// `[1e-12, 1e12]` (precision).
    #[inline]
    pub fn inverse_saturated(self, eta: f64) -> f64 {
        let v = self.inverse(eta);
        match self {
            LinkKind::Log => v.clamp(PHI_FLOOR, PHI_CEIL),
            _ => v.clamp(MU_FLOOR, 1.0 - MU_FLOOR),
        }
    }
}

impl std::str::FromStr for LinkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logit" => Ok(LinkKind::Logit),
            "probit" => Ok(LinkKind::Probit),
            "cloglog" => Ok(LinkKind::Cloglog),
            "log" => Ok(LinkKind::Log),
            other => Err(Error::Data(format!("unknown link '{other}'"))),
        }
    }
}

/// Checked `g(v)`.
pub fn link_eval(link: LinkKind, v: f64) -> Result<f64> {
    if !link.in_domain(v) {
        return Err(Error::Domain(format!(
            "{v} outside the domain of the {link:?} link"
        )));
    }
    Ok(link.eval(v))
}

/// Checked `g^{-1}(eta)`.
pub fn link_inverse(link: LinkKind, eta: f64) -> Result<f64> {
    if !eta.is_finite() {
        return Err(Error::Domain(format!("non-finite linear predictor {eta}")));
    }
    Ok(link.inverse(eta))
}

/// Checked `g'(v)`.
pub fn link_deriv(link: LinkKind, v: f64) -> Result<f64> {
    if !link.in_domain(v) {
        return Err(Error::Domain(format!(
            "{v} outside the domain of the {link:?} link"
        )));
    }
    Ok(link.deriv(v))
}

/// A beta regression problem: responses, mean design `X` (n x p1),
/// precision design `Z` (n x p2) and the two links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub mean_link: LinkKind,
    pub precision_link: LinkKind,
    pub x_names: Vec<String>,
    pub z_names: Vec<String>,
}

impl ModelSpec {
    /// Validates and builds a specification with default coefficient names.
    pub fn new(
        y: Vec<f64>,
        x: DMatrix<f64>,
        z: DMatrix<f64>,
        mean_link: LinkKind,
        precision_link: LinkKind,
    ) -> Result<Self> {
        let x_names = (1..=x.ncols()).map(|j| format!("beta{j}")).collect();
        let z_names = (1..=z.ncols()).map(|j| format!("gamma{j}")).collect();
        Self::with_names(y, x, z, mean_link, precision_link, x_names, z_names)
    }

    pub fn with_names(
        y: Vec<f64>,
        x: DMatrix<f64>,
        z: DMatrix<f64>,
        mean_link: LinkKind,
        precision_link: LinkKind,
        x_names: Vec<String>,
        z_names: Vec<String>,
    ) -> Result<Self> {
        let spec = Self {
            y,
            x,
            z,
            mean_link,
            precision_link,
            x_names,
            z_names,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if self.x.nrows() != n || self.z.nrows() != n {
            return Err(Error::Dimension(format!(
                "y has {n} rows, X has {}, Z has {}",
                self.x.nrows(),
                self.z.nrows()
            )));
        }
        if self.x_names.len() != self.p1() || self.z_names.len() != self.p2() {
            return Err(Error::Dimension(
                "coefficient names do not match design widths".into(),
            ));
        }
        if self.p1() == 0 || self.p2() == 0 {
            return Err(Error::InvalidModel(
                "both submodels need at least one column".into(),
            ));
        }
        if self.p() >= n {
            return Err(Error::InvalidModel(format!(
                "p1 + p2 = {} must be smaller than n = {n}",
                self.p()
            )));
        }
        if let Some(i) = self.y.iter().position(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::Data(format!(
                "response {} (row {}) is not strictly inside (0, 1)",
                self.y[i],
                i + 1
            )));
        }
        if !self.mean_link.is_mean_link() {
            return Err(Error::InvalidModel(format!(
                "{:?} is not a link for the mean",
                self.mean_link
            )));
        }
        if self.precision_link != LinkKind::Log {
            return Err(Error::InvalidModel(format!(
                "{:?} is not a supported precision link",
                self.precision_link
            )));
        }
        if self.x.iter().chain(self.z.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data(
                "design matrices contain non-finite values".into(),
            ));
        }
        for (name, m) in [("X", &self.x), ("Z", &self.z)] {
            if !full_column_rank(m) {
                return Err(Error::InvalidModel(format!(
                    "{name} is not of full column rank"
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p1(&self) -> usize {
        self.x.ncols()
    }

    pub fn p2(&self) -> usize {
        self.z.ncols()
    }

    pub fn p(&self) -> usize {
        self.p1() + self.p2()
    }

    /// Names of all coefficients, mean submodel first.
    pub fn coefficient_names(&self) -> Vec<String> {
        self.x_names.iter().chain(&self.z_names).cloned().collect()
    }

    /// The same design with a different response vector.
    pub fn with_response(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::Dimension(format!(
                "expected {} responses, got {}",
                self.n(),
                y.len()
            )));
        }
        if let Some(v) = y.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::Data(format!("response {v} is not inside (0, 1)")));
        }
        let mut out = self.clone();
        out.y = y;
        Ok(out)
    }

    /// Keeps only the listed rows (in the given order).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let y = rows.iter().map(|&i| self.y[i]).collect();
        let x = self.x.select_rows(rows);
        let z = self.z.select_rows(rows);
        Self::with_names(
            y,
            x,
            z,
            self.mean_link,
            self.precision_link,
            self.x_names.clone(),
            self.z_names.clone(),
        )
    }
}

fn full_column_rank(m: &DMatrix<f64>) -> bool {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    max > 0.0 && sv.iter().all(|&s| s > max * 1e-10)
}

/// Regression coefficients `(beta, gamma)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub beta: DVector<f64>,
    pub gamma: DVector<f64>,
}

impl Theta {
    pub fn new(beta: Vec<f64>, gamma: Vec<f64>) -> Self {
        Self {
            beta: DVector::from_vec(beta),
            gamma: DVector::from_vec(gamma),
        }
    }

    pub fn from_slice(p1: usize, v: &[f64]) -> Self {
        Self::new(v[..p1].to_vec(), v[p1..].to_vec())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.beta.iter().chain(self.gamma.iter()).copied().collect()
    }

    pub fn p(&self) -> usize {
        self.beta.len() + self.gamma.len()
    }

    pub fn check_dims(&self, spec: &ModelSpec) -> Result<()> {
        if self.beta.len() != spec.p1() || self.gamma.len() != spec.p2() {
            return Err(Error::Dimension(format!(
                "theta has ({}, {}) coefficients, model expects ({}, {})",
                self.beta.len(),
                self.gamma.len(),
                spec.p1(),
                spec.p2()
            )));
        }
        if self
            .beta
            .iter()
            .chain(self.gamma.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Domain("theta has non-finite entries".into()));
        }
        Ok(())
    }
}

/// Per-observation mean and precision implied by the links.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkLevel {
    pub mu: Vec<f64>,
    pub phi: Vec<f64>,
}

/// `mu_i = g_mu^{-1}(X_i' beta)` and `phi_i = g_phi^{-1}(Z_i' gamma)`.
pub fn predict_link_level(spec: &ModelSpec, theta: &Theta) -> Result<LinkLevel> {
    theta.check_dims(spec)?;
    Ok(predict_unchecked(spec, theta))
}

pub(crate) fn predict_unchecked(spec: &ModelSpec, theta: &Theta) -> LinkLevel {
    let eta_mu = &spec.x * &theta.beta;
    let eta_phi = &spec.z * &theta.gamma;
    LinkLevel {
        mu: eta_mu
            .iter()
            .map(|&e| spec.mean_link.inverse_saturated(e))
            .collect(),
        phi: eta_phi
            .iter()
            .map(|&e| spec.precision_link.inverse_saturated(e))
            .collect(),
    }
}

/// Power transform of the beta parameters: the density proportional to
/// `f(.; mu, phi)^alpha` is again beta with
/// `phi_alpha = alpha (phi - 2) + 2` and
/// `mu_alpha = [alpha (mu phi - 1) + 1] / phi_alpha`.
///
/// Returns `None` when the transformed parameters leave the parameter space.
pub fn q_transform(mu: f64, phi: f64, alpha: f64) -> Option<(f64, f64)> {
    if alpha == 1.0 {
        return Some((mu, phi));
    }
    let s = ShapePair::mean_precision_unchecked(mu, phi).powered(alpha);
    if !s.is_valid() {
        return None;
    }
    let phi_a = s.precision();
    Some((s.a / phi_a, phi_a))
}

/// Feasibility of the robust machinery at a single observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validity {
    Ok,
    /// `mu phi <= 1 - q` or `(1 - mu) phi <= 1 - q`: the `1/q` transform is
    /// undefined and so is the surrogate likelihood.
    SmleInfeasible,
    /// The estimator exists but the `2 - q` shifted law needed by the
    /// sandwich covariance does not.
    CovarianceInfeasible,
}

pub fn validity_check(mu: f64, phi: f64, q: f64) -> Validity {
    let a = mu * phi;
    let b = (1.0 - mu) * phi;
    let smle = 1.0 - q;
    if a <= smle || b <= smle {
        return Validity::SmleInfeasible;
    }
    let cov = 2.0 * (1.0 - q) / (2.0 - q);
    if a <= cov || b <= cov {
        return Validity::CovarianceInfeasible;
    }
    Validity::Ok
}

/// The three parameter levels used by the surrogate likelihood.
///
/// * `link_level`: what the regression predicts, `g(mu) = X' beta`.
/// * `working`: the `1/q` transform of `link_level`; the surrogate
///   likelihood evaluates the beta density at these parameters.
/// * `shifted`: the `2 - q` transform of `working`, the law under which the
///   score second moments are taken.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTriple {
    pub link_level: Vec<(f64, f64)>,
    pub working: Vec<Option<(f64, f64)>>,
    pub shifted: Vec<Option<(f64, f64)>>,
}

impl ParamTriple {
    pub fn compute(spec: &ModelSpec, theta: &Theta, q: f64) -> Result<Self> {
        let ll = predict_link_level(spec, theta)?;
        let link_level: Vec<(f64, f64)> = ll.mu.into_iter().zip(ll.phi).collect();
        let working: Vec<Option<(f64, f64)>> = link_level
            .iter()
            .map(|&(m, p)| q_transform(m, p, 1.0 / q))
            .collect();
        let shifted = working
            .iter()
            .map(|w| w.and_then(|(m, p)| q_transform(m, p, 2.0 - q)))
            .collect();
        Ok(Self {
            link_level,
            working,
            shifted,
        })
    }

    /// Observations whose working parameters do not exist.
    pub fn infeasible(&self) -> Vec<usize> {
        self.working
            .iter()
            .enumerate()
            .filter_map(|(i, w)| w.is_none().then_some(i))
            .collect()
    }
}
