//! Objective functions and their analytic gradients.
//!
//! All three estimators share one per-observation kernel. For the surrogate
//! likelihood the kernel evaluates the beta density at the working
//! parameters (the `1/q` power transform of the link-level parameters) and
//! weights the modified score by `f*(y)^(1-q)`. For the density power
//! divergence it evaluates the plain score weighted by `f(y)^(1-q)` and
//! subtracts its closed-form expectation.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::estimation::EstimatorKind;
use crate::model::{predict_unchecked, ModelSpec, Theta};
use crate::numeric::{lbeta, logpdf_shapes, psi, ShapePair};

/// Per-observation pieces of the objective in minimization form.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ObsTerm {
    /// Contribution to the objective to be minimized.
    pub value: f64,
    /// Derivative of `value` with respect to the mean linear predictor.
    pub d_eta_mu: f64,
    /// Derivative of `value` with respect to the precision linear predictor.
    pub d_eta_phi: f64,
    /// Raw robustness weight (`f*^(1-q)` or `f^(1-q)`; 1 for the MLE).
    pub weight: f64,
}

/// `ln y`, `ln(1 - y)`, `y* = ln(y / (1 - y))`.
#[inline]
fn logs(y: f64) -> (f64, f64, f64) {
    let ly = y.ln();
    let l1y = (-y).ln_1p();
    (ly, l1y, ly - l1y)
}

/// `(mu*, mu_dagger)`: the expectations of `ln(y/(1-y))` and `ln(1-y)` under
/// a beta law with shapes `s`.
#[inline]
pub(crate) fn log_moments(s: ShapePair) -> (f64, f64) {
    let pa = psi(s.a);
    let pb = psi(s.b);
    let pab = psi(s.a + s.b);
    (pa - pb, pb - pab)
}

/// Evaluates one observation. Returns `None` when the required transformed
/// or powered shapes do not exist.
pub(crate) fn obs_term(
    kind: EstimatorKind,
    y: f64,
    mu: f64,
    phi: f64,
    t_mu: f64,
    t_phi: f64,
) -> Option<ObsTerm> {
    let (ly, l1y, ystar) = logs(y);
    let link = ShapePair::mean_precision_unchecked(mu, phi);
    let q = kind.q();
    if q == 1.0 {
        let (ms, md) = log_moments(link);
        let lf = logpdf_shapes(ly, l1y, link);
        return Some(ObsTerm {
            value: -lf,
            d_eta_mu: -(phi * (ystar - ms) * t_mu),
            d_eta_phi: -((mu * (ystar - ms) + l1y - md) * t_phi),
            weight: 1.0,
        });
    }
    match kind {
        EstimatorKind::Mle => unreachable!("q = 1 handled above"),
        EstimatorKind::Smle { .. } => {
            let working = link.powered(1.0 / q);
            if !working.is_valid() {
                return None;
            }
            let (ms, md) = log_moments(working);
            let lf = logpdf_shapes(ly, l1y, working);
            let w = ((1.0 - q) * lf).exp();
            let lq = (w - 1.0) / (1.0 - q);
            let s_mu = phi * (ystar - ms) * t_mu / q;
            let s_phi = (mu * (ystar - ms) + l1y - md) * t_phi / q;
            Some(ObsTerm {
                value: -lq,
                d_eta_mu: -(s_mu * w),
                d_eta_phi: -(s_phi * w),
                weight: w,
            })
        }
        EstimatorKind::Mdpde { .. } => {
            let alpha = 1.0 - q;
            let shifted = link.powered(2.0 - q);
            if !shifted.is_valid() {
                return None;
            }
            let (ms, md) = log_moments(link);
            let lf = logpdf_shapes(ly, l1y, link);
            let w = (alpha * lf).exp();
            let log_int = lbeta(shifted.a, shifted.b) - (2.0 - q) * lbeta(link.a, link.b);
            let int = log_int.exp();
            let (ms_s, md_s) = log_moments(shifted);
            // score at the link level and its f^(1-q)-weighted expectation
            let u_mu = phi * (ystar - ms) * t_mu;
            let u_phi = (mu * (ystar - ms) + l1y - md) * t_phi;
            let e_mu = int * phi * (ms_s - ms) * t_mu;
            let e_phi = int * (mu * (ms_s - ms) + md_s - md) * t_phi;
            Some(ObsTerm {
                value: int - (1.0 + 1.0 / alpha) * w,
                d_eta_mu: (2.0 - q) * (e_mu - u_mu * w),
                d_eta_phi: (2.0 - q) * (e_phi - u_phi * w),
                weight: w,
            })
        }
    }
}

/// All per-observation terms, or the list of observations where the
/// objective is undefined.
pub(crate) fn obs_terms(
    spec: &ModelSpec,
    theta: &Theta,
    kind: EstimatorKind,
) -> std::result::Result<Vec<ObsTerm>, Vec<usize>> {
    let ll = predict_unchecked(spec, theta);
    let mut out = Vec::with_capacity(spec.n());
    let mut bad = Vec::new();
    for i in 0..spec.n() {
        let (mu, phi) = (ll.mu[i], ll.phi[i]);
        let t_mu = 1.0 / spec.mean_link.deriv(mu);
        let t_phi = 1.0 / spec.precision_link.deriv(phi);
        match obs_term(kind, spec.y[i], mu, phi, t_mu, t_phi) {
            Some(t) => out.push(t),
            None => bad.push(i),
        }
    }
    if bad.is_empty() {
        Ok(out)
    } else {
        Err(bad)
    }
}

fn infeasible(kind: EstimatorKind, indices: Vec<usize>) -> Error {
    match kind {
        EstimatorKind::Mdpde { .. } => Error::NonIntegrable { indices },
        _ => Error::Infeasible {
            q: kind.q(),
            indices,
        },
    }
}

/// Objective in minimization form together with its gradient.
pub(crate) fn value_and_gradient(
    spec: &ModelSpec,
    theta: &Theta,
    kind: EstimatorKind,
) -> Result<(f64, DVector<f64>)> {
    let terms = obs_terms(spec, theta, kind).map_err(|bad| infeasible(kind, bad))?;
    let value: f64 = terms.iter().map(|t| t.value).sum();
    let d_mu = DVector::from_iterator(terms.len(), terms.iter().map(|t| t.d_eta_mu));
    let d_phi = DVector::from_iterator(terms.len(), terms.iter().map(|t| t.d_eta_phi));
    let g_beta = spec.x.tr_mul(&d_mu);
    let g_gamma = spec.z.tr_mul(&d_phi);
    let grad = DVector::from_iterator(spec.p(), g_beta.iter().chain(g_gamma.iter()).copied());
    Ok((value, grad))
}

/// Log-likelihood of the beta regression model.
pub fn loglik(spec: &ModelSpec, theta: &Theta) -> Result<f64> {
    theta.check_dims(spec)?;
    let (v, _) = value_and_gradient(spec, theta, EstimatorKind::Mle)?;
    Ok(-v)
}

/// Score vector (gradient of the log-likelihood).
pub fn score(spec: &ModelSpec, theta: &Theta) -> Result<DVector<f64>> {
    theta.check_dims(spec)?;
    let (_, g) = value_and_gradient(spec, theta, EstimatorKind::Mle)?;
    Ok(-g)
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "tuning constant must lie in (0, 1], got {q}"
        )))
    }
}

/// Reparameterized L_q-likelihood: the sum of `L_q(f*(y_i))` where `f*` is
/// the beta density at the working parameters and
/// `L_q(u) = (u^(1-q) - 1) / (1 - q)`.
pub fn lq_objective(spec: &ModelSpec, theta: &Theta, q: f64) -> Result<f64> {
    check_q(q)?;
    theta.check_dims(spec)?;
    let (v, _) = value_and_gradient(spec, theta, EstimatorKind::Smle { q })?;
    Ok(-v)
}

/// Gradient of [`lq_objective`]: the sum of the weighted modified scores.
pub fn lq_gradient(spec: &ModelSpec, theta: &Theta, q: f64) -> Result<DVector<f64>> {
    check_q(q)?;
    theta.check_dims(spec)?;
    let (_, g) = value_and_gradient(spec, theta, EstimatorKind::Smle { q })?;
    Ok(-g)
}

/// Empirical density power divergence (up to a constant), minimized by the
/// MDPDE. Equals the negative log-likelihood at `q = 1`.
pub fn mdpde_objective(spec: &ModelSpec, theta: &Theta, q: f64) -> Result<f64> {
    check_q(q)?;
    theta.check_dims(spec)?;
    let (v, _) = value_and_gradient(spec, theta, EstimatorKind::Mdpde { q })?;
    Ok(v)
}

/// Gradient of [`mdpde_objective`], equal to
/// `(2 - q) * sum_i { E[U f^(1-q)] - U(y_i) f(y_i)^(1-q) }`.
pub fn mdpde_gradient(spec: &ModelSpec, theta: &Theta, q: f64) -> Result<DVector<f64>> {
    check_q(q)?;
    theta.check_dims(spec)?;
    let (_, g) = value_and_gradient(spec, theta, EstimatorKind::Mdpde { q })?;
    Ok(g)
}

/// Per-observation weighted estimating function of an estimator (the
/// summand whose total vanishes at the estimate), as a `p`-vector.
///
/// For the SMLE this is `U*(y) f*(y)^(1-q)`; for the MDPDE it is
/// `U(y) f(y)^(1-q) - E[U f^(1-q)]`; for the MLE it is the score.
pub fn estimating_function(
    kind: EstimatorKind,
    y: f64,
    x_row: &[f64],
    z_row: &[f64],
    theta: &Theta,
    mean_link: crate::model::LinkKind,
    precision_link: crate::model::LinkKind,
) -> Option<DVector<f64>> {
    let eta_mu: f64 = x_row
        .iter()
        .zip(theta.beta.iter())
        .map(|(a, b)| a * b)
        .sum();
    let eta_phi: f64 = z_row
        .iter()
        .zip(theta.gamma.iter())
        .map(|(a, b)| a * b)
        .sum();
    let mu = mean_link.inverse_saturated(eta_mu);
    let phi = precision_link.inverse_saturated(eta_phi);
    let t_mu = 1.0 / mean_link.deriv(mu);
    let t_phi = 1.0 / precision_link.deriv(phi);
    let t = obs_term(kind, y, mu, phi, t_mu, t_phi)?;
    // undo the minimization sign and the (2 - q) factor of the divergence
    let scale = match kind {
        EstimatorKind::Mdpde { q } if q < 1.0 => -1.0 / (2.0 - q),
        _ => -1.0,
    };
    Some(DVector::from_iterator(
        x_row.len() + z_row.len(),
        x_row
            .iter()
            .map(|v| scale * t.d_eta_mu * v)
            .chain(z_row.iter().map(|v| scale * t.d_eta_phi * v)),
    ))
}

/// Raw per-observation weights at `theta` (`f*^(1-q)` for the SMLE,
/// `f^(1-q)` for the MDPDE, ones for the MLE).
pub fn raw_weights(spec: &ModelSpec, theta: &Theta, kind: EstimatorKind) -> Result<Vec<f64>> {
    theta.check_dims(spec)?;
    let terms = obs_terms(spec, theta, kind).map_err(|bad| infeasible(kind, bad))?;
    Ok(terms.into_iter().map(|t| t.weight).collect())
}
