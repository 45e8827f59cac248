//! Estimators: maximum likelihood, the surrogate maximum likelihood
//! estimator (SMLE) and the minimum density power divergence estimator
//! (MDPDE), all fitted by a common quasi-Newton driver.

pub mod objective;
pub mod optim;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference;
use crate::model::{ModelSpec, Theta};
pub use objective::{
    estimating_function, loglik, lq_gradient, lq_objective, mdpde_gradient, mdpde_objective,
    raw_weights, score,
};
pub use optim::{OptimOptions, OptimOutcome};

/// Which estimator to fit. `q = 1` variants coincide with the MLE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EstimatorKind {
    Mle,
    Smle { q: f64 },
    Mdpde { q: f64 },
}

impl EstimatorKind {
    pub fn q(self) -> f64 {
        match self {
            EstimatorKind::Mle => 1.0,
            EstimatorKind::Smle { q } | EstimatorKind::Mdpde { q } => q,
        }
    }

    /// Same estimator family at another tuning constant.
    pub fn with_q(self, q: f64) -> Self {
        match self {
            EstimatorKind::Mle => EstimatorKind::Mle,
            EstimatorKind::Smle { .. } => EstimatorKind::Smle { q },
            EstimatorKind::Mdpde { .. } => EstimatorKind::Mdpde { q },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Mle => "mle",
            EstimatorKind::Smle { .. } => "smle",
            EstimatorKind::Mdpde { .. } => "mdpde",
        }
    }

    fn validate(self) -> Result<()> {
        let q = self.q();
        if q > 0.0 && q <= 1.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "tuning constant must lie in (0, 1], got {q}"
            )))
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorKind::Mle => write!(f, "mle"),
            EstimatorKind::Smle { q } => write!(f, "smle(q = {q})"),
            EstimatorKind::Mdpde { q } => write!(f, "mdpde(q = {q})"),
        }
    }
}

/// Outcome of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub estimator: EstimatorKind,
    pub q_used: f64,
    pub theta_hat: Theta,
    /// Asymptotic covariance (`K1^-1` for the MLE, the sandwich otherwise).
    /// Filled with NaN when the covariance does not exist at the estimate.
    #[serde(with = "crate::serde_nan::matrix")]
    pub covariance: DMatrix<f64>,
    #[serde(with = "crate::serde_nan::vec")]
    pub std_errors: Vec<f64>,
    /// Robustness weights divided by their maximum, in `(0, 1]`.
    pub weights: Vec<f64>,
    /// Weights before normalization: `f*(y)^(1-q)` (SMLE) or `f(y)^(1-q)` (MDPDE).
    pub raw_weights: Vec<f64>,
    /// Log-likelihood (MLE), L_q-likelihood (SMLE) or divergence (MDPDE).
    pub objective_value: f64,
    #[serde(with = "crate::serde_nan::scalar")]
    pub gradient_sup_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Coefficient pinned during the fit, if any.
    pub fixed: Option<(usize, f64)>,
}

impl FitResult {
    pub fn has_covariance(&self) -> bool {
        self.std_errors.iter().all(|s| s.is_finite() && *s > 0.0)
    }
}

/// Knobs for [`fit_with`].
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub optim: OptimOptions,
    /// Pin coefficient `index` (in the concatenated `(beta, gamma)` order)
    /// at the given value and estimate the rest.
    pub fixed: Option<(usize, f64)>,
    /// Step of the decreasing-q warm-start path used when the starting
    /// point is infeasible for the requested q.
    pub path_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            optim: OptimOptions::default(),
            fixed: None,
            path_step: 0.02,
        }
    }
}

/// Fits `estimator` with default options.
pub fn fit(spec: &ModelSpec, estimator: EstimatorKind, init: Option<&Theta>) -> Result<FitResult> {
    fit_with(spec, estimator, init, &FitOptions::default())
}

pub fn fit_with(
    spec: &ModelSpec,
    estimator: EstimatorKind,
    init: Option<&Theta>,
    opts: &FitOptions,
) -> Result<FitResult> {
    estimator.validate()?;
    let p = spec.p();
    if let Some((j, v)) = opts.fixed {
        if j >= p || !v.is_finite() {
            return Err(Error::Domain(format!("cannot pin coefficient {j} at {v}")));
        }
    }
    let mut start = match init {
        Some(t) => {
            t.check_dims(spec)?;
            t.clone()
        }
        None => initial_values(spec)?,
    };
    if let Some((j, v)) = opts.fixed {
        let mut s = start.to_vec();
        s[j] = v;
        start = Theta::from_slice(spec.p1(), &s);
    }

    if objective::obs_terms(spec, &start, estimator).is_err() {
        start = warm_start_path(spec, estimator, &start, opts)?;
    }

    let outcome = run(spec, estimator, &start, opts)?;
    let outcome = if outcome.converged {
        outcome
    } else {
        let perturbed = perturb(&start, opts.fixed);
        match run(spec, estimator, &perturbed, opts) {
            Ok(o) if o.converged => o,
            Ok(o) => return Err(non_convergence(spec, estimator, o, opts.fixed)),
            Err(_) => return Err(non_convergence(spec, estimator, outcome, opts.fixed)),
        }
    };
    finish(spec, estimator, outcome, opts.fixed)
}

fn non_convergence(
    spec: &ModelSpec,
    estimator: EstimatorKind,
    o: OptimOutcome,
    fixed: Option<(usize, f64)>,
) -> Error {
    let theta = expand(spec, &o.x, fixed);
    Error::NonConvergence {
        iterations: o.iterations,
        objective: natural_sign(estimator, o.value),
        best: Box::new(theta),
    }
}

/// Objective values are minimized internally; report them in their usual
/// orientation (likelihoods are maximized, divergences minimized).
fn natural_sign(estimator: EstimatorKind, v: f64) -> f64 {
    match estimator {
        EstimatorKind::Mdpde { .. } => v,
        _ => -v,
    }
}

fn free_indices(p: usize, fixed: Option<(usize, f64)>) -> Vec<usize> {
    (0..p)
        .filter(|&j| fixed.is_none_or(|(f, _)| f != j))
        .collect()
}

fn expand(spec: &ModelSpec, free: &DVector<f64>, fixed: Option<(usize, f64)>) -> Theta {
    let p = spec.p();
    let mut full = Vec::with_capacity(p);
    let mut it = free.iter();
    for j in 0..p {
        match fixed {
            Some((f, v)) if f == j => full.push(v),
            _ => full.push(*it.next().expect("free length")),
        }
    }
    Theta::from_slice(spec.p1(), &full)
}

fn run(
    spec: &ModelSpec,
    estimator: EstimatorKind,
    start: &Theta,
    opts: &FitOptions,
) -> Result<OptimOutcome> {
    let p = spec.p();
    let free = free_indices(p, opts.fixed);
    let full0 = start.to_vec();
    let x0 = DVector::from_iterator(free.len(), free.iter().map(|&j| full0[j]));

    let h0 = inference::fisher_information(spec, start)
        .ok()
        .map(|k| k.select_rows(&free).select_columns(&free))
        .and_then(|k| k.cholesky())
        .map(|c| c.inverse());

    let objective = |x: &DVector<f64>| -> Option<(f64, DVector<f64>)> {
        let theta = expand(spec, x, opts.fixed);
        let (v, g) = objective::value_and_gradient(spec, &theta, estimator).ok()?;
        let g = DVector::from_iterator(free.len(), free.iter().map(|&j| g[j]));
        Some((v, g))
    };
    optim::minimize(objective, x0, h0, &opts.optim).ok_or_else(|| {
        let bad = objective::obs_terms(spec, start, estimator)
            .err()
            .unwrap_or_default();
        Error::Infeasible {
            q: estimator.q(),
            indices: bad,
        }
    })
}

fn perturb(start: &Theta, fixed: Option<(usize, f64)>) -> Theta {
    let p1 = start.beta.len();
    let v: Vec<f64> = start
        .to_vec()
        .iter()
        .enumerate()
        .map(|(j, &x)| match fixed {
            Some((f, _)) if f == j => x,
            _ => x + if j % 2 == 0 { 0.1 } else { -0.1 },
        })
        .collect();
    Theta::from_slice(p1, &v)
}

/// Walks q down from 1 to the target in steps of `path_step`, warm-starting
/// each fit from the previous one, to reach a feasible starting point.
fn warm_start_path(
    spec: &ModelSpec,
    estimator: EstimatorKind,
    start: &Theta,
    opts: &FitOptions,
) -> Result<Theta> {
    let target = estimator.q();
    let mut current = start.clone();
    let mut k = 0usize;
    loop {
        let q = 1.0 - k as f64 * opts.path_step;
        if q <= target + 1e-12 {
            break;
        }
        let kind = estimator.with_q(q);
        if objective::obs_terms(spec, &current, kind).is_ok() {
            if let Ok(o) = run(spec, kind, &current, opts) {
                current = expand(spec, &o.x, opts.fixed);
            }
        }
        k += 1;
    }
    match objective::obs_terms(spec, &current, estimator) {
        Ok(_) => Ok(current),
        Err(indices) => Err(match estimator {
            EstimatorKind::Mdpde { .. } => Error::NonIntegrable { indices },
            _ => Error::Infeasible { q: target, indices },
        }),
    }
}

fn finish(
    spec: &ModelSpec,
    estimator: EstimatorKind,
    o: OptimOutcome,
    fixed: Option<(usize, f64)>,
) -> Result<FitResult> {
    let theta = expand(spec, &o.x, fixed);
    let raw = raw_weights(spec, &theta, estimator)?;
    let max = raw.iter().copied().fold(f64::MIN, f64::max);
    let weights = raw.iter().map(|w| w / max).collect();
    let p = spec.p();
    let covariance = inference::covariance(spec, &theta, estimator)
        .unwrap_or_else(|_| DMatrix::from_element(p, p, f64::NAN));
    let std_errors = (0..p)
        .map(|j| {
            let v = covariance[(j, j)];
            if v > 0.0 {
                v.sqrt()
            } else {
                f64::NAN
            }
        })
        .collect();
    Ok(FitResult {
        estimator,
        q_used: estimator.q(),
        theta_hat: theta,
        covariance,
        std_errors,
        weights,
        raw_weights: raw,
        objective_value: natural_sign(estimator, o.value),
        gradient_sup_norm: o.gradient.amax(),
        converged: o.converged,
        iterations: o.iterations,
        fixed,
    })
}

/// Starting values: least squares of `g_mu(y~)` on `X` with
/// `y~ = (y (n - 1) + 0.5) / n`, and a moment estimate of the precision.
pub fn initial_values(spec: &ModelSpec) -> Result<Theta> {
    let n = spec.n() as f64;
    let link = spec.mean_link;
    let ys: DVector<f64> = DVector::from_iterator(
        spec.n(),
        spec.y.iter().map(|&y| link.eval((y * (n - 1.0) + 0.5) / n)),
    );
    let beta = least_squares(&spec.x, &ys)?;
    let eta = &spec.x * &beta;
    let resid = &ys - &eta;
    let dof = (n - spec.p1() as f64).max(1.0);
    let s2 = resid.norm_squared() / dof;
    let mut phi_sum = 0.0;
    for &e in eta.iter() {
        let mu = link.inverse_saturated(e);
        let var = s2 / link.deriv(mu).powi(2);
        phi_sum += mu * (1.0 - mu) / var - 1.0;
    }
    let phi = (phi_sum / n).max(1.0);
    let target = DVector::from_element(spec.n(), spec.precision_link.eval(phi));
    let gamma = least_squares(&spec.z, &target)?;
    Ok(Theta { beta, gamma })
}

fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.clone()
        .svd(true, true)
        .solve(b, 1e-12)
        .map_err(|e| Error::Singular(e.to_string()))
}
