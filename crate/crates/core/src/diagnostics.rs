//! Residuals, leverage, robustness weights and simulated envelopes.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimation::{fit_with, FitOptions, FitResult};
use crate::inference::{simulate_response, substream};
use crate::model::{predict_link_level, ModelSpec, Theta};
use crate::numeric::{psi, psi1};

/// Leverages `h_ii`, the diagonal of `W^1/2 X (X' W X)^-1 X' W^1/2` with
/// `w_i = phi_i v_i / g'(mu_i)^2`.
pub fn leverage(spec: &ModelSpec, theta: &Theta) -> Result<Vec<f64>> {
    let ll = predict_link_level(spec, theta)?;
    let w: Vec<f64> = ll
        .mu
        .iter()
        .zip(&ll.phi)
        .map(|(&mu, &phi)| {
            let v = psi1(mu * phi) + psi1((1.0 - mu) * phi);
            phi * v / spec.mean_link.deriv(mu).powi(2)
        })
        .collect();
    let p1 = spec.p1();
    let mut xtwx = DMatrix::zeros(p1, p1);
    for (i, wi) in w.iter().enumerate() {
        let xi = spec.x.row(i);
        xtwx += *wi * xi.transpose() * xi;
    }
    let inv = xtwx
        .cholesky()
        .ok_or_else(|| Error::Singular("X' W X is not positive definite".into()))?
        .inverse();
    Ok((0..spec.n())
        .map(|i| {
            let xi = spec.x.row(i);
            w[i] * (xi * &inv * xi.transpose())[(0, 0)]
        })
        .collect())
}

/// Standardized weighted residual 2:
/// `r_i = (y*_i - mu*_i) / sqrt(v_i (1 - h_ii))` at the fitted parameters.
pub fn residuals_swr2(spec: &ModelSpec, fit: &FitResult) -> Result<Vec<f64>> {
    residuals_at(spec, &fit.theta_hat)
}

pub fn residuals_at(spec: &ModelSpec, theta: &Theta) -> Result<Vec<f64>> {
    let h = leverage(spec, theta)?;
    let ll = predict_link_level(spec, theta)?;
    Ok((0..spec.n())
        .map(|i| {
            let (mu, phi, y) = (ll.mu[i], ll.phi[i], spec.y[i]);
            let (a, b) = (mu * phi, (1.0 - mu) * phi);
            let ystar = (y / (1.0 - y)).ln();
            let mstar = psi(a) - psi(b);
            let v = psi1(a) + psi1(b);
            (ystar - mstar) / (v * (1.0 - h[i])).sqrt()
        })
        .collect())
}

/// Normalized robustness weights of a fit, in `(0, 1]`.
pub fn weight_report(fit: &FitResult) -> Vec<f64> {
    fit.weights.clone()
}

/// Pointwise bands for the sorted residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    /// Normal scores `Phi^-1((i - 3/8) / (n + 1/4))`.
    pub theoretical: Vec<f64>,
    /// Observed residuals in increasing order.
    pub sorted_residuals: Vec<f64>,
    /// Observation index of each sorted residual.
    pub order: Vec<usize>,
    pub lower: Vec<f64>,
    pub median: Vec<f64>,
    pub upper: Vec<f64>,
    /// Observations whose residual falls outside the band.
    pub flagged: Vec<usize>,
    pub simulations: usize,
    pub failures: usize,
    pub band: f64,
}

impl Envelope {
    pub fn fraction_outside(&self) -> f64 {
        self.flagged.len() as f64 / self.sorted_residuals.len() as f64
    }
}

/// Simulated envelope for a normal probability plot of the residuals.
///
/// Each simulation draws responses from the fitted model, refits with the
/// same estimator and `q`, and sorts the new residuals. Simulation `s` uses
/// [`substream`]`(seed, s)`.
pub fn simulated_envelope(
    spec: &ModelSpec,
    fit: &FitResult,
    n_sims: usize,
    band: f64,
    seed: u64,
) -> Result<Envelope> {
    if n_sims < 19 {
        return Err(Error::Domain(format!(
            "an envelope needs at least 19 simulations, got {n_sims}"
        )));
    }
    if !(band > 0.0 && band < 1.0) {
        return Err(Error::Domain(format!(
            "band must lie in (0, 1), got {band}"
        )));
    }
    let observed = residuals_swr2(spec, fit)?;
    let sims: Vec<Option<Vec<f64>>> = (0..n_sims)
        .into_par_iter()
        .map(|s| {
            let mut rng = substream(seed, s as u64);
            let y = simulate_response(spec, &fit.theta_hat, &mut rng).ok()?;
            let sp = spec.with_response(y).ok()?;
            let refit = fit_with(
                &sp,
                fit.estimator,
                Some(&fit.theta_hat),
                &FitOptions::default(),
            )
            .ok()?;
            let mut r = residuals_swr2(&sp, &refit).ok()?;
            if r.iter().any(|v| !v.is_finite()) {
                return None;
            }
            r.sort_by(f64::total_cmp);
            Some(r)
        })
        .collect();
    let good: Vec<Vec<f64>> = sims.into_iter().flatten().collect();
    let failures = n_sims - good.len();
    if failures * 5 > n_sims {
        return Err(Error::TooManyFailures {
            what: "envelope simulations",
            failed: failures,
            total: n_sims,
        });
    }
    Ok(bands(&observed, &good, band, failures))
}

fn bands(observed: &[f64], sims: &[Vec<f64>], band: f64, failures: usize) -> Envelope {
    let n = observed.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| observed[a].total_cmp(&observed[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| observed[i]).collect();
    let normal = Normal::standard();
    let theoretical = (1..=n)
        .map(|i| normal.inverse_cdf((i as f64 - 0.375) / (n as f64 + 0.25)))
        .collect();
    let tail = (1.0 - band) / 2.0;
    let (mut lower, mut median, mut upper) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut column = vec![0.0; sims.len()];
    for i in 0..n {
        for (c, s) in column.iter_mut().zip(sims) {
            *c = s[i];
        }
        column.sort_by(f64::total_cmp);
        lower[i] = quantile(&column, tail);
        median[i] = quantile(&column, 0.5);
        upper[i] = quantile(&column, 1.0 - tail);
    }
    let flagged = (0..n)
        .filter(|&i| sorted[i] < lower[i] || sorted[i] > upper[i])
        .map(|i| order[i])
        .collect();
    Envelope {
        theoretical,
        sorted_residuals: sorted,
        order,
        lower,
        median,
        upper,
        flagged,
        simulations: sims.len(),
        failures,
        band,
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Residuals, leverages, weights and (optionally) an envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub residuals: Vec<f64>,
    pub leverage: Vec<f64>,
    pub weights: Vec<f64>,
    pub envelope: Option<Envelope>,
    pub flagged: Vec<usize>,
}

impl DiagnosticsReport {
    pub fn new(spec: &ModelSpec, fit: &FitResult, envelope: Option<Envelope>) -> Result<Self> {
        let flagged = envelope
            .as_ref()
            .map(|e| e.flagged.clone())
            .unwrap_or_default();
        Ok(Self {
            residuals: residuals_swr2(spec, fit)?,
            leverage: leverage(spec, &fit.theta_hat)?,
            weights: weight_report(fit),
            envelope,
            flagged,
        })
    }

    /// Observations ordered by decreasing `|r_i|`.
    pub fn largest_residuals(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.residuals.len()).collect();
        idx.sort_by(|&a, &b| self.residuals[b].abs().total_cmp(&self.residuals[a].abs()));
        idx
    }

    /// Observations ordered by increasing weight.
    pub fn smallest_weights(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.weights.len()).collect();
        idx.sort_by(|&a, &b| self.weights[a].total_cmp(&self.weights[b]));
        idx
    }

    /// Plot-ready CSV of the envelope, one row per sorted residual.
    pub fn envelope_csv(&self) -> Result<String> {
        let env = self
            .envelope
            .as_ref()
            .ok_or_else(|| Error::Domain("report has no envelope".into()))?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "observation",
            "theoretical_quantile",
            "residual",
            "lower",
            "median",
            "upper",
            "flagged",
        ])?;
        for i in 0..env.order.len() {
            let obs = env.order[i];
            let r = env.sorted_residuals[i];
            let flagged = r < env.lower[i] || r > env.upper[i];
            w.write_record([
                (obs + 1).to_string(),
                env.theoretical[i].to_string(),
                r.to_string(),
                env.lower[i].to_string(),
                env.median[i].to_string(),
                env.upper[i].to_string(),
                flagged.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Per-observation CSV: residual, leverage and weight.
    pub fn observations_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["observation", "residual", "leverage", "weight"])?;
        for i in 0..self.residuals.len() {
            w.write_record([
                (i + 1).to_string(),
                self.residuals[i].to_string(),
                self.leverage[i].to_string(),
                self.weights[i].to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
