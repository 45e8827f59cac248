//! Data-driven choice of the tuning constant `q`.
//!
//! Estimates are computed on a descending grid `q_0 > q_1 > ... > q_m` and
//! standardized as `z = theta / (sqrt(n) se)`. The grid is stable when every
//! standardized quadratic variation `SQV_k = ||z_k - z_{k+1}|| / p` is below
//! the threshold `L`; then `q* = q_0`. Otherwise a new grid starts at the
//! smallest `q` of the lowest unstable pair. When a grid would have to reach
//! below `q_min`, the selector gives up and returns `q* = 1`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit, EstimatorKind, FitResult};
use crate::model::ModelSpec;

/// Selector settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningConfig {
    pub grid_spacing: f64,
    /// Number of SQV comparisons per grid; a grid holds `m + 1` values.
    pub grid_size: usize,
    pub q_min: f64,
    pub threshold: f64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            grid_spacing: 0.02,
            grid_size: 3,
            q_min: 0.5,
            threshold: 0.02,
        }
    }
}

impl TuningConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.grid_spacing > 0.0
            && self.grid_spacing < 1.0
            && self.grid_size >= 2
            && self.q_min > 0.0
            && self.q_min < 1.0
            && self.threshold > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "invalid tuning configuration {self:?}"
            )))
        }
    }

    /// Grid value `1 - k * spacing`, rounded to 12 decimals so that
    /// reported values read as typed.
    fn q_at(&self, k: usize) -> f64 {
        ((1.0 - k as f64 * self.grid_spacing) * 1e12).round() / 1e12
    }
}

/// Which robust estimator the selector tunes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorFamily {
    Smle,
    Mdpde,
}

impl EstimatorFamily {
    pub fn at(self, q: f64) -> EstimatorKind {
        match self {
            EstimatorFamily::Smle => EstimatorKind::Smle { q },
            EstimatorFamily::Mdpde => EstimatorKind::Mdpde { q },
        }
    }
}

/// One examined grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub q: Vec<f64>,
    /// `SQV` between consecutive grid values; infinite where a fit failed
    /// (written as `null` in JSON and read back as NaN).
    #[serde(with = "crate::serde_nan::vec")]
    pub sqv: Vec<f64>,
    pub stable: bool,
}

/// Everything the selector looked at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningTrace {
    /// Distinct `q` values fitted, in the order first visited.
    pub visited: Vec<f64>,
    /// Standardized estimates for each visited `q` (`None` if the fit failed).
    pub z_vectors: Vec<Option<Vec<f64>>>,
    pub grids: Vec<GridRecord>,
    pub q_star: f64,
    pub fallback_to_mle: bool,
    pub comparisons_per_grid: usize,
}

/// `z_j = theta_j / (sqrt(n) se_j)`.
pub fn standardized_vector(fit: &FitResult, n: usize) -> Result<Vec<f64>> {
    let root_n = (n as f64).sqrt();
    fit.theta_hat
        .to_vec()
        .iter()
        .zip(&fit.std_errors)
        .map(|(&t, &se)| {
            if se.is_finite() && se > 0.0 {
                Ok(t / (root_n * se))
            } else {
                Err(Error::Singular(format!(
                    "standard error {se} cannot standardize"
                )))
            }
        })
        .collect()
}

/// `||a - b||_2 / p`.
pub fn sqv(a: &[f64], b: &[f64], p: usize) -> f64 {
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    ss.sqrt() / p as f64
}

/// Selects `q` for `family`. Returns `q*` and the trace.
pub fn select_q(
    spec: &ModelSpec,
    family: EstimatorFamily,
    config: &TuningConfig,
) -> Result<(f64, TuningTrace)> {
    let (trace, _) = select_q_with_fit(spec, family, config)?;
    Ok((trace.q_star, trace))
}

/// As [`select_q`], also returning the fit at `q*`.
pub fn select_q_with_fit(
    spec: &ModelSpec,
    family: EstimatorFamily,
    config: &TuningConfig,
) -> Result<(TuningTrace, FitResult)> {
    config.validate()?;
    let m = config.grid_size;
    let n = spec.n();
    let p = spec.p();
    let mle = fit(spec, family.at(1.0), None)?;

    // grid index k stands for q = 1 - k * spacing
    let mut fits: BTreeMap<usize, Option<(FitResult, Option<Vec<f64>>)>> = BTreeMap::new();
    let z1 = standardized_vector(&mle, n).ok();
    fits.insert(0, Some((mle, z1)));
    let mut order = vec![0usize];
    let mut grids = Vec::new();
    let mut start = 0usize;

    let q_star_index = loop {
        let last = start + m;
        if config.q_at(last) < config.q_min - 1e-9 {
            break None;
        }
        for k in start..=last {
            if fits.contains_key(&k) {
                continue;
            }
            let init = fits
                .range(..k)
                .rev()
                .find_map(|(_, f)| f.as_ref().map(|(r, _)| r.theta_hat.clone()));
            let res = fit(spec, family.at(config.q_at(k)), init.as_ref())
                .ok()
                .map(|f| {
                    let z = standardized_vector(&f, n).ok();
                    (f, z)
                });
            fits.insert(k, res);
            order.push(k);
        }
        let z_of = |k: usize| fits[&k].as_ref().and_then(|(_, z)| z.as_ref());
        let values: Vec<f64> = (start..last)
            .map(|k| match (z_of(k), z_of(k + 1)) {
                (Some(a), Some(b)) => sqv(a, b, p),
                _ => f64::INFINITY,
            })
            .collect();
        let lowest_bad = values.iter().rposition(|&s| !(s < config.threshold));
        grids.push(GridRecord {
            q: (start..=last).map(|k| config.q_at(k)).collect(),
            sqv: values,
            stable: lowest_bad.is_none(),
        });
        match lowest_bad {
            None => break Some(start),
            Some(j) => start += j + 1,
        }
    };

    let visited = order.iter().map(|&k| config.q_at(k)).collect();
    let z_vectors = order
        .iter()
        .map(|k| fits[k].as_ref().and_then(|(_, z)| z.clone()))
        .collect();
    let (q_star, idx) = match q_star_index {
        Some(k) => (config.q_at(k), k),
        None => (1.0, 0),
    };
    let chosen = fits
        .remove(&idx)
        .flatten()
        .map(|(f, _)| f)
        .expect("the chosen grid point was fitted");
    let trace = TuningTrace {
        visited,
        z_vectors,
        grids,
        q_star,
        fallback_to_mle: q_star_index.is_none(),
        comparisons_per_grid: m,
    };
    Ok((trace, chosen))
}
