//! CSV ingestion and the JSON report written by the command-line tool.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::inference::wald_test;
use crate::model::{LinkKind, ModelSpec};
use crate::tuning::TuningTrace;

/// A numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
        Self::from_reader(file)
    }

    /// Reads a CSV with a header row. Every cell must parse as a number.
    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if names.is_empty() {
            return Err(Error::Data("CSV has no columns".into()));
        }
        let mut columns = vec![Vec::new(); names.len()];
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for (c, cell) in rec.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Data(format!(
                        "non-numeric value '{cell}' at row {}, column '{}'",
                        r + 1,
                        names[c]
                    ))
                })?;
                if !v.is_finite() {
                    return Err(Error::Data(format!(
                        "non-finite value at row {}, column '{}'",
                        r + 1,
                        names[c]
                    )));
                }
                columns[c].push(v);
            }
        }
        Ok(Self { names, columns })
    }

    pub fn n(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::Data(format!("missing column '{name}'")))
    }

    /// Builds a model with intercepts prepended to both designs.
    ///
    /// Responses equal to 0 or 1 are moved to `eps` or `1 - eps` when
    /// `clamp_eps` is given and rejected otherwise.
    pub fn to_spec(&self, columns: &ModelColumns) -> Result<ModelSpec> {
        let n = self.n();
        let mut y = self.column(&columns.response)?.to_vec();
        for (i, v) in y.iter_mut().enumerate() {
            match columns.clamp_eps {
                Some(eps) if *v == 0.0 => *v = eps,
                Some(eps) if *v == 1.0 => *v = 1.0 - eps,
                _ => {}
            }
            if !(*v > 0.0 && *v < 1.0) {
                return Err(Error::Data(format!(
                    "response '{}' at row {} is {v}, outside (0, 1){}",
                    columns.response,
                    i + 1,
                    if columns.clamp_eps.is_none() && (*v == 0.0 || *v == 1.0) {
                        "; pass a clamp epsilon to move boundary values inside"
                    } else {
                        ""
                    }
                )));
            }
        }
        let x = self.design(&columns.mean_cols, n)?;
        let z = self.design(&columns.precision_cols, n)?;
        let names = |cols: &[String], prefix: &str| {
            std::iter::once("(Intercept)".to_owned())
                .chain(cols.iter().cloned())
                .map(|c| format!("{prefix}{c}"))
                .collect::<Vec<_>>()
        };
        ModelSpec::with_names(
            y,
            x,
            z,
            columns.mean_link,
            columns.precision_link,
            names(&columns.mean_cols, ""),
            names(&columns.precision_cols, "(phi)_"),
        )
    }

    fn design(&self, cols: &[String], n: usize) -> Result<DMatrix<f64>> {
        let data: Vec<&[f64]> = cols.iter().map(|c| self.column(c)).collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(n, cols.len() + 1, |i, j| {
            if j == 0 {
                1.0
            } else {
                data[j - 1][i]
            }
        }))
    }
}

/// Which columns play which role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelColumns {
    pub response: String,
    #[serde(default)]
    pub mean_cols: Vec<String>,
    #[serde(default)]
    pub precision_cols: Vec<String>,
    #[serde(default)]
    pub clamp_eps: Option<f64>,
    #[serde(default = "default_mean_link")]
    pub mean_link: LinkKind,
    #[serde(default = "default_precision_link")]
    pub precision_link: LinkKind,
}

fn default_mean_link() -> LinkKind {
    LinkKind::Logit
}

fn default_precision_link() -> LinkKind {
    LinkKind::Log
}

impl ModelColumns {
    pub fn new(response: impl Into<String>) -> Self {
        Self {
            response: response.into(),
            mean_cols: Vec::new(),
            precision_cols: Vec::new(),
            clamp_eps: None,
            mean_link: LinkKind::Logit,
            precision_link: LinkKind::Log,
        }
    }

    pub fn mean(mut self, cols: &[&str]) -> Self {
        self.mean_cols = cols.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn precision(mut self, cols: &[&str]) -> Self {
        self.precision_cols = cols.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn clamp(mut self, eps: f64) -> Self {
        self.clamp_eps = Some(eps);
        self
    }
}

/// Loads a CSV straight into a [`ModelSpec`] with logit and log links.
pub fn load_csv(
    path: impl AsRef<Path>,
    response: &str,
    mean_cols: &[&str],
    precision_cols: &[&str],
    clamp_eps: Option<f64>,
) -> Result<ModelSpec> {
    let mut cols = ModelColumns::new(response)
        .mean(mean_cols)
        .precision(precision_cols);
    cols.clamp_eps = clamp_eps;
    Dataset::from_path(path)?.to_spec(&cols)
}

/// One row of the coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub estimate: f64,
    #[serde(with = "crate::serde_nan::scalar")]
    pub std_error: f64,
    #[serde(with = "crate::serde_nan::scalar")]
    pub z: f64,
    #[serde(with = "crate::serde_nan::scalar")]
    pub p_asymptotic: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_bootstrap: Option<f64>,
}

/// JSON document produced by `robeta fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub estimator: String,
    pub q: f64,
    pub coefficients: Vec<CoefficientRow>,
    /// Row-major; `null` where the covariance does not exist.
    pub covariance: Vec<Vec<Option<f64>>>,
    pub weights: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tuning_trace: Option<TuningTrace>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    /// The complete fit, enough to recompute every diagnostic.
    pub fit: FitResult,
}

impl FitReport {
    pub fn new(spec: &ModelSpec, fit: &FitResult) -> Self {
        let est = fit.theta_hat.to_vec();
        let coefficients = spec
            .coefficient_names()
            .into_iter()
            .enumerate()
            .map(|(j, name)| {
                let w = wald_test(fit, j, 0.0).expect("index in range");
                CoefficientRow {
                    name,
                    estimate: est[j],
                    std_error: w.std_error,
                    z: w.z,
                    p_asymptotic: w.p_asymptotic,
                    p_bootstrap: None,
                }
            })
            .collect();
        let covariance = fit
            .covariance
            .row_iter()
            .map(|r| r.iter().map(|&v| (!v.is_nan()).then_some(v)).collect())
            .collect();
        Self {
            estimator: fit.estimator.name().to_owned(),
            q: fit.q_used,
            coefficients,
            covariance,
            weights: fit.weights.clone(),
            tuning_trace: None,
            seed: None,
            fit: fit.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "y,x1,x2\n0.2,1.0,3\n0.5,2.0,1\n1.0,2.5,0\n0.7,0.5,2\n0.4,1.5,5\n";

    #[test]
    fn boundary_response_needs_clamp() {
        let d = Dataset::from_reader(CSV.as_bytes()).unwrap();
        let cols = ModelColumns::new("y").mean(&["x1"]);
        assert!(matches!(d.to_spec(&cols), Err(Error::Data(_))));
        let spec = d.to_spec(&cols.clamp(0.001)).unwrap();
        assert_eq!(spec.y[2], 0.999);
        assert_eq!((spec.p1(), spec.p2()), (2, 1));
        assert_eq!(spec.x_names, vec!["(Intercept)", "x1"]);
        assert_eq!(spec.z_names, vec!["(phi)_(Intercept)"]);
    }

    #[test]
    fn empty_mean_columns_give_intercept_only() {
        let d = Dataset::from_reader(CSV.as_bytes()).unwrap();
        let spec = d.to_spec(&ModelColumns::new("y").clamp(0.01)).unwrap();
        assert_eq!(spec.p1(), 1);
        assert!(spec.x.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn errors_name_the_problem() {
        let d = Dataset::from_reader(CSV.as_bytes()).unwrap();
        let e = d
            .to_spec(&ModelColumns::new("y").mean(&["nope"]).clamp(0.01))
            .unwrap_err();
        assert!(e.to_string().contains("nope"));
        let bad = "y,x\n0.2,1\n0.3,abc\n";
        let e = Dataset::from_reader(bad.as_bytes()).unwrap_err();
        assert!(e.to_string().contains("row 2") && e.to_string().contains("'x'"));
    }
}
