//! Monte Carlo studies: scenario generation, contamination, replication and
//! summary metrics.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit, EstimatorKind, FitResult};
use crate::inference::{substream, wald_test};
use crate::model::{predict_link_level, LinkKind, ModelSpec, Theta};
use crate::numeric::{sample_shapes, ShapePair};
use crate::tuning::{select_q_with_fit, EstimatorFamily, TuningConfig};

/// How contaminated responses are generated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ContaminationRule {
    /// The observations with the smallest means are redrawn with mean
    /// `(1 + mu) / 2`.
    SmallestMeansToMidpoint,
    /// Half of the contaminated observations come from the largest means,
    /// redrawn with mean `a1 c / (1 + a1 c)`, and half from the smallest,
    /// redrawn with mean `a2 c / (1 + a2 c)`, where `c = mu / (1 - mu)`.
    OddsScaling { a1: f64, a2: f64 },
}

/// A simulation design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: u32,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Number of covariates in the mean submodel besides the intercept.
    pub mean_covariates: usize,
    /// Whether the precision submodel reuses the mean covariates.
    pub precision_uses_covariates: bool,
    pub n_base: usize,
    /// `n = n_base * replication_factor`; the base design is repeated in blocks.
    pub replication_factor: usize,
    pub contamination: f64,
    pub rule: ContaminationRule,
    pub mean_link: LinkKind,
    pub precision_link: LinkKind,
    pub replications: usize,
    pub seed: u64,
    /// Seed of the frozen covariate draw (derived from `seed` if absent).
    #[serde(default)]
    pub covariate_seed: Option<u64>,
}

impl ScenarioConfig {
    /// Constant precision, one covariate, means near zero.
    pub fn scenario1(n: usize, contamination: f64, replications: usize, seed: u64) -> Self {
        Self {
            scenario: 1,
            beta: vec![-1.8, -2.0],
            gamma: vec![4.5],
            mean_covariates: 1,
            precision_uses_covariates: false,
            n_base: 40,
            replication_factor: (n / 40).max(1),
            contamination,
            rule: ContaminationRule::SmallestMeansToMidpoint,
            mean_link: LinkKind::Logit,
            precision_link: LinkKind::Log,
            replications,
            seed,
            covariate_seed: None,
        }
    }

    /// Varying precision, two covariates in both submodels, means near 0.4.
    pub fn scenario2(n: usize, contamination: f64, replications: usize, seed: u64) -> Self {
        Self {
            scenario: 2,
            beta: vec![0.8, -1.2, -1.2],
            gamma: vec![3.8, 0.7, 0.7],
            mean_covariates: 2,
            precision_uses_covariates: true,
            n_base: 40,
            replication_factor: (n / 40).max(1),
            contamination,
            rule: ContaminationRule::OddsScaling { a1: 0.01, a2: 6.0 },
            mean_link: LinkKind::Logit,
            precision_link: LinkKind::Log,
            replications,
            seed,
            covariate_seed: None,
        }
    }

    pub fn n(&self) -> usize {
        self.n_base * self.replication_factor
    }

    pub fn theta(&self) -> Theta {
        Theta::new(self.beta.clone(), self.gamma.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let p2 = if self.precision_uses_covariates {
            self.mean_covariates + 1
        } else {
            1
        };
        if self.beta.len() != self.mean_covariates + 1 || self.gamma.len() != p2 {
            return Err(Error::Dimension(format!(
                "scenario expects {} mean and {p2} precision coefficients",
                self.mean_covariates + 1
            )));
        }
        if !(0.0..0.5).contains(&self.contamination) {
            return Err(Error::Domain(format!(
                "contamination fraction must lie in [0, 0.5), got {}",
                self.contamination
            )));
        }
        if self.n_base == 0 || self.replication_factor == 0 || self.replications == 0 {
            return Err(Error::Domain(
                "sizes and replication counts must be positive".into(),
            ));
        }
        Ok(())
    }

    /// The `n x (1 + k)` covariate block: the base draw repeated.
    pub fn design(&self) -> DMatrix<f64> {
        let mut rng = substream(self.covariate_seed.unwrap_or(self.seed), u64::MAX);
        let k = self.mean_covariates;
        let base: Vec<Vec<f64>> = (0..self.n_base)
            .map(|_| (0..k).map(|_| rng.random::<f64>()).collect())
            .collect();
        DMatrix::from_fn(self.n(), k + 1, |i, j| {
            if j == 0 {
                1.0
            } else {
                base[i % self.n_base][j - 1]
            }
        })
    }

    fn spec_for(&self, y: Vec<f64>, x: &DMatrix<f64>) -> Result<ModelSpec> {
        let z = if self.precision_uses_covariates {
            x.clone()
        } else {
            DMatrix::from_element(self.n(), 1, 1.0)
        };
        ModelSpec::new(y, x.clone(), z, self.mean_link, self.precision_link)
    }
}

/// One simulated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioData {
    pub clean: ModelSpec,
    pub contaminated: ModelSpec,
    pub contaminated_rows: Vec<usize>,
    pub mu: Vec<f64>,
    pub phi: Vec<f64>,
}

/// Number of rows affected by a contamination fraction.
fn affected(frac: f64, n: usize) -> usize {
    if frac <= 0.0 {
        0
    } else {
        ((frac * n as f64) - 1e-9).ceil() as usize
    }
}

/// Row indices sorted by increasing mean, ties by index.
fn by_mean(mu: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..mu.len()).collect();
    idx.sort_by(|&a, &b| mu[a].total_cmp(&mu[b]).then(a.cmp(&b)));
    idx
}

/// Replacement mean and the rows it applies to.
fn contamination_plan(config: &ScenarioConfig, mu: &[f64]) -> Vec<(usize, f64)> {
    let n = mu.len();
    let order = by_mean(mu);
    match config.rule {
        ContaminationRule::SmallestMeansToMidpoint => {
            let k = affected(config.contamination, n);
            order[..k]
                .iter()
                .map(|&i| (i, (1.0 + mu[i]) / 2.0))
                .collect()
        }
        ContaminationRule::OddsScaling { a1, a2 } => {
            let k = affected(config.contamination / 2.0, n);
            let scale = |i: usize, a: f64| {
                let c = mu[i] / (1.0 - mu[i]);
                (i, a * c / (1.0 + a * c))
            };
            let mut plan: Vec<(usize, f64)> =
                order[n - k..].iter().map(|&i| scale(i, a1)).collect();
            plan.extend(order[..k].iter().map(|&i| scale(i, a2)));
            plan.sort_by_key(|&(i, _)| i);
            plan
        }
    }
}

/// Draws a clean sample and its contaminated counterpart. The two share
/// every response except the contaminated rows.
pub fn generate_scenario(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<ScenarioData> {
    config.validate()?;
    let x = config.design();
    let skeleton = config.spec_for(vec![0.5; config.n()], &x)?;
    let ll = predict_link_level(&skeleton, &config.theta())?;
    let y: Vec<f64> = ll
        .mu
        .iter()
        .zip(&ll.phi)
        .map(|(&m, &p)| sample_shapes(ShapePair::mean_precision_unchecked(m, p), rng))
        .collect();
    let plan = contamination_plan(config, &ll.mu);
    let mut yc = y.clone();
    for &(i, m) in &plan {
        yc[i] = sample_shapes(ShapePair::mean_precision_unchecked(m, ll.phi[i]), rng);
    }
    Ok(ScenarioData {
        clean: config.spec_for(y, &x)?,
        contaminated: config.spec_for(yc, &x)?,
        contaminated_rows: plan.iter().map(|&(i, _)| i).collect(),
        mu: ll.mu,
        phi: ll.phi,
    })
}

/// An estimator as used in a study: fixed `q` or selected per sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "lowercase")]
pub enum StudyEstimator {
    Mle,
    Smle { q: Option<f64> },
    Mdpde { q: Option<f64> },
}

impl StudyEstimator {
    pub fn label(&self) -> String {
        match self {
            StudyEstimator::Mle => "mle".into(),
            StudyEstimator::Smle { q: None } => "smle".into(),
            StudyEstimator::Mdpde { q: None } => "mdpde".into(),
            StudyEstimator::Smle { q: Some(q) } => format!("smle(q={q})"),
            StudyEstimator::Mdpde { q: Some(q) } => format!("mdpde(q={q})"),
        }
    }

    fn run(&self, spec: &ModelSpec, tuning: &TuningConfig) -> Result<FitResult> {
        match *self {
            StudyEstimator::Mle => fit(spec, EstimatorKind::Mle, None),
            StudyEstimator::Smle { q: Some(q) } => fit(spec, EstimatorKind::Smle { q }, None),
            StudyEstimator::Mdpde { q: Some(q) } => fit(spec, EstimatorKind::Mdpde { q }, None),
            StudyEstimator::Smle { q: None } => {
                Ok(select_q_with_fit(spec, EstimatorFamily::Smle, tuning)?.1)
            }
            StudyEstimator::Mdpde { q: None } => {
                Ok(select_q_with_fit(spec, EstimatorFamily::Mdpde, tuning)?.1)
            }
        }
    }

    /// MLE and the two robust estimators with `q`
    /// chosen by the selector.
    pub fn standard_set() -> Vec<StudyEstimator> {
        vec![
            StudyEstimator::Mle,
            StudyEstimator::Smle { q: None },
            StudyEstimator::Mdpde { q: None },
        ]
    }
}

/// One estimator on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub estimate: Vec<f64>,
    pub std_error: Vec<f64>,
    pub q: f64,
    /// Wald rejections at 5% of `theta_j = true theta_j`.
    pub reject: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: usize,
    /// One entry per estimator, `None` where the fit failed.
    pub estimates: Vec<Option<EstimateRecord>>,
}

/// Aggregates for one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub label: String,
    pub tmse: f64,
    pub bias: Vec<f64>,
    pub mse: Vec<f64>,
    pub rejection_rates: Vec<f64>,
    pub median_q: f64,
    pub fraction_q_one: f64,
    pub failures: usize,
}

/// Output of [`run_study`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCResult {
    pub config: ScenarioConfig,
    pub estimators: Vec<StudyEstimator>,
    pub summaries: Vec<EstimatorSummary>,
    pub replications: Vec<ReplicationRecord>,
}

impl MCResult {
    /// `TMSE(a) / TMSE(b)` by label.
    pub fn tmse_ratio(&self, a: &str, b: &str) -> Option<f64> {
        let find = |l: &str| self.summaries.iter().find(|s| s.label == l).map(|s| s.tmse);
        Some(find(a)? / find(b)?)
    }

    pub fn summary(&self, label: &str) -> Option<&EstimatorSummary> {
        self.summaries.iter().find(|s| s.label == label)
    }

    /// Selected `q` per replication for estimator `label`.
    pub fn q_values(&self, label: &str) -> Vec<f64> {
        let Some(j) = self.summaries.iter().position(|s| s.label == label) else {
            return Vec::new();
        };
        self.replications
            .iter()
            .filter_map(|r| r.estimates[j].as_ref().map(|e| e.q))
            .collect()
    }

    /// One CSV row per replication and estimator.
    pub fn replications_csv(&self) -> Result<String> {
        let p = self.config.beta.len() + self.config.gamma.len();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![
            "replication".to_owned(),
            "estimator".to_owned(),
            "q".to_owned(),
        ];
        header.extend((1..=p).map(|j| format!("theta{j}")));
        header.extend((1..=p).map(|j| format!("se{j}")));
        w.write_record(&header)?;
        for r in &self.replications {
            for (e, s) in r.estimates.iter().zip(&self.summaries) {
                let mut row = vec![r.index.to_string(), s.label.clone()];
                match e {
                    Some(e) => {
                        row.push(e.q.to_string());
                        row.extend(e.estimate.iter().map(f64::to_string));
                        row.extend(e.std_error.iter().map(f64::to_string));
                    }
                    None => row.extend(std::iter::repeat_n("NA".to_owned(), 2 * p + 1)),
                }
                w.write_record(&row)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn record(fit: &FitResult, truth: &[f64]) -> EstimateRecord {
    let reject = truth
        .iter()
        .enumerate()
        .map(|(j, &t)| wald_test(fit, j, t).is_ok_and(|w| w.p_asymptotic < 0.05))
        .collect();
    EstimateRecord {
        estimate: fit.theta_hat.to_vec(),
        std_error: fit.std_errors.clone(),
        q: fit.q_used,
        reject,
    }
}

/// Runs the study. Replication `r` draws from [`substream`]`(seed, r)` and
/// results are merged in replication order, so the output does not depend on
/// the number of threads.
pub fn run_study(
    config: &ScenarioConfig,
    estimators: &[StudyEstimator],
    tuning: &TuningConfig,
) -> Result<MCResult> {
    config.validate()?;
    if estimators.is_empty() {
        return Err(Error::Domain("a study needs at least one estimator".into()));
    }
    let truth = config.theta().to_vec();
    let reps: Vec<ReplicationRecord> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(config.seed, r as u64);
            let estimates = match generate_scenario(config, &mut rng) {
                Ok(data) => estimators
                    .iter()
                    .map(|e| {
                        e.run(&data.contaminated, tuning)
                            .ok()
                            .map(|f| record(&f, &truth))
                    })
                    .collect(),
                Err(_) => vec![None; estimators.len()],
            };
            ReplicationRecord {
                index: r,
                estimates,
            }
        })
        .collect();
    let failed_reps = reps
        .iter()
        .filter(|r| r.estimates.iter().any(Option::is_none))
        .count();
    if failed_reps * 10 > config.replications {
        return Err(Error::TooManyFailures {
            what: "replications",
            failed: failed_reps,
            total: config.replications,
        });
    }
    let summaries = estimators
        .iter()
        .enumerate()
        .map(|(j, e)| {
            summarize(
                e.label(),
                reps.iter().map(|r| r.estimates[j].as_ref()),
                &truth,
            )
        })
        .collect();
    Ok(MCResult {
        config: config.clone(),
        estimators: estimators.to_vec(),
        summaries,
        replications: reps,
    })
}

fn summarize<'a>(
    label: String,
    records: impl Iterator<Item = Option<&'a EstimateRecord>>,
    truth: &[f64],
) -> EstimatorSummary {
    let p = truth.len();
    let (mut bias, mut mse, mut rej) = (vec![0.0; p], vec![0.0; p], vec![0.0; p]);
    let mut qs = Vec::new();
    let (mut ok, mut failures) = (0usize, 0usize);
    for rec in records {
        let Some(rec) = rec else {
            failures += 1;
            continue;
        };
        ok += 1;
        for j in 0..p {
            let e = rec.estimate[j] - truth[j];
            bias[j] += e;
            mse[j] += e * e;
            rej[j] += f64::from(u8::from(rec.reject[j]));
        }
        qs.push(rec.q);
    }
    let denom = ok.max(1) as f64;
    for v in bias.iter_mut().chain(mse.iter_mut()).chain(rej.iter_mut()) {
        *v /= denom;
    }
    let fraction_q_one = qs.iter().filter(|&&q| q == 1.0).count() as f64 / denom;
    qs.sort_by(f64::total_cmp);
    let median_q = if qs.is_empty() {
        f64::NAN
    } else if qs.len() % 2 == 1 {
        qs[qs.len() / 2]
    } else {
        0.5 * (qs[qs.len() / 2 - 1] + qs[qs.len() / 2])
    };
    EstimatorSummary {
        label,
        tmse: mse.iter().sum(),
        bias,
        mse,
        rejection_rates: rej,
        median_q,
        fraction_q_one,
        failures,
    }
}

/// Relative asymptotic efficiency `trace(V_1) / trace(V_q)` at `theta`.
pub fn relative_efficiency(theta: &Theta, spec: &ModelSpec, q: f64) -> Result<f64> {
    crate::inference::relative_efficiency(spec, theta, q)
}
