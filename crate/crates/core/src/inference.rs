//! Asymptotic covariance, Wald-type tests, parametric bootstrap p-values and
//! influence functions.
//!
//! The SMLE covariance is the sandwich `V = J^-1 K J^-T` with `J` and `K`
//! assembled from per-observation diagonals ([`SandwichDiagonals`]). Three
//! parameter levels appear in them: the link level `(mu, phi)` predicted by
//! the regression, the working level `T_{1/q}` of it, and the shifted level
//! `T_{2-q}` of the working level. Score second moments are taken under the
//! shifted law and first derivatives under the working law.
//!
//! The MDPDE sandwich uses the same moment algebra under the `T_{2-q}` and
//! `T_{3-2q}` transforms of the link-level law.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::estimation::objective::log_moments;
use crate::estimation::{fit_with, EstimatorKind, FitOptions, FitResult};
use crate::model::{predict_link_level, LinkKind, ModelSpec, Theta};
use crate::numeric::{lbeta, psi1, sample_shapes, ShapePair};

/// Largest tolerated condition number of `J` (or `K1`) before it is
/// reported as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Per-observation diagonals of the SMLE sandwich.
///
/// Symbols: `W` is the working law, `S` the shifted law and `L` the link
/// level. `b1 = B(W)^q / B(L)`, `b2 = B(S) / (B(W)^{2(1-q)} B(L))`,
/// `v = psi'(a_W) + psi'(b_W)`, `c* = phi_L [mu_L psi'(a_W) - (1 - mu_L) psi'(b_W)]`,
/// `d* = mu_L^2 psi'(a_W) + (1 - mu_L)^2 psi'(b_W) - psi'(phi_W)`, and the
/// `_s` variants evaluate the same expressions under `S`. The mean shifts are
/// `m1 = mu*_S - mu*_W`, `m2 = mu_L m1 + mu†_S - mu†_W` and `m3 = m2 phi_L m1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichDiagonals {
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub t_mu: Vec<f64>,
    pub t_phi: Vec<f64>,
    /// Link-level precision.
    pub phi_q: Vec<f64>,
    pub v: Vec<f64>,
    pub v_s: Vec<f64>,
    pub c_star: Vec<f64>,
    pub c_star_s: Vec<f64>,
    pub d_star: Vec<f64>,
    pub d_star_s: Vec<f64>,
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    pub m3: Vec<f64>,
}

/// `J`, `K` and `V = J^-1 K J^-T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichParts {
    pub j: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

/// Covariates, links and nothing else: enough to assemble information
/// matrices for arbitrary rows.
#[derive(Clone, Copy)]
struct Design<'a> {
    x: &'a DMatrix<f64>,
    z: &'a DMatrix<f64>,
    mean_link: LinkKind,
    precision_link: LinkKind,
}

impl<'a> Design<'a> {
    fn of(spec: &'a ModelSpec) -> Self {
        Self {
            x: &spec.x,
            z: &spec.z,
            mean_link: spec.mean_link,
            precision_link: spec.precision_link,
        }
    }

    fn link_level(&self, theta: &Theta) -> Vec<(f64, f64, f64, f64)> {
        let em = self.x * &theta.beta;
        let ep = self.z * &theta.gamma;
        em.iter()
            .zip(ep.iter())
            .map(|(&a, &b)| {
                let mu = self.mean_link.inverse_saturated(a);
                let phi = self.precision_link.inverse_saturated(b);
                (
                    mu,
                    phi,
                    1.0 / self.mean_link.deriv(mu),
                    1.0 / self.precision_link.deriv(phi),
                )
            })
            .collect()
    }
}

/// Second moments and means of the unscaled score components
/// `u_mu = phi (y* - mu*_C)` and `u_phi = mu (y* - mu*_C) + y† - mu†_C`
/// when `y` follows the beta law `law` and the score is centred at `center`.
///
/// Returns `[E u_mu^2, E u_mu u_phi, E u_phi^2]` and `[E u_mu, E u_phi]`.
fn score_moments(mu: f64, phi: f64, center: ShapePair, law: ShapePair) -> ([f64; 3], [f64; 2]) {
    let (ms_c, md_c) = log_moments(center);
    let (ms_l, md_l) = log_moments(law);
    let pa = psi1(law.a);
    let pb = psi1(law.b);
    let pab = psi1(law.a + law.b);
    let v = pa + pb;
    let d1 = ms_l - ms_c;
    let d2 = mu * d1 + md_l - md_c;
    let a11 = phi * phi * (v + d1 * d1);
    let a12 = phi * (mu * v - pb + d1 * d2);
    let a22 = mu * mu * pa + (1.0 - mu) * (1.0 - mu) * pb - pab + d2 * d2;
    ([a11, a12, a22], [phi * d1, d2])
}

/// `[X' D11 X, X' D12 Z; Z' D12 X, Z' D22 Z]`.
fn assemble(d: &Design, d11: &[f64], d12: &[f64], d22: &[f64]) -> DMatrix<f64> {
    let (p1, p2) = (d.x.ncols(), d.z.ncols());
    let p = p1 + p2;
    let mut out = DMatrix::zeros(p, p);
    for i in 0..d.x.nrows() {
        let xi = d.x.row(i);
        let zi = d.z.row(i);
        for r in 0..p1 {
            for c in 0..p1 {
                out[(r, c)] += d11[i] * xi[r] * xi[c];
            }
            for c in 0..p2 {
                let v = d12[i] * xi[r] * zi[c];
                out[(r, p1 + c)] += v;
                out[(p1 + c, r)] += v;
            }
        }
        for r in 0..p2 {
            for c in 0..p2 {
                out[(p1 + r, p1 + c)] += d22[i] * zi[r] * zi[c];
            }
        }
    }
    out
}

fn check_feasible(d: &Design, theta: &Theta, q: f64) -> Result<Vec<(f64, f64, f64, f64)>> {
    let rows = d.link_level(theta);
    let bad: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter_map(|(i, &(mu, phi, _, _))| {
            let l = ShapePair::mean_precision_unchecked(mu, phi);
            let w = l.powered(1.0 / q);
            let ok = w.is_valid() && w.powered(2.0 - q).is_valid();
            (!ok).then_some(i)
        })
        .collect();
    if bad.is_empty() {
        Ok(rows)
    } else {
        Err(Error::Infeasible { q, indices: bad })
    }
}

fn diagonals_for(d: &Design, theta: &Theta, q: f64) -> Result<SandwichDiagonals> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Domain(format!(
            "tuning constant must lie in (0, 1], got {q}"
        )));
    }
    let rows = check_feasible(d, theta, q)?;
    let n = rows.len();
    let mut out = SandwichDiagonals {
        b1: Vec::with_capacity(n),
        b2: Vec::with_capacity(n),
        t_mu: Vec::with_capacity(n),
        t_phi: Vec::with_capacity(n),
        phi_q: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        v_s: Vec::with_capacity(n),
        c_star: Vec::with_capacity(n),
        c_star_s: Vec::with_capacity(n),
        d_star: Vec::with_capacity(n),
        d_star_s: Vec::with_capacity(n),
        m1: Vec::with_capacity(n),
        m2: Vec::with_capacity(n),
        m3: Vec::with_capacity(n),
    };
    for (mu, phi, t_mu, t_phi) in rows {
        let l = ShapePair::mean_precision_unchecked(mu, phi);
        let w = l.powered(1.0 / q);
        let s = w.powered(2.0 - q);
        let (lb_l, lb_w, lb_s) = (lbeta(l.a, l.b), lbeta(w.a, w.b), lbeta(s.a, s.b));
        out.b1.push((q * lb_w - lb_l).exp());
        out.b2.push((lb_s - 2.0 * (1.0 - q) * lb_w - lb_l).exp());
        out.t_mu.push(t_mu);
        out.t_phi.push(t_phi);
        out.phi_q.push(phi);

        let (wa, wb, wab) = (psi1(w.a), psi1(w.b), psi1(w.a + w.b));
        let (sa, sb, sab) = (psi1(s.a), psi1(s.b), psi1(s.a + s.b));
        out.v.push(wa + wb);
        out.v_s.push(sa + sb);
        out.c_star.push(phi * (mu * wa - (1.0 - mu) * wb));
        out.c_star_s.push(phi * (mu * sa - (1.0 - mu) * sb));
        out.d_star
            .push(mu * mu * wa + (1.0 - mu) * (1.0 - mu) * wb - wab);
        out.d_star_s
            .push(mu * mu * sa + (1.0 - mu) * (1.0 - mu) * sb - sab);

        let (ms_w, md_w) = log_moments(w);
        let (ms_s, md_s) = log_moments(s);
        let m1 = ms_s - ms_w;
        let m2 = mu * m1 + md_s - md_w;
        out.m1.push(m1);
        out.m2.push(m2);
        out.m3.push(m2 * phi * m1);
    }
    Ok(out)
}

/// Per-observation sandwich diagonals at `theta` for tuning constant `q`.
pub fn sandwich_diagonals(spec: &ModelSpec, theta: &Theta, q: f64) -> Result<SandwichDiagonals> {
    theta.check_dims(spec)?;
    diagonals_for(&Design::of(spec), theta, q)
}

fn smle_jk(d: &Design, theta: &Theta, q: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let a = diagonals_for(d, theta, q)?;
    let n = a.b1.len();
    let (mut j11, mut j12, mut j22) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut k11, mut k12, mut k22) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let (tm, tp, ph) = (a.t_mu[i], a.t_phi[i], a.phi_q[i]);
        let jb = -a.b1[i] / q;
        j11[i] = jb * tm * tm * ph * ph * a.v[i];
        j12[i] = jb * tm * tp * a.c_star[i];
        j22[i] = jb * tp * tp * a.d_star[i];
        let kb = a.b2[i] / (q * q);
        k11[i] = kb * tm * tm * ph * ph * (a.v_s[i] + a.m1[i] * a.m1[i]);
        k12[i] = kb * tm * tp * (a.c_star_s[i] + a.m3[i]);
        k22[i] = kb * tp * tp * (a.d_star_s[i] + a.m2[i] * a.m2[i]);
    }
    Ok((assemble(d, &j11, &j12, &j22), assemble(d, &k11, &k12, &k22)))
}

fn mdpde_jk(d: &Design, theta: &Theta, q: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let rows = d.link_level(theta);
    let n = rows.len();
    let (mut j11, mut j12, mut j22) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut k11, mut k12, mut k22) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut bad = Vec::new();
    for (i, &(mu, phi, tm, tp)) in rows.iter().enumerate() {
        let l = ShapePair::mean_precision_unchecked(mu, phi);
        let p1 = l.powered(2.0 - q);
        let p2 = l.powered(3.0 - 2.0 * q);
        if !(p1.is_valid() && p2.is_valid()) {
            bad.push(i);
            continue;
        }
        let lb_l = lbeta(l.a, l.b);
        let i1 = (lbeta(p1.a, p1.b) - (2.0 - q) * lb_l).exp();
        let i2 = (lbeta(p2.a, p2.b) - (3.0 - 2.0 * q) * lb_l).exp();
        let (a1, _) = score_moments(mu, phi, l, p1);
        let (a2, _) = score_moments(mu, phi, l, p2);
        let (_, m) = score_moments(mu, phi, l, p1);
        let xi = [i1 * m[0] * tm, i1 * m[1] * tp];
        j11[i] = -i1 * a1[0] * tm * tm;
        j12[i] = -i1 * a1[1] * tm * tp;
        j22[i] = -i1 * a1[2] * tp * tp;
        k11[i] = i2 * a2[0] * tm * tm - xi[0] * xi[0];
        k12[i] = i2 * a2[1] * tm * tp - xi[0] * xi[1];
        k22[i] = i2 * a2[2] * tp * tp - xi[1] * xi[1];
    }
    if !bad.is_empty() {
        return Err(Error::NonIntegrable { indices: bad });
    }
    Ok((assemble(d, &j11, &j12, &j22), assemble(d, &k11, &k12, &k22)))
}

fn fisher_for(d: &Design, theta: &Theta) -> DMatrix<f64> {
    let rows = d.link_level(theta);
    let n = rows.len();
    let (mut d11, mut d12, mut d22) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for (i, &(mu, phi, tm, tp)) in rows.iter().enumerate() {
        let l = ShapePair::mean_precision_unchecked(mu, phi);
        let (a, _) = score_moments(mu, phi, l, l);
        d11[i] = a[0] * tm * tm;
        d12[i] = a[1] * tm * tp;
        d22[i] = a[2] * tp * tp;
    }
    assemble(d, &d11, &d12, &d22)
}

/// Expected Fisher information `K1` of the beta regression at `theta`.
pub fn fisher_information(spec: &ModelSpec, theta: &Theta) -> Result<DMatrix<f64>> {
    theta.check_dims(spec)?;
    Ok(fisher_for(&Design::of(spec), theta))
}

/// Inverse after symmetric diagonal equilibration, `M = D S D` with
/// `D = diag(sqrt|m_jj|)`, so that units of the covariates neither cost
/// accuracy nor trip the condition check, which is applied to `S`.
fn checked_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let d: Vec<f64> = m.diagonal().iter().map(|v| v.abs().sqrt()).collect();
    if d.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Singular(format!(
            "{what} has a zero or non-finite diagonal entry"
        )));
    }
    let scaled = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)] / (d[r] * d[c]));
    let svd = scaled.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 0.0) || !smax.is_finite() || smax / smin > MAX_CONDITION {
        return Err(Error::Singular(format!(
            "{what} has condition number {:.3e}",
            smax / smin
        )));
    }
    let inv = svd
        .pseudo_inverse(0.0)
        .map_err(|e| Error::Singular(e.to_string()))?;
    Ok(DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| {
        inv[(r, c)] / (d[r] * d[c])
    }))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn parts(j: DMatrix<f64>, k: DMatrix<f64>) -> Result<SandwichParts> {
    let ji = checked_inverse(&j, "J")?;
    let v = symmetrize(&ji * &k * ji.transpose());
    Ok(SandwichParts { j, k, v })
}

/// SMLE sandwich at tuning constant `q`.
pub fn sandwich(spec: &ModelSpec, theta: &Theta, q: f64) -> Result<SandwichParts> {
    theta.check_dims(spec)?;
    let (j, k) = smle_jk(&Design::of(spec), theta, q)?;
    parts(j, k)
}

/// MDPDE sandwich. `J = -sum E[U U' f^(1-q)]` and
/// `K = sum (E[U U' f^(2(1-q))] - xi xi')` with `xi = E[U f^(1-q)]`.
pub fn mdpde_sandwich(spec: &ModelSpec, theta: &Theta, q: f64) -> Result<SandwichParts> {
    theta.check_dims(spec)?;
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Domain(format!(
            "tuning constant must lie in (0, 1], got {q}"
        )));
    }
    let (j, k) = mdpde_jk(&Design::of(spec), theta, q)?;
    parts(j, k)
}

/// Asymptotic covariance of `estimator` at `theta`.
pub fn covariance(
    spec: &ModelSpec,
    theta: &Theta,
    estimator: EstimatorKind,
) -> Result<DMatrix<f64>> {
    match estimator {
        EstimatorKind::Mle => {
            let k1 = fisher_information(spec, theta)?;
            Ok(symmetrize(checked_inverse(&k1, "K1")?))
        }
        EstimatorKind::Smle { q } => Ok(sandwich(spec, theta, q)?.v),
        EstimatorKind::Mdpde { q } => Ok(mdpde_sandwich(spec, theta, q)?.v),
    }
}

/// Result of a Wald-type test of `theta_j = null_value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldTest {
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub statistic: f64,
    pub p_asymptotic: f64,
}

pub fn wald_test(fit: &FitResult, index: usize, null_value: f64) -> Result<WaldTest> {
    let est = fit.theta_hat.to_vec();
    if index >= est.len() {
        return Err(Error::Dimension(format!(
            "coefficient index {index} out of range for {} coefficients",
            est.len()
        )));
    }
    let se = fit.std_errors[index];
    let z = (est[index] - null_value) / se;
    Ok(WaldTest {
        estimate: est[index],
        std_error: se,
        z,
        statistic: z * z,
        p_asymptotic: chi2_1_upper(z),
    })
}

/// Upper tail of the chi-square law with one degree of freedom at `z^2`.
fn chi2_1_upper(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// RNG for replicate `index` of a run seeded with `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Simulates responses from the beta regression at `theta`.
pub fn simulate_response(
    spec: &ModelSpec,
    theta: &Theta,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let ll = predict_link_level(spec, theta)?;
    Ok(ll
        .mu
        .iter()
        .zip(&ll.phi)
        .map(|(&m, &p)| sample_shapes(ShapePair::mean_precision_unchecked(m, p), rng))
        .collect())
}

/// Outcome of [`bootstrap_pvalue`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub p_value: f64,
    pub statistic: f64,
    /// Statistics of the successful replicates, in replicate order.
    pub replicate_statistics: Vec<f64>,
    pub failures: usize,
    pub replicates: usize,
}

/// Parametric bootstrap p-value for `theta_index = null_value`.
///
/// Responses are simulated from the fit with the tested coefficient pinned
/// at `null_value`; each replicate is refitted without constraint and its
/// Wald statistic compared with the observed one. Replicate `b` draws from
/// [`substream`]`(seed, b)`, so the result does not depend on scheduling.
pub fn bootstrap_pvalue(
    spec: &ModelSpec,
    estimator: EstimatorKind,
    index: usize,
    null_value: f64,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if replicates == 0 {
        return Err(Error::Domain(
            "bootstrap needs at least one replicate".into(),
        ));
    }
    let full = fit_with(spec, estimator, None, &FitOptions::default())?;
    let observed = wald_test(&full, index, null_value)?.statistic;
    if !observed.is_finite() {
        return Err(Error::Singular(
            "observed Wald statistic is not finite".into(),
        ));
    }
    let null_opts = FitOptions {
        fixed: Some((index, null_value)),
        ..FitOptions::default()
    };
    let null_fit = fit_with(spec, estimator, Some(&full.theta_hat), &null_opts)?;
    let stats: Vec<Option<f64>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, b as u64);
            let y = simulate_response(spec, &null_fit.theta_hat, &mut rng).ok()?;
            let s = spec.with_response(y).ok()?;
            let f = fit_with(
                &s,
                estimator,
                Some(&null_fit.theta_hat),
                &FitOptions::default(),
            )
            .ok()?;
            let t = wald_test(&f, index, null_value).ok()?.statistic;
            t.is_finite().then_some(t)
        })
        .collect();
    let ok: Vec<f64> = stats.iter().flatten().copied().collect();
    let failures = replicates - ok.len();
    if failures * 5 > replicates {
        return Err(Error::TooManyFailures {
            what: "bootstrap replicates",
            failed: failures,
            total: replicates,
        });
    }
    let exceed = ok.iter().filter(|&&t| t >= observed).count();
    Ok(BootstrapResult {
        p_value: (1 + exceed) as f64 / (ok.len() + 1) as f64,
        statistic: observed,
        replicate_statistics: ok,
        failures,
        replicates,
    })
}

/// Where to probe the influence functions: one covariate row and the links.
///
/// `J` and `K1` are averaged over `design` when given, otherwise taken at
/// the probe row alone (the identically distributed case).
#[derive(Debug, Clone)]
pub struct InfluenceProbe<'a> {
    pub x_row: Vec<f64>,
    pub z_row: Vec<f64>,
    pub mean_link: LinkKind,
    pub precision_link: LinkKind,
    pub design: Option<&'a ModelSpec>,
}

impl<'a> InfluenceProbe<'a> {
    pub fn new(x_row: Vec<f64>, z_row: Vec<f64>) -> Self {
        Self {
            x_row,
            z_row,
            mean_link: LinkKind::Logit,
            precision_link: LinkKind::Log,
            design: None,
        }
    }

    pub fn averaged_over(mut self, spec: &'a ModelSpec) -> Self {
        self.mean_link = spec.mean_link;
        self.precision_link = spec.precision_link;
        self.design = Some(spec);
        self
    }
}

/// Influence functions of the MLE and the SMLE, one row per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceCurves {
    pub y: Vec<f64>,
    pub mle: DMatrix<f64>,
    pub smle: DMatrix<f64>,
}

impl InfluenceCurves {
    pub fn mle_norms(&self) -> Vec<f64> {
        self.mle.row_iter().map(|r| r.norm()).collect()
    }

    pub fn smle_norms(&self) -> Vec<f64> {
        self.smle.row_iter().map(|r| r.norm()).collect()
    }
}

/// `IF_q(y) = -J_q^-1 U*(y) f*(y)^(1-q)` for the SMLE and, since
/// `J_1 = -K1`, `IF(y) = K1^-1 U(y)` for the MLE; `J_q` and `K1` are per
/// observation. The two curves coincide at `q = 1`.
pub fn influence_curve(
    theta: &Theta,
    q: f64,
    probe: &InfluenceProbe,
    y_grid: &[f64],
) -> Result<InfluenceCurves> {
    let x1 = DMatrix::from_row_slice(1, probe.x_row.len(), &probe.x_row);
    let z1 = DMatrix::from_row_slice(1, probe.z_row.len(), &probe.z_row);
    if x1.ncols() != theta.beta.len() || z1.ncols() != theta.gamma.len() {
        return Err(Error::Dimension("probe rows do not match theta".into()));
    }
    let d = match probe.design {
        Some(s) => Design::of(s),
        None => Design {
            x: &x1,
            z: &z1,
            mean_link: probe.mean_link,
            precision_link: probe.precision_link,
        },
    };
    let scale = 1.0 / d.x.nrows() as f64;
    let k1 = fisher_for(&d, theta) * scale;
    let (jq, _) = smle_jk(&d, theta, q)?;
    let k1_inv = checked_inverse(&k1, "K1")?;
    let jq_inv = checked_inverse(&(jq * scale), "J")?;

    let p = theta.p();
    let mut mle = DMatrix::zeros(y_grid.len(), p);
    let mut smle = DMatrix::zeros(y_grid.len(), p);
    for (g, &y) in y_grid.iter().enumerate() {
        let u = crate::estimation::estimating_function(
            EstimatorKind::Mle,
            y,
            &probe.x_row,
            &probe.z_row,
            theta,
            probe.mean_link,
            probe.precision_link,
        )
        .ok_or_else(|| Error::Domain(format!("score undefined at y = {y}")))?;
        let us = crate::estimation::estimating_function(
            EstimatorKind::Smle { q },
            y,
            &probe.x_row,
            &probe.z_row,
            theta,
            probe.mean_link,
            probe.precision_link,
        )
        .ok_or_else(|| Error::Infeasible {
            q,
            indices: vec![g],
        })?;
        mle.set_row(g, &(&k1_inv * u).transpose());
        smle.set_row(g, &(-(&jq_inv * us)).transpose());
    }
    Ok(InfluenceCurves {
        y: y_grid.to_vec(),
        mle,
        smle,
    })
}

/// `trace(V_1) / trace(V_q)` at `theta`: the asymptotic efficiency of the
/// SMLE relative to the MLE.
pub fn relative_efficiency(spec: &ModelSpec, theta: &Theta, q: f64) -> Result<f64> {
    if q == 1.0 {
        return Ok(1.0);
    }
    let v1 = covariance(spec, theta, EstimatorKind::Mle)?;
    let vq = sandwich(spec, theta, q)?.v;
    Ok(v1.trace() / vq.trace())
}
