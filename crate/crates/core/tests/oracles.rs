//! Closed-form quantities against independent numerical references:
//! adaptive quadrature, finite differences and Monte Carlo.

mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use robeta::estimation::{
    estimating_function, lq_gradient, lq_objective, mdpde_gradient, mdpde_objective, EstimatorKind,
};
use robeta::inference::{mdpde_sandwich, sandwich, sandwich_diagonals, substream};
use robeta::model::{LinkKind, Theta};
use robeta::numeric::{beta_logpdf, digamma, powered_density_log_integral, sample_beta};
use robeta_oracle::{fd_gradient, fd_jacobian, integrate_unit, ks_pvalue, ks_statistic};
use statrs::distribution::{Beta, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

const TOL: f64 = 1e-12;

fn pdf(y: f64, mu: f64, phi: f64) -> f64 {
    if y > 0.0 && y < 1.0 {
        beta_logpdf(y, mu, phi).map_or(0.0, f64::exp)
    } else {
        0.0
    }
}

/// Density from `(y, 1 - y)` with both supplied, so the mass piled up
/// against 1 is not lost when `y` rounds to 1.
fn pdf_pair(y: f64, ym: f64, mu: f64, phi: f64) -> f64 {
    let (a, b) = (mu * phi, (1.0 - mu) * phi);
    let lb = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    ((a - 1.0) * y.ln() + (b - 1.0) * ym.ln() - lb).exp()
}

/// `E[g(y)]` under `Beta(mu phi, (1 - mu) phi)` by quadrature.
fn expect(mu: f64, phi: f64, g: impl Fn(f64) -> f64) -> f64 {
    integrate_unit(
        |y, _| {
            let d = pdf(y, mu, phi);
            if d == 0.0 {
                0.0
            } else {
                g(y) * d
            }
        },
        TOL,
    )
}

/// Mean and precision of the law with shapes `(a, b)`.
fn mp(a: f64, b: f64) -> (f64, f64) {
    (a / (a + b), a + b)
}

fn ef(kind: EstimatorKind, y: f64, theta: &Theta) -> DVector<f64> {
    estimating_function(
        kind,
        y,
        &[1.0],
        &[1.0],
        theta,
        LinkKind::Logit,
        LinkKind::Log,
    )
    .expect("estimating function defined")
}

/// `E[psi psi']` and `E[d psi / d theta]` for an intercept-only row, both by
/// quadrature; the derivative inside the integral is a finite difference.
fn quadrature_jk(kind: EstimatorKind, mu: f64, phi: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let theta = theta_at(mu, phi);
    let t0 = theta.to_vec();
    let mut j = DMatrix::zeros(2, 2);
    let mut k = DMatrix::zeros(2, 2);
    for r in 0..2 {
        for c in 0..2 {
            k[(r, c)] = expect(mu, phi, |y| {
                let e = ef(kind, y, &theta);
                e[r] * e[c]
            });
            j[(r, c)] = expect(mu, phi, |y| {
                let jac = fd_jacobian(
                    |t| ef(kind, y, &Theta::from_slice(1, t)).as_slice().to_vec(),
                    &t0,
                    1e-3,
                );
                jac[r][c]
            });
        }
    }
    (j, k)
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax()
}

#[test]
fn density_integrates_to_one() {
    for &(mu, phi) in &[
        (0.5, 90.0),
        (0.06, 90.0),
        (0.3, 2.0),
        (0.5, 1.0),
        (0.01, 50.0),
        (0.995, 20.0),
    ] {
        let total = integrate_unit(|y, ym| pdf_pair(y, ym, mu, phi), TOL);
        // endpoint singularities y^(a-1) with a < 1 limit the quadrature
        let tol = if mu * phi < 1.0 || (1.0 - mu) * phi < 1.0 {
            1e-7
        } else {
            1e-9
        };
        assert!((total - 1.0).abs() < tol, "({mu}, {phi}): {total}");
    }
}

#[test]
fn powered_integral_matches_quadrature() {
    for &(mu, phi, c) in &[
        (0.3, 10.0, 1.5),
        (0.06, 90.0, 1.0 / 0.9),
        (0.5, 90.0, 1.1),
        (0.2, 5.0, 0.5),
    ] {
        let quad = integrate_unit(|y, ym| pdf_pair(y, ym, mu, phi).powf(c), TOL).ln();
        let closed = powered_density_log_integral(mu, phi, c).unwrap();
        assert!(
            (quad - closed).abs() < 1e-9,
            "({mu}, {phi}, {c}): {quad} vs {closed}"
        );
    }
}

#[test]
fn sampler_matches_the_beta_law() {
    for (s, &(mu, phi)) in [(0.3, 10.0), (0.06, 90.0), (0.8, 1.5)].iter().enumerate() {
        let mut rng = substream(17, s as u64);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| sample_beta(mu, phi, &mut rng).unwrap())
            .collect();
        let (m, se) = robeta_oracle::mean_and_se(&draws);
        assert!((m - mu).abs() < 4.0 * se, "mean {m} vs {mu}");
        let law = Beta::new(mu * phi, (1.0 - mu) * phi).unwrap();
        let d = ks_statistic(&draws, |x| law.cdf(x));
        assert!(ks_pvalue(d, draws.len()) > 1e-3, "KS {d} at ({mu}, {phi})");
    }
}

#[test]
fn uniform_case_passes_ks_at_a_million_draws() {
    let mut rng = substream(3, 0);
    let draws: Vec<f64> = (0..1_000_000)
        .map(|_| sample_beta(0.5, 2.0, &mut rng).unwrap())
        .collect();
    let d = ks_statistic(&draws, |x| x);
    assert!(d < 0.002, "KS distance {d}");
}

#[test]
fn sampler_is_deterministic_per_stream() {
    let draw = |seed, stream| {
        let mut rng = substream(seed, stream);
        (0..10)
            .map(|_| sample_beta(0.4, 7.0, &mut rng).unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(draw(9, 2), draw(9, 2));
    assert_ne!(draw(9, 2), draw(9, 3));
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = rng(2024);
    for _ in 0..10 {
        let (spec, theta) = random_model(&mut rng, 25);
        let p1 = spec.p1();
        let x = theta.to_vec();
        for &q in &[0.5, 0.7, 0.9, 1.0] {
            let g = lq_gradient(&spec, &theta, q).unwrap();
            let fd = fd_gradient(
                |t| lq_objective(&spec, &Theta::from_slice(p1, t), q).unwrap(),
                &x,
            );
            assert!(max_abs_diff(g.as_slice(), &fd) <= 1e-6 * sup(&fd).max(1.0));
            let g = mdpde_gradient(&spec, &theta, q).unwrap();
            let fd = fd_gradient(
                |t| mdpde_objective(&spec, &Theta::from_slice(p1, t), q).unwrap(),
                &x,
            );
            assert!(max_abs_diff(g.as_slice(), &fd) <= 1e-6 * sup(&fd).max(1.0));
        }
    }
}

#[test]
fn lq_objective_is_the_sum_of_lq_of_working_densities() {
    let mut rng = rng(5);
    let (spec, theta) = random_model(&mut rng, 30);
    let ll = robeta::model::predict_link_level(&spec, &theta).unwrap();
    for &q in &[0.6, 0.85] {
        let direct: f64 = (0..spec.n())
            .map(|i| {
                let (a, b) = (ll.mu[i] * ll.phi[i], (1.0 - ll.mu[i]) * ll.phi[i]);
                let (mw, pw) = mp((a - 1.0) / q + 1.0, (b - 1.0) / q + 1.0);
                let f = pdf(spec.y[i], mw, pw);
                (f.powf(1.0 - q) - 1.0) / (1.0 - q)
            })
            .sum();
        let v = lq_objective(&spec, &theta, q).unwrap();
        assert!(
            (v - direct).abs() < 1e-10 * direct.abs().max(1.0),
            "{v} vs {direct}"
        );
    }
}

#[test]
fn mdpde_objective_matches_quadrature() {
    let spec = intercept_only(4);
    let (mu, phi, q) = (0.35, 25.0, 0.8);
    let theta = theta_at(mu, phi);
    let int = integrate_unit(|y, _| pdf(y, mu, phi).powf(2.0 - q), TOL);
    let alpha = 1.0 - q;
    let direct: f64 = spec
        .y
        .iter()
        .map(|&y| int - (1.0 + 1.0 / alpha) * pdf(y, mu, phi).powf(alpha))
        .sum();
    let v = mdpde_objective(&spec, &theta, q).unwrap();
    assert!((v - direct).abs() < 1e-9 * direct.abs(), "{v} vs {direct}");
}

#[test]
fn mdpde_centering_term_matches_quadrature() {
    let (mu, phi, q) = (0.3, 40.0, 0.75);
    let theta = theta_at(mu, phi);
    // score by differentiating the log-density in the linear predictors
    let score = |y: f64| {
        fd_gradient(
            |t| beta_logpdf(y, 1.0 / (1.0 + (-t[0]).exp()), t[1].exp()).unwrap(),
            &theta.to_vec(),
        )
    };
    let kind = EstimatorKind::Mdpde { q };
    let y0 = 0.4;
    let u0 = ef(EstimatorKind::Mle, y0, &theta);
    let closed = u0 * pdf(y0, mu, phi).powf(1.0 - q) - ef(kind, y0, &theta);
    for j in 0..2 {
        let quad = expect(mu, phi, |y| score(y)[j] * pdf(y, mu, phi).powf(1.0 - q));
        assert!(
            (quad - closed[j]).abs() < 1e-7 * closed.amax(),
            "{j}: {quad} vs {}",
            closed[j]
        );
    }
}

#[test]
fn estimating_functions_are_fisher_consistent() {
    for &mu in &[0.2, 0.5, 0.8] {
        for &phi in &[10.0, 30.0, 90.0] {
            let theta = theta_at(mu, phi);
            for kind in [
                EstimatorKind::Mle,
                EstimatorKind::Smle { q: 0.8 },
                EstimatorKind::Mdpde { q: 0.8 },
            ] {
                for j in 0..2 {
                    let m = expect(mu, phi, |y| ef(kind, y, &theta)[j]);
                    assert!(
                        m.abs() < 1e-8,
                        "{kind} at ({mu}, {phi}), component {j}: {m}"
                    );
                }
            }
        }
    }
}

#[test]
fn sandwich_diagonals_match_quadrature() {
    let (mu, phi, q) = (0.5, 90.0, 0.9);
    let spec = intercept_only(3);
    let d = sandwich_diagonals(&spec, &theta_at(mu, phi), q).unwrap();
    let (a, b) = (mu * phi, (1.0 - mu) * phi);
    let (aw, bw) = ((a - 1.0) / q + 1.0, (b - 1.0) / q + 1.0);
    let (as_, bs) = ((2.0 - q) * (aw - 1.0) + 1.0, (2.0 - q) * (bw - 1.0) + 1.0);
    let (mw, pw) = mp(aw, bw);
    let (ms, ps) = mp(as_, bs);
    let u1 = |y: f64| (y / (1.0 - y)).ln();
    let u2 = |y: f64| mu * u1(y) + (1.0 - y).ln();
    let moments = |m: f64, p: f64| {
        let e1 = expect(m, p, u1);
        let e2 = expect(m, p, u2);
        let v11 = expect(m, p, |y| (u1(y) - e1).powi(2));
        let v12 = expect(m, p, |y| (u1(y) - e1) * (u2(y) - e2));
        let v22 = expect(m, p, |y| (u2(y) - e2).powi(2));
        (e1, e2, v11, v12, v22)
    };
    let (e1w, e2w, v_w, c_w, d_w) = moments(mw, pw);
    let (e1s, e2s, v_s, c_s, d_s) = moments(ms, ps);
    let fw = |y: f64| pdf(y, mw, pw).powf(1.0 - q);
    let b1 = expect(mu, phi, fw);
    let b2 = expect(mu, phi, |y| fw(y).powi(2));
    let m1 = e1s - e1w;
    let m2 = e2s - e2w;
    let checks = [
        ("b1", d.b1[0], b1),
        ("b2", d.b2[0], b2),
        ("v", d.v[0], v_w),
        ("v_s", d.v_s[0], v_s),
        ("c*", d.c_star[0], phi * c_w),
        ("c*_s", d.c_star_s[0], phi * c_s),
        ("d*", d.d_star[0], d_w),
        ("d*_s", d.d_star_s[0], d_s),
        ("m1", d.m1[0], m1),
        ("m2", d.m2[0], m2),
        ("m3", d.m3[0], m2 * phi * m1),
        ("t_mu", d.t_mu[0], mu * (1.0 - mu)),
        ("t_phi", d.t_phi[0], phi),
    ];
    for (name, got, want) in checks {
        let scale = want.abs().max(1e-3);
        assert!((got - want).abs() < 1e-7 * scale, "{name}: {got} vs {want}");
    }
}

#[test]
fn smle_sandwich_matches_quadrature() {
    let spec = intercept_only(3);
    for &(mu, phi, q) in &[(0.5, 90.0, 0.9), (0.25, 20.0, 0.8)] {
        let parts = sandwich(&spec, &theta_at(mu, phi), q).unwrap();
        let (j, k) = quadrature_jk(EstimatorKind::Smle { q }, mu, phi);
        assert!(rel_err(&(parts.k / 3.0), &k) < 1e-8);
        assert!(rel_err(&(parts.j / 3.0), &j) < 1e-6);
    }
}

#[test]
fn mdpde_sandwich_matches_quadrature() {
    let spec = intercept_only(3);
    for &(mu, phi, q) in &[(0.5, 90.0, 0.9), (0.25, 20.0, 0.8)] {
        let parts = mdpde_sandwich(&spec, &theta_at(mu, phi), q).unwrap();
        let (j, k) = quadrature_jk(EstimatorKind::Mdpde { q }, mu, phi);
        assert!(rel_err(&(parts.k / 3.0), &k) < 1e-8);
        assert!(rel_err(&(parts.j / 3.0), &j) < 1e-6);
    }
}

#[test]
fn fisher_information_matches_quadrature() {
    let spec = intercept_only(3);
    let (mu, phi) = (0.3, 15.0);
    let k1 = robeta::inference::fisher_information(&spec, &theta_at(mu, phi)).unwrap() / 3.0;
    let (j, k) = quadrature_jk(EstimatorKind::Mle, mu, phi);
    assert!(rel_err(&k1, &k) < 1e-8);
    assert!(rel_err(&(-k1), &j) < 1e-6);
}

#[test]
fn digamma_matches_the_derivative_of_log_gamma() {
    for &x in &[0.3, 1.0, 2.5, 9.9, 10.1, 55.0] {
        let fd = fd_gradient(|t| robeta::numeric::ln_gamma(t[0]).unwrap(), &[x])[0];
        assert!((digamma(x).unwrap() - fd).abs() < 1e-9, "x = {x}");
    }
}
