//! Golden checks on the bundled AIS rowing data (37 athletes, body fat
//! percentage against lean body mass) and the diagnostics built on them.

mod common;

use common::ais;
use nalgebra::DMatrix;
use robeta::diagnostics::{leverage, simulated_envelope, DiagnosticsReport};
use robeta::inference::{bootstrap_pvalue, sandwich_diagonals, wald_test};
use robeta::io::FitReport;
use robeta::model::ModelSpec;
use robeta::tuning::{select_q, select_q_with_fit, EstimatorFamily, TuningConfig};
use robeta::{fit, EstimatorKind, FitResult};

/// Observations 16 and 30 in one-based numbering.
const OUTLIERS: [usize; 2] = [15, 29];

fn assert_close(what: &str, got: &[f64], want: &[f64], tol: f64) {
    for (j, (g, w)) in got.iter().zip(want).enumerate() {
        assert!((g - w).abs() <= tol, "{what}[{j}]: {g} vs {w} (tol {tol})");
    }
}

fn without(spec: &ModelSpec, drop: &[usize]) -> ModelSpec {
    let rows: Vec<usize> = (0..spec.n()).filter(|i| !drop.contains(i)).collect();
    spec.select_rows(&rows).unwrap()
}

fn z_stats(f: &FitResult) -> Vec<f64> {
    (0..f.theta_hat.p())
        .map(|j| wald_test(f, j, 0.0).unwrap().z)
        .collect()
}

fn smle(spec: &ModelSpec) -> FitResult {
    select_q_with_fit(spec, EstimatorFamily::Smle, &TuningConfig::default())
        .unwrap()
        .1
}

#[test]
fn fixture_loads_with_expected_dimensions() {
    let spec = ais();
    assert_eq!((spec.n(), spec.p1(), spec.p2()), (37, 2, 1));
    assert_eq!(spec.x_names, ["(Intercept)", "LBM"]);
}

#[test]
fn mle_full_data() {
    let f = fit(&ais(), EstimatorKind::Mle, None).unwrap();
    assert_close(
        "estimate",
        &f.theta_hat.to_vec(),
        &[0.098, -0.027, 4.571],
        0.002,
    );
    assert_close("std error", &f.std_errors, &[0.253, 0.004, 0.232], 0.001);
    assert_close("z", &z_stats(&f), &[0.387, -7.029, 19.686], 0.01);
}

#[test]
fn smle_full_data_at_selected_q() {
    let spec = ais();
    let (q, trace) = select_q(&spec, EstimatorFamily::Smle, &TuningConfig::default()).unwrap();
    assert_eq!(q, 0.82);
    assert!(!trace.fallback_to_mle);
    let f = fit(&spec, EstimatorKind::Smle { q }, None).unwrap();
    assert_close(
        "estimate",
        &f.theta_hat.to_vec(),
        &[0.782, -0.037, 5.366],
        0.005,
    );
    assert_close("std error", &f.std_errors[..2], &[0.175, 0.003], 0.001);
    assert_close("z", &z_stats(&f)[..2], &[4.460, -13.627], 0.1);
    // the sandwich includes the mean-shift terms of K; see the next test
    assert!((f.std_errors[2] - 0.24404).abs() < 1e-4);
}

/// Precision-intercept standard error of the SMLE with `K` assembled from
/// the shifted-law variances alone, leaving out the squared mean shifts.
fn se_without_mean_shift(spec: &ModelSpec, q: f64) -> f64 {
    let f = fit(spec, EstimatorKind::Smle { q }, None).unwrap();
    let d = sandwich_diagonals(spec, &f.theta_hat, q).unwrap();
    let mut j = DMatrix::<f64>::zeros(3, 3);
    let mut k = DMatrix::<f64>::zeros(3, 3);
    for i in 0..spec.n() {
        let x = [1.0, spec.x[(i, 1)], 1.0];
        let (tm, tp, phi) = (d.t_mu[i], d.t_phi[i], d.phi_q[i]);
        let jd = [
            tm * tm * phi * phi * d.v[i],
            tm * tp * d.c_star[i],
            tp * tp * d.d_star[i],
        ];
        let kd = [
            tm * tm * phi * phi * d.v_s[i],
            tm * tp * d.c_star_s[i],
            tp * tp * d.d_star_s[i],
        ];
        for r in 0..3 {
            for c in 0..3 {
                let e = match (r == 2, c == 2) {
                    (false, false) => 0,
                    (true, true) => 2,
                    _ => 1,
                };
                j[(r, c)] -= d.b1[i] / q * jd[e] * x[r] * x[c];
                k[(r, c)] += d.b2[i] / (q * q) * kd[e] * x[r] * x[c];
            }
        }
    }
    let ji = j.try_inverse().unwrap();
    (&ji * k * ji.transpose())[(2, 2)].sqrt()
}

#[test]
fn reference_precision_errors_omit_the_mean_shift_terms() {
    let spec = ais();
    let cases: [(&[usize], f64, f64); 3] = [
        (&[], 0.82, 0.242),
        (&[29], 0.84, 0.243),
        (&[15], 0.88, 0.240),
    ];
    for (drop, q, want) in cases {
        let reduced = without(&spec, drop);
        assert_eq!(smle(&reduced).q_used, q);
        let se = se_without_mean_shift(&reduced, q);
        assert!((se - want).abs() < 5e-4, "without {drop:?}: {se} vs {want}");
    }
}

#[test]
fn deleting_outliers_moves_the_mle_but_not_the_smle() {
    let spec = ais();
    let cases: [(&[usize], [f64; 3], [f64; 3]); 3] = [
        (&[15], [0.392, -0.032, 4.742], [0.791, -0.037, 5.366]),
        (&[29], [0.382, -0.031, 4.953], [0.777, -0.037, 5.370]),
        (&[15, 29], [0.838, -0.038, 5.507], [0.838, -0.038, 5.507]),
    ];
    for (drop, mle_want, smle_want) in cases {
        let reduced = without(&spec, drop);
        let m = fit(&reduced, EstimatorKind::Mle, None).unwrap();
        assert_close("mle", &m.theta_hat.to_vec(), &mle_want, 0.002);
        let s = smle(&reduced);
        assert_close("smle", &s.theta_hat.to_vec(), &smle_want, 0.005);
    }
    // without both outliers the selector settles on the MLE
    let (q, _) = select_q(
        &without(&spec, &OUTLIERS),
        EstimatorFamily::Smle,
        &TuningConfig::default(),
    )
    .unwrap();
    assert_eq!(q, 1.0);
}

#[test]
fn lbm_effect_is_significant_under_the_bootstrap() {
    let spec = ais();
    let b = bootstrap_pvalue(&spec, EstimatorKind::Mle, 1, 0.0, 199, 42).unwrap();
    assert_eq!(b.failures, 0);
    assert!((b.statistic - 7.029f64.powi(2)).abs() < 0.15);
    assert!(b.p_value <= 0.01, "p = {}", b.p_value);
    let f = fit(&spec, EstimatorKind::Mle, None).unwrap();
    assert!(wald_test(&f, 1, 0.0).unwrap().p_asymptotic < 1e-10);
}

#[test]
fn leverages_sum_to_the_mean_dimension() {
    let spec = ais();
    for kind in [EstimatorKind::Mle, EstimatorKind::Smle { q: 0.82 }] {
        let f = fit(&spec, kind, None).unwrap();
        let h: f64 = leverage(&spec, &f.theta_hat).unwrap().iter().sum();
        assert!((h - 2.0).abs() < 1e-10, "{kind}: {h}");
    }
}

#[test]
fn robust_fit_singles_out_observations_16_and_30() {
    let spec = ais();
    let f = fit(&spec, EstimatorKind::Smle { q: 0.82 }, None).unwrap();
    let env = simulated_envelope(&spec, &f, 100, 0.95, 7).unwrap();
    let report = DiagnosticsReport::new(&spec, &f, Some(env)).unwrap();
    let mut top: Vec<usize> = report.smallest_weights()[..2].to_vec();
    top.sort();
    assert_eq!(top, OUTLIERS);
    let mut top: Vec<usize> = report.largest_residuals()[..2].to_vec();
    top.sort();
    assert_eq!(top, OUTLIERS);
    for o in OUTLIERS {
        assert!(
            report.flagged.contains(&o),
            "observation {} not flagged",
            o + 1
        );
    }
    assert!(report.weights.iter().all(|&w| w > 0.0 && w <= 1.0));
    assert_eq!(report.weights.iter().cloned().fold(0.0, f64::max), 1.0);
}

/// How far outside its band (in band widths) an observation's residual lies.
fn exceedance(spec: &ModelSpec, f: &FitResult, obs: usize) -> f64 {
    let env = simulated_envelope(spec, f, 100, 0.95, 3).unwrap();
    let i = env.order.iter().position(|&o| o == obs).unwrap();
    let (r, lo, hi) = (env.sorted_residuals[i], env.lower[i], env.upper[i]);
    let width = hi - lo;
    if r > hi {
        (r - hi) / width
    } else if r < lo {
        (lo - r) / width
    } else {
        0.0
    }
}

#[test]
fn outliers_stand_out_more_under_the_robust_fit() {
    let spec = ais();
    let m = fit(&spec, EstimatorKind::Mle, None).unwrap();
    let s = fit(&spec, EstimatorKind::Smle { q: 0.82 }, None).unwrap();
    for o in OUTLIERS {
        let (em, es) = (exceedance(&spec, &m, o), exceedance(&spec, &s, o));
        assert!(es > em, "observation {}: mle {em}, smle {es}", o + 1);
    }
}

#[test]
fn envelopes_are_deterministic_and_nest() {
    let spec = ais();
    let f = fit(&spec, EstimatorKind::Mle, None).unwrap();
    let a = simulated_envelope(&spec, &f, 60, 0.95, 11).unwrap();
    let b = simulated_envelope(&spec, &f, 60, 0.95, 11).unwrap();
    assert_eq!(a, b);
    let wide = simulated_envelope(&spec, &f, 60, 0.99, 11).unwrap();
    for i in 0..spec.n() {
        assert!(wide.lower[i] <= a.lower[i] && wide.upper[i] >= a.upper[i]);
        assert!(a.lower[i] <= a.median[i] && a.median[i] <= a.upper[i]);
    }
    assert!(simulated_envelope(&spec, &f, 10, 0.95, 11).is_err());
}

#[test]
fn json_round_trip_reproduces_diagnostics_exactly() {
    let spec = ais();
    for kind in [
        EstimatorKind::Mle,
        EstimatorKind::Smle { q: 0.82 },
        EstimatorKind::Mdpde { q: 0.9 },
    ] {
        let f = fit(&spec, kind, None).unwrap();
        let json = FitReport::new(&spec, &f).to_json().unwrap();
        let back = FitReport::from_json(&json).unwrap().fit;
        assert_eq!(back, f);
        let before = DiagnosticsReport::new(&spec, &f, None).unwrap();
        let after = DiagnosticsReport::new(&spec, &back, None).unwrap();
        assert_eq!(before, after);
        assert_eq!(
            before.observations_csv().unwrap(),
            after.observations_csv().unwrap()
        );
        let e1 = simulated_envelope(&spec, &f, 30, 0.95, 5).unwrap();
        let e2 = simulated_envelope(&spec, &back, 30, 0.95, 5).unwrap();
        assert_eq!(e1, e2);
    }
}

#[test]
fn mdpde_selector_runs_on_ais() {
    let spec = ais();
    let (trace, f) =
        select_q_with_fit(&spec, EstimatorFamily::Mdpde, &TuningConfig::default()).unwrap();
    assert_eq!(f.q_used, trace.q_star);
    assert!(trace.q_star >= 0.5 && trace.q_star <= 1.0);
    assert!(f.converged);
}
