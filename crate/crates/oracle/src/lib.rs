//! Reference computations for testing `robeta`.
//!
//! Nothing in here knows about beta regression. The routines are deliberately
//! generic (adaptive quadrature, finite differences, goodness-of-fit
//! statistics) so that they can check the closed-form code paths of the main
//! crate without sharing any of its implementation.

/// Integrates `f` over the open unit interval.
///
/// The integrand receives `(y, 1 - y)` with both components computed
/// without cancellation, so expressions such as `ln(1 - y)` stay accurate
/// near the upper boundary. The interval is mapped to the real line with
/// `y = 1 / (1 + exp(-t))` and then to `(-1, 1)` with `t = s / (1 - s^2)`,
/// after which adaptive Gauss-Kronrod (7, 15) bisection is applied.
///
/// Integrable algebraic endpoint singularities (`y^(a-1)` with `a > 0`) are
/// handled because they become exponentially decaying tails on the `t` line.
pub fn integrate_unit<F>(f: F, rel_tol: f64) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    let g = |s: f64| -> f64 {
        let d = 1.0 - s * s;
        if d <= 0.0 {
            return 0.0;
        }
        let t = s / d;
        let dt_ds = (1.0 + s * s) / (d * d);
        let (y, one_minus_y) = logistic_pair(t);
        // dy/dt = y (1 - y)
        let jac = y * one_minus_y * dt_ds;
        if jac == 0.0 || !jac.is_finite() {
            return 0.0;
        }
        let v = f(y, one_minus_y);
        if v == 0.0 {
            0.0
        } else {
            v * jac
        }
    };
    adaptive_gk15(&g, -1.0, 1.0, rel_tol)
}

/// Integrates `f` over a finite interval `[a, b]` by adaptive Gauss-Kronrod.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    adaptive_gk15(&f, a, b, rel_tol)
}

fn logistic_pair(t: f64) -> (f64, f64) {
    if t >= 0.0 {
        let e = (-t).exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    } else {
        let e = t.exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Interval with its Kronrod estimate and error, ordered by error.
struct Piece {
    lo: f64,
    hi: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}

impl Eq for Piece {}

impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Global adaptive scheme: always split the interval with the largest error.
///
/// The tolerance is relative to the larger of `|integral|` and the sum of
/// the absolute piece values, so integrals that cancel to zero still
/// terminate.
fn adaptive_gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    use std::collections::BinaryHeap;

    let (value, err) = gk15(f, a, b);
    let mut heap = BinaryHeap::from([Piece {
        lo: a,
        hi: b,
        value,
        err,
    }]);
    let (mut total, mut abs_total, mut err_total) = (value, value.abs(), err);
    let mut done = Vec::new();
    for _ in 0..20_000 {
        let scale = total.abs().max(abs_total).max(1e-300);
        if err_total <= rel_tol * scale || err_total < 1e-300 {
            break;
        }
        let Some(p) = heap.pop() else { break };
        let mid = 0.5 * (p.lo + p.hi);
        total -= p.value;
        abs_total -= p.value.abs();
        err_total -= p.err;
        if mid <= p.lo || mid >= p.hi {
            // cannot split further; keep its value, drop its error
            total += p.value;
            abs_total += p.value.abs();
            done.push(p.value);
            continue;
        }
        for (lo, hi) in [(p.lo, mid), (mid, p.hi)] {
            let (value, err) = gk15(f, lo, hi);
            total += value;
            abs_total += value.abs();
            err_total += err;
            heap.push(Piece { lo, hi, value, err });
        }
    }
    let mut vals: Vec<f64> = heap.into_iter().map(|p| p.value).chain(done).collect();
    // sum small to large for stability
    vals.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    vals.iter().sum()
}

/// Fourth-order central-difference gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let h = 1e-3 * x[j].abs().max(1.0);
        let mut eval = |delta: f64| {
            xp[j] = x[j] + delta;
            let v = f(&xp);
            xp[j] = x[j];
            v
        };
        let f2p = eval(2.0 * h);
        let f1p = eval(h);
        let f1m = eval(-h);
        let f2m = eval(-2.0 * h);
        out[j] = (-f2p + 8.0 * f1p - 8.0 * f1m + f2m) / (12.0 * h);
    }
    out
}

/// Fourth-order central-difference Jacobian of a vector function; entry
/// `[i][j]` is the derivative of output `i` with respect to input `j`.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], rel_step: f64) -> Vec<Vec<f64>> {
    let m = f(x).len();
    let mut jac = vec![vec![0.0; x.len()]; m];
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let h = rel_step * x[j].abs().max(1.0);
        let mut eval = |delta: f64| {
            xp[j] = x[j] + delta;
            let v = f(&xp);
            xp[j] = x[j];
            v
        };
        let f2p = eval(2.0 * h);
        let f1p = eval(h);
        let f1m = eval(-h);
        let f2m = eval(-2.0 * h);
        for i in 0..m {
            jac[i][j] = (-f2p[i] + 8.0 * f1p[i] - 8.0 * f1m[i] + f2m[i]) / (12.0 * h);
        }
    }
    jac
}

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            let lo = c - i as f64 / n;
            let hi = (i as f64 + 1.0) / n - c;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of the Kolmogorov distribution for statistic `d` at
/// sample size `n` (with the usual small-sample correction of the argument).
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
