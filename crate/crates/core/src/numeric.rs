//! Special functions and beta-density primitives.
//!
//! Digamma and trigamma are evaluated by upward recurrence until the
//! argument reaches [`ASYMPTOTIC_FROM`], followed by the standard asymptotic
//! series. Log-gamma uses the same series above that point and `libm` below
//! it. Everything else in the crate is built on these.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ASYMPTOTIC_FROM: f64 = 10.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// The two shape parameters of a beta law, `a = mu * phi` and
/// `b = (1 - mu) * phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapePair {
    pub a: f64,
    pub b: f64,
}

impl ShapePair {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::Domain(format!(
                "beta shapes must be positive and finite, got ({a}, {b})"
            )));
        }
        Ok(Self { a, b })
    }

    /// Shapes of a beta law with mean `mu` and precision `phi`.
    pub fn from_mean_precision(mu: f64, phi: f64) -> Result<Self> {
        if !(mu > 0.0 && mu < 1.0) || !(phi > 0.0) || !phi.is_finite() {
            return Err(Error::Domain(format!(
                "need 0 < mu < 1 and phi > 0, got mu = {mu}, phi = {phi}"
            )));
        }
        Ok(Self::mean_precision_unchecked(mu, phi))
    }

    #[inline]
    pub(crate) fn mean_precision_unchecked(mu: f64, phi: f64) -> Self {
        Self {
            a: mu * phi,
            b: (1.0 - mu) * phi,
        }
    }

    /// Shapes of the density proportional to `f^c`: `c (a - 1) + 1` and
    /// `c (b - 1) + 1`. The result may be non-positive; callers check.
    #[inline]
    pub fn powered(self, c: f64) -> Self {
        if c == 1.0 {
            return self;
        }
        Self {
            a: c * (self.a - 1.0) + 1.0,
            b: c * (self.b - 1.0) + 1.0,
        }
    }

    #[inline]
    pub fn is_valid(self) -> bool {
        self.a > 0.0 && self.b > 0.0 && self.a.is_finite() && self.b.is_finite()
    }

    #[inline]
    pub fn mean(self) -> f64 {
        self.a / (self.a + self.b)
    }

    #[inline]
    pub fn precision(self) -> f64 {
        self.a + self.b
    }
}

/// Digamma function, `psi(x) = d/dx ln Gamma(x)`, for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    check_positive(x, "digamma")?;
    Ok(psi(x))
}

/// Trigamma function, `psi'(x)`, for `x > 0`.
pub fn trigamma(x: f64) -> Result<f64> {
    check_positive(x, "trigamma")?;
    Ok(psi1(x))
}

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    check_positive(x, "ln_gamma")?;
    Ok(lgamma(x))
}

/// `ln B(a, b)`.
pub fn log_beta_fn(s: ShapePair) -> Result<f64> {
    if !s.is_valid() {
        return Err(Error::Domain(format!(
            "log_beta_fn needs positive shapes, got ({}, {})",
            s.a, s.b
        )));
    }
    Ok(lbeta(s.a, s.b))
}

/// Log-density of the beta law in the mean/precision parameterization.
pub fn beta_logpdf(y: f64, mu: f64, phi: f64) -> Result<f64> {
    if !(y > 0.0 && y < 1.0) {
        return Err(Error::Domain(format!(
            "beta_logpdf needs 0 < y < 1, got {y}"
        )));
    }
    let s = ShapePair::from_mean_precision(mu, phi)?;
    Ok(logpdf_shapes(y.ln(), (-y).ln_1p(), s))
}

/// `ln of the integral of f(y; mu, phi)^c over (0, 1)`, the normalizer of the power-transformed
/// density.
///
/// Fails with [`Error::NonIntegrable`] when either powered shape is not
/// positive, which happens for unbounded densities raised to a large power.
pub fn powered_density_log_integral(mu: f64, phi: f64, c: f64) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Domain(format!("power must be positive, got {c}")));
    }
    let s = ShapePair::from_mean_precision(mu, phi)?;
    if c == 1.0 {
        return Ok(0.0);
    }
    let p = s.powered(c);
    if !p.is_valid() {
        return Err(Error::NonIntegrable { indices: vec![0] });
    }
    Ok(log_powered_integral_shapes(s, c))
}

/// Draws from `Beta(mu * phi, (1 - mu) * phi)` as a ratio of two gamma
/// variates. Draws that round to exactly 0 or 1 are rejected and redrawn.
pub fn sample_beta<R: Rng + ?Sized>(mu: f64, phi: f64, rng: &mut R) -> Result<f64> {
    let s = ShapePair::from_mean_precision(mu, phi)?;
    Ok(sample_shapes(s, rng))
}

pub(crate) fn sample_shapes<R: Rng + ?Sized>(s: ShapePair, rng: &mut R) -> f64 {
    let ga = Gamma::new(s.a, 1.0).expect("positive shape");
    let gb = Gamma::new(s.b, 1.0).expect("positive shape");
    loop {
        let x: f64 = ga.sample(rng);
        let w: f64 = gb.sample(rng);
        let y = x / (x + w);
        if y > 0.0 && y < 1.0 {
            return y;
        }
    }
}

fn check_positive(x: f64, what: &str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{what} needs a positive argument, got {x}"
        )))
    }
}

/// Unchecked digamma. Callers guarantee `x > 0`.
pub(crate) fn psi(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < ASYMPTOTIC_FROM {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let r = 1.0 / x;
    let r2 = r * r;
    // Bernoulli-number series: sum B_2k / (2k x^2k), k = 1..7
    let series = r2
        * (1.0 / 12.0
            - r2 * (1.0 / 120.0
                - r2 * (1.0 / 252.0
                    - r2 * (1.0 / 240.0
                        - r2 * (1.0 / 132.0 - r2 * (691.0 / 32760.0 - r2 / 12.0))))));
    acc + x.ln() - 0.5 * r - series
}

/// Unchecked trigamma. Callers guarantee `x > 0`.
pub(crate) fn psi1(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < ASYMPTOTIC_FROM {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let r = 1.0 / x;
    let r2 = r * r;
    let series = r
        + 0.5 * r2
        + r * r2
            * (1.0 / 6.0
                - r2 * (1.0 / 30.0
                    - r2 * (1.0 / 42.0
                        - r2 * (1.0 / 30.0
                            - r2 * (5.0 / 66.0 - r2 * (691.0 / 2730.0 - r2 * 7.0 / 6.0))))));
    acc + series
}

/// Unchecked log-gamma. Callers guarantee `x > 0`.
pub(crate) fn lgamma(x: f64) -> f64 {
    if x >= ASYMPTOTIC_FROM {
        stirling(x)
    } else {
        libm::lgamma(x)
    }
}

fn stirling(x: f64) -> f64 {
    let r = 1.0 / x;
    let r2 = r * r;
    let corr = r
        * (1.0 / 12.0
            - r2 * (1.0 / 360.0
                - r2 * (1.0 / 1260.0
                    - r2 * (1.0 / 1680.0
                        - r2 * (1.0 / 1188.0 - r2 * (691.0 / 360_360.0 - r2 / 156.0))))));
    (x - 0.5) * x.ln() - x + HALF_LN_2PI + corr
}

/// Unchecked `ln B(a, b)`.
pub(crate) fn lbeta(a: f64, b: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if lo >= ASYMPTOTIC_FROM {
        // Both large: combine the Stirling pieces directly so that the
        // O(x ln x) terms cancel analytically instead of numerically.
        let s = lo + hi;
        let corr = stirling_corr(lo) + stirling_corr(hi) - stirling_corr(s);
        return -0.5 * hi.ln()
            + HALF_LN_2PI
            + corr
            + (lo - 0.5) * (lo / s).ln()
            + hi * (-lo / s).ln_1p();
    }
    lgamma(a) + lgamma(b) - lgamma(a + b)
}

fn stirling_corr(x: f64) -> f64 {
    stirling(x) - ((x - 0.5) * x.ln() - x + HALF_LN_2PI)
}

#[inline]
pub(crate) fn logpdf_shapes(ln_y: f64, ln_1my: f64, s: ShapePair) -> f64 {
    (s.a - 1.0) * ln_y + (s.b - 1.0) * ln_1my - lbeta(s.a, s.b)
}

/// `ln of the integral of f^c` for a density with shapes `s`; the powered shapes must be
/// valid.
#[inline]
pub(crate) fn log_powered_integral_shapes(s: ShapePair, c: f64) -> f64 {
    if c == 1.0 {
        return 0.0;
    }
    let p = s.powered(c);
    lbeta(p.a, p.b) - c * lbeta(s.a, s.b)
}
