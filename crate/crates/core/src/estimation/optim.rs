//! Quasi-Newton (BFGS) minimizer with Armijo backtracking.
//!
//! The objective closure returns `None` where the objective is undefined;
//! the line search treats that exactly like an insufficient decrease.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct OptimOptions {
    pub max_iter: usize,
    /// Converged when `max |g_j| <= grad_tol * (1 + |f|)`.
    pub grad_tol: f64,
    /// Converged when a full step changes `f` by at most `rel_tol * (1 + |f|)`.
    pub rel_tol: f64,
    pub armijo: f64,
    pub contraction: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-6,
            rel_tol: 1e-10,
            armijo: 1e-4,
            contraction: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0`. `h0` is the initial inverse-Hessian
/// approximation (identity when `None`).
///
/// Returns `None` only if `f` is undefined at `x0`.
pub fn minimize<F>(
    f: F,
    x0: DVector<f64>,
    h0: Option<DMatrix<f64>>,
    opts: &OptimOptions,
) -> Option<OptimOutcome>
where
    F: Fn(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    let p = x0.len();
    let (mut fx, mut g) = f(&x0)?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut x = x0;
    let h_init = h0.unwrap_or_else(|| DMatrix::identity(p, p));
    let mut h = h_init.clone();
    let mut scaled = false;

    for iter in 0..opts.max_iter {
        if g.amax() <= opts.grad_tol * (1.0 + fx.abs()) {
            return Some(done(x, fx, g, iter, true));
        }
        let mut d = -(&h * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            h = h_init.clone();
            d = -(&h * &g);
            slope = g.dot(&d);
            if !(slope < 0.0) {
                d = -g.clone();
                slope = g.dot(&d);
            }
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..80 {
            let xn = &x + t * &d;
            if let Some((fnew, gnew)) = f(&xn) {
                if fnew.is_finite()
                    && gnew.iter().all(|v| v.is_finite())
                    && fnew <= fx + opts.armijo * t * slope
                {
                    accepted = Some((xn, fnew, gnew));
                    break;
                }
            }
            t *= opts.contraction;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            // No progress possible along this direction from a fresh metric
            // either: report the current point as the best we have.
            if h != h_init {
                h = h_init.clone();
                continue;
            }
            let converged = g.amax() <= 1e3 * opts.grad_tol * (1.0 + fx.abs());
            return Some(done(x, fx, g, iter, converged));
        };

        let s = &xn - &x;
        let yv = &gnew - &g;
        let sy = s.dot(&yv);
        let small_change = (fx - fnew).abs() <= opts.rel_tol * (1.0 + fx.abs()) && t == 1.0;
        if sy > 1e-12 * s.norm() * yv.norm() {
            if !scaled && h0_is_identity(&h_init) {
                // Shanno-Phua scaling of the first inverse-Hessian guess.
                let hy = &h * &yv;
                h *= sy / yv.dot(&hy);
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &h * &yv;
            let yhy = yv.dot(&hy);
            // H+ = H - rho (H y s' + s y' H) + (rho^2 y'Hy + rho) s s'
            h -= rho * (&hy * s.transpose() + &s * hy.transpose());
            h += (rho * rho * yhy + rho) * (&s * s.transpose());
        }
        x = xn;
        fx = fnew;
        g = gnew;
        if small_change {
            return Some(done(x, fx, g, iter + 1, true));
        }
    }
    let converged = g.amax() <= opts.grad_tol * (1.0 + fx.abs());
    Some(done(x, fx, g, opts.max_iter, converged))
}

fn h0_is_identity(h: &DMatrix<f64>) -> bool {
    h.is_identity(0.0)
}

fn done(
    x: DVector<f64>,
    value: f64,
    gradient: DVector<f64>,
    iterations: usize,
    converged: bool,
) -> OptimOutcome {
    OptimOutcome {
        x,
        value,
        gradient,
        iterations,
        converged,
    }
}
