//! Adaptive quadrature for pulse-area integrals.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;
/// Hard cap on integrand evaluations. Tolerances below the integrand's own
/// evaluation noise make the error estimate stall at a floor the refinement
/// cannot cross; the budget turns that from a hang into an error.
const MAX_EVALS: u64 = 20_000_000;

/// Integrate `f` over `[a, b]` to absolute tolerance `abs_tol` by adaptive
/// Simpson subdivision.
///
/// `min_seed` forces an initial uniform split into at least that many
/// intervals so that integrands oscillating faster than the interval width
/// are not mistaken for smooth ones; pass 1 when no scale is known.
///
/// `abs_tol` must stay above the integrand's own evaluation noise
/// (roughly eps times the largest cancellation inside `f` times the peak
/// width); below that the refinement chases roundoff and is stopped by the
/// evaluation budget with an error.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    min_seed: usize,
) -> Result<f64> {
    if !(b >= a) {
        return Err(Error::invalid(format!("quadrature needs b >= a, got [{a}, {b}]")));
    }
    if !(abs_tol > 0.0) {
        return Err(Error::invalid(format!("quadrature tolerance must be positive, got {abs_tol}")));
    }
    if a == b {
        return Ok(0.0);
    }
    let n = min_seed.clamp(1, 1 << 16);
    let h = (b - a) / n as f64;
    let tol_per = abs_tol / n as f64;
    let mut total = 0.0;
    let mut evals = 0u64;
    for i in 0..n {
        let lo = a + i as f64 * h;
        let hi = if i + 1 == n { b } else { a + (i + 1) as f64 * h };
        let flo = eval(&f, lo)?;
        let fmid = eval(&f, 0.5 * (lo + hi))?;
        let fhi = eval(&f, hi)?;
        let whole = simpson(lo, hi, flo, fmid, fhi);
        total += recurse(&f, lo, hi, flo, fmid, fhi, whole, tol_per, MAX_DEPTH, &mut evals)?;
    }
    Ok(total)
}

fn eval<F: Fn(f64) -> f64>(f: &F, x: f64) -> Result<f64> {
    let y = f(x);
    if y.is_finite() {
        Ok(y)
    } else {
        Err(Error::numerical(format!("integrand non-finite at t = {x}")))
    }
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    evals: &mut u64,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let fml = eval(f, 0.5 * (a + m))?;
    let fmr = eval(f, 0.5 * (m + b))?;
    *evals += 2;
    if *evals > MAX_EVALS {
        return Err(Error::numerical(format!(
            "quadrature exceeded {MAX_EVALS} evaluations near [{a}, {b}]; \
             the tolerance is likely below the integrand's evaluation noise"
        )));
    }
    let left = simpson(a, m, fa, fml, fm);
    let right = simpson(m, b, fm, fmr, fb);
    let err = left + right - whole;
    // Factor 15 from the fifth-order error cancellation of the halved rule.
    // The noise term accepts panels whose residual sits at the roundoff
    // floor of their own magnitude; splitting further cannot improve those.
    let noise = f64::EPSILON * (left.abs() + right.abs() + whole.abs());
    if err.abs() <= (15.0 * tol).max(noise) || b - a <= f64::EPSILON * (a.abs() + b.abs()) {
        return Ok(left + right + err / 15.0);
    }
    if depth == 0 {
        return Err(Error::numerical(format!(
            "quadrature failed to converge on [{a}, {b}] (residual {err:e})"
        )));
    }
    let lv = recurse(f, a, m, fa, fml, fm, left, 0.5 * tol, depth - 1, evals)?;
    let rv = recurse(f, m, b, fm, fmr, fb, right, 0.5 * tol, depth - 1, evals)?;
    Ok(lv + rv)
}
