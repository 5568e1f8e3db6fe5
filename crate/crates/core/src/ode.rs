//! Embedded Dormand-Prince 5(4) integrator with dense output, for small
//! complex-valued states.
//!
//! Written for the excitation-transfer equations rather than generality:
//! the state dimension is at most [`MAX_DIM`], the right-hand side may fail
//! (coincident atoms), a time-dependent step ceiling keeps steps below the
//! coupling structure scale, and both integration directions are supported.
//!
//! The right-hand side must be smooth over the whole interval. Piecewise
//! problems (interaction regions switching on and off) are integrated one
//! smooth segment at a time by the caller; the final step of each call
//! lands exactly on `t1`, so segment boundaries are honored without the
//! error estimator ever straddling a derivative jump.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 4;

pub type StateArr = [Complex64; MAX_DIM];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub fn zero_state() -> StateArr {
    [ZERO; MAX_DIM]
}

/// Integration tolerances and step bounds.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Hard cap on |h|; breakpoints and the ceiling callback cap further.
    pub max_step: f64,
    pub max_steps: u64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rel_tol: 1e-9, abs_tol: 1e-12, max_step: f64::INFINITY, max_steps: 20_000_000 }
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
// b - bhat, including the k7 = f(t+h, y1) term.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// Dense-output weights for the quartic interpolant.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Grid samples plus the exact endpoint state of one integration call.
#[derive(Debug, Clone)]
pub struct DenseOutput {
    pub samples: Vec<StateArr>,
    pub y_end: StateArr,
}

/// One accepted step's dense-output polynomial.
#[derive(Debug, Clone, Copy)]
pub struct DenseStep {
    pub t: f64,
    pub h: f64,
    rcont: [StateArr; 5],
    ndim: usize,
}

impl DenseStep {
    /// Evaluate the interpolant at `t` inside the step.
    pub fn eval(&self, t: f64) -> StateArr {
        let theta = (t - self.t) / self.h;
        let theta1 = 1.0 - theta;
        let mut out = zero_state();
        for (i, o) in out.iter_mut().enumerate().take(self.ndim) {
            *o = self.rcont[0][i]
                + (self.rcont[1][i]
                    + (self.rcont[2][i]
                        + (self.rcont[3][i] + self.rcont[4][i] * theta1) * theta)
                        * theta1)
                    * theta;
        }
        out
    }

    pub fn covers(&self, t: f64) -> bool {
        let theta = (t - self.t) / self.h;
        (-1e-12..=1.0 + 1e-12).contains(&theta)
    }
}

/// Integrate `rhs` from `t0` to `t1`, emitting dense-output states at the
/// `grid` times (sorted in the direction of integration, inside [t0, t1]).
///
/// `step_ceiling(t)` bounds |h| for the step starting at `t`; return
/// infinity for no bound. `on_accept` runs after every accepted step and may
/// abort the integration (norm watchdog). The final accepted step lands
/// exactly on `t1`.
#[allow(clippy::too_many_arguments)]
pub fn integrate_dense<F, C1, S>(
    mut rhs: F,
    ndim: usize,
    t0: f64,
    t1: f64,
    y0: StateArr,
    grid: &[f64],
    mut step_ceiling: C1,
    mut on_accept: S,
    opts: &OdeOptions,
) -> Result<DenseOutput>
where
    F: FnMut(f64, &StateArr) -> Result<StateArr>,
    C1: FnMut(f64) -> f64,
    S: FnMut(f64, &StateArr) -> Result<()>,
{
    assert!((1..=MAX_DIM).contains(&ndim), "state dimension out of range");
    if !(opts.rel_tol > 0.0) || !(opts.abs_tol > 0.0) {
        return Err(Error::invalid("tolerances must be positive"));
    }
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();

    let mut out = Vec::with_capacity(grid.len());
    let mut gi = 0;
    // Grid points at (or numerically before) the start emit the initial state.
    while gi < grid.len() && dir * (grid[gi] - t0) <= 0.0 {
        out.push(y0);
        gi += 1;
    }
    if span == 0.0 {
        for _ in gi..grid.len() {
            out.push(y0);
        }
        return Ok(DenseOutput { samples: out, y_end: y0 });
    }

    let mut t = t0;
    let mut y = y0;
    let mut h = initial_step(&mut rhs, t0, &y0, ndim, dir, span, opts)?;
    let mut nsteps: u64 = 0;
    let mut last_rejected = false;

    while dir * (t1 - t) > 0.0 {
        nsteps += 1;
        if nsteps > opts.max_steps {
            return Err(Error::numerical(format!(
                "integration exceeded {} steps at t = {t}",
                opts.max_steps
            )));
        }
        let ceil = step_ceiling(t).max(0.0);
        let mut h_abs = h.abs().min(opts.max_step).min(ceil).min(span);
        let h_min = 16.0 * f64::EPSILON * t.abs().max(span);
        if h_abs < h_min {
            return Err(Error::numerical(format!(
                "step size underflow at t = {t} (h = {h_abs:e})"
            )));
        }
        // Clip the final step to land exactly on t1.
        let mut hit_end = false;
        if h_abs >= dir * (t1 - t) {
            h_abs = dir * (t1 - t);
            hit_end = true;
        }
        let hs = dir * h_abs;

        // Stage evaluations. k1 is re-evaluated each step rather than reused
        // from k7 so a rejected step cannot leave stale derivatives behind.
        let k1 = rhs(t, &y)?;
        let mut ys = stage_state(&y, &[k1], &A2, hs, ndim);
        let k2 = rhs(t + C[1] * hs, &ys)?;
        ys = stage_state(&y, &[k1, k2], &A3, hs, ndim);
        let k3 = rhs(t + C[2] * hs, &ys)?;
        ys = stage_state(&y, &[k1, k2, k3], &A4, hs, ndim);
        let k4 = rhs(t + C[3] * hs, &ys)?;
        ys = stage_state(&y, &[k1, k2, k3, k4], &A5, hs, ndim);
        let k5 = rhs(t + C[4] * hs, &ys)?;
        ys = stage_state(&y, &[k1, k2, k3, k4, k5], &A6, hs, ndim);
        let k6 = rhs(t + C[5] * hs, &ys)?;
        let y1 = stage_state(&y, &[k1, k2, k3, k4, k5, k6], &B, hs, ndim);
        let t_new = if hit_end { t1 } else { t + hs };
        let k7 = rhs(t_new, &y1)?;

        // Embedded error, RMS-scaled.
        let ks = [k1, k2, k3, k4, k5, k6, k7];
        let mut err_sq = 0.0;
        for i in 0..ndim {
            let mut e = ZERO;
            for (j, k) in ks.iter().enumerate() {
                if E[j] != 0.0 {
                    e += k[i] * E[j];
                }
            }
            let sc = opts.abs_tol + opts.rel_tol * y[i].norm().max(y1[i].norm());
            err_sq += (e.norm() * h_abs / sc).powi(2);
        }
        let err = (err_sq / ndim as f64).sqrt();

        if err <= 1.0 {
            let dense = make_dense(t, hs, &y, &y1, &ks, ndim);
            // Emit grid points covered by this step.
            while gi < grid.len() && dir * (grid[gi] - t_new) <= 0.0 {
                if grid[gi] == t_new {
                    out.push(y1);
                } else {
                    out.push(dense.eval(grid[gi]));
                }
                gi += 1;
            }
            t = t_new;
            y = y1;
            on_accept(t, &y)?;
            let mut factor = 0.9 * err.max(1e-10).powf(-0.2);
            factor = factor.clamp(0.2, 10.0);
            if last_rejected {
                factor = factor.min(1.0);
            }
            h = dir * (h_abs * factor);
            last_rejected = false;
        } else {
            let factor = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            h = dir * (h_abs * factor);
            last_rejected = true;
        }
    }

    // Any trailing grid points numerically at t1.
    for _ in gi..grid.len() {
        out.push(y);
    }
    Ok(DenseOutput { samples: out, y_end: y })
}

fn stage_state(y: &StateArr, ks: &[StateArr], a: &[f64], h: f64, ndim: usize) -> StateArr {
    let mut out = *y;
    for i in 0..ndim {
        let mut acc = ZERO;
        for (k, &aj) in ks.iter().zip(a) {
            if aj != 0.0 {
                acc += k[i] * aj;
            }
        }
        out[i] += acc * h;
    }
    out
}

fn make_dense(t: f64, h: f64, y0: &StateArr, y1: &StateArr, ks: &[StateArr; 7], ndim: usize) -> DenseStep {
    let mut rcont = [zero_state(); 5];
    for i in 0..ndim {
        let ydiff = y1[i] - y0[i];
        let bspl = ks[0][i] * h - ydiff;
        rcont[0][i] = y0[i];
        rcont[1][i] = ydiff;
        rcont[2][i] = bspl;
        rcont[3][i] = ydiff - ks[6][i] * h - bspl;
        let mut acc = ZERO;
        for (j, k) in ks.iter().enumerate() {
            if D[j] != 0.0 {
                acc += k[i] * D[j];
            }
        }
        rcont[4][i] = acc * h;
    }
    DenseStep { t, h, rcont, ndim }
}

fn initial_step<F>(
    rhs: &mut F,
    t0: f64,
    y0: &StateArr,
    ndim: usize,
    dir: f64,
    span: f64,
    opts: &OdeOptions,
) -> Result<f64>
where
    F: FnMut(f64, &StateArr) -> Result<StateArr>,
{
    // Scale a trial step from the initial derivative, then refine with one
    // Euler probe (condensed form of the classic starting-step estimate).
    let f0 = rhs(t0, y0)?;
    let sc = |y: &StateArr, i: usize| opts.abs_tol + opts.rel_tol * y[i].norm();
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..ndim {
        d0 += (y0[i].norm() / sc(y0, i)).powi(2);
        d1 += (f0[i].norm() / sc(y0, i)).powi(2);
    }
    d0 = (d0 / ndim as f64).sqrt();
    d1 = (d1 / ndim as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 * span } else { 0.01 * (d0 / d1) };
    let h0 = h0.min(span);
    let mut y1 = *y0;
    for i in 0..ndim {
        y1[i] += f0[i] * (dir * h0);
    }
    let f1 = rhs(t0 + dir * h0, &y1)?;
    let mut d2 = 0.0;
    for i in 0..ndim {
        d2 += ((f1[i] - f0[i]).norm() / sc(y0, i)).powi(2);
    }
    d2 = (d2 / ndim as f64).sqrt() / h0;
    let d_max = d1.max(d2);
    let h1 = if d_max <= 1e-15 {
        (h0 * 1e-3).max(1e-6 * span)
    } else {
        (0.01 / d_max).powf(0.2)
    };
    Ok(dir * h1.min(100.0 * h0).min(span))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn exponential_decay_matches_closed_form() {
        let mut y0 = zero_state();
        y0[0] = c(1.0, 0.0);
        let grid = [0.25, 0.5, 1.0];
        let out = integrate_dense(
            |_t, y| {
                let mut dy = zero_state();
                dy[0] = -y[0];
                Ok(dy)
            },
            1,
            0.0,
            1.0,
            y0,
            &grid,
            |_| f64::INFINITY,
            |_, _| Ok(()),
            &OdeOptions::default(),
        )
        .unwrap();
        for (t, y) in grid.iter().zip(&out.samples) {
            assert_relative_eq!(y[0].re, (-t).exp(), epsilon = 1e-9);
        }
    }

    #[test]
    fn oscillator_dense_output_on_fine_grid() {
        // i y' = y  =>  y = exp(-i t); dense output sampled off step ends.
        let mut y0 = zero_state();
        y0[0] = c(1.0, 0.0);
        let grid: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.01).collect();
        let out = integrate_dense(
            |_t, y| {
                let mut dy = zero_state();
                dy[0] = c(0.0, -1.0) * y[0];
                Ok(dy)
            },
            1,
            0.0,
            10.0,
            y0,
            &grid,
            |_| f64::INFINITY,
            |_, _| Ok(()),
            &OdeOptions { rel_tol: 1e-10, abs_tol: 1e-13, ..Default::default() },
        )
        .unwrap();
        for (t, y) in grid.iter().zip(&out.samples) {
            assert_relative_eq!(y[0].re, t.cos(), epsilon = 1e-8);
            assert_relative_eq!(y[0].im, -t.sin(), epsilon = 1e-8);
        }
    }

    #[test]
    fn backward_integration_recovers_initial_state() {
        let mut y0 = zero_state();
        y0[0] = c(0.3, 0.0);
        y0[1] = c(0.0, -0.7);
        let rhs = |t: f64, y: &StateArr| {
            let mut dy = zero_state();
            let g = (3.0 * t).sin();
            dy[0] = c(0.0, -g) * y[1];
            dy[1] = c(0.0, -g) * y[0];
            Ok(dy)
        };
        let opts = OdeOptions { rel_tol: 1e-11, abs_tol: 1e-14, ..Default::default() };
        let fwd = integrate_dense(
            rhs, 2, 0.0, 2.0, y0, &[2.0], |_| f64::INFINITY, |_, _| Ok(()), &opts,
        )
        .unwrap();
        let back = integrate_dense(
            rhs, 2, 2.0, 0.0, fwd.y_end, &[0.0], |_| f64::INFINITY, |_, _| Ok(()), &opts,
        )
        .unwrap();
        assert!((back.y_end[0] - y0[0]).norm() < 1e-9);
        assert!((back.y_end[1] - y0[1]).norm() < 1e-9);
    }

    #[test]
    fn piecewise_segments_compose_exactly() {
        // Integral of a step function, one smooth segment per branch: the
        // final step of each call lands exactly on its t1, and constant
        // derivatives integrate to roundoff.
        let last_t = std::cell::RefCell::new(f64::NAN);
        let up = integrate_dense(
            |_t, _y| {
                let mut dy = zero_state();
                dy[0] = c(1.0, 0.0);
                Ok(dy)
            },
            1,
            0.0,
            0.5,
            zero_state(),
            &[0.5],
            |_| f64::INFINITY,
            |t, _| {
                *last_t.borrow_mut() = t;
                Ok(())
            },
            &OdeOptions::default(),
        )
        .unwrap();
        assert_eq!(*last_t.borrow(), 0.5, "final step must land on t1 exactly");
        let down = integrate_dense(
            |_t, _y| {
                let mut dy = zero_state();
                dy[0] = c(-1.0, 0.0);
                Ok(dy)
            },
            1,
            0.5,
            1.0,
            up.y_end,
            &[1.0],
            |_| f64::INFINITY,
            |_, _| Ok(()),
            &OdeOptions::default(),
        )
        .unwrap();
        assert!(down.y_end[0].re.abs() <= 1e-14, "got {}", down.y_end[0].re);
    }

    #[test]
    fn step_ceiling_is_respected() {
        let max_seen = std::cell::RefCell::new(0.0f64);
        let last_t = std::cell::RefCell::new(0.0f64);
        integrate_dense(
            |_t, y| {
                let mut dy = zero_state();
                dy[0] = -y[0];
                Ok(dy)
            },
            1,
            0.0,
            1.0,
            [c(1.0, 0.0), ZERO, ZERO, ZERO],
            &[1.0],
            |_| 0.01,
            |t, _| {
                let mut m = max_seen.borrow_mut();
                let mut l = last_t.borrow_mut();
                *m = m.max(t - *l);
                *l = t;
                Ok(())
            },
            &OdeOptions::default(),
        )
        .unwrap();
        assert!(*max_seen.borrow() <= 0.01 + 1e-12);
    }

    #[test]
    fn rhs_failure_propagates() {
        let r = integrate_dense(
            |t, _y| {
                if t > 0.3 {
                    Err(Error::numerical("boom"))
                } else {
                    Ok(zero_state())
                }
            },
            1,
            0.0,
            1.0,
            zero_state(),
            &[1.0],
            |_| f64::INFINITY,
            |_, _| Ok(()),
            &OdeOptions::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn accept_callback_can_abort() {
        let r = integrate_dense(
            |_t, y| {
                let mut dy = zero_state();
                dy[0] = y[0];
                Ok(dy)
            },
            1,
            0.0,
            5.0,
            [c(1.0, 0.0), ZERO, ZERO, ZERO],
            &[5.0],
            |_| f64::INFINITY,
            |t, y| {
                if y[0].norm() > 2.0 {
                    Err(Error::numerical(format!("aborted at t = {t}")))
                } else {
                    Ok(())
                }
            },
            &OdeOptions::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn zero_span_returns_initial_state() {
        let mut y0 = zero_state();
        y0[0] = c(0.5, 0.5);
        let out = integrate_dense(
            |_t, _y| Ok(zero_state()),
            1,
            1.0,
            1.0,
            y0,
            &[1.0, 1.0],
            |_| f64::INFINITY,
            |_, _| Ok(()),
            &OdeOptions::default(),
        )
        .unwrap();
        assert_eq!(out.samples.len(), 2);
        assert_eq!(out.samples[0][0], y0[0]);
        assert_eq!(out.y_end[0], y0[0]);
    }
}
