//! Velocity sweeps and searches for entangling injection speeds.
//!
//! A sweep integrates the same scene over a grid of injection speeds and
//! summarizes the final state at every point; grid points are independent,
//! so they can run in parallel with results merged back in grid order.
//! Searches combine a coarse scan with golden-section refinement to pick the
//! speeds that best leave the atoms in a Bell or W state.

use std::str::FromStr;

use rayon::prelude::*;

use crate::analysis::FinalStateReport;
use crate::dynamics::{integrate, linspace, SimulationProblem};
use crate::error::{Error, Result};

/// Velocity bracket refinement target, m/s.
pub const SEARCH_SPEED_TOL: f64 = 0.01;
/// Largest photon escape probability a Bell-state search accepts.
pub const BELL_PHOTON_MAX: f64 = 0.01;
/// Largest deviation from half population per atom a Bell search accepts.
pub const BELL_POP_TOL: f64 = 0.02;
/// Largest photon escape probability a W-state search accepts.
pub const W_PHOTON_MAX: f64 = 0.03;
/// Largest deviation from a third population per atom a W search accepts.
pub const W_POP_TOL: f64 = 0.03;

/// Coordinate descent cycles for the two-velocity search.
const W_SEARCH_CYCLES: usize = 4;

/// Inclusive velocity interval sampled at `n` evenly spaced points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityRange {
    pub lo_mps: f64,
    pub hi_mps: f64,
    pub n: usize,
}

impl VelocityRange {
    pub fn new(lo_mps: f64, hi_mps: f64, n: usize) -> Result<Self> {
        if !(lo_mps > 0.0) || !lo_mps.is_finite() || !hi_mps.is_finite() {
            return Err(Error::invalid(format!(
                "velocity range must start above zero, got [{lo_mps}, {hi_mps}]"
            )));
        }
        if !(hi_mps > lo_mps) {
            return Err(Error::invalid(format!(
                "velocity range must increase, got [{lo_mps}, {hi_mps}]"
            )));
        }
        if n < 2 {
            return Err(Error::invalid(format!("at least 2 range points required, got {n}")));
        }
        Ok(VelocityRange { lo_mps, hi_mps, n })
    }

    pub fn values(&self) -> Vec<f64> {
        linspace(self.lo_mps, self.hi_mps, self.n)
    }
}

impl FromStr for VelocityRange {
    type Err = Error;

    /// Parses `lo:hi:n`, e.g. `500:560:61`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, n] = parts.as_slice() else {
            return Err(Error::invalid(format!(
                "velocity range must look like lo:hi:n, got {s:?}"
            )));
        };
        let bad = |what: &str| Error::invalid(format!("bad {what} in velocity range {s:?}"));
        VelocityRange::new(
            lo.trim().parse().map_err(|_| bad("lower bound"))?,
            hi.trim().parse().map_err(|_| bad("upper bound"))?,
            n.trim().parse().map_err(|_| bad("point count"))?,
        )
    }
}

/// One evaluated grid point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub i_vb: usize,
    /// Second grid index; `None` for a one-dimensional sweep.
    pub i_vc: Option<usize>,
    pub vb_mps: f64,
    pub vc_mps: Option<f64>,
    pub report: FinalStateReport,
}

/// Integrates `build(vb, vc)` at every grid point, row-major with `vb`
/// outermost. The parallel path yields bit-identical results to the serial
/// one because every point is computed independently and merged in grid
/// order; a failed point carries its grid coordinates back in the error.
pub fn run_sweep<F>(
    vb: &[f64],
    vc: Option<&[f64]>,
    parallel: bool,
    build: F,
) -> Result<Vec<SweepPoint>>
where
    F: Fn(f64, Option<f64>) -> Result<SimulationProblem> + Sync,
{
    if vb.is_empty() || vc.is_some_and(|c| c.is_empty()) {
        return Err(Error::invalid("sweep grid must not be empty"));
    }
    let n_inner = vc.map_or(1, <[f64]>::len);
    let total = vb.len() * n_inner;

    let eval = |idx: usize| -> Result<SweepPoint> {
        let i_vb = idx / n_inner;
        let vb_mps = vb[i_vb];
        let (i_vc, vc_mps) = match vc {
            Some(c) => (Some(idx % n_inner), Some(c[idx % n_inner])),
            None => (None, None),
        };
        let point = |e: Error| Error::SweepPoint {
            i_vb,
            i_vc: i_vc.unwrap_or(0),
            vb_mps,
            vc_mps,
            source: Box::new(e),
        };
        let problem = build(vb_mps, vc_mps).map_err(point)?;
        let series = integrate(&problem).map_err(point)?;
        let report = FinalStateReport::from_series(&series).map_err(point)?;
        Ok(SweepPoint { i_vb, i_vc, vb_mps, vc_mps, report })
    };

    let results: Vec<Result<SweepPoint>> = if parallel {
        (0..total).into_par_iter().map(eval).collect()
    } else {
        (0..total).map(eval).collect()
    };
    results.into_iter().collect()
}

/// Best point of a bracketed scalar minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMin {
    pub x: f64,
    pub f: f64,
    pub evaluations: usize,
}

const INVPHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section refinement inside [a, b]; returns the best point seen.
/// Assumes the minimum is interior; a monotone objective simply converges
/// to the cheaper edge.
fn golden_section<F>(mut a: f64, mut b: f64, x_tol: f64, eval: &mut F) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    let (mut x_best, mut f_best) = if fc <= fd { (c, fc) } else { (d, fd) };
    let mut iterations = 0;
    while b - a > x_tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = eval(d)?;
        }
        let (x_new, f_new) = if fc <= fd { (c, fc) } else { (d, fd) };
        if f_new < f_best {
            x_best = x_new;
            f_best = f_new;
        }
        iterations += 1;
        if iterations > 200 {
            return Err(Error::numerical(format!(
                "golden-section bracket [{a}, {b}] failed to shrink below {x_tol}"
            )));
        }
    }
    Ok((x_best, f_best))
}

/// Minimizes `f` over the sorted coarse grid `xs`, then refines around the
/// coarse minimum by golden section until the bracket is narrower than
/// `x_tol`. Returns the best point seen anywhere, coarse scan included.
/// Fails with [`Error::NoMinimumInBracket`] when the coarse minimum sits on
/// an endpoint, since no interior bracket exists there.
pub fn minimize_scalar<F>(xs: &[f64], x_tol: f64, mut f: F) -> Result<ScalarMin>
where
    F: FnMut(f64) -> Result<f64>,
{
    if xs.len() < 3 {
        return Err(Error::invalid("scalar minimization needs at least 3 coarse points"));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("coarse grid must increase strictly"));
    }
    if !(x_tol > 0.0) {
        return Err(Error::invalid("x_tol must be positive"));
    }

    let mut evaluations = 0;
    let mut eval = |x: f64| -> Result<f64> {
        evaluations += 1;
        f(x)
    };

    let mut i_min = 0;
    let mut f_min = f64::INFINITY;
    let mut coarse = Vec::with_capacity(xs.len());
    for (i, &x) in xs.iter().enumerate() {
        let fx = eval(x)?;
        coarse.push(fx);
        if fx < f_min {
            f_min = fx;
            i_min = i;
        }
    }
    if i_min == 0 || i_min == xs.len() - 1 {
        return Err(Error::NoMinimumInBracket {
            lo: xs[0],
            hi: *xs.last().unwrap(),
            at: xs[i_min],
        });
    }

    let (x_ref, f_ref) = golden_section(xs[i_min - 1], xs[i_min + 1], x_tol, &mut eval)?;
    let (x_best, f_best) = if f_ref < f_min { (x_ref, f_ref) } else { (xs[i_min], f_min) };
    Ok(ScalarMin { x: x_best, f: f_best, evaluations })
}

/// Best point of a two-variable minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMin2 {
    pub x: f64,
    pub y: f64,
    pub f: f64,
    pub evaluations: usize,
}

/// Two-variable minimization: coarse scan over the full grid, then
/// alternating golden-section line searches around the running best point.
/// The line bracket is one coarse step wide on each side, clamped to the
/// grid bounds. Fails when the coarse minimum sits on the grid boundary.
pub fn minimize_coordinate_descent<F>(
    xs: &[f64],
    ys: &[f64],
    x_tol: f64,
    mut f: F,
) -> Result<ScalarMin2>
where
    F: FnMut(f64, f64) -> Result<f64>,
{
    if xs.len() < 3 || ys.len() < 3 {
        return Err(Error::invalid("grid minimization needs at least 3 points per axis"));
    }
    for vals in [xs, ys] {
        if vals.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("coarse grid must increase strictly"));
        }
    }
    if !(x_tol > 0.0) {
        return Err(Error::invalid("x_tol must be positive"));
    }

    let mut evaluations = 0;
    let mut best = (f64::NAN, f64::NAN, f64::INFINITY);
    let mut eval = |x: f64, y: f64| -> Result<f64> {
        evaluations += 1;
        let v = f(x, y)?;
        if v < best.2 {
            best = (x, y, v);
        }
        Ok(v)
    };

    let (mut i_min, mut j_min, mut f_min) = (0, 0, f64::INFINITY);
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            let v = eval(x, y)?;
            if v < f_min {
                (i_min, j_min, f_min) = (i, j, v);
            }
        }
    }
    if i_min == 0 || i_min == xs.len() - 1 {
        return Err(Error::NoMinimumInBracket {
            lo: xs[0],
            hi: *xs.last().unwrap(),
            at: xs[i_min],
        });
    }
    if j_min == 0 || j_min == ys.len() - 1 {
        return Err(Error::NoMinimumInBracket {
            lo: ys[0],
            hi: *ys.last().unwrap(),
            at: ys[j_min],
        });
    }

    let step_x = xs[i_min + 1] - xs[i_min];
    let step_y = ys[j_min + 1] - ys[j_min];
    let (mut x0, mut y0) = (xs[i_min], ys[j_min]);
    for _ in 0..W_SEARCH_CYCLES {
        let a = (x0 - step_x).max(xs[0]);
        let b = (x0 + step_x).min(*xs.last().unwrap());
        let (x_new, _) = golden_section(a, b, x_tol, &mut |x| eval(x, y0))?;
        let moved_x = (x_new - x0).abs();
        x0 = x_new;

        let a = (y0 - step_y).max(ys[0]);
        let b = (y0 + step_y).min(*ys.last().unwrap());
        let (y_new, _) = golden_section(a, b, x_tol, &mut |y| eval(x0, y))?;
        let moved_y = (y_new - y0).abs();
        y0 = y_new;

        if moved_x < x_tol && moved_y < x_tol {
            break;
        }
    }

    let (x, y, f_best) = best;
    Ok(ScalarMin2 { x, y, f: f_best, evaluations })
}

/// Distance of a final state from the symmetric Bell target: photon escape
/// probability plus squared population imbalances.
pub fn bell_objective(report: &FinalStateReport) -> f64 {
    let pa = report.populations[0];
    let pb = report.populations[1];
    report.photon_prob + (pa - 0.5).powi(2) + (pb - 0.5).powi(2)
}

/// Distance of a final state from the three-atom W target.
pub fn w_objective(report: &FinalStateReport) -> f64 {
    let third = 1.0 / 3.0;
    report.photon_prob
        + report.populations.iter().map(|p| (p - third).powi(2)).sum::<f64>()
}

/// Whether a two-atom final state meets the Bell acceptance thresholds.
pub fn bell_target_met(report: &FinalStateReport) -> bool {
    report.photon_prob <= BELL_PHOTON_MAX
        && report.populations.iter().all(|p| (p - 0.5).abs() <= BELL_POP_TOL)
}

/// Whether a three-atom final state meets the W acceptance thresholds.
pub fn w_target_met(report: &FinalStateReport) -> bool {
    report.photon_prob <= W_PHOTON_MAX
        && report.populations.iter().all(|p| (p - 1.0 / 3.0).abs() <= W_POP_TOL)
}

/// Search result: the best velocities found, the objective there, the final
/// state summary, and whether the state clears the acceptance thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// Optimized speeds, one entry per searched velocity.
    pub v_mps: Vec<f64>,
    pub objective: f64,
    pub report: FinalStateReport,
    pub target_met: bool,
    pub evaluations: usize,
}

fn simulate_report<F>(build: &F, vb: f64, vc: Option<f64>) -> Result<FinalStateReport>
where
    F: Fn(f64, Option<f64>) -> Result<SimulationProblem>,
{
    let problem = build(vb, vc)?;
    let series = integrate(&problem)?;
    FinalStateReport::from_series(&series)
}

/// Finds the second atom's speed that best shares the excitation between
/// two atoms. The builder maps a speed to a ready-to-integrate problem.
pub fn search_bell_velocity<F>(range: &VelocityRange, build: F) -> Result<SearchOutcome>
where
    F: Fn(f64) -> Result<SimulationProblem>,
{
    let wrap = |v: f64, _: Option<f64>| build(v);
    let mut best: Option<(f64, FinalStateReport)> = None;
    let min = minimize_scalar(&range.values(), SEARCH_SPEED_TOL, |v| {
        let report = simulate_report(&wrap, v, None)?;
        let w = bell_objective(&report);
        if best.as_ref().is_none_or(|(bw, _)| w < *bw) {
            best = Some((w, report));
        }
        Ok(w)
    })?;
    let (_, report) = best.expect("minimize_scalar evaluated at least once");
    let target_met = bell_target_met(&report);
    Ok(SearchOutcome {
        v_mps: vec![min.x],
        objective: min.f,
        report,
        target_met,
        evaluations: min.evaluations,
    })
}

/// Finds the second and third atoms' speeds that best share the excitation
/// among three atoms.
pub fn search_w_velocities<F>(
    range_b: &VelocityRange,
    range_c: &VelocityRange,
    build: F,
) -> Result<SearchOutcome>
where
    F: Fn(f64, f64) -> Result<SimulationProblem>,
{
    let wrap = |vb: f64, vc: Option<f64>| build(vb, vc.expect("vc always set here"));
    let mut best: Option<(f64, FinalStateReport)> = None;
    let min = minimize_coordinate_descent(
        &range_b.values(),
        &range_c.values(),
        SEARCH_SPEED_TOL,
        |vb, vc| {
            let report = simulate_report(&wrap, vb, Some(vc))?;
            let w = w_objective(&report);
            if best.as_ref().is_none_or(|(bw, _)| w < *bw) {
                best = Some((w, report));
            }
            Ok(w)
        },
    )?;
    let (_, report) = best.expect("grid scan evaluated at least once");
    let target_met = w_target_met(&report);
    Ok(SearchOutcome {
        v_mps: vec![min.x, min.y],
        objective: min.f,
        report,
        target_met,
        evaluations: min.evaluations,
    })
}
