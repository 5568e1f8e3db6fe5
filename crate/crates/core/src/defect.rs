//! Defect-mode field profile and atom-field coupling.
//!
//! A point defect in the crystal supports a localized monochromatic mode.
//! Its spatial profile is an exponential envelope around the defect center
//! modulated by a standing-wave carrier,
//!
//! f(r) = exp(-|r - R0| / R_def) * sin(k . r + phi),
//!
//! and an atom with unit dipole direction d at position r couples with
//! angular rate G = g0 (eps . d) f(r).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::AtomSpec;
use crate::quad::adaptive_simpson;
use crate::vec3::Vec3;

/// Localized defect mode of the crystal.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DefectModeSpec {
    /// Defect center R0, m.
    pub center: Vec3,
    /// Envelope decay length R_def, m.
    pub radius: f64,
    /// Carrier phase phi, rad.
    pub phase: f64,
    /// Carrier wavevector, rad/m. May be zero for a pure envelope.
    pub k_vec: Vec3,
    /// Mode polarization direction; must be unit length.
    pub polarization: Vec3,
    /// Mode angular frequency, rad/s.
    pub omega0: f64,
    /// Peak vacuum coupling rate g0, rad/s.
    pub g0: f64,
}

impl DefectModeSpec {
    pub fn new(
        center: Vec3,
        radius: f64,
        phase: f64,
        k_vec: Vec3,
        polarization: Vec3,
        omega0: f64,
        g0: f64,
    ) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::invalid(format!("defect radius must be positive, got {radius}")));
        }
        if (polarization.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "polarization must be unit length within 1e-12, |eps| = {}",
                polarization.norm()
            )));
        }
        if !(omega0 > 0.0) || !omega0.is_finite() {
            return Err(Error::invalid(format!("mode frequency must be positive, got {omega0}")));
        }
        if !(g0 >= 0.0) || !g0.is_finite() {
            return Err(Error::invalid(format!("peak coupling must be >= 0, got {g0}")));
        }
        if !center.is_finite() || !k_vec.is_finite() || !phase.is_finite() {
            return Err(Error::invalid("defect mode fields must be finite"));
        }
        Ok(DefectModeSpec { center, radius, phase, k_vec, polarization, omega0, g0 })
    }
}

/// Microcavity measurement used to calibrate the peak coupling rate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MicrocavityCalibration {
    /// Reference cavity mode volume, m^3.
    pub v_cav: f64,
    /// Vacuum Rabi angular frequency measured in that cavity, rad/s.
    pub rabi: f64,
    /// Defect envelope decay length the mode volume is scaled to, m.
    pub r_def: f64,
}

impl MicrocavityCalibration {
    pub fn new(v_cav: f64, rabi: f64, r_def: f64) -> Result<Self> {
        for (name, v) in [("v_cav", v_cav), ("rabi", rabi), ("r_def", r_def)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(MicrocavityCalibration { v_cav, rabi, r_def })
    }
}

/// Dimensionless mode profile f(r), bounded by the envelope.
pub fn mode_amplitude(spec: &DefectModeSpec, r: Vec3) -> f64 {
    let envelope = (-(r - spec.center).norm() / spec.radius).exp();
    envelope * (spec.k_vec.dot(r) + spec.phase).sin()
}

/// Atom-field coupling rate G = g0 (eps . d) f(r), rad/s.
pub fn coupling(spec: &DefectModeSpec, dipole_dir: Vec3, r: Vec3) -> f64 {
    spec.g0 * spec.polarization.dot(dipole_dir) * mode_amplitude(spec, r)
}

/// Coupling rate seen by a moving atom at time t.
pub fn coupling_pulse(spec: &DefectModeSpec, atom: &AtomSpec, t: f64) -> f64 {
    coupling(spec, atom.dipole_dir, atom.trajectory.position_at(t))
}

/// Peak coupling from a microcavity calibration: the measured Rabi frequency
/// scaled by sqrt(V_cav / V_eff), with the defect's effective mode volume
/// taken as a sphere of twice the envelope decay length.
pub fn g0_from_microcavity(cal: &MicrocavityCalibration) -> f64 {
    let v_eff = effective_mode_volume(cal.r_def);
    (cal.v_cav / v_eff).sqrt() * cal.rabi
}

/// Effective defect mode volume (4/3) pi (2 r_def)^3, m^3.
pub fn effective_mode_volume(r_def: f64) -> f64 {
    4.0 / 3.0 * std::f64::consts::PI * (2.0 * r_def).powi(3)
}

/// Integral of the coupling pulse over [t0, t1], rad.
///
/// `abs_tol` defaults to 1e-9 rad. The quadrature is seeded with several
/// nodes per envelope length and per carrier half-period crossed at the
/// atom's speed, so fast carriers are resolved even when the envelope is
/// wide.
pub fn pulse_area(
    spec: &DefectModeSpec,
    atom: &AtomSpec,
    t0: f64,
    t1: f64,
    abs_tol: Option<f64>,
) -> Result<f64> {
    if !(t1 >= t0) {
        return Err(Error::invalid(format!("pulse area needs t1 >= t0, got [{t0}, {t1}]")));
    }
    let tol = abs_tol.unwrap_or(1e-9);
    let speed = atom.trajectory.speed();
    let k = spec.k_vec.norm();
    let mut scale = spec.radius / speed;
    if k > 0.0 {
        scale = scale.min(std::f64::consts::PI / k / speed);
    }
    let n = (4.0 * (t1 - t0) / scale).ceil().clamp(1.0, 65536.0) as usize;
    adaptive_simpson(|t| coupling_pulse(spec, atom, t), t0, t1, tol, n)
}
