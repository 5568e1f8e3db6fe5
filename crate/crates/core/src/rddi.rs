//! Resonant dipole-dipole interaction between two-level atoms.
//!
//! Inside the band gap no propagating photon connects the atoms, but two
//! atoms sharing a void channel region exchange excitation through their
//! near field. The coupling rate (energy over hbar) for dipoles mu_a, mu_b
//! separated by R = R r_hat at transition wavenumber k = omega / c is
//!
//! J = mu_a mu_b / (4 pi eps0 hbar R^3) *
//!     [ (da.db - 3 (da.r)(db.r)) (cos kR + kR sin kR)
//!       - (da.db - (da.r)(db.r)) (kR)^2 cos kR ]
//!
//! which reduces to the electrostatic dipole-dipole form for kR -> 0 and to
//! a 1/R oscillating far field for kR >> 1.

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::geometry::AtomSpec;
use crate::vec3::Vec3;

/// Separation between two atoms: the vector, its length, and its direction.
#[derive(Debug, Clone, Copy)]
pub struct SeparationGeometry {
    pub r_vec: Vec3,
    pub distance: f64,
    pub unit: Vec3,
}

impl SeparationGeometry {
    /// Builds from the separation vector; rejects zero separation.
    pub fn new(r_vec: Vec3) -> Result<Self> {
        if !r_vec.is_finite() {
            return Err(Error::invalid("separation vector must be finite"));
        }
        let distance = r_vec.norm();
        match r_vec.normalized() {
            Some(unit) => Ok(SeparationGeometry { r_vec, distance, unit }),
            None => Err(Error::invalid("separation distance must be positive")),
        }
    }
}

/// Axis-aligned cubic region within which the pair coupling is evaluated.
///
/// Outside the box the quasi-static pair coupling is treated as switched
/// off; the default is a 2 cm cube centered on the crystal center, the
/// region where channel intersections bring atoms close to each other.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InteractionBox {
    pub center: Vec3,
    /// Half of the cube edge, m.
    pub half_extent: f64,
}

impl InteractionBox {
    pub fn new(center: Vec3, half_extent: f64) -> Result<Self> {
        if !(half_extent > 0.0) || !half_extent.is_finite() || !center.is_finite() {
            return Err(Error::invalid(format!(
                "interaction box half extent must be positive, got {half_extent}"
            )));
        }
        Ok(InteractionBox { center, half_extent })
    }

    pub fn contains(&self, r: Vec3) -> bool {
        let d = r - self.center;
        d.x.abs() <= self.half_extent
            && d.y.abs() <= self.half_extent
            && d.z.abs() <= self.half_extent
    }
}

impl Default for InteractionBox {
    fn default() -> Self {
        InteractionBox { center: Vec3::ZERO, half_extent: 0.01 }
    }
}

/// Pair coupling rate J for unit dipole directions and a shared dipole
/// magnitude (C m), rad/s.
pub fn j_coupling(
    dipole_a_dir: Vec3,
    dipole_b_dir: Vec3,
    dipole_mag: f64,
    sep: &SeparationGeometry,
    omega: f64,
    consts: &PhysicalConstants,
) -> f64 {
    j_coupling_mu2(dipole_a_dir, dipole_b_dir, dipole_mag * dipole_mag, sep, omega, consts)
}

/// Pair coupling with the dipole magnitudes already multiplied, so atoms
/// with unequal moments are handled without a square root.
pub fn j_coupling_mu2(
    dipole_a_dir: Vec3,
    dipole_b_dir: Vec3,
    mu2: f64,
    sep: &SeparationGeometry,
    omega: f64,
    consts: &PhysicalConstants,
) -> f64 {
    let k = omega / consts.c;
    let kr = k * sep.distance;
    let (sin_kr, cos_kr) = kr.sin_cos();
    let dd = dipole_a_dir.dot(dipole_b_dir);
    let dra = dipole_a_dir.dot(sep.unit);
    let drb = dipole_b_dir.dot(sep.unit);
    let bracket = (dd - 3.0 * dra * drb) * (cos_kr + kr * sin_kr)
        - (dd - dra * drb) * kr * kr * cos_kr;
    let r3 = sep.distance * sep.distance * sep.distance;
    mu2 / (4.0 * std::f64::consts::PI * consts.epsilon0 * consts.hbar * r3) * bracket
}

/// Quasi-static pair coupling for two moving atoms at time t.
///
/// Uses the instantaneous separation, the first atom's transition
/// frequency (the pair is assumed near-degenerate), and the product of the
/// two dipole magnitudes. Returns 0 when either atom is outside `bounds`;
/// pass `None` to evaluate everywhere. Coincident atoms are a numerical
/// error: the near field diverges.
pub fn j_coupling_at_time_in_box(
    atom_a: &AtomSpec,
    atom_b: &AtomSpec,
    t: f64,
    bounds: Option<&InteractionBox>,
    consts: &PhysicalConstants,
) -> Result<f64> {
    let ra = atom_a.trajectory.position_at(t);
    let rb = atom_b.trajectory.position_at(t);
    if let Some(b) = bounds {
        if !b.contains(ra) || !b.contains(rb) {
            return Ok(0.0);
        }
    }
    let sep = SeparationGeometry::new(rb - ra).map_err(|_| {
        Error::numerical(format!(
            "atoms {} and {} coincident at t = {t}; pair coupling diverges",
            atom_a.label, atom_b.label
        ))
    })?;
    Ok(j_coupling_mu2(
        atom_a.dipole_dir,
        atom_b.dipole_dir,
        atom_a.dipole_mag * atom_b.dipole_mag,
        &sep,
        atom_a.omega,
        consts,
    ))
}

/// Quasi-static pair coupling inside the default interaction region.
pub fn j_coupling_at_time(
    atom_a: &AtomSpec,
    atom_b: &AtomSpec,
    t: f64,
    consts: &PhysicalConstants,
) -> Result<f64> {
    j_coupling_at_time_in_box(atom_a, atom_b, t, Some(&InteractionBox::default()), consts)
}
