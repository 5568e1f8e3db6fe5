//! Crystal frame and atomic beam geometry.
//!
//! The crystal is a cube of side `l` centered on the origin, with three void
//! channels drilled at angle `theta` to the z axis (the body-diagonal drilling
//! angle, arctan(1/sqrt 2) for the standard three-cylinder geometry). Atoms
//! enter through the bottom face at t = 0 and fly ballistically; every
//! standard channel axis passes through the crystal center.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::Vec3;

/// Photonic crystal geometry: cube side, lattice cell, channel tilt.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CrystalSpec {
    /// Cube side, m.
    pub l: f64,
    /// Lattice cell side, m.
    pub a: f64,
    /// Channel tilt from the z axis, rad.
    pub theta: f64,
}

impl CrystalSpec {
    pub fn new(l: f64, a: f64, theta: f64) -> Result<Self> {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::invalid(format!("crystal side must be positive, got {l}")));
        }
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::invalid(format!("lattice cell must be positive, got {a}")));
        }
        if !theta.is_finite() || theta <= 0.0 || theta >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::invalid(format!(
                "channel tilt must lie in (0, pi/2) rad, got {theta}"
            )));
        }
        Ok(CrystalSpec { l, a, theta })
    }

    /// Band-edge wavenumber of the lattice, pi/a.
    pub fn k_mag(&self) -> f64 {
        std::f64::consts::PI / self.a
    }

    /// Time for an atom at `speed` to reach the crystal center along a
    /// standard channel: l / (2 v cos theta).
    pub fn midpoint_time(&self, speed: f64) -> f64 {
        self.l / (2.0 * speed * self.theta.cos())
    }

    /// Full bottom-to-top transit time along a standard channel.
    pub fn transit_time(&self, speed: f64) -> f64 {
        self.l / (speed * self.theta.cos())
    }
}

/// Ballistic trajectory r(t) = r0 + v t.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Trajectory {
    /// Position at t = 0, m.
    pub r0: Vec3,
    /// Velocity, m/s.
    pub v: Vec3,
}

impl Trajectory {
    pub fn new(r0: Vec3, v: Vec3) -> Result<Self> {
        if !r0.is_finite() || !v.is_finite() {
            return Err(Error::invalid("trajectory fields must be finite"));
        }
        if v.norm() == 0.0 {
            return Err(Error::invalid("trajectory velocity must be nonzero"));
        }
        Ok(Trajectory { r0, v })
    }

    pub fn position_at(&self, t: f64) -> Vec3 {
        self.r0 + self.v * t
    }

    pub fn speed(&self) -> f64 {
        self.v.norm()
    }
}

/// A two-level atom on a ballistic trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtomSpec {
    pub label: String,
    pub trajectory: Trajectory,
    /// Transition dipole direction; must be unit length.
    pub dipole_dir: Vec3,
    /// Transition dipole magnitude, C m.
    pub dipole_mag: f64,
    /// Transition angular frequency, rad/s.
    pub omega: f64,
    pub initially_excited: bool,
}

impl AtomSpec {
    pub fn new(
        label: impl Into<String>,
        trajectory: Trajectory,
        dipole_dir: Vec3,
        dipole_mag: f64,
        omega: f64,
        initially_excited: bool,
    ) -> Result<Self> {
        if (dipole_dir.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "dipole direction must be unit length within 1e-12, |d| = {}",
                dipole_dir.norm()
            )));
        }
        if !(dipole_mag >= 0.0) || !dipole_mag.is_finite() {
            return Err(Error::invalid(format!("dipole magnitude must be >= 0, got {dipole_mag}")));
        }
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::invalid(format!("transition frequency must be positive, got {omega}")));
        }
        Ok(AtomSpec {
            label: label.into(),
            trajectory,
            dipole_dir,
            dipole_mag,
            omega,
            initially_excited,
        })
    }
}

/// The three standard channel trajectories, injected through the bottom face
/// at t = 0 with speeds `v_a`, `v_b`, `v_c`.
///
/// Axes A and B lie in mirror-image channels meeting the z axis at the
/// crystal center; axis C approaches in the y = 0 plane from the opposite x
/// side. `x_offset_a` shifts atom A's entry point along x without touching
/// its velocity, which moves its closest-approach distance to the other
/// trajectories away from zero.
pub fn standard_trajectories(
    crystal: &CrystalSpec,
    v_a: f64,
    v_b: f64,
    v_c: f64,
    x_offset_a: f64,
) -> Result<[Trajectory; 3]> {
    for (name, v) in [("v_a", v_a), ("v_b", v_b), ("v_c", v_c)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    let (sin_t, cos_t) = crystal.theta.sin_cos();
    let tan_t = sin_t / cos_t;
    let sqrt3 = 3.0f64.sqrt();
    let quarter = crystal.l / 4.0;

    let a = Trajectory::new(
        Vec3::new(quarter * tan_t + x_offset_a, -quarter * sqrt3 * tan_t, -2.0 * quarter),
        Vec3::new(-0.5 * v_a * sin_t, 0.5 * v_a * sqrt3 * sin_t, v_a * cos_t),
    )?;
    let b = Trajectory::new(
        Vec3::new(quarter * tan_t, quarter * sqrt3 * tan_t, -2.0 * quarter),
        Vec3::new(-0.5 * v_b * sin_t, -0.5 * v_b * sqrt3 * sin_t, v_b * cos_t),
    )?;
    let c = Trajectory::new(
        Vec3::new(-2.0 * quarter * tan_t, 0.0, -2.0 * quarter),
        Vec3::new(v_c * sin_t, 0.0, v_c * cos_t),
    )?;
    Ok([a, b, c])
}

/// Time at which the trajectory's z coordinate reaches the top face +l/2.
///
/// Rejects trajectories that do not ascend (v_z <= 0).
pub fn exit_time(crystal: &CrystalSpec, trajectory: &Trajectory) -> Result<f64> {
    if trajectory.v.z <= 0.0 {
        return Err(Error::invalid(format!(
            "exit time requires upward motion, v_z = {}",
            trajectory.v.z
        )));
    }
    Ok((0.5 * crystal.l - trajectory.r0.z) / trajectory.v.z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn standard_crystal() -> CrystalSpec {
        CrystalSpec::new(0.2, 0.0163, (1.0 / 2.0f64.sqrt()).atan()).unwrap()
    }

    #[test]
    fn crystal_band_edge_wavenumber() {
        let c = standard_crystal();
        assert_eq!(c.k_mag(), std::f64::consts::PI / 0.0163);
    }

    #[test]
    fn crystal_rejects_bad_fields() {
        assert!(CrystalSpec::new(0.0, 0.0163, 0.6).is_err());
        assert!(CrystalSpec::new(0.2, -1.0, 0.6).is_err());
        assert!(CrystalSpec::new(0.2, 0.0163, 0.0).is_err());
        assert!(CrystalSpec::new(0.2, 0.0163, 1.6).is_err());
    }

    #[test]
    fn atom_a_crosses_origin_at_hand_solved_time() {
        // Solving r_A(0) + v_A t = 0 by hand gives t = l / (2 v cos theta),
        // which is 2.449e-4 s for v = 500 m/s.
        let crystal = standard_crystal();
        let [a, _, _] = standard_trajectories(&crystal, 500.0, 500.0, 500.0, 0.0).unwrap();
        let t = crystal.midpoint_time(500.0);
        assert_relative_eq!(t, 2.449e-4, epsilon = 1e-7);
        assert!(a.position_at(t).norm() <= 1e-6);
    }

    #[test]
    fn standard_entry_points_and_speeds() {
        let crystal = standard_crystal();
        let trajs = standard_trajectories(&crystal, 500.0, 510.0, 520.0, 0.0).unwrap();
        let c0 = trajs[2].position_at(0.0);
        assert_relative_eq!(c0.x, -0.070711, epsilon = 1e-5);
        assert_relative_eq!(c0.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(c0.z, -0.1, epsilon = 1e-12);
        for (traj, want) in trajs.iter().zip([500.0, 510.0, 520.0]) {
            assert_relative_eq!(traj.speed(), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn x_offset_shifts_atom_a_entry_only() {
        let crystal = standard_crystal();
        let base = standard_trajectories(&crystal, 500.0, 500.0, 500.0, 0.0).unwrap();
        let off = standard_trajectories(&crystal, 500.0, 500.0, 500.0, 3e-4).unwrap();
        assert_relative_eq!(off[0].r0.x - base[0].r0.x, 3e-4, max_relative = 1e-12);
        assert_eq!(off[0].r0.y, base[0].r0.y);
        assert_eq!(off[0].v, base[0].v);
        assert_eq!(off[1].r0, base[1].r0);
        assert_eq!(off[2].r0, base[2].r0);
    }

    #[test]
    fn exit_time_matches_closed_form() {
        let crystal = standard_crystal();
        let [a, _, _] = standard_trajectories(&crystal, 500.0, 500.0, 500.0, 0.0).unwrap();
        let t = exit_time(&crystal, &a).unwrap();
        assert_relative_eq!(t, 4.899e-4, epsilon = 1e-7);
        // Independent closed form l / (v cos theta).
        let expect = 0.2 / (500.0 * (1.0 / 2.0f64.sqrt()).atan().cos());
        assert_relative_eq!(t, expect, max_relative = 1e-12);
    }

    #[test]
    fn exit_time_from_top_face_is_zero() {
        let crystal = standard_crystal();
        let traj = Trajectory::new(Vec3::new(0.0, 0.0, 0.1), Vec3::new(0.0, 0.0, 500.0)).unwrap();
        assert_eq!(exit_time(&crystal, &traj).unwrap(), 0.0);
    }

    #[test]
    fn exit_time_rejects_descending() {
        let crystal = standard_crystal();
        let traj = Trajectory::new(Vec3::new(0.0, 0.0, -0.1), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert!(exit_time(&crystal, &traj).is_err());
        let down = Trajectory::new(Vec3::new(0.0, 0.0, -0.1), Vec3::new(0.0, 0.0, -1.0)).unwrap();
        assert!(exit_time(&crystal, &down).is_err());
    }

    #[test]
    fn trajectory_rejects_zero_velocity() {
        assert!(Trajectory::new(Vec3::ZERO, Vec3::ZERO).is_err());
    }

    #[test]
    fn atom_spec_validates_dipole_and_frequency() {
        let traj = Trajectory::new(Vec3::ZERO, Vec3::Z).unwrap();
        assert!(AtomSpec::new("A", traj, Vec3::X, 1e-25, 1e10, true).is_ok());
        let skewed = Vec3::new(1.0, 1e-5, 0.0);
        assert!(AtomSpec::new("A", traj, skewed, 1e-25, 1e10, true).is_err());
        assert!(AtomSpec::new("A", traj, Vec3::X, -1.0, 1e10, true).is_err());
        assert!(AtomSpec::new("A", traj, Vec3::X, 1e-25, 0.0, true).is_err());
    }

    proptest! {
        // Motion stays parallel to v: increments are scalar multiples of v.
        #[test]
        fn displacement_parallel_to_velocity(
            vx in -1e3f64..1e3, vy in -1e3f64..1e3, vz in 1.0f64..1e3,
            t1 in -1e-3f64..1e-3, t2 in -1e-3f64..1e-3,
        ) {
            let traj = Trajectory::new(Vec3::new(0.01, -0.02, -0.1), Vec3::new(vx, vy, vz)).unwrap();
            let d = traj.position_at(t2) - traj.position_at(t1);
            let cross = Vec3::new(
                d.y * vz - d.z * vy,
                d.z * vx - d.x * vz,
                d.x * vy - d.y * vx,
            );
            let scale = d.norm() * traj.speed();
            prop_assert!(cross.norm() <= 1e-9 * scale.max(1e-300));
        }

        // Every unshifted standard axis passes through the crystal center at
        // its own midpoint time.
        #[test]
        fn standard_axes_meet_center(
            va in 100.0f64..2000.0, vb in 100.0f64..2000.0, vc in 100.0f64..2000.0,
        ) {
            let crystal = standard_crystal();
            let trajs = standard_trajectories(&crystal, va, vb, vc, 0.0).unwrap();
            for (traj, v) in trajs.iter().zip([va, vb, vc]) {
                prop_assert!(traj.position_at(crystal.midpoint_time(v)).norm() < 1e-9);
            }
        }

        // exit_time equals l / (v cos theta) for standard channels.
        #[test]
        fn exit_time_closed_form_all_speeds(v in 50.0f64..5000.0) {
            let crystal = standard_crystal();
            let [a, b, c] = standard_trajectories(&crystal, v, v, v, 0.0).unwrap();
            let expect = crystal.l / (v * crystal.theta.cos());
            for traj in [a, b, c] {
                let t = exit_time(&crystal, &traj).unwrap();
                prop_assert!((t - expect).abs() <= 1e-12 * expect);
            }
        }

        // Doubling the speed halves the exit time.
        #[test]
        fn exit_time_scales_inversely(v in 50.0f64..2000.0) {
            let crystal = standard_crystal();
            let [a1, _, _] = standard_trajectories(&crystal, v, v, v, 0.0).unwrap();
            let [a2, _, _] = standard_trajectories(&crystal, 2.0 * v, v, v, 0.0).unwrap();
            let t1 = exit_time(&crystal, &a1).unwrap();
            let t2 = exit_time(&crystal, &a2).unwrap();
            prop_assert!((t1 - 2.0 * t2).abs() <= 1e-12 * t1);
        }
    }
}
