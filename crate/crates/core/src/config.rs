//! Run configuration: a TOML schema mapping onto a ready-to-integrate
//! problem, plus the frozen built-in configs behind the `figure` command.
//!
//! Units are encoded in field names (`_m`, `_mps`, `_ghz`, `_rad`) so a
//! config file can be audited line by line. Parsing rejects unknown fields;
//! a typo fails loudly instead of silently falling back to a default.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constants::PhysicalConstants;
use crate::defect::{g0_from_microcavity, DefectModeSpec, MicrocavityCalibration};
use crate::dynamics::{build_problem, SimulationProblem};
use crate::error::{Error, Result};
use crate::geometry::{standard_trajectories, AtomSpec, CrystalSpec, Trajectory};
use crate::rddi::InteractionBox;
use crate::vec3::Vec3;

pub const SCHEMA_VERSION: u32 = 1;

/// Channel inclination locking three void channels onto one crossing point,
/// in degrees: atan(1/sqrt(2)).
pub const DEFAULT_THETA_DEG: f64 = 35.264_389_682_754_654;
pub const DEFAULT_TRANSITION_GHZ: f64 = 21.506_51;
pub const DEFAULT_DIPOLE_MAG_OVER_E_M: f64 = 6.72e-7;

/// Pairs closing in on the crossing point at nearly equal speeds would meet
/// head on; inside this speed window their injection points are nudged
/// apart (see [`RunConfig::build_problem_with_speeds`]).
pub const COLLISION_SPEED_WINDOW_MPS: f64 = 1.0;
pub const COLLISION_OFFSET_M: f64 = 3e-4;

fn default_transition_ghz() -> f64 {
    DEFAULT_TRANSITION_GHZ
}
fn default_theta_deg() -> f64 {
    DEFAULT_THETA_DEG
}
fn default_dipole_mag() -> f64 {
    DEFAULT_DIPOLE_MAG_OVER_E_M
}
fn default_x_axis() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}
fn default_z_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}
fn default_radius_m() -> f64 {
    0.01
}
fn default_rel_tol() -> f64 {
    1e-10
}
fn default_abs_tol() -> f64 {
    1e-13
}
fn default_grid_points() -> usize {
    801
}

/// Complete description of one run, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Atomic transition frequency, GHz (not angular).
    #[serde(default = "default_transition_ghz")]
    pub transition_ghz: f64,
    pub crystal: CrystalConfig,
    pub atoms: Vec<AtomConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeConfig>,
    #[serde(default)]
    pub rddi: RddiConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalConfig {
    pub side_m: f64,
    pub cell_m: f64,
    #[serde(default = "default_theta_deg")]
    pub theta_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    /// Defaults to A, B, C by position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub speed_mps: f64,
    #[serde(default)]
    pub initially_excited: bool,
    #[serde(default = "default_x_axis")]
    pub dipole_dir: [f64; 3],
    /// Injection point shift along x, m.
    #[serde(default)]
    pub x_offset_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    #[serde(default)]
    pub center_m: [f64; 3],
    #[serde(default = "default_radius_m")]
    pub radius_m: f64,
    #[serde(default)]
    pub phase_rad: f64,
    #[serde(default = "default_z_axis")]
    pub k_dir: [f64; 3],
    /// Carrier wavenumber; defaults to pi / cell_m.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_rad_per_m: Option<f64>,
    #[serde(default = "default_x_axis")]
    pub polarization: [f64; 3],
    /// Mode frequency; defaults to the atomic transition (resonant).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency_ghz: Option<f64>,
    /// Peak coupling rate, rad/s. Exactly one of this or `calibration`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g0_rad_per_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationConfig>,
}

/// Microcavity reference measurement fixing the peak coupling rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub v_cav_cm3: f64,
    pub rabi_khz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RddiConfig {
    #[serde(default)]
    pub enabled: bool,
    /// Cube side length of the region where pair couplings act, m;
    /// omitted means everywhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interaction_box_side_m: Option<f64>,
    #[serde(default)]
    pub box_center_m: [f64; 3],
    #[serde(default = "default_dipole_mag")]
    pub dipole_mag_over_e_m: f64,
}

impl Default for RddiConfig {
    fn default() -> Self {
        RddiConfig {
            enabled: false,
            interaction_box_side_m: None,
            box_center_m: [0.0; 3],
            dipole_mag_over_e_m: DEFAULT_DIPOLE_MAG_OVER_E_M,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { rel_tol: default_rel_tol(), abs_tol: default_abs_tol() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { grid_points: default_grid_points() }
    }
}

fn unit(v: [f64; 3], what: &str) -> Result<Vec3> {
    Vec3::new(v[0], v[1], v[2])
        .normalized()
        .ok_or_else(|| Error::invalid(format!("{what} must be a nonzero direction, got {v:?}")))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| {
            Error::invalid(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    /// Canonical serialization; two configs that parse equal serialize equal.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::invalid(format!("cannot serialize config: {e}")))
    }

    /// Hash of the canonical serialization, so re-imported sidecars hash
    /// identically to the configs that produced them.
    pub fn sha256_hex(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml_string()?.as_bytes());
        Ok(format!("{:x}", hasher.finalize()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        if !(self.transition_ghz > 0.0) {
            return Err(Error::invalid("transition_ghz must be positive"));
        }
        if self.atoms.is_empty() || self.atoms.len() > 3 {
            return Err(Error::invalid(format!(
                "1 to 3 atoms required, got {}",
                self.atoms.len()
            )));
        }
        let excited = self.atoms.iter().filter(|a| a.initially_excited).count();
        if excited != 1 {
            return Err(Error::invalid(format!(
                "exactly one atom must be initially excited, got {excited}"
            )));
        }
        for atom in &self.atoms {
            if !(atom.speed_mps > 0.0) || !atom.speed_mps.is_finite() {
                return Err(Error::invalid(format!(
                    "atom speed must be positive, got {}",
                    atom.speed_mps
                )));
            }
            unit(atom.dipole_dir, "dipole_dir")?;
            if !atom.x_offset_m.is_finite() {
                return Err(Error::invalid("x_offset_m must be finite"));
            }
        }
        if let Some(mode) = &self.mode {
            match (mode.g0_rad_per_s, &mode.calibration) {
                (Some(_), None) | (None, Some(_)) => {}
                (Some(_), Some(_)) => {
                    return Err(Error::invalid(
                        "give either mode.g0_rad_per_s or mode.calibration, not both",
                    ))
                }
                (None, None) => {
                    return Err(Error::invalid(
                        "mode needs a coupling rate: set g0_rad_per_s or calibration",
                    ))
                }
            }
            if !(mode.radius_m > 0.0) {
                return Err(Error::invalid("mode radius_m must be positive"));
            }
            if let Some(k) = mode.k_rad_per_m {
                if !(k >= 0.0) || !k.is_finite() {
                    return Err(Error::invalid(format!("k_rad_per_m must be >= 0, got {k}")));
                }
            }
            if let Some(f) = mode.frequency_ghz {
                if !(f > 0.0) {
                    return Err(Error::invalid("mode frequency_ghz must be positive"));
                }
            }
            unit(mode.k_dir, "mode k_dir")?;
            unit(mode.polarization, "mode polarization")?;
        }
        if self.rddi.enabled {
            if let Some(side) = self.rddi.interaction_box_side_m {
                if !(side > 0.0) || !side.is_finite() {
                    return Err(Error::invalid(format!(
                        "interaction_box_side_m must be positive, got {side}"
                    )));
                }
            }
            if !(self.rddi.dipole_mag_over_e_m > 0.0) {
                return Err(Error::invalid("dipole_mag_over_e_m must be positive"));
            }
        }
        if self.mode.is_none() && !self.rddi.enabled {
            return Err(Error::invalid(
                "no interaction: add a [mode] table or enable [rddi]",
            ));
        }
        if self.output.grid_points < 2 {
            return Err(Error::invalid("output.grid_points must be at least 2"));
        }
        Ok(())
    }

    pub fn crystal_spec(&self) -> Result<CrystalSpec> {
        CrystalSpec::new(
            self.crystal.side_m,
            self.crystal.cell_m,
            self.crystal.theta_deg.to_radians(),
        )
    }

    pub fn label(&self, i: usize) -> String {
        self.atoms[i]
            .label
            .clone()
            .unwrap_or_else(|| ["A", "B", "C"][i].to_string())
    }

    /// Builds the integration problem with the configured speeds.
    pub fn build_problem(&self) -> Result<SimulationProblem> {
        self.build_problem_with_speeds(None, None)
    }

    /// Builds the problem with the second and third atoms' speeds overridden,
    /// the form sweeps and searches use.
    ///
    /// Atom pairs whose speeds agree within [`COLLISION_SPEED_WINDOW_MPS`]
    /// would pass through the crossing point simultaneously, where the pair
    /// coupling diverges; any such pair still sharing an injection offset is
    /// pulled apart by [`COLLISION_OFFSET_M`] along x.
    pub fn build_problem_with_speeds(
        &self,
        vb: Option<f64>,
        vc: Option<f64>,
    ) -> Result<SimulationProblem> {
        self.validate()?;
        let n = self.atoms.len();
        if vb.is_some() && n < 2 {
            return Err(Error::invalid("speed override vb needs a second atom"));
        }
        if vc.is_some() && n < 3 {
            return Err(Error::invalid("speed override vc needs a third atom"));
        }

        let mut speeds = [0.0; 3];
        for i in 0..3 {
            speeds[i] = self.atoms.get(i).map_or(speeds[0], |a| a.speed_mps);
        }
        if let Some(v) = vb {
            speeds[1] = v;
        }
        if let Some(v) = vc {
            speeds[2] = v;
        }
        for v in &speeds[..n] {
            if !(*v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("speed override must be positive, got {v}")));
            }
        }

        let mut offsets = [0.0; 3];
        for (i, atom) in self.atoms.iter().enumerate() {
            offsets[i] = atom.x_offset_m;
        }
        if self.rddi.enabled {
            let window = COLLISION_SPEED_WINDOW_MPS;
            if n >= 2 && (speeds[0] - speeds[1]).abs() < window && offsets[0] == offsets[1] {
                offsets[0] += COLLISION_OFFSET_M;
            }
            if n == 3 {
                if (speeds[0] - speeds[2]).abs() < window && offsets[0] == offsets[2] {
                    offsets[0] += COLLISION_OFFSET_M;
                }
                if (speeds[1] - speeds[2]).abs() < window && offsets[1] == offsets[2] {
                    offsets[1] -= COLLISION_OFFSET_M;
                }
            }
        }

        let crystal = self.crystal_spec()?;
        let base = standard_trajectories(&crystal, speeds[0], speeds[1], speeds[2], 0.0)?;
        let consts = PhysicalConstants::default();
        let omega = std::f64::consts::TAU * self.transition_ghz * 1e9;
        let dipole_mag = self.rddi.dipole_mag_over_e_m * consts.e_charge;

        let mut atoms = Vec::with_capacity(n);
        for (i, atom) in self.atoms.iter().enumerate() {
            let shifted = Trajectory::new(
                base[i].r0 + Vec3::X * offsets[i],
                base[i].v,
            )?;
            atoms.push(AtomSpec::new(
                self.label(i),
                shifted,
                unit(atom.dipole_dir, "dipole_dir")?,
                dipole_mag,
                omega,
                atom.initially_excited,
            )?);
        }

        let mut detuning = 0.0;
        let mode = match &self.mode {
            None => None,
            Some(m) => {
                let g0 = match (m.g0_rad_per_s, &m.calibration) {
                    (Some(g0), None) => g0,
                    (None, Some(cal)) => g0_from_microcavity(&MicrocavityCalibration::new(
                        cal.v_cav_cm3 * 1e-6,
                        std::f64::consts::TAU * cal.rabi_khz * 1e3,
                        m.radius_m,
                    )?),
                    _ => unreachable!("validate() enforces exactly one"),
                };
                let k_mag = m.k_rad_per_m.unwrap_or(crystal.k_mag());
                let mode_ghz = m.frequency_ghz.unwrap_or(self.transition_ghz);
                let omega0 = std::f64::consts::TAU * mode_ghz * 1e9;
                detuning = omega - omega0;
                Some(DefectModeSpec::new(
                    Vec3::new(m.center_m[0], m.center_m[1], m.center_m[2]),
                    m.radius_m,
                    m.phase_rad,
                    unit(m.k_dir, "mode k_dir")? * k_mag,
                    unit(m.polarization, "mode polarization")?,
                    omega0,
                    g0,
                )?)
            }
        };

        let rddi_box = match self.rddi.interaction_box_side_m {
            Some(side) if self.rddi.enabled => Some(InteractionBox::new(
                Vec3::new(
                    self.rddi.box_center_m[0],
                    self.rddi.box_center_m[1],
                    self.rddi.box_center_m[2],
                ),
                side / 2.0,
            )?),
            _ => None,
        };

        build_problem(
            &crystal,
            atoms,
            mode,
            self.rddi.enabled,
            rddi_box,
            detuning,
            self.integrator.rel_tol,
            self.integrator.abs_tol,
            self.output.grid_points,
            consts,
        )
    }
}

/// A built-in run the `figure` command reproduces: one or more frozen
/// configs, plus sweep axes when the output is a velocity map.
#[derive(Debug, Clone, Copy)]
pub struct FigureRecipe {
    pub id: &'static str,
    pub description: &'static str,
    /// Output stem and frozen config text for each run.
    pub runs: &'static [(&'static str, &'static str)],
    /// (vb, vc) range strings when this figure sweeps velocities.
    pub sweep: Option<(&'static str, &'static str)>,
}

pub fn figure(id: &str) -> Option<&'static FigureRecipe> {
    FIGURES.iter().find(|f| f.id == id)
}

pub const FIGURES: &[FigureRecipe] = &[
    FigureRecipe {
        id: "2",
        description: "two equal-speed atoms exchanging excitation through the pair \
                      coupling alone, at closest approaches 0.05, 0.1, and 0.3 mm",
        runs: &[
            ("fig2_rmin_0p05mm", FIG2_A),
            ("fig2_rmin_0p10mm", FIG2_B),
            ("fig2_rmin_0p30mm", FIG2_C),
        ],
        sweep: None,
    },
    FigureRecipe {
        id: "3",
        description: "single atom crossing the resonant defect mode and returning \
                      to its excited state",
        runs: &[("fig3", FIG3)],
        sweep: None,
    },
    FigureRecipe {
        id: "4a",
        description: "two atoms at matched 500 m/s with a 0.3 mm injection offset",
        runs: &[("fig4a", FIG4A)],
        sweep: None,
    },
    FigureRecipe {
        id: "4b",
        description: "two atoms, second at 490 m/s",
        runs: &[("fig4b", FIG4B)],
        sweep: None,
    },
    FigureRecipe {
        id: "4c",
        description: "two atoms, second at 515 m/s: most excitation transfers over",
        runs: &[("fig4c", FIG4C)],
        sweep: None,
    },
    FigureRecipe {
        id: "4d",
        description: "two atoms, second at 532.8 m/s: even excitation split",
        runs: &[("fig4d", FIG4D)],
        sweep: None,
    },
    FigureRecipe {
        id: "5",
        description: "final populations of three atoms over a 61 x 61 grid of \
                      second and third injection speeds",
        runs: &[("fig5", FIG5_BASE)],
        sweep: Some(("500:560:61", "500:560:61")),
    },
    FigureRecipe {
        id: "6",
        description: "three atoms at the equal-sharing operating point with the \
                      defect center displaced to (1, -3, 2) mm",
        runs: &[("fig6", FIG6)],
        sweep: None,
    },
];

const FIG2_A: &str = r#"
schema_version = 1

[crystal]
side_m = 0.2
cell_m = 0.0163

[[atoms]]
speed_mps = 200.0
initially_excited = true
x_offset_m = 5e-5

[[atoms]]
speed_mps = 200.0

[rddi]
enabled = true
interaction_box_side_m = 0.02
dipole_mag_over_e_m = 6.72e-7

[output]
grid_points = 801
"#;

const FIG2_B: &str = r#"
schema_version = 1

[crystal]
side_m = 0.2
cell_m = 0.0163

[[atoms]]
speed_mps = 200.0
initially_excited = true
x_offset_m = 1e-4

[[atoms]]
speed_mps = 200.0

[rddi]
enabled = true
interaction_box_side_m = 0.02
dipole_mag_over_e_m = 6.72e-7

[output]
grid_points = 801
"#;

const FIG2_C: &str = r#"
schema_version = 1

[crystal]
side_m = 0.2
cell_m = 0.0163

[[atoms]]
speed_mps = 200.0
initially_excited = true
x_offset_m = 3e-4

[[atoms]]
speed_mps = 200.0

[rddi]
enabled = true
interaction_box_side_m = 0.02
dipole_mag_over_e_m = 6.72e-7

[output]
grid_points = 801
"#;

const FIG3: &str = r#"
schema_version = 1

[crystal]
side_m = 0.2
cell_m = 0.0163

[[atoms]]
speed_mps = 500.0
initially_excited = true

[mode]
radius_m = 0.01

[mode.calibration]
v_cav_cm3 = 11.5
rabi_khz = 43.0

[output]
grid_points = 801
"#;

const FIG4A: &str = r#"
schema_version = 1

[crystal]
side_m = 0.2
cell_m = 0.0163

[[atoms]]
speed_mps = 500.0
initially_excited = true
x_offset_m = 3e-4

[[atoms]]
speed_mps = 500.0

[mode]
radius_m = 0.01
k_rad_per_m = 385.4714912380115

[mode.calibration]
v_cav_cm3 = 11.5
rabi_khz = 43.0

[rddi]
enabled = true
interaction_box_side_m = 0.02
dipole_mag_over_e_m = 6.72e-7

[output]
grid_points = 801
"#;

const FIG4B: &str = r#"
schema_version = 1

[crystal]
side_m = 0.2
cell_m = 0.0163

[[atoms]]
speed_mps = 500.0
initially_excited = true

[[atoms]]
speed_mps = 490.0

[mode]
radius_m = 0.01
k_rad_per_m = 385.4714912380115

[mode.calibration]
v_cav_cm3 = 11.5
rabi_khz = 43.0

[rddi]
enabled = true
interaction_box_side_m = 0.02
dipole_mag_over_e_m = 6.72e-7

[output]
grid_points = 801
"#;

const FIG4C: &str = r#"
schema_version = 1

[crystal]
side_m = 0.2
cell_m = 0.0163

[[atoms]]
speed_mps = 500.0
initially_excited = true

[[atoms]]
speed_mps = 515.0

[mode]
radius_m = 0.01
k_rad_per_m = 385.4714912380115

[mode.calibration]
v_cav_cm3 = 11.5
rabi_khz = 43.0

[rddi]
enabled = true
interaction_box_side_m = 0.02
dipole_mag_over_e_m = 6.72e-7

[output]
grid_points = 801
"#;

const FIG4D: &str = r#"
schema_version = 1

[crystal]
side_m = 0.2
cell_m = 0.0163

[[atoms]]
speed_mps = 500.0
initially_excited = true

[[atoms]]
speed_mps = 532.8

[mode]
radius_m = 0.01
k_rad_per_m = 385.4714912380115

[mode.calibration]
v_cav_cm3 = 11.5
rabi_khz = 43.0

[rddi]
enabled = true
interaction_box_side_m = 0.02
dipole_mag_over_e_m = 6.72e-7

[output]
grid_points = 801
"#;

const FIG5_BASE: &str = r#"
schema_version = 1

[crystal]
side_m = 0.2
cell_m = 0.0163

[[atoms]]
speed_mps = 500.0
initially_excited = true

[[atoms]]
speed_mps = 530.0

[[atoms]]
speed_mps = 520.0

[mode]
radius_m = 0.01
k_rad_per_m = 385.4714912380115

[mode.calibration]
v_cav_cm3 = 11.5
rabi_khz = 43.0

[rddi]
enabled = true
interaction_box_side_m = 0.02
dipole_mag_over_e_m = 6.72e-7

[output]
grid_points = 2
"#;

const FIG6: &str = r#"
schema_version = 1

[crystal]
side_m = 0.2
cell_m = 0.0163

[[atoms]]
speed_mps = 500.0
initially_excited = true

[[atoms]]
speed_mps = 536.4

[[atoms]]
speed_mps = 527.4

[mode]
center_m = [0.001, -0.003, 0.002]
radius_m = 0.01
k_rad_per_m = 385.4714912380115

[mode.calibration]
v_cav_cm3 = 11.5
rabi_khz = 43.0

[rddi]
enabled = true
interaction_box_side_m = 0.02
dipole_mag_over_e_m = 6.72e-7

[output]
grid_points = 801
"#;
