use serde::{Deserialize, Serialize};

/// Physical constants in SI units.
///
/// Configurable only so tests can probe scaling behavior; everything else
/// should use [`PhysicalConstants::default`], which carries the CODATA values.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Reduced Planck constant, J s.
    pub hbar: f64,
    /// Vacuum permittivity, F/m.
    pub epsilon0: f64,
    /// Speed of light, m/s.
    pub c: f64,
    /// Elementary charge, C.
    pub e_charge: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            hbar: 1.054_571_817e-34,
            epsilon0: 8.854_187_812_8e-12,
            c: 299_792_458.0,
            e_charge: 1.602_176_634e-19,
        }
    }
}
