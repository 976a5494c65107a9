//! CODATA 2018 values (SI) used by the physical scale mapping.

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Proton mass, kg.
pub const PROTON_MASS: f64 = 1.672_621_923_69e-27;

/// Bohr radius, m.
pub const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;

/// One nanosecond, s.
pub const NANOSECOND: f64 = 1e-9;
