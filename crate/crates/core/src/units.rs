//! Physical constants and unit conversions. Everything internal is SI.

use std::f64::consts::PI;

/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub const FEMTOSECOND: f64 = 1e-15;
pub const ATTOSECOND: f64 = 1e-18;
pub const ZEPTOSECOND: f64 = 1e-21;

pub const SECONDS_PER_HOUR: f64 = 3600.0;

/// One square kilometre in m².
pub const KM2: f64 = 1e6;

/// Sidereal rotation rate of the Earth, rad/s.
pub const EARTH_ROTATION_RATE: f64 = 7.292_115_9e-5;

pub fn deg_per_hour_to_rad_per_s(rate: f64) -> f64 {
    rate * PI / 180.0 / SECONDS_PER_HOUR
}

pub fn rad_per_s_to_deg_per_hour(rate: f64) -> f64 {
    rate * 180.0 / PI * SECONDS_PER_HOUR
}
