//! Fiber-coil geometry and Sagnac kinematics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::prototype;
use crate::units::{KM2, SPEED_OF_LIGHT};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GyroGeometry {
    pub fiber_length: f64,
    pub coil_radius: f64,
    pub refractive_index: f64,
    pub n_coils: u64,
    /// Enclosed area summed over all turns, m².
    pub total_area: f64,
    /// Serrodyne ramp rate, Hz (one period = two loop transit times).
    pub serrodyne_rate: f64,
}

impl GyroGeometry {
    /// The prototype coil, with the measured ramp rate rather than the one
    /// implied by the nominal fiber length.
    pub fn prototype() -> Self {
        let mut g = derived_geometry(prototype::FIBER_LENGTH, prototype::COIL_RADIUS, prototype::REFRACTIVE_INDEX)
            .expect("prototype geometry is valid");
        g.total_area = prototype::TOTAL_AREA;
        g.serrodyne_rate = prototype::SERRODYNE_RATE;
        g
    }

    /// One-way optical transit time of the loop, nL/c.
    pub fn transit_time(&self) -> f64 {
        self.refractive_index * self.fiber_length / SPEED_OF_LIGHT
    }

    /// Checks the loose consistency relations between stored fields (2 %).
    pub fn check_consistency(&self) -> Result<()> {
        let fields = [
            self.fiber_length,
            self.coil_radius,
            self.refractive_index,
            self.total_area,
            self.serrodyne_rate,
        ];
        if fields.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.n_coils == 0 {
            return Err(Error::domain("all geometry fields must be positive"));
        }
        let area = self.n_coils as f64 * PI * self.coil_radius.powi(2);
        if (self.total_area - area).abs() > 0.02 * area {
            return Err(Error::domain(format!(
                "total area {} m² differs from n·π·r² = {area} m² by more than 2%",
                self.total_area
            )));
        }
        let turns = self.fiber_length / (2.0 * PI * self.coil_radius);
        if (self.n_coils as f64 - turns).abs() > 0.02 * turns {
            return Err(Error::domain(format!(
                "{} coils inconsistent with L/(2πr) = {turns}",
                self.n_coils
            )));
        }
        Ok(())
    }
}

/// Geometry of a circular coil wound from `fiber_length` of fiber.
pub fn derived_geometry(fiber_length: f64, coil_radius: f64, refractive_index: f64) -> Result<GyroGeometry> {
    for (name, v) in [
        ("fiber_length", fiber_length),
        ("coil_radius", coil_radius),
        ("refractive_index", refractive_index),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    let n_coils = (fiber_length / (2.0 * PI * coil_radius)).round().max(1.0) as u64;
    let total_area = n_coils as f64 * PI * coil_radius * coil_radius;
    let transit = refractive_index * fiber_length / SPEED_OF_LIGHT;
    Ok(GyroGeometry {
        fiber_length,
        coil_radius,
        refractive_index,
        n_coils,
        total_area,
        serrodyne_rate: 1.0 / (2.0 * transit),
    })
}

/// Sagnac delay 4𝒜Ω/c² between counter-propagating paths.
pub fn rotation_to_delay(omega: f64, total_area: f64) -> f64 {
    4.0 * total_area * omega / (SPEED_OF_LIGHT * SPEED_OF_LIGHT)
}

pub fn delay_to_rotation(tau: f64, total_area: f64) -> f64 {
    tau * SPEED_OF_LIGHT * SPEED_OF_LIGHT / (4.0 * total_area)
}

/// Delay detection limit per unit area, s/km².
pub fn figure_of_merit(sigma_tau: f64, total_area: f64) -> f64 {
    sigma_tau / (total_area / KM2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{deg_per_hour_to_rad_per_s, rad_per_s_to_deg_per_hour};
    use proptest::prelude::*;

    #[test]
    fn prototype_coil() {
        let g = derived_geometry(2000.0, 0.125, 1.471).unwrap();
        assert_eq!(g.n_coils, 2546);
        assert!((g.total_area - 125.0).abs() < 0.05);
        assert!((g.transit_time() - 9.813e-6).abs() < 0.001e-6);
        assert!((g.serrodyne_rate - 50.95e3).abs() < 0.01e3);
        g.check_consistency().unwrap();
        GyroGeometry::prototype().check_consistency().unwrap();
    }

    #[test]
    fn single_loop() {
        let r = 0.3;
        let g = derived_geometry(2.0 * PI * r, r, 1.5).unwrap();
        assert_eq!(g.n_coils, 1);
        assert!((g.total_area - PI * r * r).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_positive_inputs() {
        assert!(derived_geometry(0.0, 0.1, 1.4).is_err());
        assert!(derived_geometry(10.0, -0.1, 1.4).is_err());
        assert!(derived_geometry(10.0, 0.1, f64::NAN).is_err());
    }

    #[test]
    fn inconsistent_geometry_detected() {
        let mut g = GyroGeometry::prototype();
        g.total_area = 150.0;
        assert!(g.check_consistency().is_err());
    }

    #[test]
    fn bias_instability_equivalence() {
        let omega = deg_per_hour_to_rad_per_s(0.96);
        assert!((omega - 4.654e-6).abs() < 1e-9);
        let tau = rotation_to_delay(omega, 125.0);
        assert!((tau - 26e-21).abs() / 26e-21 < 0.02, "{tau:e}");

        let back = delay_to_rotation(26e-21, 125.0);
        assert!((back - 4.67e-6).abs() / 4.67e-6 < 0.01);
        assert!((rad_per_s_to_deg_per_hour(back) - 0.96).abs() / 0.96 < 0.02);
        assert_eq!(rotation_to_delay(0.0, 125.0), 0.0);
        assert_eq!(delay_to_rotation(0.0, 125.0), 0.0);
    }

    #[test]
    fn earth_rate_delay() {
        let tau = rotation_to_delay(7.292e-5, 125.0);
        assert!((tau - 4.06e-19).abs() < 0.01e-19);
        assert!(tau > 249e-21);
    }

    #[test]
    fn figure_of_merit_values() {
        let f = figure_of_merit(249e-21, 125.0);
        assert!((f - 1.99e-15).abs() < 0.01e-15);
        let f = figure_of_merit(18e-21, 125.0);
        assert!((f - 1.44e-16).abs() < 0.01e-16);
        let halved = figure_of_merit(18e-21, 250.0);
        assert!((halved * 2.0 - f).abs() < 1e-30);
    }

    proptest! {
        #[test]
        fn rotation_round_trip(omega in -1e-2f64..1e-2, area in 1e-2f64..1e4) {
            let back = delay_to_rotation(rotation_to_delay(omega, area), area);
            prop_assert!((back - omega).abs() <= 1e-12 * omega.abs());
        }

        #[test]
        fn rotation_is_linear_and_odd(omega in -1e-3f64..1e-3, k in -50.0f64..50.0) {
            let t = rotation_to_delay(omega, 125.0);
            let scaled = rotation_to_delay(k * omega, 125.0);
            prop_assert!((scaled - k * t).abs() <= 1e-12 * (k * t).abs() + 1e-300);
            prop_assert_eq!(rotation_to_delay(-omega, 125.0), -t);
        }

        #[test]
        fn merit_scales_with_sigma(sigma in 1e-22f64..1e-15, k in 0.01f64..100.0) {
            let f = figure_of_merit(sigma, 125.0);
            prop_assert!((figure_of_merit(k * sigma, 125.0) - k * f).abs() <= 1e-12 * k * f);
        }
    }
}
