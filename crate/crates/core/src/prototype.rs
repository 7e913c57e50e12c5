//! Parameters of the 2 km telecom-band prototype, used as defaults
//! throughout the crate and by the `sagnac` tool.

use crate::calibration::FringeParameters;
use crate::model::{ModulatorMap, Spectrum};
use crate::units::SECONDS_PER_HOUR;

pub const LAMBDA0: f64 = 1550e-9;
/// Angular linewidth of the down-converted photons, rad/s.
pub const SIGMA_OMEGA: f64 = 0.25e12;

pub const FIBER_LENGTH: f64 = 2000.0;
pub const COIL_RADIUS: f64 = 0.125;
pub const REFRACTIVE_INDEX: f64 = 1.471;
pub const TOTAL_AREA: f64 = 125.0;
/// Measured serrodyne ramp repetition rate, Hz.
pub const SERRODYNE_RATE: f64 = 54_795.0;

/// Combined detected rate of both channels during the long run, Hz.
pub const RATE_TOTAL: f64 = 631.6e3;
pub const INTEGRATION_TIME: f64 = 1.0;
pub const RUN_DURATION: f64 = 9.0 * SECONDS_PER_HOUR;
/// Operating voltage of the long run, V.
pub const OPERATING_VOLTAGE: f64 = 3.86;
pub const DARK_RATE: f64 = 25.0;

/// Weighted inflection voltage and its 1σ error, V.
pub const INFLECTION_VOLTAGE: f64 = 3.8596;
pub const INFLECTION_VOLTAGE_ERR: f64 = 0.0095;

pub const CALIBRATION_V_A: f64 = 3.6;
pub const CALIBRATION_V_B: f64 = 4.4;
pub const CALIBRATION_STEPS: usize = 100;
pub const CALIBRATION_REPEATS: usize = 10;
pub const CALIBRATION_INTEGRATION_TIME: f64 = 0.1;

/// Linear calibration coefficients reported for the prototype.
pub const K1_PER_FS: f64 = 1.0937;
pub const K1_PER_FS_ERR: f64 = 0.0036;
pub const K2: f64 = -1.3432;
pub const K2_ERR: f64 = 0.0049;

/// Bright-source fringe parameters of channel 1 (powers in W).
pub const FRINGE_CH1: FringeParameters = FringeParameters {
    f0: 482e-9,
    a: 364e-9,
    w: 7.84,
    v0i: 3.85,
};
pub const FRINGE_CH1_ERR: FringeParameters = FringeParameters {
    f0: 1e-9,
    a: 1e-9,
    w: 0.04,
    v0i: 0.01,
};

/// Bright-source fringe parameters of channel 2 (powers in W).
pub const FRINGE_CH2: FringeParameters = FringeParameters {
    f0: 334e-9,
    a: 327e-9,
    w: 7.79,
    v0i: 3.93,
};
pub const FRINGE_CH2_ERR: FringeParameters = FringeParameters {
    f0: 1e-9,
    a: 1e-9,
    w: 0.03,
    v0i: 0.03,
};

/// Power-meter noise scale of the bright scans, W.
pub const BRIGHT_NOISE: f64 = 1e-9;

/// Reported detection limits, s.
pub const DETECTION_LIMIT_TAU: f64 = 249e-21;
pub const DETECTION_LIMIT_TAU_TIME: f64 = 72.0;
pub const DETECTION_LIMIT_DIFF: f64 = 26e-21;

pub fn spectrum() -> Spectrum {
    Spectrum::from_wavelength(LAMBDA0, SIGMA_OMEGA).expect("prototype spectrum is valid")
}

/// Modulator map derived from the weighted inflection voltage.
pub fn modulator_map() -> ModulatorMap {
    let quarter = spectrum().quarter_wave_delay();
    let alpha = quarter / INFLECTION_VOLTAGE;
    let alpha_err = alpha * INFLECTION_VOLTAGE_ERR / INFLECTION_VOLTAGE;
    ModulatorMap::new(alpha, INFLECTION_VOLTAGE, alpha_err).expect("prototype map is valid")
}
