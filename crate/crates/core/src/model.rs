//! Closed-form single-photon measurement model of the Sagnac loop.
//!
//! A photon with a Gaussian spectrum of centre `omega0` and linewidth
//! `sigma_omega` traverses the loop; the two output ports click with
//!
//! ```text
//! p2 = ½ (1 + exp(−σ²τ²/2) cos ω₀τ)
//! p1 = ½ (1 − exp(−σ²τ²/2) cos ω₀τ)
//! ```
//!
//! Everything here is a pure function of its inputs.

use serde::{Deserialize, Serialize};

use crate::units::SPEED_OF_LIGHT;
use crate::{Error, Result};

/// Below these values of |ω₀τ| and σ|τ| the Fisher information is replaced
/// by its analytic limit at τ = 0.
const FISHER_LIMIT_THRESHOLD: f64 = 1e-6;

/// Probability floor applied inside the finite-difference oracle's division.
const ORACLE_PROBABILITY_FLOOR: f64 = 1e-30;

/// Default finite-difference step for [`fisher_information_numeric`].
pub const DEFAULT_ORACLE_STEP: f64 = 1e-20;

/// Gaussian photon spectrum.
///
/// `omega0` and `lambda0` are redundant; construction enforces that they
/// agree to 1e-12 relative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpectrum")]
pub struct Spectrum {
    omega0: f64,
    sigma_omega: f64,
    lambda0: f64,
}

#[derive(Deserialize)]
struct RawSpectrum {
    omega0: f64,
    sigma_omega: f64,
    lambda0: f64,
}

impl TryFrom<RawSpectrum> for Spectrum {
    type Error = Error;

    fn try_from(raw: RawSpectrum) -> Result<Self> {
        Spectrum::new(raw.omega0, raw.sigma_omega, raw.lambda0)
    }
}

impl Spectrum {
    pub fn new(omega0: f64, sigma_omega: f64, lambda0: f64) -> Result<Self> {
        if !(omega0.is_finite() && omega0 > 0.0) {
            return Err(Error::ModelParameter(format!("omega0 must be positive, got {omega0}")));
        }
        if !(sigma_omega.is_finite() && sigma_omega > 0.0 && sigma_omega < omega0) {
            return Err(Error::ModelParameter(format!(
                "sigma_omega must lie in (0, omega0), got {sigma_omega}"
            )));
        }
        if !(lambda0.is_finite() && lambda0 > 0.0) {
            return Err(Error::ModelParameter(format!("lambda0 must be positive, got {lambda0}")));
        }
        let from_wavelength = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / lambda0;
        if ((omega0 - from_wavelength) / omega0).abs() >= 1e-12 {
            return Err(Error::ModelParameter(format!(
                "omega0 = {omega0:e} rad/s is inconsistent with lambda0 = {lambda0:e} m \
                 (expected {from_wavelength:e})"
            )));
        }
        Ok(Self {
            omega0,
            sigma_omega,
            lambda0,
        })
    }

    /// Builds the spectrum from the centre wavelength, with `omega0 = 2πc/λ₀`.
    pub fn from_wavelength(lambda0: f64, sigma_omega: f64) -> Result<Self> {
        if !(lambda0.is_finite() && lambda0 > 0.0) {
            return Err(Error::ModelParameter(format!("lambda0 must be positive, got {lambda0}")));
        }
        let omega0 = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / lambda0;
        Self::new(omega0, sigma_omega, lambda0)
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn sigma_omega(&self) -> f64 {
        self.sigma_omega
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    /// Delay giving a π/2 phase at the centre frequency, λ₀/(4c).
    pub fn quarter_wave_delay(&self) -> f64 {
        self.lambda0 / (4.0 * SPEED_OF_LIGHT)
    }
}

/// Linear electro-optic modulator map τ = α·V₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModulatorMap")]
pub struct ModulatorMap {
    alpha: f64,
    v0i: f64,
    alpha_err: f64,
}

#[derive(Deserialize)]
struct RawModulatorMap {
    alpha: f64,
    v0i: f64,
    alpha_err: f64,
}

impl TryFrom<RawModulatorMap> for ModulatorMap {
    type Error = Error;

    fn try_from(raw: RawModulatorMap) -> Result<Self> {
        ModulatorMap::new(raw.alpha, raw.v0i, raw.alpha_err)
    }
}

impl ModulatorMap {
    /// `alpha` in s/V, `v0i` in V, `alpha_err` the 1σ uncertainty of alpha.
    pub fn new(alpha: f64, v0i: f64, alpha_err: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::ModelParameter(format!("alpha must be positive, got {alpha}")));
        }
        if !(v0i.is_finite() && v0i > 0.0) {
            return Err(Error::ModelParameter(format!("v0i must be positive, got {v0i}")));
        }
        if !(alpha_err.is_finite() && alpha_err >= 0.0) {
            return Err(Error::ModelParameter(format!(
                "alpha_err must be non-negative, got {alpha_err}"
            )));
        }
        Ok(Self {
            alpha,
            v0i,
            alpha_err,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn v0i(&self) -> f64 {
        self.v0i
    }

    pub fn alpha_err(&self) -> f64 {
        self.alpha_err
    }

    /// Checks that α·V₀ᵢ reproduces the quarter-wave delay of `spectrum`
    /// within the propagated uncertainty α_err·V₀ᵢ.
    pub fn check_consistency(&self, spectrum: &Spectrum) -> Result<()> {
        let predicted = self.alpha * self.v0i;
        let expected = spectrum.quarter_wave_delay();
        let allowed = self.alpha_err * self.v0i + 1e-12 * expected;
        if (predicted - expected).abs() > allowed {
            return Err(Error::ModelParameter(format!(
                "alpha·v0i = {predicted:e} s differs from λ0/4c = {expected:e} s by more than {allowed:e} s"
            )));
        }
        Ok(())
    }
}

/// A delay estimate with its 1σ uncertainty and the number of photons used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayEstimate {
    pub tau: f64,
    pub sigma_tau: f64,
    pub n_photons: f64,
}

/// Click probabilities `(p1, p2)` at delay `tau`.
///
/// Evaluated in half-angle form so the smaller probability keeps full
/// relative precision near fringe nodes; the larger one is `1 − smaller`.
pub fn click_probabilities(tau: f64, spectrum: &Spectrum) -> (f64, f64) {
    let t = tau.abs();
    let x = 0.5 * (spectrum.sigma_omega * t).powi(2);
    let envelope = (-x).exp();
    let one_minus_envelope = -(-x).exp_m1();
    let (s, c) = (0.5 * spectrum.omega0 * t).sin_cos();
    let p1 = 0.5 * one_minus_envelope + envelope * s * s;
    let p2 = 0.5 * one_minus_envelope + envelope * c * c;
    if p1 <= p2 {
        (p1, 1.0 - p1)
    } else {
        (1.0 - p2, p2)
    }
}

/// Closed-form Fisher information (s⁻²) of a single detected photon about
/// the delay.
///
/// At τ = 0 the expression is 0/0; the analytic limit ω₀² + σ² is returned
/// whenever both |ω₀τ| and σ|τ| are below 1e-6.
pub fn fisher_information(tau: f64, spectrum: &Spectrum) -> f64 {
    let w0 = spectrum.omega0;
    let sw = spectrum.sigma_omega;
    let t = tau.abs();
    if w0 * t < FISHER_LIMIT_THRESHOLD && sw * t < FISHER_LIMIT_THRESHOLD {
        return w0 * w0 + sw * sw;
    }
    let a2 = (sw * t).powi(2);
    let env2 = (-a2).exp();
    let (s, c) = (w0 * t).sin_cos();
    let slope = sw * sw * t * c + w0 * s;
    let numerator = env2 * slope * slope;
    // 1 − e^{−a²}cos² written without cancellation
    let denominator = -(-a2).exp_m1() + env2 * s * s;
    numerator / denominator
}

/// Finite-difference Fisher information Σₘ (∂pₘ/∂τ)² / pₘ, built only from
/// [`click_probabilities`]. Serves as the independent check of
/// [`fisher_information`].
///
/// `step` must not exceed 0.01/ω₀. At an exact zero of a probability the
/// term is taken from the slope of its signed square root, which is the
/// continuous extension of (∂p)²/p through a double root.
pub fn fisher_information_numeric(tau: f64, spectrum: &Spectrum, step: f64) -> Result<f64> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::OracleAccuracy(format!("step must be positive, got {step}")));
    }
    let max_step = 0.01 / spectrum.omega0;
    if step > max_step {
        return Err(Error::OracleAccuracy(format!(
            "step {step:e} s exceeds 0.01/omega0 = {max_step:e} s"
        )));
    }
    let hi = tau + step;
    let lo = tau - step;
    let width = hi - lo;
    let (c1, c2) = click_probabilities(tau, spectrum);
    let (h1, h2) = click_probabilities(hi, spectrum);
    let (l1, l2) = click_probabilities(lo, spectrum);

    let term = |centre: f64, upper: f64, lower: f64| -> f64 {
        if centre == 0.0 {
            let root_slope = (upper.sqrt() + lower.sqrt()) / width;
            4.0 * root_slope * root_slope
        } else {
            let slope = (upper - lower) / width;
            slope * slope / centre.clamp(ORACLE_PROBABILITY_FLOOR, 1.0 - ORACLE_PROBABILITY_FLOOR)
        }
    };
    Ok(term(c1, h1, l1) + term(c2, h2, l2))
}

/// Smallest unbiased delay uncertainty, 1/√(N·F).
pub fn cramer_rao_bound(n_photons: f64, fisher: f64) -> Result<f64> {
    check_positive("n_photons", n_photons)?;
    check_positive("fisher", fisher)?;
    Ok(1.0 / (n_photons * fisher).sqrt())
}

/// Degree of saturation of the Cramér–Rao bound.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Saturation(pub f64);

impl Saturation {
    pub fn value(self) -> f64 {
        self.0
    }

    /// A value above one means the measured spread is below the bound, which
    /// an unbiased estimator can only show by statistical fluctuation.
    pub fn exceeds_bound(self) -> bool {
        self.0 > 1.0
    }
}

/// S = 1 / (√(N·F) · σ_measured).
pub fn saturation(sigma_measured: f64, n_photons: f64, fisher: f64) -> Result<Saturation> {
    check_positive("sigma_measured", sigma_measured)?;
    let bound = cramer_rao_bound(n_photons, fisher)?;
    Ok(Saturation(bound / sigma_measured))
}

pub fn delay_from_voltage(v0: f64, map: &ModulatorMap) -> f64 {
    map.alpha * v0
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive and finite, got {value}")))
    }
}
