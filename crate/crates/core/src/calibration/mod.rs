//! Two-stage calibration: bright-scan fringe fits give the inflection
//! voltage and the modulator slope α; a photon-counting voltage staircase
//! then gives the linear contrast calibration ΔX = K₁τ + K₂.

mod contrast;
mod fringe;
mod linear;

pub use contrast::{normalize_counts, step_contrast, ContrastPoint, StepErrorMode};
pub use fringe::{fit_fringe, FringeFit, FringeParameters};
pub use linear::{
    delay_from_contrast, estimate_delay, fit_linear_calibration, CalibrationErrorTerm, ContrastDelay,
    LinearCalibration,
};

use serde::{Deserialize, Serialize};

use crate::model::{ModulatorMap, Spectrum};
use crate::sim::{BrightScan, CalibrationScan, CountRecord};
use crate::{Error, Result};

pub const CALIBRATION_SCHEMA_VERSION: u32 = 1;

/// Inverse-variance weighted mean of independent `(value, error)` pairs.
pub fn combine_inflection(estimates: &[(f64, f64)]) -> Result<(f64, f64)> {
    if estimates.is_empty() {
        return Err(Error::domain("no inflection estimates to combine"));
    }
    let mut sw = 0.0;
    let mut swv = 0.0;
    for &(v, err) in estimates {
        if !(err.is_finite() && err > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("inflection estimate {v} ± {err} needs a positive error")));
        }
        let w = 1.0 / (err * err);
        sw += w;
        swv += w * v;
    }
    Ok((swv / sw, sw.sqrt().recip()))
}

/// α = (λ₀/4c)/V₀ᵢ, with the relative error of V₀ᵢ carried over.
pub fn alpha_from_inflection(v0i: f64, v0i_err: f64, spectrum: &Spectrum) -> Result<(f64, f64)> {
    if !(v0i.is_finite() && v0i > 0.0) {
        return Err(Error::domain(format!("inflection voltage must be positive, got {v0i}")));
    }
    let alpha = spectrum.quarter_wave_delay() / v0i;
    Ok((alpha, alpha * v0i_err.abs() / v0i))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFit {
    /// 1-based detector channel.
    pub channel: usize,
    pub fit: FringeFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueWithError {
    pub value: f64,
    pub error: f64,
}

/// Everything the estimation stage needs, written as JSON by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    pub schema_version: u32,
    pub fringes: Vec<ChannelFit>,
    /// Combined inflection voltage, V.
    pub inflection_v: ValueWithError,
    /// Modulator slope, s/V.
    pub alpha_s_per_v: ValueWithError,
    pub linear: LinearCalibration,
    /// K₁ in fs⁻¹, for reading convenience.
    pub k1_per_fs: ValueWithError,
    pub dark_rates_hz: (f64, f64),
    pub step_error_mode: StepErrorMode,
}

impl CalibrationSet {
    pub fn modulator_map(&self) -> Result<ModulatorMap> {
        ModulatorMap::new(self.alpha_s_per_v.value, self.inflection_v.value, self.alpha_s_per_v.error)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    /// Power noise of the bright scan, W.
    pub sigma_power: f64,
    pub dark_rates: (f64, f64),
    pub step_error_mode: StepErrorMode,
}

/// Fringe fit of every bright-scan channel, then α, then the linear fit of
/// the staircase contrasts against τ = α·V₀.
pub fn calibrate(
    bright: &BrightScan,
    staircase: &CalibrationScan,
    spectrum: &Spectrum,
    options: &CalibrationOptions,
) -> Result<CalibrationSet> {
    if bright.n_channels() == 0 {
        return Err(Error::domain("bright scan has no power channels"));
    }
    let mut fringes = Vec::with_capacity(bright.n_channels());
    for i in 0..bright.n_channels() {
        let fit = fit_fringe(&bright.channel(i), options.sigma_power).map_err(|e| tag_channel(e, i + 1))?;
        fringes.push(ChannelFit { channel: i + 1, fit });
    }
    let estimates: Vec<(f64, f64)> = fringes.iter().map(|c| (c.fit.params.v0i, c.fit.errors.v0i)).collect();
    let (v0i, v0i_err) = combine_inflection(&estimates)?;
    let (alpha, alpha_err) = alpha_from_inflection(v0i, v0i_err, spectrum)?;

    let mut points = Vec::with_capacity(staircase.steps.len());
    for step in &staircase.steps {
        match step_contrast(step, options.dark_rates, staircase.integration_time, options.step_error_mode) {
            Ok(mut p) => {
                p.tau = Some(alpha * step.v0);
                points.push(p);
            }
            Err(Error::DegenerateBin(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    let v_lo = staircase.steps.iter().map(|s| s.v0).fold(f64::INFINITY, f64::min);
    let v_hi = staircase.steps.iter().map(|s| s.v0).fold(f64::NEG_INFINITY, f64::max);
    let linear = fit_linear_calibration(&points)?.with_voltage_window((v_lo, v_hi));
    Ok(CalibrationSet {
        schema_version: CALIBRATION_SCHEMA_VERSION,
        fringes,
        inflection_v: ValueWithError { value: v0i, error: v0i_err },
        alpha_s_per_v: ValueWithError { value: alpha, error: alpha_err },
        k1_per_fs: ValueWithError {
            value: linear.k1_per_fs(),
            error: linear.k1_err() * crate::units::FEMTOSECOND,
        },
        linear,
        dark_rates_hz: options.dark_rates,
        step_error_mode: options.step_error_mode,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelayFlag {
    Ok,
    /// Outside the calibrated window; kept but not trusted.
    Extrapolated,
    /// Dark-dominated bin; the delay is NaN.
    Degenerate,
}

impl DelayFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            DelayFlag::Ok => "ok",
            DelayFlag::Extrapolated => "extrapolated",
            DelayFlag::Degenerate => "degenerate",
        }
    }
}

impl std::str::FromStr for DelayFlag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(DelayFlag::Ok),
            "extrapolated" => Ok(DelayFlag::Extrapolated),
            "degenerate" => Ok(DelayFlag::Degenerate),
            other => Err(Error::domain(format!("unknown delay flag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelaySample {
    pub t: f64,
    pub tau: f64,
    pub sigma_tau: f64,
    pub flag: DelayFlag,
}

/// Converts every count bin to a delay. Degenerate bins stay in place as
/// NaN rows so the time base is preserved.
pub fn estimate_delays(
    records: &[CountRecord],
    calib: &LinearCalibration,
    dark_rates: (f64, f64),
    integration_time: f64,
    term: CalibrationErrorTerm,
) -> Vec<DelaySample> {
    records
        .iter()
        .map(|r| match normalize_counts(r, dark_rates, integration_time) {
            Ok(point) => {
                let d = estimate_delay(&point, calib, term);
                DelaySample {
                    t: r.t,
                    tau: d.estimate.tau,
                    sigma_tau: d.estimate.sigma_tau,
                    flag: if d.extrapolated { DelayFlag::Extrapolated } else { DelayFlag::Ok },
                }
            }
            Err(_) => DelaySample {
                t: r.t,
                tau: f64::NAN,
                sigma_tau: f64::NAN,
                flag: DelayFlag::Degenerate,
            },
        })
        .collect()
}

fn tag_channel(e: Error, channel: usize) -> Error {
    match e {
        Error::Fit(m) => Error::Fit(format!("channel {channel}: {m}")),
        Error::Domain(m) => Error::Domain(format!("channel {channel}: {m}")),
        other => other,
    }
}
