//! Weighted straight-line calibration ΔX = K₁·τ + K₂ and its inversion.

use serde::{Deserialize, Serialize};

use super::contrast::ContrastPoint;
use crate::model::DelayEstimate;
use crate::units::FEMTOSECOND;
use crate::{Error, Result};

/// Fraction of the calibrated delay span tolerated beyond either edge
/// before an estimate is flagged as extrapolated.
const WINDOW_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearCalibration {
    /// Slope, s⁻¹ (use [`LinearCalibration::k1_per_fs`] for fs⁻¹).
    pub k1: f64,
    pub k2: f64,
    /// Covariance of (k1, k2) in SI units.
    pub covariance: [[f64; 2]; 2],
    pub chi_square: f64,
    pub dof: usize,
    /// Delay range spanned by the calibration points, s.
    pub tau_window: (f64, f64),
    /// Modulator voltage range of the calibration scan, V.
    pub voltage_window: Option<(f64, f64)>,
}

impl LinearCalibration {
    pub fn k1_per_fs(&self) -> f64 {
        self.k1 * FEMTOSECOND
    }

    pub fn k1_err(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn k2_err(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }

    /// Builds a calibration from fixed coefficients, e.g. published ones.
    pub fn from_coefficients(k1: f64, k2: f64, k1_err: f64, k2_err: f64, tau_window: (f64, f64)) -> Result<Self> {
        if !(k1.is_finite() && k1 != 0.0 && k2.is_finite()) {
            return Err(Error::domain("calibration slope must be finite and non-zero"));
        }
        Ok(Self {
            k1,
            k2,
            covariance: [[k1_err * k1_err, 0.0], [0.0, k2_err * k2_err]],
            chi_square: 0.0,
            dof: 0,
            tau_window,
            voltage_window: None,
        })
    }

    pub fn with_voltage_window(mut self, window: (f64, f64)) -> Self {
        self.voltage_window = Some(window);
        self
    }

    pub fn contrast_at(&self, tau: f64) -> f64 {
        self.k1 * tau + self.k2
    }

    fn is_extrapolated(&self, tau: f64) -> bool {
        let (lo, hi) = self.tau_window;
        let margin = WINDOW_MARGIN * (hi - lo);
        tau < lo - margin || tau > hi + margin
    }
}

/// Closed-form weighted least squares on points with known delay; weights
/// are `1/dx_err²`.
pub fn fit_linear_calibration(points: &[ContrastPoint]) -> Result<LinearCalibration> {
    if points.len() < 2 {
        return Err(Error::domain(format!(
            "linear calibration needs at least 2 points, got {}",
            points.len()
        )));
    }
    let mut data = Vec::with_capacity(points.len());
    for p in points {
        let tau = p
            .tau
            .ok_or_else(|| Error::domain("calibration point without an applied delay"))?;
        if !(p.dx_err.is_finite() && p.dx_err > 0.0) {
            return Err(Error::domain(format!("dx_err must be positive, got {}", p.dx_err)));
        }
        data.push((tau, p.dx, 1.0 / (p.dx_err * p.dx_err)));
    }
    let sw: f64 = data.iter().map(|d| d.2).sum();
    let tau_mean = data.iter().map(|d| d.2 * d.0).sum::<f64>() / sw;
    let dx_mean = data.iter().map(|d| d.2 * d.1).sum::<f64>() / sw;
    let sxx: f64 = data.iter().map(|d| d.2 * (d.0 - tau_mean).powi(2)).sum();
    let sxy: f64 = data.iter().map(|d| d.2 * (d.0 - tau_mean) * (d.1 - dx_mean)).sum();
    let tau_lo = data.iter().map(|d| d.0).fold(f64::INFINITY, f64::min);
    let tau_hi = data.iter().map(|d| d.0).fold(f64::NEG_INFINITY, f64::max);
    if sxx.is_nan() || sxx <= 0.0 || tau_hi - tau_lo <= 1e-12 * tau_hi.abs().max(tau_lo.abs()) {
        return Err(Error::Fit("calibration delays are degenerate (all equal)".into()));
    }
    let k1 = sxy / sxx;
    let k2 = dx_mean - k1 * tau_mean;
    if k1 == 0.0 || !k1.is_finite() {
        return Err(Error::Fit("calibration slope is zero".into()));
    }
    let var_k1 = 1.0 / sxx;
    let var_k2 = 1.0 / sw + tau_mean * tau_mean / sxx;
    let cov = -tau_mean / sxx;
    let chi_square = data.iter().map(|d| d.2 * (d.1 - k1 * d.0 - k2).powi(2)).sum();
    Ok(LinearCalibration {
        k1,
        k2,
        covariance: [[var_k1, cov], [cov, var_k2]],
        chi_square,
        dof: data.len() - 2,
        tau_window: (tau_lo, tau_hi),
        voltage_window: None,
    })
}

/// Whether the calibration uncertainty enters the per-point error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationErrorTerm {
    /// Statistical error of the contrast only; suited to relative series.
    #[default]
    Exclude,
    Include,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastDelay {
    pub estimate: DelayEstimate,
    /// The delay lies beyond the calibrated window (± 10 %).
    pub extrapolated: bool,
}

/// Inverts the calibration, τ = (ΔX − K₂)/K₁.
pub fn delay_from_contrast(
    dx: f64,
    dx_err: f64,
    calib: &LinearCalibration,
    term: CalibrationErrorTerm,
) -> ContrastDelay {
    let tau = (dx - calib.k2) / calib.k1;
    let mut variance = dx_err * dx_err;
    if term == CalibrationErrorTerm::Include {
        let [[v11, v12], [_, v22]] = calib.covariance;
        variance += v22 + tau * tau * v11 + 2.0 * tau * v12;
    }
    ContrastDelay {
        estimate: DelayEstimate {
            tau,
            sigma_tau: variance.max(0.0).sqrt() / calib.k1.abs(),
            n_photons: 0.0,
        },
        extrapolated: calib.is_extrapolated(tau),
    }
}

/// [`delay_from_contrast`] for a normalized point, carrying its photon
/// count into the estimate.
pub fn estimate_delay(point: &ContrastPoint, calib: &LinearCalibration, term: CalibrationErrorTerm) -> ContrastDelay {
    let mut out = delay_from_contrast(point.dx, point.dx_err, calib, term);
    out.estimate.n_photons = point.n_photons;
    out
}
