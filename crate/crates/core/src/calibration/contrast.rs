//! Dark-corrected, pump-normalized contrast of the two detector channels.

use serde::{Deserialize, Serialize};

use crate::sim::{CountRecord, ScanStep};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastPoint {
    pub x1: f64,
    pub x2: f64,
    /// `x1 − x2`.
    pub dx: f64,
    pub dx_err: f64,
    /// Applied delay, when known (calibration points).
    pub tau: Option<f64>,
    /// Dark-corrected photons behind the point.
    pub n_photons: f64,
}

/// How the per-step contrast error is formed from the repeat spread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepErrorMode {
    /// Standard error of the mean, std/√repeats.
    #[default]
    Sem,
    /// Standard deviation of the repeats.
    Std,
}

/// Subtracts the expected dark counts `dark_rate·integration` per channel
/// (clamped at zero) and normalizes by the corrected total.
///
/// Bins in which a corrected channel is empty carry no usable contrast (the
/// propagated error vanishes) and are reported as [`Error::DegenerateBin`].
pub fn normalize_counts(record: &CountRecord, dark: (f64, f64), integration: f64) -> Result<ContrastPoint> {
    let dark1 = dark.0 * integration;
    let dark2 = dark.1 * integration;
    let c1 = (record.c1 as f64 - dark1).max(0.0);
    let c2 = (record.c2 as f64 - dark2).max(0.0);
    let total = c1 + c2;
    if (record.c1 + record.c2) as f64 <= dark1 + dark2 || c1 == 0.0 || c2 == 0.0 {
        return Err(Error::DegenerateBin(format!(
            "counts ({}, {}) at t = {} s are dark-dominated (expected dark {dark1}, {dark2})",
            record.c1, record.c2, record.t
        )));
    }
    let x1 = c1 / total;
    let x2 = c2 / total;
    Ok(ContrastPoint {
        x1,
        x2,
        dx: (c1 - c2) / total,
        dx_err: (4.0 * c1 * c2 / total.powi(3)).sqrt(),
        tau: None,
        n_photons: total,
    })
}

/// Mean contrast of the repeats of one calibration step, with the error
/// taken from the spread of the per-repeat contrasts. Degenerate repeats
/// are skipped; at least two valid ones are required.
pub fn step_contrast(
    step: &ScanStep,
    dark: (f64, f64),
    integration: f64,
    mode: StepErrorMode,
) -> Result<ContrastPoint> {
    let points: Vec<ContrastPoint> = step
        .records
        .iter()
        .filter_map(|r| normalize_counts(r, dark, integration).ok())
        .collect();
    if points.len() < 2 {
        return Err(Error::DegenerateBin(format!(
            "step at {} V has {} usable repeats",
            step.v0,
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mean = |f: fn(&ContrastPoint) -> f64| points.iter().map(f).sum::<f64>() / n;
    let x1 = mean(|p| p.x1);
    let dx = mean(|p| p.dx);
    let std = (points.iter().map(|p| (p.dx - dx).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let dx_err = match mode {
        StepErrorMode::Sem => std / n.sqrt(),
        StepErrorMode::Std => std,
    };
    Ok(ContrastPoint {
        x1,
        x2: 1.0 - x1,
        dx,
        dx_err,
        tau: Some(step.tau),
        n_photons: points.iter().map(|p| p.n_photons).sum(),
    })
}
