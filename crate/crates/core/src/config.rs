//! TOML experiment configuration. Every section is optional and falls back to
//! the prototype's values; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationErrorTerm, FringeParameters, StepErrorMode};
use crate::geometry::{derived_geometry, GyroGeometry};
use crate::model::{ModulatorMap, Spectrum};
use crate::sim::{DriftTerm, NoiseModel, RunConfig};
use crate::stability::POINTS_PER_DECADE;
use crate::{prototype, Error, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub modulator: ModulatorSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub bright_scan: BrightScanSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            spectrum: SpectrumSection::default(),
            geometry: GeometrySection::default(),
            modulator: ModulatorSection::default(),
            run: RunSection::default(),
            noise: NoiseSection::default(),
            calibration: CalibrationSection::default(),
            bright_scan: BrightScanSection::default(),
            analysis: AnalysisSection::default(),
        }
    }
}

/// How `sigma_omega` is read: as an angular linewidth (rad/s) or as a
/// cyclic one (Hz, multiplied by 2π).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinewidthUnit {
    #[default]
    Angular,
    Cyclic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    pub lambda0_m: f64,
    pub sigma_omega: f64,
    #[serde(default)]
    pub sigma_omega_unit: LinewidthUnit,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            lambda0_m: prototype::LAMBDA0,
            sigma_omega: prototype::SIGMA_OMEGA,
            sigma_omega_unit: LinewidthUnit::Angular,
        }
    }
}

impl SpectrumSection {
    pub fn build(&self) -> Result<Spectrum> {
        let sigma = match self.sigma_omega_unit {
            LinewidthUnit::Angular => self.sigma_omega,
            LinewidthUnit::Cyclic => 2.0 * std::f64::consts::PI * self.sigma_omega,
        };
        Spectrum::from_wavelength(self.lambda0_m, sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub fiber_length_m: f64,
    pub coil_radius_m: f64,
    pub refractive_index: f64,
    /// Overrides the N·π·r² estimate.
    #[serde(default)]
    pub total_area_m2: Option<f64>,
    /// Overrides the rate derived from the transit time.
    #[serde(default)]
    pub serrodyne_rate_hz: Option<f64>,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            fiber_length_m: prototype::FIBER_LENGTH,
            coil_radius_m: prototype::COIL_RADIUS,
            refractive_index: prototype::REFRACTIVE_INDEX,
            total_area_m2: Some(prototype::TOTAL_AREA),
            serrodyne_rate_hz: Some(prototype::SERRODYNE_RATE),
        }
    }
}

impl GeometrySection {
    pub fn build(&self) -> Result<GyroGeometry> {
        let mut g = derived_geometry(self.fiber_length_m, self.coil_radius_m, self.refractive_index)?;
        if let Some(area) = self.total_area_m2 {
            if !(area.is_finite() && area > 0.0) {
                return Err(Error::Config(format!("total_area_m2 must be positive, got {area}")));
            }
            g.total_area = area;
        }
        if let Some(rate) = self.serrodyne_rate_hz {
            if !(rate.is_finite() && rate > 0.0) {
                return Err(Error::Config(format!("serrodyne_rate_hz must be positive, got {rate}")));
            }
            g.serrodyne_rate = rate;
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModulatorSection {
    Fixed {
        alpha_s_per_v: f64,
        v0i_v: f64,
        #[serde(default)]
        alpha_err_s_per_v: f64,
    },
    /// Read α and V₀ᵢ from a calibration JSON written by `sagnac calibrate`.
    FromCalibration { path: PathBuf },
}

impl Default for ModulatorSection {
    fn default() -> Self {
        let map = prototype::modulator_map();
        ModulatorSection::Fixed {
            alpha_s_per_v: map.alpha(),
            v0i_v: map.v0i(),
            alpha_err_s_per_v: map.alpha_err(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub rate_total_hz: f64,
    pub integration_time_s: f64,
    pub duration_s: f64,
    /// Set point as a delay; takes precedence over `v0_v`.
    #[serde(default)]
    pub tau0_s: Option<f64>,
    /// Set point as a modulator voltage, mapped through α.
    #[serde(default)]
    pub v0_v: Option<f64>,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            rate_total_hz: prototype::RATE_TOTAL,
            integration_time_s: prototype::INTEGRATION_TIME,
            duration_s: prototype::RUN_DURATION,
            tau0_s: None,
            v0_v: Some(prototype::OPERATING_VOLTAGE),
            seed: 0,
        }
    }
}

impl RunSection {
    pub fn build(&self, map: Option<&ModulatorMap>) -> Result<RunConfig> {
        let tau0 = match (self.tau0_s, self.v0_v) {
            (Some(tau), _) => tau,
            (None, Some(v)) => {
                let map = map.ok_or_else(|| Error::Config("run.v0_v needs a modulator map".into()))?;
                map.alpha() * v
            }
            (None, None) => return Err(Error::Config("run needs tau0_s or v0_v".into())),
        };
        let config = RunConfig {
            rate_total: self.rate_total_hz,
            integration_time: self.integration_time_s,
            duration: self.duration_s,
            tau0,
            seed: self.seed,
        };
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoisePreset {
    ShotNoiseOnly,
    #[default]
    Default,
    Overnight,
}

/// A preset with optional per-field overrides.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub preset: NoisePreset,
    #[serde(default)]
    pub dark_rate_1_hz: Option<f64>,
    #[serde(default)]
    pub dark_rate_2_hz: Option<f64>,
    #[serde(default)]
    pub pump_rel_sigma: Option<f64>,
    /// Replaces the preset's drift terms when present.
    #[serde(default)]
    pub drift: Option<Vec<DriftTerm>>,
}

impl NoiseSection {
    pub fn build(&self) -> Result<NoiseModel> {
        let mut noise = match self.preset {
            NoisePreset::ShotNoiseOnly => NoiseModel::shot_noise_only(),
            NoisePreset::Default => NoiseModel::default(),
            NoisePreset::Overnight => NoiseModel::overnight(),
        };
        if let Some(v) = self.dark_rate_1_hz {
            noise.dark_rate_1 = v;
        }
        if let Some(v) = self.dark_rate_2_hz {
            noise.dark_rate_2 = v;
        }
        if let Some(v) = self.pump_rel_sigma {
            noise.pump_rel_sigma = v;
        }
        if let Some(d) = &self.drift {
            noise.drift = d.clone();
        }
        noise.validate()?;
        Ok(noise)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub v_a: f64,
    pub v_b: f64,
    pub steps: usize,
    pub repeats: usize,
    pub integration_time_s: f64,
    #[serde(default)]
    pub step_error: StepErrorMode,
    /// Whether delay errors include the calibration covariance.
    #[serde(default)]
    pub calibration_error: CalibrationErrorTerm,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            v_a: prototype::CALIBRATION_V_A,
            v_b: prototype::CALIBRATION_V_B,
            steps: prototype::CALIBRATION_STEPS,
            repeats: prototype::CALIBRATION_REPEATS,
            integration_time_s: prototype::CALIBRATION_INTEGRATION_TIME,
            step_error: StepErrorMode::Sem,
            calibration_error: CalibrationErrorTerm::Exclude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrightScanSection {
    pub v_lo: f64,
    pub v_hi: f64,
    pub n_steps: usize,
    /// Additive power noise, W.
    pub noise_w: f64,
    pub channels: Vec<FringeParameters>,
}

impl Default for BrightScanSection {
    fn default() -> Self {
        Self {
            v_lo: 0.0,
            v_hi: 16.0,
            n_steps: 161,
            noise_w: prototype::BRIGHT_NOISE,
            channels: vec![prototype::FRINGE_CH1, prototype::FRINGE_CH2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub points_per_decade: usize,
    /// Odd adjacent-average window for the smoothed delay output.
    pub smoothing_window: usize,
    /// Averaging time at which Earth-rate detectability is judged, s.
    pub reference_time_s: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            points_per_decade: POINTS_PER_DECADE,
            smoothing_window: 73,
            reference_time_s: prototype::DETECTION_LIMIT_TAU_TIME,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if config.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Modulator map for a fixed section; `None` when it must come from a
    /// calibration file.
    pub fn fixed_modulator(&self) -> Result<Option<ModulatorMap>> {
        match self.modulator {
            ModulatorSection::Fixed {
                alpha_s_per_v,
                v0i_v,
                alpha_err_s_per_v,
            } => Ok(Some(ModulatorMap::new(alpha_s_per_v, v0i_v, alpha_err_s_per_v)?)),
            ModulatorSection::FromCalibration { .. } => Ok(None),
        }
    }
}
