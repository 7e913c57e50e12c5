//! Seeded Monte Carlo generation of photon-count series.
//!
//! Every bin draws from its own ChaCha8 stream keyed by `(seed, domain)` and
//! selected by the bin index, so results do not depend on how the bins are
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::FringeParameters;
use crate::model::{click_probabilities, ModulatorMap, Spectrum};
use crate::units::{ATTOSECOND, SECONDS_PER_HOUR};
use crate::{prototype, Error, Result};

/// Identifier written into run manifests.
pub const RNG_ALGORITHM: &str =
    "chacha8 (rand_chacha 0.9); key = seed_le64 || domain_le64 || 0^16; stream = bin index";

const DOMAIN_RUN: u64 = 1;
const DOMAIN_DRIFT: u64 = 2;
const DOMAIN_BRIGHT: u64 = 3;
const DOMAIN_CALIBRATION: u64 = 4;
const DOMAIN_CALIBRATION_DRIFT: u64 = 5;

/// Counter-based generator for bin `index` of a given domain.
pub fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Photon counts of one integration bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    /// Bin start time, s.
    pub t: f64,
    pub c1: u64,
    pub c2: u64,
}

impl CountRecord {
    pub fn new(t: f64, c1: u64, c2: u64) -> Self {
        Self { t, c1, c2 }
    }

    pub fn total(&self) -> u64 {
        self.c1 + self.c2
    }
}

/// One component of the slow delay drift τ_drift(t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriftTerm {
    /// `slope` in s of delay per s.
    Linear { slope: f64 },
    /// `amplitude · sin(2π t / period + phase)`.
    Sinusoid {
        amplitude: f64,
        period: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Brownian drift with diffusion `step` in s/√s.
    RandomWalk { step: f64 },
}

impl DriftTerm {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            DriftTerm::Linear { slope } => slope.is_finite(),
            DriftTerm::Sinusoid {
                amplitude,
                period,
                phase,
            } => amplitude.is_finite() && phase.is_finite() && period.is_finite() && period > 0.0,
            DriftTerm::RandomWalk { step } => step.is_finite() && step >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid drift term {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Dark count rate of channel 1, Hz.
    pub dark_rate_1: f64,
    pub dark_rate_2: f64,
    /// Relative 1σ of the per-bin common-mode pump multiplier. The 0.01
    /// default is a modeling choice; the prototype value is unknown.
    pub pump_rel_sigma: f64,
    #[serde(default)]
    pub drift: Vec<DriftTerm>,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            dark_rate_1: prototype::DARK_RATE,
            dark_rate_2: prototype::DARK_RATE,
            pump_rel_sigma: 0.01,
            drift: Vec::new(),
        }
    }
}

impl NoiseModel {
    /// Poisson shot noise only.
    pub fn shot_noise_only() -> Self {
        Self {
            dark_rate_1: 0.0,
            dark_rate_2: 0.0,
            pump_rel_sigma: 0.0,
            drift: Vec::new(),
        }
    }

    /// Overnight preset: 10 as of linear drift over 9 h plus a 1 as,
    /// 10 min sinusoid, on top of the default dark and pump noise.
    pub fn overnight() -> Self {
        Self {
            drift: overnight_drift(),
            ..Self::default()
        }
    }

    pub fn with_drift(mut self, drift: Vec<DriftTerm>) -> Self {
        self.drift = drift;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, rate) in [("dark_rate_1", self.dark_rate_1), ("dark_rate_2", self.dark_rate_2)] {
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(Error::domain(format!("{name} must be non-negative, got {rate}")));
            }
        }
        if !(0.0..=0.5).contains(&self.pump_rel_sigma) {
            return Err(Error::domain(format!(
                "pump_rel_sigma must lie in [0, 0.5], got {}",
                self.pump_rel_sigma
            )));
        }
        self.drift.iter().try_for_each(DriftTerm::validate)
    }

    /// Deterministic part of the drift at time `t`.
    pub fn deterministic_drift(&self, t: f64) -> f64 {
        self.drift
            .iter()
            .map(|term| match *term {
                DriftTerm::Linear { slope } => slope * t,
                DriftTerm::Sinusoid {
                    amplitude,
                    period,
                    phase,
                } => amplitude * (2.0 * std::f64::consts::PI * t / period + phase).sin(),
                DriftTerm::RandomWalk { .. } => 0.0,
            })
            .sum()
    }

    /// Realizes the full drift, random-walk part included, on a
    /// non-decreasing time grid.
    pub fn drift_series(&self, seed: u64, domain: u64, times: &[f64]) -> Vec<f64> {
        let diffusion: f64 = self
            .drift
            .iter()
            .map(|term| match *term {
                DriftTerm::RandomWalk { step } => step * step,
                _ => 0.0,
            })
            .sum::<f64>()
            .sqrt();
        let mut walk = 0.0;
        let mut previous = 0.0;
        times
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                if diffusion > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut stream_rng(seed, domain, k as u64));
                    walk += diffusion * (t - previous).max(0.0).sqrt() * z;
                    previous = t;
                }
                self.deterministic_drift(t) + walk
            })
            .collect()
    }
}

pub fn overnight_drift() -> Vec<DriftTerm> {
    vec![
        DriftTerm::Linear {
            slope: 10.0 * ATTOSECOND / (9.0 * SECONDS_PER_HOUR),
        },
        DriftTerm::Sinusoid {
            amplitude: ATTOSECOND,
            period: 600.0,
            phase: 0.0,
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Combined mean detected rate of both channels, Hz.
    pub rate_total: f64,
    /// Integration time per bin, s.
    pub integration_time: f64,
    pub duration: f64,
    /// Set-point delay, s.
    pub tau0: f64,
    pub seed: u64,
}

impl RunConfig {
    /// The overnight run: 631.6 kHz, 1 s bins, 9 h, at the 3.86 V set point.
    pub fn prototype(seed: u64) -> Self {
        Self {
            rate_total: prototype::RATE_TOTAL,
            integration_time: prototype::INTEGRATION_TIME,
            duration: prototype::RUN_DURATION,
            tau0: prototype::modulator_map().alpha() * prototype::OPERATING_VOLTAGE,
            seed,
        }
    }

    pub fn n_bins(&self) -> usize {
        (self.duration / self.integration_time * (1.0 + 1e-12)).floor() as usize
    }

    fn validate_rates(&self) -> Result<()> {
        if !(self.rate_total.is_finite() && self.rate_total >= 0.0) {
            return Err(Error::domain(format!("rate_total must be non-negative, got {}", self.rate_total)));
        }
        if !(self.integration_time.is_finite() && self.integration_time > 0.0) {
            return Err(Error::domain(format!(
                "integration_time must be positive, got {}",
                self.integration_time
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_rates()?;
        if !(self.duration.is_finite() && self.duration >= self.integration_time) {
            return Err(Error::domain(format!(
                "duration {} s is shorter than the integration time {} s",
                self.duration, self.integration_time
            )));
        }
        if !self.tau0.is_finite() {
            return Err(Error::domain("tau0 must be finite"));
        }
        Ok(())
    }
}

fn poisson(mean: f64, rng: &mut ChaCha8Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(mean).expect("positive finite Poisson mean");
    dist.sample(rng) as u64
}

/// Draws the counts of a single bin at delay `tau`.
fn sample_bin(
    rng: &mut ChaCha8Rng,
    tau: f64,
    rate_total: f64,
    integration_time: f64,
    spectrum: &Spectrum,
    noise: &NoiseModel,
) -> (u64, u64) {
    let z: f64 = StandardNormal.sample(rng);
    let gain = (1.0 + noise.pump_rel_sigma * z).max(0.0);
    let (p1, p2) = click_probabilities(tau, spectrum);
    let signal = gain * rate_total * integration_time;
    let c1 = poisson(signal * p1 + noise.dark_rate_1 * integration_time, rng);
    let c2 = poisson(signal * p2 + noise.dark_rate_2 * integration_time, rng);
    (c1, c2)
}

/// Simulates a fixed-set-point acquisition of `floor(duration / T)` bins.
pub fn simulate_run(config: &RunConfig, spectrum: &Spectrum, noise: &NoiseModel) -> Result<Vec<CountRecord>> {
    config.validate()?;
    noise.validate()?;
    let n = config.n_bins();
    let times: Vec<f64> = (0..n).map(|k| k as f64 * config.integration_time).collect();
    let drift = noise.drift_series(config.seed, DOMAIN_DRIFT, &times);
    let records = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(config.seed, DOMAIN_RUN, k as u64);
            let tau = config.tau0 + drift[k];
            let (c1, c2) = sample_bin(&mut rng, tau, config.rate_total, config.integration_time, spectrum, noise);
            CountRecord::new(times[k], c1, c2)
        })
        .collect();
    Ok(records)
}

/// Bright-source optical power versus modulator voltage, one vector per
/// channel.
#[derive(Debug, Clone, PartialEq)]
pub struct BrightScan {
    pub voltages: Vec<f64>,
    /// `powers[channel][step]`, W.
    pub powers: Vec<Vec<f64>>,
}

impl BrightScan {
    pub fn n_channels(&self) -> usize {
        self.powers.len()
    }

    /// `(v0, power)` pairs of one channel.
    pub fn channel(&self, index: usize) -> Vec<(f64, f64)> {
        self.voltages
            .iter()
            .copied()
            .zip(self.powers[index].iter().copied())
            .collect()
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| {
                let f = i as f64 / (n - 1) as f64;
                a + (b - a) * f
            })
            .collect(),
    }
}

/// Sine fringes `f0 + A·sin(π(v − v0i)/w)` sampled at `n_steps` voltages
/// with additive Gaussian power noise.
pub fn simulate_bright_scan(
    v_range: (f64, f64),
    n_steps: usize,
    fringes: &[FringeParameters],
    power_noise_sigma: f64,
    seed: u64,
) -> Result<BrightScan> {
    if n_steps < 2 {
        return Err(Error::domain(format!("bright scan needs at least 2 steps, got {n_steps}")));
    }
    if !(v_range.0.is_finite() && v_range.1.is_finite() && v_range.0 < v_range.1) {
        return Err(Error::domain(format!("invalid voltage range {v_range:?}")));
    }
    if !(power_noise_sigma.is_finite() && power_noise_sigma >= 0.0) {
        return Err(Error::domain("power noise sigma must be non-negative"));
    }
    let voltages = linspace(v_range.0, v_range.1, n_steps);
    let mut powers = vec![Vec::with_capacity(n_steps); fringes.len()];
    for (k, &v) in voltages.iter().enumerate() {
        let mut rng = stream_rng(seed, DOMAIN_BRIGHT, k as u64);
        for (channel, fringe) in fringes.iter().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            powers[channel].push(fringe.evaluate(v) + power_noise_sigma * z);
        }
    }
    Ok(BrightScan { voltages, powers })
}

/// Repeated acquisitions at one calibration voltage.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanStep {
    pub v0: f64,
    /// True delay applied during the step (set point, no drift).
    pub tau: f64,
    pub records: Vec<CountRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStatistics {
    pub mean_c1: f64,
    pub mean_c2: f64,
    /// Sample standard deviations (n − 1 denominator).
    pub std_c1: f64,
    pub std_c2: f64,
}

impl ScanStep {
    pub fn statistics(&self) -> StepStatistics {
        let n = self.records.len() as f64;
        let mean = |f: fn(&CountRecord) -> u64| self.records.iter().map(|r| f(r) as f64).sum::<f64>() / n;
        let m1 = mean(|r| r.c1);
        let m2 = mean(|r| r.c2);
        let std = |f: fn(&CountRecord) -> u64, m: f64| {
            if self.records.len() < 2 {
                return 0.0;
            }
            (self.records.iter().map(|r| (f(r) as f64 - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        StepStatistics {
            mean_c1: m1,
            mean_c2: m2,
            std_c1: std(|r| r.c1, m1),
            std_c2: std(|r| r.c2, m2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationScan {
    pub integration_time: f64,
    pub steps: Vec<ScanStep>,
}

impl CalibrationScan {
    pub fn n_records(&self) -> usize {
        self.steps.iter().map(|s| s.records.len()).sum()
    }
}

/// Voltage staircase over `[v_a, v_b]` with `repeats` bins per step, using
/// `config.rate_total`, `config.integration_time` and `config.seed`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_calibration_scan(
    v_a: f64,
    v_b: f64,
    n_steps: usize,
    repeats: usize,
    config: &RunConfig,
    spectrum: &Spectrum,
    map: &ModulatorMap,
    noise: &NoiseModel,
) -> Result<CalibrationScan> {
    if !(v_a.is_finite() && v_b.is_finite() && v_a < v_b) {
        return Err(Error::domain(format!("calibration needs v_a < v_b, got [{v_a}, {v_b}]")));
    }
    if repeats < 2 {
        return Err(Error::domain(format!("calibration needs at least 2 repeats, got {repeats}")));
    }
    if n_steps < 2 {
        return Err(Error::domain(format!("calibration needs at least 2 steps, got {n_steps}")));
    }
    config.validate_rates()?;
    noise.validate()?;
    let t_bin = config.integration_time;
    let voltages = linspace(v_a, v_b, n_steps);
    let n = n_steps * repeats;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * t_bin).collect();
    let drift = noise.drift_series(config.seed, DOMAIN_CALIBRATION_DRIFT, &times);
    let steps = voltages
        .par_iter()
        .enumerate()
        .map(|(step, &v0)| {
            let tau = map.alpha() * v0;
            let records = (0..repeats)
                .map(|r| {
                    let k = step * repeats + r;
                    let mut rng = stream_rng(config.seed, DOMAIN_CALIBRATION, k as u64);
                    let (c1, c2) = sample_bin(&mut rng, tau + drift[k], config.rate_total, t_bin, spectrum, noise);
                    CountRecord::new(times[k], c1, c2)
                })
                .collect();
            ScanStep { v0, tau, records }
        })
        .collect();
    Ok(CalibrationScan {
        integration_time: t_bin,
        steps,
    })
}
