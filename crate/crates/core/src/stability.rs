//! Overlapping Allan deviation of delay series, even/odd differential
//! analysis, detection limits and Cramér–Rao overlays.
//!
//! Delay samples are treated as frequency-type data: for averaging factor
//! `m`, σ²(m·t0) = Σⱼ (Σᵢ₌ⱼ^{j+m−1} (x_{i+m} − x_i))² / (2m²(N − 2m + 1)).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{delay_to_rotation, figure_of_merit, rotation_to_delay};
use crate::model::Spectrum;
use crate::units::{rad_per_s_to_deg_per_hour, EARTH_ROTATION_RATE};
use crate::{Error, Result};

pub const STABILITY_SCHEMA_VERSION: u32 = 1;

/// Default density of the averaging-factor grid.
pub const POINTS_PER_DECADE: usize = 29;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesOrigin {
    Raw,
    Even,
    Odd,
    Differential,
}

impl SeriesOrigin {
    pub fn name(self) -> &'static str {
        match self {
            SeriesOrigin::Raw => "raw",
            SeriesOrigin::Even => "even",
            SeriesOrigin::Odd => "odd",
            SeriesOrigin::Differential => "diff",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelaySeries {
    t0: f64,
    values: Vec<f64>,
    origin: SeriesOrigin,
}

impl DelaySeries {
    pub fn new(t0: f64, values: Vec<f64>, origin: SeriesOrigin) -> Result<Self> {
        if !(t0.is_finite() && t0 > 0.0) {
            return Err(Error::domain(format!("sampling interval must be positive, got {t0}")));
        }
        if values.len() < 2 {
            return Err(Error::domain(format!("delay series needs at least 2 samples, got {}", values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("sample {i} is not finite")));
        }
        Ok(Self { t0, values, origin })
    }

    /// Drops non-finite samples (flagged bins) and closes the gaps; returns
    /// the series and the number of samples removed.
    pub fn from_samples(t0: f64, samples: &[f64], origin: SeriesOrigin) -> Result<(Self, usize)> {
        let values: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
        let dropped = samples.len() - values.len();
        Ok((Self::new(t0, values, origin)?, dropped))
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn origin(&self) -> SeriesOrigin {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllanEntry {
    pub m: usize,
    /// Averaging time m·t0, s.
    pub t: f64,
    pub adev: f64,
    /// ±adev/√n_terms.
    pub ci: f64,
    pub n_terms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllanCurve {
    pub origin: SeriesOrigin,
    pub t0: f64,
    pub entries: Vec<AllanEntry>,
}

/// Log-spaced averaging factors from 1 to ⌊(N−1)/2⌋.
pub fn default_m_grid(n: usize) -> Vec<usize> {
    log_m_grid(n, POINTS_PER_DECADE)
}

pub fn log_m_grid(n: usize, per_decade: usize) -> Vec<usize> {
    let m_max = n.saturating_sub(1) / 2;
    if m_max == 0 || per_decade == 0 {
        return Vec::new();
    }
    let steps = ((m_max as f64).log10() * per_decade as f64).floor() as usize;
    let mut grid: Vec<usize> = (0..=steps)
        .map(|k| 10f64.powf(k as f64 / per_decade as f64).round() as usize)
        .filter(|&m| (1..=m_max).contains(&m))
        .collect();
    grid.dedup();
    grid
}

// Error-free transformation a + b = s + e.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Unevaluated sum hi + lo carrying about 106 bits.
#[derive(Debug, Clone, Copy, Default)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {
    fn add(self, other: Self) -> Self {
        let (s, e) = two_sum(self.hi, other.hi);
        let (hi, lo) = two_sum(s, e + self.lo + other.lo);
        Self { hi, lo }
    }

    fn add_f64(self, x: f64) -> Self {
        self.add(Self { hi: x, lo: 0.0 })
    }

    fn scale(self, k: f64) -> Self {
        Self {
            hi: self.hi * k,
            lo: self.lo * k,
        }
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// Overlapping Allan deviation at each averaging factor in `m_grid`, which
/// must be strictly increasing within `1..=⌊(N−1)/2⌋`.
pub fn overlapping_allan_deviation(series: &DelaySeries, m_grid: &[usize]) -> Result<AllanCurve> {
    let n = series.len();
    let m_max = (n - 1) / 2;
    if let Some(&bad) = m_grid.iter().find(|&&m| m == 0 || m > m_max) {
        return Err(Error::domain(format!("averaging factor {bad} outside 1..={m_max} for N = {n}")));
    }
    if m_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("averaging factors must be strictly increasing"));
    }
    // Centring removes the large common offset (≈ fs) before summation.
    let mean = series.values.iter().sum::<f64>() / n as f64;
    let mut prefix = Vec::with_capacity(n + 1);
    let mut acc = DoubleDouble::default();
    prefix.push(acc);
    for &x in &series.values {
        acc = acc.add_f64(x - mean);
        prefix.push(acc);
    }
    let entries = m_grid
        .par_iter()
        .map(|&m| {
            let n_terms = n - 2 * m + 1;
            let sum_sq: f64 = (0..n_terms)
                .map(|j| {
                    let inner = prefix[j + 2 * m].add(prefix[j + m].scale(-2.0)).add(prefix[j]).value();
                    inner * inner
                })
                .sum();
            let adev = (sum_sq / (2.0 * (m * m) as f64 * n_terms as f64)).sqrt();
            AllanEntry {
                m,
                t: m as f64 * series.t0,
                adev,
                ci: adev / (n_terms as f64).sqrt(),
                n_terms,
            }
        })
        .collect();
    Ok(AllanCurve {
        origin: series.origin,
        t0: series.t0,
        entries,
    })
}

/// Splits into samples 0, 2, 4, … ("even") and 1, 3, 5, … ("odd") plus the
/// differential series even − odd. All three have twice the sampling
/// interval.
pub fn even_odd_split(series: &DelaySeries) -> Result<(DelaySeries, DelaySeries, DelaySeries)> {
    if series.len() < 4 {
        return Err(Error::domain(format!("even/odd split needs at least 4 samples, got {}", series.len())));
    }
    let even: Vec<f64> = series.values.iter().step_by(2).copied().collect();
    let odd: Vec<f64> = series.values.iter().skip(1).step_by(2).copied().collect();
    let diff = even.iter().zip(&odd).map(|(e, o)| e - o).collect();
    let t0 = 2.0 * series.t0;
    Ok((
        DelaySeries::new(t0, even, SeriesOrigin::Even)?,
        DelaySeries::new(t0, odd, SeriesOrigin::Odd)?,
        DelaySeries::new(t0, diff, SeriesOrigin::Differential)?,
    ))
}

/// Inverse of the even/odd split.
pub fn interleave(even: &DelaySeries, odd: &DelaySeries) -> Vec<f64> {
    let mut out = Vec::with_capacity(even.len() + odd.len());
    for i in 0..even.len().max(odd.len()) {
        out.extend(even.values.get(i));
        out.extend(odd.values.get(i));
    }
    out
}

/// Centred moving average over an odd `window`; the `(window−1)/2` samples
/// at each edge are dropped.
pub fn adjacent_average(series: &DelaySeries, window: usize) -> Result<DelaySeries> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::domain(format!("smoothing window must be odd, got {window}")));
    }
    if window > series.len() {
        return Err(Error::domain(format!(
            "smoothing window {window} exceeds the series length {}",
            series.len()
        )));
    }
    if window == 1 {
        return Ok(series.clone());
    }
    let mut sum: f64 = series.values[..window].iter().sum();
    let mut out = Vec::with_capacity(series.len() - window + 1);
    out.push(sum / window as f64);
    for i in window..series.len() {
        sum += series.values[i] - series.values[i - window];
        out.push(sum / window as f64);
    }
    DelaySeries::new(series.t0, out, series.origin)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionLimit {
    pub t: f64,
    pub sigma: f64,
}

/// Minimum of the curve; ties go to the shorter averaging time.
pub fn detection_limit(curve: &AllanCurve) -> Result<DetectionLimit> {
    let mut best: Option<&AllanEntry> = None;
    for e in &curve.entries {
        if best.is_none_or(|b| e.adev < b.adev) {
            best = Some(e);
        }
    }
    best.map(|e| DetectionLimit { t: e.t, sigma: e.adev })
        .ok_or_else(|| Error::domain("detection limit of an empty curve"))
}

/// Shot-noise Cramér–Rao bound for a delay series sampled every
/// `update_period` seconds, each sample integrating `R·integration_time`
/// photons at a working point with F = ω₀²:
/// σ(t) = √(update_period / (ω₀² R T t)).
/// With 1 s bins split into even/odd samples this is √(2/(ω₀² R t)).
pub fn crb_curve(
    rate_total: f64,
    integration_time: f64,
    update_period: f64,
    spectrum: &Spectrum,
    t_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    for (name, v) in [
        ("rate", rate_total),
        ("integration time", integration_time),
        ("update period", update_period),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    let w2 = spectrum.omega0() * spectrum.omega0();
    t_grid
        .iter()
        .map(|&t| {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::domain(format!("averaging time must be positive, got {t}")));
            }
            Ok((t, (update_period / (w2 * rate_total * integration_time * t)).sqrt()))
        })
        .collect()
}

/// Bound on the difference of two independent samples: √2 × [`crb_curve`].
pub fn crb_curve_differential(
    rate_total: f64,
    integration_time: f64,
    update_period: f64,
    spectrum: &Spectrum,
    t_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    Ok(crb_curve(rate_total, integration_time, update_period, spectrum, t_grid)?
        .into_iter()
        .map(|(t, s)| (t, s * std::f64::consts::SQRT_2))
        .collect())
}

/// Value of a positive curve at `t`, interpolated linearly in (log t, log σ).
fn interpolate_log(curve: &[(f64, f64)], t: f64) -> Option<f64> {
    let k = curve.partition_point(|p| p.0 < t);
    if let Some(&(tk, sk)) = curve.get(k) {
        if tk == t {
            return Some(sk);
        }
    }
    if k == 0 || k >= curve.len() {
        return None;
    }
    let (t1, s1) = curve[k - 1];
    let (t2, s2) = curve[k];
    let f = (t / t1).ln() / (t2 / t1).ln();
    Some((s1.ln() + f * (s2 / s1).ln()).exp())
}

/// Saturation crb(t)/adev(t) at every Allan entry.
pub fn saturation_curve(allan: &AllanCurve, crb: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    if crb.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::domain("reference curve must have increasing times"));
    }
    allan
        .entries
        .iter()
        .map(|e| {
            let bound = interpolate_log(crb, e.t)
                .ok_or_else(|| Error::domain(format!("reference curve does not cover t = {} s", e.t)))?;
            Ok((e.t, bound / e.adev))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityOptions {
    /// Photon rate behind each delay sample, Hz.
    pub rate_total: f64,
    /// Bin length of the raw series, s.
    pub integration_time: f64,
    /// Sagnac area for the figure of merit and rotation equivalents, m².
    pub total_area: Option<f64>,
    /// Averaging time at which Earth-rate detectability is judged.
    pub reference_time: f64,
    /// Density of the log-spaced averaging grid.
    pub points_per_decade: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub schema_version: u32,
    pub n_samples: usize,
    pub dropped_nonfinite: usize,
    pub t0_s: f64,
    pub detection_limit_raw: DetectionLimit,
    pub detection_limit_even: DetectionLimit,
    pub detection_limit_odd: DetectionLimit,
    pub detection_limit_diff: DetectionLimit,
    /// DL(Δτ)/√2, the equivalent single-series limit.
    pub detection_limit_diff_per_sqrt2_s: f64,
    /// Even-series adev at the reference time.
    pub sigma_at_reference: DetectionLimit,
    pub figure_of_merit_s_per_km2: Option<f64>,
    pub figure_of_merit_diff_s_per_km2: Option<f64>,
    /// Rotation rate equivalent to DL(Δτ), °/h.
    pub equivalent_rotation_deg_per_h: Option<f64>,
    pub earth_rotation_delay_s: Option<f64>,
    pub earth_rotation_detectable: Option<bool>,
    /// CRB at the even/odd cadence, (t, σ).
    pub crb_reference: Vec<(f64, f64)>,
    pub crb_differential: Vec<(f64, f64)>,
    pub saturation_even: Vec<(f64, f64)>,
    pub saturation_diff: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityAnalysis {
    pub curves: Vec<AllanCurve>,
    pub report: StabilityReport,
}

/// Full analysis of a raw delay series (non-finite samples are dropped):
/// raw/even/odd/diff curves, detection limits, CRB and saturation.
pub fn analyze(
    t0: f64,
    samples: &[f64],
    spectrum: &Spectrum,
    options: &StabilityOptions,
) -> Result<StabilityAnalysis> {
    if options.points_per_decade == 0 {
        return Err(Error::domain("points_per_decade must be at least 1"));
    }
    let (raw, dropped) = DelaySeries::from_samples(t0, samples, SeriesOrigin::Raw)?;
    if raw.len() < 8 {
        return Err(Error::domain(format!("stability analysis needs at least 8 samples, got {}", raw.len())));
    }
    let (even, odd, diff) = even_odd_split(&raw)?;
    let curves = [&raw, &even, &odd, &diff]
        .iter()
        .map(|s| overlapping_allan_deviation(s, &log_m_grid(s.len(), options.points_per_decade)))
        .collect::<Result<Vec<_>>>()?;
    let dls = curves.iter().map(detection_limit).collect::<Result<Vec<_>>>()?;

    let cadence = even.t0();
    let t_even: Vec<f64> = curves[1].entries.iter().map(|e| e.t).collect();
    let t_diff: Vec<f64> = curves[3].entries.iter().map(|e| e.t).collect();
    let crb_reference = crb_curve(options.rate_total, options.integration_time, cadence, spectrum, &t_even)?;
    let crb_diff_grid = crb_curve(options.rate_total, options.integration_time, cadence, spectrum, &t_diff)?;
    let crb_differential =
        crb_curve_differential(options.rate_total, options.integration_time, cadence, spectrum, &t_diff)?;
    let saturation_even = saturation_curve(&curves[1], &crb_reference)?;
    // Δτ is compared with the τ bound at the same cadence, as is customary.
    let saturation_diff = saturation_curve(&curves[3], &crb_diff_grid)?;

    let sigma_at_reference = curves[1]
        .entries
        .iter()
        .min_by(|a, b| {
            (a.t - options.reference_time)
                .abs()
                .total_cmp(&(b.t - options.reference_time).abs())
        })
        .map(|e| DetectionLimit { t: e.t, sigma: e.adev })
        .ok_or_else(|| Error::domain("even series has no Allan entries"))?;

    let area = options.total_area;
    let earth_delay = area.map(|a| rotation_to_delay(EARTH_ROTATION_RATE, a));
    let report = StabilityReport {
        schema_version: STABILITY_SCHEMA_VERSION,
        n_samples: raw.len(),
        dropped_nonfinite: dropped,
        t0_s: t0,
        detection_limit_raw: dls[0],
        detection_limit_even: dls[1],
        detection_limit_odd: dls[2],
        detection_limit_diff: dls[3],
        detection_limit_diff_per_sqrt2_s: dls[3].sigma / std::f64::consts::SQRT_2,
        sigma_at_reference,
        figure_of_merit_s_per_km2: area.map(|a| figure_of_merit(dls[1].sigma, a)),
        figure_of_merit_diff_s_per_km2: area.map(|a| figure_of_merit(dls[3].sigma / std::f64::consts::SQRT_2, a)),
        equivalent_rotation_deg_per_h: area.map(|a| rad_per_s_to_deg_per_hour(delay_to_rotation(dls[3].sigma, a))),
        earth_rotation_delay_s: earth_delay,
        earth_rotation_detectable: earth_delay.map(|d| d > sigma_at_reference.sigma),
        crb_reference,
        crb_differential,
        saturation_even,
        saturation_diff,
    };
    Ok(StabilityAnalysis { curves, report })
}
