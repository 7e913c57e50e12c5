//! Four-parameter sine fit of bright-source fringe scans.

use std::f64::consts::PI;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const MAX_ITERATIONS: usize = 200;
const RELATIVE_TOLERANCE: f64 = 1e-10;
const MAX_HALVINGS: usize = 60;
const MIN_POINTS: usize = 8;

/// `f(v) = f0 + a·sin(π (v − v0i) / w)`; powers in W, voltages in V.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeParameters {
    pub f0: f64,
    pub a: f64,
    /// Half period, V.
    pub w: f64,
    /// Rising inflection voltage, V.
    pub v0i: f64,
}

impl FringeParameters {
    pub fn evaluate(&self, v: f64) -> f64 {
        self.f0 + self.a * (PI * (v - self.v0i) / self.w).sin()
    }

    // order used by the solver: (v0i, w, a, f0)
    fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.v0i, self.w, self.a, self.f0)
    }

    fn from_vector(p: &Vector4<f64>) -> Self {
        Self {
            v0i: p[0],
            w: p[1],
            a: p[2],
            f0: p[3],
        }
    }

    fn gradient(&self, v: f64) -> Vector4<f64> {
        let phase = PI * (v - self.v0i) / self.w;
        let (s, c) = phase.sin_cos();
        Vector4::new(
            -self.a * c * PI / self.w,
            -self.a * c * phase / self.w,
            s,
            1.0,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub params: FringeParameters,
    /// 1σ errors from the covariance at the optimum.
    pub errors: FringeParameters,
    /// Covariance in (v0i, w, a, f0) order.
    pub covariance: [[f64; 4]; 4],
    pub chi_square: f64,
    pub dof: usize,
    pub iterations: usize,
}

/// Least-squares fit of [`FringeParameters`] to `(voltage, power)` samples
/// with known power noise `sigma_power`.
///
/// Damped Gauss–Newton from a deterministic start: offset = mean, amplitude =
/// half the peak-to-peak, half period from the strongest component of a
/// least-squares periodogram, and inflection at the rising zero crossing
/// nearest the scan centre.
pub fn fit_fringe(scan: &[(f64, f64)], sigma_power: f64) -> Result<FringeFit> {
    if scan.len() < MIN_POINTS {
        return Err(Error::domain(format!(
            "fringe fit needs at least {MIN_POINTS} points, got {}",
            scan.len()
        )));
    }
    if !(sigma_power.is_finite() && sigma_power > 0.0) {
        return Err(Error::domain(format!("sigma_power must be positive, got {sigma_power}")));
    }
    if scan.iter().any(|(v, p)| !v.is_finite() || !p.is_finite()) {
        return Err(Error::domain("scan contains non-finite values"));
    }
    let (v_min, v_max) = voltage_range(scan);
    let span = v_max - v_min;
    let initial = initial_guess(scan)?;
    if span < 0.9 * initial.w {
        return Err(Error::domain(format!(
            "scan spans {span} V, less than half a fringe period (~{} V)",
            initial.w
        )));
    }

    let weight = 1.0 / (sigma_power * sigma_power);
    let cost = |p: &FringeParameters| -> f64 {
        scan.iter().map(|&(v, y)| (y - p.evaluate(v)).powi(2)).sum::<f64>() * weight
    };

    let mut params = initial;
    let mut current = cost(&params);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (normal, gradient, scale) = scaled_normal_equations(scan, &params, weight);
        let step = match normal.cholesky() {
            Some(chol) => chol.solve(&gradient).component_mul(&scale),
            None => {
                return Err(Error::Fit(format!(
                    "singular normal matrix at iteration {iterations}, parameters {params:?}"
                )))
            }
        };
        let p0 = params.to_vector();
        let mut damping = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = FringeParameters::from_vector(&(p0 + step * damping));
            let c = cost(&trial);
            if c.is_finite() && c <= current {
                accepted = Some((trial, c));
                break;
            }
            damping *= 0.5;
        }
        let relative = relative_change(&step, &params);
        match accepted {
            Some((trial, c)) => {
                let moved = relative * damping;
                params = trial;
                current = c;
                if moved < RELATIVE_TOLERANCE {
                    converged = true;
                    break;
                }
            }
            None if relative < RELATIVE_TOLERANCE => {
                converged = true;
                break;
            }
            None => {
                return Err(Error::Fit(format!(
                    "no step decreases chi-square at iteration {iterations} (chi2 = {current:e}, \
                     parameters {params:?})"
                )))
            }
        }
    }
    if !converged {
        return Err(Error::Fit(format!(
            "not converged after {MAX_ITERATIONS} iterations (chi2 = {current:e}, parameters {params:?})"
        )));
    }

    let params = canonical_form(params, v_min, v_max);
    if span < 0.9 * params.w {
        return Err(Error::domain(format!(
            "scan spans {span} V, less than half the fitted fringe period ({} V)",
            params.w
        )));
    }
    let (normal, _, scale) = scaled_normal_equations(scan, &params, weight);
    let inverse = normal
        .try_inverse()
        .ok_or_else(|| Error::Fit("singular covariance at the optimum".into()))?;
    let covariance = Matrix4::from_diagonal(&scale) * inverse * Matrix4::from_diagonal(&scale);
    let sd = |i: usize| covariance[(i, i)].max(0.0).sqrt();
    let mut cov = [[0.0; 4]; 4];
    for (i, row) in cov.iter_mut().enumerate() {
        for (j, value) in row.iter_mut().enumerate() {
            *value = covariance[(i, j)];
        }
    }
    Ok(FringeFit {
        params,
        errors: FringeParameters {
            v0i: sd(0),
            w: sd(1),
            a: sd(2),
            f0: sd(3),
        },
        covariance: cov,
        chi_square: cost(&params),
        dof: scan.len() - 4,
        iterations,
    })
}

fn voltage_range(scan: &[(f64, f64)]) -> (f64, f64) {
    scan.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(v, _)| (lo.min(v), hi.max(v)))
}

/// Column-scaled normal equations `(JᵀWJ) δ = JᵀWr`; returns the scaled
/// matrix, scaled gradient and the column scale factors.
fn scaled_normal_equations(
    scan: &[(f64, f64)],
    params: &FringeParameters,
    weight: f64,
) -> (Matrix4<f64>, Vector4<f64>, Vector4<f64>) {
    let mut jtj = Matrix4::zeros();
    let mut jtr = Vector4::zeros();
    for &(v, y) in scan {
        let g = params.gradient(v);
        let r = y - params.evaluate(v);
        jtj += g * g.transpose();
        jtr += g * r;
    }
    let scale = Vector4::from_fn(|i, _| {
        let d = jtj[(i, i)];
        if d > 0.0 {
            1.0 / d.sqrt()
        } else {
            1.0
        }
    });
    let s = Matrix4::from_diagonal(&scale);
    ((s * jtj * s) * weight, (s * jtr) * weight, scale)
}

fn relative_change(step: &Vector4<f64>, p: &FringeParameters) -> f64 {
    let power_scale = p.a.abs() + p.f0.abs();
    let scales = [p.w.abs(), p.w.abs(), p.a.abs(), power_scale];
    step.iter()
        .zip(scales)
        .map(|(d, s)| d.abs() / s.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Positive amplitude and half period, inflection folded to lie as close
/// to the scan centre as possible.
fn canonical_form(mut p: FringeParameters, v_min: f64, v_max: f64) -> FringeParameters {
    if p.w < 0.0 {
        p.w = -p.w;
        p.a = -p.a;
    }
    if p.a < 0.0 {
        p.a = -p.a;
        p.v0i += p.w;
    }
    let centre = 0.5 * (v_min + v_max);
    let period = 2.0 * p.w;
    p.v0i -= ((p.v0i - centre) / period).round() * period;
    p
}

fn initial_guess(scan: &[(f64, f64)]) -> Result<FringeParameters> {
    let n = scan.len() as f64;
    let mean = scan.iter().map(|&(_, y)| y).sum::<f64>() / n;
    let (lo, hi) = scan
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, y)| (lo.min(y), hi.max(y)));
    let a = 0.5 * (hi - lo);
    if a.is_nan() || a <= 0.0 {
        return Err(Error::Fit("scan has no modulation".into()));
    }
    let (frequency, phase) = dominant_component(scan, mean);
    let w = 0.5 / frequency;
    let (v_min, v_max) = voltage_range(scan);
    let centre = 0.5 * (v_min + v_max);

    let mut sorted: Vec<(f64, f64)> = scan.iter().map(|&(v, y)| (v, y - mean)).collect();
    sorted.sort_by(|l, r| l.0.total_cmp(&r.0));
    let mut rising: Option<f64> = None;
    let mut falling: Option<f64> = None;
    for pair in sorted.windows(2) {
        let ((v0, y0), (v1, y1)) = (pair[0], pair[1]);
        if v1 == v0 || (y0 < 0.0) == (y1 < 0.0) {
            continue;
        }
        let crossing = v0 - y0 * (v1 - v0) / (y1 - y0);
        let slot = if y1 > y0 { &mut rising } else { &mut falling };
        if slot.is_none_or(|best| (crossing - centre).abs() < (best - centre).abs()) {
            *slot = Some(crossing);
        }
    }
    let v0i = match (rising, falling) {
        (Some(v), _) => v,
        (None, Some(v)) => {
            if v > centre {
                v - w
            } else {
                v + w
            }
        }
        // rising zero of sin(2πf v + phase)
        (None, None) => {
            let period = 1.0 / frequency;
            let base = -phase / (2.0 * PI * frequency);
            base + ((centre - base) / period).round() * period
        }
    };
    Ok(FringeParameters { f0: mean, a, w, v0i })
}

/// Frequency (cycles/V) and phase of the sinusoid explaining most of the
/// mean-subtracted variance, scanned on a grid finer than the Fourier
/// resolution of the scan.
fn dominant_component(scan: &[(f64, f64)], mean: f64) -> (f64, f64) {
    let (v_min, v_max) = voltage_range(scan);
    let span = v_max - v_min;
    let n = scan.len();
    let f_min = 0.25 / span;
    let f_max = 0.5 * (n - 1) as f64 / span;
    let df = 0.02 / span;
    let steps = ((f_max - f_min) / df).ceil() as usize;

    let mut best = (f_min, 0.0, f64::NEG_INFINITY);
    for k in 0..=steps {
        let f = f_min + k as f64 * df;
        let (mut cc, mut ss, mut cs, mut yc, mut ys) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(v, y) in scan {
            let (s, c) = (2.0 * PI * f * (v - v_min)).sin_cos();
            let y = y - mean;
            cc += c * c;
            ss += s * s;
            cs += c * s;
            yc += y * c;
            ys += y * s;
        }
        let det = cc * ss - cs * cs;
        if det <= 1e-12 * cc * ss {
            continue;
        }
        let bc = (ss * yc - cs * ys) / det;
        let bs = (cc * ys - cs * yc) / det;
        let power = bc * yc + bs * ys;
        if power > best.2 {
            // b_c cos + b_s sin = R sin(x + φ) with φ = atan2(b_c, b_s),
            // shifted back to absolute voltage
            let phase = bc.atan2(bs) - 2.0 * PI * f * v_min;
            best = (f, phase, power);
        }
    }
    (best.0, best.1)
}
