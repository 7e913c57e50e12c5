//! File formats: headered CSV with shortest round-trip floats, pretty JSON
//! with a schema version, and run manifests with SHA-256 digests.
//!
//! CSV files use a dot decimal, no thousands separators and LF line
//! endings. Times are always in seconds.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{DelayFlag, DelaySample};
use crate::sim::{BrightScan, CalibrationScan, CountRecord, ScanStep};
use crate::stability::{AllanCurve, SeriesOrigin};
use crate::{Error, Result};

pub const COUNTS_HEADER: &str = "t_s,c1,c2";
pub const DELAYS_HEADER: &str = "t_s,tau_s,sigma_tau_s,flag";
pub const ALLAN_HEADER: &str = "series,m,t_s,adev_s,ci_s,n_terms";
pub const CALIBRATION_COUNTS_HEADER: &str = "v0_v,t_s,c1,c2";
pub const FISHER_HEADER: &str = "tau_s,fisher_s^-2";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

/// Parsed rows of a headered CSV file, checked against `header`.
fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let context = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => io_error(path, source),
            other => Error::data(&context, format!("{other:?}")),
        })?;
    let found = reader
        .headers()
        .map_err(|e| Error::data(&context, e.to_string()))?
        .clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(Error::data(
            &context,
            format!("expected header {:?}, found {:?}", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    reader
        .records()
        .map(|r| r.map_err(|e| Error::data(&context, e.to_string())))
        .collect()
}

fn field<T: std::str::FromStr>(row: &csv::StringRecord, i: usize, path: &Path) -> Result<T> {
    let raw = row.get(i).unwrap_or("");
    raw.trim().parse().map_err(|_| {
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        Error::data(path.display().to_string(), format!("line {line}: cannot parse {raw:?} in column {}", i + 1))
    })
}

pub fn format_counts(records: &[CountRecord]) -> String {
    let mut out = String::with_capacity(24 * (records.len() + 1));
    out.push_str(COUNTS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{:e},{},{}", r.t, r.c1, r.c2);
    }
    out
}

pub fn write_counts(path: &Path, records: &[CountRecord]) -> Result<()> {
    write_text(path, &format_counts(records))
}

pub fn read_counts(path: &Path) -> Result<Vec<CountRecord>> {
    read_rows(path, &["t_s", "c1", "c2"])?
        .iter()
        .map(|row| Ok(CountRecord::new(field(row, 0, path)?, field(row, 1, path)?, field(row, 2, path)?)))
        .collect()
}

pub fn format_delays(samples: &[DelaySample]) -> String {
    let mut out = String::with_capacity(48 * (samples.len() + 1));
    out.push_str(DELAYS_HEADER);
    out.push('\n');
    for s in samples {
        let _ = writeln!(out, "{:e},{:e},{:e},{}", s.t, s.tau, s.sigma_tau, s.flag.as_str());
    }
    out
}

pub fn write_delays(path: &Path, samples: &[DelaySample]) -> Result<()> {
    write_text(path, &format_delays(samples))
}

pub fn read_delays(path: &Path) -> Result<Vec<DelaySample>> {
    read_rows(path, &["t_s", "tau_s", "sigma_tau_s", "flag"])?
        .iter()
        .map(|row| {
            Ok(DelaySample {
                t: field(row, 0, path)?,
                tau: field(row, 1, path)?,
                sigma_tau: field(row, 2, path)?,
                flag: field::<DelayFlag>(row, 3, path)?,
            })
        })
        .collect()
}

pub fn format_allan(curves: &[AllanCurve]) -> String {
    let mut out = String::new();
    out.push_str(ALLAN_HEADER);
    out.push('\n');
    for c in curves {
        for e in &c.entries {
            let _ = writeln!(out, "{},{},{:e},{:e},{:e},{}", c.origin.name(), e.m, e.t, e.adev, e.ci, e.n_terms);
        }
    }
    out
}

pub fn write_allan(path: &Path, curves: &[AllanCurve]) -> Result<()> {
    write_text(path, &format_allan(curves))
}

/// Rows of an Allan CSV as `(series, entry)`.
pub fn read_allan(path: &Path) -> Result<Vec<(SeriesOrigin, crate::stability::AllanEntry)>> {
    read_rows(path, &["series", "m", "t_s", "adev_s", "ci_s", "n_terms"])?
        .iter()
        .map(|row| {
            let origin = match row.get(0).unwrap_or("") {
                "raw" => SeriesOrigin::Raw,
                "even" => SeriesOrigin::Even,
                "odd" => SeriesOrigin::Odd,
                "diff" => SeriesOrigin::Differential,
                other => return Err(Error::data(path.display().to_string(), format!("unknown series {other:?}"))),
            };
            Ok((
                origin,
                crate::stability::AllanEntry {
                    m: field(row, 1, path)?,
                    t: field(row, 2, path)?,
                    adev: field(row, 3, path)?,
                    ci: field(row, 4, path)?,
                    n_terms: field(row, 5, path)?,
                },
            ))
        })
        .collect()
}

pub fn format_bright_scan(scan: &BrightScan) -> String {
    let mut out = String::from("v0_v");
    for i in 0..scan.n_channels() {
        let _ = write!(out, ",power{}_w", i + 1);
    }
    out.push('\n');
    for (k, v) in scan.voltages.iter().enumerate() {
        let _ = write!(out, "{v:e}");
        for ch in &scan.powers {
            let _ = write!(out, ",{:e}", ch[k]);
        }
        out.push('\n');
    }
    out
}

pub fn write_bright_scan(path: &Path, scan: &BrightScan) -> Result<()> {
    write_text(path, &format_bright_scan(scan))
}

/// Reads `v0_v,power1_w[,power2_w…]`; one or more channels.
pub fn read_bright_scan(path: &Path) -> Result<BrightScan> {
    let text = read_text(path)?;
    let first = text.lines().next().unwrap_or("");
    let n_channels = first.split(',').count().saturating_sub(1);
    if n_channels == 0 {
        return Err(Error::data(path.display().to_string(), "bright scan needs at least one power column"));
    }
    let header: Vec<String> = std::iter::once("v0_v".to_string())
        .chain((1..=n_channels).map(|i| format!("power{i}_w")))
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = read_rows(path, &header_refs)?;
    let mut scan = BrightScan {
        voltages: Vec::with_capacity(rows.len()),
        powers: vec![Vec::with_capacity(rows.len()); n_channels],
    };
    for row in &rows {
        scan.voltages.push(field(row, 0, path)?);
        for (i, ch) in scan.powers.iter_mut().enumerate() {
            ch.push(field(row, i + 1, path)?);
        }
    }
    Ok(scan)
}

pub fn format_calibration_counts(scan: &CalibrationScan) -> String {
    let mut out = String::new();
    out.push_str(CALIBRATION_COUNTS_HEADER);
    out.push('\n');
    for step in &scan.steps {
        for r in &step.records {
            let _ = writeln!(out, "{:e},{:e},{},{}", step.v0, r.t, r.c1, r.c2);
        }
    }
    out
}

pub fn write_calibration_counts(path: &Path, scan: &CalibrationScan) -> Result<()> {
    write_text(path, &format_calibration_counts(scan))
}

/// Groups consecutive rows with equal voltage into steps. The applied
/// delay is unknown on read and left as NaN; the integration time is the
/// spacing of the first two bins.
pub fn read_calibration_counts(path: &Path) -> Result<CalibrationScan> {
    let rows = read_rows(path, &["v0_v", "t_s", "c1", "c2"])?;
    let mut steps: Vec<ScanStep> = Vec::new();
    let mut times = Vec::with_capacity(rows.len());
    for row in &rows {
        let v0: f64 = field(row, 0, path)?;
        let record = CountRecord::new(field(row, 1, path)?, field(row, 2, path)?, field(row, 3, path)?);
        times.push(record.t);
        match steps.last_mut() {
            Some(step) if step.v0 == v0 => step.records.push(record),
            _ => steps.push(ScanStep {
                v0,
                tau: f64::NAN,
                records: vec![record],
            }),
        }
    }
    if times.len() < 2 {
        return Err(Error::data(path.display().to_string(), "calibration scan needs at least two bins"));
    }
    Ok(CalibrationScan {
        integration_time: times[1] - times[0],
        steps,
    })
}

pub fn format_curve(header: &str, points: &[(f64, f64)]) -> String {
    let mut out = String::with_capacity(40 * (points.len() + 1));
    out.push_str(header);
    out.push('\n');
    for (x, y) in points {
        let _ = writeln!(out, "{x:e},{y:e}");
    }
    out
}

pub fn write_fisher(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    write_text(path, &format_curve(FISHER_HEADER, points))
}

pub fn read_fisher(path: &Path) -> Result<Vec<(f64, f64)>> {
    read_rows(path, &["tau_s", "fisher_s^-2"])?
        .iter()
        .map(|row| Ok((field(row, 0, path)?, field(row, 1, path)?)))
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::data(path.display().to_string(), e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::data(path.display().to_string(), e.to_string()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    /// SHA-256 of the effective configuration serialized as TOML.
    pub config_sha256: String,
    pub seed: u64,
    pub rng_algorithm: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}
