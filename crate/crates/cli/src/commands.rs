//! Subcommand implementations. Each writes its outputs plus a
//! `<command>.manifest.json` into the output directory.

use std::path::PathBuf;

use sagnac_core::calibration::{calibrate, estimate_delays, CalibrationOptions, CalibrationSet};
use sagnac_core::config::{ExperimentConfig, ModulatorSection};
use sagnac_core::io::{self, FileDigest, RunManifest, MANIFEST_SCHEMA_VERSION};
use sagnac_core::model::{fisher_information, ModulatorMap};
use sagnac_core::sim::{linspace, simulate_bright_scan, simulate_calibration_scan, simulate_run, RunConfig};
use sagnac_core::stability::{adjacent_average, analyze, DelaySeries, SeriesOrigin, StabilityOptions};
use sagnac_core::{sim, Error};

use crate::{CalibrateArgs, Cli, CliError, Command, EstimateArgs, FisherArgs, SimulateArgs, StabilityArgs};

type Result<T> = std::result::Result<T, CliError>;

const MIN_STABILITY_SAMPLES: usize = 8;

struct Context {
    config: ExperimentConfig,
    out_dir: PathBuf,
    inputs: Vec<PathBuf>,
    started: f64,
}

impl Context {
    fn seed(&self) -> u64 {
        self.config.run.seed
    }

    fn output(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Writes the manifest for `command` covering `outputs`.
    fn finish(&self, command: &str, outputs: &[PathBuf]) -> Result<()> {
        let digests = |paths: &[PathBuf]| -> Result<Vec<FileDigest>> {
            Ok(paths.iter().map(|p| io::file_digest(p)).collect::<sagnac_core::Result<_>>()?)
        };
        let manifest = RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool: "sagnac".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: io::sha256_hex(self.config.to_toml_string()?.as_bytes()),
            seed: self.seed(),
            rng_algorithm: sim::RNG_ALGORITHM.into(),
            inputs: digests(&self.inputs)?,
            outputs: digests(outputs)?,
            started_unix_s: self.started,
            finished_unix_s: io::unix_now(),
        };
        io::write_json(&self.output(&format!("{command}.manifest.json")), &manifest)?;
        Ok(())
    }

    /// Modulator map from the configuration, loading a calibration file
    /// when the section points at one.
    fn modulator(&mut self) -> Result<ModulatorMap> {
        if let Some(map) = self.config.fixed_modulator()? {
            return Ok(map);
        }
        let ModulatorSection::FromCalibration { path } = &self.config.modulator else {
            unreachable!("fixed sections are handled above");
        };
        let path = path.clone();
        let set: CalibrationSet = io::read_json(&path)?;
        self.inputs.push(path);
        Ok(set.modulator_map()?)
    }

    fn run_config(&mut self) -> Result<RunConfig> {
        let map = match self.config.run.tau0_s {
            Some(_) => None,
            None => Some(self.modulator()?),
        };
        Ok(self.config.run.build(map.as_ref())?)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let started = io::unix_now();
    let mut inputs = Vec::new();
    let mut config = match &cli.config {
        Some(path) => {
            inputs.push(path.clone());
            ExperimentConfig::load(path)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.run.seed = seed;
    }
    std::fs::create_dir_all(&cli.out_dir).map_err(|source| Error::Io {
        path: cli.out_dir.display().to_string(),
        source,
    })?;
    let mut ctx = Context {
        config,
        out_dir: cli.out_dir.clone(),
        inputs,
        started,
    };
    match &cli.command {
        Command::Fisher(args) => fisher(&mut ctx, args),
        Command::Simulate(args) => simulate(&mut ctx, args),
        Command::Calibrate(args) => calibrate_cmd(&mut ctx, args),
        Command::Estimate(args) => estimate(&mut ctx, args),
        Command::Stability(args) => stability(&mut ctx, args),
    }
}

fn fisher(ctx: &mut Context, args: &FisherArgs) -> Result<()> {
    let ok = args.tau_min.is_finite()
        && args.tau_max.is_finite()
        && args.n_points >= 1
        && (args.tau_max > args.tau_min || (args.n_points == 1 && args.tau_max >= args.tau_min));
    if !ok {
        return Err(CliError::Usage(format!(
            "bad delay range [{}, {}] s with {} points",
            args.tau_min, args.tau_max, args.n_points
        )));
    }
    let spectrum = ctx.config.spectrum.build()?;
    let curve: Vec<(f64, f64)> = linspace(args.tau_min, args.tau_max, args.n_points)
        .into_iter()
        .map(|tau| (tau, fisher_information(tau, &spectrum)))
        .collect();
    let path = ctx.output(&args.output);
    io::write_fisher(&path, &curve)?;
    ctx.finish("fisher", &[path])
}

fn simulate(ctx: &mut Context, args: &SimulateArgs) -> Result<()> {
    let spectrum = ctx.config.spectrum.build()?;
    let noise = ctx.config.noise.build()?;
    let run = ctx.run_config()?;
    let records = simulate_run(&run, &spectrum, &noise)?;
    let path = ctx.output(&args.output);
    io::write_counts(&path, &records)?;
    ctx.finish("simulate", &[path])
}

fn calibrate_cmd(ctx: &mut Context, args: &CalibrateArgs) -> Result<()> {
    let spectrum = ctx.config.spectrum.build()?;
    let noise = ctx.config.noise.build()?;
    let seed = ctx.seed();
    let mut outputs = Vec::new();

    let bright = match &args.bright {
        Some(path) => {
            ctx.inputs.push(path.clone());
            io::read_bright_scan(path)?
        }
        None => {
            let b = &ctx.config.bright_scan;
            let scan = simulate_bright_scan((b.v_lo, b.v_hi), b.n_steps, &b.channels, b.noise_w, seed)?;
            let path = ctx.output("bright_scan.csv");
            io::write_bright_scan(&path, &scan)?;
            outputs.push(path);
            scan
        }
    };
    let staircase = match &args.staircase {
        Some(path) => {
            ctx.inputs.push(path.clone());
            io::read_calibration_counts(path)?
        }
        None => {
            let c = ctx.config.calibration;
            let map = ctx.modulator()?;
            let run = RunConfig {
                rate_total: ctx.config.run.rate_total_hz,
                integration_time: c.integration_time_s,
                duration: c.integration_time_s,
                tau0: 0.0,
                seed,
            };
            let scan = simulate_calibration_scan(c.v_a, c.v_b, c.steps, c.repeats, &run, &spectrum, &map, &noise)?;
            let path = ctx.output("calibration_counts.csv");
            io::write_calibration_counts(&path, &scan)?;
            outputs.push(path);
            scan
        }
    };
    let options = CalibrationOptions {
        sigma_power: ctx.config.bright_scan.noise_w,
        dark_rates: (noise.dark_rate_1, noise.dark_rate_2),
        step_error_mode: ctx.config.calibration.step_error,
    };
    let set = calibrate(&bright, &staircase, &spectrum, &options)?;
    let path = ctx.output(&args.output);
    io::write_json(&path, &set)?;
    outputs.push(path);
    ctx.finish("calibrate", &outputs)
}

/// Bin length from the spacing of the first two rows, else the configured one.
fn sample_interval(times: &[f64], fallback: f64) -> f64 {
    match times {
        [a, b, ..] if b > a => b - a,
        _ => fallback,
    }
}

fn estimate(ctx: &mut Context, args: &EstimateArgs) -> Result<()> {
    ctx.inputs.push(args.counts.clone());
    ctx.inputs.push(args.calibration.clone());
    let records = io::read_counts(&args.counts)?;
    if records.is_empty() {
        return Err(CliError::Usage(format!("{} holds no count rows", args.counts.display())));
    }
    let set: CalibrationSet = io::read_json(&args.calibration)?;
    let times: Vec<f64> = records.iter().map(|r| r.t).collect();
    let t_bin = sample_interval(&times, ctx.config.run.integration_time_s);
    let samples = estimate_delays(
        &records,
        &set.linear,
        set.dark_rates_hz,
        t_bin,
        ctx.config.calibration.calibration_error,
    );
    let path = ctx.output(&args.output);
    io::write_delays(&path, &samples)?;
    ctx.finish("estimate", &[path])
}

fn stability(ctx: &mut Context, args: &StabilityArgs) -> Result<()> {
    ctx.inputs.push(args.delays.clone());
    let samples = io::read_delays(&args.delays)?;
    let finite = samples.iter().filter(|s| s.tau.is_finite()).count();
    if finite < MIN_STABILITY_SAMPLES {
        return Err(CliError::Usage(format!(
            "{} has {finite} usable delays; at least {MIN_STABILITY_SAMPLES} are needed",
            args.delays.display()
        )));
    }
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let t0 = sample_interval(&times, ctx.config.run.integration_time_s);
    let tau: Vec<f64> = samples.iter().map(|s| s.tau).collect();
    let spectrum = ctx.config.spectrum.build()?;
    let geometry = ctx.config.geometry.build()?;
    let a = ctx.config.analysis;
    let options = StabilityOptions {
        rate_total: ctx.config.run.rate_total_hz,
        integration_time: t0,
        total_area: Some(geometry.total_area),
        reference_time: a.reference_time_s,
        points_per_decade: a.points_per_decade,
    };
    let analysis = analyze(t0, &tau, &spectrum, &options)?;

    let allan = ctx.output(&format!("{}_allan.csv", args.prefix));
    io::write_allan(&allan, &analysis.curves)?;
    let report = ctx.output(&format!("{}_report.json", args.prefix));
    io::write_json(&report, &analysis.report)?;
    let mut outputs = vec![allan, report];

    let (raw, _) = DelaySeries::from_samples(t0, &tau, SeriesOrigin::Raw)?;
    if a.smoothing_window <= raw.len() {
        let smoothed = adjacent_average(&raw, a.smoothing_window)?;
        // centred window: output i belongs to sample i + (window−1)/2
        let offset = (a.smoothing_window - 1) / 2;
        let kept: Vec<f64> = samples.iter().filter(|s| s.tau.is_finite()).map(|s| s.t).collect();
        let points: Vec<(f64, f64)> = smoothed
            .values()
            .iter()
            .zip(&kept[offset..])
            .map(|(&v, &t)| (t, v))
            .collect();
        let path = ctx.output(&format!("{}_smoothed.csv", args.prefix));
        io::write_text(&path, &io::format_curve("t_s,tau_s", &points))?;
        outputs.push(path);
    }
    ctx.finish("stability", &outputs)
}

