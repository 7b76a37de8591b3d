//! Single runs and parallel parameter sweeps.
//!
//! Grid points are independent and run on a rayon pool; results are
//! collected in grid order, so output never depends on scheduling. Broadband
//! points draw their noise seed from [`point_seed`] under
//! [`SeedPolicy::PerPoint`], or reuse the base seed under
//! [`SeedPolicy::Common`] (common random numbers, which keeps the comparison
//! between grid points free of realization-to-realization scatter).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::analysis::{
    write_trajectory_csv, EnergyAudit, EnergyReport, PowerReport, ResponseAccumulator,
};
use crate::config::{ExcitationConfig, RunConfig};
use crate::dynamics::{default_initial, integrate_with, ModelVariant, Sample, Trajectory};
use crate::error::{Error, Result};
use crate::model::STANDARD_GRAVITY;

pub const TOOL_VERSION: &str = concat!("eharvest ", env!("CARGO_PKG_VERSION"));

/// Comment line heading every output file.
pub fn provenance_line(config: &RunConfig, seed: Option<u64>) -> String {
    let seed = seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    format!("{TOOL_VERSION} config_hash={} seed={seed}", config.hash())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMetrics {
    pub report: PowerReport,
    pub energy: EnergyReport,
}

/// Integrates one configuration and reduces it on the fly.
pub fn run_point(config: &RunConfig) -> Result<PointMetrics> {
    run_inner(config, |_| {})
}

fn run_inner(config: &RunConfig, mut extra: impl FnMut(&Sample)) -> Result<PointMetrics> {
    config.validate()?;
    let excitation = config.build_excitation()?;
    let mut acc = ResponseAccumulator::new(
        config.loads,
        config.settle,
        config.device.stopper.engage_displacement,
    );
    if let Some(len) = config.block_length {
        acc = acc.with_block_length(len);
    }
    let mut audit = EnergyAudit::new(config.variant, &config.device, &config.loads);
    integrate_with(
        config.variant,
        &config.device,
        &config.loads,
        &excitation,
        default_initial(&config.device, config.variant),
        config.duration,
        &config.integrator,
        |s: &Sample| {
            acc.push(s);
            audit.push(s);
            extra(s);
        },
    )?;
    Ok(PointMetrics {
        report: acc.finish()?,
        energy: audit.finish(),
    })
}

#[derive(Debug, Clone)]
pub struct SingleRun {
    pub trajectory: Trajectory,
    pub metrics: PointMetrics,
}

/// Runs one configuration, keeping the trajectory; writes it to
/// `config.output` when set.
pub fn run_single(config: &RunConfig) -> Result<SingleRun> {
    let mut samples = Vec::new();
    let metrics = run_inner(config, |s| samples.push(*s))?;
    let trajectory = Trajectory {
        variant: config.variant,
        samples,
        stats: Default::default(),
    };
    if let Some(path) = &config.output {
        let mut comment = provenance_line(config, config.seed());
        let _ = write!(
            comment,
            "\naverage_power_W={:e} mean_square_displacement_m2={:e} peak_displacement_m={:e} contact_fraction={}",
            metrics.report.average_power,
            metrics.report.mean_square_displacement,
            metrics.report.peak_displacement,
            metrics.report.contact_fraction
        );
        write_trajectory_csv(&trajectory, path, Some(&comment))?;
    }
    Ok(SingleRun {
        trajectory,
        metrics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParameter {
    /// Sine frequency [Hz].
    DriveFrequency,
    /// Both load resistors [MΩ].
    LoadResistance,
    /// Sine peak acceleration [g].
    SineAmplitude,
    /// Noise PSD level [g²/Hz].
    NoisePsdLevel,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::DriveFrequency => "driveFrequency",
            SweepParameter::LoadResistance => "loadResistance",
            SweepParameter::SineAmplitude => "sineAmplitude",
            SweepParameter::NoisePsdLevel => "noisePsdLevel",
        }
    }

    /// CSV column name including the unit.
    pub fn column(self) -> &'static str {
        match self {
            SweepParameter::DriveFrequency => "frequency_Hz",
            SweepParameter::LoadResistance => "load_MOhm",
            SweepParameter::SineAmplitude => "amplitude_g",
            SweepParameter::NoisePsdLevel => "psd_g2Hz",
        }
    }

    fn valid(self, value: f64) -> bool {
        match self {
            SweepParameter::SineAmplitude | SweepParameter::NoisePsdLevel => value >= 0.0,
            _ => value > 0.0,
        }
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "driveFrequency" => SweepParameter::DriveFrequency,
            "loadResistance" => SweepParameter::LoadResistance,
            "sineAmplitude" => SweepParameter::SineAmplitude,
            "noisePsdLevel" => SweepParameter::NoisePsdLevel,
            other => {
                return Err(Error::Validation(format!(
                    "unknown sweep parameter `{other}` (expected driveFrequency, loadResistance, sineAmplitude or noisePsdLevel)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

impl SweepAxis {
    pub fn new(parameter: SweepParameter, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Validation(format!("axis {} has no values", parameter.name())));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || !parameter.valid(**v)) {
            return Err(Error::Validation(format!(
                "value {v} is outside the domain of {}",
                parameter.name()
            )));
        }
        Ok(Self { parameter, values })
    }

    pub fn linear(parameter: SweepParameter, start: f64, stop: f64, n: usize) -> Result<Self> {
        Self::new(parameter, spaced(start, stop, n, false)?)
    }

    pub fn log(parameter: SweepParameter, start: f64, stop: f64, n: usize) -> Result<Self> {
        Self::new(parameter, spaced(start, stop, n, true)?)
    }
}

fn spaced(start: f64, stop: f64, n: usize, log: bool) -> Result<Vec<f64>> {
    if n == 0 || (log && !(start > 0.0 && stop > 0.0)) {
        return Err(Error::Validation(format!(
            "bad range {start}..{stop} with {n} points"
        )));
    }
    if n == 1 {
        return Ok(vec![start]);
    }
    let at = |i: usize| {
        let f = i as f64 / (n - 1) as f64;
        if log {
            (start.ln() + f * (stop.ln() - start.ln())).exp()
        } else {
            start + f * (stop - start)
        }
    };
    let mut v: Vec<f64> = (0..n).map(at).collect();
    v[n - 1] = stop;
    Ok(v)
}

/// `name=v1,v2,...`, `name=lin:start:stop:n` or `name=log:start:stop:n`.
impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: &str| Error::Validation(format!("bad axis spec `{s}`: {m}"));
        let (name, spec) = s.split_once('=').ok_or_else(|| bad("missing `=`"))?;
        let parameter: SweepParameter = name.parse()?;
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| bad(&e.to_string()));
        let parts: Vec<&str> = spec.split(':').collect();
        match parts.as_slice() {
            [kind @ ("lin" | "log"), a, b, n] => {
                let n: usize = n.trim().parse().map_err(|_| bad("point count"))?;
                let (a, b) = (num(a)?, num(b)?);
                if *kind == "lin" {
                    SweepAxis::linear(parameter, a, b, n)
                } else {
                    SweepAxis::log(parameter, a, b, n)
                }
            }
            [list] => SweepAxis::new(
                parameter,
                list.split(',').map(num).collect::<Result<Vec<_>>>()?,
            ),
            _ => Err(bad("expected a list or lin:/log:start:stop:n")),
        }
    }
}

/// Returns `config` with one axis value applied.
pub fn apply_axis(config: &RunConfig, parameter: SweepParameter, value: f64) -> Result<RunConfig> {
    let mut cfg = config.clone();
    let wrong = |what: &str| {
        Err(Error::Validation(format!(
            "{} needs a {what} excitation",
            parameter.name()
        )))
    };
    match (parameter, &mut cfg.excitation) {
        (SweepParameter::LoadResistance, _) => {
            cfg.loads.resistance1 = value * 1e6;
            cfg.loads.resistance2 = value * 1e6;
        }
        (SweepParameter::DriveFrequency, ExcitationConfig::Sine(s)) => s.frequency = value,
        (SweepParameter::SineAmplitude, ExcitationConfig::Sine(s)) => {
            s.amplitude = value * STANDARD_GRAVITY
        }
        (SweepParameter::NoisePsdLevel, ExcitationConfig::Noise(n)) => n.psd_level = value,
        (SweepParameter::DriveFrequency | SweepParameter::SineAmplitude, _) => {
            return wrong("sine")
        }
        (SweepParameter::NoisePsdLevel, _) => return wrong("noise"),
    }
    Ok(cfg)
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of grid point `index`: `splitmix64(base ^ splitmix64(index))`.
pub fn point_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeedPolicy {
    #[default]
    PerPoint,
    Common,
}

impl FromStr for SeedPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-point" => Ok(SeedPolicy::PerPoint),
            "common" => Ok(SeedPolicy::Common),
            other => Err(Error::Validation(format!(
                "unknown seed policy `{other}` (per-point or common)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepOptions {
    /// Worker threads; `None` uses the available parallelism.
    pub jobs: Option<usize>,
    pub seed_policy: SeedPolicy,
    /// Overrides the config's noise seed.
    pub base_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub values: Vec<f64>,
    pub seed: Option<u64>,
    /// One outcome per variant, in [`SweepResult::variants`] order.
    pub outcomes: Vec<std::result::Result<PointMetrics, String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub parameters: Vec<SweepParameter>,
    pub variants: Vec<ModelVariant>,
    pub rows: Vec<SweepRow>,
    pub provenance: String,
}

impl SweepResult {
    /// Metric series of one variant; failed points are `None`.
    pub fn metrics(&self, variant_index: usize) -> Vec<Option<&PointMetrics>> {
        self.rows
            .iter()
            .map(|r| r.outcomes[variant_index].as_ref().ok())
            .collect()
    }

    /// Average power per row for one variant (NaN where the point failed).
    pub fn powers(&self, variant_index: usize) -> Vec<f64> {
        self.metrics(variant_index)
            .into_iter()
            .map(|m| m.map_or(f64::NAN, |m| m.report.average_power))
            .collect()
    }

    /// Row with the highest average power for the first variant.
    pub fn argmax(&self) -> Option<&SweepRow> {
        self.rows
            .iter()
            .filter_map(|r| r.outcomes[0].as_ref().ok().map(|m| (r, m.report.average_power)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(r, _)| r)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.provenance);
        if let Some(best) = self.argmax() {
            let values: Vec<String> = self
                .parameters
                .iter()
                .zip(&best.values)
                .map(|(p, v)| format!("{}={v}", p.column()))
                .collect();
            let _ = writeln!(out, "# argmax {}", values.join(" "));
        }
        let mut header: Vec<String> = self.parameters.iter().map(|p| p.column().into()).collect();
        let paired = self.variants.len() > 1;
        for v in &self.variants {
            let sfx = if paired { format!("_{}", v.name()) } else { String::new() };
            for col in [
                "average_power_W",
                "mean_square_displacement_m2",
                "peak_displacement_m",
                "stopper_contact_fraction",
            ] {
                header.push(format!("{col}{sfx}"));
            }
        }
        header.extend(["seed".into(), "error".into()]);
        let _ = writeln!(out, "{}", header.join(","));
        for row in &self.rows {
            let mut cols: Vec<String> = row.values.iter().map(|v| format!("{v:.12e}")).collect();
            let mut errors = Vec::new();
            for (v, outcome) in self.variants.iter().zip(&row.outcomes) {
                match outcome {
                    Ok(m) => {
                        let r = &m.report;
                        cols.extend([
                            format!("{:.12e}", r.average_power),
                            format!("{:.12e}", r.mean_square_displacement),
                            format!("{:.12e}", r.peak_displacement),
                            format!("{:.12e}", r.contact_fraction),
                        ]);
                    }
                    Err(e) => {
                        cols.extend(std::iter::repeat_n(String::new(), 4));
                        errors.push(format!("{}: {}", v.name(), e.replace([',', '\n'], ";")));
                    }
                }
            }
            cols.push(row.seed.map_or_else(String::new, |s| s.to_string()));
            cols.push(errors.join(" | "));
            let _ = writeln!(out, "{}", cols.join(","));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Evaluates every point of a one- or two-axis grid for the config's variant.
pub fn sweep_grid(config: &RunConfig, axes: &[SweepAxis], options: &SweepOptions) -> Result<SweepResult> {
    run_grid(config, axes, &[config.variant], options)
}

/// One-axis sweep evaluated for each of `variants`.
pub fn sweep_series(
    config: &RunConfig,
    axis: &SweepAxis,
    variants: &[ModelVariant],
    options: &SweepOptions,
) -> Result<SweepResult> {
    if variants.is_empty() {
        return Err(Error::Validation("series needs at least one model variant".into()));
    }
    run_grid(config, std::slice::from_ref(axis), variants, options)
}

fn run_grid(
    config: &RunConfig,
    axes: &[SweepAxis],
    variants: &[ModelVariant],
    options: &SweepOptions,
) -> Result<SweepResult> {
    if axes.is_empty() || axes.len() > 2 {
        return Err(Error::Validation(format!(
            "sweeps take one or two axes, got {}",
            axes.len()
        )));
    }
    for axis in axes {
        // surface excitation/axis mismatches before spending any compute
        apply_axis(config, axis.parameter, axis.values[0])?;
    }
    let base_seed = options.base_seed.or(config.seed());
    let points: Vec<Vec<f64>> = match axes {
        [a] => a.values.iter().map(|&v| vec![v]).collect(),
        [a, b] => a
            .values
            .iter()
            .flat_map(|&u| b.values.iter().map(move |&v| vec![u, v]))
            .collect(),
        _ => unreachable!(),
    };

    let evaluate = |(index, values): (usize, &Vec<f64>)| -> SweepRow {
        let seed = base_seed.map(|base| match options.seed_policy {
            SeedPolicy::PerPoint => point_seed(base, index as u64),
            SeedPolicy::Common => base,
        });
        let prepared = (|| {
            let mut cfg = config.clone();
            for (axis, &v) in axes.iter().zip(values) {
                cfg = apply_axis(&cfg, axis.parameter, v)?;
            }
            if let (ExcitationConfig::Noise(n), Some(s)) = (&mut cfg.excitation, seed) {
                n.seed = s;
            }
            Ok::<_, Error>(cfg)
        })();
        let outcomes = variants
            .iter()
            .map(|&variant| {
                let cfg = prepared.as_ref().map_err(|e| e.to_string())?;
                let cfg = RunConfig {
                    variant,
                    ..cfg.clone()
                };
                run_point(&cfg).map_err(|e| e.to_string())
            })
            .collect();
        SweepRow {
            values: values.clone(),
            seed: seed.filter(|_| matches!(config.excitation, ExcitationConfig::Noise(_))),
            outcomes,
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Validation(format!("cannot build thread pool: {e}")))?;
    let rows = pool.install(|| points.par_iter().enumerate().map(evaluate).collect());

    Ok(SweepResult {
        parameters: axes.iter().map(|a| a.parameter).collect(),
        variants: variants.to_vec(),
        rows,
        provenance: provenance_line(config, base_seed),
    })
}

/// Derived small-signal constants of the configured device.
pub fn linearization_report(config: &RunConfig) -> String {
    let p = &config.device;
    let lin = p.linearize();
    let mut out = String::new();
    let _ = writeln!(out, "f0     = {:.2} Hz", p.natural_frequency());
    let _ = writeln!(out, "C0     = {:.4} pF", lin.nominal_cap * 1e12);
    let _ = writeln!(out, "q0     = {:.4} pC", lin.equilibrium_charge * 1e12);
    let _ = writeln!(out, "alpha1 = {:.4e} V/m", lin.coupling1);
    let _ = writeln!(out, "alpha2 = {:.4e} V/m", lin.coupling2);
    let _ = writeln!(out, "Q      = {:.2}", p.quality_factor());
    out
}
