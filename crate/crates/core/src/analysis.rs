//! Observables computed from sampled trajectories.
//!
//! Time integrals use the trapezoidal rule over the uniform sample grid. The
//! accumulators here are streaming so that long broadband runs can be reduced
//! without keeping the trajectory in memory; the slice-based functions are
//! thin wrappers over them.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::dynamics::{ModelVariant, Sample, Trajectory};
use crate::error::{Error, Result};
use crate::model::{DeviceParams, LoadNetwork};

/// Column header of the trajectory CSV.
pub const TRAJECTORY_HEADER: &str = "t_s,x_m,v_mps,q1_C,q2_C,vn1_V,vn2_V,a_mps2,p_W";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerReport {
    /// Sum of the two port powers [W].
    pub average_power: f64,
    pub port_power: [f64; 2],
    pub mean_square_displacement: f64,
    pub peak_displacement: f64,
    /// Fraction of samples in the window with `|x|` above the contact threshold.
    pub contact_fraction: f64,
    /// Standard error of `average_power` from the scatter of block means,
    /// when at least two blocks fit in the window.
    pub power_std_error: Option<f64>,
    pub settle_discard: f64,
    pub observation_window: f64,
}

/// Streaming trapezoidal averages over the samples at or after `settle`.
#[derive(Debug, Clone)]
pub struct ResponseAccumulator {
    loads: LoadNetwork,
    settle: f64,
    contact_threshold: f64,
    block_length: Option<f64>,
    prev: Option<Sample>,
    first_t: f64,
    energy: [f64; 2],
    x2: f64,
    peak: f64,
    samples: u64,
    contact_samples: u64,
    block_start: f64,
    block_energy: f64,
    block_means: Vec<f64>,
}

impl ResponseAccumulator {
    /// `contact_threshold` is the displacement counted as stopper contact;
    /// pass `f64::INFINITY` to disable the count.
    pub fn new(loads: LoadNetwork, settle: f64, contact_threshold: f64) -> Self {
        Self {
            loads,
            settle,
            contact_threshold,
            block_length: None,
            prev: None,
            first_t: f64::NAN,
            energy: [0.0; 2],
            x2: 0.0,
            peak: 0.0,
            samples: 0,
            contact_samples: 0,
            block_start: f64::NAN,
            block_energy: 0.0,
            block_means: Vec::new(),
        }
    }

    /// Enables block means of this length for the standard error estimate.
    pub fn with_block_length(mut self, block_length: f64) -> Self {
        self.block_length = Some(block_length);
        self
    }

    fn port_powers(&self, s: &Sample) -> [f64; 2] {
        [
            s.vn1 * s.vn1 / self.loads.resistance1,
            s.vn2 * s.vn2 / self.loads.resistance2,
        ]
    }

    pub fn push(&mut self, s: &Sample) {
        // tolerate a few ulps of grid jitter at the window start
        if s.t < self.settle - 1e-12 * self.settle.abs() {
            return;
        }
        self.samples += 1;
        self.peak = self.peak.max(s.x.abs());
        if s.x.abs() > self.contact_threshold {
            self.contact_samples += 1;
        }
        match self.prev {
            None => {
                self.first_t = s.t;
                self.block_start = s.t;
            }
            Some(prev) => {
                let dt = s.t - prev.t;
                let (p0, p1) = (self.port_powers(&prev), self.port_powers(s));
                let mut step_energy = 0.0;
                for i in 0..2 {
                    let e = 0.5 * dt * (p0[i] + p1[i]);
                    self.energy[i] += e;
                    step_energy += e;
                }
                self.x2 += 0.5 * dt * (prev.x * prev.x + s.x * s.x);
                if let Some(len) = self.block_length {
                    self.block_energy += step_energy;
                    if s.t - self.block_start >= len * (1.0 - 1e-9) {
                        self.block_means.push(self.block_energy / (s.t - self.block_start));
                        self.block_start = s.t;
                        self.block_energy = 0.0;
                    }
                }
            }
        }
        self.prev = Some(*s);
    }

    pub fn finish(self) -> Result<PowerReport> {
        let Some(last) = self.prev else {
            return Err(Error::WindowEmpty {
                settle: self.settle,
            });
        };
        let window = last.t - self.first_t;
        if self.samples < 2 || !(window > 0.0) {
            return Err(Error::WindowEmpty {
                settle: self.settle,
            });
        }
        let port_power = self.energy.map(|e| e / window);
        let power_std_error = (self.block_means.len() >= 2).then(|| {
            let n = self.block_means.len() as f64;
            let mean = self.block_means.iter().sum::<f64>() / n;
            let var = self.block_means.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        });
        Ok(PowerReport {
            average_power: port_power[0] + port_power[1],
            port_power,
            mean_square_displacement: self.x2 / window,
            peak_displacement: self.peak,
            contact_fraction: self.contact_samples as f64 / self.samples as f64,
            power_std_error,
            settle_discard: self.settle,
            observation_window: window,
        })
    }
}

/// Average load power and mean-square displacement after `settle_discard`.
pub fn average_power(
    traj: &Trajectory,
    loads: &LoadNetwork,
    settle_discard: f64,
) -> Result<PowerReport> {
    let mut acc = ResponseAccumulator::new(*loads, settle_discard, f64::INFINITY);
    traj.samples.iter().for_each(|s| acc.push(s));
    acc.finish()
}

/// `(x, v)` pairs in time order.
pub fn phase_space_export(traj: &Trajectory) -> Vec<(f64, f64)> {
    traj.samples.iter().map(|s| (s.x, s.v)).collect()
}

/// Terms of the energy balance
/// `input + source = stored_change + mechanical_loss + electrical_loss`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    /// Work of the inertial force, `∫ m a v dt`.
    pub input_work: f64,
    /// Work delivered by the electret source.
    pub source_work: f64,
    pub stored_change: f64,
    pub mechanical_loss: f64,
    pub electrical_loss: f64,
    pub residual: f64,
    /// `|residual|` over the gross energy input.
    pub relative_residual: f64,
}

/// Streaming energy-balance audit.
#[derive(Debug, Clone)]
pub struct EnergyAudit<'a> {
    variant: ModelVariant,
    params: &'a DeviceParams,
    loads: LoadNetwork,
    first: Option<Sample>,
    prev: Option<Sample>,
    input: f64,
    gross_input: f64,
    mech_loss: f64,
    elec_loss: f64,
}

impl<'a> EnergyAudit<'a> {
    pub fn new(variant: ModelVariant, params: &'a DeviceParams, loads: &LoadNetwork) -> Self {
        Self {
            variant,
            params,
            loads: *loads,
            first: None,
            prev: None,
            input: 0.0,
            gross_input: 0.0,
            mech_loss: 0.0,
            elec_loss: 0.0,
        }
    }

    /// Mechanical, electrostatic and parasitic energy held by the device.
    pub fn stored_energy(&self, s: &Sample) -> f64 {
        let p = self.params;
        let m = &p.mechanical;
        let ce = p.electret.capacitance;
        let parasitic = 0.5 * self.loads.parasitic * (s.vn1 * s.vn1 + s.vn2 * s.vn2);
        let kinetic = 0.5 * m.mass * s.v * s.v + 0.5 * m.spring_constant * s.x * s.x;
        let q = s.q1 + s.q2;
        let electrical = match self.variant {
            ModelVariant::Nonlinear => {
                let (c1, c2) = p.capacitance_pair(s.x);
                p.stopper_energy(s.x) + s.q1 * s.q1 / (2.0 * c1) + s.q2 * s.q2 / (2.0 * c2)
            }
            ModelVariant::Linear => {
                let lin = p.linearize();
                lin.coupling1 * s.x * s.q1
                    + lin.coupling2 * s.x * s.q2
                    + (s.q1 * s.q1 + s.q2 * s.q2) / (2.0 * lin.nominal_cap)
            }
        };
        kinetic + electrical + q * q / (2.0 * ce) + parasitic
    }

    pub fn push(&mut self, s: &Sample) {
        if let Some(prev) = self.prev {
            let dt = s.t - prev.t;
            let m = &self.params.mechanical;
            let trap = |f: &dyn Fn(&Sample) -> f64| 0.5 * dt * (f(&prev) + f(s));
            let input = trap(&|q: &Sample| m.mass * q.a * q.v);
            self.input += input;
            self.gross_input += trap(&|q: &Sample| (m.mass * q.a * q.v).abs());
            self.mech_loss += trap(&|q: &Sample| m.damping * q.v * q.v);
            let (r1, r2) = (self.loads.resistance1, self.loads.resistance2);
            self.elec_loss += trap(&|q: &Sample| q.vn1 * q.vn1 / r1 + q.vn2 * q.vn2 / r2);
        } else {
            self.first = Some(*s);
        }
        self.prev = Some(*s);
    }

    pub fn finish(&self) -> EnergyReport {
        let (Some(first), Some(last)) = (self.first, self.prev) else {
            return EnergyReport {
                input_work: 0.0,
                source_work: 0.0,
                stored_change: 0.0,
                mechanical_loss: 0.0,
                electrical_loss: 0.0,
                residual: 0.0,
                relative_residual: 0.0,
            };
        };
        let source_work = match self.variant {
            ModelVariant::Nonlinear => {
                -self.params.electret.voltage * ((last.q1 + last.q2) - (first.q1 + first.q2))
            }
            ModelVariant::Linear => 0.0,
        };
        let stored_change = self.stored_energy(&last) - self.stored_energy(&first);
        let residual =
            self.input + source_work - stored_change - self.mech_loss - self.elec_loss;
        let mut scale = self.gross_input + source_work.abs();
        if scale == 0.0 {
            scale = stored_change.abs() + self.mech_loss + self.elec_loss;
        }
        let relative_residual = if scale == 0.0 {
            0.0
        } else {
            residual.abs() / scale
        };
        EnergyReport {
            input_work: self.input,
            source_work,
            stored_change,
            mechanical_loss: self.mech_loss,
            electrical_loss: self.elec_loss,
            residual,
            relative_residual,
        }
    }
}

/// Energy balance over a whole trajectory. The base acceleration is read
/// from the samples, which carry the excitation value at each instant.
pub fn energy_audit(traj: &Trajectory, params: &DeviceParams, loads: &LoadNetwork) -> EnergyReport {
    let mut audit = EnergyAudit::new(traj.variant, params, loads);
    traj.samples.iter().for_each(|s| audit.push(s));
    audit.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowShape {
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchConfig {
    pub segment_length: usize,
    pub overlap_fraction: f64,
    pub window: WindowShape,
}

impl Default for WelchConfig {
    fn default() -> Self {
        Self {
            segment_length: 4096,
            overlap_fraction: 0.5,
            window: WindowShape::Hann,
        }
    }
}

impl WelchConfig {
    /// Default settings with the segment scaled to span ~0.41 s at `rate`
    /// (4096 samples at 10 kHz), rounded to a power of two.
    pub fn for_rate(rate: f64) -> Self {
        let target = (0.4096 * rate).max(64.0);
        let segment_length = 1usize << (target.log2().round() as u32);
        Self {
            segment_length: segment_length.max(64),
            ..Self::default()
        }
    }

    pub fn hop(&self) -> usize {
        ((self.segment_length as f64) * (1.0 - self.overlap_fraction))
            .round()
            .max(1.0) as usize
    }

    fn validate(&self) -> Result<()> {
        if self.segment_length < 64 || !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::Validation(format!(
                "Welch segment length must be >= 64 and overlap in [0, 1): {self:?}"
            )));
        }
        Ok(())
    }

    fn window_values(&self) -> Vec<f64> {
        let n = self.segment_length as f64;
        match self.window {
            WindowShape::Hann => (0..self.segment_length)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n).cos())
                .collect(),
        }
    }
}

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub frequencies: Vec<f64>,
    pub density: Vec<f64>,
    pub segments: usize,
}

impl Psd {
    pub fn resolution(&self) -> f64 {
        self.frequencies.get(1).copied().unwrap_or(0.0)
    }

    /// Rectangle-rule integral of the density over `[lo, hi]`.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        let df = self.resolution();
        self.frequencies
            .iter()
            .zip(&self.density)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, p)| p * df)
            .sum()
    }

    pub fn total_power(&self) -> f64 {
        self.band_power(0.0, f64::INFINITY)
    }
}

/// Welch estimate with per-segment mean removal. Normalized so that the
/// integral over frequency equals the variance of the series.
pub fn welch_psd(series: &[f64], rate: f64, config: &WelchConfig) -> Result<Psd> {
    config.validate()?;
    let n = config.segment_length;
    if series.len() < 2 * n {
        return Err(Error::TooShort {
            len: series.len(),
            needed: 2 * n,
        });
    }
    let hop = config.hop();
    let window = config.window_values();
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let bins = n / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut segments = 0;
    let mut start = 0;
    while start + n <= series.len() {
        let seg = &series[start..start + n];
        let mean = seg.iter().sum::<f64>() / n as f64;
        for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += hop;
    }
    let scale = 1.0 / (rate * window_power * segments as f64);
    let density = acc
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let one_sided = if k == 0 || (n.is_multiple_of(2) && k == n / 2) { 1.0 } else { 2.0 };
            a * scale * one_sided
        })
        .collect();
    let frequencies = (0..bins).map(|k| k as f64 * rate / n as f64).collect();
    Ok(Psd {
        frequencies,
        density,
        segments,
    })
}

/// Writes the trajectory CSV; `comment` lines are prefixed with `# `.
pub fn write_trajectory_csv(
    traj: &Trajectory,
    path: impl AsRef<Path>,
    comment: Option<&str>,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(traj.samples.len() * 180 + 128);
    if let Some(c) = comment {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for s in &traj.samples {
        let _ = writeln!(
            out,
            "{:.14e},{:.14e},{:.14e},{:.14e},{:.14e},{:.14e},{:.14e},{:.14e},{:.14e}",
            s.t, s.x, s.v, s.q1, s.q2, s.vn1, s.vn2, s.a, s.p
        );
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
