//! Base acceleration signals.
//!
//! Broadband noise is generated by [`NOISE_ALGORITHM`]: a ChaCha20 stream
//! (`rand_chacha::ChaCha20Rng::seed_from_u64`) yields 64-bit words; the top
//! 53 bits of two consecutive words give uniforms `u1, u2` in `[0, 1)`, and
//! the Box–Muller pair `r cos θ, r sin θ` with `r = sqrt(-2 ln(1 - u1))`,
//! `θ = 2π u2` fills two consecutive samples. The unit-variance sequence is
//! then scaled so its one-sided PSD equals the requested level, and, when the
//! bandwidth is below Nyquist, band-limited by a zero-phase FFT brick-wall.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand_chacha::ChaCha20Rng;
use rand_core::{Rng, SeedableRng};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::analysis::{welch_psd, WelchConfig};
use crate::error::{Error, Result};
use crate::model::STANDARD_GRAVITY;

/// Name and version of the noise synthesis procedure.
pub const NOISE_ALGORITHM: &str = "chacha20-box-muller/1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineSpec {
    /// Peak acceleration [m/s²].
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl SineSpec {
    pub fn from_g(amplitude_g: f64, frequency: f64) -> Self {
        Self {
            amplitude: amplitude_g * STANDARD_GRAVITY,
            frequency,
            phase: 0.0,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (2.0 * std::f64::consts::PI * self.frequency * t + self.phase).sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// One-sided acceleration PSD [g²/Hz].
    pub psd_level: f64,
    pub bandwidth: f64,
    pub sample_rate: f64,
    pub seed: u64,
    pub duration: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            psd_level: 0.015,
            bandwidth: 5_000.0,
            sample_rate: 10_000.0,
            seed: 0,
            duration: 10.0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.sample_rate >= 2.0 * self.bandwidth) {
            return Err(Error::InvalidSpec(format!(
                "sample rate {} Hz must be at least twice the bandwidth {} Hz",
                self.sample_rate, self.bandwidth
            )));
        }
        if !(self.psd_level >= 0.0 && self.psd_level.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "PSD level must be >= 0, got {}",
                self.psd_level
            )));
        }
        if !(self.duration > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "duration must be > 0, got {}",
                self.duration
            )));
        }
        Ok(())
    }

    /// PSD level in (m/s²)²/Hz.
    pub fn psd_si(&self) -> f64 {
        self.psd_level * STANDARD_GRAVITY * STANDARD_GRAVITY
    }

    /// Number of samples covering `[0, duration]`.
    pub fn sample_count(&self) -> usize {
        (self.duration * self.sample_rate).ceil() as usize + 1
    }
}

/// Uniformly sampled acceleration trace [m/s²].
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    pub start_time: f64,
    pub sample_rate: f64,
    pub samples: Vec<f64>,
}

impl SampledSignal {
    pub fn new(start_time: f64, sample_rate: f64, samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySignal);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Validation(format!("sample {i} is not finite")));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::Validation(format!("sample rate must be > 0, got {sample_rate}")));
        }
        Ok(Self {
            start_time,
            sample_rate,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn time_at(&self, index: usize) -> f64 {
        self.start_time + index as f64 / self.sample_rate
    }

    pub fn end_time(&self) -> f64 {
        self.time_at(self.samples.len() - 1)
    }

    /// Linear interpolation between neighbouring samples.
    pub fn interpolate(&self, t: f64) -> Result<f64> {
        let end = self.end_time();
        // sub-ulp slack at the ends, so `end_time()` itself is always valid
        let slack = 1e-12 * end.abs().max(self.dt());
        if !(t >= self.start_time - slack && t <= end + slack) {
            return Err(Error::OutOfRange {
                t,
                start: self.start_time,
                end,
            });
        }
        Ok(self.interpolate_clamped(t))
    }

    pub(crate) fn interpolate_clamped(&self, t: f64) -> f64 {
        let pos = (t - self.start_time) * self.sample_rate;
        let last = self.samples.len() - 1;
        if pos <= 0.0 || last == 0 {
            return self.samples[0];
        }
        if pos >= last as f64 {
            return self.samples[last];
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        if frac == 0.0 {
            return self.samples[i];
        }
        let (a, b) = (self.samples[i], self.samples[i + 1]);
        a + (b - a) * frac
    }

    /// First sample instant strictly after `t`, if any.
    pub(crate) fn next_sample_after(&self, t: f64) -> Option<f64> {
        let pos = (t - self.start_time) * self.sample_rate;
        let mut i = if pos < 0.0 { 0 } else { pos.floor() as usize + 1 };
        while i < self.samples.len() {
            let ti = self.time_at(i);
            if ti > t + 1e-9 * self.dt() {
                return Some(ti);
            }
            i += 1;
        }
        None
    }

    /// Writes the signal CSV (`t_s,a_mps2` header).
    pub fn write_csv(&self, path: impl AsRef<Path>, comment: Option<&str>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::with_capacity(self.samples.len() * 48 + 64);
        if let Some(c) = comment {
            for line in c.lines() {
                let _ = writeln!(out, "# {line}");
            }
        }
        out.push_str("t_s,a_mps2\n");
        for (i, a) in self.samples.iter().enumerate() {
            let _ = writeln!(out, "{:.16e},{:.16e}", self.time_at(i), a);
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Reads the signal CSV. The header selects the acceleration unit:
    /// `t_s,a_mps2` or `t_s,a_g`. Lines starting with `#` are skipped.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };

        let mut scale = None;
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some(unit_scale) = scale else {
                let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                scale = Some(match cols.as_slice() {
                    ["t_s", "a_mps2"] => 1.0,
                    ["t_s", "a_g"] => STANDARD_GRAVITY,
                    _ => {
                        return Err(parse_err(
                            line_no,
                            format!("expected header `t_s,a_mps2` or `t_s,a_g`, got `{line}`"),
                        ))
                    }
                });
                continue;
            };
            let mut fields = line.split(',');
            let (Some(t), Some(a), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(parse_err(line_no, format!("expected two columns, got `{line}`")));
            };
            let t: f64 = t
                .trim()
                .parse()
                .map_err(|e| parse_err(line_no, format!("bad time `{t}`: {e}")))?;
            let a: f64 = a
                .trim()
                .parse()
                .map_err(|e| parse_err(line_no, format!("bad acceleration `{a}`: {e}")))?;
            if !t.is_finite() || !a.is_finite() {
                return Err(parse_err(line_no, "non-finite value".into()));
            }
            times.push((t, line_no));
            samples.push(a * unit_scale);
        }
        if samples.is_empty() {
            return Err(Error::EmptySignal);
        }
        if samples.len() == 1 {
            // a single sample carries no rate; treat it as a constant at 1 Hz
            return SampledSignal::new(times[0].0, 1.0, samples);
        }
        let start = times[0].0;
        let dt = times[1].0 - start;
        if !(dt > 0.0) {
            return Err(parse_err(times[1].1, "time column must increase".into()));
        }
        for (i, &(t, line_no)) in times.iter().enumerate().skip(2) {
            let expected = start + i as f64 * dt;
            if (t - expected).abs() > 1e-9 * (i as f64 * dt).max(t.abs()) {
                return Err(parse_err(
                    line_no,
                    format!("non-uniform spacing: t = {t}, expected {expected}"),
                ));
            }
        }
        let rate = 1.0 / dt;
        SampledSignal::new(start, rate, samples)
    }
}

/// An acceleration source the integrator can evaluate at any time.
#[derive(Debug, Clone, PartialEq)]
pub enum Excitation {
    Sine(SineSpec),
    Sampled(SampledSignal),
}

impl Excitation {
    pub fn none() -> Self {
        Excitation::Sine(SineSpec {
            amplitude: 0.0,
            frequency: 1.0,
            phase: 0.0,
        })
    }

    /// Acceleration [m/s²]; sampled signals hold their end values outside
    /// their support (use [`Excitation::covers`] to check beforehand).
    pub fn acceleration(&self, t: f64) -> f64 {
        match self {
            Excitation::Sine(s) => s.eval(t),
            Excitation::Sampled(s) => s.interpolate_clamped(t),
        }
    }

    pub fn covers(&self, t0: f64, t1: f64) -> Result<()> {
        match self {
            Excitation::Sine(_) => Ok(()),
            Excitation::Sampled(s) => {
                s.interpolate(t0)?;
                s.interpolate(t1)?;
                Ok(())
            }
        }
    }

    /// Next time after `t` at which the signal has a kink.
    pub fn next_breakpoint(&self, t: f64) -> Option<f64> {
        match self {
            Excitation::Sine(_) => None,
            Excitation::Sampled(s) => s.next_sample_after(t),
        }
    }

    /// A copy with every sample (or the amplitude) negated.
    pub fn negated(&self) -> Self {
        match self {
            Excitation::Sine(s) => Excitation::Sine(SineSpec {
                amplitude: -s.amplitude,
                ..*s
            }),
            Excitation::Sampled(s) => Excitation::Sampled(SampledSignal {
                samples: s.samples.iter().map(|a| -a).collect(),
                ..s.clone()
            }),
        }
    }
}

/// Unit-variance Gaussian samples from [`NOISE_ALGORITHM`].
pub fn unit_normals(seed: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut uniform = move || (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let mut out = Vec::with_capacity(count + 1);
    while out.len() < count {
        let u1 = uniform();
        let u2 = uniform();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        out.push(r * theta.cos());
        out.push(r * theta.sin());
    }
    out.truncate(count);
    out
}

/// Gaussian noise with a flat one-sided PSD of `spec.psd_level` up to
/// `spec.bandwidth`, starting at `t = 0`.
pub fn noise_generate(spec: &NoiseSpec) -> Result<SampledSignal> {
    spec.validate()?;
    let n = spec.sample_count();
    let sigma = (spec.psd_si() * spec.sample_rate / 2.0).sqrt();
    let mut samples = unit_normals(spec.seed, n);
    if spec.bandwidth < spec.sample_rate / 2.0 {
        brick_wall_lowpass(&mut samples, spec.sample_rate, spec.bandwidth);
    }
    for s in &mut samples {
        *s *= sigma;
    }
    SampledSignal::new(0.0, spec.sample_rate, samples)
}

fn brick_wall_lowpass(samples: &mut [f64], sample_rate: f64, cutoff: f64) {
    let n = samples.len();
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&s| Complex::new(s, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let df = sample_rate / n as f64;
    for (k, bin) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * df;
        if f > cutoff {
            *bin = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let norm = 1.0 / n as f64;
    for (s, b) in samples.iter_mut().zip(&buf) {
        *s = b.re * norm;
    }
}

/// Outcome of [`psd_verify`]. PSD values are in g²/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdReport {
    pub passband_mean_psd: f64,
    /// Largest deviation, in dB, of a band-averaged PSD from the passband mean.
    pub flatness_deviation_db: f64,
    pub mean_ok: bool,
    pub flat_ok: bool,
}

impl PsdReport {
    pub fn passes(&self) -> bool {
        self.mean_ok && self.flat_ok
    }
}

/// Number of contiguous sub-bands averaged for the flatness check.
const FLATNESS_BANDS: usize = 16;

/// Checks that a generated signal has the flat PSD its spec promises.
///
/// The passband is `(f_max/50, 0.9 f_max)`. Its mean must lie within ±10% of
/// the target and each of 16 equal-width sub-band averages within ±1 dB of the
/// passband mean. Needs at least 20 Welch segments.
pub fn psd_verify(signal: &SampledSignal, spec: &NoiseSpec) -> Result<PsdReport> {
    let config = WelchConfig::for_rate(signal.sample_rate);
    let hop = config.hop();
    let needed = config.segment_length + 19 * hop;
    if signal.len() < needed {
        return Err(Error::TooShort {
            len: signal.len(),
            needed,
        });
    }
    let psd = welch_psd(&signal.samples, signal.sample_rate, &config)?;
    let g2 = STANDARD_GRAVITY * STANDARD_GRAVITY;
    let lo = spec.bandwidth / 50.0;
    let hi = 0.9 * spec.bandwidth;
    let band: Vec<f64> = psd
        .frequencies
        .iter()
        .zip(&psd.density)
        .filter(|(f, _)| **f > lo && **f < hi)
        .map(|(_, p)| p / g2)
        .collect();
    let mean = band.iter().sum::<f64>() / band.len() as f64;
    let mean_ok = (mean - spec.psd_level).abs() <= 0.10 * spec.psd_level && mean > 0.0;

    let chunk = band.len().div_ceil(FLATNESS_BANDS).max(1);
    let mut worst = 0.0f64;
    for part in band.chunks(chunk) {
        let m = part.iter().sum::<f64>() / part.len() as f64;
        let db = 10.0 * (m / mean).log10();
        worst = worst.max(if db.is_finite() { db.abs() } else { f64::INFINITY });
    }
    if !(mean > 0.0) {
        worst = f64::INFINITY;
    }
    Ok(PsdReport {
        passband_mean_psd: mean,
        flatness_deviation_db: worst,
        mean_ok,
        flat_ok: worst <= 1.0,
    })
}
