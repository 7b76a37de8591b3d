//! Run configuration in a flat `section.key_unit = value` text format.
//!
//! ```text
//! # reference device, 1 g drive at the linear optimum
//! load.R_MOhm = 28
//! excitation.kind = sine
//! excitation.amplitude_g = 1
//! excitation.frequency_Hz = 1190
//! ```
//!
//! Every key not given keeps the reference-design default. The unit is part
//! of the key, so `stopper.x_s_um = 14` means 14 µm. Only
//! `excitation.kind` is mandatory.
//!
//! | key | unit | meaning |
//! |-----|------|---------|
//! | `device.l_f_um`, `device.w_f_um`, `device.t_f_um` | µm | finger length, width, thickness |
//! | `device.g0_um`, `device.x0_um` | µm | finger gap, nominal overlap |
//! | `device.N_g` | count | finger pairs |
//! | `device.eps_Fpm` | F/m | permittivity |
//! | `device.model` | `linear`/`nonlinear` | model variant (default nonlinear) |
//! | `mechanical.m_mg` | mg | proof mass |
//! | `mechanical.k_Npm` | N/m | suspension stiffness |
//! | `mechanical.b_Nspm` | N·s/m | damping |
//! | `mechanical.eta_Pas`, `mechanical.A_m_mm2`, `mechanical.d_um` | | Couette damping inputs (all three, replaces `b`) |
//! | `electret.V_e_V`, `electret.C_e_pF` | V, pF | electret source |
//! | `stopper.x_s_um`, `stopper.k_s_Npm` | µm, N/m | end stops |
//! | `clamp.x_c_um` | µm | capacitance clamp displacement |
//! | `load.R_MOhm` | MΩ | both load resistors |
//! | `load.R1_MOhm`, `load.R2_MOhm` | MΩ | individual load resistors |
//! | `load.C_p_pF` | pF | parasitic capacitance per node |
//! | `excitation.kind` | `sine`/`noise`/`file` | source type |
//! | `excitation.amplitude_g`, `excitation.amplitude_mps2` | g, m/s² | sine peak |
//! | `excitation.frequency_Hz`, `excitation.phase_rad` | Hz, rad | sine |
//! | `excitation.psd_g2Hz`, `excitation.f_max_Hz`, `excitation.f_s_Hz`, `excitation.seed` | | noise |
//! | `excitation.path` | | signal CSV for `file` |
//! | `integrator.rtol` | | relative tolerance |
//! | `integrator.atol_x_m`, `integrator.atol_v_mps`, `integrator.atol_q_C` | | absolute tolerances |
//! | `integrator.max_step_s`, `integrator.event_tol_m`, `integrator.sample_interval_s` | | stepping |
//! | `analysis.settle_s`, `analysis.duration_s`, `analysis.block_s` | s | averaging window |
//! | `analysis.output` | | trajectory CSV path |

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::dynamics::{IntegratorConfig, ModelVariant};
use crate::error::{Error, Result};
use crate::excitation::{noise_generate, Excitation, NoiseSpec, SampledSignal, SineSpec};
use crate::model::{
    couette_damping, CapClamp, DampingGeometry, DeviceParams, LoadNetwork, STANDARD_GRAVITY,
};

/// Observation time after the settle window for sinusoidal runs.
pub const SINE_OBSERVATION: f64 = 0.1;
/// Observation time after the settle window for broadband runs.
pub const NOISE_OBSERVATION: f64 = 60.0;

#[derive(Debug, Clone, PartialEq)]
pub enum ExcitationConfig {
    Sine(SineSpec),
    /// `duration` is ignored; the run duration is used instead.
    Noise(NoiseSpec),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub device: DeviceParams,
    pub loads: LoadNetwork,
    pub variant: ModelVariant,
    pub excitation: ExcitationConfig,
    pub integrator: IntegratorConfig,
    pub settle: f64,
    pub duration: f64,
    /// Block length for the standard error of broadband power averages.
    pub block_length: Option<f64>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    /// Reference device and loads with the default windows for `excitation`.
    pub fn new(variant: ModelVariant, excitation: ExcitationConfig) -> Self {
        let device = DeviceParams::default();
        let settle = default_settle(&device);
        let mut cfg = Self {
            device,
            loads: LoadNetwork::default(),
            variant,
            excitation,
            integrator: IntegratorConfig::default(),
            settle,
            duration: 0.0,
            block_length: None,
            output: None,
        };
        cfg.duration = cfg.default_duration();
        cfg.block_length = cfg.default_block_length();
        cfg
    }

    fn default_duration(&self) -> f64 {
        match self.excitation {
            ExcitationConfig::Noise(_) => self.settle + NOISE_OBSERVATION,
            _ => self.settle + SINE_OBSERVATION,
        }
    }

    fn default_block_length(&self) -> Option<f64> {
        matches!(self.excitation, ExcitationConfig::Noise(_)).then_some(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        self.loads.validate()?;
        self.integrator.validate()?;
        if !(self.duration > self.settle && self.settle >= 0.0) {
            return Err(Error::Validation(format!(
                "duration {} s must exceed settle time {} s",
                self.duration, self.settle
            )));
        }
        match &self.excitation {
            ExcitationConfig::Sine(s) if !(s.frequency > 0.0) => Err(Error::Validation(format!(
                "sine frequency must be > 0, got {}",
                s.frequency
            ))),
            ExcitationConfig::Noise(n) => NoiseSpec {
                duration: self.duration,
                ..*n
            }
            .validate(),
            _ => Ok(()),
        }
    }

    /// Seed of the noise source, if any.
    pub fn seed(&self) -> Option<u64> {
        match &self.excitation {
            ExcitationConfig::Noise(n) => Some(n.seed),
            _ => None,
        }
    }

    /// Builds the acceleration source covering `[0, duration]`.
    pub fn build_excitation(&self) -> Result<Excitation> {
        Ok(match &self.excitation {
            ExcitationConfig::Sine(s) => Excitation::Sine(*s),
            ExcitationConfig::Noise(n) => Excitation::Sampled(noise_generate(&NoiseSpec {
                duration: self.duration,
                ..*n
            })?),
            ExcitationConfig::File(path) => Excitation::Sampled(SampledSignal::from_csv(path)?),
        })
    }

    /// Stable digest of every setting, used to label output files.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(format!("{self:?}").as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Ten amplitude decay times of the free mechanical ring-down.
pub fn default_settle(device: &DeviceParams) -> f64 {
    10.0 * device.ring_down_time()
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

#[derive(Default)]
struct Pending {
    kind: Option<(String, usize)>,
    sine: SineSpec,
    noise: NoiseSpec,
    file: Option<PathBuf>,
    couette: [Option<f64>; 3],
    x_c: Option<f64>,
    settle: Option<f64>,
    duration: Option<f64>,
    block: Option<f64>,
}

impl Default for SineSpec {
    fn default() -> Self {
        SineSpec::from_g(1.0, 1190.0)
    }
}

/// Parses configuration text; `origin` is used for error messages and to
/// resolve relative signal paths.
pub fn parse_config(text: &str, origin: &Path) -> Result<RunConfig> {
    let mut device = DeviceParams::default();
    let mut loads = LoadNetwork::default();
    let mut variant = ModelVariant::Nonlinear;
    let mut integrator = IntegratorConfig::default();
    let mut output = None;
    let mut p = Pending::default();
    let base_dir = origin.parent().unwrap_or_else(|| Path::new("."));

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: line_no,
                message: format!("expected `section.key = value`, got `{line}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        let key_err = |message: String| Error::ConfigKey {
            key: key.to_string(),
            line: line_no,
            message,
        };
        let num = || -> Result<f64> {
            let v: f64 = value
                .parse()
                .map_err(|e| key_err(format!("`{value}` is not a number: {e}")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(key_err(format!("`{value}` is not finite")))
            }
        };
        const UM: f64 = 1e-6;
        const PF: f64 = 1e-12;
        const MOHM: f64 = 1e6;
        let g = &mut device.geometry;
        match key {
            "device.l_f_um" => g.finger_length = num()? * UM,
            "device.w_f_um" => g.finger_width = num()? * UM,
            "device.t_f_um" => g.finger_thickness = num()? * UM,
            "device.g0_um" => g.gap = num()? * UM,
            "device.x0_um" => g.nominal_overlap = num()? * UM,
            "device.eps_Fpm" => g.permittivity = num()?,
            "device.N_g" => {
                g.finger_pairs = value
                    .parse()
                    .map_err(|e| key_err(format!("`{value}` is not a positive integer: {e}")))?
            }
            "device.model" => variant = value.parse().map_err(key_err)?,
            "mechanical.m_mg" => device.mechanical.mass = num()? * 1e-6,
            "mechanical.k_Npm" => device.mechanical.spring_constant = num()?,
            "mechanical.b_Nspm" => device.mechanical.damping = num()?,
            "mechanical.eta_Pas" => p.couette[0] = Some(num()?),
            "mechanical.A_m_mm2" => p.couette[1] = Some(num()? * 1e-6),
            "mechanical.d_um" => p.couette[2] = Some(num()? * UM),
            "electret.V_e_V" => device.electret.voltage = num()?,
            "electret.C_e_pF" => device.electret.capacitance = num()? * PF,
            "stopper.x_s_um" => device.stopper.engage_displacement = num()? * UM,
            "stopper.k_s_Npm" => device.stopper.stiffness = num()?,
            "clamp.x_c_um" => p.x_c = Some(num()? * UM),
            "load.R_MOhm" => {
                let r = num()? * MOHM;
                loads.resistance1 = r;
                loads.resistance2 = r;
            }
            "load.R1_MOhm" => loads.resistance1 = num()? * MOHM,
            "load.R2_MOhm" => loads.resistance2 = num()? * MOHM,
            "load.C_p_pF" => loads.parasitic = num()? * PF,
            "excitation.kind" => p.kind = Some((value.to_ascii_lowercase(), line_no)),
            "excitation.amplitude_g" => p.sine.amplitude = num()? * STANDARD_GRAVITY,
            "excitation.amplitude_mps2" => p.sine.amplitude = num()?,
            "excitation.frequency_Hz" => p.sine.frequency = num()?,
            "excitation.phase_rad" => p.sine.phase = num()?,
            "excitation.psd_g2Hz" => p.noise.psd_level = num()?,
            "excitation.f_max_Hz" => p.noise.bandwidth = num()?,
            "excitation.f_s_Hz" => p.noise.sample_rate = num()?,
            "excitation.seed" => {
                p.noise.seed = value
                    .parse()
                    .map_err(|e| key_err(format!("`{value}` is not a u64 seed: {e}")))?
            }
            "excitation.path" => {
                let path = PathBuf::from(value);
                p.file = Some(if path.is_relative() {
                    base_dir.join(path)
                } else {
                    path
                });
            }
            "integrator.rtol" => integrator.rel_tol = num()?,
            "integrator.atol_x_m" => integrator.abs_tol[0] = num()?,
            "integrator.atol_v_mps" => integrator.abs_tol[1] = num()?,
            "integrator.atol_q_C" => {
                let a = num()?;
                integrator.abs_tol[2] = a;
                integrator.abs_tol[3] = a;
            }
            "integrator.max_step_s" => integrator.max_step = num()?,
            "integrator.event_tol_m" => integrator.event_tol = num()?,
            "integrator.sample_interval_s" => integrator.sample_interval = num()?,
            "analysis.settle_s" => p.settle = Some(num()?),
            "analysis.duration_s" => p.duration = Some(num()?),
            "analysis.block_s" => p.block = Some(num()?),
            "analysis.output" => output = Some(PathBuf::from(value)),
            _ => return Err(key_err("unknown key".into())),
        }
    }

    match p.couette {
        [Some(viscosity), Some(mass_area), Some(cap_gap)] => {
            let flow = DampingGeometry {
                mass_area,
                cap_gap,
                viscosity,
            };
            device.mechanical.damping = couette_damping(&flow, &device.geometry);
        }
        [None, None, None] => {}
        _ => {
            return Err(Error::Validation(
                "Couette damping needs all of mechanical.eta_Pas, mechanical.A_m_mm2, mechanical.d_um"
                    .into(),
            ))
        }
    }
    let x_c = p.x_c.unwrap_or(device.clamp.clamp_displacement);
    device.clamp = CapClamp::continuous(x_c, &device.geometry);

    let Some((kind, kind_line)) = p.kind else {
        return Err(Error::Validation(
            "missing excitation block: `excitation.kind` must be set to sine, noise or file".into(),
        ));
    };
    let excitation = match kind.as_str() {
        "sine" => ExcitationConfig::Sine(p.sine),
        "noise" => ExcitationConfig::Noise(p.noise),
        "file" => ExcitationConfig::File(p.file.ok_or_else(|| {
            Error::Validation("excitation.kind = file requires excitation.path".into())
        })?),
        other => {
            return Err(Error::ConfigKey {
                key: "excitation.kind".into(),
                line: kind_line,
                message: format!("unknown excitation kind `{other}`"),
            })
        }
    };

    let mut cfg = RunConfig::new(variant, excitation);
    cfg.device = device;
    cfg.loads = loads;
    cfg.integrator = integrator;
    cfg.output = output;
    cfg.settle = p.settle.unwrap_or_else(|| default_settle(&cfg.device));
    cfg.duration = match p.duration {
        Some(d) => d,
        None => match &cfg.excitation {
            ExcitationConfig::File(path) => SampledSignal::from_csv(path)?.end_time(),
            _ => cfg.default_duration(),
        },
    };
    cfg.block_length = p.block.or_else(|| cfg.default_block_length());
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        parse_config(text, Path::new("test.cfg"))
    }

    #[test]
    fn empty_file_requires_excitation() {
        let err = parse("").unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("excitation")), "{err}");
    }

    #[test]
    fn defaults_are_reference_design() {
        let cfg = parse("excitation.kind = sine").unwrap();
        assert_eq!(cfg.device, DeviceParams::default());
        assert_eq!(cfg.loads, LoadNetwork::symmetric(28e6));
        assert_eq!(cfg.variant, ModelVariant::Nonlinear);
        assert!((cfg.settle - 0.1368).abs() < 1e-3);
        assert!((cfg.duration - cfg.settle - SINE_OBSERVATION).abs() < 1e-12);
    }

    #[test]
    fn unit_suffixes_are_applied() {
        let cfg = parse(
            "stopper.x_s_um = 14\nload.R_MOhm = 28\nload.C_p_pF = 1.94\nexcitation.kind = sine\nexcitation.amplitude_g = 2\n",
        )
        .unwrap();
        assert!((cfg.device.stopper.engage_displacement - 14e-6).abs() < 1e-18);
        assert_eq!(cfg.loads.resistance1, 28e6);
        assert_eq!(cfg.loads.resistance2, 28e6);
        assert!((cfg.loads.parasitic - 1.94e-12).abs() < 1e-24);
        let ExcitationConfig::Sine(s) = cfg.excitation else { panic!() };
        assert!((s.amplitude - 2.0 * 9.81).abs() < 1e-12);
    }

    #[test]
    fn noise_defaults_and_seed() {
        let cfg = parse("excitation.kind = noise\nexcitation.psd_g2Hz = 0.045\nexcitation.seed = 42\n")
            .unwrap();
        assert_eq!(cfg.seed(), Some(42));
        assert!((cfg.duration - cfg.settle - NOISE_OBSERVATION).abs() < 1e-9);
        assert_eq!(cfg.block_length, Some(1.0));
    }

    #[test]
    fn errors_name_key_and_line() {
        match parse("excitation.kind = sine\nload.R_MOhm = abc\n").unwrap_err() {
            Error::ConfigKey { key, line, .. } => {
                assert_eq!(key, "load.R_MOhm");
                assert_eq!(line, 2);
            }
            e => panic!("{e}"),
        }
        assert!(matches!(
            parse("excitation.kind = sine\nbogus.key = 1").unwrap_err(),
            Error::ConfigKey { line: 2, .. }
        ));
        assert!(matches!(
            parse("excitation.kind = sine\njust text").unwrap_err(),
            Error::Parse { line: 2, .. }
        ));
    }

    #[test]
    fn invariant_violations_are_validation_errors() {
        let err = parse("excitation.kind = sine\nclamp.x_c_um = 13\n").unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
        let err = parse("excitation.kind = noise\nexcitation.f_s_Hz = 4000\n").unwrap_err();
        assert!(matches!(err, Error::InvalidSpec(_)), "{err}");
    }

    #[test]
    fn couette_keys_replace_damping() {
        let cfg = parse(
            "excitation.kind = sine\nmechanical.eta_Pas = 1.81e-5\nmechanical.A_m_mm2 = 1\nmechanical.d_um = 100\n",
        )
        .unwrap();
        assert!(cfg.device.mechanical.damping != 8.45e-4);
        assert!(parse("excitation.kind = sine\nmechanical.eta_Pas = 1.81e-5\n").is_err());
    }

    #[test]
    fn hash_tracks_settings() {
        let a = parse("excitation.kind = sine").unwrap();
        let b = parse("excitation.kind = sine\nload.R_MOhm = 27").unwrap();
        assert_eq!(a.hash(), parse("excitation.kind = sine").unwrap().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
