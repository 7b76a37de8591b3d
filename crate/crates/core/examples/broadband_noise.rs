//! Band-limited white acceleration: generate a record, check its spectrum,
//! then drive both models with it and compare their displacement spectra.
//!
//! cargo run --release --example broadband_noise -- [psd_g2Hz]

use eharvest::analysis::{welch_psd, WelchConfig};
use eharvest::config::{ExcitationConfig, RunConfig};
use eharvest::dynamics::ModelVariant;
use eharvest::excitation::{noise_generate, psd_verify, NoiseSpec};
use eharvest::sweep::run_single;

fn main() -> eharvest::Result<()> {
    let psd = std::env::args().nth(1).map_or(0.015, |a| a.parse().expect("number"));
    let spec = NoiseSpec {
        psd_level: psd,
        duration: 20.0,
        seed: 3,
        ..NoiseSpec::default()
    };
    let record = noise_generate(&spec)?;
    let check = psd_verify(&record, &spec)?;
    println!(
        "{} samples, passband mean {:.5} g2/Hz, flatness {:.2} dB, {}",
        record.len(),
        check.passband_mean_psd,
        check.flatness_deviation_db,
        if check.passes() { "ok" } else { "FAIL" }
    );

    for variant in [ModelVariant::Linear, ModelVariant::Nonlinear] {
        let mut cfg = RunConfig::new(variant, ExcitationConfig::Noise(spec));
        cfg.duration = cfg.settle + 5.0;
        cfg.block_length = Some(0.5);
        let run = run_single(&cfg)?;
        let r = run.metrics.report;
        let dt = cfg.integrator.sample_interval;
        let x: Vec<f64> = run.trajectory.samples.iter().map(|s| s.x).collect();
        let spectrum = welch_psd(&x, 1.0 / dt, &WelchConfig::for_rate(1.0 / dt))?;
        let peak = spectrum
            .frequencies
            .iter()
            .zip(&spectrum.density)
            .filter(|(f, _)| **f > 200.0)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0.0, |(f, _)| *f);
        println!(
            "{variant:?}: {:.4e} W +- {:.1e}, rms x {:.3} um, response peak {peak:.0} Hz",
            r.average_power,
            r.power_std_error.unwrap_or(f64::NAN),
            r.mean_square_displacement.sqrt() * 1e6,
        );
    }
    Ok(())
}
