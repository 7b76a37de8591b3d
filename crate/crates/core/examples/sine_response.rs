//! One sinusoidal run: power report, energy balance and the trajectory CSV.
//!
//! cargo run --example sine_response -- [amplitude_g] [frequency_Hz]

use eharvest::config::{ExcitationConfig, RunConfig};
use eharvest::dynamics::ModelVariant;
use eharvest::excitation::SineSpec;
use eharvest::sweep::run_single;

fn main() -> eharvest::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<f64>().expect("number"));
    let g = args.next().unwrap_or(1.0);
    let f = args.next().unwrap_or(1190.0);

    let mut cfg = RunConfig::new(
        ModelVariant::Nonlinear,
        ExcitationConfig::Sine(SineSpec::from_g(g, f)),
    );
    cfg.output = Some(std::env::temp_dir().join("eharvest_sine_response.csv"));
    let run = run_single(&cfg)?;
    let r = run.metrics.report;
    let e = run.metrics.energy;

    println!("{g} g at {f} Hz, settle {:.1} ms", cfg.settle * 1e3);
    println!("average power     {:.4e} W", r.average_power);
    println!("port powers       {:.4e} / {:.4e} W", r.port_power[0], r.port_power[1]);
    println!("rms displacement  {:.3} um", r.mean_square_displacement.sqrt() * 1e6);
    println!("peak displacement {:.3} um", r.peak_displacement * 1e6);
    println!("contact fraction  {}", r.contact_fraction);
    println!(
        "energy: input {:.3e} J, mech loss {:.3e} J, elec loss {:.3e} J, residual {:.1e}",
        e.input_work, e.mechanical_loss, e.electrical_loss, e.relative_residual
    );
    println!("{} samples in {}", run.trajectory.len(), cfg.output.unwrap().display());
    Ok(())
}
