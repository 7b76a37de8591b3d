//! Strong drive into the end stops: impact events, contact time and a
//! phase-space export of the settled orbit.
//!
//! cargo run --release --example stopper_impacts

use std::io::Write;

use eharvest::analysis::phase_space_export;
use eharvest::dynamics::{default_initial, integrate, IntegratorConfig, ModelVariant};
use eharvest::excitation::{Excitation, SineSpec};
use eharvest::model::{DeviceParams, LoadNetwork};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = DeviceParams::default();
    let loads = LoadNetwork::default();
    let drive = Excitation::Sine(SineSpec::from_g(10.0, 1190.0));
    let cfg = IntegratorConfig::default();
    let x_s = p.stopper.engage_displacement;

    for variant in [ModelVariant::Linear, ModelVariant::Nonlinear] {
        let init = default_initial(&p, variant);
        let traj = integrate(variant, &p, &loads, &drive, init, 0.3, &cfg)?;
        let peak = traj.samples.iter().map(|s| s.x.abs()).fold(0.0, f64::max);
        let contact = traj.samples.iter().filter(|s| s.x.abs() > x_s).count();
        println!(
            "{variant:?}: peak {:.2} um, {} zone crossings, {:.2}% of samples beyond the stops, {} steps",
            peak * 1e6,
            traj.stats.events,
            100.0 * contact as f64 / traj.len() as f64,
            traj.stats.accepted_steps,
        );
        if variant == ModelVariant::Nonlinear {
            let path = std::env::temp_dir().join("eharvest_phase_space.csv");
            let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
            writeln!(out, "x_m,v_mps")?;
            let settled = traj.samples.iter().filter(|s| s.t >= 0.29).count();
            let orbit = phase_space_export(&traj);
            for (x, v) in &orbit[orbit.len() - settled..] {
                writeln!(out, "{x:e},{v:e}")?;
            }
            println!("last 10 ms of the orbit in {}", path.display());
        }
    }
    Ok(())
}
