//! Small-signal constants of the reference device and a scan of its
//! capacitance and restoring forces across the stroke.
//!
//! cargo run --example device_constants

use eharvest::config::{ExcitationConfig, RunConfig};
use eharvest::dynamics::ModelVariant;
use eharvest::excitation::SineSpec;
use eharvest::model::DeviceParams;
use eharvest::sweep::linearization_report;

fn main() {
    let cfg = RunConfig::new(
        ModelVariant::Nonlinear,
        ExcitationConfig::Sine(SineSpec::from_g(1.0, 1190.0)),
    );
    print!("{}", linearization_report(&cfg));

    let p = DeviceParams::default();
    let q0 = p.dc_equilibrium_charge();
    println!("\n{:>8} {:>10} {:>10} {:>12} {:>12}", "x_um", "C1_pF", "C2_pF", "F_T_N", "F_S_N");
    for i in -8..=8 {
        let x = i as f64 * 2e-6;
        let (c1, c2) = p.capacitance_pair(x);
        println!(
            "{:>8.1} {:>10.4} {:>10.4} {:>12.4e} {:>12.4e}",
            x * 1e6,
            c1 * 1e12,
            c2 * 1e12,
            p.transducer_force(x, q0, q0),
            p.stopper_force(x),
        );
    }
}
