//! Linear and nonlinear models side by side across drive amplitude, showing
//! where the stoppers start to cap the harvested power.
//!
//! cargo run --release --example amplitude_series

use eharvest::config::{ExcitationConfig, RunConfig};
use eharvest::dynamics::ModelVariant;
use eharvest::excitation::SineSpec;
use eharvest::sweep::{sweep_series, SweepAxis, SweepOptions, SweepParameter};

fn main() -> eharvest::Result<()> {
    let mut cfg = RunConfig::new(
        ModelVariant::Nonlinear,
        ExcitationConfig::Sine(SineSpec::from_g(1.0, 1190.0)),
    );
    // impact transients outlast the default settle window
    cfg.settle = 1.0;
    cfg.duration = 1.1;
    let axis = SweepAxis::log(SweepParameter::SineAmplitude, 0.1, 10.0, 9)?;
    let variants = [ModelVariant::Linear, ModelVariant::Nonlinear];
    let result = sweep_series(&cfg, &axis, &variants, &SweepOptions::default())?;

    let linear = result.metrics(0);
    let nonlinear = result.metrics(1);
    println!("{:>8} {:>12} {:>12} {:>8} {:>9}", "a_g", "P_lin_W", "P_nl_W", "ratio", "contact");
    for (i, a) in axis.values.iter().enumerate() {
        let (Some(l), Some(n)) = (linear[i], nonlinear[i]) else {
            println!("{a:>8.3} failed");
            continue;
        };
        println!(
            "{a:>8.3} {:>12.4e} {:>12.4e} {:>8.3} {:>9.3}",
            l.report.average_power,
            n.report.average_power,
            n.report.average_power / l.report.average_power,
            n.report.contact_fraction,
        );
    }
    Ok(())
}
