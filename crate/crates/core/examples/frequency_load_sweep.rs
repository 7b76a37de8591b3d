//! Two-axis sweep over drive frequency and load resistance, run in parallel,
//! with the optimum reported and the grid written as CSV.
//!
//! cargo run --release --example frequency_load_sweep

use eharvest::config::{ExcitationConfig, RunConfig};
use eharvest::dynamics::ModelVariant;
use eharvest::excitation::SineSpec;
use eharvest::sweep::{sweep_grid, SweepAxis, SweepOptions, SweepParameter};

fn main() -> eharvest::Result<()> {
    let cfg = RunConfig::new(
        ModelVariant::Nonlinear,
        ExcitationConfig::Sine(SineSpec::from_g(0.5, 1190.0)),
    );
    let axes = [
        SweepAxis::linear(SweepParameter::DriveFrequency, 1150.0, 1240.0, 10)?,
        SweepAxis::log(SweepParameter::LoadResistance, 5.0, 150.0, 8)?,
    ];
    let result = sweep_grid(&cfg, &axes, &SweepOptions::default())?;

    let powers = result.powers(0);
    let loads = &axes[1].values;
    print!("{:>9}", "f \\ R");
    for r in loads {
        print!("{r:>9.1}");
    }
    for (i, f) in axes[0].values.iter().enumerate() {
        print!("\n{f:>9.0}");
        for p in &powers[i * loads.len()..(i + 1) * loads.len()] {
            print!("{:>9.1}", p * 1e9);
        }
    }
    println!("\n(power in nW)");
    if let Some(best) = result.argmax() {
        println!("optimum at {:.0} Hz, {:.1} MOhm", best.values[0], best.values[1]);
    }
    let path = std::env::temp_dir().join("eharvest_frequency_load.csv");
    result.write_csv(&path)?;
    println!("grid written to {}", path.display());
    Ok(())
}
