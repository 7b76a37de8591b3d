use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use eharvest::config::{load_config, parse_config, ExcitationConfig, RunConfig};
use eharvest::excitation::{noise_generate, NoiseSpec};
use eharvest::sweep::{
    linearization_report, provenance_line, run_single, sweep_grid, SeedPolicy, SweepAxis,
    SweepOptions,
};
use eharvest::{Error, Result};

#[derive(Parser)]
#[command(name = "eharvest", version, about = "Electret vibration harvester simulator")]
struct Cli {
    /// Noise seed, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configuration and write its trajectory CSV.
    Simulate { config: PathBuf },
    /// Sweep one or two parameters and write the result grid.
    Sweep {
        config: PathBuf,
        /// `name=v1,v2`, `name=lin:a:b:n` or `name=log:a:b:n`.
        #[arg(long = "axis", required = true)]
        axes: Vec<String>,
        /// `per-point` or `common`.
        #[arg(long, default_value = "per-point")]
        seed_policy: String,
    },
    /// Generate a noise record from a config file or an inline
    /// `key=value,...` list of excitation keys.
    GenNoise {
        spec: String,
        #[arg(short = 'o')]
        output: PathBuf,
    },
    /// Print the small-signal constants of a configuration.
    Linearize { config: PathBuf },
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned())
}

fn with_seed(mut cfg: RunConfig, seed: Option<u64>) -> RunConfig {
    if let (ExcitationConfig::Noise(n), Some(s)) = (&mut cfg.excitation, seed) {
        n.seed = s;
    }
    cfg
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn noise_spec(spec: &str) -> Result<RunConfig> {
    let path = Path::new(spec);
    if path.is_file() {
        return load_config(path);
    }
    let mut text = String::from("excitation.kind = noise\n");
    for item in spec.split(',').filter(|s| !s.trim().is_empty()) {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Error::Validation(format!("expected key=value, got `{item}`")))?;
        let key = key.trim();
        let section = if key.starts_with("duration") || key.starts_with("settle") {
            "analysis"
        } else {
            "excitation"
        };
        text.push_str(&format!("{section}.{key} = {value}\n"));
    }
    parse_config(&text, Path::new("<gen-noise>"))
}

/// Failure tagged with the process exit code it maps to.
struct Failure(Error, u8);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_config_error() { 1 } else { 2 };
        Failure(e, code)
    }
}

/// Any failure to read or parse the config file is a config error.
fn load(path: &Path) -> std::result::Result<RunConfig, Failure> {
    load_config(path).map_err(|e| Failure(e, 1))
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    match cli.command {
        Command::Simulate { config } => {
            let mut cfg = with_seed(load(&config)?, cli.seed);
            if cfg.output.is_none() {
                ensure_dir(&cli.out)?;
                cfg.output = Some(cli.out.join(format!("{}_trajectory.csv", stem(&config))));
            }
            let r = run_single(&cfg)?.metrics.report;
            println!("average_power_W = {:e}", r.average_power);
            println!("port_power_W = {:e}, {:e}", r.port_power[0], r.port_power[1]);
            println!("mean_square_displacement_m2 = {:e}", r.mean_square_displacement);
            println!("peak_displacement_m = {:e}", r.peak_displacement);
            println!("stopper_contact_fraction = {}", r.contact_fraction);
            if let Some(se) = r.power_std_error {
                println!("power_std_error_W = {se:e}");
            }
            println!("trajectory = {}", cfg.output.unwrap().display());
        }
        Command::Sweep {
            config,
            axes,
            seed_policy,
        } => {
            let cfg = load(&config)?;
            let axes = axes
                .iter()
                .map(|a| a.parse())
                .collect::<Result<Vec<SweepAxis>>>()
                .map_err(|e| Failure(e, 1))?;
            let options = SweepOptions {
                jobs: cli.jobs,
                seed_policy: seed_policy.parse::<SeedPolicy>().map_err(|e| Failure(e, 1))?,
                base_seed: cli.seed,
            };
            let result = sweep_grid(&cfg, &axes, &options)?;
            ensure_dir(&cli.out)?;
            let path = cli.out.join(format!("{}_sweep.csv", stem(&config)));
            result.write_csv(&path)?;
            let failed = result.rows.iter().filter(|r| r.outcomes[0].is_err()).count();
            if let Some(best) = result.argmax() {
                let p = best.outcomes[0].as_ref().unwrap().report.average_power;
                let at: Vec<String> = result
                    .parameters
                    .iter()
                    .zip(&best.values)
                    .map(|(p, v)| format!("{}={v}", p.column()))
                    .collect();
                println!("argmax {} average_power_W={p:e}", at.join(" "));
            }
            println!("{} points, {failed} failed, written to {}", result.rows.len(), path.display());
        }
        Command::GenNoise { spec, output } => {
            let cfg = with_seed(noise_spec(&spec).map_err(|e| Failure(e, 1))?, cli.seed);
            let ExcitationConfig::Noise(n) = cfg.excitation else {
                let e = Error::Validation("gen-noise needs a noise excitation".into());
                return Err(Failure(e, 1));
            };
            let n = NoiseSpec {
                duration: cfg.duration,
                ..n
            };
            let signal = noise_generate(&n)?;
            signal.write_csv(&output, Some(&provenance_line(&cfg, Some(n.seed))))?;
            println!("{} samples written to {}", signal.len(), output.display());
        }
        Command::Linearize { config } => {
            print!("{}", linearization_report(&load(&config)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(e, code)) => {
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}
