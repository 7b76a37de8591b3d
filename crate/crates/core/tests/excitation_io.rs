use std::fs;

use eharvest::analysis::{welch_psd, WelchConfig};
use eharvest::dynamics::{integrate, ModelVariant, IntegratorConfig, default_initial};
use eharvest::excitation::{
    noise_generate, psd_verify, Excitation, NoiseSpec, SampledSignal, SineSpec,
};
use eharvest::model::{DeviceParams, LoadNetwork, STANDARD_GRAVITY};
use eharvest::Error;
use proptest::prelude::*;

fn spec(seed: u64) -> NoiseSpec {
    NoiseSpec {
        seed,
        duration: 30.0,
        ..NoiseSpec::default()
    }
}

#[test]
fn generated_noise_meets_level_and_flatness() {
    for seed in [0, 1, 2024] {
        let s = spec(seed);
        let signal = noise_generate(&s).unwrap();
        let r = psd_verify(&signal, &s).unwrap();
        assert!(r.passes(), "seed {seed}: {r:?}");
        let mean_err = (r.passband_mean_psd / s.psd_level - 1.0).abs();
        assert!(mean_err < 0.10, "{mean_err}");
        assert!(r.flatness_deviation_db.abs() < 1.0);
    }
}

#[test]
fn noise_is_bit_identical_for_a_seed() {
    let a = noise_generate(&spec(9)).unwrap();
    let b = noise_generate(&spec(9)).unwrap();
    let c = noise_generate(&spec(10)).unwrap();
    assert!(a.samples.iter().zip(&b.samples).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_ne!(a.samples, c.samples);
}

#[test]
fn noise_amplitude_scales_with_root_psd() {
    let base = spec(3);
    let a = noise_generate(&base).unwrap();
    let b = noise_generate(&NoiseSpec {
        psd_level: 4.0 * base.psd_level,
        ..base
    })
    .unwrap();
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1e-12));
    }
}

#[test]
fn band_limit_removes_high_frequencies() {
    let s = NoiseSpec {
        bandwidth: 2000.0,
        ..spec(5)
    };
    let signal = noise_generate(&s).unwrap();
    let psd = welch_psd(&signal.samples, s.sample_rate, &WelchConfig::default()).unwrap();
    let pass = psd.band_power(100.0, 1900.0) / 1800.0;
    let stop = psd.band_power(2300.0, 4900.0) / 2600.0;
    assert!(stop < 1e-3 * pass, "{pass} {stop}");
    assert!(psd_verify(&signal, &s).unwrap().passes());
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("noise.csv");
    let signal = noise_generate(&NoiseSpec {
        duration: 0.5,
        ..spec(4)
    })
    .unwrap();
    signal.write_csv(&path, Some("generated for a test")).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# generated for a test\nt_s,a_mps2\n"));
    let back = SampledSignal::from_csv(&path).unwrap();
    assert_eq!(back.samples, signal.samples);
    assert!((back.sample_rate - signal.sample_rate).abs() < 1e-6);
    assert_eq!(back.start_time, signal.start_time);
}

#[test]
fn csv_in_g_is_converted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.csv");
    fs::write(&path, "t_s,a_g\n0,0\n0.001,1\n0.002,-0.5\n").unwrap();
    let s = SampledSignal::from_csv(&path).unwrap();
    assert_eq!(s.samples, vec![0.0, STANDARD_GRAVITY, -0.5 * STANDARD_GRAVITY]);
    assert!((s.sample_rate - 1000.0).abs() < 1e-9);
}

#[test]
fn csv_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "t_s,a_mps2\n0,1\n0.001,oops\n").unwrap();
    match SampledSignal::from_csv(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    fs::write(&path, "t_s,a_mps2\n0,1\n0.001,2\n0.0035,3\n").unwrap();
    assert!(matches!(SampledSignal::from_csv(&path), Err(Error::Parse { line: 4, .. })));
    fs::write(&path, "# only a comment\nt_s,a_mps2\n").unwrap();
    assert!(matches!(SampledSignal::from_csv(&path), Err(Error::EmptySignal)));
    assert!(matches!(
        SampledSignal::from_csv(dir.path().join("missing.csv")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn sampled_sine_drives_like_analytic_sine() {
    let p = DeviceParams::default();
    let loads = LoadNetwork::default();
    let sine = SineSpec::from_g(1.0, 1190.0);
    let rate = 200_000.0;
    let samples = (0..=(0.02 * rate) as usize)
        .map(|i| sine.eval(i as f64 / rate))
        .collect();
    let sampled = Excitation::Sampled(SampledSignal::new(0.0, rate, samples).unwrap());
    let cfg = IntegratorConfig::default();
    let init = default_initial(&p, ModelVariant::Linear);
    let a = integrate(ModelVariant::Linear, &p, &loads, &Excitation::Sine(sine), init, 0.02, &cfg)
        .unwrap();
    let b = integrate(ModelVariant::Linear, &p, &loads, &sampled, init, 0.02, &cfg).unwrap();
    let peak = a.samples.iter().map(|s| s.x.abs()).fold(0.0, f64::max);
    for (s, r) in a.samples.iter().zip(&b.samples) {
        assert!((s.x - r.x).abs() < 1e-3 * peak);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn interpolation_hits_samples_and_stays_in_hull(
        values in prop::collection::vec(-50.0f64..50.0, 2..64),
        frac in 0.0f64..1.0,
    ) {
        let s = SampledSignal::new(0.25, 100.0, values.clone()).unwrap();
        for (i, v) in values.iter().enumerate() {
            prop_assert!((s.interpolate(s.time_at(i)).unwrap() - v).abs() < 1e-9);
        }
        let t = s.start_time + frac * (s.end_time() - s.start_time);
        let y = s.interpolate(t).unwrap();
        let i = (((t - s.start_time) * 100.0).floor() as usize).min(values.len() - 2);
        let (lo, hi) = (values[i].min(values[i + 1]), values[i].max(values[i + 1]));
        prop_assert!(y >= lo - 1e-9 && y <= hi + 1e-9);
        prop_assert!(s.interpolate(s.end_time() + 0.1).is_err());
    }
}
