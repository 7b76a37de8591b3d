use eharvest::config::{ExcitationConfig, RunConfig};
use eharvest::dynamics::{
    default_initial, integrate, IntegratorConfig, ModelVariant, SimState,
};
use eharvest::excitation::{Excitation, SineSpec};
use eharvest::model::{DeviceParams, LoadNetwork};
use eharvest::sweep::run_point;

#[test]
fn unbiased_ring_down_matches_damped_oscillator() {
    let mut p = DeviceParams::default();
    p.electret.voltage = 0.0;
    let loads = LoadNetwork::default();
    let x0 = 5e-6;
    let initial = SimState {
        t: 0.0,
        x: x0,
        v: 0.0,
        q1: 0.0,
        q2: 0.0,
    };
    let (m, k, b) = (p.mechanical.mass, p.mechanical.spring_constant, p.mechanical.damping);
    let wn = (k / m).sqrt();
    let zeta = b / (2.0 * (k * m).sqrt());
    let wd = wn * (1.0 - zeta * zeta).sqrt();
    let v_scale = wn * x0;
    for variant in [ModelVariant::Nonlinear, ModelVariant::Linear] {
        let traj = integrate(
            variant,
            &p,
            &loads,
            &Excitation::none(),
            initial,
            0.02,
            &IntegratorConfig::default(),
        )
        .unwrap();
        let mut worst: f64 = 0.0;
        for s in &traj.samples {
            let decay = (-zeta * wn * s.t).exp();
            let (sn, cs) = (wd * s.t).sin_cos();
            let x = decay * x0 * (cs + zeta * wn / wd * sn);
            let v = -decay * x0 * wn * wn / wd * sn;
            worst = worst.max((s.x - x).abs() / x0).max((s.v - v).abs() / v_scale);
            assert_eq!(s.q1, 0.0);
            assert_eq!(s.p, 0.0);
        }
        assert!(worst < 1e-4, "{variant:?}: {worst}");
    }
}

#[test]
fn negated_drive_mirrors_the_response() {
    let p = DeviceParams::default();
    let loads = LoadNetwork::default();
    let drive = Excitation::Sine(SineSpec::from_g(6.0, 1190.0));
    let cfg = IntegratorConfig::default();
    let init = default_initial(&p, ModelVariant::Nonlinear);
    let a = integrate(ModelVariant::Nonlinear, &p, &loads, &drive, init, 0.03, &cfg).unwrap();
    let b = integrate(ModelVariant::Nonlinear, &p, &loads, &drive.negated(), init, 0.03, &cfg)
        .unwrap();
    assert!(a.stats.events > 0);
    assert_eq!(a.len(), b.len());
    let q0 = init.q1.abs();
    for (s, r) in a.samples.iter().zip(&b.samples) {
        assert!((s.x + r.x).abs() < 1e-6 * 14e-6, "t={} {} {}", s.t, s.x, r.x);
        assert!((s.q1 - r.q2).abs() < 1e-6 * q0);
        assert!((s.vn1 - r.vn2).abs() < 1e-6 * (s.vn1.abs() + 1e-3));
    }
}

#[test]
fn zero_bias_harvests_nothing() {
    for variant in [ModelVariant::Nonlinear, ModelVariant::Linear] {
        let mut cfg = RunConfig::new(variant, ExcitationConfig::Sine(SineSpec::from_g(1.0, 1190.0)));
        cfg.device.electret.voltage = 0.0;
        let m = run_point(&cfg).unwrap();
        assert_eq!(m.report.average_power, 0.0, "{variant:?}");
        assert!(m.report.peak_displacement > 5e-6);
    }
}

#[test]
fn zero_amplitude_harvests_nothing() {
    for variant in [ModelVariant::Nonlinear, ModelVariant::Linear] {
        let cfg = RunConfig::new(variant, ExcitationConfig::Sine(SineSpec::from_g(0.0, 1190.0)));
        let m = run_point(&cfg).unwrap();
        assert!(m.report.average_power < 1e-30, "{variant:?} {}", m.report.average_power);
    }
}

#[test]
fn halving_tolerances_barely_moves_power() {
    for (variant, g) in [
        (ModelVariant::Linear, 1.0),
        (ModelVariant::Nonlinear, 1.0),
        (ModelVariant::Nonlinear, 10.0),
    ] {
        let mut cfg = RunConfig::new(variant, ExcitationConfig::Sine(SineSpec::from_g(g, 1190.0)));
        if g > 2.0 {
            // impact transients outlast the default settle window
            cfg.settle = 2.0;
            cfg.duration = 2.1;
        }
        let mut tight = cfg.clone();
        tight.integrator = cfg.integrator.with_tolerance_scaled(0.5);
        let p = run_point(&cfg).unwrap().report.average_power;
        let q = run_point(&tight).unwrap().report.average_power;
        assert!((p - q).abs() / p < 5e-3, "{variant:?} {g} g: {p} vs {q}");
    }
}

#[test]
fn stoppers_bound_large_drive() {
    let cfg = RunConfig::new(
        ModelVariant::Nonlinear,
        ExcitationConfig::Sine(SineSpec::from_g(10.0, 1190.0)),
    );
    let m = run_point(&cfg).unwrap();
    assert!(m.report.contact_fraction > 0.0);
    assert!(m.report.peak_displacement > 14e-6 && m.report.peak_displacement < 14.5e-6);
    let lin = RunConfig {
        variant: ModelVariant::Linear,
        ..cfg
    };
    assert!(run_point(&lin).unwrap().report.peak_displacement > 50e-6);
}
