use eharvest::model::{
    couette_damping, DampingGeometry, DeviceParams, Zone, AIR_VISCOSITY,
};
use proptest::prelude::*;

fn params() -> DeviceParams {
    DeviceParams::default()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn inv_c(p: &DeviceParams, x: f64) -> (f64, f64) {
    let (c1, c2) = p.capacitance_pair(x);
    (1.0 / c1, 1.0 / c2)
}

#[test]
fn capacitance_is_continuous_at_clamp() {
    let p = params();
    let xc = p.clamp.clamp_displacement;
    for x in [xc, -xc] {
        let within = p.capacitance_pair_in(x, Zone::Within);
        let outside = p.capacitance_pair_in(x, if x > 0.0 { Zone::Above } else { Zone::Below });
        assert!(rel(within.0, outside.0) < 1e-14, "{within:?} {outside:?}");
        assert!(rel(within.1, outside.1) < 1e-14, "{within:?} {outside:?}");
    }
}

#[test]
fn capacitance_scan_has_no_jumps() {
    let p = params();
    let x0 = p.geometry.nominal_overlap;
    let n = 40_000;
    let step = 4.0 * x0 / n as f64;
    let slope = p.geometry.capacitance_per_overlap() * step;
    let mut prev = p.capacitance_pair(-2.0 * x0);
    for i in 1..=n {
        let c = p.capacitance_pair(-2.0 * x0 + i as f64 * step);
        assert!((c.0 - prev.0).abs() <= slope * (1.0 + 1e-9));
        assert!((c.1 - prev.1).abs() <= slope * (1.0 + 1e-9));
        prev = c;
    }
}

#[test]
fn stopper_is_continuous_with_constant_slope_outside() {
    let p = params();
    let xs = p.stopper.engage_displacement;
    let ks = p.stopper.stiffness;
    assert_eq!(p.stopper_force(xs), 0.0);
    assert_eq!(p.stopper_force(-xs), 0.0);
    assert_eq!(p.stopper_force_in(xs, Zone::Above), 0.0);
    assert_eq!(p.stopper_force_in(-xs, Zone::Below), 0.0);
    for d in [1e-9, 1e-7, 3e-7] {
        let slope = (p.stopper_force(xs + 2.0 * d) - p.stopper_force(xs + d)) / d;
        assert!(rel(slope, -ks) < 1e-6, "{slope}");
    }
}

#[test]
fn operating_point_zeroes_port_voltages() {
    let p = params();
    let q0 = p.dc_equilibrium_charge();
    let (v1, v2) = p.port_voltages(0.0, q0, q0);
    let scale = p.electret.voltage;
    assert!(v1.abs() < 8.0 * f64::EPSILON * scale, "{v1}");
    assert!(v2.abs() < 8.0 * f64::EPSILON * scale, "{v2}");
}

/// Partial derivatives by fourth-order central differences.
fn d4(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

#[test]
fn linearization_matches_numerical_derivatives_of_coupling_terms() {
    let p = params();
    let lin = p.linearize();
    let q0 = lin.equilibrium_charge;
    let hx = 1e-9;
    let hq = 1e-3 * q0.abs();

    let df_dq1 = d4(|q| p.transducer_force(0.0, q, q0), q0, hq);
    let df_dq2 = d4(|q| p.transducer_force(0.0, q0, q), q0, hq);
    assert!(rel(df_dq1, lin.coupling1) < 1e-6, "{df_dq1} {}", lin.coupling1);
    assert!(rel(df_dq2, lin.coupling2) < 1e-6, "{df_dq2} {}", lin.coupling2);

    let dv1_dx = d4(|x| p.port_voltages(x, q0, q0).0, 0.0, hx);
    let dv2_dx = d4(|x| p.port_voltages(x, q0, q0).1, 0.0, hx);
    assert!(rel(dv1_dx, lin.coupling1) < 1e-6, "{dv1_dx}");
    assert!(rel(dv2_dx, lin.coupling2) < 1e-6, "{dv2_dx}");

    // charge derivatives of the port voltages: 1/Ce + 1/C0 on the diagonal
    let ce = p.electret.capacitance;
    let dv1_dq1 = d4(|q| p.port_voltages(0.0, q, q0).0, q0, hq);
    let dv1_dq2 = d4(|q| p.port_voltages(0.0, q0, q).0, q0, hq);
    let (l1, _) = lin.port_voltages(0.0, 1.0, 0.0);
    let (l12, _) = lin.port_voltages(0.0, 0.0, 1.0);
    assert!(rel(dv1_dq1, l1) < 1e-6 && rel(dv1_dq1, 1.0 / ce + 1.0 / lin.nominal_cap) < 1e-6);
    assert!(rel(dv1_dq2, l12) < 1e-6 && rel(dv1_dq2, 1.0 / ce) < 1e-6);
}

#[test]
fn linearized_force_omits_electrostatic_stiffness() {
    // documents the size of the term left out of the small-signal force law
    let p = params();
    let lin = p.linearize();
    let q0 = lin.equilibrium_charge;
    let dfdx = d4(|x| p.transducer_force(x, q0, q0), 0.0, 1e-9);
    let c0 = p.nominal_capacitance();
    let x0 = p.geometry.nominal_overlap;
    let omitted = 2.0 * q0 * q0 / (c0 * x0 * x0);
    assert!(rel(dfdx - p.mechanical.spring_constant, omitted) < 1e-5);
    assert!(omitted > 2.0 && omitted < 2.4, "{omitted}");
}

#[test]
fn couette_fixture_reproduces_tabulated_damping() {
    // solid silicon proof mass, back-solved cap gap
    let p = params();
    let flow = DampingGeometry {
        mass_area: 41.344_778e-6,
        cap_gap: 1.795_402e-6,
        viscosity: AIR_VISCOSITY,
    };
    let b = couette_damping(&flow, &p.geometry);
    assert!(rel(b, 8.45e-4) < 1e-5, "{b}");
    let m = p.mechanical.with_couette_damping(&flow, &p.geometry);
    assert_eq!(m.damping, b);
    assert_eq!(m.mass, p.mechanical.mass);
}

proptest! {
    #[test]
    fn capacitances_mirror(x in -30e-6f64..30e-6) {
        let p = params();
        let (c1, c2) = p.capacitance_pair(x);
        let (m1, m2) = p.capacitance_pair(-x);
        prop_assert_eq!(c1, m2);
        prop_assert_eq!(c2, m1);
    }

    #[test]
    fn gradients_mirror(x in -30e-6f64..30e-6) {
        let p = params();
        let (g1, g2) = p.inv_cap_gradient(x);
        let (m1, m2) = p.inv_cap_gradient(-x);
        prop_assert_eq!(g1, -m2);
        prop_assert_eq!(g2, -m1);
    }

    #[test]
    fn stopper_force_is_odd(x in -30e-6f64..30e-6) {
        let p = params();
        prop_assert_eq!(p.stopper_force(-x), -p.stopper_force(x));
    }

    #[test]
    fn stopper_force_restores(x in -30e-6f64..30e-6) {
        let p = params();
        prop_assert!(p.stopper_force(x) * x <= 0.0);
    }

    #[test]
    fn transducer_force_is_odd_under_charge_swap(
        x in -14e-6f64..14e-6,
        q1 in -5e-11f64..5e-11,
        q2 in -5e-11f64..5e-11,
    ) {
        let p = params();
        let f = p.transducer_force(x, q1, q2);
        let g = p.transducer_force(-x, q2, q1);
        prop_assert!((f + g).abs() <= 1e-12 * f.abs().max(1e-12));
        let (v1, v2) = p.port_voltages(x, q1, q2);
        let (w1, w2) = p.port_voltages(-x, q2, q1);
        prop_assert_eq!(v1, w2);
        prop_assert_eq!(v2, w1);
    }

    #[test]
    fn gradient_matches_finite_differences(frac in -0.99f64..0.99) {
        let p = params();
        let xc = p.clamp.clamp_displacement;
        let h = 1e-10;
        let x = frac * (xc - 2.0 * h);
        let (g1, g2) = p.inv_cap_gradient(x);
        let n1 = d4(|x| inv_c(&p, x).0, x, h);
        let n2 = d4(|x| inv_c(&p, x).1, x, h);
        prop_assert!(rel(g1, n1) < 1e-6, "{} {}", g1, n1);
        prop_assert!(rel(g2, n2) < 1e-6, "{} {}", g2, n2);
    }

    #[test]
    fn clamped_regions_are_flat(x in 14.5e-6f64..40e-6) {
        let p = params();
        prop_assert_eq!(p.inv_cap_gradient(x + 1e-9), (0.0, 0.0));
        prop_assert_eq!(p.inv_cap_gradient(-x - 1e-9), (0.0, 0.0));
        prop_assert_eq!(p.capacitance_pair(x), (p.clamp.cap_min, p.clamp.cap_max));
    }

    #[test]
    fn stopper_energy_is_force_potential(x in -20e-6f64..20e-6) {
        let p = params();
        let h = 1e-10;
        prop_assume!((x.abs() - p.stopper.engage_displacement).abs() > 3.0 * h);
        let de = d4(|x| p.stopper_energy(x), x, h);
        let f = p.stopper_force(x);
        prop_assert!((de + f).abs() <= 1e-6 * f.abs().max(1e-6));
    }
}
