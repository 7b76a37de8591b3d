//! Coupled electromechanical equations of motion and their integration.
//!
//! The state is `(x, v, q1, q2)`. For [`ModelVariant::Linear`] the charge
//! slots hold offsets `Δq_i` from the DC operating point; for
//! [`ModelVariant::Nonlinear`] they hold absolute charges.
//!
//! Each output node sees its load resistor in parallel with the parasitic
//! capacitance, so the charge rates follow from a 2×2 linear system that is
//! solved exactly at every right-hand-side evaluation.
//!
//! The stopper and capacitance-clamp boundaries make the right-hand side
//! non-smooth in `x`. The integrator keeps a fixed [`Regime`] for the whole of
//! a step and, whenever the dense output shows a boundary crossing, shortens
//! the step so that it ends within `event_tol` of the boundary.

mod dopri;

pub use dopri::{step as dopri_step, Step};

use crate::error::{Error, Result};
use crate::excitation::Excitation;
use crate::model::{DeviceParams, LinearModel, LoadNetwork, Regime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelVariant {
    /// Small-signal transduction about the operating point, no stoppers.
    Linear,
    /// Full transduction with stoppers and clamped capacitances.
    Nonlinear,
}

impl ModelVariant {
    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Linear => "linear",
            ModelVariant::Nonlinear => "nonlinear",
        }
    }
}

impl std::str::FromStr for ModelVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(ModelVariant::Linear),
            "nonlinear" => Ok(ModelVariant::Nonlinear),
            other => Err(format!("unknown model variant `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimState {
    pub t: f64,
    pub x: f64,
    pub v: f64,
    pub q1: f64,
    pub q2: f64,
}

impl SimState {
    fn vector(&self) -> [f64; 4] {
        [self.x, self.v, self.q1, self.q2]
    }

    fn from_vector(t: f64, y: &[f64; 4]) -> Self {
        Self {
            t,
            x: y[0],
            v: y[1],
            q1: y[2],
            q2: y[3],
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.t, self.x, self.v, self.q1, self.q2]
            .iter()
            .all(|c| c.is_finite())
    }
}

/// Operating-point start: mass at rest at the center, charges at equilibrium.
pub fn default_initial(params: &DeviceParams, variant: ModelVariant) -> SimState {
    let q = match variant {
        ModelVariant::Nonlinear => params.dc_equilibrium_charge(),
        ModelVariant::Linear => 0.0,
    };
    SimState {
        q1: q,
        q2: q,
        ..SimState::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    /// Absolute tolerances for `(x, v, q1, q2)`.
    pub abs_tol: [f64; 4],
    pub max_step: f64,
    /// Accuracy [m] to which stopper and clamp crossings are located.
    pub event_tol: f64,
    pub sample_interval: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: [1e-13, 1e-9, 1e-21, 1e-21],
            max_step: 1e-4,
            event_tol: 1e-11,
            sample_interval: 1e-5,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rel_tol > 0.0
            && self.abs_tol.iter().all(|&a| a > 0.0)
            && self.max_step > 0.0
            && self.event_tol > 0.0
            && self.sample_interval > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "integrator tolerances, max step, event tolerance and sample interval must be > 0: {self:?}"
            )))
        }
    }

    /// Same settings with both tolerances scaled by `factor`.
    pub fn with_tolerance_scaled(self, factor: f64) -> Self {
        Self {
            rel_tol: self.rel_tol * factor,
            abs_tol: self.abs_tol.map(|a| a * factor),
            ..self
        }
    }
}

/// One uniformly spaced output point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub v: f64,
    pub q1: f64,
    pub q2: f64,
    /// Output node voltages.
    pub vn1: f64,
    pub vn2: f64,
    /// Base acceleration.
    pub a: f64,
    /// Instantaneous load power.
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunStats {
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    pub events: u64,
    pub rhs_evaluations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub variant: ModelVariant,
    pub samples: Vec<Sample>,
    pub stats: RunStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }
}

/// A parameterized harvester ready to evaluate its right-hand side.
#[derive(Debug, Clone, Copy)]
pub struct Harvester<'a> {
    pub variant: ModelVariant,
    pub params: &'a DeviceParams,
    pub loads: &'a LoadNetwork,
    linear: LinearModel,
}

impl<'a> Harvester<'a> {
    pub fn new(variant: ModelVariant, params: &'a DeviceParams, loads: &'a LoadNetwork) -> Self {
        Self {
            variant,
            params,
            loads,
            linear: params.linearize(),
        }
    }

    pub fn linear_model(&self) -> &LinearModel {
        &self.linear
    }

    /// Output node voltages (equal to the port voltages).
    pub fn node_voltages(&self, x: f64, q1: f64, q2: f64) -> (f64, f64) {
        match self.variant {
            ModelVariant::Nonlinear => self.params.port_voltages(x, q1, q2),
            ModelVariant::Linear => self.linear.port_voltages(x, q1, q2),
        }
    }

    /// Charge rates `(dq1/dt, dq2/dt)` in the given regime.
    pub fn electrical_rates_in(&self, s: &SimState, regime: Regime) -> (f64, f64) {
        let loads = self.loads;
        let cp = loads.parasitic;
        let inv_ce = 1.0 / self.params.electret.capacitance;
        let (inv_c1, inv_c2, (v1, v2), drive1, drive2) = match self.variant {
            ModelVariant::Nonlinear => {
                let p = self.params;
                let (c1, c2) = p.capacitance_pair_in(s.x, regime.clamp);
                let (g1, g2) = p.inv_cap_gradient_in(s.x, regime.clamp);
                (
                    1.0 / c1,
                    1.0 / c2,
                    p.port_voltages_in(s.x, s.q1, s.q2, regime.clamp),
                    s.q1 * g1 * s.v,
                    s.q2 * g2 * s.v,
                )
            }
            ModelVariant::Linear => {
                let lin = &self.linear;
                let inv_c0 = 1.0 / lin.nominal_cap;
                (
                    inv_c0,
                    inv_c0,
                    lin.port_voltages(s.x, s.q1, s.q2),
                    lin.coupling1 * s.v,
                    lin.coupling2 * s.v,
                )
            }
        };
        let m11 = 1.0 + cp * (inv_ce + inv_c1);
        let m22 = 1.0 + cp * (inv_ce + inv_c2);
        let m12 = cp * inv_ce;
        let r1 = -(v1 / loads.resistance1 + cp * drive1);
        let r2 = -(v2 / loads.resistance2 + cp * drive2);
        let det = m11 * m22 - m12 * m12;
        ((r1 * m22 - m12 * r2) / det, (m11 * r2 - m12 * r1) / det)
    }

    /// Acceleration of the proof mass relative to the frame.
    pub fn mechanical_rate_in(&self, s: &SimState, regime: Regime, a: f64) -> f64 {
        let mech = &self.params.mechanical;
        let (transducer, stopper) = match self.variant {
            ModelVariant::Nonlinear => (
                self.params.transducer_force_in(s.x, s.q1, s.q2, regime.clamp),
                // restoring: the stopper force opposes penetration
                self.params.stopper_force_in(s.x, regime.stopper),
            ),
            ModelVariant::Linear => (self.linear.transducer_force(s.x, s.q1, s.q2), 0.0),
        };
        (-transducer + stopper - mech.damping * s.v) / mech.mass + a
    }

    fn derivative(&self, t: f64, y: &[f64; 4], regime: Regime, excitation: &Excitation) -> [f64; 4] {
        let s = SimState::from_vector(t, y);
        let (dq1, dq2) = self.electrical_rates_in(&s, regime);
        let dv = self.mechanical_rate_in(&s, regime, excitation.acceleration(t));
        [s.v, dv, dq1, dq2]
    }

    fn natural_regime(&self, x: f64) -> Regime {
        match self.variant {
            ModelVariant::Nonlinear => self.params.regime(x),
            ModelVariant::Linear => Regime::FREE,
        }
    }

    fn heading_regime(&self, x: f64, v: f64, tol: f64) -> Regime {
        match self.variant {
            ModelVariant::Nonlinear => self.params.regime_heading(x, v, tol),
            ModelVariant::Linear => Regime::FREE,
        }
    }

    pub fn sample(&self, s: &SimState, a: f64) -> Sample {
        let (vn1, vn2) = self.node_voltages(s.x, s.q1, s.q2);
        Sample {
            t: s.t,
            x: s.x,
            v: s.v,
            q1: s.q1,
            q2: s.q2,
            vn1,
            vn2,
            a,
            p: vn1 * vn1 / self.loads.resistance1 + vn2 * vn2 / self.loads.resistance2,
        }
    }
}

/// Charge rates with the regime taken from the state itself.
pub fn electrical_rates(
    state: &SimState,
    variant: ModelVariant,
    params: &DeviceParams,
    loads: &LoadNetwork,
) -> (f64, f64) {
    let h = Harvester::new(variant, params, loads);
    h.electrical_rates_in(state, h.natural_regime(state.x))
}

/// `dv/dt` with the regime taken from the state. Loads do not enter the
/// mechanical equation; any load network gives the same result.
pub fn mechanical_rate(
    state: &SimState,
    variant: ModelVariant,
    params: &DeviceParams,
    a: f64,
) -> f64 {
    let loads = LoadNetwork::default();
    let h = Harvester::new(variant, params, &loads);
    h.mechanical_rate_in(state, h.natural_regime(state.x), a)
}

/// Integrates from `initial` to `t_end`, returning the uniformly sampled
/// trajectory.
pub fn integrate(
    variant: ModelVariant,
    params: &DeviceParams,
    loads: &LoadNetwork,
    excitation: &Excitation,
    initial: SimState,
    t_end: f64,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    let mut samples = Vec::new();
    let stats = integrate_with(
        variant,
        params,
        loads,
        excitation,
        initial,
        t_end,
        config,
        |s: &Sample| samples.push(*s),
    )?;
    Ok(Trajectory {
        variant,
        samples,
        stats,
    })
}

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
/// Interior fractions of a step probed for a regime change.
const PROBES: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
/// Consecutive non-finite trial steps tolerated before giving up.
const MAX_NON_FINITE_TRIALS: u32 = 40;

/// Streaming variant of [`integrate`]: every output sample is handed to
/// `sink` instead of being stored.
#[allow(clippy::too_many_arguments)]
pub fn integrate_with(
    variant: ModelVariant,
    params: &DeviceParams,
    loads: &LoadNetwork,
    excitation: &Excitation,
    initial: SimState,
    t_end: f64,
    config: &IntegratorConfig,
    mut sink: impl FnMut(&Sample),
) -> Result<RunStats> {
    config.validate()?;
    params.validate()?;
    loads.validate()?;
    if !initial.is_finite() {
        return Err(Error::Validation(format!("initial state is not finite: {initial:?}")));
    }
    if !(t_end > initial.t) {
        return Err(Error::Validation(format!(
            "end time {t_end} must exceed start time {}",
            initial.t
        )));
    }
    excitation.covers(initial.t, t_end)?;

    let sys = Harvester::new(variant, params, loads);
    let mut stats = RunStats::default();
    let tol = config.event_tol;
    let t0 = initial.t;
    let mut t = t0;
    let mut y = initial.vector();
    let mut regime = sys.heading_regime(y[0], y[1], tol);

    let rhs = |t: f64, y: &[f64; 4], regime: Regime, stats: &mut RunStats| {
        stats.rhs_evaluations += 1;
        sys.derivative(t, y, regime, excitation)
    };
    let mut k1 = rhs(t, &y, regime, &mut stats);

    sink(&sys.sample(&initial, excitation.acceleration(t0)));
    let mut next_sample: u64 = 1;
    let sample_time = |k: u64| t0 + k as f64 * config.sample_interval;

    let mut h = config.max_step.min(1e-6);
    // step length forced by a located event, with the step size to resume at
    let mut landing: Option<(f64, f64)> = None;
    let mut non_finite_trials = 0;

    while t < t_end {
        let mut trial_h = h.min(config.max_step).min(t_end - t);
        let mut breakpoint = None;
        if let Some((hl, _)) = landing {
            trial_h = hl;
        } else if let Some(bp) = excitation.next_breakpoint(t) {
            if bp < t + trial_h {
                trial_h = bp - t;
                breakpoint = Some(bp);
            }
        }
        let ends_run = landing.is_none() && trial_h >= t_end - t;

        let floor = 64.0 * f64::EPSILON * t.abs().max(1e-9);
        if trial_h < floor {
            return Err(Error::StepUnderflow { t, step: trial_h });
        }

        let mut f = |tt: f64, yy: &[f64; 4]| rhs(tt, yy, regime, &mut stats);
        let trial = dopri_step(&mut f, t, &y, &k1, trial_h);
        let err = trial.error_norm(&y, config.rel_tol, &config.abs_tol);
        if !err.is_finite() {
            non_finite_trials += 1;
            if non_finite_trials > MAX_NON_FINITE_TRIALS {
                return Err(Error::NonFinite { last_good_time: t });
            }
        } else {
            non_finite_trials = 0;
        }
        let factor = if err == 0.0 {
            MAX_FACTOR
        } else if !err.is_finite() {
            MIN_FACTOR
        } else {
            (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
        };

        if !(err <= 1.0) {
            stats.rejected_steps += 1;
            h = trial_h * factor.min(1.0);
            landing = None;
            continue;
        }

        if landing.is_none() && variant == ModelVariant::Nonlinear {
            if let Some(theta) = locate_crossing(&sys, &trial, regime, tol) {
                let forced = theta * trial_h;
                if forced < floor {
                    // the crossing sits at the current point: switch branch only
                    let yy = trial.interpolate(theta);
                    regime = sys.natural_regime(yy[0]);
                    if regime == sys.natural_regime(y[0]) {
                        regime = sys.heading_regime(yy[0], yy[1], tol);
                    }
                    k1 = rhs(t, &y, regime, &mut stats);
                    stats.events += 1;
                } else {
                    landing = Some((forced, trial_h * factor));
                }
                continue;
            }
        }

        // accepted
        stats.accepted_steps += 1;
        let t_new = if ends_run {
            t_end
        } else {
            breakpoint.unwrap_or(t + trial_h)
        };

        loop {
            let ts = sample_time(next_sample);
            if ts > t_new + 1e-9 * config.sample_interval || ts > t_end + 1e-9 * config.sample_interval {
                break;
            }
            let theta = ((ts - t) / trial_h).clamp(0.0, 1.0);
            let yy = trial.interpolate(theta);
            let s = SimState::from_vector(ts, &yy);
            sink(&sys.sample(&s, excitation.acceleration(ts)));
            next_sample += 1;
        }

        t = t_new;
        y = trial.y1;
        match landing.take() {
            Some((_, resume_h)) => {
                stats.events += 1;
                regime = sys.heading_regime(y[0], y[1], tol);
                k1 = rhs(t, &y, regime, &mut stats);
                h = resume_h;
            }
            None => {
                k1 = trial.k7;
                h = trial_h * factor;
                if breakpoint.is_some() {
                    // keep the proposed size rather than the clipped one
                    h = h.max(trial_h);
                }
            }
        }
    }
    Ok(stats)
}

/// Fraction of the step at which the trajectory leaves `regime`, refined by
/// bisection until the bracketing displacements differ by at most `tol`.
fn locate_crossing(sys: &Harvester<'_>, trial: &Step<4>, regime: Regime, tol: f64) -> Option<f64> {
    let class = |theta: f64| {
        let y = trial.interpolate(theta);
        (sys.heading_regime(y[0], y[1], tol), y[0])
    };
    let mut lo = 0.0;
    let mut x_lo = trial.interpolate(0.0)[0];
    let mut hi = None;
    for &theta in &PROBES {
        let (r, x) = class(theta);
        if r != regime {
            hi = Some((theta, x));
            break;
        }
        lo = theta;
        x_lo = x;
    }
    let (mut hi, mut x_hi) = hi?;
    for _ in 0..100 {
        if (x_hi - x_lo).abs() <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (r, x) = class(mid);
        if r == regime {
            lo = mid;
            x_lo = x;
        } else {
            hi = mid;
            x_hi = x;
        }
    }
    Some(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::excitation::SineSpec;

    #[test]
    fn no_parasitic_gives_ohmic_discharge() {
        let p = DeviceParams::default();
        let loads = LoadNetwork {
            parasitic: 0.0,
            ..LoadNetwork::symmetric(10e6)
        };
        let s = SimState {
            t: 0.0,
            x: 2e-6,
            v: 0.3,
            q1: -1e-11,
            q2: -4e-11,
        };
        for variant in [ModelVariant::Linear, ModelVariant::Nonlinear] {
            let h = Harvester::new(variant, &p, &loads);
            let (v1, v2) = h.node_voltages(s.x, s.q1, s.q2);
            let (d1, d2) = electrical_rates(&s, variant, &p, &loads);
            assert!((d1 + v1 / 10e6).abs() <= 1e-15 * d1.abs().max(1e-30));
            assert!((d2 + v2 / 10e6).abs() <= 1e-15 * d2.abs().max(1e-30));
        }
    }

    #[test]
    fn operating_point_is_stationary() {
        let p = DeviceParams::default();
        let loads = LoadNetwork::default();
        for variant in [ModelVariant::Linear, ModelVariant::Nonlinear] {
            let s = default_initial(&p, variant);
            let (d1, d2) = electrical_rates(&s, variant, &p, &loads);
            assert!(d1.abs() < 1e-24 && d2.abs() < 1e-24, "{d1} {d2}");
            assert!(mechanical_rate(&s, variant, &p, 0.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mirrored_state_swaps_rates() {
        let p = DeviceParams::default();
        let loads = LoadNetwork::default();
        let s = SimState {
            t: 0.0,
            x: 3e-6,
            v: 0.2,
            q1: -2e-11,
            q2: -3e-11,
        };
        let m = SimState {
            x: -s.x,
            v: -s.v,
            q1: s.q2,
            q2: s.q1,
            ..s
        };
        let (a1, a2) = electrical_rates(&s, ModelVariant::Nonlinear, &p, &loads);
        let (b1, b2) = electrical_rates(&m, ModelVariant::Nonlinear, &p, &loads);
        assert!((a1 - b2).abs() <= 1e-12 * a1.abs());
        assert!((a2 - b1).abs() <= 1e-12 * a2.abs());
    }

    #[test]
    fn mechanical_rate_cases() {
        let p = DeviceParams::default();
        let free = SimState::default();
        let g = 9.81;
        assert!((mechanical_rate(&free, ModelVariant::Nonlinear, &p, g) - g).abs() < 1e-12);
        let pressed = SimState {
            x: 14.5e-6,
            ..SimState::default()
        };
        let expected = (-326.0 * 14.5e-6 - 0.163) / 5.78e-6;
        let got = mechanical_rate(&pressed, ModelVariant::Nonlinear, &p, 0.0);
        assert!((got - expected).abs() <= 1e-9 * expected.abs(), "{got} {expected}");
        // the linear variant has no stoppers
        let lin = mechanical_rate(&pressed, ModelVariant::Linear, &p, 0.0);
        assert!((lin - (-326.0 * 14.5e-6 / 5.78e-6)).abs() < 1e-6);
    }

    #[test]
    fn default_initial_states() {
        let p = DeviceParams::default();
        let s = default_initial(&p, ModelVariant::Nonlinear);
        assert!((s.q1 + 26.34e-12).abs() < 0.01e-12);
        assert_eq!(s.q1, s.q2);
        assert_eq!(default_initial(&p, ModelVariant::Linear), SimState::default());
        let mut unbiased = p;
        unbiased.electret.voltage = 0.0;
        assert_eq!(
            default_initial(&unbiased, ModelVariant::Nonlinear),
            SimState::default()
        );
    }

    #[test]
    fn fixed_point_stays_put() {
        let p = DeviceParams::default();
        let loads = LoadNetwork::default();
        let init = default_initial(&p, ModelVariant::Nonlinear);
        let traj = integrate(
            ModelVariant::Nonlinear,
            &p,
            &loads,
            &Excitation::none(),
            init,
            0.02,
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert_eq!(traj.len(), 2001);
        for s in &traj.samples {
            assert!(s.x.abs() < 1e-20 && s.v.abs() < 1e-15);
            assert!((s.q1 - init.q1).abs() < 1e-24);
            assert!(s.p < 1e-40);
        }
    }

    #[test]
    fn samples_are_uniform() {
        let p = DeviceParams::default();
        let loads = LoadNetwork::default();
        let cfg = IntegratorConfig {
            sample_interval: 2.5e-5,
            ..Default::default()
        };
        let traj = integrate(
            ModelVariant::Linear,
            &p,
            &loads,
            &Excitation::Sine(SineSpec::from_g(1.0, 1190.0)),
            SimState::default(),
            0.01,
            &cfg,
        )
        .unwrap();
        assert_eq!(traj.len(), 401);
        for (k, s) in traj.samples.iter().enumerate() {
            assert!((s.t - k as f64 * 2.5e-5).abs() < 1e-15);
        }
    }

    #[test]
    fn stopper_contact_triggers_events() {
        let p = DeviceParams::default();
        let loads = LoadNetwork::default();
        let traj = integrate(
            ModelVariant::Nonlinear,
            &p,
            &loads,
            &Excitation::Sine(SineSpec::from_g(10.0, 1190.0)),
            default_initial(&p, ModelVariant::Nonlinear),
            0.05,
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert!(traj.stats.events > 0);
        let peak = traj.samples.iter().map(|s| s.x.abs()).fold(0.0, f64::max);
        assert!(peak > 14e-6 && peak < 15e-6, "{peak}");
    }

    #[test]
    fn rejects_bad_span_and_uncovered_signal() {
        let p = DeviceParams::default();
        let loads = LoadNetwork::default();
        let cfg = IntegratorConfig::default();
        let r = integrate(
            ModelVariant::Linear,
            &p,
            &loads,
            &Excitation::none(),
            SimState::default(),
            0.0,
            &cfg,
        );
        assert!(matches!(r, Err(Error::Validation(_))));
        let sig = crate::excitation::SampledSignal::new(0.0, 1e4, vec![0.0; 11]).unwrap();
        let r = integrate(
            ModelVariant::Linear,
            &p,
            &loads,
            &Excitation::Sampled(sig),
            SimState::default(),
            0.01,
            &cfg,
        );
        assert!(matches!(r, Err(Error::OutOfRange { .. })));
    }
}
