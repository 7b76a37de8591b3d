//! Device physics of the in-plane overlap electrostatic harvester.
//!
//! One mechanical degree of freedom (proof-mass displacement `x`) and two
//! electrical ones (charges `q1`, `q2` on the two comb capacitors, which vary
//! in antiphase with `x`). The electret is a DC source in series with a fixed
//! capacitance shared by both ports.
//!
//! All quantities are SI. The piecewise laws (stopper force, capacitance
//! clamp) come in two flavours: the plain functions classify `x` themselves,
//! while the `*_in` variants take an explicit [`Zone`] so the integrator can
//! keep one smooth branch for the whole duration of a step.

use crate::error::{Error, Result};

/// Standard gravity used for every g-to-SI conversion in the crate.
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Vacuum permittivity [F/m].
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;

/// Comb-finger geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceGeometry {
    pub finger_length: f64,
    /// Stored for completeness; no equation uses it.
    pub finger_width: f64,
    pub finger_thickness: f64,
    pub gap: f64,
    pub finger_pairs: u32,
    pub nominal_overlap: f64,
    pub permittivity: f64,
}

impl Default for DeviceGeometry {
    fn default() -> Self {
        Self {
            finger_length: 30e-6,
            finger_width: 4e-6,
            finger_thickness: 60e-6,
            gap: 3e-6,
            finger_pairs: 524,
            nominal_overlap: 15e-6,
            permittivity: VACUUM_PERMITTIVITY,
        }
    }
}

impl DeviceGeometry {
    /// Capacitance per unit overlap, `2 N_g ε t_f / g_0` [F/m].
    pub fn capacitance_per_overlap(&self) -> f64 {
        2.0 * f64::from(self.finger_pairs) * self.permittivity * self.finger_thickness / self.gap
    }

    /// Capacitance at zero displacement.
    pub fn nominal_capacitance(&self) -> f64 {
        self.capacitance_per_overlap() * self.nominal_overlap
    }

    /// Overlap-law capacitances without any clamping.
    pub fn unclamped_capacitance_pair(&self, x: f64) -> (f64, f64) {
        let kappa = self.capacitance_per_overlap();
        (
            kappa * (self.nominal_overlap - x),
            kappa * (self.nominal_overlap + x),
        )
    }

    fn validate(&self) -> Result<()> {
        let lengths = [
            ("finger_length", self.finger_length),
            ("finger_width", self.finger_width),
            ("finger_thickness", self.finger_thickness),
            ("gap", self.gap),
            ("nominal_overlap", self.nominal_overlap),
        ];
        for (name, value) in lengths {
            require(value > 0.0, || format!("geometry.{name} must be > 0, got {value}"))?;
        }
        require(self.finger_pairs >= 1, || "geometry.finger_pairs must be >= 1".into())?;
        require(self.permittivity > 0.0, || {
            format!("geometry.permittivity must be > 0, got {}", self.permittivity)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanicalParams {
    pub mass: f64,
    pub spring_constant: f64,
    pub damping: f64,
}

impl Default for MechanicalParams {
    fn default() -> Self {
        Self {
            mass: 5.78e-6,
            spring_constant: 326.0,
            damping: 8.45e-4,
        }
    }
}

impl MechanicalParams {
    /// Replaces the tabulated damping with the Couette-flow estimate.
    pub fn with_couette_damping(self, flow: &DampingGeometry, geometry: &DeviceGeometry) -> Self {
        Self {
            damping: couette_damping(flow, geometry),
            ..self
        }
    }

    fn validate(&self) -> Result<()> {
        require(self.mass > 0.0, || format!("mechanical.mass must be > 0, got {}", self.mass))?;
        require(self.spring_constant > 0.0, || {
            format!("mechanical.spring_constant must be > 0, got {}", self.spring_constant)
        })?;
        require(self.damping >= 0.0, || {
            format!("mechanical.damping must be >= 0, got {}", self.damping)
        })
    }
}

/// Inputs of the Couette-flow damping estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingGeometry {
    pub mass_area: f64,
    /// Distance between the mass and the top/bottom cap of the cavity.
    pub cap_gap: f64,
    pub viscosity: f64,
}

/// Dynamic viscosity of air at room temperature [Pa·s].
pub const AIR_VISCOSITY: f64 = 1.81e-5;

/// Viscous damping from shear flow in the finger gaps and above/below the mass:
/// `b = 2η (N_g t_f l_f / g_0 + A_m / d)`.
pub fn couette_damping(flow: &DampingGeometry, geometry: &DeviceGeometry) -> f64 {
    let fingers = f64::from(geometry.finger_pairs) * geometry.finger_thickness
        * geometry.finger_length
        / geometry.gap;
    2.0 * flow.viscosity * (fingers + flow.mass_area / flow.cap_gap)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectretBias {
    pub voltage: f64,
    pub capacitance: f64,
}

impl Default for ElectretBias {
    fn default() -> Self {
        Self {
            voltage: 20.0,
            capacitance: 5e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopperParams {
    /// Displacement at which the end stops engage.
    pub engage_displacement: f64,
    pub stiffness: f64,
}

impl Default for StopperParams {
    fn default() -> Self {
        Self {
            engage_displacement: 14e-6,
            stiffness: 326e3,
        }
    }
}

/// Saturation of the capacitance law beyond `±x_c`.
///
/// `cap_max`/`cap_min` are always the overlap law evaluated at `∓x_c`, so the
/// clamped capacitance is continuous. Build it with [`CapClamp::continuous`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapClamp {
    pub clamp_displacement: f64,
    pub cap_max: f64,
    pub cap_min: f64,
}

impl CapClamp {
    pub fn continuous(clamp_displacement: f64, geometry: &DeviceGeometry) -> Self {
        let (cap_min, cap_max) = geometry.unclamped_capacitance_pair(clamp_displacement);
        Self {
            clamp_displacement,
            cap_max,
            cap_min,
        }
    }
}

/// Resistive loads and the parasitic capacitance at each output node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadNetwork {
    pub resistance1: f64,
    pub resistance2: f64,
    pub parasitic: f64,
}

impl Default for LoadNetwork {
    fn default() -> Self {
        Self::symmetric(28e6)
    }
}

impl LoadNetwork {
    /// Equal loads on both ports with the default 1.94 pF parasitic.
    pub fn symmetric(resistance: f64) -> Self {
        Self {
            resistance1: resistance,
            resistance2: resistance,
            parasitic: 1.94e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require(self.resistance1 > 0.0 && self.resistance2 > 0.0, || {
            format!(
                "load resistances must be > 0, got {} and {}",
                self.resistance1, self.resistance2
            )
        })?;
        require(self.parasitic >= 0.0, || {
            format!("load.parasitic must be >= 0, got {}", self.parasitic)
        })
    }
}

/// Position of a coordinate relative to a symmetric pair of limits `±limit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Zone {
    Below,
    Within,
    Above,
}

impl Zone {
    /// Boundaries belong to the inner zone.
    pub fn of(x: f64, limit: f64) -> Self {
        if x > limit {
            Zone::Above
        } else if x < -limit {
            Zone::Below
        } else {
            Zone::Within
        }
    }

    /// Like [`Zone::of`], but a point within `tol` of a limit is assigned to
    /// the side the velocity is heading to.
    pub fn heading(x: f64, v: f64, limit: f64, tol: f64) -> Self {
        if (x - limit).abs() <= tol {
            if v > 0.0 {
                Zone::Above
            } else {
                Zone::Within
            }
        } else if (x + limit).abs() <= tol {
            if v < 0.0 {
                Zone::Below
            } else {
                Zone::Within
            }
        } else {
            Zone::of(x, limit)
        }
    }
}

/// Active branches of the two piecewise laws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Regime {
    pub stopper: Zone,
    pub clamp: Zone,
}

impl Regime {
    pub const FREE: Regime = Regime {
        stopper: Zone::Within,
        clamp: Zone::Within,
    };
}

/// Complete device description. `Default` gives the reference design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceParams {
    pub geometry: DeviceGeometry,
    pub mechanical: MechanicalParams,
    pub electret: ElectretBias,
    pub stopper: StopperParams,
    pub clamp: CapClamp,
}

impl Default for DeviceParams {
    fn default() -> Self {
        let geometry = DeviceGeometry::default();
        Self {
            geometry,
            mechanical: MechanicalParams::default(),
            electret: ElectretBias::default(),
            stopper: StopperParams::default(),
            clamp: CapClamp::continuous(14.5e-6, &geometry),
        }
    }
}

impl DeviceParams {
    /// Recomputes the clamp limits after a geometry or `x_c` change.
    pub fn with_clamp_displacement(mut self, clamp_displacement: f64) -> Self {
        self.clamp = CapClamp::continuous(clamp_displacement, &self.geometry);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.mechanical.validate()?;
        require(self.electret.capacitance > 0.0, || {
            format!("electret.capacitance must be > 0, got {}", self.electret.capacitance)
        })?;
        let s = &self.stopper;
        require(s.engage_displacement > 0.0 && s.stiffness > 0.0, || {
            "stopper engage displacement and stiffness must be > 0".into()
        })?;
        let x_c = self.clamp.clamp_displacement;
        require(s.engage_displacement < x_c && x_c < self.geometry.nominal_overlap, || {
            format!(
                "need x_s < x_c < x_0, got x_s = {}, x_c = {}, x_0 = {}",
                s.engage_displacement, x_c, self.geometry.nominal_overlap
            )
        })?;
        let expected = CapClamp::continuous(x_c, &self.geometry);
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs();
        require(
            rel(self.clamp.cap_max, expected.cap_max) && rel(self.clamp.cap_min, expected.cap_min),
            || "clamp limits must equal the overlap law at ∓x_c".into(),
        )?;
        require(self.clamp.cap_min > 0.0, || "clamp.cap_min must be > 0".into())
    }

    pub fn nominal_capacitance(&self) -> f64 {
        self.geometry.nominal_capacitance()
    }

    /// Undamped mechanical resonance [Hz].
    pub fn natural_frequency(&self) -> f64 {
        let m = &self.mechanical;
        (m.spring_constant / m.mass).sqrt() / (2.0 * std::f64::consts::PI)
    }

    pub fn quality_factor(&self) -> f64 {
        let m = &self.mechanical;
        (m.spring_constant * m.mass).sqrt() / m.damping
    }

    /// Amplitude decay time constant `2m/b` of the free mechanical ring-down.
    pub fn ring_down_time(&self) -> f64 {
        2.0 * self.mechanical.mass / self.mechanical.damping
    }

    pub fn regime(&self, x: f64) -> Regime {
        Regime {
            stopper: Zone::of(x, self.stopper.engage_displacement),
            clamp: Zone::of(x, self.clamp.clamp_displacement),
        }
    }

    /// Regime with boundary points assigned by direction of travel.
    pub fn regime_heading(&self, x: f64, v: f64, tol: f64) -> Regime {
        Regime {
            stopper: Zone::heading(x, v, self.stopper.engage_displacement, tol),
            clamp: Zone::heading(x, v, self.clamp.clamp_displacement, tol),
        }
    }

    /// Clamped capacitances `(C_1, C_2)`.
    pub fn capacitance_pair(&self, x: f64) -> (f64, f64) {
        self.capacitance_pair_in(x, Zone::of(x, self.clamp.clamp_displacement))
    }

    pub fn capacitance_pair_in(&self, x: f64, zone: Zone) -> (f64, f64) {
        match zone {
            Zone::Within => self.geometry.unclamped_capacitance_pair(x),
            Zone::Above => (self.clamp.cap_min, self.clamp.cap_max),
            Zone::Below => (self.clamp.cap_max, self.clamp.cap_min),
        }
    }

    /// `(d(1/C_1)/dx, d(1/C_2)/dx)`; zero in the clamped regions.
    pub fn inv_cap_gradient(&self, x: f64) -> (f64, f64) {
        self.inv_cap_gradient_in(x, Zone::of(x, self.clamp.clamp_displacement))
    }

    pub fn inv_cap_gradient_in(&self, x: f64, zone: Zone) -> (f64, f64) {
        match zone {
            Zone::Within => {
                let kappa = self.geometry.capacitance_per_overlap();
                let x0 = self.geometry.nominal_overlap;
                (
                    1.0 / (kappa * (x0 - x).powi(2)),
                    -1.0 / (kappa * (x0 + x).powi(2)),
                )
            }
            Zone::Above | Zone::Below => (0.0, 0.0),
        }
    }

    pub fn stopper_force(&self, x: f64) -> f64 {
        self.stopper_force_in(x, Zone::of(x, self.stopper.engage_displacement))
    }

    pub fn stopper_force_in(&self, x: f64, zone: Zone) -> f64 {
        let StopperParams {
            engage_displacement: x_s,
            stiffness: k_s,
        } = self.stopper;
        match zone {
            Zone::Within => 0.0,
            Zone::Above => -k_s * (x - x_s),
            Zone::Below => -k_s * (x + x_s),
        }
    }

    /// Elastic energy stored in an engaged stopper.
    pub fn stopper_energy(&self, x: f64) -> f64 {
        let over = x.abs() - self.stopper.engage_displacement;
        if over > 0.0 {
            0.5 * self.stopper.stiffness * over * over
        } else {
            0.0
        }
    }

    /// Force exerted on the transducer: spring plus electrostatic terms.
    pub fn transducer_force(&self, x: f64, q1: f64, q2: f64) -> f64 {
        self.transducer_force_in(x, q1, q2, Zone::of(x, self.clamp.clamp_displacement))
    }

    pub fn transducer_force_in(&self, x: f64, q1: f64, q2: f64, clamp: Zone) -> f64 {
        let (g1, g2) = self.inv_cap_gradient_in(x, clamp);
        self.mechanical.spring_constant * x + 0.5 * q1 * q1 * g1 + 0.5 * q2 * q2 * g2
    }

    /// Voltages across the two electrical ports.
    pub fn port_voltages(&self, x: f64, q1: f64, q2: f64) -> (f64, f64) {
        self.port_voltages_in(x, q1, q2, Zone::of(x, self.clamp.clamp_displacement))
    }

    pub fn port_voltages_in(&self, x: f64, q1: f64, q2: f64, clamp: Zone) -> (f64, f64) {
        let (c1, c2) = self.capacitance_pair_in(x, clamp);
        let common = self.electret.voltage + (q1 + q2) / self.electret.capacitance;
        (common + q1 / c1, common + q2 / c2)
    }

    /// Charge on each variable capacitor at the zero-current operating point,
    /// where both port voltages vanish at `x = 0`.
    pub fn dc_equilibrium_charge(&self) -> f64 {
        let e = &self.electret;
        -e.voltage / (2.0 / e.capacitance + 1.0 / self.nominal_capacitance())
    }

    /// Small-signal model about `(x, q1, q2) = (0, q_0, q_0)`.
    pub fn linearize(&self) -> LinearModel {
        let q0 = self.dc_equilibrium_charge();
        let (g1, g2) = self.inv_cap_gradient_in(0.0, Zone::Within);
        LinearModel {
            coupling1: q0 * g1,
            coupling2: q0 * g2,
            nominal_cap: self.nominal_capacitance(),
            equilibrium_charge: q0,
            mechanical: self.mechanical,
            electret: self.electret,
        }
    }
}

/// Linearized transduction. Charges are offsets `Δq_i` from the operating
/// point; the electret source is absorbed into that operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub coupling1: f64,
    pub coupling2: f64,
    pub nominal_cap: f64,
    pub equilibrium_charge: f64,
    pub mechanical: MechanicalParams,
    pub electret: ElectretBias,
}

impl LinearModel {
    pub fn transducer_force(&self, x: f64, dq1: f64, dq2: f64) -> f64 {
        self.mechanical.spring_constant * x + self.coupling1 * dq1 + self.coupling2 * dq2
    }

    pub fn port_voltages(&self, x: f64, dq1: f64, dq2: f64) -> (f64, f64) {
        let common = (dq1 + dq2) / self.electret.capacitance;
        (
            self.coupling1 * x + common + dq1 / self.nominal_cap,
            self.coupling2 * x + common + dq2 / self.nominal_cap,
        )
    }
}

fn require(ok: bool, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Validation(message()))
    }
}
