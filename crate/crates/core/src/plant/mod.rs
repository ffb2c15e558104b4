//! Water-heater benchmark: a gas-fired plate heating a stream of water.
//!
//! States are the served water temperature `T` and the plate temperature
//! `T_m` (both K); the manipulated input is the gas flow `w_c` (kg/s) and the
//! disturbances are the water demand `w` (kg/s) and inlet temperature `T_i` (K).

mod disturbance;
mod simulator;

pub use disturbance::{Disturbance, DisturbanceProfile, Schedule};
pub use simulator::{PlantRecord, WaterHeater};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantParams {
    /// Tank cross-section, m^2.
    pub tank_area: f64,
    /// Water density, kg/m^3.
    pub water_density: f64,
    /// Water specific heat, J/(kg K).
    pub water_heat: f64,
    /// Plate mass, kg.
    pub plate_mass: f64,
    /// Plate specific heat, J/(kg K).
    pub plate_heat: f64,
    /// Radiation coefficient, W/(m^2 K^4).
    pub sigma: f64,
    /// Plate-to-water exchange coefficient, kg/(s^3 K).
    pub k_lm: f64,
    /// Flame temperature, K.
    pub flame_temp: f64,
    /// Flame-to-plate exchange coefficient, m^2 s/kg.
    pub k_f: f64,
    /// Water level, m.
    pub level: f64,
    /// Nominal water demand, kg/s.
    pub nominal_demand: f64,
    /// Nominal inlet temperature, K.
    pub nominal_inlet_temp: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            tank_area: std::f64::consts::FRAC_PI_4,
            water_density: 997.8,
            water_heat: 4180.0,
            plate_mass: 617.32,
            plate_heat: 481.0,
            sigma: 5.67e-8,
            k_lm: 3326.4,
            flame_temp: 1200.0,
            k_f: 8.0,
            level: 2.0,
            nominal_demand: 1.0,
            nominal_inlet_temp: 298.0,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("tank_area", self.tank_area),
            ("water_density", self.water_density),
            ("water_heat", self.water_heat),
            ("plate_mass", self.plate_mass),
            ("plate_heat", self.plate_heat),
            ("sigma", self.sigma),
            ("k_lm", self.k_lm),
            ("flame_temp", self.flame_temp),
            ("k_f", self.k_f),
            ("level", self.level),
            ("nominal_demand", self.nominal_demand),
            ("nominal_inlet_temp", self.nominal_inlet_temp),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("plant parameter {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn nominal_disturbance(&self) -> Disturbance {
        Disturbance {
            demand: self.nominal_demand,
            inlet_temp: self.nominal_inlet_temp,
        }
    }
}

/// Plant state `[T, T_m]`, K.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub water: f64,
    pub plate: f64,
}

/// Right-hand side `(dT/dt, dT_m/dt)`.
pub fn derivatives(p: &PlantParams, x: &PlantState, gas: f64, d: &Disturbance) -> (f64, f64) {
    let exchange = p.k_lm * p.tank_area * (x.plate - x.water);
    let d_water = (d.demand * (d.inlet_temp - x.water) + exchange / p.water_heat)
        / (p.water_density * p.tank_area * p.level);
    let radiation = p.sigma * p.k_f * gas * (p.flame_temp.powi(4) - x.plate.powi(4));
    let d_plate = (-exchange + radiation) / (p.plate_mass * p.plate_heat);
    (d_water, d_plate)
}

/// Steady state for constant gas flow and disturbance, by bisection on `T`.
///
/// At rest `dT/dt = 0` gives `T_m = T + a (T - T_i)` with
/// `a = w c_w / (k_lm A_t)`; the remaining plate balance is strictly
/// decreasing in `T` on `[T_i, T_hi]` where `T_m(T_hi) = T_f`.
pub fn equilibrium(p: &PlantParams, gas: f64, d: &Disturbance) -> Result<PlantState> {
    if !(gas > 0.0) || !(d.demand > 0.0) {
        return Err(Error::InvalidArgument("equilibrium needs positive gas flow and demand".into()));
    }
    if d.inlet_temp >= p.flame_temp {
        return Err(Error::InvalidArgument("inlet temperature at or above flame temperature".into()));
    }
    let a = d.demand * p.water_heat / (p.k_lm * p.tank_area);
    let plate = |t: f64| t + a * (t - d.inlet_temp);
    let balance = |t: f64| {
        let tm = plate(t);
        -p.k_lm * p.tank_area * (tm - t) + p.sigma * p.k_f * gas * (p.flame_temp.powi(4) - tm.powi(4))
    };
    let mut lo = d.inlet_temp;
    let mut hi = (p.flame_temp + a * d.inlet_temp) / (1.0 + a);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if balance(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    Ok(PlantState {
        water: t,
        plate: plate(t),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thermal_equilibrium_has_zero_derivatives() {
        let p = PlantParams::default();
        let x = PlantState { water: 298.0, plate: 298.0 };
        let (a, b) = derivatives(&p, &x, 0.0, &p.nominal_disturbance());
        assert_eq!((a, b), (0.0, 0.0));
    }

    #[test]
    fn radiation_vanishes_at_flame_temperature() {
        let p = PlantParams::default();
        let x = PlantState { water: 1200.0, plate: 1200.0 };
        let d = Disturbance { demand: 1.0, inlet_temp: 1200.0 };
        assert_eq!(derivatives(&p, &x, 0.15, &d), (0.0, 0.0));
    }

    #[test]
    fn nominal_point_matches_hand_evaluation() {
        // T=298, T_m=400, w_c=0.1, w=1, T_i=298.
        // exchange = 3326.4 * pi/4 * 102 = 266486.1...
        // dT   = (exchange / 4180) / (997.8 * pi/4 * 2)
        // dT_m = (-exchange + 5.67e-8 * 8 * 0.1 * (1200^4 - 400^4)) / (617.32 * 481)
        let p = PlantParams::default();
        let (a, b) = derivatives(&p, &PlantState { water: 298.0, plate: 400.0 }, 0.1, &p.nominal_disturbance());
        let exchange = 3326.4 * 0.785_398_163_397_448_3 * 102.0;
        let radiation = 5.67e-8 * 8.0 * 0.1 * (2_073_600_000_000.0 - 25_600_000_000.0);
        assert!((a - exchange / 4180.0 / (997.8 * 0.785_398_163_397_448_3 * 2.0)).abs() < 1e-15);
        assert!((b - (radiation - exchange) / (617.32 * 481.0)).abs() < 1e-15);
        assert!((a - 0.040_674_747_6).abs() < 1e-10, "{a}");
        assert!((b + 0.584_589_378_5).abs() < 1e-9, "{b}");
    }

    #[test]
    fn plate_heats_water() {
        let p = PlantParams::default();
        let x = PlantState { water: 300.0, plate: 350.0 };
        let d = Disturbance { demand: 1.0, inlet_temp: 300.0 };
        assert!(derivatives(&p, &x, 0.1, &d).0 > 0.0);
    }

    #[test]
    fn equilibrium_zeroes_derivatives_and_is_monotone() {
        let p = PlantParams::default();
        let d = p.nominal_disturbance();
        let mut last = 0.0;
        for gas in [0.05, 0.08, 0.11, 0.14, 0.18] {
            let x = equilibrium(&p, gas, &d).unwrap();
            let (a, b) = derivatives(&p, &x, gas, &d);
            assert!(a.abs() < 1e-10 && b.abs() < 1e-10);
            assert!(x.water > last);
            last = x.water;
        }
    }
}
