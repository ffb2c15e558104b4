use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{derivatives, equilibrium, Disturbance, DisturbanceProfile, PlantParams, PlantState};
use crate::bounds::InputBox;
use crate::data::IoSequence;
use crate::error::{Error, Result};

/// Sampled-data water heater: RK4 integration of the plant over each
/// sampling period with the input and disturbances held constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaterHeater {
    pub params: PlantParams,
    pub input_box: InputBox,
    /// Sampling period, s.
    pub sample_time: f64,
    /// RK4 steps per sampling period.
    pub substeps: usize,
}

impl Default for WaterHeater {
    fn default() -> Self {
        Self {
            params: PlantParams::default(),
            input_box: InputBox::water_heater(),
            sample_time: 120.0,
            substeps: 8,
        }
    }
}

/// One row per sample of an open- or closed-loop plant run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantRecord {
    pub t: Vec<f64>,
    pub u_applied: Vec<f64>,
    pub demand: Vec<f64>,
    pub inlet_temp: Vec<f64>,
    pub water: Vec<f64>,
    pub plate: Vec<f64>,
    /// Measured output (water temperature plus optional noise).
    pub measured: Vec<f64>,
}

#[derive(Serialize)]
struct CsvRow {
    t: f64,
    u_applied: f64,
    w: f64,
    #[serde(rename = "Ti")]
    ti: f64,
    #[serde(rename = "T")]
    water: f64,
    #[serde(rename = "Tm")]
    plate: f64,
}

impl PlantRecord {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// CSV `t,u_applied,w,Ti,T,Tm`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for k in 0..self.len() {
            w.serialize(CsvRow {
                t: self.t[k],
                u_applied: self.u_applied[k],
                w: self.demand[k],
                ti: self.inlet_temp[k],
                water: self.water[k],
                plate: self.plate[k],
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_io_sequence(&self, sample_time: f64) -> Result<IoSequence> {
        IoSequence::new(
            sample_time,
            self.u_applied.iter().map(|u| vec![*u]).collect(),
            self.measured.iter().map(|y| vec![*y]).collect(),
        )
    }
}

impl WaterHeater {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.input_box.validate()?;
        if self.input_box.dim() != 1 {
            return Err(Error::InvalidArgument("the water heater has a single input".into()));
        }
        if !(self.sample_time > 0.0) || self.substeps == 0 {
            return Err(Error::InvalidArgument("need sample_time > 0 and substeps >= 1".into()));
        }
        Ok(())
    }

    pub fn clamp(&self, gas: f64) -> f64 {
        gas.clamp(self.input_box.lower[0], self.input_box.upper[0])
    }

    /// Steady state for a constant gas flow and disturbance.
    pub fn equilibrium(&self, gas: f64, d: &Disturbance) -> Result<PlantState> {
        equilibrium(&self.params, gas, d)
    }

    /// Default start: rest at nominal disturbances with `w_c = 0.1`.
    pub fn default_initial_state(&self) -> Result<PlantState> {
        self.equilibrium(self.clamp(0.1), &self.params.nominal_disturbance())
    }

    /// Advances one sampling period from time `t`. The requested gas flow is
    /// clamped into the input box; disturbances are those scheduled at `t`.
    pub fn step(&self, x: &PlantState, gas_request: f64, profile: &DisturbanceProfile, t: f64) -> Result<PlantState> {
        let gas = self.clamp(gas_request);
        let d = profile.at(t);
        self.integrate(x, gas, &d, self.substeps, t)
    }

    pub(crate) fn integrate(&self, x: &PlantState, gas: f64, d: &Disturbance, substeps: usize, t: f64) -> Result<PlantState> {
        let h = self.sample_time / substeps as f64;
        let f = |s: &PlantState| derivatives(&self.params, s, gas, d);
        let add = |s: &PlantState, k: (f64, f64), c: f64| PlantState {
            water: s.water + c * k.0,
            plate: s.plate + c * k.1,
        };
        let mut s = *x;
        for _ in 0..substeps {
            let k1 = f(&s);
            let k2 = f(&add(&s, k1, 0.5 * h));
            let k3 = f(&add(&s, k2, 0.5 * h));
            let k4 = f(&add(&s, k3, h));
            s = PlantState {
                water: s.water + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
                plate: s.plate + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
            };
        }
        if !(s.water.is_finite() && s.plate.is_finite() && s.water > 0.0 && s.plate > 0.0) {
            return Err(Error::SimulationFault {
                time: t,
                reason: format!("state left the physical range: T = {}, T_m = {}", s.water, s.plate),
            });
        }
        Ok(s)
    }

    /// Drives the plant with `inputs` from `x0`, recording the output before
    /// each input is applied. Optional Gaussian measurement noise
    /// `(std, seed)` is added to the recorded output only.
    pub fn open_loop_experiment(
        &self,
        inputs: &[f64],
        profile: &DisturbanceProfile,
        x0: PlantState,
        noise: Option<(f64, u64)>,
    ) -> Result<PlantRecord> {
        self.validate()?;
        profile.validate()?;
        let mut noise = match noise {
            Some((std, seed)) if std > 0.0 => Some((
                Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?,
                ChaCha8Rng::seed_from_u64(seed),
            )),
            _ => None,
        };
        let mut rec = PlantRecord::default();
        let mut x = x0;
        for (k, &u) in inputs.iter().enumerate() {
            let t = k as f64 * self.sample_time;
            let gas = self.clamp(u);
            let d = profile.at(t);
            rec.t.push(t);
            rec.u_applied.push(gas);
            rec.demand.push(d.demand);
            rec.inlet_temp.push(d.inlet_temp);
            rec.water.push(x.water);
            rec.plate.push(x.plate);
            let e = noise.as_mut().map_or(0.0, |(dist, rng)| dist.sample(rng));
            rec.measured.push(x.water + e);
            x = self.integrate(&x, gas, &d, self.substeps, t)?;
        }
        Ok(rec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steady_state_does_not_move() {
        let plant = WaterHeater::default();
        let d = plant.params.nominal_disturbance();
        let x = plant.equilibrium(0.1, &d).unwrap();
        let next = plant.step(&x, 0.1, &DisturbanceProfile::constant(d), 0.0).unwrap();
        assert!((next.water - x.water).abs() < 1e-9 && (next.plate - x.plate).abs() < 1e-9);
    }

    #[test]
    fn step_doubling_converges() {
        let plant = WaterHeater::default();
        let d = plant.params.nominal_disturbance();
        // moderate move from rest
        let x = plant.equilibrium(0.1, &d).unwrap();
        let a = plant.integrate(&x, 0.12, &d, 8, 0.0).unwrap();
        let b = plant.integrate(&x, 0.12, &d, 16, 0.0).unwrap();
        assert!((a.water - b.water).abs() < 1e-6, "{}", a.water - b.water);
        assert!((a.plate - b.plate).abs() < 1e-4);
        // full-range move: the fast plate mode dominates the local error
        let x = plant.equilibrium(0.05, &d).unwrap();
        let a = plant.integrate(&x, 0.18, &d, 8, 0.0).unwrap();
        let b = plant.integrate(&x, 0.18, &d, 16, 0.0).unwrap();
        assert!((a.water - b.water).abs() < 5e-6 && (a.plate - b.plate).abs() < 1e-4);
        let c = plant.integrate(&x, 0.18, &d, 32, 0.0).unwrap();
        assert!((b.water - c.water).abs() < (a.water - b.water).abs() / 10.0);
    }

    #[test]
    fn request_is_saturated() {
        let plant = WaterHeater::default();
        let d = plant.params.nominal_disturbance();
        let profile = DisturbanceProfile::constant(d);
        let x = plant.default_initial_state().unwrap();
        let over = plant.step(&x, 0.3, &profile, 0.0).unwrap();
        let at = plant.step(&x, 0.18, &profile, 0.0).unwrap();
        assert_eq!(over, at);
        let rec = plant.open_loop_experiment(&[0.3, 0.0], &profile, x, None).unwrap();
        assert_eq!(rec.u_applied, vec![0.18, 0.05]);
    }

    #[test]
    fn experiment_is_deterministic_and_flat_at_rest() {
        let plant = WaterHeater::default();
        let profile = DisturbanceProfile::constant(plant.params.nominal_disturbance());
        let x = plant.default_initial_state().unwrap();
        let rec = plant.open_loop_experiment(&[0.1; 50], &profile, x, None).unwrap();
        assert!(rec.measured.iter().all(|y| (y - x.water).abs() < 1e-8));
        let inputs: Vec<f64> = (0..40).map(|k| if k % 10 < 5 { 0.07 } else { 0.15 }).collect();
        let a = plant.open_loop_experiment(&inputs, &profile, x, Some((0.1, 4))).unwrap();
        let b = plant.open_loop_experiment(&inputs, &profile, x, Some((0.1, 4))).unwrap();
        assert_eq!(a, b);
        assert!(a.measured.iter().zip(&a.water).any(|(m, w)| m != w));
    }

    #[test]
    fn trace_csv_header() {
        let plant = WaterHeater::default();
        let profile = DisturbanceProfile::constant(plant.params.nominal_disturbance());
        let rec = plant
            .open_loop_experiment(&[0.1, 0.1], &profile, plant.default_initial_state().unwrap(), None)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plant.csv");
        rec.write_csv(&path).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("t,u_applied,w,Ti,T,Tm\n"));
    }
}
