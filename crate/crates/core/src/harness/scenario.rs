use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{Disturbance, DisturbanceProfile, Schedule};

/// Closed-loop test case: a piecewise-constant reference, disturbance
/// schedules and a duration. Times are in seconds, the duration in samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub name: String,
    /// `(start time s, setpoint K)`, the first at time 0.
    pub setpoints: Vec<(f64, f64)>,
    pub disturbances: DisturbanceProfile,
    pub duration: usize,
    /// Gas flow at which the plant rests before the run, kg/s.
    pub initial_input: f64,
}

impl Default for ScenarioConfig {
    /// Three holds of 300 samples; a 10% demand increase halfway through the
    /// second hold and a 5 K inlet-temperature drop halfway through the third.
    fn default() -> Self {
        let ts = 120.0;
        Self {
            name: "three-setpoint".into(),
            setpoints: vec![(0.0, 325.0), (300.0 * ts, 318.0), (600.0 * ts, 322.0)],
            disturbances: DisturbanceProfile {
                demand: Schedule(vec![(0.0, 1.0), (450.0 * ts, 1.1)]),
                inlet_temp: Schedule(vec![(0.0, 298.0), (750.0 * ts, 293.0)]),
            },
            duration: 900,
            initial_input: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Setpoint,
    Disturbance,
}

/// A step in the reference or in a disturbance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub sample: usize,
    pub kind: EventKind,
    pub label: String,
}

impl ScenarioConfig {
    /// Single setpoint held for `duration` samples with nominal disturbances.
    pub fn hold(name: &str, setpoint: f64, duration: usize, nominal: Disturbance, initial_input: f64) -> Self {
        Self {
            name: name.into(),
            setpoints: vec![(0.0, setpoint)],
            disturbances: DisturbanceProfile::constant(nominal),
            duration,
            initial_input,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.setpoints.is_empty() || self.setpoints[0].0 != 0.0 {
            return Err(Error::InvalidArgument("the reference schedule must start at time 0".into()));
        }
        Schedule(self.setpoints.clone()).validate("reference")?;
        self.disturbances.validate()?;
        if self.duration == 0 {
            return Err(Error::InvalidArgument("scenario duration must be positive".into()));
        }
        Ok(())
    }

    pub fn setpoint_at(&self, t: f64) -> f64 {
        Schedule(self.setpoints.clone()).at(t)
    }

    /// Distinct setpoint values in schedule order.
    pub fn setpoint_values(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for (_, v) in &self.setpoints {
            if !out.contains(v) {
                out.push(*v);
            }
        }
        out
    }

    /// Sample index of the first sample at or after `t`.
    fn sample_of(t: f64, sample_time: f64) -> usize {
        (t / sample_time - 1e-9).ceil().max(0.0) as usize
    }

    /// Reference and disturbance steps inside the run, sorted by sample.
    pub fn events(&self, sample_time: f64) -> Vec<Event> {
        let mut events = Vec::new();
        for (i, (t, v)) in self.setpoints.iter().enumerate() {
            events.push(Event {
                sample: Self::sample_of(*t, sample_time),
                kind: EventKind::Setpoint,
                label: if i == 0 { format!("setpoint {v} K") } else { format!("setpoint -> {v} K") },
            });
        }
        for (name, sched) in [("w", &self.disturbances.demand), ("Ti", &self.disturbances.inlet_temp)] {
            for (t, v) in sched.0.iter().skip(1) {
                events.push(Event {
                    sample: Self::sample_of(*t, sample_time),
                    kind: EventKind::Disturbance,
                    label: format!("{name} -> {v}"),
                });
            }
        }
        events.retain(|e| e.sample < self.duration);
        events.sort_by_key(|e| (e.sample, e.kind == EventKind::Disturbance));
        events
    }
}
