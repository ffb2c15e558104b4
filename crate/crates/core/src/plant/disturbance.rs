use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-constant signal: `(start time, value)` points held until the
/// next one. Before the first point the first value applies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule(pub Vec<(f64, f64)>);

impl Schedule {
    pub fn constant(v: f64) -> Self {
        Self(vec![(0.0, v)])
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::InvalidArgument(format!("{what} schedule is empty")));
        }
        if self.0.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidArgument(format!("{what} schedule times must be strictly increasing")));
        }
        if self.0.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{what} schedule has non-finite entries")));
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> f64 {
        let idx = self.0.partition_point(|(start, _)| *start <= t);
        self.0[idx.saturating_sub(1)].1
    }

    /// Start times of the steps after the first point.
    pub fn switch_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().skip(1).map(|(t, _)| *t)
    }
}

/// Disturbance values at one instant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    /// Water demand `w`, kg/s.
    pub demand: f64,
    /// Inlet temperature `T_i`, K.
    pub inlet_temp: f64,
}

/// Zero-order-hold schedules of water demand and inlet temperature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceProfile {
    pub demand: Schedule,
    pub inlet_temp: Schedule,
}

impl DisturbanceProfile {
    pub fn constant(d: Disturbance) -> Self {
        Self {
            demand: Schedule::constant(d.demand),
            inlet_temp: Schedule::constant(d.inlet_temp),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.demand.validate("demand")?;
        self.inlet_temp.validate("inlet temperature")?;
        if self.demand.0.iter().any(|(_, w)| *w <= 0.0) {
            return Err(Error::InvalidArgument("water demand must stay positive".into()));
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> Disturbance {
        Disturbance {
            demand: self.demand.at(t),
            inlet_temp: self.inlet_temp.at(t),
        }
    }

    /// Every time at which either channel steps.
    pub fn switch_times(&self) -> Vec<f64> {
        let mut times: Vec<f64> = self.demand.switch_times().chain(self.inlet_temp.switch_times()).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_order_hold() {
        let s = Schedule(vec![(0.0, 1.0), (100.0, 1.1), (200.0, 0.9)]);
        assert_eq!(s.at(-5.0), 1.0);
        assert_eq!(s.at(99.9), 1.0);
        assert_eq!(s.at(100.0), 1.1);
        assert_eq!(s.at(1e6), 0.9);
        assert!(s.validate("w").is_ok());
        assert!(Schedule(vec![(1.0, 1.0), (1.0, 2.0)]).validate("w").is_err());
    }

    #[test]
    fn switch_times_merge_channels() {
        let p = DisturbanceProfile {
            demand: Schedule(vec![(0.0, 1.0), (300.0, 1.1)]),
            inlet_temp: Schedule(vec![(0.0, 298.0), (300.0, 293.0), (600.0, 298.0)]),
        };
        assert_eq!(p.switch_times(), vec![300.0, 600.0]);
    }
}
