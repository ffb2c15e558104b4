use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Componentwise input box `lower <= u <= upper`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl InputBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    /// Gas-flow saturation of the water heater, kg/s.
    pub fn water_heater() -> Self {
        Self {
            lower: vec![0.05],
            upper: vec![0.18],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::InvalidArgument("input box bounds must be non-empty and of equal length".into()));
        }
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!("input box channel {i}: need finite lower < upper, got [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn clamp(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
            .collect()
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        u.len() == self.dim()
            && u.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= lo - tol && *v <= hi + tol)
    }

    /// Largest amount by which `u` leaves the box (0 inside).
    pub fn violation(&self, u: &[f64]) -> f64 {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_and_violation() {
        let b = InputBox::water_heater();
        assert_eq!(b.clamp(&[0.3]), vec![0.18]);
        assert_eq!(b.clamp(&[0.0]), vec![0.05]);
        assert!((b.violation(&[0.2]) - 0.02).abs() < 1e-15);
        assert_eq!(b.violation(&[0.1]), 0.0);
        assert!(b.contains(&[0.05], 0.0) && !b.contains(&[0.04], 1e-9));
    }

    #[test]
    fn rejects_inverted_bounds() {
        assert!(InputBox::new(vec![1.0], vec![0.0]).is_err());
        assert!(InputBox::new(vec![], vec![]).is_err());
    }
}
