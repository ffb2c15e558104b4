use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::problem::TerminalMode;
use super::solver::SolverOptions;
use crate::error::{Error, Result};
use crate::linalg::block_diag;
use crate::nnarx::StateLayout;
use crate::scalar::{lit, Real};

/// Scalar weights applied per channel. `q_x` overrides the default state
/// weight `blockdiag(diag(r_e, r_u), ...)` with an explicit diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcWeights {
    pub r_e: f64,
    pub r_u: f64,
    pub q_xi: f64,
    pub q_theta: f64,
    pub q_x: Option<Vec<f64>>,
}

impl Default for MpcWeights {
    fn default() -> Self {
        Self {
            r_e: 10.0,
            r_u: 0.1,
            q_xi: 1.0,
            q_theta: 1e-5,
            q_x: None,
        }
    }
}

/// Weight matrices for a given layout.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrices<T: Real> {
    pub q_x: DMatrix<T>,
    pub q_xi: DMatrix<T>,
    pub q_theta: DMatrix<T>,
    pub r_e: DMatrix<T>,
    pub r_u: DMatrix<T>,
}

impl<T: Real> WeightMatrices<T> {
    /// `diag(Q_x, Q_xi, Q_theta)`.
    pub fn q(&self) -> DMatrix<T> {
        block_diag(&[&self.q_x, &self.q_xi, &self.q_theta])
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            q_x: &self.q_x * factor,
            q_xi: &self.q_xi * factor,
            q_theta: &self.q_theta * factor,
            r_e: &self.r_e * factor,
            r_u: &self.r_u * factor,
        }
    }
}

impl MpcWeights {
    pub fn validate(&self) -> Result<()> {
        let scalars = [self.r_e, self.r_u, self.q_xi, self.q_theta];
        if scalars.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
        }
        if let Some(q) = &self.q_x {
            if q.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(Error::InvalidArgument("state weights must be finite and non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn matrices<T: Real>(&self, layout: &StateLayout) -> Result<WeightMatrices<T>> {
        self.validate()?;
        let m = layout.inputs;
        let p = layout.outputs;
        let n = layout.state_dim();
        let q_x = match &self.q_x {
            Some(d) => {
                if d.len() != n {
                    return Err(Error::Dimension(format!("q_x has {} entries, state has {n}", d.len())));
                }
                DMatrix::from_diagonal(&DVector::from_iterator(n, d.iter().map(|&v| lit::<T>(v))))
            }
            None => {
                let mut diag = DVector::zeros(n);
                for i in 0..layout.horizon {
                    diag.rows_mut(layout.y_offset(i), p).fill(lit(self.r_e));
                    diag.rows_mut(layout.u_offset(i), m).fill(lit(self.r_u));
                }
                DMatrix::from_diagonal(&diag)
            }
        };
        let eye = |k: usize, w: f64| DMatrix::<T>::identity(k, k) * lit::<T>(w);
        Ok(WeightMatrices {
            q_x,
            q_xi: eye(m, self.q_xi),
            q_theta: eye(m, self.q_theta),
            r_e: eye(p, self.r_e),
            r_u: eye(m, self.r_u),
        })
    }
}

/// Controller configuration shared by both MPC schemes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub horizon: usize,
    /// Number of free moves; `None` means the full horizon.
    pub control_horizon: Option<usize>,
    pub weights: MpcWeights,
    pub terminal: TerminalMode,
    pub solver: SolverOptions,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 50,
            control_horizon: None,
            weights: MpcWeights::default(),
            terminal: TerminalMode::Equality,
            solver: SolverOptions::default(),
        }
    }
}

impl MpcConfig {
    pub fn control_horizon(&self) -> usize {
        self.control_horizon.unwrap_or(self.horizon)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("prediction horizon must be at least 1".into()));
        }
        let nc = self.control_horizon();
        if nc == 0 || nc > self.horizon {
            return Err(Error::InvalidArgument(format!(
                "control horizon {nc} must lie in 1..={}",
                self.horizon
            )));
        }
        if let TerminalMode::Penalty(w) = self.terminal {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidArgument("terminal penalty must be positive".into()));
            }
        }
        self.weights.validate()
    }
}
