use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::scalar::Real;

/// Discrete-time model as seen by the optimizer: state `s`, applied input `u`.
pub trait PredictionModel<T: Real> {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    fn step(&self, s: &DVector<T>, u: &DVector<T>) -> DVector<T>;

    /// `(s+, d s+/d s, d s+/d u)`.
    fn step_linearized(&self, s: &DVector<T>, u: &DVector<T>) -> (DVector<T>, DMatrix<T>, DMatrix<T>);

    /// Matrix `C_s` with `y = C_s s`.
    fn output_matrix(&self) -> DMatrix<T>;

    /// Input charged at the terminal stage, affine in the terminal state:
    /// `u_N = E s_N + e`. `None` leaves the terminal input out of the cost.
    fn terminal_input(&self) -> Option<(DMatrix<T>, DVector<T>)>;
}

/// Treatment of the terminal condition `s_N = s_target`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalMode {
    /// Hard equality, enforced by an augmented Lagrangian.
    Equality,
    /// Quadratic penalty `weight * ||s_N - s_target||^2` instead.
    Penalty(f64),
}

/// Finite-horizon problem: minimize
/// `sum_{i=0}^{N} ||s_i - s_t||_Q^2 + ||y_i - y_t||_Re^2 + ||u_i - u_t||_Ru^2`
/// subject to the model, the input box and the terminal condition.
#[derive(Clone, Debug)]
pub struct Ocp<'a, T: Real, P: PredictionModel<T>> {
    pub model: &'a P,
    pub initial_state: DVector<T>,
    pub state_target: DVector<T>,
    pub output_target: DVector<T>,
    pub input_target: DVector<T>,
    pub q: DMatrix<T>,
    pub r_e: DMatrix<T>,
    pub r_u: DMatrix<T>,
    pub lower: DVector<T>,
    pub upper: DVector<T>,
    pub horizon: usize,
    /// Free moves; input `i >= control_horizon - 1` repeats the last one.
    pub control_horizon: usize,
    pub terminal: TerminalMode,
}

impl<'a, T: Real, P: PredictionModel<T>> Ocp<'a, T, P> {
    pub fn validate(&self) -> Result<()> {
        let ns = self.model.state_dim();
        let m = self.model.input_dim();
        let p = self.model.output_dim();
        if self.horizon == 0 || self.control_horizon == 0 || self.control_horizon > self.horizon {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= control horizon ({}) <= horizon ({})",
                self.control_horizon, self.horizon
            )));
        }
        dim_check(
            self.initial_state.len() == ns
                && self.state_target.len() == ns
                && self.output_target.len() == p
                && self.input_target.len() == m
                && self.q.shape() == (ns, ns)
                && self.r_e.shape() == (p, p)
                && self.r_u.shape() == (m, m)
                && self.lower.len() == m
                && self.upper.len() == m,
            || "problem data sizes disagree with the prediction model".into(),
        )?;
        if self.lower.iter().zip(self.upper.iter()).any(|(l, u)| !(*l <= *u)) {
            return Err(Error::InvalidArgument("input box lower bound exceeds upper bound".into()));
        }
        Ok(())
    }

    pub fn decision_len(&self) -> usize {
        self.control_horizon * self.model.input_dim()
    }

    /// Block of the decision vector that drives stage `i`.
    pub fn block(&self, i: usize) -> usize {
        i.min(self.control_horizon - 1)
    }

    /// Expands a decision vector to the per-stage inputs.
    pub fn inputs(&self, z: &DVector<T>) -> Vec<DVector<T>> {
        let m = self.model.input_dim();
        (0..self.horizon).map(|i| z.rows(self.block(i) * m, m).into_owned()).collect()
    }

    /// Packs per-stage inputs (the first `control_horizon` are used).
    pub fn pack(&self, inputs: &[DVector<T>]) -> DVector<T> {
        let m = self.model.input_dim();
        let mut z = DVector::zeros(self.decision_len());
        for j in 0..self.control_horizon {
            let src = &inputs[j.min(inputs.len() - 1)];
            z.rows_mut(j * m, m).copy_from(src);
        }
        z
    }

    pub fn project(&self, z: &mut DVector<T>) {
        let m = self.model.input_dim();
        for (k, v) in z.iter_mut().enumerate() {
            *v = v.clamp(self.lower[k % m], self.upper[k % m]);
        }
    }

    pub fn rollout(&self, z: &DVector<T>) -> Vec<DVector<T>> {
        let mut states = Vec::with_capacity(self.horizon + 1);
        states.push(self.initial_state.clone());
        for u in self.inputs(z) {
            let next = self.model.step(states.last().unwrap(), &u);
            states.push(next);
        }
        states
    }

    /// Objective without terminal-condition terms.
    pub fn stage_cost(&self, states: &[DVector<T>], inputs: &[DVector<T>]) -> T {
        let c = self.model.output_matrix();
        let quad = |w: &DMatrix<T>, e: &DVector<T>| e.dot(&(w * e));
        let mut cost = T::zero();
        for (i, s) in states.iter().enumerate() {
            let es = s - &self.state_target;
            let ey = &c * s - &self.output_target;
            cost += quad(&self.q, &es) + quad(&self.r_e, &ey);
            if i < self.horizon {
                cost += quad(&self.r_u, &(&inputs[i] - &self.input_target));
            } else if let Some((e, e0)) = self.model.terminal_input() {
                cost += quad(&self.r_u, &(e * s + e0 - &self.input_target));
            }
        }
        cost
    }

    pub fn cost(&self, z: &DVector<T>) -> T {
        self.stage_cost(&self.rollout(z), &self.inputs(z))
    }

    pub fn terminal_residual(&self, states: &[DVector<T>]) -> DVector<T> {
        states.last().unwrap() - &self.state_target
    }
}

/// A NARX model used directly as the prediction model (state `x`, input `u`).
#[derive(Clone, Debug)]
pub struct StatePrediction<'a, T: Real, M: crate::nnarx::NarxDynamics<T>> {
    pub model: &'a M,
    c: DMatrix<T>,
}

impl<'a, T: Real, M: crate::nnarx::NarxDynamics<T>> StatePrediction<'a, T, M> {
    pub fn new(model: &'a M) -> Self {
        let c = model.layout().shift_matrices::<T>().c;
        Self { model, c }
    }
}

impl<'a, T: Real, M: crate::nnarx::NarxDynamics<T>> PredictionModel<T> for StatePrediction<'a, T, M> {
    fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.model.output_dim()
    }

    fn step(&self, s: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        self.model.step(s, u)
    }

    fn step_linearized(&self, s: &DVector<T>, u: &DVector<T>) -> (DVector<T>, DMatrix<T>, DMatrix<T>) {
        let (a, b) = self.model.jacobians(s, u);
        (self.model.step(s, u), a, b)
    }

    fn output_matrix(&self) -> DMatrix<T> {
        self.c.clone()
    }

    fn terminal_input(&self) -> Option<(DMatrix<T>, DVector<T>)> {
        None
    }
}
