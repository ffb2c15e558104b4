use std::time::Instant;

use nalgebra::DVector;
use serde::Serialize;

use super::augmented::AugmentedPrediction;
use super::problem::{Ocp, PredictionModel};
use super::solver::{solve_ocp, OcpSolution};
use super::weights::{MpcConfig, WeightMatrices};
use crate::augment::{design_setpoint, lift, AugmentedModel, AugmentedTarget, Bounds, SetpointDesign, TuningConfig};
use crate::error::{Error, Result};
use crate::linalg::inf_norm;
use crate::nnarx::NarxDynamics;
use crate::scalar::{to_f64, Real};

/// Per-step diagnostic record.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub cost: f64,
    pub terminal_residual: f64,
    /// Terminal residual of the shifted warm start before re-optimization
    /// (`NaN` when there was none).
    pub warm_start_residual: f64,
    pub optimality: f64,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub converged: bool,
    pub wall_time: f64,
}

impl StepDiagnostics {
    pub(crate) fn from_solution<T: Real>(sol: &OcpSolution<T>, warm: f64, started: Instant) -> Self {
        Self {
            cost: to_f64(sol.cost),
            terminal_residual: to_f64(sol.terminal_residual),
            warm_start_residual: warm,
            optimality: to_f64(sol.optimality),
            inner_iterations: sol.inner_iterations,
            outer_iterations: sol.outer_iterations,
            converged: sol.converged,
            wall_time: started.elapsed().as_secs_f64(),
        }
    }
}

/// Output of one receding-horizon step of the offset-free controller.
#[derive(Clone, Debug)]
pub struct MpcStep<T: Real> {
    /// Applied input `u_k`.
    pub u: DVector<T>,
    pub v: DVector<T>,
    /// Integrator state used for this step.
    pub xi: DVector<T>,
    /// Derivative action `gamma_k = v_k - theta_k`.
    pub gamma: DVector<T>,
    pub diagnostics: StepDiagnostics,
    pub solution: OcpSolution<T>,
}

/// Shifts a plan by one step and appends `tail`.
pub(crate) fn shift_plan<T: Real>(plan: &[DVector<T>], tail: &DVector<T>) -> Vec<DVector<T>> {
    let mut next: Vec<DVector<T>> = plan.iter().skip(1).cloned().collect();
    next.push(tail.clone());
    next
}

/// Offset-free MPC on the model augmented with integral and derivative
/// actions. Works in the model's (normalized) units.
#[derive(Clone, Debug)]
pub struct OffsetFreeMpc<T: Real, M: NarxDynamics<T>> {
    model: M,
    config: MpcConfig,
    tuning: TuningConfig,
    bounds: Bounds<T>,
    weights: WeightMatrices<T>,
    design: Option<SetpointDesign<T>>,
    target: Option<AugmentedTarget<T>>,
    xi: DVector<T>,
    theta: DVector<T>,
    plan: Option<Vec<DVector<T>>>,
    multiplier: Option<DVector<T>>,
}

impl<T: Real, M: NarxDynamics<T>> OffsetFreeMpc<T, M> {
    pub fn new(model: M, bounds: Bounds<T>, config: MpcConfig, tuning: TuningConfig) -> Result<Self> {
        config.validate()?;
        let layout = model.layout();
        if bounds.lower.len() != layout.inputs || bounds.upper.len() != layout.inputs {
            return Err(Error::Dimension("input box does not match the model".into()));
        }
        let weights = config.weights.matrices(&layout)?;
        let m = layout.inputs;
        Ok(Self {
            model,
            config,
            tuning,
            bounds,
            weights,
            design: None,
            target: None,
            xi: DVector::zeros(m),
            theta: DVector::zeros(m),
            plan: None,
            multiplier: None,
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    pub fn design(&self) -> Option<&SetpointDesign<T>> {
        self.design.as_ref()
    }

    pub fn target(&self) -> Option<&AugmentedTarget<T>> {
        self.target.as_ref()
    }

    pub fn integrator(&self) -> (&DVector<T>, &DVector<T>) {
        (&self.xi, &self.theta)
    }

    pub fn set_integrator(&mut self, xi: DVector<T>, theta: DVector<T>) {
        self.xi = xi;
        self.theta = theta;
    }

    /// Re-solves the equilibrium, checks and gain for a new setpoint. The
    /// integrator state and the input plan carry over.
    pub fn set_setpoint(&mut self, y_ref: &DVector<T>) -> Result<&SetpointDesign<T>> {
        let guess = match &self.design {
            Some(d) => d.equilibrium.u.clone(),
            None => (&self.bounds.lower + &self.bounds.upper) / crate::scalar::lit::<T>(2.0),
        };
        let design = design_setpoint(&self.model, y_ref, &guess, Some(&self.bounds), &self.tuning)?;
        let target = lift(&design.equilibrium, &design.equilibrium.u);
        self.target = Some(target);
        self.design = Some(design);
        self.multiplier = None;
        Ok(self.design.as_ref().unwrap())
    }

    /// Bumpless start: `xi = u_prev`, `theta = v_bar`, so `v = v_bar`
    /// reproduces the last applied input.
    pub fn initialize(&mut self, u_prev: &DVector<T>) -> Result<()> {
        let target = self.target.as_ref().ok_or_else(|| Error::InvalidArgument("no setpoint set".into()))?;
        self.xi = u_prev.clone();
        self.theta = target.v.clone();
        self.plan = None;
        self.multiplier = None;
        Ok(())
    }

    fn augmented(&self) -> Result<AugmentedModel<'_, T, M>> {
        let design = self.design.as_ref().ok_or_else(|| Error::InvalidArgument("no setpoint set".into()))?;
        AugmentedModel::new(&self.model, design.gain.mu.clone(), design.equilibrium.y.clone())
    }

    pub fn augmented_state(&self, x: &DVector<T>) -> DVector<T> {
        let mut chi = DVector::zeros(x.len() + 2 * self.xi.len());
        chi.rows_mut(0, x.len()).copy_from(x);
        chi.rows_mut(x.len(), self.xi.len()).copy_from(&self.xi);
        chi.rows_mut(x.len() + self.xi.len(), self.theta.len()).copy_from(&self.theta);
        chi
    }

    /// Builds the OCP for the augmented state `chi`.
    pub fn problem<'p>(&'p self, pred: &'p AugmentedPrediction<'p, T, M>, chi: &DVector<T>) -> Result<Ocp<'p, T, AugmentedPrediction<'p, T, M>>> {
        let target = self.target.as_ref().ok_or_else(|| Error::InvalidArgument("no setpoint set".into()))?;
        let design = self.design.as_ref().unwrap();
        let ocp = Ocp {
            model: pred,
            initial_state: chi.clone(),
            state_target: target.chi.clone(),
            output_target: design.equilibrium.y.clone(),
            input_target: design.equilibrium.u.clone(),
            q: self.weights.q(),
            r_e: self.weights.r_e.clone(),
            r_u: self.weights.r_u.clone(),
            lower: self.bounds.lower.clone(),
            upper: self.bounds.upper.clone(),
            horizon: self.config.horizon,
            control_horizon: self.config.control_horizon(),
            terminal: self.config.terminal.clone(),
        };
        ocp.validate()?;
        Ok(ocp)
    }

    /// One receding-horizon step from the measured model state `x_k`.
    pub fn step(&mut self, x: &DVector<T>) -> Result<MpcStep<T>> {
        let started = Instant::now();
        let chi = self.augmented_state(x);
        let aug = self.augmented()?;
        let pred = AugmentedPrediction::new(aug);
        let ocp = self.problem(&pred, &chi)?;
        let u_bar = &self.design.as_ref().unwrap().equilibrium.u;
        let (initial, warm_residual) = match &self.plan {
            Some(plan) => {
                let z = ocp.pack(plan);
                let r = to_f64(inf_norm(&ocp.terminal_residual(&ocp.rollout(&z))));
                (z, r)
            }
            None => (ocp.pack(&vec![u_bar.clone(); ocp.horizon]), f64::NAN),
        };
        let sol = solve_ocp(&ocp, &initial, self.multiplier.as_ref(), &self.config.solver);
        if !sol.converged {
            log::warn!(
                "MPC solve not converged (terminal residual {:.3e}, optimality {:.3e}); applying best-effort move",
                to_f64(sol.terminal_residual),
                to_f64(sol.optimality)
            );
        }
        let u = self.bounds.clamp(&sol.inputs[0]);
        let v = pred.to_v(&chi, &u);
        let gamma = &v - &self.theta;
        let xi = self.xi.clone();
        let next = pred.step(&chi, &u);
        let n = x.len();
        let m = u.len();
        let diagnostics = StepDiagnostics::from_solution(&sol, warm_residual, started);
        let plan = shift_plan(&sol.inputs, u_bar);
        let multiplier = sol.multiplier.clone();
        drop(ocp);
        drop(pred);
        self.xi = next.rows(n, m).into_owned();
        self.theta = next.rows(n + m, m).into_owned();
        self.plan = Some(plan);
        self.multiplier = Some(multiplier);
        Ok(MpcStep {
            u,
            v,
            xi,
            gamma,
            diagnostics,
            solution: sol,
        })
    }
}
