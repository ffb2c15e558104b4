use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::mhe::{mhe_estimate, MheConfig, MheResult, MheWindow};
use crate::augment::{check_schur, check_structural, solve_equilibrium, Bounds, Equilibrium, NewtonOptions};
use crate::error::{Error, Result};
use crate::linalg::inf_norm;
use crate::mpc::{solve_ocp, MpcConfig, Ocp, OcpSolution, StatePrediction, StepDiagnostics, WeightMatrices};
use crate::nnarx::{Disturbed, NarxDynamics};
use crate::scalar::{lit, to_f64, Real};

/// Equilibrium of the model under the constant matched disturbance `d`.
pub fn deb_target<T: Real, M: NarxDynamics<T>>(
    model: &M,
    y_ref: &DVector<T>,
    d: &DVector<T>,
    u_guess: &DVector<T>,
    bounds: Option<&Bounds<T>>,
    newton: &NewtonOptions,
) -> Result<Equilibrium<T>> {
    let dist = Disturbed::new(model, d.clone());
    let eq = solve_equilibrium(&dist, y_ref, u_guess, bounds, newton)?;
    let (a, b) = dist.jacobians(&eq.x, &eq.u);
    let schur = check_schur(&a);
    if !schur.stable {
        return Err(Error::NotSchurStable {
            spectral_radius: schur.spectral_radius,
        });
    }
    let c = model.layout().shift_matrices::<T>().c;
    let report = check_structural(&a, &b, &c)?;
    if !report.passed() {
        return Err(Error::StructuralCheck {
            reachable: report.reachable,
            reconstructible: report.reconstructible,
            dc_gain_nonsingular: report.dc_gain_nonsingular,
        });
    }
    Ok(eq)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DebConfig {
    pub mpc: MpcConfig,
    pub mhe: MheConfig,
    pub newton: NewtonOptions,
}

impl Default for DebConfig {
    fn default() -> Self {
        Self {
            mpc: MpcConfig::default(),
            mhe: MheConfig::default(),
            newton: NewtonOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DebStep<T: Real> {
    pub u: DVector<T>,
    /// Estimate used for this step.
    pub estimate: DVector<T>,
    pub mhe: Option<MheResult<T>>,
    pub diagnostics: StepDiagnostics,
    pub solution: OcpSolution<T>,
}

/// Offset-free MPC through a matched input-disturbance estimate: moving
/// horizon estimation of `d`, target recomputation and a terminal-constraint
/// MPC on the disturbed model.
#[derive(Clone, Debug)]
pub struct DebMpc<T: Real, M: NarxDynamics<T>> {
    model: M,
    config: DebConfig,
    bounds: Bounds<T>,
    weights: WeightMatrices<T>,
    y_ref: Option<DVector<T>>,
    estimate: DVector<T>,
    estimation: bool,
    target: Option<Equilibrium<T>>,
    /// `(x_k, u_k)` of past steps, oldest first.
    history: VecDeque<(DVector<T>, DVector<T>)>,
    plan: Option<Vec<DVector<T>>>,
    multiplier: Option<DVector<T>>,
}

impl<T: Real, M: NarxDynamics<T>> DebMpc<T, M> {
    pub fn new(model: M, bounds: Bounds<T>, config: DebConfig) -> Result<Self> {
        config.mpc.validate()?;
        config.mhe.validate()?;
        let layout = model.layout();
        if bounds.lower.len() != layout.inputs || bounds.upper.len() != layout.inputs {
            return Err(Error::Dimension("input box does not match the model".into()));
        }
        let weights = config.mpc.weights.matrices(&layout)?;
        Ok(Self {
            model,
            config,
            bounds,
            weights,
            y_ref: None,
            estimate: DVector::zeros(layout.inputs),
            estimation: true,
            target: None,
            history: VecDeque::new(),
            plan: None,
            multiplier: None,
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn estimate(&self) -> &DVector<T> {
        &self.estimate
    }

    pub fn target(&self) -> Option<&Equilibrium<T>> {
        self.target.as_ref()
    }

    /// Overrides the disturbance estimate.
    pub fn set_estimate(&mut self, d: DVector<T>) -> Result<()> {
        self.estimate = d;
        self.retarget()
    }

    /// Turns the estimator on or off; when off the estimate stays frozen.
    pub fn set_estimation(&mut self, enabled: bool) {
        self.estimation = enabled;
    }

    pub fn set_setpoint(&mut self, y_ref: &DVector<T>) -> Result<&Equilibrium<T>> {
        self.y_ref = Some(y_ref.clone());
        self.retarget()?;
        Ok(self.target.as_ref().unwrap())
    }

    fn retarget(&mut self) -> Result<()> {
        let Some(y_ref) = &self.y_ref else {
            return Ok(());
        };
        let guess = match &self.target {
            Some(t) => t.u.clone(),
            None => (&self.bounds.lower + &self.bounds.upper) / lit::<T>(2.0),
        };
        let target = deb_target(&self.model, y_ref, &self.estimate, &guess, Some(&self.bounds), &self.config.newton)?;
        if self.target.as_ref().map_or(true, |t| (&t.u - &target.u).amax() > T::zero()) {
            self.multiplier = None;
        }
        self.target = Some(target);
        Ok(())
    }

    fn window(&self, x: &DVector<T>) -> Option<MheWindow<T>> {
        if self.history.is_empty() {
            return None;
        }
        let start = self.history.front().unwrap().0.clone();
        let inputs = self.history.iter().map(|(_, u)| u.clone()).collect();
        let layout = self.model.layout();
        let outputs = self
            .history
            .iter()
            .skip(1)
            .map(|(x, _)| layout.output(x))
            .chain(std::iter::once(layout.output(x)))
            .collect();
        Some(MheWindow { start, inputs, outputs })
    }

    /// Estimates `d`, recomputes the target and solves the MPC from `x_k`.
    pub fn step(&mut self, x: &DVector<T>) -> Result<DebStep<T>> {
        let started = Instant::now();
        let mut mhe = None;
        if self.estimation {
            if let Some(window) = self.window(x) {
                let res = mhe_estimate(&self.model, &window, &self.estimate, &self.config.mhe)?;
                if res.converged {
                    self.estimate = res.estimate.clone();
                } else {
                    log::warn!("disturbance estimate did not converge; keeping the prior");
                }
                mhe = Some(res);
                match self.retarget() {
                    Ok(()) => {}
                    Err(e) => log::warn!("target update failed, keeping the previous target: {e}"),
                }
            }
        }
        let target = self.target.clone().ok_or_else(|| Error::InvalidArgument("no setpoint set".into()))?;
        let dist = Disturbed::new(&self.model, self.estimate.clone());
        let pred = StatePrediction::new(&dist);
        let ocp = Ocp {
            model: &pred,
            initial_state: x.clone(),
            state_target: target.x.clone(),
            output_target: target.y.clone(),
            input_target: target.u.clone(),
            q: self.weights.q_x.clone(),
            r_e: self.weights.r_e.clone(),
            r_u: self.weights.r_u.clone(),
            lower: self.bounds.lower.clone(),
            upper: self.bounds.upper.clone(),
            horizon: self.config.mpc.horizon,
            control_horizon: self.config.mpc.control_horizon(),
            terminal: self.config.mpc.terminal.clone(),
        };
        ocp.validate()?;
        let (initial, warm) = match &self.plan {
            Some(plan) => {
                let z = ocp.pack(plan);
                let r = to_f64(inf_norm(&ocp.terminal_residual(&ocp.rollout(&z))));
                (z, r)
            }
            None => (ocp.pack(&[target.u.clone()]), f64::NAN),
        };
        let sol = solve_ocp(&ocp, &initial, self.multiplier.as_ref(), &self.config.mpc.solver);
        if !sol.converged {
            log::warn!(
                "DEB-MPC solve not converged (terminal residual {:.3e}); applying best-effort move",
                to_f64(sol.terminal_residual)
            );
        }
        let u = self.bounds.clamp(&sol.inputs[0]);
        let diagnostics = StepDiagnostics::from_solution(&sol, warm, started);
        self.plan = Some(crate::mpc::shift_plan(&sol.inputs, &target.u));
        self.multiplier = Some(sol.multiplier.clone());
        self.history.push_back((x.clone(), u.clone()));
        while self.history.len() > self.config.mhe.window {
            self.history.pop_front();
        }
        Ok(DebStep {
            u,
            estimate: self.estimate.clone(),
            mhe,
            diagnostics,
            solution: sol,
        })
    }
}
