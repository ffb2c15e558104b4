use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::scenario::{Event, ScenarioConfig};
use crate::augment::Bounds;
use crate::bounds::InputBox;
use crate::deb::DebMpc;
use crate::error::{Error, Result};
use crate::mpc::{OffsetFreeMpc, StepDiagnostics};
use crate::nnarx::{ModelBundle, NarxDynamics, NnarxModel, Scaling};
use crate::plant::{Disturbance, DisturbanceProfile, PlantState, WaterHeater};

/// Consecutive non-converged solves tolerated before a run is aborted.
pub const MAX_CONSECUTIVE_FAILURES: usize = 5;

/// Something that can be measured and driven, in physical units.
pub trait Plant {
    fn measure(&self) -> Vec<f64>;
    /// Applies `u` over one sampling period starting at time `t`.
    fn advance(&mut self, u: &[f64], t: f64) -> Result<()>;
    /// Disturbance acting at time `t`, if the plant has one to report.
    fn disturbance(&self, t: f64) -> Option<Disturbance>;
}

/// The simulated water heater under a disturbance schedule.
#[derive(Clone, Debug)]
pub struct WaterHeaterPlant {
    pub heater: WaterHeater,
    pub profile: DisturbanceProfile,
    pub state: PlantState,
}

impl WaterHeaterPlant {
    /// Starts at rest under the disturbances of time 0 with constant `gas`.
    pub fn at_rest(heater: WaterHeater, profile: DisturbanceProfile, gas: f64) -> Result<Self> {
        heater.validate()?;
        profile.validate()?;
        let state = heater.equilibrium(heater.clamp(gas), &profile.at(0.0))?;
        Ok(Self { heater, profile, state })
    }
}

impl Plant for WaterHeaterPlant {
    fn measure(&self) -> Vec<f64> {
        vec![self.state.water]
    }

    fn advance(&mut self, u: &[f64], t: f64) -> Result<()> {
        self.state = self.heater.step(&self.state, u[0], &self.profile, t)?;
        Ok(())
    }

    fn disturbance(&self, t: f64) -> Option<Disturbance> {
        Some(self.profile.at(t))
    }
}

/// The identified model used as the plant, optionally with a constant
/// matched input offset (physical units).
#[derive(Clone, Debug)]
pub struct ModelPlant {
    pub bundle: ModelBundle<f64>,
    pub state: DVector<f64>,
    pub offset: Vec<f64>,
}

impl ModelPlant {
    /// Starts at the model equilibrium reached with constant input `u`.
    pub fn at_rest(bundle: ModelBundle<f64>, u: &[f64], settle: usize) -> Self {
        let model = &bundle.model;
        let un = bundle.scaling.normalize_input::<f64>(u);
        let mut x = model.layout().repeated_state(&DVector::zeros(model.output_dim()), &un);
        for _ in 0..settle {
            x = model.step(&x, &un);
        }
        let m = un.len();
        Self {
            bundle,
            state: x,
            offset: vec![0.0; m],
        }
    }
}

impl Plant for ModelPlant {
    fn measure(&self) -> Vec<f64> {
        self.bundle.scaling.denormalize_output(&self.bundle.model.output(&self.state))
    }

    fn advance(&mut self, u: &[f64], _t: f64) -> Result<()> {
        let shifted: Vec<f64> = u.iter().zip(&self.offset).map(|(a, b)| a + b).collect();
        let un = self.bundle.scaling.normalize_input::<f64>(&shifted);
        // The stored past inputs must carry the offset too, so the state is
        // advanced with the shifted input throughout.
        self.state = self.bundle.model.step(&self.state, &un);
        Ok(())
    }

    fn disturbance(&self, _t: f64) -> Option<Disturbance> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    OffsetFree,
    Deb,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::OffsetFree => "offset_free",
            ControllerKind::Deb => "deb",
        }
    }
}

/// Either controller, working in normalized units.
#[derive(Clone, Debug)]
pub enum Controller {
    OffsetFree(Box<OffsetFreeMpc<f64, NnarxModel<f64>>>),
    Deb(Box<DebMpc<f64, NnarxModel<f64>>>),
}

/// What a controller reports for one step (normalized units).
#[derive(Clone, Debug)]
pub struct ControlOutput {
    pub u: DVector<f64>,
    pub xi: Option<DVector<f64>>,
    pub gamma: Option<DVector<f64>>,
    pub estimate: Option<DVector<f64>>,
    pub diagnostics: StepDiagnostics,
}

impl Controller {
    pub fn kind(&self) -> ControllerKind {
        match self {
            Controller::OffsetFree(_) => ControllerKind::OffsetFree,
            Controller::Deb(_) => ControllerKind::Deb,
        }
    }

    pub fn set_setpoint(&mut self, y: &DVector<f64>) -> Result<()> {
        match self {
            Controller::OffsetFree(c) => c.set_setpoint(y).map(|_| ()),
            Controller::Deb(c) => c.set_setpoint(y).map(|_| ()),
        }
    }

    /// Called once before the first step with the input the plant rests at.
    pub fn initialize(&mut self, u_prev: &DVector<f64>) -> Result<()> {
        match self {
            Controller::OffsetFree(c) => c.initialize(u_prev),
            Controller::Deb(_) => Ok(()),
        }
    }

    pub fn step(&mut self, x: &DVector<f64>) -> Result<ControlOutput> {
        match self {
            Controller::OffsetFree(c) => {
                let s = c.step(x)?;
                Ok(ControlOutput {
                    u: s.u,
                    xi: Some(s.xi),
                    gamma: Some(s.gamma),
                    estimate: None,
                    diagnostics: s.diagnostics,
                })
            }
            Controller::Deb(c) => {
                let s = c.step(x)?;
                Ok(ControlOutput {
                    u: s.u,
                    xi: None,
                    gamma: None,
                    estimate: Some(s.estimate),
                    diagnostics: s.diagnostics,
                })
            }
        }
    }
}

/// Input box in the model's normalized units.
pub fn normalized_bounds(scaling: &Scaling, input_box: &InputBox) -> Bounds<f64> {
    let (lo, hi) = scaling.normalize_input_box(&input_box.lower, &input_box.upper);
    Bounds {
        lower: DVector::from_vec(lo),
        upper: DVector::from_vec(hi),
    }
}

/// One logged sample (SISO columns, physical units).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub t: f64,
    pub setpoint: f64,
    pub y: f64,
    /// Input requested by the controller.
    pub u_requested: f64,
    /// Input applied to the plant after saturation.
    pub u: f64,
    pub xi: Option<f64>,
    pub gamma: Option<f64>,
    pub d_hat: Option<f64>,
    pub w: Option<f64>,
    #[serde(rename = "Ti")]
    pub ti: Option<f64>,
    pub cost: f64,
    pub terminal_residual: f64,
    pub warm_start_residual: Option<f64>,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct ClosedLoopResult {
    pub controller: ControllerKind,
    pub rows: Vec<TraceRow>,
    pub events: Vec<Event>,
    pub aborted: Option<String>,
    /// Total solver wall time, s.
    pub wall_time: f64,
    pub max_step_time: f64,
}

impl ClosedLoopResult {
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `controller` against `plant` over the scenario. The plant is
/// assumed to rest at `scenario.initial_input`; the model state is rebuilt
/// each sample from the last `N` measured outputs and applied inputs.
pub fn closed_loop<P: Plant + ?Sized>(
    scenario: &ScenarioConfig,
    plant: &mut P,
    controller: &mut Controller,
    scaling: &Scaling,
    input_box: &InputBox,
    sample_time: f64,
) -> Result<ClosedLoopResult> {
    scenario.validate()?;
    let layout = match controller {
        Controller::OffsetFree(c) => c.model().layout(),
        Controller::Deb(c) => c.model().layout(),
    };
    let horizon = layout.horizon;
    let m = layout.inputs;
    let u_rest = input_box.clamp(&vec![scenario.initial_input; m]);

    // Pre-roll: fill the regressor history at the resting input.
    let mut outputs: VecDeque<Vec<f64>> = VecDeque::new();
    let mut inputs: VecDeque<Vec<f64>> = VecDeque::new();
    for j in 0..horizon {
        outputs.push_back(plant.measure());
        inputs.push_back(u_rest.clone());
        if j + 1 < horizon {
            plant.advance(&u_rest, -((horizon - 1 - j) as f64) * sample_time)?;
        }
    }

    let events = scenario.events(sample_time);
    let std_u = &scaling.input_std;
    let mut current_setpoint = f64::NAN;
    let mut rows = Vec::with_capacity(scenario.duration);
    let mut failures = 0;
    let mut aborted = None;
    let mut wall_time = 0.0;
    let mut max_step_time: f64 = 0.0;
    controller.set_setpoint(&scaling.normalize_output(&[scenario.setpoint_at(0.0)]))?;
    controller.initialize(&scaling.normalize_input(&u_rest))?;

    for k in 0..scenario.duration {
        let t = k as f64 * sample_time;
        let sp = scenario.setpoint_at(t);
        if sp != current_setpoint {
            if k > 0 {
                controller.set_setpoint(&scaling.normalize_output(&[sp]))?;
            }
            current_setpoint = sp;
        }
        let y = plant.measure();
        outputs.push_back(y.clone());
        outputs.pop_front();
        let ys: Vec<DVector<f64>> = outputs.iter().map(|v| scaling.normalize_output(v)).collect();
        let us: Vec<DVector<f64>> = inputs.iter().map(|v| scaling.normalize_input(v)).collect();
        let x = layout.state_from_history(&ys, &us)?;

        let started = Instant::now();
        let out = controller.step(&x)?;
        let elapsed = started.elapsed().as_secs_f64();
        wall_time += elapsed;
        max_step_time = max_step_time.max(elapsed);

        let requested = scaling.denormalize_input(&out.u);
        let applied = input_box.clamp(&requested);
        let d = plant.disturbance(t);
        let diag = &out.diagnostics;
        rows.push(TraceRow {
            k,
            t,
            setpoint: sp,
            y: y[0],
            u_requested: requested[0],
            u: applied[0],
            xi: out.xi.as_ref().map(|v| scaling.denormalize_input(v)[0]),
            gamma: out.gamma.as_ref().map(|v| v[0] * std_u[0]),
            d_hat: out.estimate.as_ref().map(|v| v[0] * std_u[0]),
            w: d.map(|d| d.demand),
            ti: d.map(|d| d.inlet_temp),
            cost: diag.cost,
            terminal_residual: diag.terminal_residual,
            warm_start_residual: diag.warm_start_residual.is_finite().then_some(diag.warm_start_residual),
            inner_iterations: diag.inner_iterations,
            outer_iterations: diag.outer_iterations,
            converged: diag.converged,
        });

        failures = if diag.converged { 0 } else { failures + 1 };
        if failures > MAX_CONSECUTIVE_FAILURES {
            let msg = format!("{failures} consecutive solver failures at sample {k}");
            log::error!("{msg}; aborting run");
            aborted = Some(msg);
            break;
        }
        match plant.advance(&applied, t) {
            Ok(()) => {}
            Err(e @ Error::SimulationFault { .. }) => {
                log::error!("{e}; aborting run");
                aborted = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        }
        inputs.push_back(applied);
        inputs.pop_front();
    }
    Ok(ClosedLoopResult {
        controller: controller.kind(),
        rows,
        events,
        aborted,
        wall_time,
        max_step_time,
    })
}
