//! Closed-loop simulation, metrics and the cached experiment pipeline.

mod closed_loop;
mod metrics;
mod pipeline;
mod scenario;

pub use closed_loop::{
    closed_loop, normalized_bounds, ClosedLoopResult, ControlOutput, Controller, ControllerKind, ModelPlant, Plant, TraceRow,
    WaterHeaterPlant, MAX_CONSECUTIVE_FAILURES,
};
pub use metrics::{run_metrics, EventMetrics, RunMetrics, SegmentOffset};
pub use pipeline::{Comparison, Pipeline, PipelineConfig, Stage, TuningReport};
pub use scenario::{Event, EventKind, ScenarioConfig};

use crate::augment::TuningConfig;
use crate::bounds::InputBox;
use crate::deb::{DebConfig, DebMpc, MheConfig};
use crate::error::Result;
use crate::mpc::{MpcConfig, OffsetFreeMpc};
use crate::nnarx::ModelBundle;

/// Builds either controller for a model bundle and a physical input box.
pub fn build_controller(
    kind: ControllerKind,
    bundle: &ModelBundle<f64>,
    input_box: &InputBox,
    mpc: &MpcConfig,
    tuning: &TuningConfig,
    mhe: &MheConfig,
) -> Result<Controller> {
    let bounds = normalized_bounds(&bundle.scaling, input_box);
    Ok(match kind {
        ControllerKind::OffsetFree => Controller::OffsetFree(Box::new(OffsetFreeMpc::new(
            bundle.model.clone(),
            bounds,
            mpc.clone(),
            tuning.clone(),
        )?)),
        ControllerKind::Deb => {
            let cfg = DebConfig {
                mpc: mpc.clone(),
                mhe: mhe.clone(),
                newton: tuning.newton.clone(),
            };
            Controller::Deb(Box::new(DebMpc::new(bundle.model.clone(), bounds, cfg)?))
        }
    })
}
