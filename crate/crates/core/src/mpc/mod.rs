//! Terminal-constraint MPC on the augmented model: transcription, solver and
//! receding-horizon controller.

mod augmented;
mod controller;
mod problem;
mod solver;
mod weights;

pub use augmented::{evaluate_cost, AugmentedPrediction};
pub use controller::{MpcStep, OffsetFreeMpc, StepDiagnostics};
pub(crate) use controller::shift_plan;
pub use problem::{Ocp, PredictionModel, StatePrediction, TerminalMode};
pub use solver::{solve_ocp, OcpSolution, SolverOptions};
pub use weights::{MpcConfig, MpcWeights, WeightMatrices};
