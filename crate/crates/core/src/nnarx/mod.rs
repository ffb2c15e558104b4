//! Neural NARX models in shift-register state-space form.

mod ffnn;
mod io;
mod layout;
mod model;
mod scaling;

pub use ffnn::{Activation, FfnnParams, ForwardTrace, InputAdjoint, Layer};
pub use io::ModelBundle;
pub use layout::{build_shift_matrices, ShiftMatrices, StateLayout};
pub use model::{Disturbed, NarxDynamics, NnarxModel};
pub use scaling::Scaling;
