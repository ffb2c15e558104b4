//! Equilibria, linearization checks, and the integral/derivative
//! augmentation with its gain tuning.

mod analysis;
mod augmented;
mod equilibrium;
mod tuning;

pub use analysis::{
    check_schur, check_structural, compute_gain, dc_gain, find_mu_max, loop_matrix, IntegratorGain, MuBound,
    SchurCheck, StructuralReport, RANK_TOL, SCHUR_MARGIN,
};
pub use augmented::{augmented_step, lift, AugmentedModel, AugmentedTarget};
pub use equilibrium::{solve_equilibrium, Bounds, Equilibrium, NewtonOptions};
pub use tuning::{design_setpoint, GainSelection, SetpointDesign, SetpointReport, TuningConfig};
