//! Baseline offset-free MPC built on a matched input-disturbance estimate.

mod controller;
mod mhe;

pub use controller::{deb_target, DebConfig, DebMpc, DebStep};
pub use mhe::{mhe_cost, mhe_estimate, MheConfig, MheResult, MheWindow};

#[cfg(test)]
mod tests;
