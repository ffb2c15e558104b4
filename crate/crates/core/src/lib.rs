//! Identification of neural NARX models and offset-free nonlinear MPC with
//! integral and derivative actions.

pub mod augment;
pub mod bounds;
pub mod data;
pub mod deb;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mpc;
pub mod nnarx;
pub mod plant;
pub mod scalar;
pub mod training;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Model = nnarx::NnarxModel<f64>;
pub type Params = nnarx::FfnnParams<f64>;
