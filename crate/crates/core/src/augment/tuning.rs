use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::analysis::{check_schur, check_structural, compute_gain, find_mu_max, IntegratorGain, MuBound, SchurCheck, StructuralReport, SCHUR_MARGIN};
use super::equilibrium::{solve_equilibrium, Bounds, Equilibrium, NewtonOptions};
use crate::error::{Error, Result};
use crate::nnarx::{NarxDynamics, Scaling};
use crate::scalar::{lit, to_f64, Real};

/// How the integrator gain is picked inside the certified range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainSelection {
    /// `mu_tilde = fraction * mu_tilde_max`.
    Fraction(f64),
    /// Fixed scalar `mu` (single-output models).
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningConfig {
    pub resolution: f64,
    pub gain: GainSelection,
    pub newton: NewtonOptions,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            resolution: 1e-4,
            gain: GainSelection::Fraction(0.14 / 0.251),
            newton: NewtonOptions::default(),
        }
    }
}

/// Everything computed for one setpoint.
#[derive(Clone, Debug)]
pub struct SetpointDesign<T: Real> {
    pub equilibrium: Equilibrium<T>,
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub schur: SchurCheck,
    pub structural: StructuralReport<T>,
    pub bound: MuBound<T>,
    pub gain: IntegratorGain<T>,
}

/// Solves the equilibrium, checks the linearization and tunes `mu`.
pub fn design_setpoint<T: Real, M: NarxDynamics<T>>(
    model: &M,
    y_ref: &DVector<T>,
    u_guess: &DVector<T>,
    bounds: Option<&Bounds<T>>,
    cfg: &TuningConfig,
) -> Result<SetpointDesign<T>> {
    let equilibrium = solve_equilibrium(model, y_ref, u_guess, bounds, &cfg.newton)?;
    let (a, b) = model.jacobians(&equilibrium.x, &equilibrium.u);
    let c = model.layout().shift_matrices::<T>().c;
    let schur = check_schur(&a);
    if !schur.stable {
        return Err(Error::NotSchurStable {
            spectral_radius: schur.spectral_radius,
        });
    }
    let structural = check_structural(&a, &b, &c)?;
    if !structural.passed() {
        return Err(Error::StructuralCheck {
            reachable: structural.reachable,
            reconstructible: structural.reconstructible,
            dc_gain_nonsingular: structural.dc_gain_nonsingular,
        });
    }
    let bound = find_mu_max(&a, &b, &c, cfg.resolution)?;
    let mu_tilde = match cfg.gain {
        GainSelection::Fraction(f) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidArgument(format!("gain fraction {f} must lie in (0, 1)")));
            }
            bound.mu_tilde_max * lit::<T>(f)
        }
        GainSelection::Fixed(mu) => {
            if structural.dc_gain.nrows() != 1 {
                return Err(Error::InvalidArgument("a fixed scalar gain needs a single-output model".into()));
            }
            structural.dc_gain[(0, 0)] * lit::<T>(mu)
        }
    };
    let gain = compute_gain(&a, &b, &c, mu_tilde)?;
    if !(gain.loop_radius < 1.0 - SCHUR_MARGIN) {
        return Err(Error::Tuning(format!(
            "chosen gain does not certify a stable loop (spectral radius {:.6})",
            gain.loop_radius
        )));
    }
    Ok(SetpointDesign {
        equilibrium,
        a,
        b,
        schur,
        structural,
        bound,
        gain,
    })
}

/// Serializable summary of a [`SetpointDesign`], in physical units where a
/// scaling is given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetpointReport {
    pub setpoint: Vec<f64>,
    pub equilibrium_input: Vec<f64>,
    pub equilibrium_residual: f64,
    pub newton_iterations: usize,
    pub linearization_radius: f64,
    pub reachable: bool,
    pub observable: bool,
    pub reconstructible: bool,
    pub dc_gain_nonsingular: bool,
    pub dc_gain: Vec<f64>,
    pub mu_tilde_max: f64,
    /// Row-major.
    pub mu_max: Vec<f64>,
    pub mu_tilde: f64,
    pub mu: Vec<f64>,
    pub loop_radius: f64,
}

impl<T: Real> SetpointDesign<T> {
    pub fn report(&self, scaling: Option<&Scaling>) -> SetpointReport {
        let flat = |m: &DMatrix<T>| m.transpose().iter().map(|v| to_f64(*v)).collect::<Vec<_>>();
        let (setpoint, equilibrium_input) = match scaling {
            Some(s) => (s.denormalize_output(&self.equilibrium.y), s.denormalize_input(&self.equilibrium.u)),
            None => (
                self.equilibrium.y.iter().map(|v| to_f64(*v)).collect(),
                self.equilibrium.u.iter().map(|v| to_f64(*v)).collect(),
            ),
        };
        SetpointReport {
            setpoint,
            equilibrium_input,
            equilibrium_residual: to_f64(self.equilibrium.residual),
            newton_iterations: self.equilibrium.iterations,
            linearization_radius: self.schur.spectral_radius,
            reachable: self.structural.reachable,
            observable: self.structural.observable,
            reconstructible: self.structural.reconstructible,
            dc_gain_nonsingular: self.structural.dc_gain_nonsingular,
            dc_gain: flat(&self.structural.dc_gain),
            mu_tilde_max: to_f64(self.bound.mu_tilde_max),
            mu_max: flat(&self.bound.mu_max),
            mu_tilde: to_f64(self.gain.mu_tilde),
            mu: flat(&self.gain.mu),
            loop_radius: self.gain.loop_radius,
        }
    }
}
