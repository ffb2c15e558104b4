use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::nnarx::NarxDynamics;
use crate::scalar::{lit, to_f64, Real};

/// Equilibrium `(x, u, y)` with `x = f(x, u)` and `y = C x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Equilibrium<T: Real> {
    pub x: DVector<T>,
    pub u: DVector<T>,
    pub y: DVector<T>,
    /// `||x - f(x, u)||_inf`.
    pub residual: T,
    /// Newton steps taken.
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 100,
            max_halvings: 20,
        }
    }
}

/// Input box in the model's units.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds<T: Real> {
    pub lower: DVector<T>,
    pub upper: DVector<T>,
}

impl<T: Real> Bounds<T> {
    pub fn contains(&self, u: &DVector<T>, tol: T) -> bool {
        u.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(v, (lo, hi))| *v >= *lo - tol && *v <= *hi + tol)
    }

    pub fn clamp(&self, u: &DVector<T>) -> DVector<T> {
        DVector::from_iterator(
            u.len(),
            u.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .map(|(v, (lo, hi))| v.clamp(*lo, *hi)),
        )
    }
}

/// Solves `y_ref = eta(x(y_ref, u), u)` for `u` by damped Newton, where
/// `x(y, u)` repeats the block `[y; u]` over the whole window.
pub fn solve_equilibrium<T: Real, M: NarxDynamics<T>>(
    model: &M,
    y_ref: &DVector<T>,
    u_guess: &DVector<T>,
    bounds: Option<&Bounds<T>>,
    opts: &NewtonOptions,
) -> Result<Equilibrium<T>> {
    let layout = model.layout();
    dim_check(y_ref.len() == layout.outputs && u_guess.len() == layout.inputs, || {
        "setpoint or input guess has the wrong size".into()
    })?;
    let slots = layout.input_slots::<T>();
    let tol = lit::<T>(opts.tolerance);
    let residual = |u: &DVector<T>| {
        let x = layout.repeated_state(y_ref, u);
        model.eta(&x, u) - y_ref
    };
    let inf = |v: &DVector<T>| v.amax();
    let mut u = u_guess.clone();
    let mut g = residual(&u);
    let mut iterations = 0;
    while inf(&g) >= tol {
        if iterations == opts.max_iterations {
            return Err(Error::EquilibriumNotFound {
                iterations,
                residual: to_f64(inf(&g)),
            });
        }
        iterations += 1;
        let x = layout.repeated_state(y_ref, &u);
        let (ex, eu) = model.eta_jacobians(&x, &u);
        let jac = ex * &slots + eu;
        let step = jac.lu().solve(&(-&g)).ok_or(Error::EquilibriumNotFound {
            iterations,
            residual: to_f64(inf(&g)),
        })?;
        let mut scale = T::one();
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial = &u + &step * scale;
            let gt = residual(&trial);
            if gt.norm() < g.norm() || inf(&gt) < tol {
                u = trial;
                g = gt;
                accepted = true;
                break;
            }
            scale *= lit::<T>(0.5);
        }
        if !accepted {
            return Err(Error::EquilibriumNotFound {
                iterations,
                residual: to_f64(inf(&g)),
            });
        }
    }
    if let Some(b) = bounds {
        if !b.contains(&u, T::zero()) {
            return Err(Error::InfeasibleSetpoint {
                input: u.iter().map(|v| to_f64(*v)).collect(),
            });
        }
    }
    let x = layout.repeated_state(y_ref, &u);
    let fx = model.step(&x, &u);
    Ok(Equilibrium {
        residual: (&x - fx).amax(),
        y: model.output(&x),
        x,
        u,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnarx::{Activation, FfnnParams, NnarxModel};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(act: Activation, seed: u64) -> NnarxModel<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = FfnnParams::random(6, 1, 1, &[5], act, &mut rng).unwrap();
        let flat: Vec<f64> = p.to_flat().iter().map(|w| w + rng.gen_range(-0.1..0.1)).collect();
        let mut p = p;
        p.set_flat(&flat).unwrap();
        NnarxModel::new(3, p).unwrap()
    }

    #[test]
    fn linear_model_solves_in_one_step() {
        let model = random(Activation::Identity, 1);
        let y = DVector::from_element(1, 0.7);
        let eq = solve_equilibrium(&model, &y, &DVector::zeros(1), None, &NewtonOptions::default()).unwrap();
        assert_eq!(eq.iterations, 1);
        // closed form: y = a y + b u + c with a = sum of y-coefficients,
        // b = sum of u-coefficients plus the direct input term
        let p = model.params();
        let l = &p.layers[0];
        let coeff = &p.output_weights * &l.feed_weights;
        let a: f64 = (0..3).map(|i| coeff[(0, 2 * i)]).sum();
        let b: f64 = (0..3).map(|i| coeff[(0, 2 * i + 1)]).sum::<f64>() + (&p.output_weights * &l.input_weights)[(0, 0)];
        let c = (&p.output_weights * &l.bias)[0] + p.output_bias[0];
        let u = (0.7 - a * 0.7 - c) / b;
        assert!((eq.u[0] - u).abs() < 1e-9 * (1.0 + u.abs()));
        assert!(eq.residual < 1e-9);
    }

    #[test]
    fn known_equilibrium_is_a_fixed_point() {
        let model = random(Activation::Tanh, 2);
        let y = DVector::from_element(1, 0.2);
        let eq = solve_equilibrium(&model, &y, &DVector::zeros(1), None, &NewtonOptions::default()).unwrap();
        let again = solve_equilibrium(&model, &eq.y, &eq.u, None, &NewtonOptions::default()).unwrap();
        assert_eq!(again.iterations, 0);
        assert_eq!(again.u, eq.u);
        let ys = model.simulate(&eq.x, &vec![eq.u.clone(); 20]);
        assert!(ys.iter().all(|v| (v[0] - 0.2).abs() < 1e-9));
    }

    #[test]
    fn out_of_box_equilibrium_is_infeasible() {
        let model = random(Activation::Tanh, 3);
        // a reachable setpoint: the settled output under a constant input
        let ys = model.simulate(&DVector::zeros(6), &vec![DVector::from_element(1, 0.4); 300]);
        let y = ys[300].clone();
        let eq = solve_equilibrium(&model, &y, &DVector::zeros(1), None, &NewtonOptions::default()).unwrap();
        let b = Bounds {
            lower: DVector::from_element(1, eq.u[0] + 0.1),
            upper: DVector::from_element(1, eq.u[0] + 0.2),
        };
        let err = solve_equilibrium(&model, &y, &DVector::zeros(1), Some(&b), &NewtonOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InfeasibleSetpoint { .. }));
    }

    #[test]
    fn no_solution_reports_not_found() {
        // bounded tanh output cannot reach a far setpoint
        let mut p = FfnnParams::<f64>::zeros(2, 1, 1, &[1], Activation::Tanh).unwrap();
        p.layers[0].input_weights = DMatrix::from_element(1, 1, 1.0);
        p.output_weights = DMatrix::from_element(1, 1, 1.0);
        let model = NnarxModel::new(1, p).unwrap();
        let err = solve_equilibrium(&model, &DVector::from_element(1, 5.0), &DVector::zeros(1), None, &NewtonOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::EquilibriumNotFound { .. }));
    }
}
