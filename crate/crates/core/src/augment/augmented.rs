use nalgebra::{DMatrix, DVector};

use super::equilibrium::Equilibrium;
use crate::error::{dim_check, Result};
use crate::nnarx::NarxDynamics;
use crate::scalar::Real;

/// Model augmented with the integrator `xi` and derivator `theta`:
/// `u = xi + v - theta`, `x+ = f(x, u)`, `xi+ = xi + mu (y_ref - C x)`,
/// `theta+ = v`, with output `zeta = [C x; u]`.
#[derive(Clone, Debug)]
pub struct AugmentedModel<'a, T: Real, M: NarxDynamics<T>> {
    pub model: &'a M,
    pub mu: DMatrix<T>,
    pub y_ref: DVector<T>,
}

/// Equilibrium of the augmented system for a constant `v_bar`.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedTarget<T: Real> {
    pub chi: DVector<T>,
    pub v: DVector<T>,
    pub zeta: DVector<T>,
}

/// Lifts `(x, u, y)` to `chi = [x; u; v_bar]`, `zeta = [y; u]`: with
/// `theta = v_bar` the derivative action vanishes and `xi` carries `u`.
pub fn lift<T: Real>(eq: &Equilibrium<T>, v_bar: &DVector<T>) -> AugmentedTarget<T> {
    let n = eq.x.len();
    let m = eq.u.len();
    let mut chi = DVector::zeros(n + 2 * m);
    chi.rows_mut(0, n).copy_from(&eq.x);
    chi.rows_mut(n, m).copy_from(&eq.u);
    chi.rows_mut(n + m, m).copy_from(v_bar);
    let mut zeta = DVector::zeros(eq.y.len() + m);
    zeta.rows_mut(0, eq.y.len()).copy_from(&eq.y);
    zeta.rows_mut(eq.y.len(), m).copy_from(&eq.u);
    AugmentedTarget {
        chi,
        v: v_bar.clone(),
        zeta,
    }
}

impl<'a, T: Real, M: NarxDynamics<T>> AugmentedModel<'a, T, M> {
    pub fn new(model: &'a M, mu: DMatrix<T>, y_ref: DVector<T>) -> Result<Self> {
        let m = model.input_dim();
        dim_check(mu.nrows() == m && mu.ncols() == model.output_dim() && y_ref.len() == model.output_dim(), || {
            "integrator gain or setpoint has the wrong size".into()
        })?;
        Ok(Self { model, mu, y_ref })
    }

    pub fn state_dim(&self) -> usize {
        self.model.state_dim() + 2 * self.model.input_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    /// `(x, xi, theta)`.
    pub fn split(&self, chi: &DVector<T>) -> (DVector<T>, DVector<T>, DVector<T>) {
        let n = self.model.state_dim();
        let m = self.model.input_dim();
        (
            chi.rows(0, n).into_owned(),
            chi.rows(n, m).into_owned(),
            chi.rows(n + m, m).into_owned(),
        )
    }

    pub fn join(&self, x: &DVector<T>, xi: &DVector<T>, theta: &DVector<T>) -> DVector<T> {
        let n = x.len();
        let m = xi.len();
        let mut chi = DVector::zeros(n + 2 * m);
        chi.rows_mut(0, n).copy_from(x);
        chi.rows_mut(n, m).copy_from(xi);
        chi.rows_mut(n + m, m).copy_from(theta);
        chi
    }

    /// Input actually applied: `xi + v - theta`.
    pub fn input(&self, chi: &DVector<T>, v: &DVector<T>) -> DVector<T> {
        let (_, xi, theta) = self.split(chi);
        xi + v - theta
    }

    pub fn step(&self, chi: &DVector<T>, v: &DVector<T>) -> (DVector<T>, DVector<T>) {
        let (x, xi, theta) = self.split(chi);
        let u = &xi + v - &theta;
        let y = self.model.output(&x);
        let x_next = self.model.step(&x, &u);
        let xi_next = &xi + &self.mu * (&self.y_ref - &y);
        let next = self.join(&x_next, &xi_next, v);
        let mut zeta = DVector::zeros(y.len() + u.len());
        zeta.rows_mut(0, y.len()).copy_from(&y);
        zeta.rows_mut(y.len(), u.len()).copy_from(&u);
        (next, zeta)
    }
}

/// One step of the augmented dynamics.
pub fn augmented_step<T: Real, M: NarxDynamics<T>>(
    model: &M,
    chi: &DVector<T>,
    v: &DVector<T>,
    y_ref: &DVector<T>,
    mu: &DMatrix<T>,
) -> Result<(DVector<T>, DVector<T>)> {
    let aug = AugmentedModel::new(model, mu.clone(), y_ref.clone())?;
    dim_check(chi.len() == aug.state_dim() && v.len() == aug.input_dim(), || "augmented state or input has the wrong size".into())?;
    Ok(aug.step(chi, v))
}

#[cfg(test)]
mod tests {
    use super::super::equilibrium::{solve_equilibrium, NewtonOptions};
    use super::*;
    use crate::nnarx::{Activation, FfnnParams, NnarxModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (NnarxModel<f64>, Equilibrium<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = FfnnParams::random(6, 1, 1, &[5], Activation::Tanh, &mut rng).unwrap();
        let model = NnarxModel::new(3, p).unwrap();
        let eq = solve_equilibrium(&model, &DVector::from_element(1, 0.1), &DVector::zeros(1), None, &NewtonOptions::default()).unwrap();
        (model, eq)
    }

    #[test]
    fn lifted_equilibrium_is_fixed() {
        let (model, eq) = setup();
        let target = lift(&eq, &eq.u);
        let mu = DMatrix::from_element(1, 1, 0.3);
        let (next, zeta) = augmented_step(&model, &target.chi, &target.v, &eq.y, &mu).unwrap();
        assert!((&next - &target.chi).amax() < 1e-12 + eq.residual);
        assert!((&zeta - &target.zeta).amax() < 1e-15);
    }

    #[test]
    fn zero_gain_freezes_integrator() {
        let (model, eq) = setup();
        let mut chi = lift(&eq, &eq.u).chi;
        chi[0] += 0.3;
        let mu = DMatrix::zeros(1, 1);
        let v = DVector::from_element(1, 0.05);
        let (next, _) = augmented_step(&model, &chi, &v, &DVector::from_element(1, 2.0), &mu).unwrap();
        assert_eq!(next[6], chi[6]);
    }

    #[test]
    fn derivative_action_vanishes_after_one_step() {
        let (model, eq) = setup();
        let aug = AugmentedModel::new(&model, DMatrix::from_element(1, 1, 0.2), eq.y.clone()).unwrap();
        let chi0 = lift(&eq, &eq.u).chi;
        let v = DVector::from_element(1, eq.u[0] + 0.4);
        let gamma = |chi: &DVector<f64>| v[0] - aug.split(chi).2[0];
        assert!((gamma(&chi0) - 0.4).abs() < 1e-15);
        let (chi1, _) = aug.step(&chi0, &v);
        assert_eq!(gamma(&chi1), 0.0);
        let (chi2, _) = aug.step(&chi1, &v);
        assert_eq!(gamma(&chi2), 0.0);
    }
}
