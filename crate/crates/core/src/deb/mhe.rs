use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::nnarx::{Disturbed, NarxDynamics};
use crate::scalar::{lit, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MheConfig {
    /// Window length `N_e`.
    pub window: usize,
    /// Weight on `||d - d_prior||^2`.
    pub prior_weight: f64,
    /// Weight on the output residuals.
    pub output_weight: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for MheConfig {
    fn default() -> Self {
        Self {
            window: 20,
            prior_weight: 1.0,
            output_weight: 1.0,
            max_iterations: 50,
            tolerance: 1e-12,
        }
    }
}

impl MheConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidArgument("estimation window must be at least 1".into()));
        }
        if !(self.output_weight > 0.0 && self.output_weight.is_finite()) {
            return Err(Error::InvalidArgument("output weight must be positive".into()));
        }
        if !(self.prior_weight >= 0.0 && self.prior_weight.is_finite()) {
            return Err(Error::InvalidArgument("prior weight must be non-negative".into()));
        }
        Ok(())
    }
}

/// Measurements of one estimation window: the state at its start, the
/// applied inputs `u_0 .. u_{L-1}` and the outputs `y_1 .. y_L` they produced.
#[derive(Clone, Debug)]
pub struct MheWindow<T: Real> {
    pub start: DVector<T>,
    pub inputs: Vec<DVector<T>>,
    pub outputs: Vec<DVector<T>>,
}

impl<T: Real> MheWindow<T> {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn validate<M: NarxDynamics<T>>(&self, model: &M) -> Result<()> {
        dim_check(
            self.inputs.len() == self.outputs.len()
                && self.start.len() == model.state_dim()
                && self.inputs.iter().all(|u| u.len() == model.input_dim())
                && self.outputs.iter().all(|y| y.len() == model.output_dim()),
            || "estimation window sizes disagree with the model".into(),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MheResult<T: Real> {
    pub estimate: DVector<T>,
    pub cost: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Estimation cost and its gradient with respect to `d`, by forward
/// sensitivities through the rollout.
pub fn mhe_cost<T: Real, M: NarxDynamics<T>>(
    model: &M,
    window: &MheWindow<T>,
    d: &DVector<T>,
    prior: &DVector<T>,
    cfg: &MheConfig,
) -> (T, DVector<T>) {
    let (cost, grad, _) = mhe_linearize(model, window, d, prior, cfg);
    (cost, grad)
}

/// `(cost, gradient, Gauss-Newton Hessian)`.
fn mhe_linearize<T: Real, M: NarxDynamics<T>>(
    model: &M,
    window: &MheWindow<T>,
    d: &DVector<T>,
    prior: &DVector<T>,
    cfg: &MheConfig,
) -> (T, DVector<T>, DMatrix<T>) {
    let layout = model.layout();
    let m = layout.inputs;
    let n = layout.state_dim();
    let wy = lit::<T>(cfg.output_weight);
    let wp = lit::<T>(cfg.prior_weight);
    let two = lit::<T>(2.0);
    let slots = layout.input_slots::<T>();
    let dist = Disturbed::new(model, d.clone());
    let off = layout.output_offset();

    let ep = d - prior;
    let mut cost = wp * ep.norm_squared();
    let mut grad = &ep * (two * wp);
    let mut hess = DMatrix::<T>::identity(m, m) * (two * wp);
    let mut x = window.start.clone();
    let mut sens = DMatrix::<T>::zeros(n, m);
    for (u, y) in window.inputs.iter().zip(&window.outputs) {
        let (xs, us) = dist.shifted(&x, u);
        let (ex, eu) = model.eta_jacobians(&xs, &us);
        let deta = &ex * (&sens + &slots) + &eu;
        let next = dist.step(&x, u);
        let mut new_sens = DMatrix::zeros(n, m);
        let b = layout.block_len();
        new_sens.rows_mut(0, n - b).copy_from(&sens.rows(b, n - b));
        new_sens.rows_mut(off, layout.outputs).copy_from(&deta);
        sens = new_sens;
        x = next;
        let r = layout.output(&x) - y;
        let jr = sens.rows(off, layout.outputs).into_owned();
        cost += wy * r.norm_squared();
        grad += jr.transpose() * &r * (two * wy);
        hess += jr.transpose() * &jr * (two * wy);
    }
    (cost, grad, hess)
}

/// Least-squares estimate of a constant matched input disturbance over the
/// window, by damped Gauss-Newton started at the prior.
pub fn mhe_estimate<T: Real, M: NarxDynamics<T>>(
    model: &M,
    window: &MheWindow<T>,
    prior: &DVector<T>,
    cfg: &MheConfig,
) -> Result<MheResult<T>> {
    cfg.validate()?;
    window.validate(model)?;
    dim_check(prior.len() == model.input_dim(), || "prior has the wrong size".into())?;
    let tol = lit::<T>(cfg.tolerance);
    let mut d = prior.clone();
    let (mut cost, mut grad, mut hess) = mhe_linearize(model, window, &d, prior, cfg);
    for it in 0..cfg.max_iterations {
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&(-&grad)),
            None => -&grad / hess.diagonal().amax().max(T::one()),
        };
        let mut scale = T::one();
        let mut accepted = None;
        for _ in 0..40 {
            let trial = &d + &step * scale;
            let (c, g, h) = mhe_linearize(model, window, &trial, prior, cfg);
            if c.is_finite() && c <= cost {
                accepted = Some((trial, c, g, h));
                break;
            }
            scale *= lit::<T>(0.5);
        }
        let Some((trial, c, g, h)) = accepted else {
            return Ok(MheResult {
                estimate: d,
                cost,
                iterations: it,
                converged: grad.amax() <= tol.sqrt(),
            });
        };
        let moved = (&trial - &d).amax();
        d = trial;
        cost = c;
        grad = g;
        hess = h;
        if moved <= tol * (T::one() + d.amax()) || grad.amax() <= tol {
            return Ok(MheResult {
                estimate: d,
                cost,
                iterations: it + 1,
                converged: true,
            });
        }
    }
    Ok(MheResult {
        estimate: d,
        cost,
        iterations: cfg.max_iterations,
        converged: false,
    })
}
