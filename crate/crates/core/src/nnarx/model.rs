use nalgebra::{DMatrix, DVector};

use super::ffnn::{FfnnParams, ForwardTrace, InputAdjoint};
use super::layout::{ShiftMatrices, StateLayout};
use crate::error::{dim_check, Result};
use crate::scalar::Real;

/// Discrete-time NARX dynamics in shift-register state-space form:
/// `x+ = A x + B_u u + B_x eta(x, u)`, `y = C x`.
///
/// Implementors only supply the regression map `eta` and its Jacobians; the
/// state update, linearization and rollout are shared.
pub trait NarxDynamics<T: Real> {
    fn layout(&self) -> StateLayout;

    fn eta(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T>;

    /// `(d eta / d x, d eta / d u)`.
    fn eta_jacobians(&self, x: &DVector<T>, u: &DVector<T>) -> (DMatrix<T>, DMatrix<T>);

    fn state_dim(&self) -> usize {
        self.layout().state_dim()
    }

    fn input_dim(&self) -> usize {
        self.layout().inputs
    }

    fn output_dim(&self) -> usize {
        self.layout().outputs
    }

    /// `f(x, u)`.
    fn step(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        let y = self.eta(x, u);
        self.layout().shift(x, u, &y)
    }

    /// `y = C x`.
    fn output(&self, x: &DVector<T>) -> DVector<T> {
        self.layout().output(x)
    }

    /// `(A_delta, B_delta) = (A + B_x d eta/dx, B_u + B_x d eta/du)`.
    fn jacobians(&self, x: &DVector<T>, u: &DVector<T>) -> (DMatrix<T>, DMatrix<T>) {
        let layout = self.layout();
        let (ex, eu) = self.eta_jacobians(x, u);
        let s: ShiftMatrices<T> = layout.shift_matrices();
        let off = layout.output_offset();
        let mut a = s.a;
        let mut b = s.b_u;
        a.rows_mut(off, layout.outputs).copy_from(&ex);
        b.rows_mut(off, layout.outputs).copy_from(&eu);
        (a, b)
    }

    /// Outputs `y_0 .. y_K` of the rollout from `x0` under `u_0 .. u_{K-1}`.
    fn simulate(&self, x0: &DVector<T>, inputs: &[DVector<T>]) -> Vec<DVector<T>> {
        let mut x = x0.clone();
        let mut ys = Vec::with_capacity(inputs.len() + 1);
        ys.push(self.output(&x));
        for u in inputs {
            x = self.step(&x, u);
            ys.push(self.output(&x));
        }
        ys
    }

    /// State trajectory `x_0 .. x_K`.
    fn rollout(&self, x0: &DVector<T>, inputs: &[DVector<T>]) -> Vec<DVector<T>> {
        let mut xs = Vec::with_capacity(inputs.len() + 1);
        xs.push(x0.clone());
        for u in inputs {
            let next = self.step(xs.last().unwrap(), u);
            xs.push(next);
        }
        xs
    }
}

/// Neural NARX model: regression horizon, dimensions and network weights.
#[derive(Clone, Debug, PartialEq)]
pub struct NnarxModel<T: Real> {
    layout: StateLayout,
    params: FfnnParams<T>,
}

impl<T: Real> NnarxModel<T> {
    pub fn new(horizon: usize, params: FfnnParams<T>) -> Result<Self> {
        let layout = StateLayout::new(horizon, params.input_dim(), params.output_dim())?;
        dim_check(params.state_dim() == layout.state_dim(), || {
            format!(
                "first layer expects a state of length {}, horizon {} implies {}",
                params.state_dim(),
                horizon,
                layout.state_dim()
            )
        })?;
        Ok(Self { layout, params })
    }

    pub fn horizon(&self) -> usize {
        self.layout.horizon
    }

    pub fn params(&self) -> &FfnnParams<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut FfnnParams<T> {
        &mut self.params
    }

    pub fn shift_matrices(&self) -> ShiftMatrices<T> {
        self.layout.shift_matrices()
    }

    pub fn contraction_margin(&self) -> T {
        self.params.contraction_margin()
    }

    /// Checked `eta`.
    pub fn try_eta(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        self.layout.check_state(x)?;
        self.layout.check_input(u)?;
        Ok(self.params.forward(x, u))
    }

    /// Checked state update.
    pub fn try_step(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        let y = self.try_eta(x, u)?;
        Ok(self.layout.shift(x, u, &y))
    }

    pub(crate) fn trace(&self, x: &DVector<T>, u: &DVector<T>) -> ForwardTrace<T> {
        self.params.forward_trace(x, u)
    }

    pub(crate) fn backward(
        &self,
        x: &DVector<T>,
        u: &DVector<T>,
        trace: &ForwardTrace<T>,
        adj: &DVector<T>,
        grad: Option<&mut FfnnParams<T>>,
    ) -> InputAdjoint<T> {
        self.params.backward(x, u, trace, adj, grad)
    }
}

impl<T: Real> NarxDynamics<T> for NnarxModel<T> {
    fn layout(&self) -> StateLayout {
        self.layout
    }

    fn eta(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        self.params.forward(x, u)
    }

    fn eta_jacobians(&self, x: &DVector<T>, u: &DVector<T>) -> (DMatrix<T>, DMatrix<T>) {
        self.params.jacobians(x, u)
    }
}

/// An NNARX model driven by `u + d`, with the constant matched disturbance
/// `d` added to the current input and to every stored past input.
///
/// The state keeps the inputs actually applied; the offset is applied at
/// every evaluation of the regression map.
#[derive(Clone, Debug)]
pub struct Disturbed<'a, T: Real, M: NarxDynamics<T>> {
    model: &'a M,
    disturbance: DVector<T>,
    slots: DMatrix<T>,
}

impl<'a, T: Real, M: NarxDynamics<T>> Disturbed<'a, T, M> {
    pub fn new(model: &'a M, disturbance: DVector<T>) -> Self {
        let slots = model.layout().input_slots();
        Self {
            model,
            disturbance,
            slots,
        }
    }

    pub fn disturbance(&self) -> &DVector<T> {
        &self.disturbance
    }

    pub fn inner(&self) -> &M {
        self.model
    }

    /// `(x + P d, u + d)`.
    pub fn shifted(&self, x: &DVector<T>, u: &DVector<T>) -> (DVector<T>, DVector<T>) {
        (x + &self.slots * &self.disturbance, u + &self.disturbance)
    }
}

impl<'a, T: Real, M: NarxDynamics<T>> NarxDynamics<T> for Disturbed<'a, T, M> {
    fn layout(&self) -> StateLayout {
        self.model.layout()
    }

    fn eta(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        let (xs, us) = self.shifted(x, u);
        self.model.eta(&xs, &us)
    }

    fn eta_jacobians(&self, x: &DVector<T>, u: &DVector<T>) -> (DMatrix<T>, DMatrix<T>) {
        let (xs, us) = self.shifted(x, u);
        self.model.eta_jacobians(&xs, &us)
    }
}

#[cfg(test)]
mod tests {
    use super::super::ffnn::{Activation, Layer};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(rng: &mut ChaCha8Rng, horizon: usize, m: usize, widths: &[usize], act: Activation, scale: f64) -> NnarxModel<f64> {
        let n = horizon * 2 * m;
        let mut p = FfnnParams::random(n, m, m, widths, act, rng).unwrap();
        let mut flat = p.to_flat();
        flat.iter_mut().for_each(|w| *w = *w * scale + rng.gen_range(-0.05..0.05));
        p.set_flat(&flat).unwrap();
        NnarxModel::new(horizon, p).unwrap()
    }

    /// Straight-line evaluation of a one-layer network on the raw regressors.
    fn direct_eta(model: &NnarxModel<f64>, ys: &[f64], us: &[f64], u_now: f64) -> f64 {
        // ys, us oldest first, length N each (SISO).
        let p = model.params();
        let l = &p.layers[0];
        let mut out = p.output_bias[0];
        for j in 0..l.bias.len() {
            let mut a = l.bias[j] + l.input_weights[(j, 0)] * u_now;
            for i in 0..ys.len() {
                a += l.feed_weights[(j, 2 * i)] * ys[i] + l.feed_weights[(j, 2 * i + 1)] * us[i];
            }
            out += p.output_weights[(0, j)] * l.activation.apply(a);
        }
        out
    }

    #[test]
    fn zero_network_returns_output_bias() {
        let mut p = FfnnParams::<f64>::zeros(4, 1, 1, &[3], Activation::Tanh).unwrap();
        p.output_bias[0] = 0.7;
        let model = NnarxModel::new(2, p).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0, 3.0, 4.0]);
        let u = DVector::from_vec(vec![9.0]);
        assert_eq!(model.eta(&x, &u)[0], 0.7);
        let next = model.step(&DVector::zeros(4), &DVector::zeros(1));
        assert_eq!(next.as_slice(), &[0.0, 0.0, 0.7, 0.0]);
    }

    #[test]
    fn step_shifts_history() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = random_model(&mut rng, 4, 1, &[5], Activation::Tanh, 1.0);
        let x = DVector::from_fn(8, |i, _| i as f64);
        let u = DVector::from_vec(vec![-1.0]);
        let next = model.step(&x, &u);
        assert_eq!(next.rows(0, 6), x.rows(2, 6));
        assert_eq!(next[7], -1.0);
        assert_eq!(next[6], model.eta(&x, &u)[0]);
    }

    #[test]
    fn eta_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = random_model(&mut rng, 3, 1, &[7], Activation::Tanh, 3.0);
        let x = DVector::from_vec(vec![0.1, -0.3, 0.5, 0.2, -0.7, 0.9]);
        let direct = direct_eta(&model, &[0.1, 0.5, -0.7], &[-0.3, 0.2, 0.9], 0.4);
        assert!((model.eta(&x, &DVector::from_vec(vec![0.4]))[0] - direct).abs() < 1e-14);
    }

    #[test]
    fn rollout_matches_regression_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let horizon = 4;
        let model = random_model(&mut rng, horizon, 1, &[6], Activation::Tanh, 2.0);
        let mut ys: Vec<f64> = (0..horizon).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut us: Vec<f64> = (0..horizon).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let future: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let hist_y: Vec<_> = ys.iter().map(|&v| DVector::from_vec(vec![v])).collect();
        let hist_u: Vec<_> = us.iter().map(|&v| DVector::from_vec(vec![v])).collect();
        let x0 = model.layout().state_from_history(&hist_y, &hist_u).unwrap();
        let inputs: Vec<_> = future.iter().map(|&v| DVector::from_vec(vec![v])).collect();
        let sim = model.simulate(&x0, &inputs);
        for (k, &u_now) in future.iter().enumerate() {
            let y_next = direct_eta(&model, &ys[ys.len() - horizon..], &us[us.len() - horizon..], u_now);
            ys.push(y_next);
            us.push(u_now);
            assert!((sim[k + 1][0] - y_next).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for &(m, widths) in &[(1usize, &[8usize][..]), (2, &[5, 4][..])] {
            let model = random_model(&mut rng, 3, m, widths, Activation::Tanh, 2.0);
            let n = model.state_dim();
            let x = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let u = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
            let (a, b) = model.jacobians(&x, &u);
            let h = 1e-5;
            let mut a_fd = DMatrix::zeros(n, n);
            for j in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                a_fd.set_column(j, &((model.step(&xp, &u) - model.step(&xm, &u)) / (2.0 * h)));
            }
            let mut b_fd = DMatrix::zeros(n, m);
            for j in 0..m {
                let mut up = u.clone();
                let mut um = u.clone();
                up[j] += h;
                um[j] -= h;
                b_fd.set_column(j, &((model.step(&x, &up) - model.step(&x, &um)) / (2.0 * h)));
            }
            assert!((&a - &a_fd).norm() / a.norm() < 1e-5);
            assert!((&b - &b_fd).norm() / b.norm() < 1e-5);
        }
    }

    #[test]
    fn zero_weights_give_shift_jacobians() {
        let p = FfnnParams::<f64>::zeros(6, 1, 1, &[4], Activation::Tanh).unwrap();
        let model = NnarxModel::new(3, p).unwrap();
        let s = model.shift_matrices();
        let (a, b) = model.jacobians(&DVector::from_element(6, 0.3), &DVector::from_element(1, 0.2));
        assert_eq!(a, s.a);
        assert_eq!(b, s.b_u);
    }

    #[test]
    fn linear_network_has_constant_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let model = random_model(&mut rng, 2, 1, &[3], Activation::Identity, 1.0);
        let l = &model.params().layers[0];
        let u0 = &model.params().output_weights;
        let (a1, b1) = model.jacobians(&DVector::from_element(4, 0.5), &DVector::from_element(1, -2.0));
        let (a2, b2) = model.jacobians(&DVector::from_element(4, -3.0), &DVector::from_element(1, 7.0));
        assert!((&a1 - &a2).norm() < 1e-14 && (&b1 - &b2).norm() < 1e-14);
        let expected_row = u0 * &l.feed_weights;
        assert!((a1.row(2) - expected_row.row(0)).norm() < 1e-14);
        assert!(((u0 * &l.input_weights)[(0, 0)] - b1[(2, 0)]).abs() < 1e-14);
    }

    #[test]
    fn backward_matches_jacobian_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let model = random_model(&mut rng, 2, 2, &[6, 3], Activation::Tanh, 2.0);
        let x = DVector::from_fn(8, |_, _| rng.gen_range(-1.0..1.0));
        let u = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
        let adj = DVector::from_vec(vec![0.3, -1.2]);
        let trace = model.trace(&x, &u);
        let back = model.backward(&x, &u, &trace, &adj, None);
        let (jx, ju) = model.eta_jacobians(&x, &u);
        assert!((back.state - jx.transpose() * &adj).norm() < 1e-13);
        assert!((back.input - ju.transpose() * &adj).norm() < 1e-13);
    }

    #[test]
    fn contraction_margin_examples() {
        let zero = FfnnParams::<f64>::zeros(2, 1, 1, &[2], Activation::Tanh).unwrap();
        assert_eq!(zero.contraction_margin(), 0.0);
        let half = DMatrix::<f64>::identity(2, 2) * 0.5;
        let p = FfnnParams::new(
            vec![Layer {
                input_weights: DMatrix::zeros(2, 2),
                feed_weights: half.clone(),
                bias: DVector::zeros(2),
                activation: Activation::Tanh,
            }],
            half,
            DVector::zeros(2),
        )
        .unwrap();
        assert!((p.contraction_margin() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn contraction_margin_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let model = random_model(&mut rng, 2, 1, &[4, 3], Activation::Tanh, 2.0);
        let (r, g) = model.params().contraction_margin_with_gradient();
        assert!((r - model.contraction_margin()).abs() < 1e-12);
        let base = model.params().to_flat();
        let grad = g.to_flat();
        let h = 1e-6;
        let mut p = model.params().clone();
        for i in 0..base.len() {
            let mut v = base.clone();
            v[i] += h;
            p.set_flat(&v).unwrap();
            let rp = p.contraction_margin();
            v[i] -= 2.0 * h;
            p.set_flat(&v).unwrap();
            let rm = p.contraction_margin();
            let fd = (rp - rm) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-5 * (1.0 + grad[i].abs()), "param {i}: fd {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn disturbed_model_shifts_every_input_slot() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let model = random_model(&mut rng, 3, 1, &[4], Activation::Tanh, 1.0);
        let d = DVector::from_vec(vec![0.25]);
        let dm = Disturbed::new(&model, d);
        let x = DVector::from_fn(6, |i, _| i as f64 * 0.1);
        let u = DVector::from_vec(vec![0.5]);
        let mut xs = x.clone();
        for i in 0..3 {
            xs[2 * i + 1] += 0.25;
        }
        assert_eq!(dm.eta(&x, &u), model.eta(&xs, &DVector::from_vec(vec![0.75])));
        // stored input is the applied one
        assert_eq!(dm.step(&x, &u)[5], 0.5);
        let zero = Disturbed::new(&model, DVector::zeros(1));
        assert_eq!(zero.step(&x, &u), model.step(&x, &u));
    }

    #[test]
    fn generic_over_f32() {
        let p = FfnnParams::<f32>::zeros(4, 1, 1, &[3], Activation::Tanh).unwrap();
        let model = NnarxModel::new(2, p).unwrap();
        let ys = model.simulate(&DVector::zeros(4), &[DVector::from_element(1, 1.0f32)]);
        assert_eq!(ys.len(), 2);
    }
}
