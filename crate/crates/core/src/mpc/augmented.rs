use nalgebra::{DMatrix, DVector};

use super::problem::{Ocp, PredictionModel};
use crate::augment::AugmentedModel;
use crate::nnarx::NarxDynamics;
use crate::scalar::{lit, Real};

/// The augmented model with the applied input `u = xi + v - theta` as the
/// optimizer's input. The map `v <-> u` is a bijection along any rollout, so
/// the input box becomes a plain box on the decision variables.
#[derive(Clone, Debug)]
pub struct AugmentedPrediction<'a, T: Real, M: NarxDynamics<T>> {
    pub aug: AugmentedModel<'a, T, M>,
    c: DMatrix<T>,
}

impl<'a, T: Real, M: NarxDynamics<T>> AugmentedPrediction<'a, T, M> {
    pub fn new(aug: AugmentedModel<'a, T, M>) -> Self {
        let c = aug.model.layout().shift_matrices::<T>().c;
        Self { aug, c }
    }

    /// `v = u - xi + theta`.
    pub fn to_v(&self, chi: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        let (_, xi, theta) = self.aug.split(chi);
        u - xi + theta
    }

    /// Converts an input plan along its own rollout from `chi0`.
    pub fn inputs_to_v(&self, chi0: &DVector<T>, inputs: &[DVector<T>]) -> Vec<DVector<T>> {
        let mut chi = chi0.clone();
        let mut out = Vec::with_capacity(inputs.len());
        for u in inputs {
            let v = self.to_v(&chi, u);
            chi = self.step(&chi, u);
            out.push(v);
        }
        out
    }

    /// Converts a `v` plan to applied inputs along its rollout from `chi0`.
    pub fn v_to_inputs(&self, chi0: &DVector<T>, vs: &[DVector<T>]) -> Vec<DVector<T>> {
        let mut chi = chi0.clone();
        let mut out = Vec::with_capacity(vs.len());
        for v in vs {
            let u = self.aug.input(&chi, v);
            chi = self.aug.step(&chi, v).0;
            out.push(u);
        }
        out
    }
}

impl<'a, T: Real, M: NarxDynamics<T>> PredictionModel<T> for AugmentedPrediction<'a, T, M> {
    fn state_dim(&self) -> usize {
        self.aug.state_dim()
    }

    fn input_dim(&self) -> usize {
        self.aug.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.aug.model.output_dim()
    }

    fn step(&self, s: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        let v = self.to_v(s, u);
        self.aug.step(s, &v).0
    }

    fn step_linearized(&self, s: &DVector<T>, u: &DVector<T>) -> (DVector<T>, DMatrix<T>, DMatrix<T>) {
        let n = self.aug.model.state_dim();
        let m = self.aug.input_dim();
        let (x, _, _) = self.aug.split(s);
        let (ax, bx) = self.aug.model.jacobians(&x, u);
        let ns = n + 2 * m;
        let mut a = DMatrix::zeros(ns, ns);
        a.view_mut((0, 0), (n, n)).copy_from(&ax);
        a.view_mut((n, 0), (m, n)).copy_from(&(-(&self.aug.mu * &self.c)));
        for j in 0..m {
            a[(n + j, n + j)] = T::one();
            a[(n + m + j, n + j)] = -T::one();
            a[(n + m + j, n + m + j)] = T::one();
        }
        let mut b = DMatrix::zeros(ns, m);
        b.view_mut((0, 0), (n, m)).copy_from(&bx);
        b.view_mut((n + m, 0), (m, m)).fill_with_identity();
        (self.step(s, u), a, b)
    }

    fn output_matrix(&self) -> DMatrix<T> {
        let n = self.aug.model.state_dim();
        let mut c = DMatrix::zeros(self.c.nrows(), self.state_dim());
        c.view_mut((0, 0), (self.c.nrows(), n)).copy_from(&self.c);
        c
    }

    /// At the terminal stage the derivative action is taken as zero, so the
    /// charged input is `xi_N`.
    fn terminal_input(&self) -> Option<(DMatrix<T>, DVector<T>)> {
        let n = self.aug.model.state_dim();
        let m = self.aug.input_dim();
        let mut e = DMatrix::zeros(m, self.state_dim());
        e.view_mut((0, n), (m, m)).fill_with_identity();
        Some((e, DVector::zeros(m)))
    }
}

/// Cost of a `v` sequence over the full horizon and its gradient by a
/// reverse sweep through the rollout. Terminal-condition terms are excluded.
pub fn evaluate_cost<T: Real, M: NarxDynamics<T>>(
    ocp: &Ocp<'_, T, AugmentedPrediction<'_, T, M>>,
    vs: &[DVector<T>],
) -> (T, Vec<DVector<T>>) {
    assert_eq!(vs.len(), ocp.horizon, "v sequence must span the horizon");
    let pred = ocp.model;
    let aug = &pred.aug;
    let n = aug.model.state_dim();
    let m = aug.input_dim();
    let two = lit::<T>(2.0);
    let c_out = pred.output_matrix();
    let (e_term, _) = pred.terminal_input().expect("augmented model charges a terminal input");

    let mut chis = Vec::with_capacity(vs.len() + 1);
    let mut us = Vec::with_capacity(vs.len());
    let mut jacs = Vec::with_capacity(vs.len());
    chis.push(ocp.initial_state.clone());
    for v in vs {
        let chi = chis.last().unwrap();
        let u = aug.input(chi, v);
        let (x, _, _) = aug.split(chi);
        jacs.push(aug.model.jacobians(&x, &u));
        let next = aug.step(chi, v).0;
        us.push(u);
        chis.push(next);
    }

    // Partial derivative of the state and output terms of stage i w.r.t. chi_i.
    let state_part = |chi: &DVector<T>| -> (T, DVector<T>) {
        let es = chi - &ocp.state_target;
        let ey = &c_out * chi - &ocp.output_target;
        let qe = &ocp.q * &es;
        let re = &ocp.r_e * &ey;
        (es.dot(&qe) + ey.dot(&re), (qe + c_out.transpose() * re) * two)
    };

    let mut cost = T::zero();
    let big_n = vs.len();
    let (c_n, mut adj) = state_part(&chis[big_n]);
    cost += c_n;
    let eu_n = &e_term * &chis[big_n] - &ocp.input_target;
    let ru_n = &ocp.r_u * &eu_n;
    cost += eu_n.dot(&ru_n);
    adj += e_term.transpose() * ru_n * two;

    let mut grad = vec![DVector::zeros(m); big_n];
    let mu_c = &aug.mu * &c_out.view((0, 0), (c_out.nrows(), n));
    for i in (0..big_n).rev() {
        let (ax, bx) = &jacs[i];
        let (c_i, lin) = state_part(&chis[i]);
        cost += c_i;
        let eu = &us[i] - &ocp.input_target;
        let ru = &ocp.r_u * &eu * two;
        cost += eu.dot(&ru) / two;

        let lx = adj.rows(0, n).into_owned();
        let lxi = adj.rows(n, m).into_owned();
        let lth = adj.rows(n + m, m).into_owned();
        let bt_lx = bx.transpose() * &lx;
        // dchi+/dv: x through u, theta directly.
        grad[i] = &ru + &bt_lx + &lth;
        let mut next = lin;
        {
            let mut px = next.rows_mut(0, n);
            px += ax.transpose() * &lx - mu_c.transpose() * &lxi;
        }
        {
            let mut pxi = next.rows_mut(n, m);
            pxi += &bt_lx + &lxi + &ru;
        }
        {
            let mut pth = next.rows_mut(n + m, m);
            pth -= &bt_lx + &ru;
        }
        adj = next;
    }
    (cost, grad)
}
