use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::problem::{Ocp, PredictionModel, TerminalMode};
use crate::linalg::inf_norm;
use crate::scalar::{lit, to_f64, Real};

/// Caps and tolerances of the augmented-Lagrangian / projected Gauss-Newton solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub terminal_tolerance: f64,
    pub optimality_tolerance: f64,
    pub max_inner_iterations: usize,
    pub max_outer_iterations: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            terminal_tolerance: 1e-8,
            optimality_tolerance: 1e-6,
            max_inner_iterations: 500,
            max_outer_iterations: 20,
            initial_penalty: 1.0,
            penalty_growth: 10.0,
            max_penalty: 1e12,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
        }
    }
}

/// Result of one OCP solve.
#[derive(Clone, Debug)]
pub struct OcpSolution<T: Real> {
    /// Applied inputs `u_0 .. u_{N-1}`.
    pub inputs: Vec<DVector<T>>,
    /// Predicted states `s_0 .. s_N`.
    /// Objective without terminal-condition terms.
    pub cost: T,
    /// `||s_N - s_target||_inf`.
    pub terminal_residual: T,
    /// Projected-gradient norm of the last inner problem.
    pub optimality: T,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Terminal multiplier (warm start for the next solve).
    pub multiplier: DVector<T>,
}

/// Objective value, gradient and Gauss-Newton Hessian of the inner problem.
pub(crate) struct Linearization<T: Real> {
    pub value: T,
    pub gradient: DVector<T>,
    pub hessian: DMatrix<T>,
}

/// Weight of the terminal terms in the inner objective:
/// `lambda' c + rho/2 ||c||^2` (equality) or `P ||c||^2` (penalty).
#[derive(Clone, Copy)]
enum TerminalTerm<'v, T: Real> {
    Lagrangian { lambda: &'v DVector<T>, rho: T },
    Penalty(T),
}

fn terminal_value<T: Real>(term: TerminalTerm<'_, T>, c: &DVector<T>) -> T {
    match term {
        TerminalTerm::Lagrangian { lambda, rho } => lambda.dot(c) + rho * lit::<T>(0.5) * c.norm_squared(),
        TerminalTerm::Penalty(p) => p * c.norm_squared(),
    }
}

fn objective<T: Real, P: PredictionModel<T>>(ocp: &Ocp<'_, T, P>, z: &DVector<T>, term: TerminalTerm<'_, T>) -> T {
    let states = ocp.rollout(z);
    let c = ocp.terminal_residual(&states);
    ocp.stage_cost(&states, &ocp.inputs(z)) + terminal_value(term, &c)
}

/// Rollout with forward sensitivities `S_i = d s_i / d z`, accumulating the
/// exact gradient and the Gauss-Newton Hessian of the inner objective.
fn linearize<T: Real, P: PredictionModel<T>>(
    ocp: &Ocp<'_, T, P>,
    z: &DVector<T>,
    term: TerminalTerm<'_, T>,
) -> Linearization<T> {
    let model = ocp.model;
    let ns = model.state_dim();
    let m = model.input_dim();
    let nz = ocp.decision_len();
    let two = lit::<T>(2.0);
    let c_out = model.output_matrix();
    let terminal_input = model.terminal_input();

    // Stage weight on the state, including the output term.
    let w_state = &ocp.q + c_out.transpose() * &ocp.r_e * &c_out;

    let inputs = ocp.inputs(z);
    let mut states = Vec::with_capacity(ocp.horizon + 1);
    states.push(ocp.initial_state.clone());
    let mut sens = DMatrix::<T>::zeros(ns, nz);
    let mut gradient = DVector::<T>::zeros(nz);
    let mut hessian = DMatrix::<T>::zeros(nz, nz);
    let mut value = T::zero();

    for i in 0..=ocp.horizon {
        let s = states[i].clone();
        let es = &s - &ocp.state_target;
        let ey = &c_out * &s - &ocp.output_target;
        let qe = &ocp.q * &es;
        let re = &ocp.r_e * &ey;
        let mut stage = es.dot(&qe) + ey.dot(&re);
        let mut lin = (qe + c_out.transpose() * re) * two;
        let mut weight = w_state.clone();

        if i < ocp.horizon {
            let eu = &inputs[i] - &ocp.input_target;
            let ru = &ocp.r_u * &eu;
            stage += eu.dot(&ru);
            let b = ocp.block(i) * m;
            let mut g = gradient.rows_mut(b, m);
            g.axpy(two, &ru, T::one());
            let mut h = hessian.view_mut((b, b), (m, m));
            h += &ocp.r_u * two;
        } else {
            if let Some((e, e0)) = &terminal_input {
                let eu = e * &s + e0 - &ocp.input_target;
                let ru = &ocp.r_u * &eu;
                stage += eu.dot(&ru);
                lin += e.transpose() * ru * two;
                weight += e.transpose() * &ocp.r_u * e;
            }
            let c = &es;
            match term {
                TerminalTerm::Lagrangian { lambda, rho } => {
                    lin += lambda + c * rho;
                    weight += DMatrix::<T>::identity(ns, ns) * (rho / two);
                }
                TerminalTerm::Penalty(p) => {
                    lin += c * (two * p);
                    weight += DMatrix::<T>::identity(ns, ns) * p;
                }
            }
            stage += terminal_value(term, c);
        }
        value += stage;
        let ws = &weight * &sens;
        hessian.gemm_tr(two, &sens, &ws, T::one());
        gradient.gemv_tr(T::one(), &sens, &lin, T::one());

        if i < ocp.horizon {
            let (next, a, b) = model.step_linearized(&s, &inputs[i]);
            let mut new_sens = &a * &sens;
            let blk = ocp.block(i) * m;
            let mut col = new_sens.columns_mut(blk, m);
            col += &b;
            sens = new_sens;
            states.push(next);
        }
    }
    Linearization {
        value,
        gradient,
        hessian,

    }
}

fn projected_gradient_norm<T: Real, P: PredictionModel<T>>(ocp: &Ocp<'_, T, P>, z: &DVector<T>, g: &DVector<T>) -> T {
    let mut trial = z - g;
    ocp.project(&mut trial);
    inf_norm(&(trial - z))
}

struct InnerResult<T: Real> {
    z: DVector<T>,
    optimality: T,
    iterations: usize,
    converged: bool,
}

/// Projected Gauss-Newton with an active-set reduced step and Armijo
/// backtracking along the projection arc.
fn solve_inner<T: Real, P: PredictionModel<T>>(
    ocp: &Ocp<'_, T, P>,
    mut z: DVector<T>,
    term: TerminalTerm<'_, T>,
    opts: &SolverOptions,
) -> InnerResult<T> {
    let tol = lit::<T>(opts.optimality_tolerance);
    let sigma = lit::<T>(opts.armijo);
    let beta = lit::<T>(opts.backtrack);
    let m = ocp.model.input_dim();
    let nz = z.len();
    for it in 0..opts.max_inner_iterations {
        let lin = linearize(ocp, &z, term);
        let g = &lin.gradient;
        let optimality = projected_gradient_norm(ocp, &z, g);
        if optimality <= tol {
            return InnerResult {
                z,
                optimality,
                iterations: it,
                converged: true,
            };
        }
        // Active bounds: at a bound with the gradient pushing outward.
        let eps = lit::<T>(1e-12);
        let free: Vec<usize> = (0..nz)
            .filter(|&k| {
                let (lo, hi) = (ocp.lower[k % m], ocp.upper[k % m]);
                !((z[k] <= lo + eps && g[k] > T::zero()) || (z[k] >= hi - eps && g[k] < T::zero()))
            })
            .collect();
        let mut d = DVector::<T>::zeros(nz);
        if !free.is_empty() {
            let hf = DMatrix::from_fn(free.len(), free.len(), |r, c| lin.hessian[(free[r], free[c])]);
            let gf = DVector::from_fn(free.len(), |r, _| -g[free[r]]);
            let step = regularized_solve(hf, gf);
            for (r, &k) in free.iter().enumerate() {
                d[k] = step[r];
            }
        }
        let accepted = line_search(ocp, &z, &d, g, lin.value, term, sigma, beta, opts.max_backtracks)
            .or_else(|| {
                // Fall back to steepest descent scaled by the Hessian diagonal.
                let scale = lin.hessian.diagonal().iter().fold(T::zero(), |a, &b| a.max(b)).max(eps);
                let d = -g / scale;
                line_search(ocp, &z, &d, g, lin.value, term, sigma, beta, opts.max_backtracks)
            });
        match accepted {
            Some(next) => z = next,
            None => {
                return InnerResult {
                    z,
                    optimality,
                    iterations: it + 1,
                    converged: false,
                }
            }
        }
    }
    let lin = linearize(ocp, &z, term);
    let optimality = projected_gradient_norm(ocp, &z, &lin.gradient);
    InnerResult {
        z,
        converged: optimality <= tol,
        optimality,
        iterations: opts.max_inner_iterations,
    }
}

#[allow(clippy::too_many_arguments)]
fn line_search<T: Real, P: PredictionModel<T>>(
    ocp: &Ocp<'_, T, P>,
    z: &DVector<T>,
    d: &DVector<T>,
    g: &DVector<T>,
    f0: T,
    term: TerminalTerm<'_, T>,
    sigma: T,
    beta: T,
    max_backtracks: usize,
) -> Option<DVector<T>> {
    let mut alpha = T::one();
    for _ in 0..=max_backtracks {
        let mut trial = z + d * alpha;
        ocp.project(&mut trial);
        let delta = &trial - z;
        let decrease = g.dot(&delta);
        if decrease < T::zero() {
            let f = objective(ocp, &trial, term);
            if f.is_finite() && f <= f0 + sigma * decrease {
                return Some(trial);
            }
        }
        alpha *= beta;
    }
    None
}

/// Solves `H d = r` with Cholesky, adding diagonal regularization as needed.
fn regularized_solve<T: Real>(h: DMatrix<T>, r: DVector<T>) -> DVector<T> {
    let n = h.nrows();
    let scale = h.diagonal().iter().fold(T::zero(), |a, &b| a.max(b.abs())).max(T::one());
    let mut delta = T::zero();
    for _ in 0..20 {
        let mut hr = h.clone();
        for i in 0..n {
            hr[(i, i)] += delta;
        }
        if let Some(ch) = hr.cholesky() {
            let d = ch.solve(&r);
            if d.iter().all(|v| v.is_finite()) {
                return d;
            }
        }
        delta = if delta == T::zero() { scale * lit::<T>(1e-12) } else { delta * lit::<T>(100.0) };
    }
    r / scale
}

/// Solves the OCP from the warm start `initial` (packed decision vector,
/// projected onto the box first).
pub fn solve_ocp<T: Real, P: PredictionModel<T>>(
    ocp: &Ocp<'_, T, P>,
    initial: &DVector<T>,
    multiplier: Option<&DVector<T>>,
    opts: &SolverOptions,
) -> OcpSolution<T> {
    let ns = ocp.model.state_dim();
    let mut z = initial.clone();
    ocp.project(&mut z);
    let mut lambda = multiplier.cloned().unwrap_or_else(|| DVector::zeros(ns));
    let tol = lit::<T>(opts.terminal_tolerance);
    let mut inner_total = 0;
    let mut outer = 0;
    let mut optimality;
    let mut converged;

    match ocp.terminal {
        TerminalMode::Penalty(p) => {
            let res = solve_inner(ocp, z, TerminalTerm::Penalty(lit(p)), opts);
            z = res.z;
            inner_total = res.iterations;
            optimality = res.optimality;
            converged = res.converged;
            outer = 1;
        }
        TerminalMode::Equality => {
            let mut rho = lit::<T>(opts.initial_penalty);
            let mut previous = T::max_value().unwrap_or_else(|| lit(f64::MAX));
            optimality = T::zero();
            converged = false;
            while outer < opts.max_outer_iterations {
                outer += 1;
                let res = solve_inner(ocp, z, TerminalTerm::Lagrangian { lambda: &lambda, rho }, opts);
                z = res.z;
                inner_total += res.iterations;
                optimality = res.optimality;
                let c = ocp.terminal_residual(&ocp.rollout(&z));
                let residual = inf_norm(&c);
                if residual <= tol && res.converged {
                    converged = true;
                    break;
                }
                lambda += &c * rho;
                if residual > lit::<T>(0.25) * previous {
                    rho = (rho * lit::<T>(opts.penalty_growth)).min(lit(opts.max_penalty));
                }
                previous = residual;
            }
        }
    }

    let states = ocp.rollout(&z);
    let inputs = ocp.inputs(&z);
    let cost = ocp.stage_cost(&states, &inputs);
    let terminal_residual = inf_norm(&ocp.terminal_residual(&states));
    if matches!(ocp.terminal, TerminalMode::Penalty(_)) {
        converged = converged && terminal_residual.is_finite();
    }
    log::trace!(
        "ocp: cost {:.6e}, terminal residual {:.3e}, {} outer / {} inner",
        to_f64(cost),
        to_f64(terminal_residual),
        outer,
        inner_total
    );
    OcpSolution {
        inputs,
        cost,
        terminal_residual,
        optimality,
        inner_iterations: inner_total,
        outer_iterations: outer,
        converged,
        multiplier: lambda,
    }
}

#[cfg(test)]
pub(crate) fn inner_gradient<T: Real, P: PredictionModel<T>>(
    ocp: &Ocp<'_, T, P>,
    z: &DVector<T>,
    lambda: &DVector<T>,
    rho: T,
) -> (T, DVector<T>) {
    let lin = linearize(ocp, z, TerminalTerm::Lagrangian { lambda, rho });
    (lin.value, lin.gradient)
}

#[cfg(test)]
pub(crate) fn inner_value<T: Real, P: PredictionModel<T>>(
    ocp: &Ocp<'_, T, P>,
    z: &DVector<T>,
    lambda: &DVector<T>,
    rho: T,
) -> T {
    objective(ocp, z, TerminalTerm::Lagrangian { lambda, rho })
}
