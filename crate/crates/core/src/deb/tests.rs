use nalgebra::{DMatrix, DVector};

use super::*;
use crate::augment::{solve_equilibrium, Bounds, NewtonOptions};
use crate::error::Error;
use crate::mpc::MpcConfig;
use crate::nnarx::{Activation, Disturbed, NarxDynamics, NnarxModel};
use crate::testutil::{equilibrium_at, rel_err, responsive_model};

/// Window recorded from `plant` driven by `inputs` from `start`.
fn record<P: NarxDynamics<f64>>(plant: &P, start: &DVector<f64>, inputs: &[DVector<f64>]) -> MheWindow<f64> {
    let states = plant.rollout(start, inputs);
    MheWindow {
        start: start.clone(),
        inputs: inputs.to_vec(),
        outputs: states[1..].iter().map(|x| plant.output(x)).collect(),
    }
}

fn excitation(len: usize) -> Vec<DVector<f64>> {
    (0..len).map(|k| DVector::from_element(1, 0.2 + 0.3 * (k as f64 * 0.9).sin())).collect()
}

#[test]
fn mhe_gradient_matches_finite_differences() {
    let model = responsive_model(41, 3, &[5], Activation::Tanh);
    let start = equilibrium_at(&model, 0.1).x;
    let truth = Disturbed::new(&model, DVector::from_element(1, 0.07));
    let window = record(&truth, &start, &excitation(20));
    let prior = DVector::from_element(1, -0.02);
    let cfg = MheConfig::default();
    for d0 in [-0.1, 0.03, 0.2] {
        let d = DVector::from_element(1, d0);
        let (_, g) = mhe_cost(&model, &window, &d, &prior, &cfg);
        let h = 1e-6;
        let fd = (mhe_cost(&model, &window, &d.add_scalar(h), &prior, &cfg).0
            - mhe_cost(&model, &window, &d.add_scalar(-h), &prior, &cfg).0)
            / (2.0 * h);
        assert!(rel_err(fd, g[0]) < 1e-5, "d={d0}: fd {fd} vs {}", g[0]);
    }
}

#[test]
fn undisturbed_model_gives_zero_estimate() {
    let model = responsive_model(42, 2, &[6], Activation::Tanh);
    let start = equilibrium_at(&model, 0.0).x;
    let inputs = excitation(100);
    let states = model.rollout(&start, &inputs);
    let mut prior = DVector::from_element(1, 0.3);
    for w in 0..5 {
        let k0 = 20 * w;
        let window = MheWindow {
            start: states[k0].clone(),
            inputs: inputs[k0..k0 + 20].to_vec(),
            outputs: states[k0 + 1..k0 + 21].iter().map(|x| model.output(x)).collect(),
        };
        prior = mhe_estimate(&model, &window, &prior, &MheConfig::default()).unwrap().estimate;
    }
    assert!(prior.amax() < 1e-6, "estimate {}", prior[0]);
}

#[test]
fn injected_offset_is_recovered() {
    let model = responsive_model(43, 2, &[6], Activation::Tanh);
    let start = equilibrium_at(&model, 0.1).x;
    let delta = DVector::from_element(1, -0.12);
    let truth = Disturbed::new(&model, delta.clone());
    let window = record(&truth, &start, &excitation(20));
    let cfg = MheConfig {
        prior_weight: 0.0,
        ..MheConfig::default()
    };
    let est = mhe_estimate(&model, &window, &DVector::zeros(1), &cfg).unwrap();
    assert!(est.converged);
    assert!((&est.estimate - &delta).amax() < 1e-4);
}

/// Outputs of an affine model are affine in `d`: probe `r(d) = r0 + J d`.
fn affine_residuals(model: &NnarxModel<f64>, window: &MheWindow<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sim = |d: f64| {
        let dist = Disturbed::new(model, DVector::from_element(1, d));
        let states = dist.rollout(&window.start, &window.inputs);
        DVector::from_iterator(window.len(), (0..window.len()).map(|i| dist.output(&states[i + 1])[0] - window.outputs[i][0]))
    };
    let r0 = sim(0.0);
    let j = DMatrix::from_column_slice(window.len(), 1, (sim(1.0) - &r0).as_slice());
    (r0, j)
}

#[test]
fn linear_model_matches_least_squares_oracle() {
    for len in [1, 20] {
        let model = responsive_model(44, 2, &[4], Activation::Identity);
        let start = DVector::from_fn(4, |i, _| 0.1 * i as f64);
        let truth = Disturbed::new(&model, DVector::from_element(1, 0.05));
        let mut window = record(&truth, &start, &excitation(len));
        for (i, y) in window.outputs.iter_mut().enumerate() {
            y[0] += 0.01 * ((i * 7 % 5) as f64 - 2.0);
        }
        let prior = DVector::from_element(1, 0.02);
        let cfg = MheConfig {
            prior_weight: 0.5,
            output_weight: 2.0,
            ..MheConfig::default()
        };
        let (r0, j) = affine_residuals(&model, &window);
        let lhs = j.transpose() * &j * cfg.output_weight + DMatrix::identity(1, 1) * cfg.prior_weight;
        let rhs = &prior * cfg.prior_weight - j.transpose() * &r0 * cfg.output_weight;
        let oracle = lhs.lu().solve(&rhs).unwrap();
        let est = mhe_estimate(&model, &window, &prior, &cfg).unwrap();
        assert!(rel_err(est.estimate[0], oracle[0]) < 1e-6, "len {len}: {} vs {}", est.estimate[0], oracle[0]);
    }
}

#[test]
fn zero_disturbance_target_is_nominal_equilibrium() {
    let model = responsive_model(45, 2, &[6], Activation::Tanh);
    let eq = equilibrium_at(&model, 0.2);
    let t = deb_target(&model, &eq.y, &DVector::zeros(1), &DVector::zeros(1), None, &NewtonOptions::default()).unwrap();
    assert!((&t.u - &eq.u).amax() < 1e-9);
    assert!((&t.x - &eq.x).amax() < 1e-9);
}

#[test]
fn linear_target_shifts_by_the_disturbance() {
    let model = responsive_model(46, 2, &[4], Activation::Identity);
    let y = DVector::from_element(1, 0.4);
    let nominal = solve_equilibrium(&model, &y, &DVector::zeros(1), None, &NewtonOptions::default()).unwrap();
    let d = DVector::from_element(1, 0.13);
    let shifted = deb_target(&model, &y, &d, &DVector::zeros(1), None, &NewtonOptions::default()).unwrap();
    assert!((shifted.u[0] - (nominal.u[0] - 0.13)).abs() < 1e-9);
}

#[test]
fn target_outside_box_is_infeasible() {
    let model = responsive_model(47, 2, &[6], Activation::Tanh);
    let eq = equilibrium_at(&model, 0.5);
    let bounds = Bounds {
        lower: DVector::from_element(1, -1.0),
        upper: DVector::from_element(1, 1.0),
    };
    let err = deb_target(&model, &eq.y, &DVector::from_element(1, -0.8), &eq.u, Some(&bounds), &NewtonOptions::default()).unwrap_err();
    assert!(matches!(err, Error::InfeasibleSetpoint { .. }), "{err}");
}

fn run_with_offset(estimation: bool, steps: usize) -> (f64, f64) {
    let model = responsive_model(48, 2, &[6], Activation::Tanh);
    let delta = DVector::from_element(1, 0.1);
    let plant = Disturbed::new(&model, delta.clone());
    let bounds = Bounds {
        lower: DVector::from_element(1, -1.0),
        upper: DVector::from_element(1, 1.0),
    };
    let cfg = DebConfig {
        mpc: MpcConfig {
            horizon: 12,
            ..MpcConfig::default()
        },
        ..DebConfig::default()
    };
    let mut deb = DebMpc::new(model.clone(), bounds, cfg).unwrap();
    deb.set_estimation(estimation);
    let goal = equilibrium_at(&model, 0.3);
    deb.set_setpoint(&goal.y).unwrap();
    let mut x = equilibrium_at(&model, 0.0).x;
    for _ in 0..steps {
        let step = deb.step(&x).unwrap();
        assert!(step.u[0].abs() <= 1.0);
        x = plant.step(&x, &step.u);
    }
    ((model.output(&x)[0] - goal.y[0]).abs(), deb.estimate()[0])
}

#[test]
fn estimated_offset_is_rejected() {
    let (err, est) = run_with_offset(true, 80);
    assert!(err < 1e-6, "offset {err}");
    assert!((est - 0.1).abs() < 1e-4, "estimate {est}");
}

#[test]
fn frozen_estimate_leaves_an_offset() {
    let (err, _) = run_with_offset(false, 80);
    assert!(err > 1e-3, "offset {err}");
}
