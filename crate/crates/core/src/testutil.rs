use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{solve_equilibrium, Equilibrium, NewtonOptions};
use crate::nnarx::{Activation, FfnnParams, NnarxModel};

/// Random model with weights scaled by `scale`; small scales give
/// contractive, Schur-stable models.
pub fn random_model(seed: u64, horizon: usize, m: usize, widths: &[usize], act: Activation, scale: f64) -> NnarxModel<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = horizon * 2 * m;
    let mut p = FfnnParams::random(n, m, m, widths, act, &mut rng).unwrap();
    let mut flat = p.to_flat();
    flat.iter_mut().for_each(|w| *w = *w * scale + rng.gen_range(-0.05..0.05));
    p.set_flat(&flat).unwrap();
    NnarxModel::new(horizon, p).unwrap()
}

pub fn equilibrium_at(model: &NnarxModel<f64>, u: f64) -> Equilibrium<f64> {
    use crate::nnarx::NarxDynamics;
    let m = model.input_dim();
    let x0 = model.layout().repeated_state(&DVector::zeros(m), &DVector::from_element(m, u));
    let inputs = vec![DVector::from_element(m, u); 400];
    let ys = model.simulate(&x0, &inputs);
    solve_equilibrium(model, ys.last().unwrap(), &DVector::from_element(m, u), None, &NewtonOptions::default()).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Random model whose direct input path is strengthened and aligned with the
/// readout, giving a positive dc gain of order one.
pub fn responsive_model(seed: u64, horizon: usize, widths: &[usize], act: Activation) -> NnarxModel<f64> {
    let base = random_model(seed, horizon, 1, widths, act, 1.0);
    let mut p = base.params().clone();
    let last = p.layers.len() - 1;
    for j in 0..p.layers[0].bias.len() {
        p.layers[0].input_weights[(j, 0)] *= 6.0;
    }
    if last == 0 {
        for j in 0..p.layers[0].bias.len() {
            let w = p.layers[0].input_weights[(j, 0)];
            p.output_weights[(0, j)] = w.signum() * p.output_weights[(0, j)].abs().max(0.3);
        }
    }
    NnarxModel::new(horizon, p).unwrap()
}
