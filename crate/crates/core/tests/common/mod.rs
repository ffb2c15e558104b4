#![allow(dead_code)]

use nnarx_mpc::nnarx::{Activation, FfnnParams, ModelBundle, NnarxModel, Scaling};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random single-input model with a strengthened direct input path, so its
/// dc gain is of order one and its linearizations are Schur stable.
pub fn responsive_model(seed: u64, horizon: usize, widths: &[usize], act: Activation) -> NnarxModel<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = FfnnParams::<f64>::random(horizon * 2, 1, 1, widths, act, &mut rng).unwrap();
    let mut flat = p.to_flat();
    flat.iter_mut().for_each(|w| *w += rng.gen_range(-0.05..0.05));
    p.set_flat(&flat).unwrap();
    for j in 0..p.layers[0].bias.len() {
        p.layers[0].input_weights[(j, 0)] *= 6.0;
    }
    if p.layers.len() == 1 {
        for j in 0..p.layers[0].bias.len() {
            let w = p.layers[0].input_weights[(j, 0)];
            p.output_weights[(0, j)] = w.signum() * p.output_weights[(0, j)].abs().max(0.3);
        }
    }
    NnarxModel::new(horizon, p).unwrap()
}

/// The model with identity scaling, so physical and model units agree.
pub fn unit_bundle(model: NnarxModel<f64>) -> ModelBundle<f64> {
    ModelBundle {
        model,
        scaling: Scaling::identity(1, 1),
    }
}
