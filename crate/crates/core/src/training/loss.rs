use nalgebra::DVector;
use rayon::prelude::*;

use super::dataset::Subsequence;
use crate::error::{Error, Result};
use crate::nnarx::{FfnnParams, NarxDynamics, NnarxModel};
use crate::scalar::{lit, Real};

/// State at `k0 = N` built from `y_1..y_N` and `u_0..u_{N-1}`; the loss
/// covers the free-run predictions of `y_{N+1} .. y_{T-1}`.
pub fn initial_state<T: Real>(model: &NnarxModel<T>, sub: &Subsequence<T>) -> Result<DVector<T>> {
    let n = model.horizon();
    if sub.len() < n + 2 {
        return Err(Error::InvalidArgument(format!(
            "subsequence of {} samples is too short for horizon {n} (need at least {})",
            sub.len(),
            n + 2
        )));
    }
    model.layout().state_from_history(&sub.outputs[1..=n], &sub.inputs[..n])
}

/// Free-run simulation over a subsequence: predictions of `y_{N+1}..y_{T-1}`.
pub fn free_run<T: Real>(model: &NnarxModel<T>, sub: &Subsequence<T>) -> Result<Vec<DVector<T>>> {
    let mut x = initial_state(model, sub)?;
    let n = model.horizon();
    let mut out = Vec::with_capacity(sub.len() - n - 1);
    for k in n..sub.len() - 1 {
        x = model.step(&x, &sub.inputs[k]);
        out.push(model.output(&x));
    }
    Ok(out)
}

/// Sum of squared free-run errors and the number of predicted samples.
pub fn squared_error<T: Real>(model: &NnarxModel<T>, sub: &Subsequence<T>) -> Result<(T, usize)> {
    let n = model.horizon();
    let pred = free_run(model, sub)?;
    let sum = pred
        .iter()
        .zip(&sub.outputs[n + 1..])
        .fold(T::zero(), |acc, (p, y)| acc + (p - y).norm_squared());
    Ok((sum, pred.len()))
}

/// Squared free-run error and its gradient by back-propagation through time.
pub fn squared_error_with_gradient<T: Real>(
    model: &NnarxModel<T>,
    sub: &Subsequence<T>,
    scale: T,
) -> Result<(T, FfnnParams<T>)> {
    let n = model.horizon();
    let layout = model.layout();
    let off = layout.output_offset();
    let p = layout.outputs;
    let x0 = initial_state(model, sub)?;
    let steps = sub.len() - 1 - n;
    let mut states = Vec::with_capacity(steps + 1);
    let mut traces = Vec::with_capacity(steps);
    states.push(x0);
    let mut sum = T::zero();
    for i in 0..steps {
        let k = n + i;
        let x = &states[i];
        let trace = model.trace(x, &sub.inputs[k]);
        sum += (&trace.output - &sub.outputs[k + 1]).norm_squared();
        let next = layout.shift(x, &sub.inputs[k], &trace.output);
        traces.push(trace);
        states.push(next);
    }
    let mut grad = model.params().zeros_like();
    let two = lit::<T>(2.0) * scale;
    let mut adj = DVector::<T>::zeros(layout.state_dim());
    for i in (0..steps).rev() {
        let k = n + i;
        let trace = &traces[i];
        let mut g = adj.rows(off, p).into_owned();
        g.axpy(two, &(&trace.output - &sub.outputs[k + 1]), T::one());
        let back = model.backward(&states[i], &sub.inputs[k], trace, &g, Some(&mut grad));
        adj = layout.shift_transpose(&adj) + back.state;
    }
    Ok((sum, grad))
}

fn softplus<T: Real>(z: T) -> (T, T) {
    let e = (-z.abs()).exp();
    let value = z.max(T::zero()) + (T::one() + e).ln();
    let slope = if z >= T::zero() { T::one() / (T::one() + e) } else { e / (T::one() + e) };
    (value, slope)
}

/// Loss value, its parts, and the parameter gradient.
#[derive(Clone, Debug)]
pub struct LossEval<T: Real> {
    pub loss: T,
    pub mse: T,
    pub margin: T,
    pub gradient: FfnnParams<T>,
}

/// Contraction regularizer `weight * softplus(r - target)` and its gradient.
pub fn contraction_penalty<T: Real>(params: &FfnnParams<T>, weight: T, target: T) -> (T, T, FfnnParams<T>) {
    let (r, mut g) = params.contraction_margin_with_gradient();
    let (sp, slope) = softplus(r - target);
    g.scale_mut(weight * slope);
    (weight * sp, r, g)
}

/// Mean squared free-run error over a batch plus the contraction penalty.
///
/// Per-subsequence gradients are computed in parallel and summed in batch
/// order, so the result does not depend on thread scheduling.
pub fn simulation_loss<T: Real>(
    model: &NnarxModel<T>,
    batch: &[Subsequence<T>],
    penalty: T,
    target: T,
) -> Result<LossEval<T>> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let n = model.horizon();
    let count: usize = batch.iter().map(|s| s.len().saturating_sub(n + 1)).sum();
    if count == 0 {
        return Err(Error::InvalidArgument("batch has no predicted samples".into()));
    }
    let scale = T::one() / lit::<T>(count as f64);
    let parts: Vec<Result<(T, FfnnParams<T>)>> = batch
        .par_iter()
        .map(|s| squared_error_with_gradient(model, s, scale))
        .collect();
    let mut sum = T::zero();
    let mut gradient = model.params().zeros_like();
    for part in parts {
        let (s, g) = part?;
        sum += s;
        gradient.add_scaled(&g, T::one());
    }
    let mse = sum * scale;
    let (pen, margin, pen_grad) = contraction_penalty(model.params(), penalty, target);
    gradient.add_scaled(&pen_grad, T::one());
    Ok(LossEval {
        loss: mse + pen,
        mse,
        margin,
        gradient,
    })
}

/// Mean squared free-run error over a batch, without gradient.
pub fn batch_mse<T: Real>(model: &NnarxModel<T>, batch: &[Subsequence<T>]) -> Result<T> {
    let parts: Vec<Result<(T, usize)>> = batch.par_iter().map(|s| squared_error(model, s)).collect();
    let mut sum = T::zero();
    let mut count = 0;
    for part in parts {
        let (s, c) = part?;
        sum += s;
        count += c;
    }
    if count == 0 {
        return Err(Error::InvalidArgument("batch has no predicted samples".into()));
    }
    Ok(sum / lit::<T>(count as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnarx::Activation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sub(rng: &mut ChaCha8Rng, len: usize) -> Subsequence<f64> {
        Subsequence {
            inputs: (0..len).map(|_| DVector::from_element(1, rng.gen_range(-1.0..1.0))).collect(),
            outputs: (0..len).map(|_| DVector::from_element(1, rng.gen_range(-1.0..1.0))).collect(),
        }
    }

    fn model(rng: &mut ChaCha8Rng, widths: &[usize]) -> NnarxModel<f64> {
        let mut p = FfnnParams::random(6, 1, 1, widths, Activation::Tanh, rng).unwrap();
        let flat: Vec<f64> = p.to_flat().iter().map(|w| 3.0 * w + rng.gen_range(-0.1..0.1)).collect();
        p.set_flat(&flat).unwrap();
        NnarxModel::new(3, p).unwrap()
    }

    #[test]
    fn exact_model_has_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = model(&mut rng, &[3]);
        let mut sub = random_sub(&mut rng, 20);
        let pred = free_run(&m, &sub).unwrap();
        for (k, y) in pred.into_iter().enumerate() {
            sub.outputs[4 + k] = y;
        }
        let eval = simulation_loss(&m, &[sub], 0.0, 0.95).unwrap();
        assert!(eval.loss.abs() < 1e-28);
        assert!(eval.gradient.to_flat().iter().all(|g| g.abs() < 1e-14));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = model(&mut rng, &[3]);
        let batch = vec![random_sub(&mut rng, 20), random_sub(&mut rng, 20)];
        let eval = simulation_loss(&m, &batch, 0.1, 0.2).unwrap();
        let g = eval.gradient.to_flat();
        let base = m.params().to_flat();
        let h = 1e-6;
        let mut err = 0.0f64;
        let mut norm = 0.0f64;
        let mut probe = m.clone();
        for i in 0..base.len() {
            let mut v = base.clone();
            v[i] += h;
            probe.params_mut().set_flat(&v).unwrap();
            let lp = simulation_loss(&probe, &batch, 0.1, 0.2).unwrap().loss;
            v[i] -= 2.0 * h;
            probe.params_mut().set_flat(&v).unwrap();
            let lm = simulation_loss(&probe, &batch, 0.1, 0.2).unwrap().loss;
            let fd = (lp - lm) / (2.0 * h);
            err += (fd - g[i]).powi(2);
            norm += g[i].powi(2);
        }
        assert!((err / norm).sqrt() < 1e-4, "relative error {}", (err / norm).sqrt());
    }

    #[test]
    fn penalty_is_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = model(&mut rng, &[4]);
        let batch = vec![random_sub(&mut rng, 15)];
        let a = simulation_loss(&m, &batch, 0.0, 0.95).unwrap();
        let b = simulation_loss(&m, &batch, 0.3, 0.95).unwrap();
        let r = m.contraction_margin();
        let sp = (1.0 + (r - 0.95f64).exp()).ln();
        assert!((b.loss - a.loss - 0.3 * sp).abs() < 1e-12);
        assert_eq!(a.mse, batch_mse(&m, &batch).unwrap());
    }

    #[test]
    fn short_subsequence_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = model(&mut rng, &[2]);
        assert!(simulation_loss(&m, &[random_sub(&mut rng, 4)], 0.0, 0.95).is_err());
        assert!(simulation_loss(&m, &[random_sub(&mut rng, 5)], 0.0, 0.95).is_ok());
    }
}
