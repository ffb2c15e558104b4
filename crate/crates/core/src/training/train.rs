use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Subsequence;
use super::loss::{batch_mse, simulation_loss};
use crate::error::{Error, Result};
use crate::nnarx::{Activation, FfnnParams, NnarxModel};
use crate::scalar::{lit, to_f64, Real};

/// Network architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub horizon: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            horizon: 5,
            hidden: vec![30],
            activation: Activation::Tanh,
        }
    }
}

impl ModelConfig {
    pub fn init<T: Real>(&self, inputs: usize, seed: u64) -> Result<NnarxModel<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state_dim = self.horizon * 2 * inputs;
        let params = FfnnParams::random(state_dim, inputs, inputs, &self.hidden, self.activation, &mut rng)?;
        NnarxModel::new(self.horizon, params)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub penalty: f64,
    pub target_margin: f64,
    /// Penalty multiplier applied when a run ends without a contractive model.
    pub penalty_growth: f64,
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            max_epochs: 1500,
            patience: 100,
            batch_size: 10,
            penalty: 0.1,
            target_margin: 0.95,
            penalty_growth: 10.0,
            max_attempts: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || self.patience == 0 || self.batch_size == 0 || self.max_attempts == 0 {
            return Err(Error::InvalidArgument(
                "need learning_rate >= 0, patience >= 1, batch_size >= 1, max_attempts >= 1".into(),
            ));
        }
        if !(self.penalty >= 0.0) || !(self.penalty_growth >= 1.0) {
            return Err(Error::InvalidArgument("need penalty >= 0 and penalty_growth >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_mse: f64,
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T: Real> {
    pub model: NnarxModel<T>,
    /// History of the accepted attempt.
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub attempts: usize,
    pub penalty: f64,
}

/// First-order adaptive moment optimizer on a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam<T: Real> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(len: usize, lr: T) -> Self {
        Self {
            lr,
            beta1: lit(0.9),
            beta2: lit(0.999),
            eps: lit(1e-8),
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        self.t += 1;
        let c1 = T::one() - self.beta1.powi(self.t);
        let c2 = T::one() - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (T::one() - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (T::one() - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

struct Attempt<T: Real> {
    best: Option<(NnarxModel<T>, usize)>,
    history: Vec<EpochRecord>,
    last_margin: f64,
}

fn run_attempt<T: Real>(
    init: &NnarxModel<T>,
    train: &[Subsequence<T>],
    validation: &[Subsequence<T>],
    cfg: &TrainConfig,
    penalty: f64,
    seed: u64,
) -> Result<Attempt<T>> {
    let mut model = init.clone();
    let mut flat = model.params().to_flat();
    let mut adam = Adam::new(flat.len(), lit::<T>(cfg.learning_rate));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(NnarxModel<T>, usize)> = None;
    let mut best_val = f64::INFINITY;
    let mut stale = 0;
    let mut last_margin = to_f64(model.contraction_margin());
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Subsequence<T>> = chunk.iter().map(|&i| train[i].clone()).collect();
            let eval = simulation_loss(&model, &batch, lit(penalty), lit(cfg.target_margin))?;
            let loss = to_f64(eval.loss);
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    reason: format!("training loss is {loss}"),
                });
            }
            loss_sum += loss;
            batches += 1;
            adam.step(&mut flat, &eval.gradient.to_flat());
            model.params_mut().set_flat(&flat)?;
        }
        let validation_mse = to_f64(batch_mse(&model, validation)?);
        if !validation_mse.is_finite() {
            return Err(Error::Diverged {
                epoch,
                reason: format!("validation loss is {validation_mse}"),
            });
        }
        let margin = to_f64(model.contraction_margin());
        last_margin = margin;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            validation_mse,
            margin,
        });
        log::debug!("epoch {epoch}: train {:.3e}, validation {validation_mse:.3e}, margin {margin:.4}", loss_sum / batches as f64);
        if margin < 1.0 && validation_mse < best_val {
            best_val = validation_mse;
            best = Some((model.clone(), epoch));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(Attempt {
        best,
        history,
        last_margin,
    })
}

/// Trains by simulation-error minimization with the contraction penalty.
///
/// Returns the snapshot with the lowest validation error among epochs whose
/// contraction margin is below 1. When no such epoch exists the run is
/// repeated from the same initial weights with a larger penalty.
pub fn train<T: Real>(
    init: &NnarxModel<T>,
    train: &[Subsequence<T>],
    validation: &[Subsequence<T>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::InvalidArgument("training and validation partitions must be non-empty".into()));
    }
    let mut penalty = cfg.penalty;
    let mut last_margin = f64::NAN;
    for attempt in 1..=cfg.max_attempts {
        let run = run_attempt(init, train, validation, cfg, penalty, cfg.seed.wrapping_add(attempt as u64))?;
        if let Some((model, best_epoch)) = run.best {
            log::info!(
                "training attempt {attempt}: best epoch {best_epoch} of {}, margin {:.4}",
                run.history.len(),
                to_f64(model.contraction_margin())
            );
            return Ok(TrainOutcome {
                model,
                history: run.history,
                best_epoch,
                attempts: attempt,
                penalty,
            });
        }
        last_margin = run.last_margin;
        log::warn!("training attempt {attempt} never reached margin < 1 (last {last_margin:.4}); penalty {penalty} -> {}", penalty * cfg.penalty_growth);
        penalty *= cfg.penalty_growth;
    }
    Err(Error::NotContractive {
        margin: last_margin,
        attempts: cfg.max_attempts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnarx::NarxDynamics;
    use nalgebra::DVector;
    use rand::Rng;

    fn linear_data(rng: &mut ChaCha8Rng, len: usize) -> Subsequence<f64> {
        // y+ = 0.6 y - 0.1 y_prev + 0.5 u
        let mut y = vec![0.0, 0.0];
        let u: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for k in 1..len - 1 {
            let next = 0.6 * y[k] - 0.1 * y[k - 1] + 0.5 * u[k];
            y.push(next);
        }
        Subsequence {
            inputs: u.iter().map(|v| DVector::from_element(1, *v)).collect(),
            outputs: y.iter().map(|v| DVector::from_element(1, *v)).collect(),
        }
    }

    #[test]
    fn frozen_learning_rate_stops_after_patience() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = vec![linear_data(&mut rng, 30)];
        let init = ModelConfig {
            horizon: 2,
            hidden: vec![3],
            activation: Activation::Tanh,
        }
        .init::<f64>(1, 2)
        .unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            patience: 1,
            max_epochs: 50,
            ..TrainConfig::default()
        };
        let out = train(&init, &data, &data, &cfg).unwrap();
        assert_eq!(out.history.len(), 2);
        assert_eq!(out.best_epoch, 1);
        assert_eq!(out.model, init);
    }

    #[test]
    fn linear_data_is_learned_by_linear_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let train_set: Vec<_> = (0..40).map(|_| linear_data(&mut rng, 60)).collect();
        let val: Vec<_> = (0..2).map(|_| linear_data(&mut rng, 60)).collect();
        let init = ModelConfig {
            horizon: 2,
            hidden: vec![4],
            activation: Activation::Identity,
        }
        .init::<f64>(1, 5)
        .unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 500,
            patience: 500,
            batch_size: 1,
            penalty: 0.0,
            ..TrainConfig::default()
        };
        let out = train(&init, &train_set, &val, &cfg).unwrap();
        let best = out.history.iter().filter(|r| r.margin < 1.0).map(|r| r.validation_mse).fold(f64::INFINITY, f64::min);
        let val_mse = batch_mse(&out.model, &val).unwrap();
        assert_eq!(val_mse, best);
        assert!(val_mse < 1e-6, "validation mse {val_mse}");
        assert!(out.model.contraction_margin() < 1.0);
        let _ = out.model.state_dim();
    }
}
