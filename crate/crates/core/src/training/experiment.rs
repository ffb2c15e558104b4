use serde::{Deserialize, Serialize};

use super::dataset::{extract_subsequences, Dataset, Subsequence};
use super::fit::fit_index;
use super::loss::{free_run, initial_state};
use super::mprs::{generate_mprs, MprsConfig};
use super::train::{train, EpochRecord, ModelConfig, TrainConfig};
use crate::data::IoSequence;
use crate::error::Result;
use crate::nnarx::{ModelBundle, Scaling};
use crate::plant::{DisturbanceProfile, WaterHeater};
use crate::scalar::{to_f64, Real};

/// Excitation experiments and window extraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub train_length: usize,
    pub validation_length: usize,
    pub test_length: usize,
    pub subsequence_length: usize,
    pub train_count: usize,
    pub validation_count: usize,
    pub mprs: MprsConfig,
    /// Standard deviation of additive output noise, K (0 disables).
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train_length: 2500,
            validation_length: 1000,
            test_length: 400,
            subsequence_length: 400,
            train_count: 120,
            validation_count: 30,
            mprs: MprsConfig::default(),
            noise_std: 0.0,
            seed: 0,
        }
    }
}

/// One record per partition, each from its own experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Records {
    pub train: IoSequence,
    pub validation: IoSequence,
    pub test: IoSequence,
}

pub fn generate_records(plant: &WaterHeater, cfg: &ExperimentConfig) -> Result<Records> {
    let levels = cfg.mprs.resolved_levels(&plant.input_box)?;
    let profile = DisturbanceProfile::constant(plant.params.nominal_disturbance());
    let x0 = plant.default_initial_state()?;
    let run = |len: usize, k: u64| -> Result<IoSequence> {
        let seed = cfg.seed.wrapping_mul(3).wrapping_add(k);
        let u = generate_mprs(&levels, (cfg.mprs.dwell_min, cfg.mprs.dwell_max), len, &plant.input_box, seed)?;
        let noise = (cfg.noise_std > 0.0).then_some((cfg.noise_std, seed ^ 0x5eed));
        plant.open_loop_experiment(&u, &profile, x0, noise)?.to_io_sequence(plant.sample_time)
    };
    Ok(Records {
        train: run(cfg.train_length, 0)?,
        validation: run(cfg.validation_length, 1)?,
        test: run(cfg.test_length, 2)?,
    })
}

pub fn build_dataset(records: &Records, cfg: &ExperimentConfig) -> Result<Dataset> {
    let len = cfg.subsequence_length;
    Ok(Dataset {
        train: extract_subsequences(&records.train, len.min(records.train.len()), cfg.train_count, cfg.seed ^ 0x11)?,
        validation: extract_subsequences(
            &records.validation,
            len.min(records.validation.len()),
            cfg.validation_count,
            cfg.seed ^ 0x22,
        )?,
        test: vec![records.test.window(0, len.min(records.test.len()))?],
    })
}

/// Free-run prediction of a record in physical units, aligned with its
/// predicted span `y_{N+1}..`.
pub fn simulate_record<T: Real>(bundle: &ModelBundle<T>, seq: &IoSequence) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let sub = Subsequence::<T>::normalized(seq, &bundle.scaling);
    initial_state(&bundle.model, &sub)?;
    let pred = free_run(&bundle.model, &sub)?;
    let start = bundle.model.horizon() + 1;
    Ok((
        pred.iter().map(|y| bundle.scaling.denormalize_output(y)).collect(),
        seq.outputs[start..].to_vec(),
    ))
}

/// FIT of the model's free-run simulation on a record.
pub fn record_fit<T: Real>(bundle: &ModelBundle<T>, seq: &IoSequence) -> Result<f64> {
    let (model, plant) = simulate_record(bundle, seq)?;
    fit_index(&model, &plant)
}

/// Summary written next to a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub attempts: usize,
    pub penalty: f64,
    pub best_validation_mse: f64,
    pub test_fit: f64,
    pub contraction_margin: f64,
    pub history: Vec<EpochRecord>,
}

/// Normalizes the dataset, trains, and scores the test window.
pub fn identify<T: Real>(
    dataset: &Dataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<(ModelBundle<T>, TrainReport)> {
    let scaling: Scaling = dataset.scaling()?;
    let norm = |s: &[IoSequence]| s.iter().map(|q| Subsequence::<T>::normalized(q, &scaling)).collect::<Vec<_>>();
    let train_set = norm(&dataset.train);
    let val_set = norm(&dataset.validation);
    let inputs = scaling.inputs();
    let init = model_cfg.init::<T>(inputs, train_cfg.seed)?;
    let out = train(&init, &train_set, &val_set, train_cfg)?;
    let bundle = ModelBundle {
        model: out.model,
        scaling,
    };
    let test_fit = record_fit(&bundle, &dataset.test[0])?;
    let best = out.history[out.best_epoch - 1];
    let report = TrainReport {
        seed: train_cfg.seed,
        model: model_cfg.clone(),
        train: train_cfg.clone(),
        epochs_run: out.history.len(),
        best_epoch: out.best_epoch,
        attempts: out.attempts,
        penalty: out.penalty,
        best_validation_mse: best.validation_mse,
        test_fit,
        contraction_margin: to_f64(bundle.model.contraction_margin()),
        history: out.history,
    };
    Ok((bundle, report))
}
