//! Identification of NNARX models from plant experiments.

mod dataset;
mod experiment;
mod fit;
mod loss;
mod mprs;
mod train;

pub use dataset::{extract_subsequences, Dataset, Subsequence};
pub use experiment::{
    build_dataset, generate_records, identify, record_fit, simulate_record, ExperimentConfig, Records, TrainReport,
};
pub use fit::fit_index;
pub use loss::{
    batch_mse, contraction_penalty, free_run, initial_state, simulation_loss, squared_error,
    squared_error_with_gradient, LossEval,
};
pub use mprs::{evenly_spaced_levels, generate_mprs, MprsConfig};
pub use train::{train, Adam, EpochRecord, ModelConfig, TrainConfig, TrainOutcome};
