//! Optimisation, training and evaluation loops, checkpoints, ablation sweeps
//! and the spectral-input probe.

mod ablation;
mod checkpoint;
mod config;
mod eval;
mod optim;
mod probe;
mod train;

pub use ablation::{ablate, ablation_variants, AblationAxis, AblationRun, AblationTable, AblationVariant};
pub use checkpoint::{Checkpoint, MAGIC, VERSION};
pub use config::TrainConfig;
pub use eval::{evaluate, evaluate_model, predict, predict_batch, EvalConfig, EvalReport};
pub use optim::{poly_lr, sgd_step};
pub use probe::{prop1_probe, ProbeConfig, ProbeInput, ProbeReport, ProbeRow};
pub use train::{
    clip_global_norm, fit_sample, make_batch, train, train_step, write_log, EpochRecord,
    StepRecord, TrainOutputs, TrainRun, LOG_HEADER,
};
