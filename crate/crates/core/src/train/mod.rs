//! Optimizers, the training loop, evaluation, checkpoints and reports.

pub mod checkpoint;
mod data;
mod fit;
mod optim;
pub mod report;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_into, save_checkpoint, save_checkpoint_with,
};
pub use data::{mean_rating, ColdStartPolicy, DocumentBank, DocumentSource};
pub use fit::{
    evaluate, fit, global_mean_mse, BestSnapshot, EpochRecord, EvalOptions, Evaluation, FitConfig,
    FitOutcome,
};
pub use optim::{Optimizer, OptimizerConfig};
pub use report::{TableRow, TrainReport};
