mod config;
mod optim;
mod trainer;

pub use config::{FineTuneData, TrainingConfig};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind, Schedule};
pub use trainer::{finetune, pretrain, Stage, TrainSets, Trainer, Validation};

#[cfg(test)]
mod tests;
