//! Training loop, optimizer, schedule and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod schedule;
pub mod trainer;

pub use adam::{clip_grad_norm, global_norm, Adam};
pub use checkpoint::CheckpointMeta;
pub use config::{Ablation, AdamConfig, DataPaths, MappingKind, ModelDims, PromptConfig, TrainingConfig};
pub use schedule::lr_schedule;
pub use trainer::{epoch_order, sample_gradient, train_samples, CaptionModel, Sample, StepMetrics, TrainRun, Trainer};
