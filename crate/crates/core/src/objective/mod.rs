//! Training objective, optimizer, trainer and checkpoints.

mod adamax;
mod checkpoint;
mod elbo;
mod schedule;
mod student_t;
mod train;

pub use adamax::{adamax_step, Adamax};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, RngState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use elbo::{cloud_objective, elbo, elbo_with_noise, sample_noise, ElboBreakdown, ElboObjective, ModelGrads, Trainable};
pub use schedule::kl_warmup_beta;
pub use student_t::{student_t_log_normalizer, student_t_logpdf};
pub use train::{train, train_with, EpochRecord, KlScaling, Phase, TrainConfig, TrainError, TrainOutcome};
