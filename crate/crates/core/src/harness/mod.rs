//! Experiment orchestration: teacher and student training, teacher caches, evaluation,
//! cold-start runs, embedding export, sweeps and reports. Runs at [`Real`](crate::Real)
//! precision.

mod config;
mod eval;
mod report;
mod sweep;
mod train;

pub use config::{LossKind, Mode, NegativePool, RunConfig};
pub use eval::{
    coldstart_eval, evaluate_model, evaluate_sets, export_embeddings, model_hash, score_eval_sets, ColdStartOutcome,
    ColdStartSettings,
};
pub use report::{EpochRecord, ExperimentReport};
pub use sweep::{run_sweep, SweepAxis, SweepResult};
pub use train::{
    build_similarity_index, build_teacher_cache, init_model, read_teacher_means, train_student, train_teacher,
    write_teacher_means, TrainOutcome, TEACHER_MEANS_VERSION,
};
