//! Experiment driver: dataset production, splits, training, baselines,
//! per-case evaluation, sweeps and summary tables.

mod checkpoint;
mod dataset;
mod eval;
mod mlp;
mod stats;
mod train;

pub use checkpoint::{Activations, Checkpoint, CheckpointConfig, ModelFlags, TrainingMeta, FORMAT_VERSION};
pub use dataset::{
    generate_dataset, generate_instances, label_instances, read_jsonl, split_dataset, split_indices, write_jsonl,
    DatasetSpec, Split,
};
pub use eval::{
    batch_size_sweep, evaluate_scored, references, score_oracle, score_random, score_with_mlp, score_with_model,
    select_alpha, summarize, threshold_sweep, write_case_csv, write_summary_csv, BatchPoint, CaseEval, ScoredCase,
    SummaryRow, SweepPoint,
};
pub use mlp::{MlpModel, MlpVariant};
pub use stats::{mean_std, spearman};
pub use train::{best_threshold_accuracy, prepare_cases, train_model, train_on_cases, validation_accuracy, EpochLog, TrainOutcome, TrainSettings, ALPHA_GRID};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json line {line}: {msg}")]
    Json { line: usize, msg: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Talf(#[from] crate::talf::TalfError),
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
    #[error(transparent)]
    Pipeline(#[from] crate::pipeline::PipelineError),
    #[error(transparent)]
    Netgen(#[from] crate::netgen::NetgenError),
    #[error("too few cases ({0}) for non-empty train/val/test shards")]
    TooFewCases(usize),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("shard mixes node counts {0} and {1}")]
    MixedSizes(usize, usize),
    #[error("training diverged at epoch {epoch}: {msg}")]
    Diverged { epoch: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, HarnessError>;
