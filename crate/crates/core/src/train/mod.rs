//! Desk-scale training and evaluation on the synthetic corpus.

mod adam;
mod config;
mod log;
mod report;
mod run;

pub use adam::{Adam, AdamConfig};
pub use config::{CorpusPlan, LossKind, RunConfig};
pub use log::{Bucket, Checkpoint, EpochRecord, EvalTable, RunLog};
pub use report::{check_pair, collect_runs, comparison_table, PairCheck, RunSummary, EVAL_FILE};
pub use run::{
    batch_loss, bucketize, eval_threads, evaluate, evaluate_model, prepare, score, test_split, train, train_split,
    valid_split, Prepared, TrainOutcome, CHECKPOINT_FILE, CONFIG_FILE, LOG_FILE, PARITY_TOLERANCE, SNR_BUCKETS, THREADS_ENV, TIMING_FILE,
};

#[cfg(test)]
mod tests;
