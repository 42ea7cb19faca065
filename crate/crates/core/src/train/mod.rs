//! Gradient checks, synthetic multi-task regression data, optimizers and
//! the training loop.

mod data;
mod fit;
mod gradcheck;
mod optim;

pub use data::{make_multitask_data, SyntheticTaskSet, TaskData, TaskDataConfig};
pub use fit::{evaluate, train, EvalReport, HistoryRow, TrainConfig, TrainReport};
pub use gradcheck::{
    check_gradients, finite_diff_check, randomize_trainable, block_relative_error, BlockCheck, GradCheckReport,
    DEFAULT_FD_STEP, GRADCHECK_THRESHOLD,
};
pub use optim::{Optimizer, OptimizerKind};
