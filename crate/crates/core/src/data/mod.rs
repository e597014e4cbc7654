//! Offline datasets: generation, segment/goal sampling and file IO.

pub mod dataset;
pub mod gen;
pub mod io;
pub mod sampler;

pub use dataset::{Dataset, DatasetBuilder, DatasetMeta, EnvKind, TrajectoryView};
pub use gen::{gen_lock_1step, gen_lock_nstep, gen_maze_play, random_free_point, BfsTables};
pub use io::{load, read_dataset, save, write_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use sampler::{
    sample_anchor, sample_batch, sample_lock_batch, Batch, GoalKind, GoalSampleConfig, GoalSource,
    GoalTest, LockBatch, LockIndex, RewardKind,
};
