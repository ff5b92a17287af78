//! Stage-1 learner: the value network, replay memory, exploration schedule
//! and the training loop.

mod network;
mod replay;
mod rollout;
mod schedule;
mod trainer;

pub use network::{
    encode_batch, encode_subgoals, DqnNetwork, QValues, TrunkActivations, EMBED_SIDE, FEATURE_CHANNELS,
    FEATURE_SIDE, FRAME_SIDE,
};
pub use replay::{ReplayBuffer, Transition};
pub use rollout::{rollout, RolloutSummary};
pub use schedule::{select_action, EpsilonSchedule};
pub use trainer::{
    episode_planner, plan_subgoals, run_training, run_training_observed, DqnTrainer, EpisodeLog, FixedTask, RandomTasks, TaskSampler,
    TrainConfig, TrainingOutcome, ValidationLog,
};
