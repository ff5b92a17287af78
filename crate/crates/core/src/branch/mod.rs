//! Stage-2 explainer: an attention branch distilled from the frozen DQN's
//! greedy actions.

mod distill;
mod network;

pub use distill::{
    agreement_on_states, finetune, DistillConfig, DistillDataset, DistillOutcome, DistillRecord, EpochLog,
};
pub use network::{
    attention_map, branch_loss, channel_mean_map, explain_batch, one_hot_from_q, AttentionBranch, BranchOutput,
    Explanation,
};
