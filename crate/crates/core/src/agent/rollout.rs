use rand::Rng;

use super::network::{DqnNetwork, QValues};
use super::schedule::select_action;
use crate::error::Result;
use crate::sim::{Episode, SemanticFrame, SubGoalPolar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutSummary {
    pub steps: usize,
    pub total_return: f64,
    pub success: bool,
    pub crashed: bool,
    pub final_distance: f64,
}

/// Runs `episode` to completion under an epsilon-greedy policy of `net`,
/// calling `visit` on every state before acting.
pub fn rollout<R: Rng + ?Sized>(
    episode: &mut Episode<'_>,
    net: &DqnNetwork<f32>,
    d_max: f64,
    epsilon: f64,
    rng: &mut R,
    mut visit: impl FnMut(&SemanticFrame, SubGoalPolar, &QValues),
) -> Result<RolloutSummary> {
    let mut total_return = 0.0;
    let mut success = false;
    while !episode.is_finished() {
        let (frame, polar) = episode.observe()?;
        let (q, _) = net.forward_q(&frame, polar, d_max)?;
        visit(&frame, polar, &q);
        let step = episode.act(select_action(&q, epsilon, rng))?;
        total_return += step.reward;
        success |= step.goal_reached;
    }
    Ok(RolloutSummary {
        steps: episode.steps(),
        total_return,
        success,
        crashed: episode.crashed(),
        final_distance: episode.distance_to_goal(),
    })
}
