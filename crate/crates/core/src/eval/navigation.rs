use rand::seq::index::sample;

use super::curves::EvalState;
use crate::agent::{episode_planner, plan_subgoals, rollout, DqnNetwork, TaskSampler};
use crate::error::{Error, Result};
use crate::planner::PlannerConfig;
use crate::rng;
use crate::sim::{Episode, SimConfig, WorldMap};

/// Navigation metrics in the order successes, mean final distance,
/// collisions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavStats {
    pub trials: usize,
    pub successes: usize,
    pub mean_final_distance: f64,
    pub collisions: usize,
    /// Trials dropped because the planner found no path.
    pub skipped: usize,
}

impl NavStats {
    pub fn success_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }
}

/// Shared environment settings for evaluation runs.
pub struct EvalContext<'a> {
    pub map: &'a WorldMap,
    pub sim: &'a SimConfig,
    pub planner: &'a PlannerConfig,
    pub tasks: &'a dyn TaskSampler,
    pub d_max: f64,
    pub subgoal_spacing: f64,
}

/// Greedy trials, each with its own planned sub-goals; success iff the
/// robot ends within the goal radius.
pub fn evaluate_navigation(ctx: &EvalContext<'_>, trunk: &DqnNetwork<f32>, trials: usize, seed: u64) -> Result<NavStats> {
    let mut stats = NavStats {
        trials: 0,
        successes: 0,
        mean_final_distance: 0.0,
        collisions: 0,
        skipped: 0,
    };
    let mut distance_sum = 0.0;
    let mut act_rng = rng::stream(seed, "eval.nav");
    for trial in 0..trials as u64 {
        let (start, goal) = ctx.tasks.sample(ctx.map, ctx.sim, &mut rng::substream(seed, "sim.eval", trial))?;
        let planner_cfg = episode_planner(ctx.planner, seed, "planner.eval", trial);
        let Some(subgoals) = plan_subgoals(ctx.map, start.position(), goal, &planner_cfg, ctx.subgoal_spacing)? else {
            log::warn!("trial {trial}: planner found no path; skipped");
            stats.skipped += 1;
            continue;
        };
        let mut ep = Episode::new(ctx.map, ctx.sim, start, subgoals)?;
        let summary = rollout(&mut ep, trunk, ctx.d_max, 0.0, &mut act_rng, |_, _, _| {})?;
        stats.trials += 1;
        stats.successes += usize::from(summary.final_distance < ctx.sim.rewards.goal_radius);
        stats.collisions += usize::from(summary.crashed);
        distance_sum += summary.final_distance;
    }
    if stats.trials > 0 {
        stats.mean_final_distance = distance_sum / stats.trials as f64;
    }
    Ok(stats)
}

/// `count` states drawn without replacement from greedy rollouts.
pub fn sample_eval_states(ctx: &EvalContext<'_>, trunk: &DqnNetwork<f32>, count: usize, seed: u64) -> Result<Vec<EvalState>> {
    let mut pool = Vec::new();
    let mut act_rng = rng::stream(seed, "eval.states");
    let target = count.saturating_mul(4);
    let mut episode = 0u64;
    while pool.len() < target && episode < 10 * count as u64 + 10 {
        let (start, goal) = ctx.tasks.sample(ctx.map, ctx.sim, &mut rng::substream(seed, "sim.states", episode))?;
        let planner_cfg = episode_planner(ctx.planner, seed, "planner.states", episode);
        episode += 1;
        let Some(subgoals) = plan_subgoals(ctx.map, start.position(), goal, &planner_cfg, ctx.subgoal_spacing)? else {
            continue;
        };
        let mut ep = Episode::new(ctx.map, ctx.sim, start, subgoals)?;
        rollout(&mut ep, trunk, ctx.d_max, 0.0, &mut act_rng, |frame, subgoal, _| {
            pool.push(EvalState {
                frame: frame.clone(),
                subgoal,
            })
        })?;
    }
    if pool.len() < count {
        return Err(Error::InvalidArgument(format!(
            "only {} states collected, {count} requested",
            pool.len()
        )));
    }
    let mut picked = sample(&mut rng::stream(seed, "eval.pick"), pool.len(), count).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| pool[i].clone()).collect())
}
