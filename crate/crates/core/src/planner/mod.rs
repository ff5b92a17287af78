//! RRT* global planner whose resampled path nodes become sub-goals.

mod rrt_star;

pub use rrt_star::{extract_subgoals, plan, PlanResult, PlanTree, PlannerConfig, RrtStar};
