//! Deterministic 2.5-D navigation world: rectangle floor plan, three-action
//! kinematics, a column raycaster emitting semantic frames, and rewards.

mod env;
mod geometry;
mod map;
mod render;

pub use env::{
    reset, sample_free_pose, step, subgoal_polar, Action, Episode, EpisodeStep, RewardConfig, RobotPose, SimConfig,
    StepEvent, StepOutcome, SubGoalPolar, MAX_REJECTIONS,
};
pub use geometry::{point_segment_distance, wrap_angle, Point, Rect};
pub use map::WorldMap;
pub use render::{render, Camera, Class, SemanticFrame};
