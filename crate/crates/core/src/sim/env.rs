use std::f64::consts::PI;

use rand::Rng;

use super::geometry::{wrap_angle, Point, Rect};
use super::map::WorldMap;
use super::render::{render, Camera, SemanticFrame};
use crate::error::{Error, Result};

/// Consecutive rejections after which a start region is declared infeasible.
pub const MAX_REJECTIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotPose {
    pub x: f64,
    pub y: f64,
    /// Radians in `(-pi, pi]`, counter-clockwise from +x.
    pub heading: f64,
}

impl RobotPose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_angle(heading),
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Discrete action; the index order is the Q-value order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Forward = 0,
    TurnLeft = 1,
    TurnRight = 2,
}

impl Action {
    pub const COUNT: usize = 3;
    pub const ALL: [Action; 3] = [Action::Forward, Action::TurnLeft, Action::TurnRight];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Forward => "forward",
            Action::TurnLeft => "turn_left",
            Action::TurnRight => "turn_right",
        }
    }
}

impl TryFrom<usize> for Action {
    type Error = Error;

    fn try_from(code: usize) -> Result<Self> {
        Action::ALL
            .get(code)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("invalid action code {code}")))
    }
}

/// Sub-goal relative to the robot: angle positive to the left, distance in m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubGoalPolar {
    pub angle: f64,
    pub distance: f64,
}

pub fn subgoal_polar(pose: &RobotPose, subgoal: Point) -> SubGoalPolar {
    let (dx, dy) = (subgoal.x - pose.x, subgoal.y - pose.y);
    SubGoalPolar {
        angle: wrap_angle(dy.atan2(dx) - pose.heading),
        distance: dx.hypot(dy),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig {
    pub goal: f64,
    pub crash: f64,
    /// Scale of the forward-progress reward.
    pub progress_scale: f64,
    /// Distance (m) under which a sub-goal counts as reached.
    pub goal_radius: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            goal: 30.0,
            crash: -5.0,
            progress_scale: 1.0,
            goal_radius: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub camera: Camera,
    /// Forward translation per step, m.
    pub step_length: f64,
    /// Rotation per turn action, radians.
    pub turn_angle: f64,
    pub robot_radius: f64,
    pub rewards: RewardConfig,
    /// Step cap per sub-goal leg (truncation, not a crash).
    pub max_leg_steps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            camera: Camera {
                width: 64,
                height: 64,
                fov: PI / 2.0,
                object_height: 1.0,
            },
            step_length: 0.2,
            turn_angle: 15f64.to_radians(),
            robot_radius: 0.25,
            rewards: RewardConfig::default(),
            max_leg_steps: 300,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEvent {
    Crash,
    SubgoalReached,
    Moved,
    Turned,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub pose: RobotPose,
    pub reward: f64,
    /// True on a crash.
    pub terminal: bool,
    pub event: StepEvent,
}

/// Applies one action. Pure: the outcome depends only on the arguments.
///
/// Precedence: crash, then sub-goal reached, then forward progress. On a
/// crash the robot stays at its previous pose.
pub fn step(map: &WorldMap, cfg: &SimConfig, pose: &RobotPose, action: Action, subgoal: Point) -> StepOutcome {
    let before = pose.position().distance(subgoal);
    let next = match action {
        Action::Forward => {
            let (s, c) = pose.heading.sin_cos();
            RobotPose {
                x: pose.x + cfg.step_length * c,
                y: pose.y + cfg.step_length * s,
                heading: pose.heading,
            }
        }
        Action::TurnLeft => RobotPose::new(pose.x, pose.y, pose.heading + cfg.turn_angle),
        Action::TurnRight => RobotPose::new(pose.x, pose.y, pose.heading - cfg.turn_angle),
    };
    if action == Action::Forward && !map.segment_is_free(pose.position(), next.position(), cfg.robot_radius) {
        return StepOutcome {
            pose: *pose,
            reward: cfg.rewards.crash,
            terminal: true,
            event: StepEvent::Crash,
        };
    }
    let after = next.position().distance(subgoal);
    let (reward, event) = if after < cfg.rewards.goal_radius {
        (cfg.rewards.goal, StepEvent::SubgoalReached)
    } else if action == Action::Forward {
        ((cfg.rewards.progress_scale * (before - after)).clamp(-1.0, 1.0), StepEvent::Moved)
    } else {
        (0.0, StepEvent::Turned)
    };
    StepOutcome {
        pose: next,
        reward,
        terminal: false,
        event,
    }
}

/// Rejection-samples a collision-free pose in `region` with uniform heading.
pub fn sample_free_pose<R: Rng + ?Sized>(map: &WorldMap, cfg: &SimConfig, region: &Rect, rng: &mut R) -> Result<RobotPose> {
    for _ in 0..MAX_REJECTIONS {
        let x = rng.random_range(region.x0..=region.x1);
        let y = rng.random_range(region.y0..=region.y1);
        let heading = rng.random_range(-PI..PI);
        let p = Point::new(x, y);
        if map.is_free(p, cfg.robot_radius) {
            return Ok(RobotPose::new(x, y, heading));
        }
    }
    Err(Error::InfeasibleRegion(MAX_REJECTIONS))
}

/// Start of an episode: a sampled start pose toward a goal.
pub fn reset<R: Rng + ?Sized>(
    map: &WorldMap,
    cfg: &SimConfig,
    rng: &mut R,
    start_region: &Rect,
    goal: Point,
) -> Result<(RobotPose, Point)> {
    Ok((sample_free_pose(map, cfg, start_region, rng)?, goal))
}

/// Result of one step inside an [`Episode`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStep {
    pub reward: f64,
    /// Bootstrapping stops here (crash or final goal).
    pub terminal: bool,
    /// The episode is over (terminal or truncated).
    pub finished: bool,
    pub event: StepEvent,
    pub goal_reached: bool,
}

/// A navigation episode through an ordered chain of sub-goals.
#[derive(Debug, Clone)]
pub struct Episode<'a> {
    map: &'a WorldMap,
    cfg: &'a SimConfig,
    pose: RobotPose,
    subgoals: Vec<Point>,
    current: usize,
    leg_steps: usize,
    steps: usize,
    finished: bool,
    crashed: bool,
}

impl<'a> Episode<'a> {
    pub fn new(map: &'a WorldMap, cfg: &'a SimConfig, pose: RobotPose, subgoals: Vec<Point>) -> Result<Self> {
        if subgoals.is_empty() {
            return Err(Error::InvalidArgument("episode needs at least one sub-goal".into()));
        }
        if !map.is_free(pose.position(), cfg.robot_radius) {
            return Err(Error::InvalidPose(format!("start ({}, {}) is in collision", pose.x, pose.y)));
        }
        Ok(Self {
            map,
            cfg,
            pose,
            subgoals,
            current: 0,
            leg_steps: 0,
            steps: 0,
            finished: false,
            crashed: false,
        })
    }

    pub fn pose(&self) -> &RobotPose {
        &self.pose
    }

    pub fn goal(&self) -> Point {
        *self.subgoals.last().expect("non-empty")
    }

    pub fn current_subgoal(&self) -> Point {
        self.subgoals[self.current.min(self.subgoals.len() - 1)]
    }

    pub fn subgoal_index(&self) -> usize {
        self.current
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn crashed(&self) -> bool {
        self.crashed
    }

    pub fn distance_to_goal(&self) -> f64 {
        self.pose.position().distance(self.goal())
    }

    pub fn polar(&self) -> SubGoalPolar {
        subgoal_polar(&self.pose, self.current_subgoal())
    }

    pub fn observe(&self) -> Result<(SemanticFrame, SubGoalPolar)> {
        Ok((render(&self.pose, self.map, &self.cfg.camera)?, self.polar()))
    }

    pub fn act(&mut self, action: Action) -> Result<EpisodeStep> {
        if self.finished {
            return Err(Error::InvalidArgument("episode already finished".into()));
        }
        let out = step(self.map, self.cfg, &self.pose, action, self.current_subgoal());
        self.pose = out.pose;
        self.steps += 1;
        self.leg_steps += 1;
        let mut result = EpisodeStep {
            reward: out.reward,
            terminal: out.terminal,
            finished: out.terminal,
            event: out.event,
            goal_reached: false,
        };
        match out.event {
            StepEvent::Crash => self.crashed = true,
            StepEvent::SubgoalReached => {
                self.current += 1;
                self.leg_steps = 0;
                if self.current == self.subgoals.len() {
                    result.terminal = true;
                    result.finished = true;
                    result.goal_reached = true;
                }
            }
            _ => {}
        }
        if !result.finished && self.leg_steps >= self.cfg.max_leg_steps {
            result.finished = true;
        }
        self.finished = result.finished;
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn open_map() -> WorldMap {
        WorldMap::new(Rect::new(0.0, 0.0, 8.0, 8.0), vec![Rect::new(5.0, 3.0, 6.0, 5.0)]).unwrap()
    }

    #[test]
    fn polar_conventions() {
        let pose = RobotPose::new(0.0, 0.0, 0.0);
        let p = subgoal_polar(&pose, Point::new(1.0, 0.0));
        assert_eq!((p.angle, p.distance), (0.0, 1.0));
        let p = subgoal_polar(&pose, Point::new(0.0, 1.0));
        assert!((p.angle - PI / 2.0).abs() < 1e-15 && (p.distance - 1.0).abs() < 1e-15);
        let p = subgoal_polar(&pose, Point::new(-1.0, 0.0));
        assert_eq!(p.angle, PI);
    }

    #[test]
    fn reaching_the_subgoal_pays_goal_reward() {
        let map = open_map();
        let cfg = SimConfig::default();
        let out = step(&map, &cfg, &RobotPose::new(1.0, 1.0, 0.0), Action::Forward, Point::new(1.6, 1.0));
        assert_eq!(out.event, StepEvent::SubgoalReached);
        assert_eq!(out.reward, 30.0);
        assert!(!out.terminal);
    }

    #[test]
    fn driving_into_furniture_crashes() {
        let map = open_map();
        let cfg = SimConfig::default();
        let pose = RobotPose::new(4.7, 4.0, 0.0);
        let out = step(&map, &cfg, &pose, Action::Forward, Point::new(7.0, 7.0));
        assert_eq!(out.event, StepEvent::Crash);
        assert_eq!(out.reward, -5.0);
        assert!(out.terminal);
        assert_eq!(out.pose, pose);
    }

    #[test]
    fn crash_takes_precedence_over_subgoal() {
        let map = open_map();
        let cfg = SimConfig::default();
        let out = step(&map, &cfg, &RobotPose::new(4.7, 4.0, 0.0), Action::Forward, Point::new(4.9, 4.0));
        assert_eq!(out.event, StepEvent::Crash);
        assert_eq!(out.reward, -5.0);
    }

    #[test]
    fn progress_reward_and_turns() {
        let map = open_map();
        let cfg = SimConfig::default();
        // d_prev = 2.0, d_curr = 1.8
        let out = step(&map, &cfg, &RobotPose::new(1.0, 1.0, 0.0), Action::Forward, Point::new(3.0, 1.0));
        assert!((out.reward - 0.2).abs() < 1e-12);
        assert_eq!(out.event, StepEvent::Moved);
        for a in [Action::TurnLeft, Action::TurnRight] {
            let out = step(&map, &cfg, &RobotPose::new(1.0, 1.0, 0.0), a, Point::new(3.0, 1.0));
            assert_eq!(out.reward, 0.0);
        }
    }

    #[test]
    fn turns_cancel() {
        let map = open_map();
        let cfg = SimConfig::default();
        let pose = RobotPose::new(2.0, 2.0, 0.3);
        let left = step(&map, &cfg, &pose, Action::TurnLeft, Point::new(7.0, 7.0)).pose;
        let back = step(&map, &cfg, &left, Action::TurnRight, Point::new(7.0, 7.0)).pose;
        assert!((back.heading - pose.heading).abs() <= 1e-12);
        assert_eq!((back.x, back.y), (pose.x, pose.y));
    }

    #[test]
    fn invalid_action_code_rejected() {
        assert!(Action::try_from(3).is_err());
        assert_eq!(Action::try_from(2).unwrap(), Action::TurnRight);
    }

    #[test]
    fn reset_is_deterministic_and_detects_infeasible_regions() {
        let map = open_map();
        let cfg = SimConfig::default();
        let region = map.bounds();
        let a = reset(&map, &cfg, &mut rng::stream(42, "sim"), &region, Point::new(7.0, 7.0)).unwrap();
        let b = reset(&map, &cfg, &mut rng::stream(42, "sim"), &region, Point::new(7.0, 7.0)).unwrap();
        assert_eq!(a, b);
        let inside = Rect::new(5.2, 3.2, 5.8, 4.8);
        assert!(matches!(
            reset(&map, &cfg, &mut rng::stream(1, "sim"), &inside, Point::new(7.0, 7.0)),
            Err(Error::InfeasibleRegion(_))
        ));
    }

    #[test]
    fn sampled_poses_keep_robot_radius_clearance() {
        let map = WorldMap::bundled();
        let cfg = SimConfig::default();
        let mut r = rng::stream(3, "sim");
        for _ in 0..10_000 {
            let pose = sample_free_pose(&map, &cfg, &map.bounds(), &mut r).unwrap();
            let p = pose.position();
            // independent check against each obstacle
            let b = map.bounds();
            assert!(p.x - b.x0 >= 0.25 && b.x1 - p.x >= 0.25 && p.y - b.y0 >= 0.25 && b.y1 - p.y >= 0.25);
            for f in map.furniture() {
                let dx = (f.x0 - p.x).max(p.x - f.x1).max(0.0);
                let dy = (f.y0 - p.y).max(p.y - f.y1).max(0.0);
                assert!((dx * dx + dy * dy).sqrt() >= 0.25);
            }
        }
    }

    #[test]
    fn episode_walks_the_subgoal_chain() {
        let map = open_map();
        let cfg = SimConfig::default();
        let mut ep = Episode::new(&map, &cfg, RobotPose::new(1.0, 1.0, 0.0), vec![Point::new(1.8, 1.0), Point::new(2.6, 1.0)]).unwrap();
        let s = ep.act(Action::Forward).unwrap();
        assert_eq!(s.event, StepEvent::Moved);
        let s = ep.act(Action::Forward).unwrap();
        assert_eq!(s.event, StepEvent::SubgoalReached);
        assert!(!s.finished && ep.subgoal_index() == 1);
        let mut last = s;
        while !last.finished {
            last = ep.act(Action::Forward).unwrap();
        }
        assert!(last.goal_reached && last.terminal);
        assert!(ep.distance_to_goal() < 0.5);
    }

    #[test]
    fn leg_step_cap_truncates_without_terminal() {
        let map = open_map();
        let mut cfg = SimConfig::default();
        cfg.max_leg_steps = 5;
        let mut ep = Episode::new(&map, &cfg, RobotPose::new(1.0, 1.0, 0.0), vec![Point::new(7.0, 7.0)]).unwrap();
        let mut last = None;
        for _ in 0..5 {
            last = Some(ep.act(Action::TurnLeft).unwrap());
        }
        let last = last.unwrap();
        assert!(last.finished && !last.terminal);
        assert!(ep.act(Action::TurnLeft).is_err());
    }
}
