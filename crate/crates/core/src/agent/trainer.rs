use std::sync::Arc;

use rand::Rng;

use super::network::{encode_batch, DqnNetwork};
use super::replay::{ReplayBuffer, Transition};
use super::rollout::rollout;
use super::schedule::{select_action, EpsilonSchedule};
use crate::error::{Error, Result};
use crate::nn::{huber, OptimizerState, Parameterized, Tensor};
use crate::planner::{extract_subgoals, plan, PlanResult, PlannerConfig};
use crate::rng::{self, StreamRng};
use crate::sim::{Episode, Point, RobotPose, SemanticFrame, SimConfig, WorldMap};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    pub episodes: u64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Transitions collected before the first update.
    pub warmup: usize,
    /// Environment steps per gradient update.
    pub train_every: usize,
    /// Gradient updates between target-network syncs.
    pub target_sync: u64,
    pub lr: f64,
    pub rms_decay: f64,
    pub rms_epsilon: f64,
    pub huber_delta: f64,
    /// Distance normalisation for the sub-goal input, m.
    pub d_max: f64,
    /// Arc-length spacing of sub-goals along the planned path, m.
    pub subgoal_spacing: f64,
    /// Minimum start-goal separation of sampled tasks, m.
    pub min_goal_distance: f64,
    /// Episodes between greedy validation rounds; 0 disables validation
    /// and keeps the final network.
    pub validate_every: u64,
    /// Trials per validation round, drawn from a fixed task set.
    pub validate_trials: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            epsilon: EpsilonSchedule::default(),
            episodes: 20_000,
            batch_size: 32,
            replay_capacity: 10_000,
            warmup: 1_000,
            train_every: 4,
            target_sync: 1_000,
            lr: 2.5e-4,
            rms_decay: 0.95,
            rms_epsilon: 0.01,
            huber_delta: 1.0,
            d_max: 5.0,
            subgoal_spacing: 1.5,
            min_goal_distance: 2.0,
            validate_every: 250,
            validate_trials: 30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        let e = &self.epsilon;
        if !(0.0..=1.0).contains(&e.start) || !(0.0..=1.0).contains(&e.end) {
            return Err(Error::InvalidArgument("epsilon endpoints must lie in [0, 1]".into()));
        }
        if self.batch_size == 0 || self.train_every == 0 || self.target_sync == 0 {
            return Err(Error::InvalidArgument("batch size, train_every and target_sync must be > 0".into()));
        }
        if self.batch_size > self.replay_capacity {
            return Err(Error::InvalidArgument("batch size exceeds replay capacity".into()));
        }
        if self.validate_every > 0 && self.validate_trials == 0 {
            return Err(Error::InvalidArgument("validation needs at least one trial".into()));
        }
        if !(self.d_max > 0.0) || !(self.subgoal_spacing > 0.0) {
            return Err(Error::InvalidArgument("d_max and sub-goal spacing must be > 0".into()));
        }
        Ok(())
    }
}

/// Source of (start pose, goal) pairs, one per episode.
pub trait TaskSampler {
    fn sample(&self, map: &WorldMap, sim: &SimConfig, rng: &mut StreamRng) -> Result<(RobotPose, Point)>;
}

/// Start and goal drawn uniformly from free space with a minimum clearance
/// and separation.
#[derive(Debug, Clone, Copy)]
pub struct RandomTasks {
    pub clearance: f64,
    pub min_distance: f64,
}

impl TaskSampler for RandomTasks {
    fn sample(&self, map: &WorldMap, _sim: &SimConfig, rng: &mut StreamRng) -> Result<(RobotPose, Point)> {
        let b = map.bounds();
        let draw = |rng: &mut StreamRng| -> Result<Point> {
            for _ in 0..crate::sim::MAX_REJECTIONS {
                let p = Point::new(rng.random_range(b.x0..b.x1), rng.random_range(b.y0..b.y1));
                if map.is_free(p, self.clearance) {
                    return Ok(p);
                }
            }
            Err(Error::InfeasibleRegion(crate::sim::MAX_REJECTIONS))
        };
        for _ in 0..crate::sim::MAX_REJECTIONS {
            let start = draw(rng)?;
            let goal = draw(rng)?;
            if start.distance(goal) >= self.min_distance {
                let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                return Ok((RobotPose::new(start.x, start.y, heading), goal));
            }
        }
        Err(Error::InfeasibleRegion(crate::sim::MAX_REJECTIONS))
    }
}

/// Always the same start region and goal; the heading is randomised.
#[derive(Debug, Clone, Copy)]
pub struct FixedTask {
    pub start: Point,
    pub goal: Point,
    pub random_heading: bool,
}

impl TaskSampler for FixedTask {
    fn sample(&self, _map: &WorldMap, _sim: &SimConfig, rng: &mut StreamRng) -> Result<(RobotPose, Point)> {
        let heading = if self.random_heading {
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)
        } else {
            (self.goal.y - self.start.y).atan2(self.goal.x - self.start.x)
        };
        Ok((RobotPose::new(self.start.x, self.start.y, heading), self.goal))
    }
}

/// Plans a path and resamples it into sub-goals; `None` when infeasible.
pub fn plan_subgoals(
    map: &WorldMap,
    start: Point,
    goal: Point,
    planner: &PlannerConfig,
    spacing: f64,
) -> Result<Option<Vec<Point>>> {
    match plan(start, goal, map, planner)? {
        PlanResult::Infeasible => Ok(None),
        PlanResult::Path { waypoints, .. } => Ok(Some(extract_subgoals(&waypoints, spacing)?)),
    }
}

/// Planner configuration for one episode, seeded from the episode stream.
pub fn episode_planner(base: &PlannerConfig, seed: u64, stream: &str, episode: u64) -> PlannerConfig {
    PlannerConfig {
        seed: rng::substream(seed, stream, episode).random(),
        ..base.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: u64,
    pub total_return: f64,
    pub steps: usize,
    pub success: bool,
    pub epsilon: f64,
    /// Mean TD loss over the episode's updates (NaN when none ran).
    pub td_loss_mean: f64,
    pub skipped: bool,
}

/// DQN learner: online and target networks, optimizer and replay memory.
pub struct DqnTrainer {
    online: DqnNetwork<f32>,
    target: DqnNetwork<f32>,
    optimizer: OptimizerState<f32>,
    replay: ReplayBuffer,
    cfg: TrainConfig,
    updates: u64,
    rng: StreamRng,
}

impl DqnTrainer {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let online = DqnNetwork::new(&mut rng::stream(cfg.seed, "init.dqn"));
        Self::with_network(cfg, online)
    }

    pub fn with_network(cfg: &TrainConfig, online: DqnNetwork<f32>) -> Result<Self> {
        if online.is_frozen() {
            return Err(Error::Frozen("train a frozen network"));
        }
        Ok(Self {
            target: online.clone(),
            online,
            optimizer: OptimizerState::rmsprop(cfg.lr, cfg.rms_decay, cfg.rms_epsilon)?,
            replay: ReplayBuffer::new(cfg.replay_capacity)?,
            cfg: cfg.clone(),
            updates: 0,
            rng: rng::stream(cfg.seed, "agent"),
        })
    }

    pub fn network(&self) -> &DqnNetwork<f32> {
        &self.online
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn rng(&mut self) -> &mut StreamRng {
        &mut self.rng
    }

    pub fn remember(&mut self, t: Transition) -> Result<()> {
        self.replay.push(t)
    }

    /// `y = r` for terminal transitions, else `r + gamma max_a Q_target(s', a)`.
    pub fn td_targets(&self, batch: &[Transition]) -> Result<Vec<f32>> {
        let frames: Vec<&SemanticFrame> = batch.iter().map(|t| t.next_frame.as_ref()).collect();
        let subgoals: Vec<_> = batch.iter().map(|t| t.next_subgoal).collect();
        let (x, s) = encode_batch::<f32>(&frames, &subgoals, self.cfg.d_max)?;
        let (q, _) = self.target.infer(&x, &s)?;
        let gamma = self.cfg.gamma as f32;
        Ok(batch
            .iter()
            .zip(q.data().chunks_exact(3))
            .map(|(t, row)| {
                if t.done {
                    t.reward
                } else {
                    t.reward + gamma * row.iter().copied().fold(f32::NEG_INFINITY, f32::max)
                }
            })
            .collect())
    }

    /// One gradient update on `batch`; returns the mean Huber TD loss.
    pub fn train_step(&mut self, batch: &[Transition]) -> Result<f64> {
        if self.online.is_frozen() {
            return Err(Error::Frozen("run a training step"));
        }
        let targets = self.td_targets(batch)?;
        let frames: Vec<&SemanticFrame> = batch.iter().map(|t| t.frame.as_ref()).collect();
        let subgoals: Vec<_> = batch.iter().map(|t| t.subgoal).collect();
        let (x, s) = encode_batch::<f32>(&frames, &subgoals, self.cfg.d_max)?;
        let (q, _) = self.online.forward(&x, &s)?;

        let n = batch.len() as f32;
        let delta = self.cfg.huber_delta as f32;
        let mut dq = Tensor::zeros(&[batch.len(), 3]);
        let mut loss = 0.0f64;
        for (i, (t, &y)) in batch.iter().zip(&targets).enumerate() {
            let a = t.action.index();
            let (l, g) = huber(q.data()[i * 3 + a] - y, delta);
            loss += l as f64;
            dq.data_mut()[i * 3 + a] = g / n;
        }

        self.online.zero_grad();
        self.online.backward(&dq)?;
        self.optimizer.step(&mut self.online.named_params_mut())?;
        self.updates += 1;
        if self.updates % self.cfg.target_sync == 0 {
            self.target.copy_params_from(&self.online);
        }
        Ok(loss / batch.len() as f64)
    }

    /// Samples a batch from replay and updates; `None` while warming up.
    pub fn update_from_replay(&mut self) -> Result<Option<f64>> {
        let needed = self.cfg.batch_size.max(self.cfg.warmup);
        if self.replay.len() < needed {
            return Ok(None);
        }
        let batch = self.replay.sample(self.cfg.batch_size, &mut self.rng)?;
        self.train_step(&batch).map(Some)
    }

    /// Ends stage 1: returns the frozen online network.
    pub fn into_frozen(self) -> DqnNetwork<f32> {
        let mut net = self.online;
        net.freeze();
        net
    }
}

/// Greedy validation result for the online network after `episode`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationLog {
    pub episode: u64,
    pub trials: usize,
    pub successes: usize,
    pub collisions: usize,
}

impl ValidationLog {
    /// Ranks by successes, then fewer collisions; ties go to `self`.
    pub fn beats(&self, other: &Self) -> bool {
        (self.successes, std::cmp::Reverse(self.collisions)) >= (other.successes, std::cmp::Reverse(other.collisions))
    }
}

/// Stage-1 output.
pub struct TrainingOutcome {
    pub network: DqnNetwork<f32>,
    pub log: Vec<EpisodeLog>,
    pub validations: Vec<ValidationLog>,
    /// Episode whose snapshot was kept, when validation ran.
    pub selected_episode: Option<u64>,
}

fn validate_network(
    map: &WorldMap,
    sim: &SimConfig,
    planner: &PlannerConfig,
    cfg: &TrainConfig,
    tasks: &dyn TaskSampler,
    net: &DqnNetwork<f32>,
    episode: u64,
) -> Result<ValidationLog> {
    let mut out = ValidationLog {
        episode,
        trials: 0,
        successes: 0,
        collisions: 0,
    };
    let mut act_rng = rng::stream(cfg.seed, "agent.validate");
    for trial in 0..cfg.validate_trials as u64 {
        let (start, goal) = tasks.sample(map, sim, &mut rng::substream(cfg.seed, "sim.validate", trial))?;
        let planner_cfg = episode_planner(planner, cfg.seed, "planner.validate", trial);
        let Some(subgoals) = plan_subgoals(map, start.position(), goal, &planner_cfg, cfg.subgoal_spacing)? else {
            continue;
        };
        let mut ep = Episode::new(map, sim, start, subgoals)?;
        let summary = rollout(&mut ep, net, cfg.d_max, 0.0, &mut act_rng, |_, _, _| {})?;
        out.trials += 1;
        out.successes += usize::from(summary.final_distance < sim.rewards.goal_radius);
        out.collisions += usize::from(summary.crashed);
    }
    Ok(out)
}

/// Trains a DQN on `map` with episodes drawn from `tasks`.
pub fn run_training(
    map: &WorldMap,
    sim: &SimConfig,
    planner: &PlannerConfig,
    cfg: &TrainConfig,
    tasks: &dyn TaskSampler,
    mut progress: impl FnMut(&EpisodeLog),
) -> Result<TrainingOutcome> {
    run_training_observed(map, sim, planner, cfg, tasks, |e, _| progress(e))
}

/// As [`run_training`], also exposing the online network after each episode.
pub fn run_training_observed(
    map: &WorldMap,
    sim: &SimConfig,
    planner: &PlannerConfig,
    cfg: &TrainConfig,
    tasks: &dyn TaskSampler,
    mut progress: impl FnMut(&EpisodeLog, &DqnNetwork<f32>),
) -> Result<TrainingOutcome> {
    let mut trainer = DqnTrainer::new(cfg)?;
    let mut log = Vec::with_capacity(cfg.episodes as usize);
    let mut validations: Vec<ValidationLog> = Vec::new();
    let mut best: Option<(ValidationLog, DqnNetwork<f32>)> = None;
    let mut env_steps = 0u64;
    for episode in 0..cfg.episodes {
        if cfg.validate_every > 0 && episode > 0 && episode % cfg.validate_every == 0 {
            let v = validate_network(map, sim, planner, cfg, tasks, &trainer.online, episode)?;
            log::info!(
                "validation after {episode} episodes: {}/{} successes, {} collisions",
                v.successes,
                v.trials,
                v.collisions
            );
            if best.as_ref().is_none_or(|(b, _)| v.beats(b)) {
                best = Some((v, trainer.online.clone()));
            }
            validations.push(v);
        }
        let epsilon = cfg.epsilon.epsilon_at(episode);
        let mut task_rng = rng::substream(cfg.seed, "sim.task", episode);
        let (start, goal) = tasks.sample(map, sim, &mut task_rng)?;
        let planner_cfg = episode_planner(planner, cfg.seed, "planner.train", episode);
        let Some(subgoals) = plan_subgoals(map, start.position(), goal, &planner_cfg, cfg.subgoal_spacing)? else {
            log::warn!("episode {episode}: planner found no path; skipped");
            let entry = EpisodeLog {
                episode,
                total_return: 0.0,
                steps: 0,
                success: false,
                epsilon,
                td_loss_mean: f64::NAN,
                skipped: true,
            };
            progress(&entry, &trainer.online);
            log.push(entry);
            continue;
        };
        let mut ep = Episode::new(map, sim, start, subgoals)?;
        let (frame, mut polar) = ep.observe()?;
        let mut frame = Arc::new(frame);
        let (mut total, mut losses, mut success) = (0.0, Vec::new(), false);
        while !ep.is_finished() {
            let (q, _) = trainer.online.forward_q(&frame, polar, cfg.d_max)?;
            let action = select_action(&q, epsilon, trainer.rng());
            let outcome = ep.act(action)?;
            let (next, next_polar) = ep.observe()?;
            let next = Arc::new(next);
            trainer.remember(Transition {
                frame: frame.clone(),
                subgoal: polar,
                action,
                reward: outcome.reward as f32,
                next_frame: next.clone(),
                next_subgoal: next_polar,
                done: outcome.terminal,
            })?;
            total += outcome.reward;
            success |= outcome.goal_reached;
            env_steps += 1;
            if env_steps % cfg.train_every as u64 == 0 {
                if let Some(l) = trainer.update_from_replay()? {
                    losses.push(l);
                }
            }
            frame = next;
            polar = next_polar;
        }
        let entry = EpisodeLog {
            episode,
            total_return: total,
            steps: ep.steps(),
            success,
            epsilon,
            td_loss_mean: if losses.is_empty() {
                f64::NAN
            } else {
                losses.iter().sum::<f64>() / losses.len() as f64
            },
            skipped: false,
        };
        progress(&entry, &trainer.online);
        log.push(entry);
    }
    if cfg.validate_every > 0 {
        let v = validate_network(map, sim, planner, cfg, tasks, &trainer.online, cfg.episodes)?;
        if best.as_ref().is_none_or(|(b, _)| v.beats(b)) {
            best = Some((v, trainer.online.clone()));
        }
        validations.push(v);
    }
    let selected_episode = best.as_ref().map(|(v, _)| v.episode);
    let network = match best {
        Some((_, mut net)) => {
            net.freeze();
            net
        }
        None => trainer.into_frozen(),
    };
    Ok(TrainingOutcome {
        network,
        log,
        validations,
        selected_episode,
    })
}
