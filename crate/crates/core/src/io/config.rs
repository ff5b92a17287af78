use std::fmt::Write as _;
use std::path::Path;

use crate::agent::{RandomTasks, TrainConfig};
use crate::branch::DistillConfig;
use crate::error::{Error, Result};
use crate::planner::PlannerConfig;
use crate::sim::{SimConfig, WorldMap};

/// Evaluation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub trials: usize,
    pub states: usize,
    /// Fraction steps of the deletion/insertion curves.
    pub steps: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            trials: 50,
            states: 1000,
            steps: 50,
        }
    }
}

/// Every pipeline hyperparameter plus the global seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// `bundled` or a path to a map file.
    pub map: String,
    pub sim: SimConfig,
    pub planner: PlannerConfig,
    pub dqn: TrainConfig,
    pub branch: DistillConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            map: "bundled".into(),
            sim: SimConfig::default(),
            planner: PlannerConfig {
                max_iterations: 1500,
                ..PlannerConfig::default()
            },
            dqn: TrainConfig::default(),
            branch: DistillConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

trait Value: Sized {
    fn render(&self) -> String;
    fn parse(s: &str) -> std::result::Result<Self, String>;
}

macro_rules! from_str_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn render(&self) -> String {
                self.to_string()
            }
            fn parse(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
        }
    )*};
}
from_str_value!(f64, u64, usize, String);

impl Value for Option<f64> {
    fn render(&self) -> String {
        self.map_or_else(|| "auto".into(), |v| v.to_string())
    }
    fn parse(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|e| format!("{e}"))
        }
    }
}

impl Value for Vec<usize> {
    fn render(&self) -> String {
        self.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
    }
    fn parse(s: &str) -> std::result::Result<Self, String> {
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(|p| p.trim().parse().map_err(|e| format!("{e}"))).collect()
    }
}

struct Field {
    section: &'static str,
    key: &'static str,
    get: fn(&RunConfig) -> String,
    set: fn(&mut RunConfig, &str) -> std::result::Result<(), String>,
}

macro_rules! fields {
    ($($sec:literal $key:literal => $($path:ident).+ : $t:ty;)*) => {
        fn fields() -> Vec<Field> {
            vec![$(Field {
                section: $sec,
                key: $key,
                get: |c| <$t as Value>::render(&c.$($path).+),
                set: |c, v| {
                    c.$($path).+ = <$t as Value>::parse(v)?;
                    Ok(())
                },
            }),*]
        }
    };
}

fields! {
    "run" "seed" => seed: u64;
    "run" "map" => map: String;
    "sim" "width" => sim.camera.width: usize;
    "sim" "height" => sim.camera.height: usize;
    "sim" "fov" => sim.camera.fov: f64;
    "sim" "object_height" => sim.camera.object_height: f64;
    "sim" "step_length" => sim.step_length: f64;
    "sim" "turn_angle" => sim.turn_angle: f64;
    "sim" "robot_radius" => sim.robot_radius: f64;
    "sim" "goal_reward" => sim.rewards.goal: f64;
    "sim" "crash_reward" => sim.rewards.crash: f64;
    "sim" "progress_scale" => sim.rewards.progress_scale: f64;
    "sim" "goal_radius" => sim.rewards.goal_radius: f64;
    "sim" "max_leg_steps" => sim.max_leg_steps: usize;
    "planner" "max_iterations" => planner.max_iterations: usize;
    "planner" "step" => planner.step: f64;
    "planner" "gamma" => planner.gamma: Option<f64>;
    "planner" "goal_bias" => planner.goal_bias: f64;
    "planner" "goal_tolerance" => planner.goal_tolerance: f64;
    "planner" "clearance" => planner.clearance: f64;
    "dqn" "episodes" => dqn.episodes: u64;
    "dqn" "gamma" => dqn.gamma: f64;
    "dqn" "epsilon_start" => dqn.epsilon.start: f64;
    "dqn" "epsilon_end" => dqn.epsilon.end: f64;
    "dqn" "epsilon_anneal_episodes" => dqn.epsilon.anneal_episodes: u64;
    "dqn" "batch_size" => dqn.batch_size: usize;
    "dqn" "replay_capacity" => dqn.replay_capacity: usize;
    "dqn" "warmup" => dqn.warmup: usize;
    "dqn" "train_every" => dqn.train_every: usize;
    "dqn" "target_sync" => dqn.target_sync: u64;
    "dqn" "lr" => dqn.lr: f64;
    "dqn" "rms_decay" => dqn.rms_decay: f64;
    "dqn" "rms_epsilon" => dqn.rms_epsilon: f64;
    "dqn" "huber_delta" => dqn.huber_delta: f64;
    "dqn" "d_max" => dqn.d_max: f64;
    "dqn" "subgoal_spacing" => dqn.subgoal_spacing: f64;
    "dqn" "min_goal_distance" => dqn.min_goal_distance: f64;
    "dqn" "validate_every" => dqn.validate_every: u64;
    "dqn" "validate_trials" => dqn.validate_trials: usize;
    "branch" "epochs" => branch.epochs: usize;
    "branch" "batch_size" => branch.batch_size: usize;
    "branch" "lr" => branch.lr: f64;
    "branch" "momentum" => branch.momentum: f64;
    "branch" "lr_milestones" => branch.lr_milestones: Vec<usize>;
    "branch" "lr_factor" => branch.lr_factor: f64;
    "branch" "harvest_episodes" => branch.harvest_episodes: u64;
    "branch" "harvest_epsilon" => branch.harvest_epsilon: f64;
    "branch" "heldout_fraction" => branch.heldout_fraction: f64;
    "eval" "trials" => eval.trials: usize;
    "eval" "states" => eval.states: usize;
    "eval" "steps" => eval.steps: usize;
}

const SECTIONS: [&str; 6] = ["run", "sim", "planner", "dqn", "branch", "eval"];

impl RunConfig {
    /// Parses INI text over the defaults. Unknown sections and keys are
    /// errors.
    pub fn parse(text: &str) -> Result<Self> {
        let fields = fields();
        let mut cfg = RunConfig::default();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| Error::Config { line: line_no, message };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err(format!("malformed section header `{line}`")))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(err(format!("unknown section `{name}`")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let sec = section
                .as_deref()
                .ok_or_else(|| err(format!("key `{key}` outside any section")))?;
            let field = fields
                .iter()
                .find(|f| f.section == sec && f.key == key)
                .ok_or_else(|| err(format!("unknown key `{key}` in [{sec}]")))?;
            (field.set)(&mut cfg, value).map_err(|e| err(format!("{sec}.{key}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Full INI text; `parse(render())` reproduces the config.
    pub fn render(&self) -> String {
        let fields = fields();
        let mut out = String::new();
        for sec in SECTIONS {
            let _ = writeln!(out, "[{sec}]");
            for f in fields.iter().filter(|f| f.section == sec) {
                let _ = writeln!(out, "{} = {}", f.key, (f.get)(self));
            }
            out.push('\n');
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.dqn_config().validate()?;
        self.branch_config().validate()?;
        self.planner.validate()?;
        if self.eval.steps == 0 {
            return Err(Error::InvalidArgument("eval.steps must be > 0".into()));
        }
        Ok(())
    }

    pub fn load_map(&self) -> Result<WorldMap> {
        if self.map == "bundled" {
            return Ok(WorldMap::bundled());
        }
        let path = Path::new(&self.map);
        WorldMap::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Stage-1 settings seeded from the global seed.
    pub fn dqn_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.dqn.clone()
        }
    }

    pub fn branch_config(&self) -> DistillConfig {
        DistillConfig {
            seed: self.seed,
            ..self.branch.clone()
        }
    }

    /// Start/goal sampler: planner clearance, stage-1 minimum separation.
    pub fn tasks(&self) -> RandomTasks {
        RandomTasks {
            clearance: self.planner.clearance,
            min_distance: self.dqn.min_goal_distance,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.render()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = "[run]\nseed = 3\n\n[dqn]\nepisodez = 10\n";
        match RunConfig::parse(text) {
            Err(Error::Config { line, message }) => {
                assert_eq!(line, 5);
                assert!(message.contains("episodez"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_value_reports_line() {
        assert!(matches!(
            RunConfig::parse("[eval]\n# comment\ntrials = many\n"),
            Err(Error::Config { line: 3, .. })
        ));
    }

    #[test]
    fn overrides_apply() {
        let cfg = RunConfig::parse("[dqn]\nepisodes = 12  # short\n[planner]\ngamma = 3.5\n").unwrap();
        assert_eq!(cfg.dqn.episodes, 12);
        assert_eq!(cfg.planner.gamma, Some(3.5));
    }
}
