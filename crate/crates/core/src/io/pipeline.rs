use std::fs;
use std::path::{Path, PathBuf};

use super::checkpoint::{params_digest, write_atomic, Checkpoint};
use super::config::RunConfig;
use super::export::{auc_csv, curves_csv, distill_log_csv, nav_stats_csv, training_log_csv, validation_log_csv};
use super::ppm::{frame_rgb, grayscale_rgb, overlay_rgb, write_ppm};
use crate::agent::{episode_planner, run_training, DqnNetwork, EpisodeLog, TaskSampler, ValidationLog};
use crate::branch::{explain_batch, finetune, AttentionBranch, DistillDataset, EpochLog};
use crate::error::{Error, Result};
use crate::eval::{
    angle_sweep, averaged_attention_per_action, deletion_curve, evaluate_navigation, insertion_curve,
    random_saliency, sample_eval_states, visual_backprop_batch, ActionAverages, EvalContext, EvalState,
    MetricCurve, NavStats, SWEEP_ANGLES, SWEEP_DISTANCE,
};
use crate::planner::{PlanResult, RrtStar};
use crate::rng;
use crate::saliency::{SaliencyMap, SaliencySource};
use crate::sim::{Action, SemanticFrame, SubGoalPolar, WorldMap};

pub const TRUNK_FILE: &str = "trunk.ckpt";
pub const MODEL_FILE: &str = "model.ckpt";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Loaded map plus evaluation context pieces owned by the caller.
pub struct Workspace {
    pub cfg: RunConfig,
    pub map: WorldMap,
    tasks: crate::agent::RandomTasks,
}

impl Workspace {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        let map = cfg.load_map()?;
        let tasks = cfg.tasks();
        Ok(Self { cfg, map, tasks })
    }

    pub fn eval_context(&self) -> EvalContext<'_> {
        EvalContext {
            map: &self.map,
            sim: &self.cfg.sim,
            planner: &self.cfg.planner,
            tasks: &self.tasks,
            d_max: self.cfg.dqn.d_max,
            subgoal_spacing: self.cfg.dqn.subgoal_spacing,
        }
    }

    pub fn tasks(&self) -> &dyn TaskSampler {
        &self.tasks
    }
}

pub struct TrainArtifacts {
    pub checkpoint: PathBuf,
    pub trunk: DqnNetwork<f32>,
    pub log: Vec<EpisodeLog>,
    pub validations: Vec<ValidationLog>,
    pub selected_episode: Option<u64>,
}

/// Stage 1: trains and writes `trunk.ckpt`, `train_log.csv` and
/// `validation_log.csv`.
pub fn train(ws: &Workspace, out: &Path, mut progress: impl FnMut(&EpisodeLog)) -> Result<TrainArtifacts> {
    ensure_dir(out)?;
    let cfg = &ws.cfg;
    let outcome = run_training(&ws.map, &cfg.sim, &cfg.planner, &cfg.dqn_config(), ws.tasks(), &mut progress)?;
    let checkpoint = out.join(TRUNK_FILE);
    Checkpoint::from_models(&outcome.network, None).save(&checkpoint)?;
    write_atomic(&out.join("train_log.csv"), &training_log_csv(&outcome.log)?)?;
    write_atomic(
        &out.join("validation_log.csv"),
        &validation_log_csv(&outcome.validations, outcome.selected_episode)?,
    )?;
    write_atomic(&out.join("config.ini"), cfg.render().as_bytes())?;
    Ok(TrainArtifacts {
        checkpoint,
        trunk: outcome.network,
        log: outcome.log,
        validations: outcome.validations,
        selected_episode: outcome.selected_episode,
    })
}

/// Loads a frozen trunk, refusing unfrozen checkpoints.
pub fn load_frozen_trunk(path: &Path) -> Result<DqnNetwork<f32>> {
    let trunk = Checkpoint::load(path)?.trunk()?;
    if !trunk.is_frozen() {
        return Err(Error::NotFrozen("the trunk checkpoint must be frozen before stage 2"));
    }
    Ok(trunk)
}

pub fn load_model(path: &Path) -> Result<(DqnNetwork<f32>, AttentionBranch<f32>)> {
    let ck = Checkpoint::load(path)?;
    Ok((ck.trunk()?, ck.branch()?))
}

pub struct DistillArtifacts {
    pub checkpoint: PathBuf,
    pub branch: AttentionBranch<f32>,
    pub log: Vec<EpochLog>,
    pub dataset_size: usize,
    pub label_histogram: [usize; 3],
    pub trunk_digest_before: String,
    pub trunk_digest_after: String,
}

/// Stage 2: distills a branch and writes `model.ckpt` and
/// `distill_log.csv`.
pub fn distill(ws: &Workspace, trunk_path: &Path, out: &Path, mut progress: impl FnMut(&EpochLog)) -> Result<DistillArtifacts> {
    let trunk = load_frozen_trunk(trunk_path)?;
    let before = params_digest(&trunk);
    ensure_dir(out)?;
    let cfg = &ws.cfg;
    let bcfg = cfg.branch_config();
    let dataset = DistillDataset::harvest(
        &ws.map,
        &cfg.sim,
        &cfg.planner,
        ws.tasks(),
        &trunk,
        cfg.dqn.d_max,
        cfg.dqn.subgoal_spacing,
        &bcfg,
    )?;
    let outcome = finetune(&trunk, &dataset, cfg.dqn.d_max, &bcfg, &mut progress)?;
    let after = params_digest(&trunk);
    let checkpoint = out.join(MODEL_FILE);
    Checkpoint::from_models(&trunk, Some(&outcome.branch)).save(&checkpoint)?;
    write_atomic(&out.join("distill_log.csv"), &distill_log_csv(&outcome.log)?)?;
    Ok(DistillArtifacts {
        checkpoint,
        branch: outcome.branch,
        log: outcome.log,
        dataset_size: dataset.len(),
        label_histogram: dataset.label_histogram(),
        trunk_digest_before: before,
        trunk_digest_after: after,
    })
}

/// Greedy navigation trials; writes `nav_stats.csv`.
pub fn eval_nav(ws: &Workspace, checkpoint: &Path, trials: usize, out: &Path) -> Result<NavStats> {
    let trunk = Checkpoint::load(checkpoint)?.trunk()?;
    let stats = evaluate_navigation(&ws.eval_context(), &trunk, trials, ws.cfg.seed)?;
    ensure_dir(out)?;
    write_atomic(&out.join("nav_stats.csv"), &nav_stats_csv(&stats)?)?;
    Ok(stats)
}

/// Saliency maps of every source for `states`, in state order.
pub fn saliency_maps(
    trunk: &DqnNetwork<f32>,
    branch: &AttentionBranch<f32>,
    states: &[EvalState],
    d_max: f64,
    seed: u64,
) -> Result<Vec<(SaliencySource, Vec<SaliencyMap>)>> {
    let mut branch_maps = Vec::with_capacity(states.len());
    let mut vbp_maps = Vec::with_capacity(states.len());
    for chunk in states.chunks(64) {
        let frames: Vec<&SemanticFrame> = chunk.iter().map(|s| &s.frame).collect();
        let subgoals: Vec<SubGoalPolar> = chunk.iter().map(|s| s.subgoal).collect();
        branch_maps.extend(explain_batch(trunk, branch, &frames, &subgoals, d_max)?.into_iter().map(|e| e.map));
        vbp_maps.extend(visual_backprop_batch(trunk, &frames, &subgoals, d_max)?);
    }
    let random = states
        .iter()
        .enumerate()
        .map(|(i, s)| random_saliency(seed, i as u64, s.frame.width(), s.frame.height()))
        .collect::<Result<Vec<_>>>()?;
    Ok(vec![
        (SaliencySource::Branch, branch_maps),
        (SaliencySource::VisualBackProp, vbp_maps),
        (SaliencySource::Random, random),
    ])
}

pub struct MetricsReport {
    pub deletion: Vec<(SaliencySource, MetricCurve)>,
    pub insertion: Vec<(SaliencySource, MetricCurve)>,
}

impl MetricsReport {
    pub fn deletion_auc(&self, source: SaliencySource) -> f64 {
        self.deletion.iter().find(|(s, _)| *s == source).map_or(f64::NAN, |(_, c)| c.auc)
    }

    pub fn insertion_auc(&self, source: SaliencySource) -> f64 {
        self.insertion.iter().find(|(s, _)| *s == source).map_or(f64::NAN, |(_, c)| c.auc)
    }
}

/// Deletion and insertion curves for every source on shared states.
pub fn compute_metrics(
    trunk: &DqnNetwork<f32>,
    branch: &AttentionBranch<f32>,
    states: &[EvalState],
    steps: usize,
    d_max: f64,
    seed: u64,
) -> Result<MetricsReport> {
    let mut report = MetricsReport {
        deletion: Vec::new(),
        insertion: Vec::new(),
    };
    for (source, maps) in saliency_maps(trunk, branch, states, d_max, seed)? {
        report.deletion.push((source, deletion_curve(trunk, states, &maps, steps, d_max)?));
        report.insertion.push((source, insertion_curve(trunk, states, &maps, steps, d_max)?));
    }
    Ok(report)
}

/// Writes `deletion.csv`, `insertion.csv` and `auc.csv`.
pub fn metrics(ws: &Workspace, checkpoint: &Path, states: usize, out: &Path) -> Result<MetricsReport> {
    let (trunk, branch) = load_model(checkpoint)?;
    let eval_states = sample_eval_states(&ws.eval_context(), &trunk, states, ws.cfg.seed)?;
    let report = compute_metrics(&trunk, &branch, &eval_states, ws.cfg.eval.steps, ws.cfg.dqn.d_max, ws.cfg.seed)?;
    ensure_dir(out)?;
    write_atomic(&out.join("deletion.csv"), &curves_csv(&report.deletion)?)?;
    write_atomic(&out.join("insertion.csv"), &curves_csv(&report.insertion)?)?;
    write_atomic(&out.join("auc.csv"), &auc_csv(&report.deletion, &report.insertion)?)?;
    Ok(report)
}

fn angle_label(angle: f64) -> String {
    let deg = angle.to_degrees().round() as i64;
    match deg.signum() {
        0 => "front".into(),
        1 => format!("left{deg}"),
        _ => format!("right{}", -deg),
    }
}

pub struct ExplainReport {
    pub states: usize,
    pub averages: ActionAverages,
}

/// Writes per-state frame, attention, overlay and VisualBackProp PPMs, an
/// angle sweep per state, and per-action averages.
pub fn explain(ws: &Workspace, checkpoint: &Path, states: usize, out: &Path) -> Result<ExplainReport> {
    let (trunk, branch) = load_model(checkpoint)?;
    let d_max = ws.cfg.dqn.d_max;
    let eval_states = sample_eval_states(&ws.eval_context(), &trunk, states, ws.cfg.seed)?;
    ensure_dir(out)?;
    let frames: Vec<&SemanticFrame> = eval_states.iter().map(|s| &s.frame).collect();
    let subgoals: Vec<SubGoalPolar> = eval_states.iter().map(|s| s.subgoal).collect();
    let explanations = explain_batch(&trunk, &branch, &frames, &subgoals, d_max)?;
    let vbp = visual_backprop_batch(&trunk, &frames, &subgoals, d_max)?;
    for (i, ((state, ex), v)) in eval_states.iter().zip(&explanations).zip(&vbp).enumerate() {
        let (w, h) = (state.frame.width(), state.frame.height());
        let stem = format!("state{i:03}_{}", ex.q.greedy().name());
        write_ppm(&out.join(format!("{stem}_frame.ppm")), w, h, &frame_rgb(&state.frame))?;
        write_ppm(&out.join(format!("{stem}_attention.ppm")), w, h, &grayscale_rgb(&ex.map))?;
        write_ppm(&out.join(format!("{stem}_overlay.ppm")), w, h, &overlay_rgb(&state.frame, &ex.map))?;
        write_ppm(&out.join(format!("{stem}_vbp.ppm")), w, h, &grayscale_rgb(v))?;
        let sweep = angle_sweep(&trunk, &branch, &state.frame, &SWEEP_ANGLES, SWEEP_DISTANCE, d_max)?;
        for (angle, m) in SWEEP_ANGLES.iter().zip(&sweep) {
            let name = format!("state{i:03}_sweep_{}.ppm", angle_label(*angle));
            write_ppm(&out.join(name), w, h, &overlay_rgb(&state.frame, m))?;
        }
    }
    let averages = averaged_attention_per_action(&trunk, &branch, &eval_states, d_max)?;
    let mut rows = String::from("action,count,mean_column\n");
    for a in Action::ALL {
        let count = averages.counts()[a.index()];
        let col = averages.mean_column(a).map_or(String::new(), |c| c.to_string());
        rows.push_str(&format!("{},{count},{col}\n", a.name()));
        if let (Some(avg), Some(map)) = (&averages.per_action[a.index()], averages.attention_map(a)) {
            let (w, h) = (averages.width, averages.height);
            write_ppm(&out.join(format!("mean_{}_attention.ppm", a.name())), w, h, &grayscale_rgb(&map))?;
            write_ppm(&out.join(format!("mean_{}_frame.ppm", a.name())), w, h, &mean_frame_rgb(&avg.frame, w * h))?;
        }
    }
    write_atomic(&out.join("action_averages.csv"), rows.as_bytes())?;
    Ok(ExplainReport {
        states: eval_states.len(),
        averages,
    })
}

/// Palette blend of averaged one-hot channels.
fn mean_frame_rgb(channels: &[f32], area: usize) -> Vec<u8> {
    use crate::sim::Class;
    let palette = [Class::Floor.rgb(), Class::Wall.rgb(), Class::Furniture.rgb()];
    (0..area)
        .flat_map(|p| {
            let mut px = [0.0f32; 3];
            for (c, colour) in palette.iter().enumerate() {
                let w = channels[c * area + p];
                for k in 0..3 {
                    px[k] += w * colour[k] as f32;
                }
            }
            px.map(|v| v.round().clamp(0.0, 255.0) as u8)
        })
        .collect()
}

pub struct PlanDebug {
    pub result: PlanResult,
    pub tree_nodes: usize,
}

/// Plans one seeded task and dumps the tree and path.
pub fn plan_debug(ws: &Workspace, out: &Path) -> Result<PlanDebug> {
    let cfg = &ws.cfg;
    let (start, goal) = ws.tasks().sample(&ws.map, &cfg.sim, &mut rng::stream(cfg.seed, "sim.plan-debug"))?;
    let pcfg = episode_planner(&cfg.planner, cfg.seed, "planner.debug", 0);
    let mut search = RrtStar::new(&ws.map, start.position(), goal, &pcfg)?;
    for _ in 0..pcfg.max_iterations {
        search.iterate();
    }
    let result = search.best();
    ensure_dir(out)?;
    write_atomic(&out.join("plan_tree.txt"), search.tree().dump().as_bytes())?;
    let mut csv = String::from("x,y\n");
    if let PlanResult::Path { waypoints, .. } = &result {
        for p in waypoints {
            csv.push_str(&format!("{},{}\n", p.x, p.y));
        }
    }
    write_atomic(&out.join("plan_path.csv"), csv.as_bytes())?;
    Ok(PlanDebug {
        result,
        tree_nodes: search.tree().len(),
    })
}
