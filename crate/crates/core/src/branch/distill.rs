use rand::seq::SliceRandom;

use super::network::{one_hot_from_q, AttentionBranch};
use crate::agent::{
    encode_batch, episode_planner, plan_subgoals, rollout, DqnNetwork, QValues, TaskSampler, FEATURE_CHANNELS,
    FEATURE_SIDE,
};
use crate::error::{Error, Result};
use crate::nn::{argmax, OptimizerState, Parameterized, Tensor};
use crate::planner::PlannerConfig;
use crate::rng;
use crate::sim::{Action, Episode, SemanticFrame, SimConfig, SubGoalPolar, WorldMap};

#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Epochs at which the learning rate is multiplied by `lr_factor`.
    pub lr_milestones: Vec<usize>,
    pub lr_factor: f64,
    pub harvest_episodes: u64,
    pub harvest_epsilon: f64,
    pub heldout_fraction: f64,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            lr: 0.1,
            momentum: 0.9,
            lr_milestones: vec![50, 75],
            lr_factor: 0.1,
            harvest_episodes: 500,
            harvest_epsilon: 0.05,
            heldout_fraction: 0.1,
            seed: 0,
        }
    }
}

impl DistillConfig {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = self.lr_milestones.iter().filter(|&&m| epoch >= m).count();
        self.lr * self.lr_factor.powi(drops as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(Error::InvalidArgument("branch batch size and lr must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.heldout_fraction) {
            return Err(Error::InvalidArgument("held-out fraction must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.harvest_epsilon) {
            return Err(Error::InvalidArgument("harvest epsilon must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillRecord {
    pub frame: SemanticFrame,
    pub subgoal: SubGoalPolar,
    /// Greedy action of the frozen DQN on this state.
    pub label: Action,
}

/// Labelled states split into training and held-out index sets.
#[derive(Debug, Clone)]
pub struct DistillDataset {
    records: Vec<DistillRecord>,
    train: Vec<usize>,
    heldout: Vec<usize>,
}

impl DistillDataset {
    /// Shuffles record indices with `seed` and holds out the leading
    /// `heldout_fraction`.
    pub fn from_records(records: Vec<DistillRecord>, heldout_fraction: f64, seed: u64) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut order: Vec<usize> = (0..records.len()).collect();
        order.shuffle(&mut rng::stream(seed, "branch.split"));
        let n_held = ((records.len() as f64 * heldout_fraction).round() as usize).min(records.len() - 1);
        let train = order.split_off(n_held);
        Ok(Self {
            records,
            train,
            heldout: order,
        })
    }

    /// Rolls out the frozen DQN with small epsilon jitter and labels every
    /// visited state with its greedy action.
    #[allow(clippy::too_many_arguments)]
    pub fn harvest(
        map: &WorldMap,
        sim: &SimConfig,
        planner: &PlannerConfig,
        tasks: &dyn TaskSampler,
        trunk: &DqnNetwork<f32>,
        d_max: f64,
        subgoal_spacing: f64,
        cfg: &DistillConfig,
    ) -> Result<Self> {
        let mut records = Vec::new();
        let mut act_rng = rng::stream(cfg.seed, "branch.harvest");
        for episode in 0..cfg.harvest_episodes {
            let mut task_rng = rng::substream(cfg.seed, "sim.harvest", episode);
            let (start, goal) = tasks.sample(map, sim, &mut task_rng)?;
            let planner_cfg = episode_planner(planner, cfg.seed, "planner.harvest", episode);
            let Some(subgoals) = plan_subgoals(map, start.position(), goal, &planner_cfg, subgoal_spacing)? else {
                log::warn!("harvest episode {episode}: planner found no path; skipped");
                continue;
            };
            let mut ep = Episode::new(map, sim, start, subgoals)?;
            rollout(&mut ep, trunk, d_max, cfg.harvest_epsilon, &mut act_rng, |frame, subgoal, q| {
                records.push(DistillRecord {
                    frame: frame.clone(),
                    subgoal,
                    label: q.greedy(),
                })
            })?;
        }
        Self::from_records(records, cfg.heldout_fraction, cfg.seed)
    }

    pub fn records(&self) -> &[DistillRecord] {
        &self.records
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train
    }

    pub fn heldout_indices(&self) -> &[usize] {
        &self.heldout
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Label counts per action.
    pub fn label_histogram(&self) -> [usize; 3] {
        let mut h = [0; 3];
        for r in &self.records {
            h[r.label.index()] += 1;
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_agreement: f64,
    pub heldout_agreement: f64,
}

pub struct DistillOutcome {
    pub branch: AttentionBranch<f32>,
    pub log: Vec<EpochLog>,
}

const FEATURE_LEN: usize = FEATURE_CHANNELS * FEATURE_SIDE * FEATURE_SIDE;

/// Trunk features of every record, computed once since the trunk is frozen.
fn feature_cache(trunk: &DqnNetwork<f32>, records: &[DistillRecord], d_max: f64) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(records.len() * FEATURE_LEN);
    for chunk in records.chunks(128) {
        let frames: Vec<&SemanticFrame> = chunk.iter().map(|r| &r.frame).collect();
        let subgoals: Vec<SubGoalPolar> = chunk.iter().map(|r| r.subgoal).collect();
        let (x, s) = encode_batch::<f32>(&frames, &subgoals, d_max)?;
        let (_, f) = trunk.infer(&x, &s)?;
        out.extend_from_slice(f.data());
    }
    Ok(out)
}

fn gather(features: &[f32], idx: &[usize]) -> Result<Tensor<f32>> {
    let mut data = Vec::with_capacity(idx.len() * FEATURE_LEN);
    for &i in idx {
        data.extend_from_slice(&features[i * FEATURE_LEN..(i + 1) * FEATURE_LEN]);
    }
    Tensor::from_vec(&[idx.len(), FEATURE_CHANNELS, FEATURE_SIDE, FEATURE_SIDE], data)
}

/// Fraction of `idx` where the branch argmax equals the DQN label.
fn agreement(
    branch: &AttentionBranch<f32>,
    features: &[f32],
    records: &[DistillRecord],
    idx: &[usize],
) -> Result<f64> {
    if idx.is_empty() {
        return Ok(f64::NAN);
    }
    let mut hits = 0usize;
    for chunk in idx.chunks(256) {
        let out = branch.infer(&gather(features, chunk)?)?;
        for (&i, p) in chunk.iter().zip(out.probs.data().chunks_exact(3)) {
            hits += usize::from(argmax(p) == Some(records[i].label.index()));
        }
    }
    Ok(hits as f64 / idx.len() as f64)
}

/// Trains a fresh branch on the frozen trunk's labels.
pub fn finetune(
    trunk: &DqnNetwork<f32>,
    dataset: &DistillDataset,
    d_max: f64,
    cfg: &DistillConfig,
    mut progress: impl FnMut(&EpochLog),
) -> Result<DistillOutcome> {
    if !trunk.is_frozen() {
        return Err(Error::NotFrozen("distill the attention branch"));
    }
    if dataset.train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate()?;
    let features = feature_cache(trunk, &dataset.records, d_max)?;
    let mut branch = AttentionBranch::new(&mut rng::stream(cfg.seed, "init.branch"));
    let mut optimizer = OptimizerState::sgd(cfg.lr, cfg.momentum)?;
    let mut shuffle_rng = rng::stream(cfg.seed, "branch.shuffle");
    let mut order = dataset.train.clone();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        optimizer.set_lr(lr)?;
        order.shuffle(&mut shuffle_rng);
        let (mut loss_sum, mut hits) = (0.0f64, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let out = branch.forward(&gather(&features, batch)?)?;
            let n = batch.len() as f32;
            let mut dlogits = Tensor::zeros(&[batch.len(), 3]);
            for ((&i, p), g) in batch
                .iter()
                .zip(out.probs.data().chunks_exact(3))
                .zip(dlogits.data_mut().chunks_exact_mut(3))
            {
                let label = dataset.records[i].label.index();
                loss_sum -= (p[label].max(crate::nn::LOG_FLOOR as f32) as f64).ln();
                hits += usize::from(argmax(p) == Some(label));
                for (k, (gk, &pk)) in g.iter_mut().zip(p).enumerate() {
                    *gk = (pk - if k == label { 1.0 } else { 0.0 }) / n;
                }
            }
            branch.zero_grad();
            branch.backward(&dlogits)?;
            optimizer.step(&mut branch.named_params_mut())?;
        }
        let entry = EpochLog {
            epoch,
            lr,
            train_loss: loss_sum / order.len() as f64,
            train_agreement: hits as f64 / order.len() as f64,
            heldout_agreement: agreement(&branch, &features, &dataset.records, &dataset.heldout)?,
        };
        progress(&entry);
        log.push(entry);
    }
    Ok(DistillOutcome { branch, log })
}

/// Branch argmax agreement with the DQN argmax over arbitrary states.
pub fn agreement_on_states(
    trunk: &DqnNetwork<f32>,
    branch: &AttentionBranch<f32>,
    states: &[(SemanticFrame, SubGoalPolar)],
    d_max: f64,
) -> Result<f64> {
    let mut hits = 0usize;
    for chunk in states.chunks(128) {
        let frames: Vec<&SemanticFrame> = chunk.iter().map(|s| &s.0).collect();
        let subgoals: Vec<SubGoalPolar> = chunk.iter().map(|s| s.1).collect();
        let (x, s) = encode_batch::<f32>(&frames, &subgoals, d_max)?;
        let (q, f) = trunk.infer(&x, &s)?;
        let out = branch.infer(&f)?;
        for (qr, pr) in q.data().chunks_exact(3).zip(out.probs.data().chunks_exact(3)) {
            let label = one_hot_from_q(&QValues(qr.try_into().expect("three actions")));
            hits += usize::from(argmax(pr) == argmax(&label));
        }
    }
    Ok(hits as f64 / states.len().max(1) as f64)
}
