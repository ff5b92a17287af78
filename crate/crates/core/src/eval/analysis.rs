use super::curves::EvalState;
use crate::agent::DqnNetwork;
use crate::branch::{explain_batch, AttentionBranch};
use crate::error::Result;
use crate::saliency::{AttentionMap, SaliencyMap};
use crate::sim::{Action, SemanticFrame, SubGoalPolar};

/// Per-action means of one-hot frames and attention maps.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionAverage {
    pub count: usize,
    /// One-hot channel means, `[3, H, W]` row-major.
    pub frame: Vec<f32>,
    /// Pixel-wise mean of the normalized attention maps.
    pub attention: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionAverages {
    pub width: usize,
    pub height: usize,
    /// Indexed by action; `None` when no state chose that action.
    pub per_action: [Option<ActionAverage>; 3],
}

impl ActionAverages {
    pub fn counts(&self) -> [usize; 3] {
        std::array::from_fn(|a| self.per_action[a].as_ref().map_or(0, |p| p.count))
    }

    /// Mean attention map of `action`, renormalized to `[0, 1]`.
    pub fn attention_map(&self, action: Action) -> Option<SaliencyMap> {
        let avg = self.per_action[action.index()].as_ref()?;
        SaliencyMap::normalized(self.width, self.height, &avg.attention).ok()
    }

    /// Mass-weighted mean column of the raw averaged map.
    pub fn mean_column(&self, action: Action) -> Option<f64> {
        let avg = self.per_action[action.index()].as_ref()?;
        let (mut mass, mut moment) = (0.0f64, 0.0f64);
        for row in avg.attention.chunks_exact(self.width) {
            for (c, &v) in row.iter().enumerate() {
                mass += v as f64;
                moment += v as f64 * c as f64;
            }
        }
        Some(if mass > 0.0 {
            moment / mass
        } else {
            (self.width as f64 - 1.0) / 2.0
        })
    }
}

/// Partitions states by the trunk's greedy action and averages frames and
/// attention maps within each partition.
pub fn averaged_attention_per_action(
    trunk: &DqnNetwork<f32>,
    branch: &AttentionBranch<f32>,
    states: &[EvalState],
    d_max: f64,
) -> Result<ActionAverages> {
    let (width, height) = states
        .first()
        .map_or((64, 64), |s| (s.frame.width(), s.frame.height()));
    let area = width * height;
    let mut sums: [(usize, Vec<f64>, Vec<f64>); 3] =
        std::array::from_fn(|_| (0, vec![0.0; 3 * area], vec![0.0; area]));
    let mut onehot = vec![0.0f32; 3 * area];
    for chunk in states.chunks(64) {
        let frames: Vec<&SemanticFrame> = chunk.iter().map(|s| &s.frame).collect();
        let subgoals: Vec<SubGoalPolar> = chunk.iter().map(|s| s.subgoal).collect();
        for (state, ex) in chunk.iter().zip(explain_batch(trunk, branch, &frames, &subgoals, d_max)?) {
            let slot = &mut sums[ex.q.greedy().index()];
            slot.0 += 1;
            state.frame.write_one_hot(0.0, 1.0, &mut onehot);
            for (s, &v) in slot.1.iter_mut().zip(&onehot) {
                *s += v as f64;
            }
            for (s, &v) in slot.2.iter_mut().zip(ex.map.values()) {
                *s += v as f64;
            }
        }
    }
    let per_action = sums.map(|(count, frame, attention)| {
        (count > 0).then(|| ActionAverage {
            count,
            frame: frame.iter().map(|&v| (v / count as f64) as f32).collect(),
            attention: attention.iter().map(|&v| (v / count as f64) as f32).collect(),
        })
    });
    Ok(ActionAverages {
        width,
        height,
        per_action,
    })
}

/// Attention maps of one frame under varied sub-goal angles at a fixed
/// distance.
pub fn angle_sweep(
    trunk: &DqnNetwork<f32>,
    branch: &AttentionBranch<f32>,
    frame: &SemanticFrame,
    angles: &[f64],
    distance: f64,
    d_max: f64,
) -> Result<Vec<AttentionMap>> {
    let frames = vec![frame; angles.len()];
    let subgoals: Vec<SubGoalPolar> = angles.iter().map(|&angle| SubGoalPolar { angle, distance }).collect();
    Ok(explain_batch(trunk, branch, &frames, &subgoals, d_max)?
        .into_iter()
        .map(|e| e.map)
        .collect())
}

/// The sweep used for the figure: front, +pi/4 and -pi/4 at 1 m.
pub const SWEEP_ANGLES: [f64; 3] = [0.0, std::f64::consts::FRAC_PI_4, -std::f64::consts::FRAC_PI_4];
pub const SWEEP_DISTANCE: f64 = 1.0;
