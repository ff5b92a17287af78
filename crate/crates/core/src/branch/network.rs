use rand::Rng;

use crate::agent::{encode_batch, DqnNetwork, QValues, FEATURE_CHANNELS, FRAME_SIDE};
use crate::error::{Error, Result};
use crate::nn::{cross_entropy, one_hot_argmax, softmax_into, Layer, LayerSpec, Parameterized, Scalar, Tensor};
use crate::saliency::{upsample_bilinear, AttentionMap};
use crate::sim::{Action, SemanticFrame, SubGoalPolar};

/// Forward products of the branch for a batch of trunk features.
#[derive(Debug, Clone)]
pub struct BranchOutput<T: Scalar = f32> {
    /// GAP of the action maps, `[N, 3]`.
    pub logits: Tensor<T>,
    /// Softmax of the logits, `[N, 3]`.
    pub probs: Tensor<T>,
    /// One map per action, `[N, 3, 4, 4]`.
    pub maps: Tensor<T>,
}

/// Explanation head attached after the trunk's last conv layer.
#[derive(Debug, Clone)]
pub struct AttentionBranch<T: Scalar = f32> {
    conv: Layer<T>,
    relu: Layer<T>,
    maps: Layer<T>,
    gap: Layer<T>,
}

impl<T: Scalar> AttentionBranch<T> {
    fn build(mut make: impl FnMut(&str, LayerSpec) -> Layer<T>) -> Self {
        let conv = make(
            "conv",
            LayerSpec::Conv2d {
                in_channels: FEATURE_CHANNELS,
                out_channels: FEATURE_CHANNELS,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
        )
        .without_input_grad();
        let maps = make(
            "maps",
            LayerSpec::Conv2d {
                in_channels: FEATURE_CHANNELS,
                out_channels: Action::COUNT,
                kernel: 1,
                stride: 1,
                padding: 0,
            },
        );
        Self {
            conv,
            relu: Layer::zeroed("relu", LayerSpec::Relu),
            maps,
            gap: Layer::zeroed("gap", LayerSpec::GlobalAvgPool),
        }
    }

    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::build(|name, spec| Layer::new(name, spec, rng))
    }

    pub fn zeroed() -> Self {
        Self::build(|name, spec| Layer::zeroed(name, spec))
    }

    fn finish(logits: Tensor<T>, maps: Tensor<T>) -> BranchOutput<T> {
        let mut probs = Tensor::zeros(logits.shape());
        for (p, l) in probs
            .data_mut()
            .chunks_exact_mut(Action::COUNT)
            .zip(logits.data().chunks_exact(Action::COUNT))
        {
            softmax_into(l, p);
        }
        BranchOutput { logits, probs, maps }
    }

    /// Training-mode forward on trunk features `[N, 32, 4, 4]`.
    pub fn forward(&mut self, features: &Tensor<T>) -> Result<BranchOutput<T>> {
        let h = self.conv.forward(&[features])?;
        let h = self.relu.forward(&[&h])?;
        let maps = self.maps.forward(&[&h])?;
        let logits = self.gap.forward(&[&maps])?;
        Ok(Self::finish(logits, maps))
    }

    pub fn infer(&self, features: &Tensor<T>) -> Result<BranchOutput<T>> {
        let h = self.relu.infer(&[&self.conv.infer(&[features])?])?;
        let maps = self.maps.infer(&[&h])?;
        let logits = self.gap.infer(&[&maps])?;
        Ok(Self::finish(logits, maps))
    }

    /// Backpropagates a gradient with respect to the logits.
    pub fn backward(&mut self, dlogits: &Tensor<T>) -> Result<()> {
        let g = self.gap.backward(dlogits)?;
        let g = self.maps.backward(&g[0])?;
        let g = self.relu.backward(&g[0])?;
        self.conv.backward(&g[0])?;
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> AttentionBranch<U> {
        let mut out = AttentionBranch::<U>::zeroed();
        for ((_, dst), (_, src)) in out.named_params_mut().into_iter().zip(self.named_params()) {
            *dst = src.cast();
        }
        out
    }
}

impl<T: Scalar> Parameterized<T> for AttentionBranch<T> {
    fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        self.conv.named_params().chain(self.maps.named_params()).collect()
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        self.conv
            .named_params_mut()
            .chain(self.maps.named_params_mut())
            .collect()
    }
}

/// The one-hot operator applied to Q-values: 1 at the argmax, lowest index
/// on ties.
pub fn one_hot_from_q(q: &QValues) -> [f32; 3] {
    one_hot_argmax(&q.0).try_into().expect("three actions")
}

/// Cross-entropy between the branch distribution and the frozen DQN's
/// one-hot greedy action.
pub fn branch_loss(
    frame: &SemanticFrame,
    subgoal: SubGoalPolar,
    trunk: &DqnNetwork<f32>,
    branch: &AttentionBranch<f32>,
    d_max: f64,
) -> Result<f64> {
    if !trunk.is_frozen() {
        return Err(Error::NotFrozen("compute the branch loss"));
    }
    let (q, features) = trunk.forward_q(frame, subgoal, d_max)?;
    let out = branch.infer(&features)?;
    Ok(cross_entropy(out.probs.data(), &one_hot_from_q(&q))? as f64)
}

/// Everything one forward pass yields for a state.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub map: AttentionMap,
    pub probs: [f32; 3],
    pub q: QValues,
}

impl Explanation {
    pub fn branch_action(&self) -> Action {
        QValues(self.probs).greedy()
    }
}

/// Mean over the action maps, upsampled to frame size and normalized.
pub fn channel_mean_map(maps: &[f32], side: usize, out_side: usize) -> Result<AttentionMap> {
    let area = side * side;
    let mut mean = vec![0.0f32; area];
    for channel in maps.chunks_exact(area) {
        for (m, &v) in mean.iter_mut().zip(channel) {
            *m += v;
        }
    }
    let k = (maps.len() / area) as f32;
    mean.iter_mut().for_each(|m| *m /= k);
    AttentionMap::normalized(out_side, out_side, &upsample_bilinear(&mean, side, side, out_side, out_side))
}

/// Q-values, branch probabilities and attention maps for a batch of states.
pub fn explain_batch(
    trunk: &DqnNetwork<f32>,
    branch: &AttentionBranch<f32>,
    frames: &[&SemanticFrame],
    subgoals: &[SubGoalPolar],
    d_max: f64,
) -> Result<Vec<Explanation>> {
    let (x, s) = encode_batch::<f32>(frames, subgoals, d_max)?;
    let (q, features) = trunk.infer(&x, &s)?;
    let out = branch.infer(&features)?;
    let side = out.maps.shape()[2];
    let per_item = out.maps.item_len();
    (0..frames.len())
        .map(|n| {
            Ok(Explanation {
                map: channel_mean_map(&out.maps.data()[n * per_item..(n + 1) * per_item], side, FRAME_SIDE)?,
                probs: out.probs.data()[n * 3..n * 3 + 3].try_into().expect("three actions"),
                q: QValues(q.data()[n * 3..n * 3 + 3].try_into().expect("three actions")),
            })
        })
        .collect()
}

/// Attention map for one state, computed in the same pass as Q and p.
pub fn attention_map(
    trunk: &DqnNetwork<f32>,
    branch: &AttentionBranch<f32>,
    frame: &SemanticFrame,
    subgoal: SubGoalPolar,
    d_max: f64,
) -> Result<Explanation> {
    Ok(explain_batch(trunk, branch, &[frame], &[subgoal], d_max)?.remove(0))
}
