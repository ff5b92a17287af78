use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{argmax, Layer, LayerSpec, Parameterized, Scalar, Tensor};
use crate::sim::{Action, Class, SemanticFrame, SubGoalPolar};

/// Input frame side length.
pub const FRAME_SIDE: usize = 64;
/// Channels of the trunk feature map the attention branch attaches to.
pub const FEATURE_CHANNELS: usize = 32;
/// Spatial side of the trunk feature map for a 64 x 64 input.
pub const FEATURE_SIDE: usize = 4;
/// Spatial side of the first conv output, where the sub-goal maps are joined.
pub const EMBED_SIDE: usize = 15;

/// Q-values in action order `[forward, turn_left, turn_right]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QValues(pub [f32; 3]);

impl QValues {
    /// Greedy action, lowest index winning ties.
    pub fn greedy(&self) -> Action {
        Action::try_from(argmax(&self.0).unwrap_or(0)).expect("three actions")
    }
}

/// Encodes frames as one-hot `[N, 3, 64, 64]` and sub-goals as `[N, 2]`
/// (angle / pi, distance clamped to `d_max` then / d_max).
pub fn encode_batch<T: Scalar>(frames: &[&SemanticFrame], subgoals: &[SubGoalPolar], d_max: f64) -> Result<(Tensor<T>, Tensor<T>)> {
    if frames.len() != subgoals.len() || frames.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} frames vs {} sub-goals",
            frames.len(),
            subgoals.len()
        )));
    }
    let n = frames.len();
    let item = Class::COUNT * FRAME_SIDE * FRAME_SIDE;
    let mut x = Tensor::zeros(&[n, Class::COUNT, FRAME_SIDE, FRAME_SIDE]);
    for (i, f) in frames.iter().enumerate() {
        if f.width() != FRAME_SIDE || f.height() != FRAME_SIDE {
            return Err(Error::shape(
                "dqn.input",
                format!("frame is {}x{}, expected {FRAME_SIDE}x{FRAME_SIDE}", f.width(), f.height()),
            ));
        }
        f.write_one_hot(T::zero(), T::one(), &mut x.data_mut()[i * item..(i + 1) * item]);
    }
    let s = encode_subgoals(subgoals, d_max);
    Ok((x, s))
}

pub fn encode_subgoals<T: Scalar>(subgoals: &[SubGoalPolar], d_max: f64) -> Tensor<T> {
    let mut s = Tensor::zeros(&[subgoals.len(), 2]);
    for (dst, g) in s.data_mut().chunks_exact_mut(2).zip(subgoals) {
        dst[0] = T::of(g.angle / PI);
        dst[1] = T::of(g.distance.clamp(0.0, d_max) / d_max);
    }
    s
}

/// ReLU outputs of the three trunk convolutions plus the Q-values.
#[derive(Debug, Clone)]
pub struct TrunkActivations<T: Scalar = f32> {
    pub conv: [Tensor<T>; 3],
    pub q: Tensor<T>,
}

/// Value network: conv trunk with a sub-goal embedding joined after the
/// first convolution, and a fully connected Q head.
#[derive(Debug, Clone)]
pub struct DqnNetwork<T: Scalar = f32> {
    conv1: Layer<T>,
    relu1: Layer<T>,
    embed_maps: Layer<T>,
    embed: Layer<T>,
    embed_act: Layer<T>,
    concat: Layer<T>,
    conv2: Layer<T>,
    relu2: Layer<T>,
    conv3: Layer<T>,
    relu3: Layer<T>,
    fc1: Layer<T>,
    relu4: Layer<T>,
    fc2: Layer<T>,
    frozen: bool,
}

fn specs() -> [(&'static str, LayerSpec); 13] {
    let conv = |i, o, k, s| LayerSpec::Conv2d {
        in_channels: i,
        out_channels: o,
        kernel: k,
        stride: s,
        padding: 0,
    };
    [
        ("conv1", conv(3, 16, 8, 4)),
        ("relu1", LayerSpec::Relu),
        (
            "embed_maps",
            LayerSpec::BroadcastScalars {
                height: EMBED_SIDE,
                width: EMBED_SIDE,
            },
        ),
        ("embed", conv(2, 2, 1, 1)),
        ("embed_act", LayerSpec::Sigmoid),
        ("concat", LayerSpec::ConcatChannels),
        ("conv2", conv(18, 32, 4, 2)),
        ("relu2", LayerSpec::Relu),
        ("conv3", conv(32, FEATURE_CHANNELS, 3, 1)),
        ("relu3", LayerSpec::Relu),
        (
            "fc1",
            LayerSpec::FullyConnected {
                inputs: FEATURE_CHANNELS * FEATURE_SIDE * FEATURE_SIDE,
                outputs: 256,
            },
        ),
        ("relu4", LayerSpec::Relu),
        ("fc2", LayerSpec::FullyConnected { inputs: 256, outputs: 3 }),
    ]
}

impl<T: Scalar> DqnNetwork<T> {
    fn build(mut make: impl FnMut(&'static str, LayerSpec) -> Layer<T>) -> Self {
        let [conv1, relu1, embed_maps, embed, embed_act, concat, conv2, relu2, conv3, relu3, fc1, relu4, fc2] =
            specs().map(|(name, spec)| make(name, spec));
        Self {
            conv1: conv1.without_input_grad(),
            relu1,
            embed_maps,
            embed,
            embed_act,
            concat,
            conv2,
            relu2,
            conv3,
            relu3,
            fc1,
            relu4,
            fc2,
            frozen: false,
        }
    }

    /// He-uniform initialised network.
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::build(|name, spec| Layer::new(name, spec, rng))
    }

    pub fn zeroed() -> Self {
        Self::build(Layer::zeroed)
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Freezes the parameters; further gradient writes are rejected.
    pub fn freeze(&mut self) {
        self.frozen = true;
        self.clear_caches();
    }

    pub(crate) fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    fn layers(&self) -> [&Layer<T>; 13] {
        [
            &self.conv1,
            &self.relu1,
            &self.embed_maps,
            &self.embed,
            &self.embed_act,
            &self.concat,
            &self.conv2,
            &self.relu2,
            &self.conv3,
            &self.relu3,
            &self.fc1,
            &self.relu4,
            &self.fc2,
        ]
    }

    fn layers_mut(&mut self) -> [&mut Layer<T>; 13] {
        [
            &mut self.conv1,
            &mut self.relu1,
            &mut self.embed_maps,
            &mut self.embed,
            &mut self.embed_act,
            &mut self.concat,
            &mut self.conv2,
            &mut self.relu2,
            &mut self.conv3,
            &mut self.relu3,
            &mut self.fc1,
            &mut self.relu4,
            &mut self.fc2,
        ]
    }

    fn clear_caches(&mut self) {
        for l in self.layers_mut() {
            l.clear_cache();
        }
    }

    /// Training-mode forward; returns `(Q [N,3], F [N,32,4,4])`.
    pub fn forward(&mut self, frames: &Tensor<T>, subgoals: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        if self.frozen {
            return Err(Error::Frozen("run a training-mode forward pass"));
        }
        let h = self.conv1.forward(&[frames])?;
        let h = self.relu1.forward(&[&h])?;
        let e = self.embed_maps.forward(&[subgoals])?;
        let e = self.embed.forward(&[&e])?;
        let e = self.embed_act.forward(&[&e])?;
        let h = self.concat.forward(&[&h, &e])?;
        let h = self.conv2.forward(&[&h])?;
        let h = self.relu2.forward(&[&h])?;
        let h = self.conv3.forward(&[&h])?;
        let features = self.relu3.forward(&[&h])?;
        let h = self.fc1.forward(&[&features])?;
        let h = self.relu4.forward(&[&h])?;
        let q = self.fc2.forward(&[&h])?;
        Ok((q, features))
    }

    /// Inference-mode forward; returns `(Q, F)` and touches no state.
    pub fn infer(&self, frames: &Tensor<T>, subgoals: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let acts = self.activations(frames, subgoals)?;
        let [_, _, features] = acts.conv;
        Ok((acts.q, features))
    }

    /// Inference-mode forward keeping every trunk conv activation.
    pub fn activations(&self, frames: &Tensor<T>, subgoals: &Tensor<T>) -> Result<TrunkActivations<T>> {
        let c1 = self.relu1.infer(&[&self.conv1.infer(&[frames])?])?;
        let e = self.embed_maps.infer(&[subgoals])?;
        let e = self.embed_act.infer(&[&self.embed.infer(&[&e])?])?;
        let h = self.concat.infer(&[&c1, &e])?;
        let c2 = self.relu2.infer(&[&self.conv2.infer(&[&h])?])?;
        let c3 = self.relu3.infer(&[&self.conv3.infer(&[&c2])?])?;
        let h = self.relu4.infer(&[&self.fc1.infer(&[&c3])?])?;
        let q = self.fc2.infer(&[&h])?;
        Ok(TrunkActivations { conv: [c1, c2, c3], q })
    }

    /// Sub-goal embedding maps (sigmoid outputs, `[N, 2, 15, 15]`).
    pub fn embedding(&self, subgoals: &Tensor<T>) -> Result<Tensor<T>> {
        let e = self.embed_maps.infer(&[subgoals])?;
        self.embed_act.infer(&[&self.embed.infer(&[&e])?])
    }

    /// Backpropagates `dq` (`[N, 3]`) from the last training-mode forward,
    /// accumulating parameter gradients.
    pub fn backward(&mut self, dq: &Tensor<T>) -> Result<()> {
        if self.frozen {
            return Err(Error::Frozen("write gradients"));
        }
        let g = self.fc2.backward(dq)?.remove(0);
        let g = self.relu4.backward(&g)?.remove(0);
        let g = self.fc1.backward(&g)?.remove(0);
        let g = self.relu3.backward(&g)?.remove(0);
        let g = self.conv3.backward(&g)?.remove(0);
        let g = self.relu2.backward(&g)?.remove(0);
        let g = self.conv2.backward(&g)?.remove(0);
        let mut parts = self.concat.backward(&g)?;
        let ge = parts.pop().expect("two inputs");
        let gh = parts.pop().expect("two inputs");
        let ge = self.embed_act.backward(&ge)?.remove(0);
        let ge = self.embed.backward(&ge)?.remove(0);
        self.embed_maps.backward(&ge)?;
        let gh = self.relu1.backward(&gh)?.remove(0);
        self.conv1.backward(&gh)?;
        Ok(())
    }

    /// Single-state Q-values and feature map.
    pub fn forward_q(&self, frame: &SemanticFrame, subgoal: SubGoalPolar, d_max: f64) -> Result<(QValues, Tensor<T>)> {
        let (x, s) = encode_batch::<T>(&[frame], &[subgoal], d_max)?;
        let (q, f) = self.infer(&x, &s)?;
        let d = q.data();
        Ok((QValues([d[0].as_f64() as f32, d[1].as_f64() as f32, d[2].as_f64() as f32]), f))
    }

    /// Copies parameters from `other` (target-network sync).
    pub fn copy_params_from(&mut self, other: &Self) {
        for (dst, src) in self.layers_mut().into_iter().zip(other.layers()) {
            for (d, s) in dst.params_mut().iter_mut().zip(src.params()) {
                d.data_mut().copy_from_slice(s.data());
            }
        }
    }

    /// Same network in another precision (gradients and caches reset).
    pub fn cast<U: Scalar>(&self) -> DqnNetwork<U> {
        let mut out = DqnNetwork::<U>::zeroed();
        for (dst, src) in out.layers_mut().into_iter().zip(self.layers()) {
            for (d, s) in dst.params_mut().iter_mut().zip(src.params()) {
                *d = s.cast();
            }
        }
        out.frozen = self.frozen;
        out
    }
}

impl<T: Scalar> Parameterized<T> for DqnNetwork<T> {
    fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers().into_iter().flat_map(|l| l.named_params()).collect()
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        self.layers_mut().into_iter().flat_map(|l| l.named_params_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::sim::{render, RobotPose, SimConfig, WorldMap};

    fn sample_state() -> (SemanticFrame, SubGoalPolar) {
        let map = WorldMap::bundled();
        let frame = render(&RobotPose::new(1.0, 4.0, 0.3), &map, &SimConfig::default().camera).unwrap();
        (frame, SubGoalPolar { angle: 0.4, distance: 1.3 })
    }

    #[test]
    fn feature_map_is_four_by_four() {
        let net = DqnNetwork::<f32>::new(&mut rng::stream(0, "agent"));
        let (frame, sg) = sample_state();
        let (q, f) = net.forward_q(&frame, sg, 5.0).unwrap();
        assert_eq!(f.shape(), &[1, 32, 4, 4]);
        assert!(q.0.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = DqnNetwork::<f32>::zeroed();
        let (frame, sg) = sample_state();
        assert_eq!(net.forward_q(&frame, sg, 5.0).unwrap().0, QValues([0.0; 3]));
    }

    #[test]
    fn inference_is_deterministic_and_ignores_grad_buffers() {
        let mut net = DqnNetwork::<f32>::new(&mut rng::stream(1, "agent"));
        let (frame, sg) = sample_state();
        let a = net.forward_q(&frame, sg, 5.0).unwrap().0;
        for (_, p) in net.named_params_mut() {
            p.grad_mut().fill(123.0);
        }
        let b = net.forward_q(&frame, sg, 5.0).unwrap().0;
        assert_eq!(a.0.map(f32::to_bits), b.0.map(f32::to_bits));
    }

    #[test]
    fn training_forward_matches_inference() {
        let mut net = DqnNetwork::<f32>::new(&mut rng::stream(2, "agent"));
        let (frame, sg) = sample_state();
        let (x, s) = encode_batch::<f32>(&[&frame, &frame], &[sg, sg], 5.0).unwrap();
        let (q1, _) = net.forward(&x, &s).unwrap();
        let (q2, _) = net.infer(&x, &s).unwrap();
        assert_eq!(q1.data(), q2.data());
    }

    #[test]
    fn frozen_network_rejects_gradients() {
        let mut net = DqnNetwork::<f32>::new(&mut rng::stream(3, "agent"));
        let (frame, sg) = sample_state();
        let (x, s) = encode_batch::<f32>(&[&frame], &[sg], 5.0).unwrap();
        net.forward(&x, &s).unwrap();
        net.freeze();
        assert!(matches!(net.backward(&Tensor::zeros(&[1, 3])), Err(Error::Frozen(_))));
        assert!(matches!(net.forward(&x, &s), Err(Error::Frozen(_))));
        assert!(net.infer(&x, &s).is_ok());
    }

    #[test]
    fn wrong_frame_size_rejected() {
        let frame = SemanticFrame::filled(32, 32, Class::Floor);
        let sg = SubGoalPolar { angle: 0.0, distance: 1.0 };
        assert!(encode_batch::<f32>(&[&frame], &[sg], 5.0).is_err());
    }

    #[test]
    fn greedy_breaks_ties_low() {
        assert_eq!(QValues([1.0, 5.0, 2.0]).greedy(), Action::TurnLeft);
        assert_eq!(QValues([3.0, 3.0, 1.0]).greedy(), Action::Forward);
    }
}
