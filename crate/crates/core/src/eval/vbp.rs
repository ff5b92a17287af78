use crate::agent::{encode_batch, DqnNetwork, FRAME_SIDE};
use crate::error::Result;
use crate::saliency::{upsample_bilinear, SaliencyMap};
use crate::sim::{SemanticFrame, SubGoalPolar};

/// Channel mean of one item of a `[N, C, S, S]` activation.
fn channel_mean(item: &[f32], channels: usize) -> Vec<f32> {
    let area = item.len() / channels;
    let mut mean = vec![0.0f32; area];
    for plane in item.chunks_exact(area) {
        for (m, &v) in mean.iter_mut().zip(plane) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= channels as f32);
    mean
}

/// Combines per-layer channel means, shallowest first, into one map at
/// `out_side` resolution.
pub fn visual_backprop_from_means(means: &[(Vec<f32>, usize)], out_side: usize) -> Result<SaliencyMap> {
    let mut iter = means.iter().rev();
    let (deepest, mut side) = iter.next().map(|(m, s)| (m.clone(), *s)).expect("at least one layer");
    let mut acc = deepest;
    for (mean, s) in iter {
        acc = upsample_bilinear(&acc, side, side, *s, *s);
        for (a, &m) in acc.iter_mut().zip(mean) {
            *a *= m;
        }
        side = *s;
    }
    SaliencyMap::normalized(out_side, out_side, &upsample_bilinear(&acc, side, side, out_side, out_side))
}

/// Bottom-up saliency from the trunk's three conv activations.
pub fn visual_backprop_batch(
    trunk: &DqnNetwork<f32>,
    frames: &[&SemanticFrame],
    subgoals: &[SubGoalPolar],
    d_max: f64,
) -> Result<Vec<SaliencyMap>> {
    let (x, s) = encode_batch::<f32>(frames, subgoals, d_max)?;
    let acts = trunk.activations(&x, &s)?;
    (0..frames.len())
        .map(|n| {
            let means: Vec<(Vec<f32>, usize)> = acts
                .conv
                .iter()
                .map(|t| (channel_mean(t.item(n), t.shape()[1]), t.shape()[2]))
                .collect();
            visual_backprop_from_means(&means, FRAME_SIDE)
        })
        .collect()
}

pub fn visual_backprop(
    trunk: &DqnNetwork<f32>,
    frame: &SemanticFrame,
    subgoal: SubGoalPolar,
    d_max: f64,
) -> Result<SaliencyMap> {
    Ok(visual_backprop_batch(trunk, &[frame], &[subgoal], d_max)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_single_layer_is_zero_map() {
        let m = visual_backprop_from_means(&[(vec![1.0; 16], 4)], 64).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_deepest_layer_absorbs_everything() {
        let shallow: Vec<f32> = (0..36).map(|i| i as f32).collect();
        let m = visual_backprop_from_means(&[(shallow, 6), (vec![0.0; 16], 4)], 64).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_has_frame_resolution() {
        let shallow: Vec<f32> = (0..225).map(|i| (i % 7) as f32).collect();
        let m = visual_backprop_from_means(&[(shallow, 15), (vec![1.0; 16], 4)], 64).unwrap();
        assert_eq!((m.width(), m.height()), (64, 64));
        assert_eq!(m.values().iter().copied().fold(0.0, f32::max), 1.0);
    }
}
