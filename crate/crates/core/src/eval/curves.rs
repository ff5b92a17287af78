use rand::Rng;

use crate::agent::{encode_batch, DqnNetwork};
use crate::error::{Error, Result};
use crate::nn::argmax;
use crate::rng;
use crate::saliency::SaliencyMap;
use crate::sim::{Class, SemanticFrame, SubGoalPolar};

/// A state used for explanation metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalState {
    pub frame: SemanticFrame,
    pub subgoal: SubGoalPolar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricCurve {
    pub fractions: Vec<f64>,
    pub accuracy: Vec<f64>,
    pub auc: f64,
}

impl MetricCurve {
    pub fn new(fractions: Vec<f64>, accuracy: Vec<f64>) -> Self {
        let auc = trapezoid(&fractions, &accuracy);
        Self {
            fractions,
            accuracy,
            auc,
        }
    }
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    /// Top-ranked pixels are replaced by floor.
    Deletion,
    /// Top-ranked pixels are revealed on an all-floor frame.
    Insertion,
}

const CHUNK: usize = 64;

/// Greedy trunk actions for a batch of states.
fn actions(trunk: &DqnNetwork<f32>, frames: &[&SemanticFrame], subgoals: &[SubGoalPolar], d_max: f64) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(frames.len());
    for (f, s) in frames.chunks(CHUNK).zip(subgoals.chunks(CHUNK)) {
        let (x, sg) = encode_batch::<f32>(f, s, d_max)?;
        let (q, _) = trunk.infer(&x, &sg)?;
        out.extend(q.data().chunks_exact(3).map(|r| argmax(r).expect("three actions")));
    }
    Ok(out)
}

fn perturbed(frame: &SemanticFrame, order: &[usize], count: usize, mode: Perturbation) -> SemanticFrame {
    match mode {
        Perturbation::Deletion => {
            let mut f = frame.clone();
            for &i in &order[..count] {
                f.set_pixel(i, Class::Floor);
            }
            f
        }
        Perturbation::Insertion => {
            let mut f = SemanticFrame::filled(frame.width(), frame.height(), Class::Floor);
            for &i in &order[..count] {
                f.set_pixel(i, Class::from_index(frame.classes()[i]).expect("valid class"));
            }
            f
        }
    }
}

/// Agreement with the unmodified-state DQN action as saliency-ranked pixels
/// are deleted or inserted, at `steps + 1` evenly spaced fractions.
pub fn perturbation_curve(
    trunk: &DqnNetwork<f32>,
    states: &[EvalState],
    maps: &[SaliencyMap],
    steps: usize,
    d_max: f64,
    mode: Perturbation,
) -> Result<MetricCurve> {
    if states.len() != maps.len() || states.is_empty() || steps == 0 {
        return Err(Error::InvalidArgument(format!(
            "{} states, {} maps, {steps} steps",
            states.len(),
            maps.len()
        )));
    }
    for (s, m) in states.iter().zip(maps) {
        if (s.frame.width(), s.frame.height()) != (m.width(), m.height()) {
            return Err(Error::InvalidArgument(format!(
                "saliency {}x{} does not match frame {}x{}",
                m.width(),
                m.height(),
                s.frame.width(),
                s.frame.height()
            )));
        }
    }
    let orders: Vec<Vec<usize>> = maps.iter().map(SaliencyMap::ranking).collect();
    let subgoals: Vec<SubGoalPolar> = states.iter().map(|s| s.subgoal).collect();
    let originals: Vec<&SemanticFrame> = states.iter().map(|s| &s.frame).collect();
    let reference = actions(trunk, &originals, &subgoals, d_max)?;

    let mut fractions = Vec::with_capacity(steps + 1);
    let mut accuracy = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let f = i as f64 / steps as f64;
        let pixels = states[0].frame.classes().len();
        let count = ((f * pixels as f64).round() as usize).min(pixels);
        let modified: Vec<SemanticFrame> = states
            .iter()
            .zip(&orders)
            .map(|(s, o)| perturbed(&s.frame, o, count, mode))
            .collect();
        let refs: Vec<&SemanticFrame> = modified.iter().collect();
        let got = actions(trunk, &refs, &subgoals, d_max)?;
        let hits = got.iter().zip(&reference).filter(|(a, b)| a == b).count();
        fractions.push(f);
        accuracy.push(hits as f64 / states.len() as f64);
    }
    Ok(MetricCurve::new(fractions, accuracy))
}

pub fn deletion_curve(
    trunk: &DqnNetwork<f32>,
    states: &[EvalState],
    maps: &[SaliencyMap],
    steps: usize,
    d_max: f64,
) -> Result<MetricCurve> {
    perturbation_curve(trunk, states, maps, steps, d_max, Perturbation::Deletion)
}

pub fn insertion_curve(
    trunk: &DqnNetwork<f32>,
    states: &[EvalState],
    maps: &[SaliencyMap],
    steps: usize,
    d_max: f64,
) -> Result<MetricCurve> {
    perturbation_curve(trunk, states, maps, steps, d_max, Perturbation::Insertion)
}

/// Uniform random saliency, one independent map per state index.
pub fn random_saliency(seed: u64, index: u64, width: usize, height: usize) -> Result<SaliencyMap> {
    let mut r = rng::substream(seed, "eval.random", index);
    let raw: Vec<f32> = (0..width * height).map(|_| r.random::<f32>()).collect();
    SaliencyMap::normalized(width, height, &raw)
}
