//! Explanation and navigation metrics.

mod analysis;
mod curves;
mod navigation;
mod vbp;

pub use analysis::{
    angle_sweep, averaged_attention_per_action, ActionAverage, ActionAverages, SWEEP_ANGLES, SWEEP_DISTANCE,
};
pub use curves::{
    deletion_curve, insertion_curve, perturbation_curve, random_saliency, trapezoid, EvalState, MetricCurve,
    Perturbation,
};
pub use navigation::{evaluate_navigation, sample_eval_states, EvalContext, NavStats};
pub use vbp::{visual_backprop, visual_backprop_batch, visual_backprop_from_means};
