use rand::Rng;

use super::network::QValues;
use crate::sim::Action;

/// Linear exploration schedule, constant after `anneal_episodes`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_episodes: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 0.9,
            end: 0.1,
            anneal_episodes: 80_000,
        }
    }
}

impl EpsilonSchedule {
    pub fn epsilon_at(&self, episode: u64) -> f64 {
        if self.anneal_episodes == 0 || episode >= self.anneal_episodes {
            return self.end;
        }
        let t = episode as f64 / self.anneal_episodes as f64;
        (self.start + (self.end - self.start) * t).clamp(0.0, 1.0)
    }
}

/// Epsilon-greedy choice: uniform random with probability `epsilon`,
/// otherwise the greedy action.
pub fn select_action<R: Rng + ?Sized>(q: &QValues, epsilon: f64, rng: &mut R) -> Action {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        Action::ALL[rng.random_range(0..Action::COUNT)]
    } else {
        q.greedy()
    }
}
