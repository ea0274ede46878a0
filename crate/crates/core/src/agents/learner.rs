use rand::Rng;
use serde::{Deserialize, Serialize};

use super::QTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonSchedule {
    PerStep,
    PerEpisode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningParams {
    pub episodes: usize,
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    /// Subtracted from epsilon per step or per episode, see `epsilon_schedule`.
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    pub epsilon_schedule: EpsilonSchedule,
    /// Reset batteries and cost history at every episode boundary instead
    /// of carrying them into the next simulated day.
    pub reset_each_episode: bool,
}

impl Default for LearningParams {
    fn default() -> Self {
        Self {
            episodes: 4000,
            learning_rate: 0.05,
            discount: 0.90,
            epsilon_start: 0.5,
            epsilon_decay: 5e-5,
            epsilon_floor: 0.01,
            epsilon_schedule: EpsilonSchedule::PerStep,
            reset_each_episode: false,
        }
    }
}

impl LearningParams {
    pub fn validate(&self) -> Result<()> {
        let field = |f: &str| format!("policy.learning.{f}");
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::config(field("learning_rate"), "must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::config(field("discount"), "must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) {
            return Err(Error::config(field("epsilon_start"), "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.epsilon_floor) {
            return Err(Error::config(field("epsilon_floor"), "must lie in [0, 1]"));
        }
        if !(self.epsilon_decay.is_finite() && self.epsilon_decay >= 0.0) {
            return Err(Error::config(
                field("epsilon_decay"),
                "must be non-negative",
            ));
        }
        Ok(())
    }

    /// Linear decay held at the floor, after `steps` environment steps
    /// taken over `episodes` completed episodes.
    pub fn epsilon_at(&self, steps: u64, episodes: usize) -> f64 {
        let n = match self.epsilon_schedule {
            EpsilonSchedule::PerStep => steps as f64,
            EpsilonSchedule::PerEpisode => episodes as f64,
        };
        (self.epsilon_start - self.epsilon_decay * n)
            .max(self.epsilon_floor.min(self.epsilon_start))
    }
}

fn apply(q: &mut QTable, s: usize, a: usize, target: f64, alpha: f64) -> f64 {
    let old = q.get(s, a);
    let new = old + alpha * (target - old);
    q.set(s, a, new);
    q.record_visit(s, a);
    new
}

/// Off-policy update towards `R + gamma * max_a Q(s', a)`. A `None` next
/// state marks a terminal transition.
pub fn q_update(
    q: &mut QTable,
    s: usize,
    a: usize,
    reward: f64,
    s_next: Option<usize>,
    params: &LearningParams,
) -> f64 {
    let bootstrap = s_next.map_or(0.0, |sn| q.max(sn));
    apply(
        q,
        s,
        a,
        reward + params.discount * bootstrap,
        params.learning_rate,
    )
}

/// On-policy update towards `R + gamma * Q(s', a')` with `a'` the action the
/// behaviour policy will actually take.
pub fn sarsa_update(
    q: &mut QTable,
    s: usize,
    a: usize,
    reward: f64,
    next: Option<(usize, usize)>,
    params: &LearningParams,
) -> f64 {
    let bootstrap = next.map_or(0.0, |(sn, an)| q.get(sn, an));
    apply(
        q,
        s,
        a,
        reward + params.discount * bootstrap,
        params.learning_rate,
    )
}

/// Epsilon-greedy choice; greedy ties resolve to the lowest action index.
pub fn select_action<R: Rng + ?Sized>(q: &QTable, s: usize, epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..q.actions())
    } else {
        q.argmax(s)
    }
}
