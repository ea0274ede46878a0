//! Independent tabular learners, one per node, sharing the system-wide
//! windowed reward.

mod discretize;
mod learner;
mod qtable;
mod space;

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use discretize::{bin, DiscretizationSpec, Discretizer};
pub use learner::{q_update, sarsa_update, select_action, EpsilonSchedule, LearningParams};
pub use qtable::QTable;
pub use space::ActionSpace;

use crate::env::{Environment, JointAction, NodeId};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::rng::{stream_rng, Stream};
use crate::stats::NeumaierSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    QLearning,
    Sarsa,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub discretizer: Discretizer,
    pub space: ActionSpace,
    pub table: QTable,
}

impl Agent {
    fn state(&self, env: &Environment, node: NodeId) -> Result<usize> {
        Ok(self.discretizer.state(&env.observe(node)?))
    }
}

/// The CU agent followed by one agent per DU.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSet {
    pub cu: Agent,
    pub du: Vec<Agent>,
}

impl AgentSet {
    /// Fresh zero-valued tables sized for `env`.
    pub fn new(env: &Environment, spec: DiscretizationSpec) -> Result<Self> {
        spec.validate()?;
        let cfg = env.config();
        if spec.time_values > cfg.day_length {
            return Err(Error::config(
                "policy.discretization.time_values",
                format!(
                    "{} exceeds the day length {}",
                    spec.time_values, cfg.day_length
                ),
            ));
        }
        let levels = cfg.dispatch_levels.len();
        let loads = env.loads();
        let du_max = loads.max_per_type();
        let mut cu_max = vec![0.0f64; loads.type_count()];
        for t in 0..cfg.horizon {
            for (m, v) in cu_max.iter_mut().zip(loads.total_loads(t)) {
                *m = m.max(v);
            }
        }
        let make = |capacity: f64, max_loads: Vec<f64>, space: ActionSpace| {
            let discretizer = Discretizer::new(spec, capacity, max_loads, cfg.day_length);
            let table = QTable::new(discretizer.state_count(), space.len());
            Agent {
                discretizer,
                space,
                table,
            }
        };
        let cu = make(
            cfg.cu.battery_capacity,
            cu_max,
            ActionSpace::cu(cfg.chain, levels),
        );
        let du = cfg
            .du
            .iter()
            .map(|d| {
                make(
                    d.battery_capacity,
                    du_max.clone(),
                    ActionSpace::du(cfg.chain, &cfg.traffic_types, levels),
                )
            })
            .collect();
        Ok(Self { cu, du })
    }

    fn agents(&self) -> impl Iterator<Item = (NodeId, &Agent)> {
        std::iter::once((NodeId::Cu, &self.cu))
            .chain(self.du.iter().enumerate().map(|(r, a)| (NodeId::Du(r), a)))
    }

    fn agent_mut(&mut self, k: usize) -> &mut Agent {
        if k == 0 {
            &mut self.cu
        } else {
            &mut self.du[k - 1]
        }
    }

    /// State index of every agent (CU first).
    pub fn states(&self, env: &Environment) -> Result<Vec<usize>> {
        self.agents().map(|(n, a)| a.state(env, n)).collect()
    }

    pub fn decode(&self, actions: &[usize]) -> JointAction {
        JointAction {
            cu: self.cu.space.decode(actions[0]),
            du: self
                .du
                .iter()
                .zip(&actions[1..])
                .map(|(a, &i)| a.space.decode(i))
                .collect(),
        }
    }

    pub fn greedy(&self, states: &[usize]) -> Vec<usize> {
        self.agents()
            .zip(states)
            .map(|((_, a), &s)| a.table.argmax(s))
            .collect()
    }

    fn file_name(node: NodeId) -> String {
        format!("qtable_{node}.csv")
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (node, agent) in self.agents() {
            let path = dir.join(Self::file_name(node));
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            agent.table.write_csv(file)?;
        }
        Ok(())
    }

    /// Loads tables saved by [`AgentSet::save`]; their shapes must match what
    /// `env` and `spec` imply.
    pub fn load(dir: &Path, env: &Environment, spec: DiscretizationSpec) -> Result<Self> {
        let mut set = Self::new(env, spec)?;
        let nodes: Vec<NodeId> = env.config().nodes().collect();
        for (k, node) in nodes.into_iter().enumerate() {
            let path = dir.join(Self::file_name(node));
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            let agent = set.agent_mut(k);
            agent.table = QTable::read_csv(file, agent.table.states(), agent.table.actions())
                .map_err(|e| match e {
                    Error::ArtifactMismatch(m) => {
                        Error::ArtifactMismatch(format!("{}: {m}", path.display()))
                    }
                    other => other,
                })?;
        }
        Ok(set)
    }
}

impl Policy for AgentSet {
    fn act(&mut self, env: &Environment) -> Result<JointAction> {
        let states = self.states(env)?;
        Ok(self.decode(&self.greedy(&states)))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agents: AgentSet,
    /// Total on-grid cost of each training episode.
    pub curve: Vec<f64>,
}

/// Trains one agent per node for `params.episodes` simulated days.
///
/// Episodes are `day_length` steps long. Unless `reset_each_episode` is set
/// the environment keeps running across episode boundaries (batteries and
/// reward window carry over, the data cursor wraps when the environment is
/// cyclic), so transitions between days bootstrap normally.
pub fn train<F>(
    make_env: F,
    algorithm: Algorithm,
    params: &LearningParams,
    spec: DiscretizationSpec,
    seed: u64,
) -> Result<TrainOutcome>
where
    F: Fn() -> Result<Environment>,
{
    params.validate()?;
    let mut env = make_env()?;
    let mut agents = AgentSet::new(&env, spec)?;
    let mut rng = stream_rng(seed, Stream::Exploration);
    let day = env.config().day_length;
    let n_agents = agents.du.len() + 1;

    let mut steps: u64 = 0;
    let mut curve = Vec::with_capacity(params.episodes);
    let mut states = agents.states(&env)?;
    let mut actions = choose(&agents, &states, params.epsilon_at(0, 0), &mut rng);

    for episode in 0..params.episodes {
        if (params.reset_each_episode && episode > 0) || env.is_done() {
            env.reset();
            states = agents.states(&env)?;
            actions = choose(
                &agents,
                &states,
                params.epsilon_at(steps, episode),
                &mut rng,
            );
        }
        let mut cost = NeumaierSum::default();
        for k in 0..day {
            let record = env.step(&agents.decode(&actions))?;
            cost.add(record.opex);
            let reward = env.reward();
            steps += 1;
            let terminal = (params.reset_each_episode && k + 1 == day) || env.is_done();
            let next_states = agents.states(&env)?;
            let eps = params.epsilon_at(steps, episode);
            let next_actions = match algorithm {
                Algorithm::QLearning => {
                    for i in 0..n_agents {
                        let sn = (!terminal).then_some(next_states[i]);
                        let agent = agents.agent_mut(i);
                        q_update(&mut agent.table, states[i], actions[i], reward, sn, params);
                    }
                    choose(&agents, &next_states, eps, &mut rng)
                }
                Algorithm::Sarsa => {
                    let next_actions = choose(&agents, &next_states, eps, &mut rng);
                    for i in 0..n_agents {
                        let next = (!terminal).then_some((next_states[i], next_actions[i]));
                        let agent = agents.agent_mut(i);
                        sarsa_update(
                            &mut agent.table,
                            states[i],
                            actions[i],
                            reward,
                            next,
                            params,
                        );
                    }
                    next_actions
                }
            };
            states = next_states;
            actions = next_actions;
            if env.is_done() {
                break;
            }
        }
        curve.push(cost.value());
    }
    Ok(TrainOutcome { agents, curve })
}

fn choose<R: rand::Rng>(agents: &AgentSet, states: &[usize], eps: f64, rng: &mut R) -> Vec<usize> {
    agents
        .agents()
        .zip(states)
        .map(|((_, a), &s)| select_action(&a.table, s, eps, rng))
        .collect()
}
