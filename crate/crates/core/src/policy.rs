//! Policies and the evaluation loop, including the two static baselines:
//! D-RAN keeps every function at the DUs, C-RAN centralizes every splittable
//! type. Both draw as much renewable energy as is feasible each step.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::{Dispatch, EnvConfig, Environment, JointAction, NodeAction, NodeId, StepRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Dran,
    Cran,
    RldfsQl,
    RldfsSarsa,
    Oracle,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Dran,
        PolicyKind::Cran,
        PolicyKind::RldfsQl,
        PolicyKind::RldfsSarsa,
        PolicyKind::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Dran => "dran",
            PolicyKind::Cran => "cran",
            PolicyKind::RldfsQl => "rldfs_ql",
            PolicyKind::RldfsSarsa => "rldfs_sarsa",
            PolicyKind::Oracle => "oracle",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, PolicyKind::RldfsQl | PolicyKind::RldfsSarsa)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::config(
                    "policy.kind",
                    format!("unknown policy `{s}` (dran, cran, rldfs_ql, rldfs_sarsa, oracle)"),
                )
            })
    }
}

pub trait Policy {
    fn act(&mut self, env: &Environment) -> Result<JointAction>;
}

/// Every function of every type at the DU, maximum dispatch.
pub fn dran_action(node: NodeId, cfg: &EnvConfig) -> NodeAction {
    let dispatch = Dispatch::Level(cfg.max_dispatch_level());
    match node {
        NodeId::Cu => NodeAction::cu(dispatch),
        NodeId::Du(_) => NodeAction {
            splits: vec![cfg.chain.full(); cfg.traffic_types.len()],
            dispatch,
        },
    }
}

/// Splittable types fully at the CU, pinned types at the DU, maximum dispatch.
pub fn cran_action(node: NodeId, cfg: &EnvConfig) -> NodeAction {
    let dispatch = Dispatch::Level(cfg.max_dispatch_level());
    match node {
        NodeId::Cu => NodeAction::cu(dispatch),
        NodeId::Du(_) => NodeAction {
            splits: cfg
                .traffic_types
                .iter()
                .map(|t| {
                    if t.pinned_to_du {
                        cfg.chain.full()
                    } else {
                        crate::domain::SplitPoint::new(0, cfg.chain).expect("0 is always valid")
                    }
                })
                .collect(),
            dispatch,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StaticPolicy {
    Dran,
    Cran,
}

impl Policy for StaticPolicy {
    fn act(&mut self, env: &Environment) -> Result<JointAction> {
        let cfg = env.config();
        let rule = match self {
            StaticPolicy::Dran => dran_action,
            StaticPolicy::Cran => cran_action,
        };
        Ok(JointAction {
            cu: rule(NodeId::Cu, cfg),
            du: (0..cfg.du_count)
                .map(|r| rule(NodeId::Du(r), cfg))
                .collect(),
        })
    }
}

/// Plays back a fixed action sequence.
#[derive(Debug, Clone)]
pub struct ReplayPolicy {
    actions: Vec<JointAction>,
}

impl ReplayPolicy {
    pub fn new(actions: Vec<JointAction>) -> Self {
        Self { actions }
    }
}

impl Policy for ReplayPolicy {
    fn act(&mut self, env: &Environment) -> Result<JointAction> {
        self.actions
            .get(env.t())
            .cloned()
            .ok_or_else(|| Error::InvalidInput(format!("no recorded action for t={}", env.t())))
    }
}

/// Resets `env` and runs `policy` until the horizon.
pub fn run_policy<P: Policy + ?Sized>(
    env: &mut Environment,
    policy: &mut P,
) -> Result<Vec<StepRecord>> {
    if env.config().cyclic {
        return Err(Error::InvalidInput(
            "evaluation needs a non-cyclic environment".into(),
        ));
    }
    env.reset();
    let mut records = Vec::with_capacity(env.config().horizon);
    while !env.is_done() {
        let action = policy.act(env)?;
        records.push(env.step(&action)?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::FunctionChain;

    #[test]
    fn baseline_actions() {
        let cfg = EnvConfig::default();
        let full = cfg.chain.full();
        let d = dran_action(NodeId::Du(3), &cfg);
        assert_eq!(d.splits, vec![full, full]);
        assert_eq!(d.dispatch, Dispatch::Level(2));
        let c = cran_action(NodeId::Du(3), &cfg);
        assert_eq!(c.splits[0], full);
        assert_eq!(c.splits[1].get(), 0);
        assert_eq!(cran_action(NodeId::Cu, &cfg).splits, vec![]);
    }

    #[test]
    fn single_function_chain_still_separates_baselines() {
        let cfg = EnvConfig {
            chain: FunctionChain::new(1).unwrap(),
            ..EnvConfig::default()
        };
        assert_eq!(cran_action(NodeId::Du(0), &cfg).splits[1].get(), 0);
        assert_eq!(dran_action(NodeId::Du(0), &cfg).splits[1].get(), 1);
    }

    #[test]
    fn policy_names_parse() {
        for k in PolicyKind::ALL {
            assert_eq!(k.name().parse::<PolicyKind>().unwrap(), k);
        }
        assert!("greedy".parse::<PolicyKind>().is_err());
    }
}
