#![allow(dead_code)]

use std::path::{Path, PathBuf};

use greenran::agents::ActionSpace;
use greenran::domain::{FunctionChain, LoadMatrix, NodeEnergyConfig, TariffSchedule, TrafficType};
use greenran::env::{EnvConfig, Environment, JointAction};
use greenran::policy::Policy;
use greenran::scenario::ScenarioConfig;
use greenran::solar::SolarTrace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

pub fn scenario(name: &str) -> ScenarioConfig {
    ScenarioConfig::from_path(&config_path(name)).expect("bundled config parses")
}

/// Shape of a randomly drawn instance.
#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub du_count: usize,
    pub chain_len: usize,
    pub horizon: usize,
}

/// An environment with random loads, solar, tariff and node sizes. Small
/// capacities relative to generation make the battery cap bind often.
pub fn random_env(shape: Shape, seed: u64) -> Environment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut node = |static_max: f64| NodeEnergyConfig {
        static_energy: rng.random_range(0.0..static_max),
        dynamic_coeff: rng.random_range(0.0..1.5),
        panel_size: if rng.random_bool(0.15) {
            0.0
        } else {
            rng.random_range(0.0..40.0)
        },
        battery_capacity: if rng.random_bool(0.15) {
            0.0
        } else {
            rng.random_range(0.0..30.0)
        },
    };
    let cu = node(12.0);
    let du: Vec<NodeEnergyConfig> = (0..shape.du_count).map(|_| node(6.0)).collect();
    let types = TrafficType::default_set();
    let mut loads = LoadMatrix::zeros(shape.du_count, types.len(), shape.horizon);
    for r in 0..shape.du_count {
        for (k, tt) in types.iter().enumerate() {
            for t in 0..shape.horizon {
                loads
                    .set(r, k, t, rng.random_range(0.0..0.3) * tt.load_scale)
                    .unwrap();
            }
        }
    }
    let mut trace = |name: &str| {
        let values = (0..shape.horizon)
            .map(|_| {
                if rng.random_bool(0.3) {
                    0.0
                } else {
                    rng.random_range(0.0..0.5)
                }
            })
            .collect();
        SolarTrace::new(name, values).unwrap()
    };
    let cu_solar = trace("cu");
    let du_solar: Vec<SolarTrace> = (0..shape.du_count)
        .map(|r| trace(&format!("du{r}")))
        .collect();
    let prices: Vec<f64> = (0..24).map(|_| rng.random_range(0.01..0.2)).collect();
    let cfg = EnvConfig {
        du_count: shape.du_count,
        chain: FunctionChain::new(shape.chain_len).unwrap(),
        horizon: shape.horizon,
        tariff: TariffSchedule::new(prices).unwrap(),
        cu,
        du,
        traffic_types: types,
        initial_battery_fraction: rng.random_range(0.0..=1.0),
        ..EnvConfig::default()
    };
    Environment::new(cfg, loads, cu_solar, du_solar).unwrap()
}

/// Uniform over every node's finite action set.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, env: &Environment) -> greenran::Result<JointAction> {
        let cfg = env.config();
        let levels = cfg.dispatch_levels.len();
        let cu = ActionSpace::cu(cfg.chain, levels);
        let du = ActionSpace::du(cfg.chain, &cfg.traffic_types, levels);
        Ok(JointAction {
            cu: cu.decode(self.rng.random_range(0..cu.len())),
            du: (0..cfg.du_count)
                .map(|_| du.decode(self.rng.random_range(0..du.len())))
                .collect(),
        })
    }
}
