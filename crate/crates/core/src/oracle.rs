//! Exact minimum-cost schedule for desk-scale instances.
//!
//! Forward dynamic programming over the joint battery vector (CU first, then
//! DUs). Each step enumerates every split combination and every candidate
//! dispatch per node. A state whose batteries are all at least as full as
//! another's, at no greater accumulated cost, dominates it: copying the
//! dominated state's dispatch choices (same level, or same amount) stays
//! feasible and never costs more, so dropping dominated states is exact.
//!
//! In `Levels` mode the arithmetic is the environment's own, so the optimum
//! is bit-identical to replaying the best action sequence. In `Grid` mode
//! dispatch may be any multiple of the grid step and all quantities are
//! tracked in integer ticks.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::domain::{cu_energy, du_energy, step_opex, SplitPoint};
use crate::env::{
    battery_step, feasible_dispatch_max, BatteryState, Dispatch, Environment, JointAction,
    NodeAction, NodeId,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum OracleDispatch {
    /// The agents' dispatch levels.
    Levels,
    /// Any multiple of `step` kWh up to the feasible maximum.
    Grid { step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleLimits {
    pub max_horizon: usize,
    pub max_dus: usize,
    pub max_chain: usize,
    /// Largest non-dominated frontier tolerated at any step.
    pub max_states: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_horizon: 24,
            max_dus: 2,
            max_chain: 3,
            max_states: 200_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    /// Sequential sum of per-step costs along the optimal schedule.
    pub total_opex: f64,
    pub actions: Vec<JointAction>,
    /// Largest frontier seen, for diagnostics.
    pub peak_states: usize,
}

#[derive(Debug, Clone)]
struct Entry {
    batteries: Vec<f64>,
    cost: f64,
    parent: usize,
    action: JointAction,
}

/// Battery arithmetic in either kWh (levels) or integer ticks (grid).
trait Arith {
    /// Dispatch candidates `(action, amount)` for node `n` holding `stored`
    /// with consumption `energy`.
    fn candidates(&self, stored: f64, energy: f64, n: usize) -> Vec<(Dispatch, f64)>;
    fn next(&self, stored: f64, dispatch: f64, n: usize) -> Result<f64>;
}

/// Solves the instance held by `env`: its config, data and initial battery
/// fraction over `horizon` steps from t = 0.
pub fn solve_oracle(
    env: &Environment,
    dispatch: OracleDispatch,
    limits: &OracleLimits,
) -> Result<OracleSolution> {
    let cfg = env.config();
    if cfg.horizon > limits.max_horizon {
        return Err(Error::OracleTooLarge(format!(
            "horizon {} exceeds cap {}",
            cfg.horizon, limits.max_horizon
        )));
    }
    if cfg.du_count > limits.max_dus {
        return Err(Error::OracleTooLarge(format!(
            "{} DUs exceed cap {}",
            cfg.du_count, limits.max_dus
        )));
    }
    if cfg.chain.len() > limits.max_chain {
        return Err(Error::OracleTooLarge(format!(
            "chain of {} exceeds cap {}",
            cfg.chain.len(),
            limits.max_chain
        )));
    }

    let split_options = du_split_options(env);
    let node_count = cfg.du_count + 1;
    let capacity: Vec<f64> = cfg
        .nodes()
        .map(|n| cfg.node_config(n).battery_capacity)
        .collect();
    let panel: Vec<f64> = cfg.nodes().map(|n| cfg.node_config(n).panel_size).collect();
    let grid = match dispatch {
        OracleDispatch::Levels => None,
        OracleDispatch::Grid { step } => {
            if !(step.is_finite() && step > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "grid step must be positive, got {step}"
                )));
            }
            Some(step)
        }
    };

    let initial: Vec<f64> = capacity
        .iter()
        .map(|c| {
            let b = c * cfg.initial_battery_fraction;
            match grid {
                Some(step) => to_ticks(b, step, "initial battery").map(|k| k as f64),
                None => Ok(b),
            }
        })
        .collect::<Result<_>>()?;
    let cap_units: Vec<f64> = match grid {
        Some(step) => capacity
            .iter()
            .map(|c| to_ticks(*c, step, "battery capacity").map(|k| k as f64))
            .collect::<Result<_>>()?,
        None => capacity.clone(),
    };

    let mut layers: Vec<Vec<Entry>> = Vec::with_capacity(cfg.horizon + 1);
    layers.push(vec![Entry {
        batteries: initial,
        cost: 0.0,
        parent: usize::MAX,
        action: JointAction {
            cu: NodeAction::cu(Dispatch::Level(0)),
            du: Vec::new(),
        },
    }]);
    let mut peak_states = 1;

    for t in 0..cfg.horizon {
        let price = cfg.tariff.price(t);
        let g_unit: Vec<f64> = cfg
            .nodes()
            .map(|n| match n {
                NodeId::Cu => env.cu_solar().at(t),
                NodeId::Du(r) => env.du_solar(r).at(t),
            })
            .collect();
        let harvest: Vec<f64> = panel.iter().zip(&g_unit).map(|(p, g)| p * g).collect();
        let loads: Vec<&[f64]> = (0..cfg.du_count)
            .map(|r| env.loads().du_loads(r, t))
            .collect();

        // every joint split choice with the resulting node consumption
        let mut split_choices: Vec<(Vec<Vec<SplitPoint>>, Vec<f64>)> = Vec::new();
        for combo in product(&vec![split_options.len(); cfg.du_count]) {
            let splits: Vec<Vec<SplitPoint>> =
                combo.iter().map(|&k| split_options[k].clone()).collect();
            let mut energy = Vec::with_capacity(node_count);
            energy.push(cu_energy(&loads, &splits, &cfg.cu, cfg.chain)?);
            for r in 0..cfg.du_count {
                energy.push(du_energy(loads[r], &splits[r], &cfg.du[r], cfg.chain)?);
            }
            split_choices.push((splits, energy));
        }

        let arith: Box<dyn Arith> = match grid {
            None => Box::new(LevelArith {
                levels: cfg.dispatch_levels.clone(),
                capacity: capacity.clone(),
                panel: panel.clone(),
                gen_per_unit: g_unit.clone(),
            }),
            Some(step) => Box::new(GridArith::new(step, &cap_units, &harvest, t)?),
        };

        let prev = layers.last().expect("initial layer");
        let mut next: Vec<Entry> = Vec::new();
        for (pi, entry) in prev.iter().enumerate() {
            for (splits, energy) in &split_choices {
                let energy_units: Vec<f64> = match grid {
                    Some(step) => energy
                        .iter()
                        .map(|e| {
                            to_ticks(*e, step, &format!("consumption at t={t}")).map(|k| k as f64)
                        })
                        .collect::<Result<_>>()?,
                    None => energy.clone(),
                };
                let options: Vec<Vec<(Dispatch, f64)>> = (0..node_count)
                    .map(|n| arith.candidates(entry.batteries[n], energy_units[n], n))
                    .collect();
                let sizes: Vec<usize> = options.iter().map(Vec::len).collect();
                for pick in product(&sizes) {
                    let mut batteries = Vec::with_capacity(node_count);
                    let mut kwh = Vec::with_capacity(node_count);
                    for n in 0..node_count {
                        let (_, p) = options[n][pick[n]];
                        batteries.push(arith.next(entry.batteries[n], p, n)?);
                        kwh.push(match grid {
                            // exact consumption when drawing all of it
                            Some(_) if p == energy_units[n] => energy[n],
                            Some(step) => (p * step).min(energy[n]),
                            None => p,
                        });
                    }
                    let per_du: Vec<(f64, f64)> =
                        (1..node_count).map(|n| (energy[n], kwh[n])).collect();
                    let opex = step_opex(energy[0], kwh[0], &per_du, price)?;
                    let dispatch_of = |n: usize| match (grid, options[n][pick[n]].0) {
                        (Some(_), _) => Dispatch::Energy(kwh[n]),
                        (None, d) => d,
                    };
                    let action = JointAction {
                        cu: NodeAction::cu(dispatch_of(0)),
                        du: (0..cfg.du_count)
                            .map(|r| NodeAction {
                                splits: splits[r].clone(),
                                dispatch: dispatch_of(r + 1),
                            })
                            .collect(),
                    };
                    next.push(Entry {
                        batteries,
                        cost: entry.cost + opex,
                        parent: pi,
                        action,
                    });
                }
            }
        }
        let frontier = pareto_frontier(next);
        peak_states = peak_states.max(frontier.len());
        if frontier.len() > limits.max_states {
            return Err(Error::OracleTooLarge(format!(
                "{} non-dominated states at t={t} exceed cap {}",
                frontier.len(),
                limits.max_states
            )));
        }
        layers.push(frontier);
    }

    let last = layers.last().expect("at least one layer");
    let (mut idx, best) = last
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.cost.total_cmp(&b.1.cost))
        .expect("non-empty frontier");
    let total_opex = best.cost;
    let mut actions = Vec::with_capacity(cfg.horizon);
    for layer in layers[1..].iter().rev() {
        let e = &layer[idx];
        actions.push(e.action.clone());
        idx = e.parent;
    }
    actions.reverse();
    Ok(OracleSolution {
        total_opex,
        actions,
        peak_states,
    })
}

fn du_split_options(env: &Environment) -> Vec<Vec<SplitPoint>> {
    let cfg = env.config();
    let per_type: Vec<usize> = cfg
        .traffic_types
        .iter()
        .map(|t| {
            if t.pinned_to_du {
                1
            } else {
                cfg.chain.len() + 1
            }
        })
        .collect();
    product(&per_type)
        .into_iter()
        .map(|combo| {
            combo
                .iter()
                .zip(&cfg.traffic_types)
                .map(|(&k, t)| {
                    if t.pinned_to_du {
                        cfg.chain.full()
                    } else {
                        SplitPoint::new(k, cfg.chain).expect("within chain")
                    }
                })
                .collect()
        })
        .collect()
}

/// All index tuples of a mixed-radix counter, first position fastest.
fn product(sizes: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = sizes.iter().product();
    (0..total)
        .map(|mut k| {
            sizes
                .iter()
                .map(|&s| {
                    let d = k % s;
                    k /= s;
                    d
                })
                .collect()
        })
        .collect()
}

fn to_ticks(x: f64, step: f64, what: &str) -> Result<i64> {
    let q = x / step;
    let k = q.round();
    if (q - k).abs() > 1e-6 {
        return Err(Error::OffGrid(format!(
            "{what} = {x} is not a multiple of {step}"
        )));
    }
    Ok(k as i64)
}

/// Keeps states not weakly dominated (all batteries >= and cost <=) by
/// another kept state. Exact duplicates keep the cheapest, earliest entry.
fn pareto_frontier(mut entries: Vec<Entry>) -> Vec<Entry> {
    let mut best: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut unique: Vec<Entry> = Vec::new();
    for e in entries.drain(..) {
        let key: Vec<u64> = e.batteries.iter().map(|b| b.to_bits()).collect();
        match best.get(&key) {
            Some(&i) if unique[i].cost <= e.cost => {}
            Some(&i) => unique[i] = e,
            None => {
                best.insert(key, unique.len());
                unique.push(e);
            }
        }
    }
    unique.sort_by(|a, b| {
        a.cost.total_cmp(&b.cost).then_with(|| {
            // fuller batteries first among equal costs
            b.batteries
                .iter()
                .zip(&a.batteries)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    match unique.first().map(|e| e.batteries.len()) {
        Some(1) | Some(2) => staircase(unique),
        _ => quadratic_frontier(unique),
    }
}

/// Order-preserving key for a non-negative battery level.
fn key(b: f64) -> u64 {
    (b + 0.0).to_bits()
}

/// Frontier for one or two battery dimensions, entries sorted by cost. The
/// kept states form a staircase: as the first battery grows the second
/// shrinks, so a dominance query is one range lookup.
fn staircase(sorted: Vec<Entry>) -> Vec<Entry> {
    let mut stairs: BTreeMap<u64, f64> = BTreeMap::new();
    let mut kept = Vec::new();
    for e in sorted {
        let x = key(e.batteries[0]);
        let y = e.batteries.get(1).copied().unwrap_or(0.0);
        let dominated = stairs.range(x..).next().is_some_and(|(_, &ky)| ky >= y);
        if dominated {
            continue;
        }
        let covered: Vec<u64> = stairs
            .range(..=x)
            .rev()
            .take_while(|(_, &ky)| ky <= y)
            .map(|(&kx, _)| kx)
            .collect();
        for kx in covered {
            stairs.remove(&kx);
        }
        stairs.insert(x, y);
        kept.push(e);
    }
    kept
}

fn quadratic_frontier(sorted: Vec<Entry>) -> Vec<Entry> {
    let mut kept: Vec<Entry> = Vec::new();
    for e in sorted {
        let dominated = kept.iter().any(|k| {
            k.batteries
                .iter()
                .zip(&e.batteries)
                .all(|(kb, eb)| kb >= eb)
        });
        if !dominated {
            kept.push(e);
        }
    }
    kept
}

struct LevelArith {
    levels: Vec<f64>,
    capacity: Vec<f64>,
    panel: Vec<f64>,
    gen_per_unit: Vec<f64>,
}

impl LevelArith {
    fn battery(&self, stored: f64, n: usize) -> BatteryState {
        BatteryState {
            stored,
            capacity: self.capacity[n],
            unstored_total: 0.0,
        }
    }
}

impl Arith for LevelArith {
    fn candidates(&self, stored: f64, energy: f64, n: usize) -> Vec<(Dispatch, f64)> {
        let max = feasible_dispatch_max(
            &self.battery(stored, n),
            self.panel[n],
            self.gen_per_unit[n],
            energy,
        );
        let mut out: Vec<(Dispatch, f64)> = Vec::with_capacity(self.levels.len());
        for (l, f) in self.levels.iter().enumerate() {
            let p = f * max;
            if !out.iter().any(|(_, q)| q.to_bits() == p.to_bits()) {
                out.push((Dispatch::Level(l), p));
            }
        }
        out
    }

    fn next(&self, stored: f64, dispatch: f64, n: usize) -> Result<f64> {
        Ok(battery_step(
            &self.battery(stored, n),
            dispatch,
            self.panel[n],
            self.gen_per_unit[n],
        )?
        .stored)
    }
}

struct GridArith {
    capacity: Vec<i64>,
    harvest: Vec<i64>,
}

impl GridArith {
    fn new(step: f64, capacity: &[f64], harvest_kwh: &[f64], t: usize) -> Result<Self> {
        Ok(Self {
            capacity: capacity.iter().map(|c| *c as i64).collect(),
            harvest: harvest_kwh
                .iter()
                .map(|g| to_ticks(*g, step, &format!("generation at t={t}")))
                .collect::<Result<_>>()?,
        })
    }
}

impl Arith for GridArith {
    fn candidates(&self, stored: f64, energy: f64, n: usize) -> Vec<(Dispatch, f64)> {
        let max = (energy as i64).min(stored as i64 + self.harvest[n]);
        (0..=max).map(|k| (Dispatch::Level(0), k as f64)).collect()
    }

    fn next(&self, stored: f64, dispatch: f64, n: usize) -> Result<f64> {
        let level = stored as i64 + self.harvest[n] - dispatch as i64;
        Ok(level.min(self.capacity[n]) as f64)
    }
}
