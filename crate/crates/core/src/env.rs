//! Hourly environment: one CU and `R` DUs, each with a panel and a battery.
//!
//! A step applies, in order: DU split decisions, node consumption, dispatch
//! (as a fraction of the feasible maximum, or an explicit amount), battery
//! updates with overflow accounting, and the step cost. The windowed reward
//! shared by all agents is derived from the recent cost history.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::domain::{
    cu_energy, du_energy, step_opex, FunctionChain, LoadMatrix, NodeEnergyConfig, SplitPoint,
    TariffSchedule, TrafficType,
};
use crate::error::{Error, Result};
use crate::solar::SolarTrace;
use crate::stats::NeumaierSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeId {
    Cu,
    Du(usize),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Cu => write!(f, "cu"),
            NodeId::Du(r) => write!(f, "du{r}"),
        }
    }
}

impl std::str::FromStr for NodeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "cu" {
            return Ok(NodeId::Cu);
        }
        s.strip_prefix("du")
            .and_then(|r| r.parse().ok())
            .map(NodeId::Du)
            .ok_or_else(|| Error::InvalidInput(format!("bad node id `{s}`")))
    }
}

/// Stored renewable energy of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryState {
    pub stored: f64,
    pub capacity: f64,
    /// Cumulative generation lost because the battery was full.
    pub unstored_total: f64,
}

impl BatteryState {
    pub fn new(capacity: f64, initial_fraction: f64) -> Self {
        Self {
            stored: capacity * initial_fraction,
            capacity,
            unstored_total: 0.0,
        }
    }
}

/// Advances one battery by a step: `b' = min(cap, b - p + panel * G)`, with
/// anything above capacity added to `unstored_total`.
pub fn battery_step(
    state: &BatteryState,
    dispatch: f64,
    panel_size: f64,
    generation: f64,
) -> Result<BatteryState> {
    charge(state, dispatch, panel_size, generation).map(|(next, _)| next)
}

/// [`battery_step`] that also returns this step's overflow, exact rather
/// than a difference of running totals.
fn charge(
    state: &BatteryState,
    dispatch: f64,
    panel_size: f64,
    generation: f64,
) -> Result<(BatteryState, f64)> {
    let available = state.stored + panel_size * generation;
    if !(dispatch >= 0.0 && dispatch <= available) {
        return Err(Error::DispatchExceeds {
            node: "battery".into(),
            dispatch,
            limit: available,
        });
    }
    let level = available - dispatch;
    let overflow = (level - state.capacity).max(0.0);
    let next = BatteryState {
        stored: level.min(state.capacity),
        capacity: state.capacity,
        unstored_total: state.unstored_total + overflow,
    };
    Ok((next, overflow))
}

/// Largest renewable draw this step: limited by consumption and by what the
/// battery plus fresh generation hold.
pub fn feasible_dispatch_max(
    state: &BatteryState,
    panel_size: f64,
    generation: f64,
    consumption: f64,
) -> f64 {
    consumption.min(state.stored + panel_size * generation)
}

/// `-scale * sum` of the last `window + 1` step costs, or of all of them when
/// fewer exist.
pub fn windowed_reward(opex_history: &[f64], window: usize, scale: f64) -> f64 {
    let start = opex_history.len().saturating_sub(window + 1);
    -scale * opex_history[start..].iter().sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Dispatch {
    /// Index into the configured dispatch levels.
    Level(usize),
    /// Explicit kWh; must not exceed the feasible maximum.
    Energy(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeAction {
    /// One split point per traffic type; empty for the CU.
    pub splits: Vec<SplitPoint>,
    pub dispatch: Dispatch,
}

impl NodeAction {
    pub fn cu(dispatch: Dispatch) -> Self {
        Self {
            splits: Vec::new(),
            dispatch,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointAction {
    pub cu: NodeAction,
    pub du: Vec<NodeAction>,
}

impl JointAction {
    /// Assembles a joint action from a node map; every node must appear once.
    pub fn from_map(mut actions: BTreeMap<NodeId, NodeAction>, du_count: usize) -> Result<Self> {
        if let Some(&node) = actions
            .keys()
            .find(|n| matches!(n, NodeId::Du(r) if *r >= du_count))
        {
            return Err(Error::UnknownNode(node));
        }
        let cu = actions
            .remove(&NodeId::Cu)
            .ok_or(Error::MissingAction(NodeId::Cu))?;
        let du = (0..du_count)
            .map(|r| {
                actions
                    .remove(&NodeId::Du(r))
                    .ok_or(Error::MissingAction(NodeId::Du(r)))
            })
            .collect::<Result<_>>()?;
        Ok(Self { cu, du })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeStep {
    pub node: NodeId,
    pub energy: f64,
    pub dispatch: f64,
    pub generation: f64,
    /// Overflow lost this step.
    pub unstored: f64,
    pub stored_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub price: f64,
    pub opex: f64,
    /// CU first, then DUs in index order.
    pub nodes: Vec<NodeStep>,
}

impl StepRecord {
    /// Recomputes the step cost from the per-node fields.
    pub fn recompute_opex(&self) -> Result<f64> {
        let cu = &self.nodes[0];
        let du: Vec<(f64, f64)> = self.nodes[1..]
            .iter()
            .map(|n| (n.energy, n.dispatch))
            .collect();
        step_opex(cu.energy, cu.dispatch, &du, self.price)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub du_count: usize,
    pub chain: FunctionChain,
    /// Length of the load and solar data in steps.
    pub horizon: usize,
    pub day_length: usize,
    pub tariff: TariffSchedule,
    pub cu: NodeEnergyConfig,
    /// One entry per DU.
    pub du: Vec<NodeEnergyConfig>,
    pub traffic_types: Vec<TrafficType>,
    pub reward_window: usize,
    /// Reward normalization; derived from the scenario when `None`.
    pub reward_scale: Option<f64>,
    pub initial_battery_fraction: f64,
    /// Fractions of the feasible maximum selectable as dispatch.
    pub dispatch_levels: Vec<f64>,
    /// Wrap around the data instead of terminating at the horizon.
    pub cyclic: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            du_count: 20,
            chain: FunctionChain::default(),
            horizon: 24 * 365,
            day_length: 24,
            tariff: TariffSchedule::default(),
            cu: NodeEnergyConfig::cu_default(),
            du: vec![NodeEnergyConfig::du_default(); 20],
            traffic_types: TrafficType::default_set(),
            reward_window: 48,
            reward_scale: None,
            initial_battery_fraction: 0.0,
            dispatch_levels: vec![0.0, 0.5, 1.0],
            cyclic: false,
        }
    }
}

impl EnvConfig {
    /// Same DU parameters for every DU.
    pub fn with_dus(mut self, du_count: usize, du: NodeEnergyConfig) -> Self {
        self.du_count = du_count;
        self.du = vec![du; du_count];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.du_count == 0 {
            return Err(Error::config("env.du_count", "must be at least 1"));
        }
        if self.du.len() != self.du_count {
            return Err(Error::config(
                "env.du",
                format!("{} DU configs for {} DUs", self.du.len(), self.du_count),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::config("env.horizon", "must be at least 1"));
        }
        if self.day_length == 0 || 24 % self.day_length != 0 {
            return Err(Error::config("env.day_length", "must divide 24"));
        }
        self.cu.validate("env.cu")?;
        for (r, du) in self.du.iter().enumerate() {
            du.validate(&format!("env.du[{r}]"))?;
        }
        if self.traffic_types.is_empty() {
            return Err(Error::config(
                "env.traffic_types",
                "need at least one traffic type",
            ));
        }
        if self.dispatch_levels.is_empty()
            || self
                .dispatch_levels
                .iter()
                .any(|f| !(0.0..=1.0).contains(f))
        {
            return Err(Error::config(
                "env.dispatch_levels",
                "need at least one level, each within [0, 1]",
            ));
        }
        if !(0.0..=1.0).contains(&self.initial_battery_fraction) {
            return Err(Error::config(
                "env.initial_battery_fraction",
                "must lie in [0, 1]",
            ));
        }
        if let Some(s) = self.reward_scale {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::config("env.reward_scale", "must be non-negative"));
            }
        }
        Ok(())
    }

    /// Index of the largest dispatch fraction.
    pub fn max_dispatch_level(&self) -> usize {
        self.dispatch_levels
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    pub fn node_config(&self, node: NodeId) -> &NodeEnergyConfig {
        match node {
            NodeId::Cu => &self.cu,
            NodeId::Du(r) => &self.du[r],
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        std::iter::once(NodeId::Cu).chain((0..self.du_count).map(NodeId::Du))
    }
}

/// What an agent sees before acting. Values are continuous; agents bin them.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub battery: f64,
    /// Own per-type load (DU) or per-type load summed over all DUs (CU).
    pub loads: Vec<f64>,
    pub time_of_day: usize,
}

#[derive(Debug, Clone)]
pub struct Environment {
    cfg: EnvConfig,
    loads: LoadMatrix,
    cu_solar: SolarTrace,
    du_solar: Vec<SolarTrace>,
    reward_scale: f64,
    t: usize,
    cu_battery: BatteryState,
    du_batteries: Vec<BatteryState>,
    history: VecDeque<f64>,
}

impl Environment {
    pub fn new(
        cfg: EnvConfig,
        loads: LoadMatrix,
        cu_solar: SolarTrace,
        du_solar: Vec<SolarTrace>,
    ) -> Result<Self> {
        cfg.validate()?;
        if loads.du_count() != cfg.du_count || loads.type_count() != cfg.traffic_types.len() {
            return Err(Error::InvalidInput(format!(
                "load matrix is {}x{} (DUs x types), config needs {}x{}",
                loads.du_count(),
                loads.type_count(),
                cfg.du_count,
                cfg.traffic_types.len()
            )));
        }
        if loads.horizon() < cfg.horizon {
            return Err(Error::InvalidInput(format!(
                "load matrix covers {} steps, horizon is {}",
                loads.horizon(),
                cfg.horizon
            )));
        }
        if du_solar.len() != cfg.du_count {
            return Err(Error::InvalidInput(format!(
                "{} DU solar traces for {} DUs",
                du_solar.len(),
                cfg.du_count
            )));
        }
        for tr in std::iter::once(&cu_solar).chain(&du_solar) {
            if tr.len() < cfg.horizon {
                return Err(Error::InvalidInput(format!(
                    "solar trace `{}` covers {} steps, horizon is {}",
                    tr.site_name,
                    tr.len(),
                    cfg.horizon
                )));
            }
        }
        let reward_scale = cfg
            .reward_scale
            .unwrap_or_else(|| default_reward_scale(&cfg, &loads));
        let mut env = Self {
            cu_battery: BatteryState::new(cfg.cu.battery_capacity, cfg.initial_battery_fraction),
            du_batteries: Vec::new(),
            history: VecDeque::with_capacity(cfg.reward_window + 1),
            cfg,
            loads,
            cu_solar,
            du_solar,
            reward_scale,
            t: 0,
        };
        env.reset();
        Ok(env)
    }

    /// Back to t = 0 with batteries at the initial fraction and no history.
    pub fn reset(&mut self) {
        let f = self.cfg.initial_battery_fraction;
        self.t = 0;
        self.cu_battery = BatteryState::new(self.cfg.cu.battery_capacity, f);
        self.du_batteries = self
            .cfg
            .du
            .iter()
            .map(|d| BatteryState::new(d.battery_capacity, f))
            .collect();
        self.history.clear();
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn loads(&self) -> &LoadMatrix {
        &self.loads
    }

    pub fn cu_solar(&self) -> &SolarTrace {
        &self.cu_solar
    }

    pub fn du_solar(&self, du: usize) -> &SolarTrace {
        &self.du_solar[du]
    }

    pub fn reward_scale(&self) -> f64 {
        self.reward_scale
    }

    /// Steps taken since the last reset.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        !self.cfg.cyclic && self.t >= self.cfg.horizon
    }

    pub fn battery(&self, node: NodeId) -> Result<&BatteryState> {
        match node {
            NodeId::Cu => Ok(&self.cu_battery),
            NodeId::Du(r) => self.du_batteries.get(r).ok_or(Error::UnknownNode(node)),
        }
    }

    fn data_index(&self) -> usize {
        self.t % self.cfg.horizon
    }

    /// Generation per panel unit for `node` at the current step.
    pub fn generation(&self, node: NodeId) -> f64 {
        let d = self.data_index();
        match node {
            NodeId::Cu => self.cu_solar.at(d),
            NodeId::Du(r) => self.du_solar[r].at(d),
        }
    }

    pub fn observe(&self, node: NodeId) -> Result<Observation> {
        let d = self.data_index();
        let (battery, loads) = match node {
            NodeId::Cu => (self.cu_battery.stored, self.loads.total_loads(d)),
            NodeId::Du(r) if r < self.cfg.du_count => (
                self.du_batteries[r].stored,
                self.loads.du_loads(r, d).to_vec(),
            ),
            NodeId::Du(_) => return Err(Error::UnknownNode(node)),
        };
        Ok(Observation {
            battery,
            loads,
            time_of_day: self.t % self.cfg.day_length,
        })
    }

    /// Windowed reward over the most recent step costs.
    pub fn reward(&self) -> f64 {
        let start = self
            .history
            .len()
            .saturating_sub(self.cfg.reward_window + 1);
        -self.reward_scale * self.history.range(start..).sum::<f64>()
    }

    fn check_splits(&self, r: usize, splits: &[SplitPoint]) -> Result<()> {
        let chain = self.cfg.chain;
        if splits.len() != self.cfg.traffic_types.len() {
            return Err(Error::InvalidInput(format!(
                "du{r}: {} split points for {} traffic types",
                splits.len(),
                self.cfg.traffic_types.len()
            )));
        }
        for (i, (s, tt)) in splits.iter().zip(&self.cfg.traffic_types).enumerate() {
            if s.get() > chain.len() {
                return Err(Error::InvalidSplit {
                    point: s.get(),
                    chain_len: chain.len(),
                });
            }
            if tt.pinned_to_du && s.get() != chain.len() {
                return Err(Error::PinnedSplit {
                    type_index: i,
                    point: s.get(),
                    chain_len: chain.len(),
                });
            }
        }
        Ok(())
    }

    fn resolve_dispatch(&self, node: NodeId, dispatch: Dispatch, max: f64) -> Result<f64> {
        match dispatch {
            Dispatch::Level(l) => {
                self.cfg
                    .dispatch_levels
                    .get(l)
                    .map(|f| f * max)
                    .ok_or_else(|| {
                        Error::InvalidInput(format!("{node}: dispatch level {l} undefined"))
                    })
            }
            Dispatch::Energy(p) => {
                // grid-snapped amounts may overshoot by rounding
                let slack = 1e-9 * max.abs().max(1.0);
                if p >= 0.0 && p <= max + slack {
                    Ok(p.min(max))
                } else {
                    Err(Error::DispatchExceeds {
                        node: node.to_string(),
                        dispatch: p,
                        limit: max,
                    })
                }
            }
        }
    }

    /// Applies one joint action and advances time by one hour.
    pub fn step(&mut self, action: &JointAction) -> Result<StepRecord> {
        if self.is_done() {
            return Err(Error::Terminated(self.t));
        }
        let r_count = self.cfg.du_count;
        if action.du.len() > r_count {
            return Err(Error::UnknownNode(NodeId::Du(r_count)));
        }
        if action.du.len() < r_count {
            return Err(Error::MissingAction(NodeId::Du(action.du.len())));
        }
        if !action.cu.splits.is_empty() {
            return Err(Error::InvalidInput(
                "the CU takes no split decisions".into(),
            ));
        }
        for (r, a) in action.du.iter().enumerate() {
            self.check_splits(r, &a.splits)?;
        }

        let d = self.data_index();
        let chain = self.cfg.chain;
        let du_loads: Vec<&[f64]> = (0..r_count).map(|r| self.loads.du_loads(r, d)).collect();
        let du_splits: Vec<&[SplitPoint]> = action.du.iter().map(|a| a.splits.as_slice()).collect();
        let e_cu = cu_energy(&du_loads, &du_splits, &self.cfg.cu, chain)?;
        let e_du = (0..r_count)
            .map(|r| du_energy(du_loads[r], du_splits[r], &self.cfg.du[r], chain))
            .collect::<Result<Vec<_>>>()?;

        let mut nodes = Vec::with_capacity(r_count + 1);
        let mut next_du = Vec::with_capacity(r_count);
        let next_cu = {
            let g = self.cu_solar.at(d);
            let (step, next) =
                self.advance_node(NodeId::Cu, &self.cu_battery, e_cu, g, action.cu.dispatch)?;
            nodes.push(step);
            next
        };
        for (r, &energy) in e_du.iter().enumerate() {
            let g = self.du_solar[r].at(d);
            let (step, next) = self.advance_node(
                NodeId::Du(r),
                &self.du_batteries[r],
                energy,
                g,
                action.du[r].dispatch,
            )?;
            nodes.push(step);
            next_du.push(next);
        }

        let per_du: Vec<(f64, f64)> = nodes[1..].iter().map(|n| (n.energy, n.dispatch)).collect();
        let price = self.cfg.tariff.price(self.t);
        let opex = step_opex(nodes[0].energy, nodes[0].dispatch, &per_du, price)?;

        self.cu_battery = next_cu;
        self.du_batteries = next_du;
        if self.history.len() == self.cfg.reward_window + 1 {
            self.history.pop_front();
        }
        self.history.push_back(opex);
        let record = StepRecord {
            t: self.t,
            price,
            opex,
            nodes,
        };
        self.t += 1;
        Ok(record)
    }

    fn advance_node(
        &self,
        node: NodeId,
        battery: &BatteryState,
        energy: f64,
        g: f64,
        dispatch: Dispatch,
    ) -> Result<(NodeStep, BatteryState)> {
        let panel = self.cfg.node_config(node).panel_size;
        let max = feasible_dispatch_max(battery, panel, g, energy);
        let p = self.resolve_dispatch(node, dispatch, max)?;
        let (next, overflow) = charge(battery, p, panel, g)?;
        Ok((
            NodeStep {
                node,
                energy,
                dispatch: p,
                generation: panel * g,
                unstored: overflow,
                stored_after: next.stored,
            },
            next,
        ))
    }
}

/// `1 / (window + 1) / (max price * E_ref)` where `E_ref` is the summed
/// consumption of all nodes at peak load with every function at that node.
pub fn default_reward_scale(cfg: &EnvConfig, loads: &LoadMatrix) -> f64 {
    let max_load: f64 = loads.max_per_type().iter().sum();
    let f = cfg.chain.len() as f64;
    let du_ref: f64 = cfg
        .du
        .iter()
        .map(|d| d.static_energy + d.dynamic_coeff * f * max_load)
        .sum();
    let cu_ref = cfg.cu.static_energy + cfg.cu.dynamic_coeff * f * max_load * cfg.du_count as f64;
    let denom = (cfg.reward_window + 1) as f64 * cfg.tariff.max_price() * (du_ref + cu_ref);
    if denom > 0.0 {
        1.0 / denom
    } else {
        1.0
    }
}

/// Totals over a run, accumulated with compensated sums.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTotals {
    pub opex: f64,
    pub renewable_used: f64,
    pub unstored: f64,
    pub generation: f64,
}

pub fn run_totals(records: &[StepRecord]) -> RunTotals {
    let mut opex = NeumaierSum::default();
    let mut used = NeumaierSum::default();
    let mut lost = NeumaierSum::default();
    let mut gen = NeumaierSum::default();
    for rec in records {
        opex.add(rec.opex);
        for n in &rec.nodes {
            used.add(n.dispatch);
            lost.add(n.unstored);
            gen.add(n.generation);
        }
    }
    RunTotals {
        opex: opex.value(),
        renewable_used: used.value(),
        unstored: lost.value(),
        generation: gen.value(),
    }
}

/// One row of the per-step episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: usize,
    pub node: String,
    #[serde(rename = "E_kwh")]
    pub energy_kwh: f64,
    #[serde(rename = "p_kwh")]
    pub dispatch_kwh: f64,
    pub unstored_kwh: f64,
    pub price: f64,
    /// This node's share of the step cost, `(E - p) * price`.
    pub opex: f64,
}

pub fn write_episode_log<W: Write>(records: &[StepRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for rec in records {
        for n in &rec.nodes {
            w.serialize(LogRow {
                t: rec.t,
                node: n.node.to_string(),
                energy_kwh: n.energy,
                dispatch_kwh: n.dispatch,
                unstored_kwh: n.unstored,
                price: rec.price,
                opex: (n.energy - n.dispatch) * rec.price,
            })?;
        }
    }
    if records.is_empty() {
        w.write_record([
            "t",
            "node",
            "E_kwh",
            "p_kwh",
            "unstored_kwh",
            "price",
            "opex",
        ])?;
    }
    w.flush().map_err(|e| Error::io("<episode log>", e))?;
    Ok(())
}

pub fn read_episode_log<R: Read>(reader: R) -> Result<Vec<LogRow>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}
