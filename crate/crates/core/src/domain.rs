//! Model types and the per-timestep energy and cost arithmetic.
//!
//! Every user-related function (URF) of a traffic type runs either at the
//! serving DU or at the CU. Because the chain may only be broken once, an
//! assignment is stored as a [`SplitPoint`]: functions with index below the
//! split run at the DU, the remainder at the CU.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered chain of user-related functions, bottom-up as deployed at the DU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionChain {
    count: usize,
}

impl FunctionChain {
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidInput(
                "function chain needs at least one function".into(),
            ));
        }
        Ok(Self { count })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Split point that keeps the whole chain at the DU.
    pub fn full(&self) -> SplitPoint {
        SplitPoint(self.count)
    }
}

impl Default for FunctionChain {
    fn default() -> Self {
        Self { count: 4 }
    }
}

/// Number of leading chain functions executed at the DU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SplitPoint(usize);

impl SplitPoint {
    pub fn new(point: usize, chain: FunctionChain) -> Result<Self> {
        if point > chain.len() {
            return Err(Error::InvalidSplit {
                point,
                chain_len: chain.len(),
            });
        }
        Ok(Self(point))
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Functions left for the CU.
    pub fn remaining(self, chain: FunctionChain) -> usize {
        chain.len() - self.0
    }

    /// Expands to the per-function assignment vector: `true` means the
    /// function runs at the DU.
    pub fn assignment(self, chain: FunctionChain) -> Vec<bool> {
        (0..chain.len()).map(|f| f < self.0).collect()
    }

    /// Inverse of [`SplitPoint::assignment`]; `None` if the vector breaks the
    /// chain more than once.
    pub fn from_assignment(assignment: &[bool]) -> Option<Self> {
        if !validate_split_chain(assignment) {
            return None;
        }
        Some(Self(assignment.iter().take_while(|&&a| a).count()))
    }

    fn check(self, chain: FunctionChain) -> Result<()> {
        if self.0 > chain.len() {
            return Err(Error::InvalidSplit {
                point: self.0,
                chain_len: chain.len(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for SplitPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// True iff the assignment is a run of DU functions followed by a run of CU
/// functions, i.e. `(1 - a[x]) * sum(a[y] for y >= x) == 0` for every `x`.
pub fn validate_split_chain(assignment: &[bool]) -> bool {
    assignment
        .iter()
        .enumerate()
        .all(|(x, &at_du)| at_du || assignment[x..].iter().all(|&a| !a))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficKind {
    Urllc,
    Embb,
}

impl TrafficKind {
    pub fn name(self) -> &'static str {
        match self {
            TrafficKind::Urllc => "urllc",
            TrafficKind::Embb => "embb",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficType {
    pub kind: TrafficKind,
    /// Pinned types always run the full chain at the DU.
    pub pinned_to_du: bool,
    pub load_scale: f64,
}

impl TrafficType {
    pub fn urllc(load_scale: f64) -> Self {
        Self {
            kind: TrafficKind::Urllc,
            pinned_to_du: true,
            load_scale,
        }
    }

    pub fn embb(load_scale: f64) -> Self {
        Self {
            kind: TrafficKind::Embb,
            pinned_to_du: false,
            load_scale,
        }
    }

    /// URLLC pinned at unit scale, eMBB splittable at ten times that load.
    pub fn default_set() -> Vec<TrafficType> {
        vec![Self::urllc(1.0), Self::embb(10.0)]
    }
}

/// Energy parameters of one node (the CU or a DU).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEnergyConfig {
    /// kWh per hour regardless of split decisions.
    pub static_energy: f64,
    /// kWh per (load unit x function x hour).
    pub dynamic_coeff: f64,
    /// Panel size in panel units; generation is `panel_size * G_t`.
    pub panel_size: f64,
    /// kWh.
    pub battery_capacity: f64,
}

impl NodeEnergyConfig {
    pub fn cu_default() -> Self {
        Self {
            static_energy: 10.0,
            dynamic_coeff: 0.9,
            panel_size: 500.0,
            battery_capacity: 500.0,
        }
    }

    pub fn du_default() -> Self {
        Self {
            static_energy: 5.0,
            dynamic_coeff: 1.0,
            panel_size: 100.0,
            battery_capacity: 100.0,
        }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let fields = [
            ("static_energy", self.static_energy),
            ("dynamic_coeff", self.dynamic_coeff),
            ("panel_size", self.panel_size),
            ("battery_capacity", self.battery_capacity),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::config(
                    format!("{field}.{name}"),
                    format!("must be a finite non-negative number, got {value}"),
                ));
            }
        }
        Ok(())
    }
}

/// Hour-of-day electricity prices in $/kWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TariffSchedule {
    prices: [f64; 24],
}

impl TariffSchedule {
    pub fn new(prices: Vec<f64>) -> Result<Self> {
        let prices: [f64; 24] = prices.try_into().map_err(|p: Vec<f64>| {
            Error::InvalidInput(format!("tariff needs 24 hourly prices, got {}", p.len()))
        })?;
        if let Some(bad) = prices.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "tariff prices must be non-negative, got {bad}"
            )));
        }
        Ok(Self { prices })
    }

    /// Three-band time-of-use tariff: night 22:00-06:00, day 06:00-17:00,
    /// peak 17:00-22:00.
    pub fn time_of_use(night: f64, day: f64, peak: f64) -> Self {
        let mut prices = [night; 24];
        prices[6..17].fill(day);
        prices[17..22].fill(peak);
        Self { prices }
    }

    pub fn constant(price: f64) -> Self {
        Self {
            prices: [price; 24],
        }
    }

    /// Price for an absolute hour index.
    pub fn price(&self, hour: usize) -> f64 {
        self.prices[hour % 24]
    }

    pub fn max_price(&self) -> f64 {
        self.prices.iter().copied().fold(0.0, f64::max)
    }

    pub fn prices(&self) -> &[f64; 24] {
        &self.prices
    }
}

impl Default for TariffSchedule {
    fn default() -> Self {
        Self::time_of_use(0.03, 0.07, 0.11)
    }
}

impl TryFrom<Vec<f64>> for TariffSchedule {
    type Error = Error;

    fn try_from(prices: Vec<f64>) -> Result<Self> {
        Self::new(prices)
    }
}

impl From<TariffSchedule> for Vec<f64> {
    fn from(t: TariffSchedule) -> Self {
        t.prices.to_vec()
    }
}

/// Traffic load `U[r][i][t]`, stored time-major so one timestep is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadMatrix {
    du_count: usize,
    type_count: usize,
    horizon: usize,
    values: Vec<f64>,
}

impl LoadMatrix {
    pub fn zeros(du_count: usize, type_count: usize, horizon: usize) -> Self {
        Self {
            du_count,
            type_count,
            horizon,
            values: vec![0.0; du_count * type_count * horizon],
        }
    }

    fn index(&self, du: usize, ty: usize, t: usize) -> usize {
        debug_assert!(du < self.du_count && ty < self.type_count && t < self.horizon);
        (t * self.du_count + du) * self.type_count + ty
    }

    pub fn du_count(&self) -> usize {
        self.du_count
    }

    pub fn type_count(&self) -> usize {
        self.type_count
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn get(&self, du: usize, ty: usize, t: usize) -> f64 {
        self.values[self.index(du, ty, t)]
    }

    pub fn set(&mut self, du: usize, ty: usize, t: usize, load: f64) -> Result<()> {
        if !(load.is_finite() && load >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "load must be non-negative, got {load} at du={du} type={ty} t={t}"
            )));
        }
        let idx = self.index(du, ty, t);
        self.values[idx] = load;
        Ok(())
    }

    /// Per-type loads of one DU at timestep `t`.
    pub fn du_loads(&self, du: usize, t: usize) -> &[f64] {
        let start = self.index(du, 0, t);
        &self.values[start..start + self.type_count]
    }

    /// Per-type loads summed over all DUs at timestep `t`.
    pub fn total_loads(&self, t: usize) -> Vec<f64> {
        let mut total = vec![0.0; self.type_count];
        for du in 0..self.du_count {
            for (acc, load) in total.iter_mut().zip(self.du_loads(du, t)) {
                *acc += load;
            }
        }
        total
    }

    /// Largest load of each type over all DUs and timesteps.
    pub fn max_per_type(&self) -> Vec<f64> {
        let mut max = vec![0.0f64; self.type_count];
        for chunk in self.values.chunks(self.type_count) {
            for (m, v) in max.iter_mut().zip(chunk) {
                *m = m.max(*v);
            }
        }
        max
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["du", "type", "t", "load"])?;
        for du in 0..self.du_count {
            for ty in 0..self.type_count {
                for t in 0..self.horizon {
                    w.write_record([
                        du.to_string(),
                        ty.to_string(),
                        t.to_string(),
                        self.get(du, ty, t).to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<load matrix>", e))?;
        Ok(())
    }

    /// Reads the `du,type,t,load` CSV. Dimensions are inferred from the
    /// largest indices; every cell must be present exactly once.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rows = Vec::new();
        let mut r = csv::Reader::from_reader(reader);
        for (n, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = n + 1;
            let bad = |message: String| Error::Data {
                path: "<load matrix>".into(),
                row,
                message,
            };
            if rec.len() != 4 {
                return Err(bad(format!("expected 4 fields, got {}", rec.len())));
            }
            let du: usize = rec[0].trim().parse().map_err(|_| bad("bad du".into()))?;
            let ty: usize = rec[1].trim().parse().map_err(|_| bad("bad type".into()))?;
            let t: usize = rec[2].trim().parse().map_err(|_| bad("bad t".into()))?;
            let load: f64 = rec[3].trim().parse().map_err(|_| bad("bad load".into()))?;
            if !(load.is_finite() && load >= 0.0) {
                return Err(bad(format!("negative or non-finite load {load}")));
            }
            rows.push((du, ty, t, load));
        }
        let dims = rows.iter().fold((0, 0, 0), |(a, b, c), &(du, ty, t, _)| {
            (a.max(du + 1), b.max(ty + 1), c.max(t + 1))
        });
        let mut m = LoadMatrix::zeros(dims.0, dims.1, dims.2);
        if rows.len() != m.values.len() {
            return Err(Error::Data {
                path: "<load matrix>".into(),
                row: rows.len(),
                message: format!("expected {} rows for a full matrix", m.values.len()),
            });
        }
        let mut seen = vec![false; m.values.len()];
        for (n, (du, ty, t, load)) in rows.into_iter().enumerate() {
            let idx = m.index(du, ty, t);
            if std::mem::replace(&mut seen[idx], true) {
                return Err(Error::Data {
                    path: "<load matrix>".into(),
                    row: n + 1,
                    message: "duplicate cell".into(),
                });
            }
            m.values[idx] = load;
        }
        Ok(m)
    }
}

fn check_loads(loads: &[f64]) -> Result<()> {
    match loads.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        Some(bad) => Err(Error::InvalidInput(format!(
            "loads must be non-negative, got {bad}"
        ))),
        None => Ok(()),
    }
}

/// DU consumption for one timestep: `E_S + sum_i U_i * split_i * E_D`.
pub fn du_energy(
    loads: &[f64],
    splits: &[SplitPoint],
    cfg: &NodeEnergyConfig,
    chain: FunctionChain,
) -> Result<f64> {
    if loads.len() != splits.len() {
        return Err(Error::InvalidInput(format!(
            "{} loads but {} split points",
            loads.len(),
            splits.len()
        )));
    }
    check_loads(loads)?;
    for s in splits {
        s.check(chain)?;
    }
    let dynamic: f64 = loads
        .iter()
        .zip(splits)
        .map(|(u, s)| u * s.get() as f64)
        .sum();
    Ok(cfg.static_energy + dynamic * cfg.dynamic_coeff)
}

/// CU consumption for one timestep: every function not run at a DU is run
/// here, `E_S + sum_r sum_i U_ri * (|F| - split_ri) * E_D`.
pub fn cu_energy<L, S>(
    loads: &[L],
    splits: &[S],
    cfg: &NodeEnergyConfig,
    chain: FunctionChain,
) -> Result<f64>
where
    L: AsRef<[f64]>,
    S: AsRef<[SplitPoint]>,
{
    if loads.len() != splits.len() {
        return Err(Error::InvalidInput(format!(
            "loads cover {} DUs but splits cover {}",
            loads.len(),
            splits.len()
        )));
    }
    let mut dynamic = 0.0;
    for (du, (l, s)) in loads.iter().zip(splits).enumerate() {
        let (l, s) = (l.as_ref(), s.as_ref());
        if l.len() != s.len() {
            return Err(Error::InvalidInput(format!(
                "DU {du}: {} loads but {} split points",
                l.len(),
                s.len()
            )));
        }
        check_loads(l)?;
        for (u, sp) in l.iter().zip(s) {
            sp.check(chain)?;
            dynamic += u * sp.remaining(chain) as f64;
        }
    }
    Ok(cfg.static_energy + dynamic * cfg.dynamic_coeff)
}

/// On-grid cost of one timestep: `[E_cu - p_cu + sum_r (E_r - p_r)] * price`.
pub fn step_opex(cu_energy: f64, cu_dispatch: f64, du: &[(f64, f64)], price: f64) -> Result<f64> {
    let check = |node: String, e: f64, p: f64| {
        if !(p >= 0.0 && p <= e) {
            return Err(Error::DispatchExceeds {
                node,
                dispatch: p,
                limit: e,
            });
        }
        Ok(())
    };
    check("cu".into(), cu_energy, cu_dispatch)?;
    let mut grid = cu_energy - cu_dispatch;
    for (r, &(e, p)) in du.iter().enumerate() {
        check(format!("du{r}"), e, p)?;
        grid += e - p;
    }
    if !(price.is_finite() && price >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "price must be non-negative, got {price}"
        )));
    }
    Ok(grid * price)
}
