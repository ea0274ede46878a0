//! Scenario files: one TOML document describing the network, traffic, solar
//! input, policy, run bookkeeping and oracle limits. Every field has a
//! default; the defaults describe one CU with 20 DUs over a year.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{DiscretizationSpec, LearningParams};
use crate::domain::{FunctionChain, NodeEnergyConfig, TariffSchedule, TrafficType};
use crate::env::{EnvConfig, Environment};
use crate::error::{Error, Result};
use crate::oracle::{OracleDispatch, OracleLimits};
use crate::policy::PolicyKind;
use crate::solar::{load_trace, SolarTrace, SyntheticSolar};
use crate::traffic::{generate_load_matrix, TrafficProfileConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TariffBands {
    pub night: f64,
    pub day: f64,
    pub peak: f64,
}

impl Default for TariffBands {
    fn default() -> Self {
        Self {
            night: 0.03,
            day: 0.07,
            peak: 0.11,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NodePatch {
    static_energy: Option<f64>,
    dynamic_coeff: Option<f64>,
    panel_size: Option<f64>,
    battery_capacity: Option<f64>,
}

impl NodePatch {
    fn apply(self, mut base: NodeEnergyConfig) -> NodeEnergyConfig {
        base.static_energy = self.static_energy.unwrap_or(base.static_energy);
        base.dynamic_coeff = self.dynamic_coeff.unwrap_or(base.dynamic_coeff);
        base.panel_size = self.panel_size.unwrap_or(base.panel_size);
        base.battery_capacity = self.battery_capacity.unwrap_or(base.battery_capacity);
        base
    }
}

fn cu_patch<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<NodeEnergyConfig, D::Error> {
    Ok(NodePatch::deserialize(d)?.apply(NodeEnergyConfig::cu_default()))
}

fn du_patch<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<NodeEnergyConfig, D::Error> {
    Ok(NodePatch::deserialize(d)?.apply(NodeEnergyConfig::du_default()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub du_count: usize,
    pub chain_len: usize,
    pub horizon: usize,
    pub day_length: usize,
    pub reward_window: usize,
    pub reward_scale: Option<f64>,
    pub initial_battery_fraction: f64,
    pub dispatch_levels: Vec<f64>,
    /// Explicit 24 hourly prices; overrides `tariff_bands`.
    pub tariff: Option<Vec<f64>>,
    pub tariff_bands: TariffBands,
    #[serde(deserialize_with = "cu_patch")]
    pub cu: NodeEnergyConfig,
    #[serde(deserialize_with = "du_patch")]
    pub du: NodeEnergyConfig,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self {
            du_count: 20,
            chain_len: 4,
            horizon: 24 * 365,
            day_length: 24,
            reward_window: 48,
            reward_scale: None,
            initial_battery_fraction: 0.0,
            dispatch_levels: vec![0.0, 0.5, 1.0],
            tariff: None,
            tariff_bands: TariffBands::default(),
            cu: NodeEnergyConfig::cu_default(),
            du: NodeEnergyConfig::du_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSection {
    pub nu: f64,
    pub phases: Option<Vec<f64>>,
    pub noise_sigma: f64,
    pub seasonal_amplitude: f64,
    pub intensity: f64,
    pub urllc_scale: f64,
    pub embb_scale: f64,
}

impl Default for TrafficSection {
    fn default() -> Self {
        let p = TrafficProfileConfig::default();
        Self {
            nu: p.nu,
            phases: None,
            noise_sigma: p.noise_sigma,
            seasonal_amplitude: p.seasonal_amplitude,
            intensity: p.intensity,
            urllc_scale: 1.0,
            embb_scale: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolarSection {
    /// Label used in summaries.
    pub city: String,
    /// Trace shared by every node unless overridden below.
    pub trace: Option<PathBuf>,
    pub cu_trace: Option<PathBuf>,
    pub du_traces: Option<Vec<PathBuf>>,
    /// Used for every node without a trace file.
    pub synthetic: SyntheticSolar,
}

impl Default for SolarSection {
    fn default() -> Self {
        Self {
            city: "synthetic".into(),
            trace: None,
            cu_trace: None,
            du_traces: None,
            synthetic: SyntheticSolar::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub kind: PolicyKind,
    pub learning: LearningParams,
    pub discretization: DiscretizationSpec,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self {
            kind: PolicyKind::RldfsQl,
            learning: LearningParams::default(),
            discretization: DiscretizationSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seeds: vec![1],
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub max_horizon: usize,
    pub max_dus: usize,
    pub max_chain: usize,
    pub max_states: usize,
    /// Fine dispatch grid in kWh; the agents' levels when absent.
    pub grid_step: Option<f64>,
}

impl Default for OracleSection {
    fn default() -> Self {
        let l = OracleLimits::default();
        Self {
            max_horizon: l.max_horizon,
            max_dus: l.max_dus,
            max_chain: l.max_chain,
            max_states: l.max_states,
            grid_step: None,
        }
    }
}

impl OracleSection {
    pub fn limits(&self) -> OracleLimits {
        OracleLimits {
            max_horizon: self.max_horizon,
            max_dus: self.max_dus,
            max_chain: self.max_chain,
            max_states: self.max_states,
        }
    }

    pub fn dispatch(&self) -> OracleDispatch {
        match self.grid_step {
            Some(step) => OracleDispatch::Grid { step },
            None => OracleDispatch::Levels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub policies: Vec<PolicyKind>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            policies: vec![
                PolicyKind::Dran,
                PolicyKind::Cran,
                PolicyKind::RldfsQl,
                PolicyKind::RldfsSarsa,
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Panel,
    Battery,
    Traffic,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Panel => "panel",
            SweepAxis::Battery => "battery",
            SweepAxis::Traffic => "traffic",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "panel" => Ok(SweepAxis::Panel),
            "battery" => Ok(SweepAxis::Battery),
            "traffic" => Ok(SweepAxis::Traffic),
            _ => Err(Error::config("axis", format!("unknown sweep axis `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub env: EnvSection,
    pub traffic: TrafficSection,
    pub solar: SolarSection,
    pub policy: PolicySection,
    pub run: RunSection,
    pub oracle: OracleSection,
    pub sweep: SweepSection,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| format!("line {}", text[..s.start].matches('\n').count() + 1))
                .unwrap_or_else(|| "<document>".into());
            Error::config(field, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config { field, message } => Error::Config {
                field: format!("{}: {field}", path.display()),
                message,
            },
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.env;
        if e.chain_len == 0 {
            return Err(Error::config("env.chain_len", "must be at least 1"));
        }
        self.env_config(false)?.validate()?;
        self.traffic_profile(0).validate(e.du_count)?;
        for (name, v) in [
            ("traffic.urllc_scale", self.traffic.urllc_scale),
            ("traffic.embb_scale", self.traffic.embb_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(name, "must be non-negative"));
            }
        }
        let s = &self.solar.synthetic;
        if !(0.0 <= s.sunrise && s.sunrise < s.sunset && s.sunset <= 24.0) {
            return Err(Error::config(
                "solar.synthetic",
                "need 0 <= sunrise < sunset <= 24",
            ));
        }
        if !(s.peak.is_finite() && s.peak >= 0.0) {
            return Err(Error::config(
                "solar.synthetic.peak",
                "must be non-negative",
            ));
        }
        if !(s.cloud_sigma.is_finite() && s.cloud_sigma >= 0.0) {
            return Err(Error::config(
                "solar.synthetic.cloud_sigma",
                "must be non-negative",
            ));
        }
        if let Some(d) = &self.solar.du_traces {
            if d.len() != e.du_count {
                return Err(Error::config(
                    "solar.du_traces",
                    format!("{} traces for {} DUs", d.len(), e.du_count),
                ));
            }
        }
        self.policy.learning.validate()?;
        self.policy.discretization.validate()?;
        if self.run.seeds.is_empty() {
            return Err(Error::config("run.seeds", "need at least one seed"));
        }
        if let Some(step) = self.oracle.grid_step {
            if !(step.is_finite() && step > 0.0) {
                return Err(Error::config("oracle.grid_step", "must be positive"));
            }
        }
        if self.sweep.policies.is_empty() {
            return Err(Error::config("sweep.policies", "need at least one policy"));
        }
        Ok(())
    }

    pub fn traffic_types(&self) -> Vec<TrafficType> {
        vec![
            TrafficType::urllc(self.traffic.urllc_scale),
            TrafficType::embb(self.traffic.embb_scale),
        ]
    }

    pub fn traffic_profile(&self, seed: u64) -> TrafficProfileConfig {
        TrafficProfileConfig {
            nu: self.traffic.nu,
            phases: self.traffic.phases.clone(),
            noise_sigma: self.traffic.noise_sigma,
            seasonal_amplitude: self.traffic.seasonal_amplitude,
            intensity: self.traffic.intensity,
            seed,
        }
    }

    pub fn env_config(&self, cyclic: bool) -> Result<EnvConfig> {
        let e = &self.env;
        let tariff = match &e.tariff {
            Some(prices) => TariffSchedule::new(prices.clone())
                .map_err(|err| Error::config("env.tariff", err.to_string()))?,
            None => {
                let b = &e.tariff_bands;
                if [b.night, b.day, b.peak]
                    .iter()
                    .any(|p| !(p.is_finite() && *p >= 0.0))
                {
                    return Err(Error::config(
                        "env.tariff_bands",
                        "prices must be non-negative",
                    ));
                }
                TariffSchedule::time_of_use(b.night, b.day, b.peak)
            }
        };
        let chain = FunctionChain::new(e.chain_len)
            .map_err(|err| Error::config("env.chain_len", err.to_string()))?;
        Ok(EnvConfig {
            du_count: e.du_count,
            chain,
            horizon: e.horizon,
            day_length: e.day_length,
            tariff,
            cu: e.cu,
            du: vec![e.du; e.du_count],
            traffic_types: self.traffic_types(),
            reward_window: e.reward_window,
            reward_scale: e.reward_scale,
            initial_battery_fraction: e.initial_battery_fraction,
            dispatch_levels: e.dispatch_levels.clone(),
            cyclic,
        })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Solar traces for the CU and each DU. Nodes without a trace file share
    /// one synthetic city trace.
    pub fn solar_traces(&self, seed: u64) -> Result<(SolarTrace, Vec<SolarTrace>)> {
        let horizon = self.env.horizon;
        let s = &self.solar;
        let synthetic = s.synthetic.trace(horizon, seed, 0)?;
        let shared = match &s.trace {
            Some(p) => load_trace(&self.resolve(p), horizon)?,
            None => synthetic,
        };
        let cu = match &s.cu_trace {
            Some(p) => load_trace(&self.resolve(p), horizon)?,
            None => shared.clone(),
        };
        let du = match &s.du_traces {
            Some(paths) => paths
                .iter()
                .map(|p| load_trace(&self.resolve(p), horizon))
                .collect::<Result<_>>()?,
            None => vec![shared; self.env.du_count],
        };
        Ok((cu, du))
    }

    /// Builds the environment for one seed. Training uses a cyclic
    /// environment, evaluation a terminating one.
    pub fn build_env(&self, seed: u64, cyclic: bool) -> Result<Environment> {
        let cfg = self.env_config(cyclic)?;
        let loads = generate_load_matrix(
            &self.traffic_profile(seed),
            cfg.horizon,
            cfg.du_count,
            &cfg.traffic_types,
        )?;
        let (cu, du) = self.solar_traces(seed)?;
        Environment::new(cfg, loads, cu, du)
    }

    /// Copy with one sweep axis set to `value`. Panel and battery values set
    /// the DU size; the CU keeps its size ratio to the DU.
    pub fn with_axis(&self, axis: SweepAxis, value: f64) -> Self {
        let mut c = self.clone();
        let scaled = |cu: f64, du: f64| if du > 0.0 { cu * value / du } else { value };
        match axis {
            SweepAxis::Panel => {
                c.env.cu.panel_size = scaled(self.env.cu.panel_size, self.env.du.panel_size);
                c.env.du.panel_size = value;
            }
            SweepAxis::Battery => {
                c.env.cu.battery_capacity =
                    scaled(self.env.cu.battery_capacity, self.env.du.battery_capacity);
                c.env.du.battery_capacity = value;
            }
            SweepAxis::Traffic => c.traffic.intensity = value,
        }
        c
    }
}
