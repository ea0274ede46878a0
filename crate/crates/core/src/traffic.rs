//! Spatiotemporal traffic generation.
//!
//! Each DU follows a sharpened daily sinusoid with its own peak phase, plus
//! Gaussian fluctuation and a yearly seasonal envelope.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{LoadMatrix, TrafficType};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Lower bound of the per-DU peak phase interval (radians).
pub const PHASE_MIN: f64 = 3.0 * PI / 4.0;
/// Upper bound of the per-DU peak phase interval (radians).
pub const PHASE_MAX: f64 = 7.0 * PI / 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficProfileConfig {
    /// Profile sharpness; larger values give narrower daily peaks.
    pub nu: f64,
    /// Explicit per-DU phases. Drawn uniformly from
    /// `[PHASE_MIN, PHASE_MAX)` when absent.
    pub phases: Option<Vec<f64>>,
    pub noise_sigma: f64,
    pub seasonal_amplitude: f64,
    /// Global multiplier (low/medium/high traffic = 0.5/1.0/1.5).
    pub intensity: f64,
    pub seed: u64,
}

impl Default for TrafficProfileConfig {
    fn default() -> Self {
        Self {
            nu: 7.0,
            phases: None,
            noise_sigma: 0.02,
            seasonal_amplitude: 0.3,
            intensity: 1.0,
            seed: 0,
        }
    }
}

impl TrafficProfileConfig {
    pub fn validate(&self, du_count: usize) -> Result<()> {
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(Error::config("traffic.nu", "must be positive"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::config("traffic.noise_sigma", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.seasonal_amplitude) {
            return Err(Error::config(
                "traffic.seasonal_amplitude",
                "must lie in [0, 1)",
            ));
        }
        if !(self.intensity.is_finite() && self.intensity >= 0.0) {
            return Err(Error::config("traffic.intensity", "must be non-negative"));
        }
        if let Some(phases) = &self.phases {
            if phases.len() != du_count {
                return Err(Error::config(
                    "traffic.phases",
                    format!("expected {du_count} phases, got {}", phases.len()),
                ));
            }
            if let Some(p) = phases
                .iter()
                .find(|p| !(PHASE_MIN..=PHASE_MAX).contains(*p))
            {
                return Err(Error::config(
                    "traffic.phases",
                    format!("phase {p} outside [3pi/4, 7pi/4]"),
                ));
            }
        }
        Ok(())
    }
}

/// `(1/2^nu) * [1 + sin(pi t / 12 + phase)]^nu`, always in `[0, 1]`.
pub fn deterministic_load(t: f64, phase: f64, nu: f64) -> f64 {
    let base = (1.0 + (PI * t / 12.0 + phase).sin()).max(0.0);
    (base / 2.0).powf(nu)
}

/// Multiplicative yearly envelope: `1 - A (1 + cos(2 pi d / 365)) / 2`.
/// Lowest (`1 - A`) at day 0, 1.0 mid-year.
pub fn seasonal_factor(t: usize, amplitude: f64) -> f64 {
    let day = ((t / 24) % 365) as f64;
    1.0 - amplitude * (1.0 + (2.0 * PI * day / 365.0).cos()) / 2.0
}

/// Draws or copies the per-DU phases.
pub fn du_phases(cfg: &TrafficProfileConfig, du_count: usize) -> Vec<f64> {
    match &cfg.phases {
        Some(p) => p.clone(),
        None => {
            let mut rng = stream_rng(cfg.seed, Stream::Traffic);
            (0..du_count)
                .map(|_| rng.random_range(PHASE_MIN..PHASE_MAX))
                .collect()
        }
    }
}

/// Builds `U[r][i][t] = scale_i * intensity * season(t) * [profile_r(t) + n_r(t)]`,
/// clamped at zero. The fluctuation `n_r(t)` is shared by all traffic types
/// of a DU so their loads stay proportional.
pub fn generate_load_matrix(
    cfg: &TrafficProfileConfig,
    horizon: usize,
    du_count: usize,
    types: &[TrafficType],
) -> Result<LoadMatrix> {
    if horizon == 0 || du_count == 0 {
        return Err(Error::InvalidInput(
            "traffic needs a positive horizon and DU count".into(),
        ));
    }
    cfg.validate(du_count)?;
    let phases = du_phases(cfg, du_count);
    // Phases come first on the stream; noise continues after them.
    let mut rng = stream_rng(cfg.seed, Stream::Traffic);
    if cfg.phases.is_none() {
        for _ in 0..du_count {
            let _: f64 = rng.random_range(PHASE_MIN..PHASE_MAX);
        }
    }
    let noise = Normal::new(0.0, cfg.noise_sigma)
        .map_err(|e| Error::config("traffic.noise_sigma", e.to_string()))?;

    let mut matrix = LoadMatrix::zeros(du_count, types.len(), horizon);
    for t in 0..horizon {
        let season = seasonal_factor(t, cfg.seasonal_amplitude);
        for (du, &phase) in phases.iter().enumerate() {
            let n = if cfg.noise_sigma > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            let shape = deterministic_load(t as f64, phase, cfg.nu) + n;
            for (ty, tt) in types.iter().enumerate() {
                let load = (tt.load_scale * cfg.intensity * season * shape).max(0.0);
                matrix.set(du, ty, t, load)?;
            }
        }
    }
    Ok(matrix)
}
