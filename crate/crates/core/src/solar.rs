//! Renewable generation per panel unit, `G_t` in kWh per panel unit per hour.
//!
//! Traces come from pre-computed hourly CSV exports (`hour,kwh_per_unit`) or
//! from a synthetic clear-sky arc with lognormal cloud attenuation.

use std::f64::consts::PI;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct SolarTrace {
    pub site_name: String,
    values: Vec<f64>,
}

impl SolarTrace {
    pub fn new(site_name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::InvalidInput(format!(
                "solar value {v} at hour {i} must be non-negative"
            )));
        }
        Ok(Self {
            site_name: site_name.into(),
            values,
        })
    }

    /// All-zero trace (no panel output).
    pub fn dark(horizon: usize) -> Self {
        Self {
            site_name: "dark".into(),
            values: vec![0.0; horizon],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Generation per panel unit at absolute hour `t`, wrapping cyclically.
    pub fn at(&self, t: usize) -> f64 {
        self.values[t % self.values.len()]
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["hour", "kwh_per_unit"])?;
        for (h, v) in self.values.iter().enumerate() {
            w.write_record([h.to_string(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<solar trace>", e))?;
        Ok(())
    }
}

/// Writes a trace to `path` in the ingestion format.
pub fn write_trace(trace: &SolarTrace, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    trace.write_csv(file)
}

/// Reads exactly `horizon` hourly values. Longer files are truncated with a
/// warning; shorter ones are an error.
pub fn load_trace(path: &Path, horizon: usize) -> Result<SolarTrace> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let bad = |row: usize, message: String| Error::Data {
        path: path.to_path_buf(),
        row,
        message,
    };
    let headers = reader.headers()?.clone();
    if headers.len() != 2 || headers[0].trim() != "hour" || headers[1].trim() != "kwh_per_unit" {
        return Err(bad(0, "expected header `hour,kwh_per_unit`".into()));
    }
    let mut values = Vec::with_capacity(horizon);
    let mut total_rows = 0;
    for (n, rec) in reader.records().enumerate() {
        let row = n + 1;
        let rec = rec.map_err(|e| bad(row, e.to_string()))?;
        total_rows += 1;
        if values.len() == horizon {
            continue;
        }
        if rec.len() != 2 {
            return Err(bad(row, format!("expected 2 fields, got {}", rec.len())));
        }
        let hour: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| bad(row, format!("bad hour `{}`", &rec[0])))?;
        if hour != n {
            return Err(bad(
                row,
                format!("hour {hour} out of sequence, expected {n}"),
            ));
        }
        let v: f64 = rec[1]
            .trim()
            .parse()
            .map_err(|_| bad(row, format!("bad value `{}`", &rec[1])))?;
        if !v.is_finite() || v < 0.0 {
            return Err(bad(row, format!("negative or non-finite generation {v}")));
        }
        values.push(v);
    }
    if values.len() < horizon {
        return Err(Error::TraceTooShort {
            path: path.to_path_buf(),
            found: values.len(),
            needed: horizon,
        });
    }
    if total_rows > horizon {
        log::warn!(
            "{}: {total_rows} rows, truncated to horizon {horizon}",
            path.display()
        );
    }
    let site = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(SolarTrace {
        site_name: site,
        values,
    })
}

/// Parameters of the synthetic clear-sky generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSolar {
    /// kWh per panel unit at solar noon.
    pub peak: f64,
    pub sunrise: f64,
    pub sunset: f64,
    /// Standard deviation of the log cloud factor.
    pub cloud_sigma: f64,
}

impl Default for SyntheticSolar {
    fn default() -> Self {
        Self {
            peak: 0.3,
            sunrise: 6.0,
            sunset: 18.0,
            cloud_sigma: 0.0,
        }
    }
}

impl SyntheticSolar {
    pub fn trace(&self, horizon: usize, seed: u64, site: u32) -> Result<SolarTrace> {
        synthetic_trace(
            self.peak,
            self.sunrise,
            self.sunset,
            horizon,
            seed,
            site,
            self.cloud_sigma,
        )
    }
}

/// Half-sine arc between sunrise and sunset scaled to `peak`, times a
/// mean-one lognormal cloud factor per hour. `site` selects an independent
/// cloud stream.
pub fn synthetic_trace(
    peak: f64,
    sunrise: f64,
    sunset: f64,
    horizon: usize,
    seed: u64,
    site: u32,
    cloud_sigma: f64,
) -> Result<SolarTrace> {
    if !(0.0 <= sunrise && sunrise < sunset && sunset <= 24.0) {
        return Err(Error::InvalidInput(format!(
            "need 0 <= sunrise < sunset <= 24, got {sunrise}..{sunset}"
        )));
    }
    if !(peak.is_finite() && peak >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "peak must be non-negative, got {peak}"
        )));
    }
    if !(cloud_sigma.is_finite() && cloud_sigma >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "cloud_sigma must be non-negative, got {cloud_sigma}"
        )));
    }
    let mut rng = stream_rng(seed, Stream::SolarClouds(site));
    let clouds = Normal::new(-cloud_sigma * cloud_sigma / 2.0, cloud_sigma)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let day = sunset - sunrise;
    let values = (0..horizon)
        .map(|t| {
            let hour = (t % 24) as f64;
            let clear = if hour >= sunrise && hour < sunset {
                peak * (PI * (hour - sunrise) / day).sin().max(0.0)
            } else {
                0.0
            };
            if cloud_sigma > 0.0 {
                clear * clouds.sample(&mut rng).exp()
            } else {
                clear
            }
        })
        .collect();
    Ok(SolarTrace {
        site_name: "synthetic".into(),
        values,
    })
}
