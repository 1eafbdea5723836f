//! The one row format every experiment driver emits.
//!
//! All studies share a single wide CSV schema so downstream tooling can
//! concatenate, filter, and summarize without per-study parsers. Fields a
//! study does not produce are left empty. Writing is deterministic: the
//! same rows always serialize to the same bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Bumped when the column set or meaning changes.
pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// One measurement row.
///
/// `slot` is set on per-slot rows and empty on whole-rollout aggregates.
/// `gamma`, `rate_bps`, `tokens_per_s`, and `psd_idle_frac` belong to
/// decoding studies; `w`, `mean_objective`, and the energy tiers belong to
/// association/allocation studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// Always [`METRICS_SCHEMA_VERSION`] for rows written by this build.
    pub schema_version: u32,
    /// Which driver produced the row (e.g. `decode-study`, `eval`).
    pub run_id: String,
    /// Master seed of the run the row came from.
    pub seed: u64,
    /// Slot index for per-slot rows; empty for aggregates.
    pub slot: Option<usize>,
    /// Decoding engine or association policy name.
    pub policy: String,
    /// Speculation depth, decoding rows only.
    pub gamma: Option<usize>,
    /// Uplink rate, bits/s, decoding rows only.
    pub rate_bps: Option<f64>,
    /// Energy weight in effect, allocation rows only.
    pub w: Option<f64>,
    /// Decoding rows: wall-clock job latency. Allocation rows: mean
    /// per-device task latency in the slot(s).
    pub mean_latency_s: f64,
    /// Mean scalar objective, allocation rows only.
    pub mean_objective: Option<f64>,
    /// Mean per-device energy across all devices, allocation rows only.
    pub mean_energy_j: Option<f64>,
    /// Mean per-device energy spent by devices that started the rollout
    /// with a high battery level.
    pub energy_high_batt_j: Option<f64>,
    /// Same for devices that started with a low battery level.
    pub energy_low_batt_j: Option<f64>,
    /// Decoding throughput, tokens per second.
    pub tokens_per_s: Option<f64>,
    /// Fraction of the decode during which the device sat idle,
    /// pipelined-engine rows only.
    pub psd_idle_frac: Option<f64>,
}

/// The exact header [`write_metrics_csv`] produces.
pub const METRICS_HEADER: &str = "schema_version,run_id,seed,slot,policy,gamma,rate_bps,w,\
     mean_latency_s,mean_objective,mean_energy_j,energy_high_batt_j,energy_low_batt_j,\
     tokens_per_s,psd_idle_frac";

/// Writes rows (with header) to `path`. Same rows, same bytes.
pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads rows written by [`write_metrics_csv`].
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        rows.push(record?);
    }
    Ok(rows)
}
