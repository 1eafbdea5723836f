//! Experiment drivers and metrics output.
//!
//! [`metrics`] defines the one CSV row schema every driver emits;
//! [`decode_study`] sweeps decoding engines over depths and uplink rates;
//! [`uara`] rolls association policies over scenario episodes;
//! [`energy`] trains and evaluates across energy weights; [`report`]
//! turns any pile of rows into grouped summaries with confidence
//! intervals.

pub mod decode_study;
pub mod energy;
pub mod metrics;
pub mod report;
pub mod uara;

pub use decode_study::{decode_study, run_cell, DecodeStudyParams, EngineKind};
pub use energy::{run_at_weight, sweep_w};
pub use metrics::{
    read_metrics_csv, write_metrics_csv, MetricsRow, METRICS_HEADER, METRICS_SCHEMA_VERSION,
};
pub use report::{
    compare_to_best_rival, mean_ci, render_report, summarize_policies, t_critical_95, Comparison,
    PolicySummary, Summary,
};
pub use uara::{
    read_swap_trace_csv, rollout, write_swap_trace_csv, PolicyKind, RolloutOutcome, SwapTraceRow,
    HIGH_BATTERY_FRACTION, LOW_BATTERY_FRACTION, SINR_INTERFERENCE_COEFF,
};
