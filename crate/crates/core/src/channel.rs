//! Uplink and latency accounting.
//!
//! The channel is a constant-rate pipe with no protocol overhead, so the
//! transmission time is payload bytes over bandwidth. A kB is 1000 bytes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::delta_percent;

pub const DEFAULT_BANDWIDTH_BYTES_PER_S: f64 = 100_000.0;
pub const DEFAULT_CPU_SCALE: f64 = 3.0;
pub const BYTES_PER_KB: f64 = 1000.0;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("{field} must be positive and finite, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("timing component {field} is negative or not finite: {value}")]
    BadTiming { field: &'static str, value: f64 },
    #[error("baseline row {0:?} not present")]
    MissingBaseline(String),
}

/// Edge device and uplink description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceProfile {
    pub bandwidth_bytes_per_s: f64,
    /// Factor applied to edge times measured on a faster desk machine.
    pub cpu_scale: f64,
    /// Largest edge model allowed, in parameters.
    pub compute_budget: Option<u64>,
    /// Largest payload allowed, in bytes.
    pub comm_budget: Option<u64>,
}

impl Default for DeviceProfile {
    fn default() -> Self {
        Self {
            bandwidth_bytes_per_s: DEFAULT_BANDWIDTH_BYTES_PER_S,
            cpu_scale: DEFAULT_CPU_SCALE,
            compute_budget: None,
            comm_budget: None,
        }
    }
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<(), ChannelError> {
        for (field, value) in [
            ("bandwidth_bytes_per_s", self.bandwidth_bytes_per_s),
            ("cpu_scale", self.cpu_scale),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ChannelError::NonPositive { field, value });
            }
        }
        Ok(())
    }
}

pub fn tx_time(payload_bytes: u64, profile: &DeviceProfile) -> f64 {
    payload_bytes as f64 / profile.bandwidth_bytes_per_s
}

pub fn scale_edge_time(measured_ms: f64, profile: &DeviceProfile) -> f64 {
    measured_ms * profile.cpu_scale
}

/// Per-image stage times in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageTimes {
    pub edge_feature_ms: f64,
    pub edge_encode_ms: f64,
    pub server_decode_ms: f64,
    pub server_feature_ms: f64,
    pub server_ad_ms: f64,
}

impl StageTimes {
    pub fn validate(&self) -> Result<(), ChannelError> {
        for (field, value) in [
            ("edge_feature_ms", self.edge_feature_ms),
            ("edge_encode_ms", self.edge_encode_ms),
            ("server_decode_ms", self.server_decode_ms),
            ("server_feature_ms", self.server_feature_ms),
            ("server_ad_ms", self.server_ad_ms),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ChannelError::BadTiming { field, value });
            }
        }
        Ok(())
    }

    pub fn edge_ms(&self) -> f64 {
        self.edge_feature_ms + self.edge_encode_ms
    }

    pub fn server_ms(&self) -> f64 {
        self.server_decode_ms + self.server_feature_ms + self.server_ad_ms
    }

    /// Both edge components multiplied by the profile's CPU scale.
    pub fn scaled_edge(self, profile: &DeviceProfile) -> Self {
        Self {
            edge_feature_ms: scale_edge_time(self.edge_feature_ms, profile),
            edge_encode_ms: scale_edge_time(self.edge_encode_ms, profile),
            ..self
        }
    }
}

/// Seconds from edge start to server verdict.
pub fn total_time(times: &StageTimes, tx_s: f64) -> f64 {
    times.edge_ms() / 1000.0 + tx_s + times.server_ms() / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetKind {
    Compute,
    Communication,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: BudgetKind,
    pub actual: u64,
    pub budget: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub violations: Vec<Violation>,
}

impl ConstraintCheck {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Compares the edge model size (parameters) and payload against the
/// profile's budgets; an absent budget or model size never violates.
pub fn check_constraints(
    edge_model_params: Option<u64>,
    payload_bytes: u64,
    profile: &DeviceProfile,
) -> ConstraintCheck {
    let mut violations = Vec::new();
    if let (Some(actual), Some(budget)) = (edge_model_params, profile.compute_budget) {
        if actual > budget {
            violations.push(Violation {
                kind: BudgetKind::Compute,
                actual,
                budget,
            });
        }
    }
    if let Some(budget) = profile.comm_budget {
        if payload_bytes > budget {
            violations.push(Violation {
                kind: BudgetKind::Communication,
                actual: payload_bytes,
                budget,
            });
        }
    }
    ConstraintCheck { violations }
}

/// How edge times handed to [`LatencyReport::build`] relate to the device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeTiming {
    /// Measured on the host; multiplied by the CPU scale.
    Measured,
    /// Already expressed on the edge device; used as given.
    Prescaled,
}

/// Which totals the relative time change is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaBasis {
    Exact,
    /// Totals rounded to this many decimals of a second, as a printed table
    /// would show them.
    Rounded(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyInput {
    pub scenario: String,
    pub times: StageTimes,
    pub payload_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub scenario: String,
    pub edge_feature_ms: f64,
    pub edge_encode_ms: f64,
    pub tx_s: f64,
    pub server_decode_ms: f64,
    pub server_feature_ms: f64,
    pub server_ad_ms: f64,
    pub total_s: f64,
    pub payload_bytes: u64,
    pub delta_vs_baseline_percent: f64,
}

impl LatencyRow {
    pub fn times(&self) -> StageTimes {
        StageTimes {
            edge_feature_ms: self.edge_feature_ms,
            edge_encode_ms: self.edge_encode_ms,
            server_decode_ms: self.server_decode_ms,
            server_feature_ms: self.server_feature_ms,
            server_ad_ms: self.server_ad_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub baseline: String,
    pub bandwidth_bytes_per_s: f64,
    pub edge_timing: EdgeTiming,
    pub delta_basis: DeltaBasis,
    pub rows: Vec<LatencyRow>,
}

fn round_to(v: f64, decimals: u32) -> f64 {
    let f = 10f64.powi(decimals as i32);
    (v * f).round() / f
}

impl LatencyReport {
    pub fn build(
        inputs: &[LatencyInput],
        profile: &DeviceProfile,
        baseline: &str,
        edge_timing: EdgeTiming,
        delta_basis: DeltaBasis,
    ) -> Result<Self, ChannelError> {
        profile.validate()?;
        let mut rows = Vec::with_capacity(inputs.len());
        for input in inputs {
            input.times.validate()?;
            let times = match edge_timing {
                EdgeTiming::Measured => input.times.scaled_edge(profile),
                EdgeTiming::Prescaled => input.times,
            };
            let tx_s = tx_time(input.payload_bytes, profile);
            rows.push(LatencyRow {
                scenario: input.scenario.clone(),
                edge_feature_ms: times.edge_feature_ms,
                edge_encode_ms: times.edge_encode_ms,
                tx_s,
                server_decode_ms: times.server_decode_ms,
                server_feature_ms: times.server_feature_ms,
                server_ad_ms: times.server_ad_ms,
                total_s: total_time(&times, tx_s),
                payload_bytes: input.payload_bytes,
                delta_vs_baseline_percent: 0.0,
            });
        }
        let basis = |t: f64| match delta_basis {
            DeltaBasis::Exact => t,
            DeltaBasis::Rounded(d) => round_to(t, d),
        };
        let base_total = rows
            .iter()
            .find(|r| r.scenario == baseline)
            .map(|r| basis(r.total_s))
            .ok_or_else(|| ChannelError::MissingBaseline(baseline.to_string()))?;
        for row in &mut rows {
            row.delta_vs_baseline_percent = delta_percent(basis(row.total_s), base_total)
                .map_err(|_| ChannelError::NonPositive {
                    field: "baseline total time",
                    value: base_total,
                })?;
        }
        Ok(Self {
            baseline: baseline.to_string(),
            bandwidth_bytes_per_s: profile.bandwidth_bytes_per_s,
            edge_timing,
            delta_basis,
            rows,
        })
    }

    pub fn row(&self, scenario: &str) -> Option<&LatencyRow> {
        self.rows.iter().find(|r| r.scenario == scenario)
    }

    /// Per-image stage times in ms, one line per scenario.
    pub fn stage_table(&self) -> String {
        let mut out = String::from(
            "method,edge_feature_ms,edge_encoding_ms,server_decoding_ms,server_feature_ms,ad_ms,total_ms\n",
        );
        for r in &self.rows {
            let t = r.times();
            let _ = writeln!(
                out,
                "{},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2}",
                r.scenario,
                t.edge_feature_ms,
                t.edge_encode_ms,
                t.server_decode_ms,
                t.server_feature_ms,
                t.server_ad_ms,
                t.edge_ms() + t.server_ms()
            );
        }
        out
    }

    /// Payload size and end-to-end time per scenario.
    pub fn totals_table(&self) -> String {
        let mut out = String::from("method,payload_kb,tx_time_s,total_time_s,delta_time_percent\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.3},{:.2},{:.2},{:+.0}",
                r.scenario,
                r.payload_bytes as f64 / BYTES_PER_KB,
                r.tx_s,
                r.total_s,
                r.delta_vs_baseline_percent
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("latency report serialises")
    }
}
