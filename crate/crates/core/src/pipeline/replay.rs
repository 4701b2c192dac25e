//! Rebuilds the latency tables from published stage times instead of
//! measurements, so the accounting can be checked on its own.

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::channel::{
    DeltaBasis, DeviceProfile, EdgeTiming, LatencyInput, LatencyReport, StageTimes, BYTES_PER_KB,
};

/// The bundled reference timings.
pub const REFERENCE_TIMINGS_TOML: &str = include_str!("../../data/reference_timings.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceRow {
    pub method: String,
    pub payload_kb: f64,
    pub edge_feature_ms: f64,
    pub edge_encode_ms: f64,
    pub server_decode_ms: f64,
    pub server_feature_ms: f64,
    pub server_ad_ms: f64,
}

/// Every field is required: a file missing one is rejected rather than
/// silently zero-filled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceTimings {
    pub baseline: String,
    pub edge_times_prescaled: bool,
    pub rows: Vec<ReferenceRow>,
}

impl ReferenceTimings {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let t: Self = toml::from_str(text).map_err(|e| PipelineError::Config(format!("reference timings: {e}")))?;
        if t.rows.is_empty() {
            return Err(PipelineError::Config("reference timings: no rows".into()));
        }
        if !t.rows.iter().any(|r| r.method == t.baseline) {
            return Err(PipelineError::Config(format!(
                "reference timings: baseline {:?} has no row",
                t.baseline
            )));
        }
        for r in &t.rows {
            if !(r.payload_kb >= 0.0 && r.payload_kb.is_finite()) {
                return Err(PipelineError::Config(format!(
                    "reference timings: {} payload {} kB",
                    r.method, r.payload_kb
                )));
            }
        }
        Ok(t)
    }

    pub fn builtin() -> Self {
        Self::parse(REFERENCE_TIMINGS_TOML).expect("bundled reference timings parse")
    }

    pub fn inputs(&self) -> Vec<LatencyInput> {
        self.rows
            .iter()
            .map(|r| LatencyInput {
                scenario: r.method.clone(),
                times: StageTimes {
                    edge_feature_ms: r.edge_feature_ms,
                    edge_encode_ms: r.edge_encode_ms,
                    server_decode_ms: r.server_decode_ms,
                    server_feature_ms: r.server_feature_ms,
                    server_ad_ms: r.server_ad_ms,
                },
                payload_bytes: (r.payload_kb * BYTES_PER_KB).round() as u64,
            })
            .collect()
    }
}

/// Latency tables from reference timings. Relative changes are computed from
/// totals rounded to 10 ms, matching how the published totals are printed.
pub fn replay_reference_tables(
    overrides: Option<&str>,
    profile: &DeviceProfile,
) -> Result<LatencyReport, PipelineError> {
    let timings = match overrides {
        Some(text) => ReferenceTimings::parse(text)?,
        None => ReferenceTimings::builtin(),
    };
    let timing = if timings.edge_times_prescaled {
        EdgeTiming::Prescaled
    } else {
        EdgeTiming::Measured
    };
    Ok(LatencyReport::build(
        &timings.inputs(),
        profile,
        &timings.baseline,
        timing,
        DeltaBasis::Rounded(2),
    )?)
}
