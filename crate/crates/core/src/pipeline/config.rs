//! Run configuration, read from JSON or TOML.
//!
//! Every section and field is optional; see the README for the schema.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scenario::{CodecChoice, Scenario, BUILTIN_SCENARIOS};
use super::PipelineError;
use crate::channel::{DeviceProfile, StageTimes};
use crate::codecs::RangeMode;
use crate::data::SyntheticSpec;
use crate::detector::{DEFAULT_CORESET_RATIO, DEFAULT_SIGMA};

/// Parameter count of the MobileNetV2 edge backbone.
pub const DEFAULT_EDGE_MODEL_PARAMS: u64 = 3_504_872;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Synthetic,
    /// Feature files and images on disk in the scanned layout.
    Precomputed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub root: Option<PathBuf>,
    /// Categories to evaluate; empty means all the source provides.
    pub categories: Vec<String>,
    pub synthetic: SyntheticSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            root: None,
            categories: Vec::new(),
            synthetic: SyntheticSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub coreset_ratio: f64,
    /// Gaussian smoothing of the anomaly map, in output pixels.
    pub sigma: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            coreset_ratio: DEFAULT_CORESET_RATIO,
            sigma: DEFAULT_SIGMA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PqConfig {
    pub m: usize,
    pub k: usize,
    pub max_iters: usize,
    /// Training vectors drawn from the normal split; all when fewer exist.
    pub train_samples: usize,
    /// Ship the codebook inside every payload instead of pre-sharing it.
    pub include_codebook: bool,
}

impl Default for PqConfig {
    fn default() -> Self {
        Self {
            m: 8,
            k: 256,
            max_iters: 20,
            train_samples: 4096,
            include_codebook: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    pub image_codec: CodecChoice,
    pub feature_codec: CodecChoice,
    pub quality: u8,
    pub range_mode: RangeMode,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            image_codec: CodecChoice::Lossy,
            feature_codec: CodecChoice::Lossy,
            quality: 80,
            range_mode: RangeMode::PerTensor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Evaluate images on a worker pool. Disables wall-clock capture.
    pub parallel: bool,
    /// Capture stage times with a monotonic clock. When off, every time is
    /// zero unless overridden, which makes reports byte-reproducible.
    pub timing: bool,
    /// Treat stage times (measured or overridden) as already expressed on
    /// the edge device, skipping the CPU scale.
    pub edge_times_prescaled: bool,
    /// Side of the square images the maps are rendered at.
    pub image_side: usize,
    /// Scenario names to run in order; empty means the seven built-ins.
    pub scenarios: Vec<String>,
    pub custom_scenarios: Vec<Scenario>,
    pub baseline: String,
    /// Edge model size checked against the compute budget by scenarios that
    /// extract features on the edge.
    pub edge_model_params: u64,
    /// Per-scenario stage times replacing measurements.
    pub timing_overrides: BTreeMap<String, StageTimes>,
    pub data: DataConfig,
    pub device: DeviceProfile,
    pub detector: DetectorConfig,
    pub pq: PqConfig,
    pub codecs: CodecConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: None,
            parallel: false,
            timing: true,
            edge_times_prescaled: false,
            image_side: 224,
            scenarios: Vec::new(),
            custom_scenarios: Vec::new(),
            baseline: "original".into(),
            edge_model_params: DEFAULT_EDGE_MODEL_PARAMS,
            timing_overrides: BTreeMap::new(),
            data: DataConfig::default(),
            device: DeviceProfile::default(),
            detector: DetectorConfig::default(),
            pq: PqConfig::default(),
            codecs: CodecConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg: Self = if is_json {
            serde_json::from_str(&text)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Wall-clock capture is active only for sequential, timed runs.
    pub fn captures_time(&self) -> bool {
        self.timing && !self.parallel
    }

    /// Resolves a scenario name against the custom list, then the built-ins.
    pub fn scenario(&self, name: &str) -> Option<Scenario> {
        self.custom_scenarios
            .iter()
            .find(|s| s.name == name)
            .cloned()
            .or_else(|| Scenario::builtin(name))
    }

    pub fn scenario_names(&self) -> Vec<String> {
        if self.scenarios.is_empty() {
            BUILTIN_SCENARIOS.iter().map(|s| s.to_string()).collect()
        } else {
            self.scenarios.clone()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        self.device
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.image_side == 0 || self.image_side % 16 != 0 || self.image_side > u16::MAX as usize {
            return bad(format!("image_side {} must be a positive multiple of 16", self.image_side));
        }
        if !(self.detector.coreset_ratio > 0.0 && self.detector.coreset_ratio <= 1.0) {
            return bad(format!("coreset_ratio {} outside (0, 1]", self.detector.coreset_ratio));
        }
        if !(self.detector.sigma >= 0.0 && self.detector.sigma.is_finite()) {
            return bad(format!("sigma {} must be non-negative", self.detector.sigma));
        }
        if self.codecs.quality > 100 {
            return bad(format!("quality {} above 100", self.codecs.quality));
        }
        let pq = &self.pq;
        if pq.m == 0 || pq.k == 0 || !pq.k.is_power_of_two() || pq.k > 1 << 16 || pq.max_iters == 0 {
            return bad(format!(
                "pq needs m > 0, K a power of two up to 65536 and max_iters > 0 (m={}, K={}, max_iters={})",
                pq.m, pq.k, pq.max_iters
            ));
        }
        if pq.train_samples < pq.k {
            return bad(format!("pq.train_samples {} below K = {}", pq.train_samples, pq.k));
        }
        for s in &self.custom_scenarios {
            s.validate().map_err(PipelineError::Config)?;
        }
        for name in self.scenario_names() {
            if self.scenario(&name).is_none() {
                return bad(format!("unknown scenario {name:?}"));
            }
        }
        match self.data.source {
            DataSource::Synthetic => self
                .data
                .synthetic
                .validate()
                .map_err(|e| PipelineError::Config(e.to_string()))?,
            DataSource::Precomputed => match &self.data.root {
                Some(root) if root.is_dir() => {}
                Some(root) => return bad(format!("dataset root {} does not exist", root.display())),
                None => return bad("precomputed data needs data.root".into()),
            },
        }
        Ok(())
    }
}
