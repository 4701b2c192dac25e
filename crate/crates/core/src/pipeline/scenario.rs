use serde::{Deserialize, Serialize};

use crate::codecs::PayloadKind;

/// Which still-image codec a compressing stage uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodecChoice {
    /// The reference lossless plane codec (wire id 0).
    Lossless,
    /// Whatever codec is registered under wire id 1; the block-DCT codec by
    /// default.
    Lossy,
}

impl CodecChoice {
    pub fn codec_id(self) -> u8 {
        match self {
            Self::Lossless => crate::codecs::LOSSLESS_CODEC_ID,
            Self::Lossy => crate::codecs::BLOCK_DCT_CODEC_ID,
        }
    }
}

/// What the edge device does with an image before transmission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EdgeStage {
    /// Send the resized image untouched.
    RawImage,
    /// Compress the image; `quality` falls back to the configured default.
    CompressedImage { quality: Option<u8> },
    /// Send every patch vector as f32.
    RawFeatures,
    /// Send a random fraction `alpha` of the patch vectors as f32.
    SampledFeatures { alpha: f64 },
    /// Product-quantize the patch vectors, optionally after sampling.
    Pq { alpha: Option<f64> },
    /// Tile each layer into an 8-bit plane and compress it, optionally
    /// keeping only the cells under a random sample of locations.
    TiledFeatures {
        alpha: Option<f64>,
        quality: Option<u8>,
    },
}

impl EdgeStage {
    /// True when the edge runs the feature extractor.
    pub fn extracts_features(&self) -> bool {
        !matches!(self, Self::RawImage | Self::CompressedImage { .. })
    }

    pub fn payload_kind(&self) -> PayloadKind {
        match self {
            Self::RawImage => PayloadKind::RawImage,
            Self::CompressedImage { .. } => PayloadKind::CompressedImage,
            Self::RawFeatures => PayloadKind::RawFeatures,
            Self::SampledFeatures { .. } => PayloadKind::SampledFeatures,
            Self::Pq { .. } => PayloadKind::PqCodes,
            Self::TiledFeatures { .. } => PayloadKind::TiledFeatures,
        }
    }

    fn alpha(&self) -> Option<f64> {
        match self {
            Self::SampledFeatures { alpha } => Some(*alpha),
            Self::Pq { alpha } | Self::TiledFeatures { alpha, .. } => *alpha,
            _ => None,
        }
    }

    fn quality(&self) -> Option<u8> {
        match self {
            Self::CompressedImage { quality } | Self::TiledFeatures { quality, .. } => *quality,
            _ => None,
        }
    }
}

/// Where the server gets the vectors it scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    /// Patch vectors decoded from the payload, computed by the edge.
    EdgeFeatures,
    /// The server runs its own extractor on the decoded image.
    ServerExtracted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub edge: EdgeStage,
    /// Overrides the configured codec of a compressing stage.
    #[serde(default)]
    pub codec: Option<CodecChoice>,
}

pub const BUILTIN_SCENARIOS: [&str; 7] = [
    "original",
    "raw_features",
    "webp",
    "rs25",
    "pq",
    "rs50_webp",
    "rs50_pq",
];

impl Scenario {
    pub fn builtin(name: &str) -> Option<Self> {
        let edge = match name {
            "original" => EdgeStage::RawImage,
            "raw_features" => EdgeStage::RawFeatures,
            "webp" => EdgeStage::CompressedImage { quality: None },
            "rs25" => EdgeStage::SampledFeatures { alpha: 0.25 },
            "pq" => EdgeStage::Pq { alpha: None },
            "rs50_webp" => EdgeStage::TiledFeatures {
                alpha: Some(0.5),
                quality: None,
            },
            "rs50_pq" => EdgeStage::Pq { alpha: Some(0.5) },
            _ => return None,
        };
        Some(Self {
            name: name.to_string(),
            edge,
            codec: None,
        })
    }

    pub fn builtins() -> Vec<Self> {
        BUILTIN_SCENARIOS
            .iter()
            .map(|n| Self::builtin(n).expect("builtin"))
            .collect()
    }

    pub fn feature_source(&self) -> FeatureSource {
        if self.edge.extracts_features() {
            FeatureSource::EdgeFeatures
        } else {
            FeatureSource::ServerExtracted
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.name.is_empty() {
            return Err("scenario name is empty".into());
        }
        if let Some(a) = self.edge.alpha() {
            if !(a > 0.0 && a <= 1.0) {
                return Err(format!("{}: sampling ratio {a} outside (0, 1]", self.name));
            }
        }
        if let Some(q) = self.edge.quality() {
            if q > 100 {
                return Err(format!("{}: quality {q} above 100", self.name));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_cover_every_payload_kind_but_one() {
        let kinds: Vec<PayloadKind> = Scenario::builtins().iter().map(|s| s.edge.payload_kind()).collect();
        assert_eq!(kinds.len(), 7);
        assert_eq!(kinds.iter().filter(|k| **k == PayloadKind::PqCodes).count(), 2);
        assert!(Scenario::builtin("nope").is_none());
    }

    #[test]
    fn custom_scenarios_parse_from_toml() {
        let s: Scenario = toml::from_str(
            "name = \"rs10\"\n[edge]\nkind = \"sampled_features\"\nalpha = 0.1\n",
        )
        .unwrap();
        assert_eq!(s.edge, EdgeStage::SampledFeatures { alpha: 0.1 });
        let bad = Scenario {
            name: "x".into(),
            edge: EdgeStage::SampledFeatures { alpha: 1.5 },
            codec: None,
        };
        assert!(bad.validate().is_err());
    }
}
