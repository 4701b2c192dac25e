//! Scenario execution: edge stage, payload, server stage, detection, metrics.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use log::{info, warn};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DataSource, RunConfig};
use super::extractor::extract_server_features;
use super::scenario::{CodecChoice, EdgeStage, Scenario};
use super::PipelineError;
use crate::channel::{
    check_constraints, ConstraintCheck, DeltaBasis, EdgeTiming, LatencyInput, LatencyReport,
    StageTimes,
};
use crate::codecs::{
    decode_raw_image, image_decode, image_encode, raw_features_decode, raw_features_payload,
    raw_image_payload, rs_decode_set, rs_encode, rs_payload, tiled_features_decode,
    tiled_features_payload, CodecConcurrency, CodecRegistry, Payload, PayloadKind, PlaneCodec,
};
use crate::data::{
    generate_synthetic, load_dataset, scan_dataset, CategoryData, Dataset, Sample, SyntheticSpec,
};
use crate::detector::{detect, AnomalyMap, MemoryBank};
use crate::metrics::{
    delta_percent, pixel_f1_best, roc_auc, CategoryKind, CategoryMetrics, MetricReport,
};
use crate::model::{build_patch_grid, Label, Mask, PatchFeature, PatchGrid};
use crate::pq::{
    pq_decode, pq_encode, pq_payload, pq_payload_decode, pq_train, CodeLayout, Codebook,
};

/// Stage times in ms; zero when the clock is off.
fn timed<R>(clock: bool, f: impl FnOnce() -> R) -> (R, f64) {
    if !clock {
        return (f(), 0.0);
    }
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1000.0)
}

/// Independent 64-bit seed per (category, role, item).
fn item_seed(seed: u64, category: usize, role: u64, item: usize) -> u64 {
    // splitmix64 finaliser over a packed key
    let mut z = seed
        ^ ((category as u64) << 40)
        ^ (role << 32)
        ^ item as u64;
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const ROLE_TRAIN: u64 = 1;
const ROLE_TEST: u64 = 2;
const ROLE_BANK: u64 = 3;
const ROLE_PQ: u64 = 4;

/// Codebooks trained offline per category and PQ setting, shared by every
/// scenario of a suite.
#[derive(Debug, Default)]
pub struct CodebookCache {
    inner: Mutex<HashMap<(String, usize, usize, usize, usize, u64), Arc<Codebook<f32>>>>,
}

impl CodebookCache {
    fn get_or_train(
        &self,
        cfg: &RunConfig,
        cat: &CategoryData,
        cat_idx: usize,
    ) -> Result<Arc<Codebook<f32>>, PipelineError> {
        let pq = &cfg.pq;
        let seed = item_seed(cfg.seed, cat_idx, ROLE_PQ, 0);
        let key = (cat.name.clone(), pq.m, pq.k, pq.max_iters, pq.train_samples, seed);
        if let Some(cb) = self.inner.lock().expect("cache lock").get(&key) {
            return Ok(cb.clone());
        }
        let mut vectors: Vec<Vec<f32>> = Vec::new();
        for s in &cat.train {
            let grid = edge_grid(s)?;
            vectors.extend(grid.into_patches().into_iter().map(|p| p.vector));
        }
        if vectors.len() > pq.train_samples {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut keep = index::sample(&mut rng, vectors.len(), pq.train_samples).into_vec();
            keep.sort_unstable();
            vectors = keep.into_iter().map(|i| std::mem::take(&mut vectors[i])).collect();
        }
        info!(
            "training PQ codebook for {} on {} vectors (m={}, K={})",
            cat.name,
            vectors.len(),
            pq.m,
            pq.k
        );
        let cb = Arc::new(pq_train(&vectors, pq.m, pq.k, pq.max_iters, seed)?);
        self.inner
            .lock()
            .expect("cache lock")
            .insert(key, cb.clone());
        Ok(cb)
    }
}

fn edge_grid(sample: &Sample) -> Result<PatchGrid<f32>, PipelineError> {
    let stack = sample.features.as_ref().ok_or_else(|| PipelineError::MissingInput {
        sample: sample.id.clone(),
        what: "edge features",
    })?;
    Ok(build_patch_grid(stack)?)
}

struct EdgeOutput {
    payload: Payload,
    feature_ms: f64,
    encode_ms: f64,
}

/// State held by the edge device, including the pre-shared codebook.
struct Edge<'a> {
    scenario: &'a Scenario,
    cfg: &'a RunConfig,
    codec: Option<Arc<dyn PlaneCodec>>,
    codebook: Option<Arc<Codebook<f32>>>,
    clock: bool,
}

impl Edge<'_> {
    fn quality(&self, stage: Option<u8>) -> u8 {
        stage.unwrap_or(self.cfg.codecs.quality)
    }

    fn image<'s>(&self, sample: &'s Sample) -> Result<&'s crate::model::Raster, PipelineError> {
        let img = sample.image.as_ref().ok_or_else(|| PipelineError::MissingInput {
            sample: sample.id.clone(),
            what: "image",
        })?;
        let side = self.cfg.image_side;
        if img.height != side || img.width != side {
            return Err(PipelineError::Scenario(format!(
                "{}: image is {}x{}, expected {side}x{side}",
                sample.id, img.height, img.width
            )));
        }
        Ok(img)
    }

    fn encode(&self, sample: &Sample, seed: u64) -> Result<EdgeOutput, PipelineError> {
        let clock = self.clock;
        let image_out = |payload, encode_ms| EdgeOutput {
            payload,
            feature_ms: 0.0,
            encode_ms,
        };
        match &self.scenario.edge {
            EdgeStage::RawImage => {
                let img = self.image(sample)?;
                let (p, ms) = timed(clock, || raw_image_payload(img));
                Ok(image_out(p?, ms))
            }
            EdgeStage::CompressedImage { quality } => {
                let img = self.image(sample)?;
                let codec = self.codec.as_deref().expect("codec resolved for compressing stages");
                let q = self.quality(*quality);
                let (p, ms) = timed(clock, || image_encode(img, q, codec));
                Ok(image_out(p?, ms))
            }
            stage => {
                let (grid, feature_ms) = timed(clock, || edge_grid(sample));
                let grid = grid?;
                let (payload, encode_ms) = timed(clock, || self.encode_features(stage, sample, &grid, seed));
                Ok(EdgeOutput {
                    payload: payload?,
                    feature_ms,
                    encode_ms,
                })
            }
        }
    }

    fn encode_features(
        &self,
        stage: &EdgeStage,
        sample: &Sample,
        grid: &PatchGrid<f32>,
        seed: u64,
    ) -> Result<Payload, PipelineError> {
        Ok(match stage {
            EdgeStage::RawFeatures => raw_features_payload(grid)?,
            EdgeStage::SampledFeatures { alpha } => rs_payload(&rs_encode(grid, *alpha, seed)?)?,
            EdgeStage::Pq { alpha } => {
                let cb = self.codebook.as_deref().expect("codebook resolved for PQ stages");
                let (vectors, layout): (Vec<&[f32]>, CodeLayout) = match alpha {
                    None => (
                        grid.patches().iter().map(|p| p.vector.as_slice()).collect(),
                        CodeLayout::Dense {
                            rows: grid.rows(),
                            cols: grid.cols(),
                        },
                    ),
                    Some(a) => {
                        let set = rs_encode(grid, *a, seed)?;
                        let coordinates = set.patches.iter().map(|p| (p.row, p.col)).collect();
                        let layout = CodeLayout::Sparse {
                            rows: grid.rows(),
                            cols: grid.cols(),
                            coordinates,
                        };
                        let keep: Vec<&[f32]> = set
                            .patches
                            .iter()
                            .map(|p| grid.patch(p.row, p.col).expect("sampled cell").vector.as_slice())
                            .collect();
                        (keep, layout)
                    }
                };
                let codes = pq_encode(&vectors, cb)?;
                let shipped = self.cfg.pq.include_codebook.then_some(cb);
                pq_payload(&codes, &layout, shipped)?
            }
            EdgeStage::TiledFeatures { alpha, quality } => {
                let stack = sample.features.as_ref().expect("grid built from features");
                let coords: Option<Vec<(usize, usize)>> = match alpha {
                    Some(a) => Some(
                        rs_encode(grid, *a, seed)?
                            .patches
                            .iter()
                            .map(|p| (p.row, p.col))
                            .collect(),
                    ),
                    None => None,
                };
                let codec = self.codec.as_deref().expect("codec resolved for compressing stages");
                tiled_features_payload(
                    stack,
                    coords.as_deref(),
                    self.quality(*quality),
                    codec,
                    self.cfg.codecs.range_mode,
                )?
            }
            EdgeStage::RawImage | EdgeStage::CompressedImage { .. } => unreachable!("image stages"),
        })
    }
}

/// What the server reconstructs from a payload.
struct ServerView {
    rows: usize,
    cols: usize,
    patches: Vec<PatchFeature<f32>>,
    decode_ms: f64,
    feature_ms: f64,
}

/// Everything the server holds. It sees a sample only through its payload.
struct Server<'a> {
    registry: &'a CodecRegistry,
    codebook: Option<Arc<Codebook<f32>>>,
    clock: bool,
}

impl Server<'_> {
    fn receive(&self, payload: &Payload) -> Result<ServerView, PipelineError> {
        let clock = self.clock;
        let from_image = |raster: crate::model::Raster, decode_ms| -> Result<ServerView, PipelineError> {
            let (grid, feature_ms) = timed(clock, || -> Result<PatchGrid<f32>, PipelineError> {
                let stack = extract_server_features(&raster, "", "")?;
                Ok(build_patch_grid(&stack)?)
            });
            let grid = grid?;
            Ok(ServerView {
                rows: grid.rows(),
                cols: grid.cols(),
                patches: grid.into_patches(),
                decode_ms,
                feature_ms,
            })
        };
        let from_grid = |grid: PatchGrid<f32>, decode_ms| ServerView {
            rows: grid.rows(),
            cols: grid.cols(),
            patches: grid.into_patches(),
            decode_ms,
            feature_ms: 0.0,
        };
        match payload.kind() {
            PayloadKind::RawImage => {
                let (r, ms) = timed(clock, || decode_raw_image(payload));
                from_image(r?, ms)
            }
            PayloadKind::CompressedImage => {
                let (r, ms) = timed(clock, || image_decode(payload, self.registry));
                from_image(r?, ms)
            }
            PayloadKind::RawFeatures => {
                let (g, ms) = timed(clock, || raw_features_decode(payload));
                Ok(from_grid(g?, ms))
            }
            PayloadKind::SampledFeatures | PayloadKind::TiledFeatures => {
                let (set, ms) = timed(clock, || {
                    if payload.kind() == PayloadKind::SampledFeatures {
                        rs_decode_set(payload)
                    } else {
                        tiled_features_decode(payload, self.registry)
                    }
                });
                let set = set?;
                Ok(ServerView {
                    rows: set.source_rows,
                    cols: set.source_cols,
                    patches: set.patches,
                    decode_ms: ms,
                    feature_ms: 0.0,
                })
            }
            PayloadKind::PqCodes => {
                let (view, ms) = timed(clock, || self.decode_pq(payload));
                let mut view = view?;
                view.decode_ms = ms;
                Ok(view)
            }
        }
    }

    fn decode_pq(&self, payload: &Payload) -> Result<ServerView, PipelineError> {
        let t = pq_payload_decode(payload)?;
        let cb = match (&t.codebook, &self.codebook) {
            (Some(cb), _) => cb,
            (None, Some(cb)) => cb.as_ref(),
            (None, None) => {
                return Err(PipelineError::Scenario(
                    "PQ payload without codebook and none pre-shared".into(),
                ))
            }
        };
        let vectors = pq_decode(&t.codes, cb)?;
        let (rows, cols, patches) = match t.layout {
            CodeLayout::Dense { rows, cols } => {
                let patches = vectors
                    .into_iter()
                    .enumerate()
                    .map(|(i, vector)| PatchFeature {
                        row: i / cols,
                        col: i % cols,
                        vector,
                    })
                    .collect();
                (rows, cols, patches)
            }
            CodeLayout::Sparse {
                rows,
                cols,
                coordinates,
            } => {
                let patches = coordinates
                    .into_iter()
                    .zip(vectors)
                    .map(|((row, col), vector)| PatchFeature { row, col, vector })
                    .collect();
                (rows, cols, patches)
            }
        };
        Ok(ServerView {
            rows,
            cols,
            patches,
            decode_ms: 0.0,
            feature_ms: 0.0,
        })
    }
}

/// One evaluated test image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub category: String,
    pub image_id: String,
    pub label: Label,
    /// Largest nearest-neighbour distance.
    pub raw_score: f64,
    /// `raw_score` min-max normalised over the category's test set.
    pub score: f64,
    pub payload_bytes: u64,
    pub times: StageTimes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: String,
    pub metrics: MetricReport,
    /// Best pixel threshold per category, on the normalised map scale.
    pub f1_thresholds: BTreeMap<String, f64>,
    pub memory_bank_rows: BTreeMap<String, usize>,
    pub images: Vec<ImageRecord>,
    /// Mean per-image stage times over the test images, or the configured
    /// override.
    pub mean_times: StageTimes,
    pub mean_payload_bytes: f64,
    pub max_payload_bytes: u64,
    pub constraints: ConstraintCheck,
}

impl ScenarioResult {
    pub fn latency_input(&self) -> LatencyInput {
        LatencyInput {
            scenario: self.scenario.clone(),
            times: self.mean_times,
            payload_bytes: self.mean_payload_bytes.round() as u64,
        }
    }
}

fn stage_codec(
    scenario: &Scenario,
    cfg: &RunConfig,
    registry: &CodecRegistry,
) -> Result<Option<Arc<dyn PlaneCodec>>, PipelineError> {
    let choice: CodecChoice = match scenario.edge {
        EdgeStage::CompressedImage { .. } => scenario.codec.unwrap_or(cfg.codecs.image_codec),
        EdgeStage::TiledFeatures { .. } => scenario.codec.unwrap_or(cfg.codecs.feature_codec),
        _ => return Ok(None),
    };
    Ok(Some(registry.get(choice.codec_id())?))
}

struct CategoryOutcome {
    metrics: CategoryMetrics,
    threshold: f64,
    bank_rows: usize,
    images: Vec<ImageRecord>,
}

fn map_samples<R: Send>(
    samples: &[Sample],
    parallel: bool,
    f: impl Fn(usize, &Sample) -> Result<R, PipelineError> + Sync,
) -> Result<Vec<R>, PipelineError> {
    if parallel {
        samples.par_iter().enumerate().map(|(j, s)| f(j, s)).collect()
    } else {
        samples.iter().enumerate().map(|(j, s)| f(j, s)).collect()
    }
}

fn evaluate_category(
    scenario: &Scenario,
    cfg: &RunConfig,
    cat: &CategoryData,
    cat_idx: usize,
    registry: &CodecRegistry,
    cache: &CodebookCache,
) -> Result<CategoryOutcome, PipelineError> {
    let codebook = match scenario.edge {
        EdgeStage::Pq { .. } => Some(cache.get_or_train(cfg, cat, cat_idx)?),
        _ => None,
    };
    let codec = stage_codec(scenario, cfg, registry)?;
    let serialized = codec
        .as_ref()
        .is_some_and(|c| c.concurrency() == CodecConcurrency::Serialized);
    let parallel = cfg.parallel && !serialized;
    let clock = cfg.captures_time();
    let edge = Edge {
        scenario,
        cfg,
        codec,
        codebook: codebook.clone(),
        clock,
    };
    let server = Server {
        registry,
        codebook,
        clock,
    };

    let train_views = map_samples(&cat.train, parallel, |j, s| {
        let out = edge.encode(s, item_seed(cfg.seed, cat_idx, ROLE_TRAIN, j))?;
        server.receive(&out.payload)
    })?;
    let vectors: Vec<&[f32]> = train_views
        .iter()
        .flat_map(|v| v.patches.iter().map(|p| p.vector.as_slice()))
        .collect();
    let bank = MemoryBank::build(
        &vectors,
        cfg.detector.coreset_ratio,
        item_seed(cfg.seed, cat_idx, ROLE_BANK, 0),
    )?;
    drop(vectors);
    drop(train_views);

    let side = cfg.image_side;
    let evaluated = map_samples(&cat.test, parallel, |j, s| -> Result<(ImageRecord, AnomalyMap), PipelineError> {
        let out = edge.encode(s, item_seed(cfg.seed, cat_idx, ROLE_TEST, j))?;
        let payload_bytes = out.payload.size_bytes() as u64;
        let view = server.receive(&out.payload)?;
        let (result, ad_ms) = timed(clock, || {
            detect(
                &bank,
                s.id.clone(),
                view.rows,
                view.cols,
                &view.patches,
                side,
                side,
                cfg.detector.sigma,
            )
        });
        let result = result?;
        let record = ImageRecord {
            category: cat.name.clone(),
            image_id: s.id.clone(),
            label: s.label,
            raw_score: result.image_score,
            score: 0.0,
            payload_bytes,
            times: StageTimes {
                edge_feature_ms: out.feature_ms,
                edge_encode_ms: out.encode_ms,
                server_decode_ms: view.decode_ms,
                server_feature_ms: view.feature_ms,
                server_ad_ms: ad_ms,
            },
        };
        Ok((record, result.anomaly_map))
    })?;

    let (mut images, maps): (Vec<ImageRecord>, Vec<AnomalyMap>) = evaluated.into_iter().unzip();
    let (lo, hi) = images
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.raw_score), hi.max(r.raw_score)));
    for r in &mut images {
        r.score = if hi > lo { (r.raw_score - lo) / (hi - lo) } else { 0.0 };
    }
    let labels: Vec<bool> = images.iter().map(|r| r.label.is_anomalous()).collect();
    let scores: Vec<f64> = images.iter().map(|r| r.score).collect();
    let roc = roc_auc(&labels, &scores)?;

    let empty = Mask::empty(side, side);
    let masks: Vec<&Mask> = cat
        .test
        .iter()
        .map(|s| match &s.mask {
            Some(m) if m.height == side && m.width == side => Ok(m),
            Some(m) => Err(PipelineError::Scenario(format!(
                "{}: mask is {}x{}, expected {side}x{side}",
                s.id, m.height, m.width
            ))),
            None => Ok(&empty),
        })
        .collect::<Result<_, _>>()?;
    let map_refs: Vec<&AnomalyMap> = maps.iter().collect();
    let f1 = pixel_f1_best(&masks, &map_refs)?;

    Ok(CategoryOutcome {
        metrics: CategoryMetrics {
            category: cat.name.clone(),
            kind: CategoryKind::of(&cat.name),
            f1_pixel: f1.f1,
            roc_image: roc,
        },
        threshold: f1.threshold,
        bank_rows: bank.len(),
        images,
    })
}

/// Runs one scenario over every category of an already loaded dataset.
pub fn run_scenario_on(
    scenario: &Scenario,
    cfg: &RunConfig,
    dataset: &Dataset,
    registry: &CodecRegistry,
    cache: &CodebookCache,
) -> Result<ScenarioResult, PipelineError> {
    scenario.validate().map_err(PipelineError::Config)?;
    if dataset.categories.is_empty() {
        return Err(PipelineError::Scenario("dataset has no categories".into()));
    }
    let mut rows = Vec::new();
    let mut thresholds = BTreeMap::new();
    let mut bank_rows = BTreeMap::new();
    let mut images = Vec::new();
    for (i, cat) in dataset.categories.iter().enumerate() {
        info!("scenario {}: category {}", scenario.name, cat.name);
        let out = evaluate_category(scenario, cfg, cat, i, registry, cache)?;
        rows.push(out.metrics);
        thresholds.insert(cat.name.clone(), out.threshold);
        bank_rows.insert(cat.name.clone(), out.bank_rows);
        images.extend(out.images);
    }
    let n = images.len().max(1) as f64;
    let mean_payload_bytes = images.iter().map(|r| r.payload_bytes as f64).sum::<f64>() / n;
    let max_payload_bytes = images.iter().map(|r| r.payload_bytes).max().unwrap_or(0);
    let mean_times = match cfg.timing_overrides.get(&scenario.name) {
        Some(t) => *t,
        None => {
            let sum = |f: fn(&StageTimes) -> f64| images.iter().map(|r| f(&r.times)).sum::<f64>() / n;
            StageTimes {
                edge_feature_ms: sum(|t| t.edge_feature_ms),
                edge_encode_ms: sum(|t| t.edge_encode_ms),
                server_decode_ms: sum(|t| t.server_decode_ms),
                server_feature_ms: sum(|t| t.server_feature_ms),
                server_ad_ms: sum(|t| t.server_ad_ms),
            }
        }
    };
    let params = scenario.edge.extracts_features().then_some(cfg.edge_model_params);
    let constraints = check_constraints(params, max_payload_bytes, &cfg.device);
    Ok(ScenarioResult {
        scenario: scenario.name.clone(),
        metrics: MetricReport {
            scenario: scenario.name.clone(),
            rows,
        },
        f1_thresholds: thresholds,
        memory_bank_rows: bank_rows,
        images,
        mean_times,
        mean_payload_bytes,
        max_payload_bytes,
        constraints,
    })
}

/// The payload the edge would send for test image `test_index` of category
/// `category_index`, exactly as a run produces it.
pub fn edge_payload(
    scenario: &Scenario,
    cfg: &RunConfig,
    dataset: &Dataset,
    category_index: usize,
    test_index: usize,
    registry: &CodecRegistry,
    cache: &CodebookCache,
) -> Result<Payload, PipelineError> {
    let cat = dataset
        .categories
        .get(category_index)
        .ok_or_else(|| PipelineError::Scenario(format!("no category #{category_index}")))?;
    let sample = cat
        .test
        .get(test_index)
        .ok_or_else(|| PipelineError::Scenario(format!("{} has no test image #{test_index}", cat.name)))?;
    let codebook = match scenario.edge {
        EdgeStage::Pq { .. } => Some(cache.get_or_train(cfg, cat, category_index)?),
        _ => None,
    };
    let edge = Edge {
        scenario,
        cfg,
        codec: stage_codec(scenario, cfg, registry)?,
        codebook,
        clock: false,
    };
    Ok(edge
        .encode(sample, item_seed(cfg.seed, category_index, ROLE_TEST, test_index))?
        .payload)
}

/// Loads (or generates) the dataset a configuration describes.
pub fn load_run_dataset(cfg: &RunConfig) -> Result<Dataset, PipelineError> {
    match cfg.data.source {
        DataSource::Synthetic => {
            let mut spec: SyntheticSpec = cfg.data.synthetic.clone();
            if !cfg.data.categories.is_empty() {
                spec.categories = cfg.data.categories.clone();
            }
            if spec.image_side != cfg.image_side {
                spec.image_side = cfg.image_side;
            }
            Ok(generate_synthetic(&spec, cfg.seed)?)
        }
        DataSource::Precomputed => {
            let root = cfg
                .data
                .root
                .as_ref()
                .ok_or_else(|| PipelineError::Config("precomputed data needs data.root".into()))?;
            let index = scan_dataset(root)?;
            let only = (!cfg.data.categories.is_empty()).then_some(cfg.data.categories.as_slice());
            Ok(load_dataset(root, &index, only)?)
        }
    }
}

/// Loads the data and runs one scenario; the latency report has the
/// scenario as its own baseline.
pub fn run_scenario(
    scenario: &Scenario,
    cfg: &RunConfig,
) -> Result<(ScenarioResult, LatencyReport), PipelineError> {
    cfg.validate()?;
    let dataset = load_run_dataset(cfg)?;
    let result = run_scenario_on(
        scenario,
        cfg,
        &dataset,
        &CodecRegistry::default(),
        &CodebookCache::default(),
    )?;
    let latency = latency_report(cfg, &[result.latency_input()], &scenario.name)?;
    Ok((result, latency))
}

fn latency_report(
    cfg: &RunConfig,
    inputs: &[LatencyInput],
    baseline: &str,
) -> Result<LatencyReport, PipelineError> {
    let timing = if cfg.edge_times_prescaled {
        EdgeTiming::Prescaled
    } else {
        EdgeTiming::Measured
    };
    Ok(LatencyReport::build(inputs, &cfg.device, baseline, timing, DeltaBasis::Exact)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStatus {
    pub name: String,
    pub error: Option<String>,
    pub result: Option<ScenarioResult>,
}

/// One point of the accuracy versus payload trade-off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub scenario: String,
    pub f1_pixel: f64,
    pub roc_image: f64,
    pub mean_payload_bytes: f64,
    pub f1_delta_percent: Option<f64>,
    pub roc_delta_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub baseline: String,
    pub scenarios: Vec<ScenarioStatus>,
    pub latency: Option<LatencyReport>,
    pub tradeoff: Vec<TradeoffPoint>,
}

impl SuiteReport {
    pub fn result(&self, name: &str) -> Option<&ScenarioResult> {
        self.scenarios
            .iter()
            .find(|s| s.name == name)
            .and_then(|s| s.result.as_ref())
    }

    pub fn failures(&self) -> impl Iterator<Item = &ScenarioStatus> {
        self.scenarios.iter().filter(|s| s.error.is_some())
    }

    pub fn metric_reports(&self) -> Vec<MetricReport> {
        self.scenarios
            .iter()
            .filter_map(|s| s.result.as_ref().map(|r| r.metrics.clone()))
            .collect()
    }
}

/// Runs every configured scenario on one dataset. A failing scenario is
/// recorded and the suite moves on.
pub fn run_suite_on(cfg: &RunConfig, dataset: &Dataset, registry: &CodecRegistry) -> SuiteReport {
    let cache = CodebookCache::default();
    let mut statuses = Vec::new();
    for name in cfg.scenario_names() {
        let status = match cfg.scenario(&name) {
            None => ScenarioStatus {
                name: name.clone(),
                error: Some(format!("unknown scenario {name:?}")),
                result: None,
            },
            Some(scn) => match run_scenario_on(&scn, cfg, dataset, registry, &cache) {
                Ok(r) => ScenarioStatus {
                    name,
                    error: None,
                    result: Some(r),
                },
                Err(e) => {
                    warn!("scenario {name} failed: {e}");
                    ScenarioStatus {
                        name,
                        error: Some(e.to_string()),
                        result: None,
                    }
                }
            },
        };
        statuses.push(status);
    }

    let inputs: Vec<LatencyInput> = statuses
        .iter()
        .filter_map(|s| s.result.as_ref().map(ScenarioResult::latency_input))
        .collect();
    let latency = if inputs.iter().any(|i| i.scenario == cfg.baseline) {
        match latency_report(cfg, &inputs, &cfg.baseline) {
            Ok(r) => Some(r),
            Err(e) => {
                warn!("latency report skipped: {e}");
                None
            }
        }
    } else {
        warn!("baseline {:?} did not run; latency report skipped", cfg.baseline);
        None
    };

    let base = statuses
        .iter()
        .find(|s| s.name == cfg.baseline)
        .and_then(|s| s.result.as_ref())
        .and_then(|r| r.metrics.overall());
    let tradeoff = statuses
        .iter()
        .filter_map(|s| s.result.as_ref())
        .filter_map(|r| {
            let o = r.metrics.overall()?;
            Some(TradeoffPoint {
                scenario: r.scenario.clone(),
                f1_pixel: o.f1_pixel,
                roc_image: o.roc_image,
                mean_payload_bytes: r.mean_payload_bytes,
                f1_delta_percent: base.and_then(|b| delta_percent(o.f1_pixel, b.f1_pixel).ok()),
                roc_delta_percent: base.and_then(|b| delta_percent(o.roc_image, b.roc_image).ok()),
            })
        })
        .collect();

    SuiteReport {
        seed: cfg.seed,
        baseline: cfg.baseline.clone(),
        scenarios: statuses,
        latency,
        tradeoff,
    }
}

/// Validates the configuration and runs the suite on the data it names.
pub fn run_suite(cfg: &RunConfig) -> Result<SuiteReport, PipelineError> {
    cfg.validate()?;
    let dataset = load_run_dataset(cfg)?;
    Ok(run_suite_on(cfg, &dataset, &CodecRegistry::default()))
}
