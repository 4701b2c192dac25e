//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p edgevad --test acceptance`.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use edgevad::channel::DeviceProfile;
use edgevad::codecs::{raw_features_payload, Payload};
use edgevad::data::FeatureFile;
use edgevad::detector::{score_patches, DetectorError, MemoryBank};
use edgevad::metrics::{best_f1_pooled, delta_percent, roc_auc, MAX_F1_THRESHOLDS};
use edgevad::model::{build_patch_grid, FeatureStack, FeatureTensor, Label, PatchFeature};
use edgevad::pipeline::{
    replay_reference_tables, run_suite, write_suite_reports, CodecChoice, RunConfig, SuiteReport,
};
use edgevad::pq::{
    pq_decode, pq_encode, pq_payload, pq_payload_decode, pq_train, reconstruction_error,
    CodeLayout, Codebook, PqCodes, PqError,
};
use edgevad::FormatError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn within_runtime(start: Instant, limit: Duration) -> Result<String, String> {
    let took = start.elapsed();
    check(took < limit, || format!("took {took:.2?}, limit {limit:?}"))?;
    Ok(format!("{:.3} s", took.as_secs_f64()))
}

fn latency_arithmetic() -> Outcome {
    let start = Instant::now();
    let report = replay_reference_tables(None, &DeviceProfile::default()).map_err(|e| e.to_string())?;
    let expected = [
        ("original", "0.60", 0.71, 0.0),
        ("raw_features", "3.82", 3.94, 455.0),
        ("webp", "0.02", 0.14, -80.0),
        ("rs25", "0.95", 1.10, 55.0),
        ("pq", "0.04", 0.24, -67.0),
        ("rs50_webp", "0.02", 0.17, -76.0),
        ("rs50_pq", "0.02", 0.17, -77.0),
    ];
    for (name, tx, total, delta) in expected {
        let row = report.row(name).ok_or_else(|| format!("no row {name}"))?;
        let got_tx = format!("{:.2}", row.tx_s);
        check(got_tx == tx, || format!("{name}: tx {got_tx} s, expected {tx}"))?;
        check((row.total_s - total).abs() <= 0.01 + 1e-9, || {
            format!("{name}: total {:.4} s, expected {total} ± 0.01", row.total_s)
        })?;
        check((row.delta_vs_baseline_percent - delta).abs() <= 1.0, || {
            format!("{name}: delta {:+.2}%, expected {delta:+} ± 1", row.delta_vs_baseline_percent)
        })?;
    }
    within_runtime(start, Duration::from_secs(1))
}

fn metric_deltas() -> Outcome {
    // (value, baseline, printed delta) for every non-baseline overall entry.
    let cases = [
        (0.523, 0.570, -8.20),
        (0.555, 0.570, -2.62),
        (0.457, 0.570, -19.79),
        (0.383, 0.570, -32.76),
        (0.337, 0.570, -40.87),
        (0.373, 0.570, -34.60),
        (0.970, 0.984, -1.43),
        (0.982, 0.984, -0.28),
        (0.942, 0.984, -4.29),
        (0.818, 0.984, -16.94),
        (0.842, 0.984, -14.47),
        (0.800, 0.984, -18.73),
    ];
    let mut worst = 0.0f64;
    for (v, b, printed) in cases {
        let d = delta_percent(v, b).map_err(|e| e.to_string())?;
        worst = worst.max((d - printed).abs());
        check((d - printed).abs() <= 0.1, || format!("{v} vs {b}: {d:.3}%, printed {printed}%"))?;
    }
    Ok(format!("12 deltas, worst gap {worst:.3} points"))
}

fn pq_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let data = common::random_vectors(&mut rng, 50, 8);
    let cb: Codebook<f32> = pq_train(&data, 2, 4, 25, 3).map_err(|e| e.to_string())?;
    let codes = pq_encode(&data, &cb).map_err(|e| e.to_string())?;
    for (i, v) in data.iter().enumerate() {
        for j in 0..2 {
            let sub = &v[j * 4..(j + 1) * 4];
            let want = common::brute_nearest_centroid(cb.subspace(j), 4, sub) as u32;
            let got = codes.vector_codes(i)[j];
            check(got == want, || format!("vector {i} subspace {j}: code {got}, scan says {want}"))?;
        }
    }

    let mut tuples = Vec::new();
    let mut concat = Vec::new();
    for a in 0..4u32 {
        for b in 0..4u32 {
            let mut v = cb.centroid(0, a as usize).to_vec();
            v.extend_from_slice(cb.centroid(1, b as usize));
            concat.push(v);
            tuples.extend([a, b]);
        }
    }
    let encoded = pq_encode(&concat, &cb).map_err(|e| e.to_string())?;
    let expected = PqCodes::new(16, 2, 4, tuples).map_err(|e| e.to_string())?;
    check(encoded == expected, || "centroid concatenations did not encode to their own codes".into())?;
    let round = pq_decode(&encoded, &cb).map_err(|e| e.to_string())?;
    for (v, r) in concat.iter().zip(&round) {
        let same = v.iter().zip(r).all(|(x, y)| x.to_bits() == y.to_bits());
        check(same, || format!("centroid concatenation {v:?} decoded to {r:?}"))?;
    }

    let mut means = Vec::new();
    for k in [2usize, 4, 8, 16] {
        let mut total = 0.0;
        for seed in 0..5u64 {
            let cb: Codebook<f32> = pq_train(&data, 2, k, 50, seed).map_err(|e| e.to_string())?;
            let dec = pq_decode(&pq_encode(&data, &cb).map_err(|e| e.to_string())?, &cb).map_err(|e| e.to_string())?;
            total += reconstruction_error(&data, &dec);
        }
        means.push(total / 5.0);
    }
    check(means.windows(2).all(|w| w[1] <= w[0]), || {
        format!("mean reconstruction error over K=2,4,8,16 not non-increasing: {means:?}")
    })?;
    let t = within_runtime(start, Duration::from_secs(5))?;
    Ok(format!("errors {:.4} {:.4} {:.4} {:.4}, {t}", means[0], means[1], means[2], means[3]))
}

fn knn_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for instance in 0..20 {
        let dim = rng.random_range(1..=64usize);
        let bank_rows = rng.random_range(1..=200usize);
        let entries: Vec<f32> = (0..bank_rows * dim).map(|_| rng.random_range(-2.0f32..2.0)).collect();
        let bank = MemoryBank::from_entries(dim, entries.clone(), instance).map_err(|e| e.to_string())?;
        let (rows, cols) = (rng.random_range(1..=8usize), rng.random_range(1..=8usize));
        let patches: Vec<PatchFeature<f32>> = (0..rows * cols)
            .map(|i| PatchFeature {
                row: i / cols,
                col: i % cols,
                vector: (0..dim).map(|_| rng.random_range(-2.0f32..2.0)).collect(),
            })
            .collect();
        let scores = score_patches(&bank, rows, cols, &patches).map_err(|e| e.to_string())?;
        for p in &patches {
            let want = common::brute_nn_distance(&entries, dim, &p.vector);
            let got = scores.at(p.row, p.col);
            let rel = (got - want).abs() / want.abs().max(1e-12);
            worst = worst.max(rel);
            check(rel <= 1e-6, || format!("instance {instance}: {got} vs brute force {want}"))?;
        }
    }
    let t = within_runtime(start, Duration::from_secs(5))?;
    Ok(format!("worst relative gap {worst:.1e}, {t}"))
}

fn auc_and_f1_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst_auc = 0.0f64;
    for instance in 0..100 {
        let n = rng.random_range(2..200usize);
        // few score levels so ties are common
        let levels = rng.random_range(2..12u32);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let got = roc_auc(&labels, &scores).map_err(|e| e.to_string())?;
        let want = common::pairwise_auc(&labels, &scores);
        worst_auc = worst_auc.max((got - want).abs());
        check((got - want).abs() <= 1e-12, || format!("instance {instance}: auc {got} vs pairwise {want}"))?;
    }

    let mut worst_f1 = 0.0f64;
    for instance in 0..20 {
        let side = 64usize;
        let (r0, c0) = (rng.random_range(0..48usize), rng.random_range(0..48usize));
        let (h, w) = (rng.random_range(4..16usize), rng.random_range(4..16usize));
        let mut labels = vec![false; side * side];
        let mut values = vec![0.0f64; side * side];
        for y in 0..side {
            for x in 0..side {
                let inside = y >= r0 && y < r0 + h && x >= c0 && x < c0 + w;
                labels[y * side + x] = inside;
                let signal = if inside { 0.6 } else { 0.0 };
                values[y * side + x] = signal + rng.random_range(0.0..0.7);
            }
        }
        let got = best_f1_pooled(&values, &labels, MAX_F1_THRESHOLDS).map_err(|e| e.to_string())?.f1;
        let want = common::exhaustive_f1(&values, &labels);
        worst_f1 = worst_f1.max((got - want).abs());
        check((got - want).abs() <= 0.005, || format!("map {instance}: f1 {got} vs exhaustive {want}"))?;
    }
    Ok(format!("worst AUC gap {worst_auc:.1e}, worst F1 gap {worst_f1:.4}"))
}

fn acceptance_config() -> RunConfig {
    RunConfig {
        timing: false,
        ..RunConfig::default()
    }
}

fn auc_of(report: &SuiteReport, name: &str) -> Result<f64, String> {
    report
        .result(name)
        .and_then(|r| r.metrics.overall())
        .map(|o| o.roc_image)
        .ok_or_else(|| format!("scenario {name} produced no result"))
}

fn payload_of(report: &SuiteReport, name: &str) -> Result<f64, String> {
    report
        .result(name)
        .map(|r| r.mean_payload_bytes)
        .ok_or_else(|| format!("scenario {name} produced no result"))
}

fn end_to_end(first: &mut Option<SuiteReport>) -> Outcome {
    let start = Instant::now();
    let cfg = acceptance_config();
    let lossy = run_suite(&cfg).map_err(|e| e.to_string())?;
    if let Some(f) = lossy.failures().next() {
        return Err(format!("{} failed: {}", f.name, f.error.as_deref().unwrap_or("")));
    }
    // The image-codec bar applies to the lossless reference codec.
    let mut lossless_cfg = cfg.clone();
    lossless_cfg.codecs.image_codec = CodecChoice::Lossless;
    lossless_cfg.scenarios = vec!["webp".into()];
    lossless_cfg.baseline = "webp".into();
    let lossless = run_suite(&lossless_cfg).map_err(|e| e.to_string())?;

    let mut aucs = BTreeMap::new();
    for name in ["original", "raw_features", "rs25"] {
        aucs.insert(name, (auc_of(&lossy, name)?, 0.95));
    }
    aucs.insert("webp", (auc_of(&lossless, "webp")?, 0.95));
    for name in ["pq", "rs50_pq", "rs50_webp"] {
        aucs.insert(name, (auc_of(&lossy, name)?, 0.80));
    }
    for (name, (auc, bar)) in &aucs {
        check(auc >= bar, || format!("{name}: image ROC AUC {auc:.4} below {bar}"))?;
    }

    let compact = ["webp", "rs50_webp", "rs50_pq", "pq"]
        .iter()
        .map(|n| payload_of(&lossy, n))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    let rs25 = payload_of(&lossy, "rs25")?;
    let original = payload_of(&lossy, "original")?;
    let raw = payload_of(&lossy, "raw_features")?;
    // "much smaller" is read as at least a factor of two
    check(2.0 * compact <= rs25, || format!("largest compact payload {compact} B not << rs25 {rs25} B"))?;
    check(rs25 < original, || format!("rs25 {rs25} B not below original {original} B"))?;
    check(2.0 * original <= raw, || format!("original {original} B not << raw_features {raw} B"))?;

    let t = within_runtime(start, Duration::from_secs(120))?;
    let min_auc = aucs.values().map(|(a, _)| *a).fold(1.0f64, f64::min);
    *first = Some(lossy);
    Ok(format!(
        "min AUC {min_auc:.3}; payload kB compact<={:.1} rs25={:.1} original={:.1} raw={:.1}; {t}",
        compact / 1e3,
        rs25 / 1e3,
        original / 1e3,
        raw / 1e3
    ))
}

fn determinism(first: Option<SuiteReport>) -> Outcome {
    let cfg = acceptance_config();
    let first = match first {
        Some(r) => r,
        None => run_suite(&cfg).map_err(|e| e.to_string())?,
    };
    let second = run_suite(&cfg).map_err(|e| e.to_string())?;
    let (a, b) = (
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    );
    let files_a = write_suite_reports(&first, a.path()).map_err(|e| e.to_string())?;
    let files_b = write_suite_reports(&second, b.path()).map_err(|e| e.to_string())?;
    check(files_a.len() == files_b.len(), || "different report file sets".into())?;
    let mut bytes = 0;
    for (fa, fb) in files_a.iter().zip(&files_b) {
        let (x, y) = (std::fs::read(fa).map_err(|e| e.to_string())?, std::fs::read(fb).map_err(|e| e.to_string())?);
        check(x == y, || format!("{} differs between runs", fa.file_name().unwrap().to_string_lossy()))?;
        bytes += x.len();
    }
    Ok(format!("{} report files, {bytes} bytes identical", files_a.len()))
}

/// Four corruption classes: each must map to its own error variant.
fn corruption_classes<E: std::fmt::Debug>(
    format: &str,
    good: &[u8],
    magic_at: usize,
    version_at: usize,
    decode: impl Fn(&[u8]) -> Result<(), E>,
    class: impl Fn(&E) -> Option<&FormatError>,
) -> Result<(), String> {
    let kind = |bytes: &[u8]| -> Result<&'static str, String> {
        match decode(bytes) {
            Ok(()) => Err(format!("{format}: corrupted input accepted")),
            Err(e) => Ok(match class(&e) {
                Some(FormatError::BadMagic { .. }) => "magic",
                Some(FormatError::UnsupportedVersion { .. }) => "version",
                Some(FormatError::Truncated { .. }) => "truncated",
                Some(FormatError::SizeMismatch(_)) => "size",
                _ => "other",
            }),
        }
    };
    let mut magic = good.to_vec();
    magic[magic_at] ^= 0x55;
    let mut version = good.to_vec();
    version[version_at] = version[version_at].wrapping_add(1);
    let mut trailing = good.to_vec();
    trailing.extend_from_slice(&[0; 4]);
    let got = [
        kind(&magic)?,
        kind(&version)?,
        kind(&good[..good.len().min(7)])?,
        kind(&trailing)?,
    ];
    check(got == ["magic", "version", "truncated", "size"], || {
        format!("{format}: corruption classes reported as {got:?}")
    })
}

fn format_round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let layer = |rng: &mut ChaCha8Rng, l: u8, c: usize, s: usize| {
        FeatureTensor::new(l, c, s, s, (0..c * s * s).map(|_| rng.random_range(-3.0f32..3.0)).collect())
    };
    let layers = vec![
        layer(&mut rng, 1, 6, 8).map_err(|e| e.to_string())?,
        layer(&mut rng, 2, 4, 4).map_err(|e| e.to_string())?,
    ];
    let stack = FeatureStack::new("shift/test_001", "carpet", Label::Anomalous, None, layers).map_err(|e| e.to_string())?;
    let file = FeatureFile {
        stack: stack.clone(),
        mask_ref: "carpet/ground_truth/shift/test_001_mask.vimg".into(),
    };
    let bytes = file.to_bytes().map_err(|e| e.to_string())?;
    let back = FeatureFile::from_bytes(&bytes).map_err(|e| e.to_string())?;
    check(back == file && back.to_bytes().unwrap() == bytes, || "feature file round trip".into())?;
    corruption_classes("feature file", &bytes, 0, 4, |b| FeatureFile::from_bytes(b).map(drop), |e| Some(e))?;

    let grid = build_patch_grid(&stack).map_err(|e| e.to_string())?;
    let vectors: Vec<&[f32]> = grid.patches().iter().map(|p| p.vector.as_slice()).collect();
    let cb: Codebook<f32> = pq_train(&vectors, 2, 8, 10, 4).map_err(|e| e.to_string())?;
    let cb_bytes = cb.to_bytes();
    let cb_back = Codebook::from_bytes(&cb_bytes).map_err(|e| e.to_string())?;
    check(cb_back.to_bytes() == cb_bytes && cb_back.centroids() == cb.centroids(), || "codebook round trip".into())?;
    corruption_classes("codebook", &cb_bytes, 0, 4, |b| Codebook::from_bytes(b).map(drop), |e| match e {
        PqError::Format(f) => Some(f),
        _ => None,
    })?;

    let bank = MemoryBank::build(&vectors, 0.25, 8).map_err(|e| e.to_string())?;
    let bank_bytes = bank.to_bytes();
    let bank_back = MemoryBank::<f32>::from_bytes(&bank_bytes).map_err(|e| e.to_string())?;
    check(bank_back.to_bytes() == bank_bytes && bank_back.entries() == bank.entries(), || "memory bank round trip".into())?;
    corruption_classes("memory bank", &bank_bytes, 0, 4, |b| MemoryBank::<f32>::from_bytes(b).map(drop), |e| match e {
        DetectorError::Format(f) => Some(f),
        _ => None,
    })?;

    let codes = pq_encode(&vectors, &cb).map_err(|e| e.to_string())?;
    let layout = CodeLayout::Dense {
        rows: grid.rows(),
        cols: grid.cols(),
    };
    let payloads = [
        raw_features_payload(&grid).map_err(|e| e.to_string())?,
        pq_payload(&codes, &layout, Some(&cb)).map_err(|e| e.to_string())?,
    ];
    for p in &payloads {
        let wire = p.to_bytes();
        let back = Payload::from_bytes(&wire).map_err(|e| e.to_string())?;
        check(back == *p && back.to_bytes() == wire, || format!("{:?} payload round trip", p.kind()))?;
        corruption_classes("payload", &wire, 0, 4, |b| Payload::from_bytes(b).map(drop), |e| Some(e))?;
    }
    let t = pq_payload_decode(&payloads[1]).map_err(|e| e.to_string())?;
    check(t.codes == codes && t.codebook.as_ref().map(|c| c.to_bytes()) == Some(cb_bytes), || {
        "pq payload contents".into()
    })?;
    Ok("feature file, codebook, memory bank, payloads; 4 corruption classes each".into())
}

fn main() {
    let mut suite_run = None;
    let outcomes: Vec<(&str, Outcome)> = vec![
        ("latency arithmetic replay", latency_arithmetic()),
        ("metric delta arithmetic", metric_deltas()),
        ("PQ oracle equivalence", pq_oracle()),
        ("KNN oracle equivalence", knn_oracle()),
        ("ROC AUC and F1 oracles", auc_and_f1_oracle()),
        ("end-to-end synthetic separability", end_to_end(&mut suite_run)),
        ("suite determinism", determinism(suite_run.take())),
        ("format round-trips", format_round_trips()),
    ];
    let total = outcomes.len();
    let mut failed = 0;
    for (i, (name, outcome)) in outcomes.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("PASS [{}/{total}] {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}/{total}] {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", total - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
