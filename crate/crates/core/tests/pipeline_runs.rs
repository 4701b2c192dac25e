use edgevad::codecs::CodecRegistry;
use edgevad::data::generate_synthetic;
use edgevad::pipeline::{
    load_run_dataset, run_scenario_on, run_suite_on, CodebookCache, CodecChoice, RunConfig,
    Scenario,
};

fn config(seed: u64, delta: f64, n_test: usize) -> RunConfig {
    let mut cfg = RunConfig {
        seed,
        timing: false,
        ..RunConfig::default()
    };
    cfg.data.synthetic.categories = vec!["bottle".into()];
    cfg.data.synthetic.n_train = 10;
    cfg.data.synthetic.n_test = n_test;
    cfg.data.synthetic.delta_sigma = delta;
    cfg.pq.k = 16;
    cfg.pq.train_samples = 512;
    cfg
}

fn image_auc(cfg: &RunConfig, name: &str) -> f64 {
    let dataset = load_run_dataset(cfg).unwrap();
    let r = run_scenario_on(
        &Scenario::builtin(name).unwrap(),
        cfg,
        &dataset,
        &CodecRegistry::default(),
        &CodebookCache::default(),
    )
    .unwrap();
    r.metrics.overall().unwrap().roc_image
}

#[test]
fn without_a_shift_detection_is_chance() {
    let mean = (0..5).map(|s| image_auc(&config(s, 0.0, 40), "raw_features")).sum::<f64>() / 5.0;
    assert!((mean - 0.5).abs() <= 0.1, "mean AUC {mean}");
}

#[test]
fn a_ten_sigma_shift_separates_perfectly() {
    assert_eq!(image_auc(&config(1, 10.0, 50), "raw_features"), 1.0);
}

#[test]
fn lossless_image_codec_matches_the_raw_image() {
    let mut cfg = config(2, 6.0, 20);
    cfg.codecs.image_codec = CodecChoice::Lossless;
    let dataset = load_run_dataset(&cfg).unwrap();
    let (registry, cache) = (CodecRegistry::default(), CodebookCache::default());
    let run = |name: &str| {
        run_scenario_on(&Scenario::builtin(name).unwrap(), &cfg, &dataset, &registry, &cache).unwrap()
    };
    let (original, webp) = (run("original"), run("webp"));
    assert_eq!(original.metrics.rows[0].f1_pixel, webp.metrics.rows[0].f1_pixel);
    assert_eq!(original.metrics.rows[0].roc_image, webp.metrics.rows[0].roc_image);
    let scores = |r: &edgevad::pipeline::ScenarioResult| r.images.iter().map(|i| i.raw_score).collect::<Vec<_>>();
    assert_eq!(scores(&original), scores(&webp));
    assert!(webp.mean_payload_bytes < original.mean_payload_bytes);
}

#[test]
fn quarter_sampling_costs_a_quarter_plus_coordinates() {
    let cfg = config(3, 6.0, 4);
    let dataset = load_run_dataset(&cfg).unwrap();
    let (registry, cache) = (CodecRegistry::default(), CodebookCache::default());
    let bytes = |name: &str| {
        run_scenario_on(&Scenario::builtin(name).unwrap(), &cfg, &dataset, &registry, &cache)
            .unwrap()
            .mean_payload_bytes
    };
    let (raw, rs) = (bytes("raw_features"), bytes("rs25"));
    // 196 cells of 512 f32 values; 49 are kept, each with two u16 coordinates
    let vector = 512.0 * 4.0;
    let expected_growth = 49.0 * (vector + 4.0) - 0.25 * 196.0 * vector;
    assert!((rs - 0.25 * raw - expected_growth).abs() < 64.0, "rs25 {rs} B, raw {raw} B");
}

#[test]
fn suite_marks_failures_and_keeps_going() {
    let mut cfg = config(4, 6.0, 6);
    cfg.scenarios = vec!["original".into(), "raw_features".into(), "rs25".into()];
    cfg.baseline = "raw_features".into();
    let mut dataset = generate_synthetic(&cfg.data.synthetic, cfg.seed).unwrap();
    for cat in &mut dataset.categories {
        for s in cat.train.iter_mut().chain(cat.test.iter_mut()) {
            s.image = None;
        }
    }
    let report = run_suite_on(&cfg, &dataset, &CodecRegistry::default());
    let failed: Vec<&str> = report.failures().map(|f| f.name.as_str()).collect();
    assert_eq!(failed, ["original"]);
    assert!(report.result("rs25").is_some());
    let lat = report.latency.as_ref().unwrap();
    assert_eq!(lat.rows.len(), 2);
    assert_eq!(lat.row("raw_features").unwrap().delta_vs_baseline_percent, 0.0);
    assert_eq!(report.tradeoff.len(), 2);
}

#[test]
fn parallel_evaluation_matches_sequential() {
    let cfg = config(5, 6.0, 10);
    let mut par = cfg.clone();
    par.parallel = true;
    let dataset = load_run_dataset(&cfg).unwrap();
    let registry = CodecRegistry::default();
    for name in ["rs50_pq", "rs50_webp"] {
        let scn = Scenario::builtin(name).unwrap();
        let a = run_scenario_on(&scn, &cfg, &dataset, &registry, &CodebookCache::default()).unwrap();
        let b = run_scenario_on(&scn, &par, &dataset, &registry, &CodebookCache::default()).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn constraint_violations_are_reported() {
    let mut cfg = config(6, 6.0, 4);
    cfg.device.compute_budget = Some(1_000_000);
    cfg.device.comm_budget = Some(10_000);
    let dataset = load_run_dataset(&cfg).unwrap();
    let (registry, cache) = (CodecRegistry::default(), CodebookCache::default());
    let run = |name: &str| {
        run_scenario_on(&Scenario::builtin(name).unwrap(), &cfg, &dataset, &registry, &cache).unwrap()
    };
    // edge CNN too large and payload over budget
    assert_eq!(run("raw_features").constraints.violations.len(), 2);
    // no model on the edge, payload within budget
    assert!(run("webp").constraints.ok());
}
