use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn edgevad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgevad"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("small.toml");
    let body = format!(
        "seed = 3\ntiming = false\n{extra}\n[data.synthetic]\ncategories = [\"bottle\"]\nn_train = 4\nn_test = 6\n[pq]\nk = 16\ntrain_samples = 256\n"
    );
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn replay_prints_the_totals_table() {
    let o = edgevad(&["replay"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("raw_features,382.000,3.82,3.94,+455"), "{out}");
    assert!(out.contains("webp,2.000,0.02,0.14,-80"), "{out}");
}

#[test]
fn replay_rejects_incomplete_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("partial.toml");
    fs::write(&path, "baseline = \"a\"\nedge_times_prescaled = true\n[[rows]]\nmethod = \"a\"\n").unwrap();
    let o = edgevad(&["replay", "--paper-overrides", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_problems_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "sede = 1\n").unwrap();
    assert_eq!(edgevad(&["suite", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(edgevad(&["run", "--scenario", "warp"]).status.code(), Some(2));
    assert_eq!(edgevad(&["inspect-payload"]).status.code(), Some(2));
}

#[test]
fn run_writes_a_payload_that_inspects() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = dir.path().join("out");
    let o = edgevad(&["run", "--scenario", "rs50_pq", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("rs50_pq,bottle,object"));
    let payload = out.join("rs50_pq.vpld");
    let o = edgevad(&["inspect-payload", payload.to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("kind: pq_codes"), "{text}");
    assert!(text.contains("sparse 98 of 14x14"), "{text}");

    let garbage = dir.path().join("garbage.vpld");
    fs::write(&garbage, b"VPLX\x01\x00").unwrap();
    assert_eq!(edgevad(&["inspect-payload", garbage.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn synth_data_round_trips_through_a_precomputed_suite() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let data = dir.path().join("data");
    let o = edgevad(&["synth-data", "--config", &cfg, "--out", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(data.join("index.json").is_file());
    assert!(data.join("bottle/train/good").is_dir());

    let extra = format!(
        "scenarios = [\"original\", \"rs25\"]\n[data]\nsource = \"precomputed\"\nroot = {:?}\n",
        data.to_str().unwrap()
    );
    let cfg = small_config(dir.path(), &extra);
    let reports = dir.path().join("reports");
    let o = edgevad(&["suite", "--config", &cfg, "--out", reports.to_str().unwrap(), "--parallel"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["metrics.csv", "table1.csv", "tradeoff.csv", "latency_totals.csv", "suite.json"] {
        assert!(reports.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn missing_category_is_a_scenario_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let cfg = small_config(dir.path(), "");
    assert!(edgevad(&["synth-data", "--config", &cfg, "--out", data.to_str().unwrap()]).status.success());
    let extra = format!(
        "[data]\nsource = \"precomputed\"\nroot = {:?}\ncategories = [\"zipper\"]\n",
        data.to_str().unwrap()
    );
    let cfg = small_config(dir.path(), &extra);
    assert_eq!(edgevad(&["suite", "--config", &cfg]).status.code(), Some(1));
}
