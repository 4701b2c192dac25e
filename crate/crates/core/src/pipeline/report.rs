use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::run::SuiteReport;
use super::PipelineError;
use crate::metrics::{category_table, comparison_table};

fn opt(v: Option<f64>) -> String {
    v.map(|d| format!("{d:+.2}")).unwrap_or_default()
}

pub fn tradeoff_csv(report: &SuiteReport) -> String {
    let mut out = String::from("method,f1_pixel,roc_image,payload_kb,f1_delta_percent,roc_delta_percent\n");
    for p in &report.tradeoff {
        let _ = writeln!(
            out,
            "{},{:.4},{:.4},{:.3},{},{}",
            p.scenario,
            p.f1_pixel,
            p.roc_image,
            p.mean_payload_bytes / 1000.0,
            opt(p.f1_delta_percent),
            opt(p.roc_delta_percent)
        );
    }
    out
}

pub fn image_scores_csv(report: &SuiteReport) -> String {
    let mut out = String::from("method,category,image_id,label,raw_score,score,payload_bytes\n");
    for r in report.scenarios.iter().filter_map(|s| s.result.as_ref()) {
        for img in &r.images {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{}",
                r.scenario,
                img.category,
                img.image_id,
                u8::from(img.label.is_anomalous()),
                img.raw_score,
                img.score,
                img.payload_bytes
            );
        }
    }
    out
}

/// Writes every table of a suite run into `dir` and returns the paths in
/// write order. Contents depend only on the report, so a run without
/// wall-clock capture reproduces byte for byte.
pub fn write_suite_reports(report: &SuiteReport, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let metrics = report.metric_reports();
    let mut files: Vec<(&str, String)> = vec![
        ("metrics.csv", category_table(&metrics)),
        ("table1.csv", comparison_table(&metrics, &report.baseline)),
        ("tradeoff.csv", tradeoff_csv(report)),
        ("scores.csv", image_scores_csv(report)),
    ];
    if let Some(lat) = &report.latency {
        files.push(("latency_stages.csv", lat.stage_table()));
        files.push(("latency_totals.csv", lat.totals_table()));
        files.push(("latency.json", lat.to_json()));
    }
    let summary = serde_json::to_string_pretty(report).expect("suite report serialises");
    files.push(("suite.json", summary));
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| PipelineError::Io {
            path: path.clone(),
            source: e,
        })?;
        written.push(path);
    }
    Ok(written)
}
