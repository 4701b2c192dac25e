//! `edgevad`: run transmission scenarios, replay latency tables, generate
//! synthetic data and inspect payload files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use edgevad::codecs::{
    decode_raw_image, image_decode, raw_features_decode, rs_decode_set, tiled_features_decode,
    CodecRegistry, Payload, PayloadKind,
};
use edgevad::data::{write_dataset, Dataset};
use edgevad::metrics::{category_table, comparison_table};
use edgevad::pipeline::{
    edge_payload, load_run_dataset, replay_reference_tables, run_scenario_on, run_suite,
    tradeoff_csv, write_suite_reports, CodebookCache, PipelineError, RunConfig,
};
use edgevad::pq::{pq_payload_decode, CodeLayout};
use log::info;

#[derive(Parser)]
#[command(name = "edgevad", version, about = "Resource-aware visual anomaly detection at the edge")]
struct Cli {
    /// Run configuration (.json, anything else is read as TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for reports and generated data.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Evaluate images on a worker pool (disables wall-clock timing).
    #[arg(long, global = true)]
    parallel: bool,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one scenario.
    Run {
        #[arg(long)]
        scenario: String,
    },
    /// Evaluate every configured scenario and write the report set.
    Suite,
    /// Rebuild the latency tables from reference stage times.
    Replay {
        /// TOML file replacing the bundled reference timings.
        #[arg(long)]
        paper_overrides: Option<PathBuf>,
    },
    /// Write the synthetic dataset as an on-disk tree.
    SynthData,
    /// Print the framing and decoded shape of a payload file.
    InspectPayload { path: PathBuf },
}

fn config_error(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Config(e.to_string())
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = Some(out.clone());
    }
    cfg.parallel |= cli.parallel;
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, body: &str) -> Result<(), PipelineError> {
    fs::write(path, body).map_err(io_error(path))
}

fn cmd_run(cli: &Cli, name: &str) -> Result<bool, PipelineError> {
    let cfg = load_config(cli)?;
    let scenario = cfg
        .scenario(name)
        .ok_or_else(|| config_error(format!("unknown scenario {name:?}")))?;
    let dataset = load_run_dataset(&cfg)?;
    let registry = CodecRegistry::default();
    let cache = CodebookCache::default();
    let result = run_scenario_on(&scenario, &cfg, &dataset, &registry, &cache)?;
    let latency = edgevad::channel::LatencyReport::build(
        &[result.latency_input()],
        &cfg.device,
        &scenario.name,
        if cfg.edge_times_prescaled {
            edgevad::channel::EdgeTiming::Prescaled
        } else {
            edgevad::channel::EdgeTiming::Measured
        },
        edgevad::channel::DeltaBasis::Exact,
    )?;
    let metrics = category_table(std::slice::from_ref(&result.metrics));
    print!("{metrics}");
    print!("{}", latency.totals_table());
    for v in &result.constraints.violations {
        println!("constraint violated: {v:?}");
    }
    if let Some(dir) = &cfg.output_dir {
        fs::create_dir_all(dir).map_err(io_error(dir))?;
        write(&dir.join("metrics.csv"), &metrics)?;
        write(&dir.join("latency_stages.csv"), &latency.stage_table())?;
        write(&dir.join("latency_totals.csv"), &latency.totals_table())?;
        write(
            &dir.join(format!("{name}.json")),
            &serde_json::to_string_pretty(&result).expect("result serialises"),
        )?;
        let payload = edge_payload(&scenario, &cfg, &dataset, 0, 0, &registry, &cache)?;
        let path = dir.join(format!("{name}.vpld"));
        fs::write(&path, payload.to_bytes()).map_err(io_error(&path))?;
        info!("reports written to {}", dir.display());
    }
    Ok(true)
}

fn cmd_suite(cli: &Cli) -> Result<bool, PipelineError> {
    let cfg = load_config(cli)?;
    let report = run_suite(&cfg)?;
    print!("{}", comparison_table(&report.metric_reports(), &report.baseline));
    print!("{}", tradeoff_csv(&report));
    if let Some(lat) = &report.latency {
        print!("{}", lat.totals_table());
    }
    if let Some(dir) = &cfg.output_dir {
        for path in write_suite_reports(&report, dir)? {
            info!("wrote {}", path.display());
        }
    }
    let mut ok = true;
    for f in report.failures() {
        eprintln!("scenario {} failed: {}", f.name, f.error.as_deref().unwrap_or_default());
        ok = false;
    }
    Ok(ok)
}

fn cmd_replay(cli: &Cli, overrides: Option<&Path>) -> Result<bool, PipelineError> {
    let cfg = load_config(cli)?;
    let text = match overrides {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| config_error(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let report = replay_reference_tables(text.as_deref(), &cfg.device)?;
    print!("{}", report.stage_table());
    print!("{}", report.totals_table());
    if let Some(dir) = &cfg.output_dir {
        fs::create_dir_all(dir).map_err(io_error(dir))?;
        write(&dir.join("replay_stages.csv"), &report.stage_table())?;
        write(&dir.join("replay_totals.csv"), &report.totals_table())?;
        write(&dir.join("replay.json"), &report.to_json())?;
    }
    Ok(true)
}

fn cmd_synth(cli: &Cli) -> Result<bool, PipelineError> {
    let cfg = load_config(cli)?;
    let dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| config_error("synth-data needs --out"))?;
    let mut synth_cfg = cfg.clone();
    synth_cfg.data.source = edgevad::pipeline::DataSource::Synthetic;
    let dataset: Dataset = load_run_dataset(&synth_cfg)?;
    let index = write_dataset(&dir, &dataset)?;
    for c in &index.categories {
        println!("{}: {} train, {} test", c.name, c.train.len(), c.test.len());
    }
    Ok(true)
}

fn describe(payload: &Payload) -> Result<String, PipelineError> {
    let registry = CodecRegistry::default();
    Ok(match payload.kind() {
        PayloadKind::RawImage => {
            let r = decode_raw_image(payload)?;
            format!("image {}x{}x{}", r.height, r.width, r.channels)
        }
        PayloadKind::CompressedImage => {
            let r = image_decode(payload, &registry)?;
            format!("image {}x{}x{}", r.height, r.width, r.channels)
        }
        PayloadKind::RawFeatures => {
            let g = raw_features_decode(payload)?;
            format!("grid {}x{}, d={}", g.rows(), g.cols(), g.dim())
        }
        PayloadKind::SampledFeatures | PayloadKind::TiledFeatures => {
            let s = if payload.kind() == PayloadKind::SampledFeatures {
                rs_decode_set(payload)?
            } else {
                tiled_features_decode(payload, &registry)?
            };
            format!(
                "{} of {}x{} cells, d={}",
                s.patches.len(),
                s.source_rows,
                s.source_cols,
                s.dim
            )
        }
        PayloadKind::PqCodes => {
            let t = pq_payload_decode(payload)?;
            let layout = match &t.layout {
                CodeLayout::Dense { rows, cols } => format!("dense {rows}x{cols}"),
                CodeLayout::Sparse {
                    rows,
                    cols,
                    coordinates,
                } => format!("sparse {} of {rows}x{cols}", coordinates.len()),
            };
            format!(
                "{} vectors, m={}, K={}, {layout}, codebook {}",
                t.codes.n(),
                t.codes.m(),
                t.codes.k(),
                if t.codebook.is_some() { "included" } else { "pre-shared" }
            )
        }
    })
}

fn cmd_inspect(path: &Path) -> Result<bool, PipelineError> {
    let bytes = fs::read(path).map_err(io_error(path))?;
    let payload = Payload::from_bytes(&bytes).map_err(edgevad::codecs::CodecError::from)?;
    println!("kind: {}", payload.kind().name());
    println!("size: {} bytes", payload.size_bytes());
    println!("meta: {} bytes", payload.meta().len());
    println!("body: {} bytes", payload.body().len());
    println!("content: {}", describe(&payload)?);
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let outcome = match &cli.command {
        Command::Run { scenario } => cmd_run(&cli, scenario),
        Command::Suite => cmd_suite(&cli),
        Command::Replay { paper_overrides } => cmd_replay(&cli, paper_overrides.as_deref()),
        Command::SynthData => cmd_synth(&cli),
        Command::InspectPayload { path } => cmd_inspect(path),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
