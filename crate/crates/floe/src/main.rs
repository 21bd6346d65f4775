//! Command-line front end: detect, train, predict, evaluate, stats,
//! simulate.

use std::fs;
use std::io::{BufReader, Cursor, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use floe::evaluate::{eval_native, eval_synthetic};
use floe::ingest::IngestError;
use floe::native::NativeIceberg;
use floe::pipeline::{run_detection, DetectionRun};
use floe::predict::{predict_native, PredictError};
use floe::simgen::{generate, ScenarioConfig, TruthRecord};
use floe::survival::{
    fit_all, load_model, observations_from_native, observations_from_trees, save_model,
    Model, ModelConfig, ModelError, MODEL_VERSION,
};
use floe::synthetic::{AggregationMethod, DetectorConfig, TrancheTree};

const EXIT_IO: u8 = 2;
const EXIT_FORMAT: u8 = 3;
const EXIT_NO_ICEBERGS: u8 = 4;
const EXIT_MODEL: u8 = 5;
const EXIT_CONFIG: u8 = 6;

#[derive(Parser)]
#[command(name = "floe", about = "Iceberg-order detection and prediction", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct DetectorArgs {
    /// Refill window in seconds for synthetic linking.
    #[arg(long, default_value_t = 0.3)]
    dt: f64,
    /// Minimum chain length for a synthetic tree to count as an iceberg.
    #[arg(long = "min-tranches", default_value_t = 3)]
    min_tranches: u32,
}

impl DetectorArgs {
    fn config(&self) -> Result<DetectorConfig, CliError> {
        let cfg = DetectorConfig {
            dt: self.dt,
            min_tranches: self.min_tranches,
            min_eval_tranches: self.min_tranches,
        };
        cfg.validate().map_err(CliError::Config)?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run both detectors over a log and write iceberg CSVs.
    Detect {
        /// Input log path, or `-` for stdin.
        input: String,
        #[command(flatten)]
        detector: DetectorArgs,
        /// Output directory; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write tranche-tree edges (tree_id,parent,child,gap_ms).
        #[arg(long)]
        edges: bool,
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Detect icebergs and fit the per-peak size model.
    Train {
        input: String,
        #[command(flatten)]
        detector: DetectorArgs,
        /// Model output path.
        #[arg(long, default_value = "model.json")]
        model: PathBuf,
        /// Optional directory for run.json and the model CSV export.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict the total size of a live iceberg from a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Inferred peak of the live iceberg.
        #[arg(long)]
        peak: u64,
        /// Volume consumed so far, excluding the current tranche.
        #[arg(long)]
        volume: u64,
        #[arg(long = "modes", default_value_t = 3)]
        modes: usize,
    },
    /// Score a model against a held-out log.
    Evaluate {
        input: String,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        detector: DetectorArgs,
        #[arg(long = "modes", default_value_t = 3)]
        modes: usize,
        #[arg(long, default_value = "longest")]
        aggregation: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Descriptive distribution tables for a log.
    Stats {
        input: String,
        #[command(flatten)]
        detector: DetectorArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic log plus a ground-truth file.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long = "native", default_value_t = 20)]
        n_native: usize,
        #[arg(long = "synthetic", default_value_t = 20)]
        n_synthetic: usize,
        #[arg(long = "peak-min", default_value_t = 5)]
        peak_min: u64,
        #[arg(long = "peak-max", default_value_t = 25)]
        peak_max: u64,
        #[arg(long = "tranches-min", default_value_t = 3)]
        tranches_min: u32,
        #[arg(long = "tranches-max", default_value_t = 8)]
        tranches_max: u32,
        #[arg(long = "cancel-prob", default_value_t = 0.0)]
        cancel_prob: f64,
        #[arg(long = "decoy-rate", default_value_t = 0.0)]
        decoy_rate: f64,
        #[arg(long = "simultaneous-delete-rate", default_value_t = 0.0)]
        simultaneous_delete_rate: f64,
        #[arg(long = "aggression", default_value_t = 0)]
        aggression: u64,
        #[arg(long, default_value_t = 0.3)]
        dt: f64,
    },
}

#[derive(Debug)]
enum CliError {
    Io(std::io::Error),
    Format(String),
    NoIcebergs,
    Model(ModelError),
    Config(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => EXIT_IO,
            CliError::Format(_) => EXIT_FORMAT,
            CliError::NoIcebergs => EXIT_NO_ICEBERGS,
            CliError::Model(_) => EXIT_MODEL,
            CliError::Config(_) => EXIT_CONFIG,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Io(e) => format!("i/o error: {e}"),
            CliError::Format(m) => format!("format error: {m}"),
            CliError::NoIcebergs => "no icebergs detected; nothing to fit".into(),
            CliError::Model(e) => format!("model error: {e}"),
            CliError::Config(m) => format!("config error: {m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io(e) => CliError::Io(e),
            other => CliError::Model(other),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io(e) => CliError::Io(e),
            IngestError::FormatMismatch { line } => {
                CliError::Format(format!("input does not look like an order log (line {line})"))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("floe: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

/// Read the whole input (file or stdin) so it can be both hashed for
/// run.json and parsed.
fn read_input(path: &str) -> Result<(Vec<u8>, String), CliError> {
    let bytes = if path == "-" {
        let mut buf = Vec::new();
        std::io::stdin().lock().read_to_end(&mut buf)?;
        buf
    } else {
        fs::read(path)?
    };
    let digest = format!("{:x}", Sha256::digest(&bytes));
    Ok((bytes, digest))
}

fn detect_from(bytes: &[u8], cfg: &DetectorConfig) -> Result<DetectionRun, CliError> {
    Ok(run_detection(BufReader::new(Cursor::new(bytes)), cfg)?)
}

fn write_run_json(
    out: &Path,
    command: &str,
    config: serde_json::Value,
    inputs: &[(&str, &str)],
) -> Result<(), CliError> {
    let inputs: serde_json::Map<String, serde_json::Value> = inputs
        .iter()
        .map(|&(p, d)| (p.to_string(), serde_json::Value::String(d.to_string())))
        .collect();
    let doc = serde_json::json!({
        "command": command,
        "config": config,
        "inputs": inputs,
    });
    fs::create_dir_all(out)?;
    fs::write(out.join("run.json"), serde_json::to_string_pretty(&doc).unwrap() + "\n")?;
    Ok(())
}

fn write_or_print(out: Option<&Path>, name: &str, content: &str) -> Result<(), CliError> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), content)?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "# {name}")?;
            stdout.write_all(content.as_bytes())?;
        }
    }
    Ok(())
}

fn native_csv(icebergs: &[NativeIceberg]) -> String {
    let mut s = String::from(NativeIceberg::csv_header());
    s.push('\n');
    for i in icebergs {
        s.push_str(&i.to_csv_row());
        s.push('\n');
    }
    s
}

fn synthetic_csv(trees: &[TrancheTree]) -> String {
    let mut s = String::from(TrancheTree::csv_header());
    s.push('\n');
    for t in trees {
        s.push_str(&t.to_csv_row());
        s.push('\n');
    }
    s
}

fn parse_aggregation(s: &str) -> Result<AggregationMethod, CliError> {
    AggregationMethod::parse(s)
        .ok_or_else(|| CliError::Config(format!("unknown aggregation method `{s}`")))
}

fn run(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Detect { input, detector, out, edges, format } => {
            if format != "csv" {
                return Err(CliError::Config(format!("unsupported format `{format}`")));
            }
            let cfg = detector.config()?;
            let (bytes, digest) = read_input(&input)?;
            let run = detect_from(&bytes, &cfg)?;

            write_or_print(out.as_deref(), "native.csv", &native_csv(&run.native))?;
            write_or_print(out.as_deref(), "synthetic.csv", &synthetic_csv(&run.synthetic))?;
            if edges {
                let mut e = String::from("tree_id,parent_order_id,child_order_id,gap_ms\n");
                for t in &run.synthetic {
                    for row in t.edge_rows() {
                        e.push_str(&row);
                        e.push('\n');
                    }
                }
                write_or_print(out.as_deref(), "edges.csv", &e)?;
            }

            let ice = run.iceberg_stats();
            let ratio = ice
                .hidden_volume_ratio(run.log_stats.total_traded)
                .map_or(String::from("n/a"), |r| format!("{r:.4}"));
            let summary = format!(
                "events: {} (rejected {})\nnative: {} complete, {} cancelled\nsynthetic: {} complete, {} cancelled\nhidden volume ratio: {ratio}\n",
                run.log_stats.n_events,
                run.rejected_lines,
                ice.native_complete,
                ice.native_cancelled,
                ice.synthetic_complete,
                ice.synthetic_cancelled,
            );
            write_or_print(out.as_deref(), "summary.txt", &summary)?;
            if out.is_none() {
                print!("{summary}");
            }
            if let Some(dir) = &out {
                write_run_json(
                    dir,
                    "detect",
                    serde_json::json!({"dt": cfg.dt, "min_tranches": cfg.min_tranches, "edges": edges}),
                    &[(&input, &digest)],
                )?;
            }
            Ok(())
        }
        Cmd::Train { input, detector, model, out } => {
            let cfg = detector.config()?;
            let (bytes, digest) = read_input(&input)?;
            let run = detect_from(&bytes, &cfg)?;

            let (mut obs, _skipped) = observations_from_native(&run.native);
            obs.extend(observations_from_trees(&run.synthetic));
            if obs.is_empty() {
                return Err(CliError::NoIcebergs);
            }
            let mut peaks = fit_all(&obs);
            peaks.sort_by_key(|d| d.peak);
            let m = Model {
                version: MODEL_VERSION,
                config: ModelConfig {
                    dt: cfg.dt,
                    min_tranches: cfg.min_tranches,
                    source: Some(format!("{input} sha256:{digest}")),
                },
                peaks,
            };
            save_model(&m, &model)?;
            println!(
                "trained {} peak distributions from {} native + {} synthetic icebergs -> {}",
                m.peaks.len(),
                run.native.len(),
                run.synthetic.len(),
                model.display()
            );
            if let Some(dir) = &out {
                write_or_print(Some(dir), "model.csv", &floe::survival::export_csv(&m))?;
                write_run_json(
                    dir,
                    "train",
                    serde_json::json!({"dt": cfg.dt, "min_tranches": cfg.min_tranches, "model": model.display().to_string()}),
                    &[(&input, &digest)],
                )?;
            }
            Ok(())
        }
        Cmd::Predict { model, peak, volume, modes } => {
            let m = load_model(&model)?;
            let Some(dist) = m.distribution(peak) else {
                println!("degenerate: model has no distribution for peak {peak}");
                return Ok(());
            };
            match predict_native(dist, volume, modes) {
                Ok(p) => {
                    let modes: Vec<String> = p.modes.iter().map(u64::to_string).collect();
                    println!(
                        "peak {peak} accumulated {volume}: mean {} median {} modes [{}]",
                        p.mean,
                        p.median,
                        modes.join(", ")
                    );
                }
                Err(PredictError::Degenerate) => {
                    println!("degenerate: distribution for peak {peak} has no event mass");
                }
                Err(PredictError::EmptyConstrainedSpace) => {
                    println!(
                        "complete: accumulated volume {volume} is at or past the largest observed total"
                    );
                }
            }
            Ok(())
        }
        Cmd::Evaluate { input, model, detector, modes, aggregation, out } => {
            let cfg = detector.config()?;
            let method = parse_aggregation(&aggregation)?;
            let m = load_model(&model)?;
            let (bytes, digest) = read_input(&input)?;
            let run = detect_from(&bytes, &cfg)?;

            let native_report = eval_native(&m, &run.native, modes);
            let synthetic_report =
                eval_synthetic(&m, &run.synthetic, method, cfg.min_eval_tranches);

            let text = format!(
                "== native ==\n{}\n== synthetic ({aggregation}) ==\n{}",
                native_report.render_text(),
                synthetic_report.render_text()
            );
            print!("{text}");

            if let Some(dir) = &out {
                let merge = |f: fn(&floe::evaluate::EvalReport) -> String| {
                    let a = f(&native_report);
                    let b = f(&synthetic_report);
                    // One header; the synthetic single-predictor rows are
                    // prefixed to stay distinguishable.
                    let tail: String = b
                        .lines()
                        .skip(1)
                        .map(|l| format!("synthetic_{l}\n"))
                        .collect();
                    format!("{a}{tail}")
                };
                write_or_print(Some(dir), "metrics.csv", &merge(|r| r.metrics_csv()))?;
                write_or_print(Some(dir), "confusion.csv", &merge(|r| r.confusion_csv()))?;
                write_or_print(Some(dir), "report.txt", &text)?;
                write_run_json(
                    dir,
                    "evaluate",
                    serde_json::json!({
                        "dt": cfg.dt,
                        "min_tranches": cfg.min_tranches,
                        "modes": modes,
                        "aggregation": aggregation,
                        "model": model.display().to_string(),
                    }),
                    &[(&input, &digest)],
                )?;
            }
            Ok(())
        }
        Cmd::Stats { input, detector, out } => {
            let cfg = detector.config()?;
            let (bytes, digest) = read_input(&input)?;
            let run = detect_from(&bytes, &cfg)?;
            let ice = run.iceberg_stats();

            write_or_print(out.as_deref(), "actions.csv", &run.log_stats.actions_csv())?;
            write_or_print(
                out.as_deref(),
                "trade_volumes.csv",
                &run.log_stats.trade_volume_csv(),
            )?;
            write_or_print(out.as_deref(), "completion.csv", &ice.completion_csv())?;
            write_or_print(
                out.as_deref(),
                "proportions.csv",
                &ice.proportions_csv(run.log_stats.total_traded),
            )?;
            write_or_print(out.as_deref(), "peaks.csv", &ice.peaks_csv())?;
            write_or_print(out.as_deref(), "tranches.csv", &ice.tranches_csv())?;
            write_or_print(out.as_deref(), "gaps.csv", &ice.gaps_csv())?;
            if let Some(dir) = &out {
                write_run_json(
                    dir,
                    "stats",
                    serde_json::json!({"dt": cfg.dt, "min_tranches": cfg.min_tranches}),
                    &[(&input, &digest)],
                )?;
            }
            Ok(())
        }
        Cmd::Simulate {
            out,
            seed,
            n_native,
            n_synthetic,
            peak_min,
            peak_max,
            tranches_min,
            tranches_max,
            cancel_prob,
            decoy_rate,
            simultaneous_delete_rate,
            aggression,
            dt,
        } => {
            let cfg = ScenarioConfig {
                seed,
                n_native,
                n_synthetic,
                peak_range: (peak_min, peak_max),
                tranche_range: (tranches_min, tranches_max),
                cancel_prob,
                dt,
                decoy_rate,
                simultaneous_delete_rate,
                native_aggression: aggression,
            };
            cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
            let (events, truth) = generate(&cfg);

            let mut log = String::new();
            for ev in &events {
                log.push_str(&ev.serialize_record());
                log.push('\n');
            }
            let mut truth_csv = String::from(TruthRecord::csv_header());
            truth_csv.push('\n');
            for rec in &truth {
                truth_csv.push_str(&rec.to_csv_row());
                truth_csv.push('\n');
            }
            write_or_print(Some(&out), "events.csv", &log)?;
            write_or_print(Some(&out), "truth.csv", &truth_csv)?;
            write_run_json(
                &out,
                "simulate",
                serde_json::json!({
                    "seed": seed,
                    "n_native": n_native,
                    "n_synthetic": n_synthetic,
                    "peak_range": [peak_min, peak_max],
                    "tranche_range": [tranches_min, tranches_max],
                    "cancel_prob": cancel_prob,
                    "decoy_rate": decoy_rate,
                    "simultaneous_delete_rate": simultaneous_delete_rate,
                    "aggression": aggression,
                    "dt": dt,
                }),
                &[],
            )?;
            println!(
                "wrote {} events and {} truth records to {}",
                events.len(),
                truth.len(),
                out.display()
            );
            Ok(())
        }
    }
}
