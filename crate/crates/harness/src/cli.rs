//! CLI subcommands: `generate`, `calibrate`, `train`, `run`, `sweep`,
//! `report`. Errors print machine-readable JSON to stderr; usage and config
//! problems exit 2, runtime failures exit 1.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use hspice_core::pattern::load_patterns;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::model::{train, TrainSettings};
use crate::profile::{generate_stream, StreamProfile};
use crate::qor::QoRReport;
use crate::report::merge_reports;
use crate::runner::{calibrate, load_inputs, run_experiment_with};

#[derive(Parser)]
#[command(
    name = "hspice",
    about = "CEP load-shedding engine and experiment harness",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic event stream from a profile.
    Generate {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        patterns: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sidecar listing planted occurrences (advisory; truth comes from
        /// an unshed run).
        #[arg(long)]
        sidecar: Option<PathBuf>,
        /// Also write the stream schema here.
        #[arg(long)]
        schema_out: Option<PathBuf>,
    },
    /// Measure unshed operator throughput on a stream prefix.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        /// Override the calibration prefix length.
        #[arg(long)]
        events: Option<usize>,
        /// Write {"mu": ...} here instead of stdout only.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the utility model and baseline models; export the bundle.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay one experiment and write its QoR report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the configured rate percentage.
        #[arg(long)]
        rate: Option<f64>,
        /// Per-event latency samples CSV.
        #[arg(long)]
        latency_csv: Option<PathBuf>,
        /// Controller plan trace, JSON lines.
        #[arg(long)]
        plan_trace: Option<PathBuf>,
        /// Detected complex events, JSON lines.
        #[arg(long)]
        detected: Option<PathBuf>,
    },
    /// Run a grid of experiments (rates and/or window sizes).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated rate percentages, e.g. 120,140,160,180,200.
        #[arg(long, value_delimiter = ',')]
        rates: Vec<f64>,
        /// Comma-separated window sizes; each retrains the model.
        #[arg(long, value_delimiter = ',')]
        window_sizes: Vec<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Merge QoR reports into a CSV summary.
    Report {
        /// Report files; directories are scanned for *.json.
        #[arg(long, required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            let payload = json!({"error": err.to_string(), "kind": err.kind()});
            eprintln!("{payload}");
            err.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            profile,
            patterns,
            out,
            sidecar,
            schema_out,
        } => cmd_generate(
            &profile,
            &patterns,
            &out,
            sidecar.as_deref(),
            schema_out.as_deref(),
        ),
        Command::Calibrate {
            config,
            events,
            out,
        } => cmd_calibrate(&config, events, out.as_deref()),
        Command::Train { config, out } => cmd_train(&config, &out),
        Command::Run {
            config,
            out,
            rate,
            latency_csv,
            plan_trace,
            detected,
        } => cmd_run(
            &config,
            &out,
            rate,
            latency_csv.as_deref(),
            plan_trace.as_deref(),
            detected.as_deref(),
        ),
        Command::Sweep {
            config,
            rates,
            window_sizes,
            out_dir,
        } => cmd_sweep(&config, &rates, &window_sizes, &out_dir),
        Command::Report { inputs, out } => cmd_report(&inputs, &out),
    }
}

pub fn cmd_generate(
    profile_path: &Path,
    patterns_path: &Path,
    out: &Path,
    sidecar: Option<&Path>,
    schema_out: Option<&Path>,
) -> Result<()> {
    let profile = StreamProfile::load(profile_path)?;
    let patterns = load_patterns(patterns_path)?;
    let summary = generate_stream(&profile, &patterns, out, sidecar)?;
    if let Some(path) = schema_out {
        std::fs::write(path, serde_json::to_string_pretty(&profile.schema())?)?;
    }
    println!(
        "{}",
        json!({
            "events": summary.events,
            "planted": summary.planted.len(),
            "skipped_plants": summary.skipped_plants,
            "out": out,
        })
    );
    Ok(())
}

pub fn cmd_calibrate(config_path: &Path, events: Option<usize>, out: Option<&Path>) -> Result<()> {
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(n) = events {
        config.calibration_events = n;
    }
    let inputs = load_inputs(&config)?;
    let mu = calibrate(&config, inputs.machines.clone(), &inputs.events)?;
    let payload = json!({"mu": mu, "events": config.calibration_events.min(inputs.events.len())});
    println!("{payload}");
    if let Some(path) = out {
        std::fs::write(path, serde_json::to_string_pretty(&payload)?)?;
    }
    Ok(())
}

pub fn cmd_train(config_path: &Path, out: &Path) -> Result<()> {
    let config = ExperimentConfig::load(config_path)?;
    let inputs = load_inputs(&config)?;
    let settings = TrainSettings {
        type_count: inputs.schema.type_count,
        positions: config.positions(),
        bin_size: config.bin_size,
        min_observations: config.min_observations,
        cost_model: config.cost_model,
    };
    let model = train(
        &inputs.events,
        &inputs.specs,
        inputs.machines.clone(),
        config.window,
        &settings,
    )?;
    model.save(out)?;
    println!(
        "{}",
        json!({
            "out": out,
            "observations": model.observations,
            "training_windows": model.training_windows,
            "ws_v": model.virtual_window.ws_v,
            "avg_o": model.virtual_window.avg_o,
        })
    );
    Ok(())
}

pub fn cmd_run(
    config_path: &Path,
    out: &Path,
    rate: Option<f64>,
    latency_csv: Option<&Path>,
    plan_trace: Option<&Path>,
    detected: Option<&Path>,
) -> Result<()> {
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(r) = rate {
        config.rate_pct = r;
        config.validate()?;
    }
    let inputs = load_inputs(&config)?;
    let artifacts = run_experiment_with(&config, &inputs)?;
    std::fs::write(out, serde_json::to_string_pretty(&artifacts.report)?)?;
    if let Some(path) = latency_csv {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["seq", "latency_ns"])?;
        for sample in &artifacts.output.latencies {
            w.write_record([sample.seq.to_string(), sample.latency_ns.to_string()])?;
        }
        w.flush()?;
    }
    if let Some(path) = plan_trace {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for entry in &artifacts.output.plan_trace {
            serde_json::to_writer(&mut f, entry)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
    }
    if let Some(path) = detected {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for ce in &artifacts.output.detected {
            serde_json::to_writer(
                &mut f,
                &json!({
                    "pattern": ce.pattern_id,
                    "window": ce.window_id,
                    "seqs": ce.seqs,
                    "ts_detect": ce.ts_detect,
                }),
            )?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
    }
    println!(
        "{}",
        json!({
            "out": out,
            "fn_weighted": artifacts.report.fn_weighted,
            "fp_weighted": artifacts.report.fp_weighted,
            "drop_ratio": artifacts.report.drop_ratio,
            "mu": artifacts.mu,
            "rate": artifacts.rate,
        })
    );
    Ok(())
}

pub fn cmd_sweep(
    config_path: &Path,
    rates: &[f64],
    window_sizes: &[u64],
    out_dir: &Path,
) -> Result<()> {
    let base = ExperimentConfig::load(config_path)?;
    std::fs::create_dir_all(out_dir)?;
    let rates = if rates.is_empty() {
        vec![base.rate_pct]
    } else {
        rates.to_vec()
    };
    let window_sizes = if window_sizes.is_empty() {
        vec![base.window.size]
    } else {
        window_sizes.to_vec()
    };
    let mut written = Vec::new();
    for &ws in &window_sizes {
        let mut config = base.clone();
        config.window.size = ws;
        config.window.slide = base.window.slide.min(ws);
        config.table_positions = Some(ws as u32);
        let inputs = load_inputs(&config)?;
        // Window geometry changes invalidate any exported model: retrain
        // in-memory per window size when the shedder needs one.
        if ws != base.window.size && config.model.is_some() {
            let settings = TrainSettings {
                type_count: inputs.schema.type_count,
                positions: config.positions(),
                bin_size: config.bin_size,
                min_observations: config.min_observations,
                cost_model: config.cost_model,
            };
            let model = train(
                &inputs.events,
                &inputs.specs,
                inputs.machines.clone(),
                config.window,
                &settings,
            )?;
            let path = out_dir.join(format!("model-ws{ws}.json"));
            model.save(&path)?;
            config.model = Some(path);
        }
        for &rate in &rates {
            let mut cell = config.clone();
            cell.rate_pct = rate;
            let artifacts = run_experiment_with(&cell, &inputs)?;
            let name = format!("report-{}-ws{}-r{}.json", cell.shedder.shedder, ws, rate);
            let path = out_dir.join(&name);
            std::fs::write(&path, serde_json::to_string_pretty(&artifacts.report)?)?;
            written.push(name);
        }
    }
    println!("{}", json!({"out_dir": out_dir, "reports": written}));
    Ok(())
}

pub fn cmd_report(inputs: &[PathBuf], out: &Path) -> Result<()> {
    let mut reports = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(input)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| {
                    p.extension().is_some_and(|x| x == "json")
                        && p.file_name()
                            .is_some_and(|n| n.to_string_lossy().starts_with("report"))
                })
                .collect();
            paths.sort();
            for path in paths {
                reports.push((file_name(&path), load_report(&path)?));
            }
        } else {
            reports.push((file_name(input), load_report(input)?));
        }
    }
    if reports.is_empty() {
        return Err(HarnessError::Config("no reports to merge".into()));
    }
    let n = merge_reports(&reports, out)?;
    println!("{}", json!({"out": out, "rows": n}));
    Ok(())
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn load_report(path: &Path) -> Result<QoRReport> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
