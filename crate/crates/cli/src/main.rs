mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use zydeco::detect::write_events_csv;
use zydeco::eval::{self, LevelResult, Metrics, SweepResult};
use zydeco::matching::{read_snapshot, write_snapshot, Fplt, MatchKind, TrainReport};
use zydeco::synth::{level_stem, write_dataset};

use crate::config::RunConfig;

/// Largest snapshot `run --snapshot` may write.
const SNAPSHOT_LIMIT: usize = 4096;

#[derive(Parser)]
#[command(name = "zydeco", version, about = "Synthesize, sort and score multi-channel spike recordings")]
struct Cli {
    /// TOML config; defaults to $ZYDECO_CONFIG, then built-in values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a dataset: one recording and truth file per noise level plus a manifest.
    Gen {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated noise levels in dB.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        /// Seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        neurons: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the pipeline on one level and write a metrics report.
    Run {
        #[arg(long)]
        level: f64,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the final table here.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Run every level of a dataset; writes sweep.csv and sweep.json.
    Sweep {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-level percent deltas of sweep B against sweep A.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Delta CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Compare even when the pipeline config hashes differ.
        #[arg(long)]
        force: bool,
    },
    /// Table snapshot tools.
    Fplt {
        #[command(subcommand)]
        action: FpltCommand,
    },
}

#[derive(Subcommand)]
enum FpltCommand {
    /// Print a snapshot as JSON.
    Dump {
        snapshot: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a snapshot from a JSON dump.
    Load {
        json: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct DecisionTally {
    known: usize,
    new: usize,
    rejected: usize,
}

#[derive(Serialize)]
struct RunReport<'a> {
    config_hash: String,
    level_db: f64,
    dataset_seed: u64,
    events: usize,
    decisions: DecisionTally,
    metrics: Metrics,
    train: TrainReport,
    max_table_bits: u64,
    final_table_bits: u64,
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct SweepReport<'a> {
    #[serde(flatten)]
    result: &'a SweepResult,
    config: &'a RunConfig,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_gen(
    mut cfg: RunConfig,
    out: Option<PathBuf>,
    levels: Option<Vec<f64>>,
    duration: Option<f64>,
    neurons: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    let spec = &mut cfg.dataset;
    if let Some(l) = levels {
        spec.noise_levels_db = l;
    }
    if let Some(d) = duration {
        spec.duration = d;
    }
    if let Some(n) = neurons {
        spec.neuron_count = n;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    let dir = out.unwrap_or(cfg.paths.dataset_dir.clone());
    let manifest = write_dataset(&cfg.dataset, &dir).context("generating dataset")?;
    for l in &manifest.levels {
        println!("{}  {}  ({} truth events)", l.recording.sha256, l.recording.file, l.truth_events);
        println!("{}  {}", l.truth.sha256, l.truth.file);
    }
    println!("wrote {} levels to {}", manifest.levels.len(), dir.display());
    Ok(())
}

fn cmd_run(
    mut cfg: RunConfig,
    level: f64,
    dataset: Option<PathBuf>,
    out: Option<PathBuf>,
    snapshot: Option<PathBuf>,
) -> Result<()> {
    if let Some(d) = dataset {
        cfg.paths.dataset_dir = d;
    }
    if let Some(o) = out {
        cfg.paths.output_dir = o;
    }
    if snapshot.is_some() {
        cfg.paths.snapshot = snapshot;
    }
    let dir = &cfg.paths.dataset_dir;
    let manifest = zydeco::synth::load_manifest(dir)?;
    let result = eval::run_dataset_level(dir, level, &cfg.pipeline)?;
    let final_bytes = result.table.serialize()?;

    let mut tally = DecisionTally { known: 0, new: 0, rejected: 0 };
    for d in &result.decisions {
        match d.kind {
            MatchKind::Known(_) => tally.known += 1,
            MatchKind::New(_) => tally.new += 1,
            MatchKind::Rejected => tally.rejected += 1,
        }
    }
    let config_hash = cfg.pipeline.hash()?;
    let report = RunReport {
        config_hash: config_hash.clone(),
        level_db: level,
        dataset_seed: manifest.spec.seed,
        events: result.events.len(),
        decisions: tally,
        metrics: result.metrics,
        train: result.train,
        max_table_bits: result.max_table_bits,
        final_table_bits: final_bytes.len() as u64 * 8,
        config: &cfg,
    };
    let row = SweepResult {
        config_hash,
        dataset_seed: manifest.spec.seed,
        detector_seed: cfg.pipeline.detector_seed,
        levels: vec![LevelResult { level_db: level, metrics: result.metrics, max_table_bits: result.max_table_bits }],
    };

    let out_dir = &cfg.paths.output_dir;
    create_out(out_dir)?;
    write_file(&out_dir.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    let stem = format!("run_{}", level_stem(level));
    write_file(&out_dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&report)?.as_bytes())?;
    let mut csv = Vec::new();
    row.write_csv(&mut csv)?;
    write_file(&out_dir.join(format!("{stem}.csv")), &csv)?;
    let mut events = Vec::new();
    write_events_csv(&mut events, &result.events)?;
    write_file(&out_dir.join(format!("{stem}_events.csv")), &events)?;

    if let Some(path) = &cfg.paths.snapshot {
        ensure!(
            final_bytes.len() <= SNAPSHOT_LIMIT,
            "snapshot is {} bytes, limit {SNAPSHOT_LIMIT}",
            final_bytes.len()
        );
        write_snapshot(path, &result.table)?;
    }
    let m = &result.metrics;
    println!(
        "level {level} dB: tpr {:.4} fpr {:.4} accuracy {:.4} (tp {} fp {} fn {} of {})",
        m.tpr, m.fpr, m.accuracy, m.counts.true_pos, m.counts.false_pos, m.counts.false_neg, m.counts.truth_total
    );
    Ok(())
}

fn cmd_sweep(mut cfg: RunConfig, dataset: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    if let Some(d) = dataset {
        cfg.paths.dataset_dir = d;
    }
    if let Some(o) = out {
        cfg.paths.output_dir = o;
    }
    let result = eval::sweep(&cfg.paths.dataset_dir, &cfg.pipeline)?;
    let out_dir = &cfg.paths.output_dir;
    create_out(out_dir)?;
    let mut csv = Vec::new();
    result.write_csv(&mut csv)?;
    write_file(&out_dir.join("sweep.csv"), &csv)?;
    write_file(&out_dir.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    let report = SweepReport { result: &result, config: &cfg };
    write_file(&out_dir.join("sweep.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
    std::io::stdout().write_all(&csv)?;
    Ok(())
}

fn read_sweep(path: &Path) -> Result<SweepResult> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    SweepResult::read_csv(&text).with_context(|| format!("parsing {}", path.display()))
}

fn cmd_compare(a: &Path, b: &Path, out: Option<PathBuf>, force: bool) -> Result<()> {
    let (ra, rb) = (read_sweep(a)?, read_sweep(b)?);
    if ra.config_hash != rb.config_hash {
        if !force {
            bail!(
                "config hashes differ ({} vs {}); pass --force to compare anyway",
                ra.config_hash,
                rb.config_hash
            );
        }
        eprintln!("warning: comparing runs with different config hashes");
    }
    let deltas = eval::compare(&ra, &rb)?;
    let mut csv = Vec::new();
    eval::write_deltas_csv(&mut csv, &deltas)?;
    match out {
        Some(p) => write_file(&p, &csv)?,
        None => std::io::stdout().write_all(&csv)?,
    }
    Ok(())
}

fn cmd_fplt(action: FpltCommand) -> Result<()> {
    match action {
        FpltCommand::Dump { snapshot, out } => {
            let table = read_snapshot(&snapshot)?;
            let json = serde_json::to_string_pretty(&table)?;
            match out {
                Some(p) => write_file(&p, json.as_bytes())?,
                None => println!("{json}"),
            }
        }
        FpltCommand::Load { json, out } => {
            let text = fs::read_to_string(&json).with_context(|| format!("reading {}", json.display()))?;
            let table: Fplt = serde_json::from_str(&text).with_context(|| format!("parsing {}", json.display()))?;
            let bytes = table.serialize()?;
            Fplt::deserialize(&bytes, table.config).context("table does not survive a round trip")?;
            write_snapshot(&out, &table)?;
            println!(
                "wrote {} ({} entries, {} detectors, {} bits)",
                out.display(),
                table.entries.len(),
                table.detectors.len(),
                bytes.len() * 8
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = RunConfig::resolve(cli.config.as_deref()).and_then(|cfg| match cli.command {
        Command::Gen { out, levels, duration, neurons, seed } => cmd_gen(cfg, out, levels, duration, neurons, seed),
        Command::Run { level, dataset, out, snapshot } => cmd_run(cfg, level, dataset, out, snapshot),
        Command::Sweep { dataset, out } => cmd_sweep(cfg, dataset, out),
        Command::Compare { a, b, out, force } => cmd_compare(&a, &b, out, force),
        Command::Fplt { action } => cmd_fplt(action),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
