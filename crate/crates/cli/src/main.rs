//! `hkg`: clickstream ingestion, graph assembly, synthetic data, training
//! and reporting.
//!
//! Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use sha2::{Digest, Sha256};

use hkg_core::graph::Built;
use hkg_core::ingest::{encode_events, decode_events, ingest_dir};
use hkg_core::model::HeteroSageModel;
use hkg_core::report::save_run;
use hkg_core::split::{split_with, SplitConfig};
use hkg_core::synth::write_event_log;
use hkg_core::train::{accuracy, score_edges};
use hkg_core::{
    assemble_hkg, compare, evaluate_auc, generate, run_repeated, write_report, Catalog, Hkg,
    MessageGraph, NodeType, Preset, RunConfig, Signal, Subgraph, SynthConfig, TrainError,
};

#[derive(Parser)]
#[command(name = "hkg", version, about = "Student pass prediction on clickstream knowledge graphs")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// Overrides the training and split seeds from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Accepted for scripting; every computation is already single-threaded
    /// and reproducible.
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, filter and sessionize raw event logs.
    Ingest {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long, default_value = "events.bin")]
        out: PathBuf,
        #[arg(long)]
        gap_minutes: Option<u32>,
    },
    /// Assemble the knowledge graph from ingested events.
    BuildGraph {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long, default_value = "graph.hkg")]
        out: PathBuf,
        /// Also write a JSON export for inspection.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Generate a synthetic course into a directory.
    Synth {
        #[arg(long, value_enum, default_value = "campus")]
        preset: PresetArg,
        #[arg(long, value_enum, default_value = "planted")]
        signal: SignalArg,
        #[arg(long)]
        students: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        /// Also write `logs/events.jsonl` and `catalog.json`.
        #[arg(long)]
        emit_log: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train repeated runs and write curves, summary and checkpoints.
    Train {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on one partition of its run's split.
    Eval {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Run index the checkpoint came from (selects the split seed).
        #[arg(long, default_value_t = 0)]
        run: u64,
        #[arg(long, value_enum, default_value = "test")]
        partition: PartitionArg,
    },
    /// Summaries, plot data and figures for a run directory.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare labeled run directories (`--set label=dir`, two or more).
    Compare {
        #[arg(long = "set", value_parser = parse_set, required = true)]
        sets: Vec<(String, PathBuf)>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Campus,
    Online,
}

#[derive(Clone, Copy, ValueEnum)]
enum SignalArg {
    Planted,
    Shuffled,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartitionArg {
    Train,
    Val,
    Test,
}

fn parse_set(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((label, dir)) if !label.is_empty() && !dir.is_empty() => {
            Ok((label.to_string(), PathBuf::from(dir)))
        }
        _ => Err(format!("expected label=dir, got {s:?}")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(t) = cause.downcast_ref::<TrainError>() {
            if matches!(t, TrainError::NonFiniteLoss { .. } | TrainError::NonFiniteScore(_)) {
                return 3;
            }
        }
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
    }
    2
}

#[derive(Debug)]
struct UsageError(String);

impl std::error::Error for UsageError {}

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn load_config(global: &Global) -> Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
            RunConfig::from_toml_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg = cfg.with_seed(seed);
    }
    Ok(cfg)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_graph(path: &Path) -> Result<(Hkg, String)> {
    let bytes = read(path)?;
    let digest = hex::encode(Sha256::digest(&bytes));
    let hkg = Hkg::from_bytes(&bytes).with_context(|| format!("loading {}", path.display()))?;
    Ok((hkg, digest))
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Ingest {
            logs,
            out,
            gap_minutes,
        } => {
            let gap_ms = gap_minutes.map_or(cfg.graph.session_gap_ms, |m| i64::from(m) * 60_000);
            let ing = ingest_dir(&logs, gap_ms)?;
            write(&out, encode_events(&ing.events, ing.gap_ms))?;
            let report_path = out.with_file_name("ingest_report.json");
            write(&report_path, pretty(&ing.report))?;
            println!("{}", serde_json::to_string(&ing.report)?);
        }
        Command::BuildGraph {
            events,
            catalog,
            out,
            json,
        } => {
            let (events, gap_ms) = decode_events(&read(&events)?)
                .with_context(|| format!("decoding {}", events.display()))?;
            let catalog = match catalog {
                Some(p) => Catalog::from_json(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?,
                None => Catalog::default(),
            };
            let mut gcfg = cfg.graph_config();
            gcfg.session_gap_ms = gap_ms;
            let Built { hkg, report } = assemble_hkg(&events, &catalog, &gcfg)?;
            write(&out, hkg.to_bytes())?;
            if let Some(j) = json {
                write(&j, pretty(&hkg.to_json()))?;
            }
            write(&out.with_file_name("build_report.json"), pretty(&report))?;
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Synth {
            preset,
            signal,
            students,
            sigma,
            emit_log,
            out,
        } => {
            let preset = match preset {
                PresetArg::Campus => Preset::Campus,
                PresetArg::Online => Preset::Online,
            };
            let mut scfg = SynthConfig::preset(preset, cli.global.seed.unwrap_or(0));
            scfg.signal = match signal {
                SignalArg::Planted => Signal::Planted,
                SignalArg::Shuffled => Signal::Shuffled,
            };
            if let Some(n) = students {
                scfg.students = n;
            }
            if let Some(s) = sigma {
                scfg.sigma = s;
            }
            scfg.validate().map_err(|e| UsageError(e.to_string()))?;
            let synth = generate(&scfg)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            write(&out.join("graph.hkg"), synth.built.hkg.to_bytes())?;
            write(&out.join("synth_config.json"), pretty(&scfg))?;
            write(&out.join("build_report.json"), pretty(&synth.built.report))?;
            if emit_log {
                let logs = out.join("logs");
                fs::create_dir_all(&logs)?;
                let path = logs.join("events.jsonl");
                let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                let mut w = BufWriter::new(file);
                let catalog = write_event_log(&scfg, &mut w)?;
                std::io::Write::flush(&mut w)?;
                write(&out.join("catalog.json"), catalog.to_json() + "\n")?;
            }
            println!("{}", serde_json::to_string(&synth.built.report)?);
        }
        Command::Train { graph, out } => {
            let (hkg, digest) = load_graph(&graph)?;
            let tcfg = cfg.train_config();
            tcfg.validate(&cfg.model).map_err(|e| UsageError(e.to_string()))?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let provenance = json!({
                "graph_sha256": digest,
                "nodes": NodeType::ALL.iter().map(|&t| (t.name(), hkg.count(t))).collect::<std::collections::BTreeMap<_, _>>(),
                "supervision_edges": hkg.supervision().len(),
                "train_seeds": (0..tcfg.runs as u64).map(|k| tcfg.seed.wrapping_add(k)).collect::<Vec<_>>(),
                "split_seeds": (0..tcfg.runs as u64).map(|k| cfg.split.seed.wrapping_add(k)).collect::<Vec<_>>(),
                "config": serde_json::to_value(&cfg)?,
            });
            write(&out.join("provenance.json"), pretty(&provenance))?;
            let mut save_err = None;
            run_repeated(&hkg, &cfg.split, &cfg.model, &tcfg, |k, model, metrics| {
                let res = save_run(&out, k, metrics)
                    .map_err(anyhow::Error::from)
                    .and_then(|_| write(&out.join(format!("model_run{k}.ckpt")), model.to_checkpoint()));
                if let Err(e) = res {
                    save_err.get_or_insert(e);
                }
                eprintln!(
                    "run {k}: test AUC {} accuracy {:.4}",
                    metrics.test_auc.map_or("n/a".into(), |a| format!("{a:.4}")),
                    metrics.test_accuracy
                );
            })?;
            if let Some(e) = save_err {
                return Err(e);
            }
            let summary = write_report(&out, &out)?;
            println!(
                "{}",
                serde_json::to_string(&json!({
                    "runs": summary.runs,
                    "test_auc": summary.test_auc,
                    "test_accuracy": summary.test_accuracy,
                }))?
            );
        }
        Command::Eval {
            graph,
            checkpoint,
            run,
            partition,
        } => {
            let (hkg, _) = load_graph(&graph)?;
            let model = HeteroSageModel::from_checkpoint(&read(&checkpoint)?, &hkg)
                .with_context(|| format!("loading {}", checkpoint.display()))?;
            let split = split_with(
                &hkg,
                &SplitConfig {
                    seed: cfg.split.seed.wrapping_add(run),
                    ..cfg.split
                },
            )?;
            let edges = match partition {
                PartitionArg::Train => &split.train,
                PartitionArg::Val => &split.val,
                PartitionArg::Test => &split.test,
            };
            let mg = MessageGraph::from_hkg(&hkg, model.config().use_edge_weights);
            let scores = score_edges(&model, &hkg, &Subgraph::full(&hkg, &mg), edges)?;
            let labels: Vec<u8> = edges.iter().map(|&e| hkg.labels()[e]).collect();
            let auc = match evaluate_auc(&scores, &labels) {
                Ok(a) => Some(a),
                Err(TrainError::DegenerateLabels { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            println!(
                "{}",
                serde_json::to_string(&json!({
                    "edges": edges.len(),
                    "auc": auc,
                    "accuracy": accuracy(&scores, &labels),
                }))?
            );
        }
        Command::Report { runs, out } => {
            let out = out.unwrap_or_else(|| runs.clone());
            let summary = write_report(&runs, &out)?;
            println!(
                "{}",
                serde_json::to_string(&json!({
                    "runs": summary.runs,
                    "epochs": summary.epochs,
                    "test_auc": summary.test_auc,
                    "test_accuracy": summary.test_accuracy,
                }))?
            );
        }
        Command::Compare { sets, out } => {
            if sets.len() < 2 {
                bail!(UsageError("compare needs at least two --set".into()));
            }
            let c = compare(&sets, &out)?;
            println!("{}", serde_json::to_string(&c)?);
        }
    }
    Ok(())
}
