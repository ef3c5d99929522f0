//! Command-line interface. `main` only parses arguments and maps errors to
//! the exit code; everything else is here so tests can drive it.

use std::fmt::Write as _;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use fastslow_core::{generate_corpus, Corpus, CorpusSpec, QAItem};

use crate::config::{BackendMode, Config, Overrides};
use crate::controller::{answer_query, evaluate, Engine, QueryInput, RunRecord, Strategy};
use crate::corpus_io::{save_corpus, Manifest};
use crate::dataset::build_dataset;
use crate::report::{sweep_table, EvalReport, SweepPoint};
use crate::runlog::{last_report, read_log, replay, LogEntry, RunLogWriter};
use crate::service::{run_until_ctrl_c, AppState};

#[derive(Debug, Parser)]
#[command(name = "fastslow", version, about = "Confidence-gated fast/slow visual program reasoning")]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Fast-path confidence threshold, in (0, 1).
    #[arg(long, global = true)]
    pub theta: Option<f64>,
    /// Searched parameters: none, all, or e.g. num_frames+top_k.
    #[arg(long, global = true)]
    pub search: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendMode>,
    /// Corpus generation seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    match s {
        "adaptive" => Ok(Strategy::Adaptive),
        "fast_only" | "fast-only" => Ok(Strategy::FastOnly),
        "slow_only" | "slow-only" => Ok(Strategy::SlowOnly),
        _ => Err(format!("unknown strategy {s:?} (adaptive, fast-only, slow-only)")),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Answer one question.
    Run {
        #[arg(long)]
        video: String,
        #[arg(long)]
        question: String,
        /// Repeat for each choice; omit for yes/no questions.
        #[arg(long = "choice")]
        choices: Vec<String>,
        #[arg(long)]
        query_id: Option<String>,
        /// Print the full record as JSON instead of the summary.
        #[arg(long)]
        json: bool,
    },
    /// Evaluate a manifest; writes report.json, report.txt and runs.jsonl.
    Eval {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Option<Strategy>,
    },
    /// Evaluate once per threshold; writes sweep.json and sweep.txt.
    SweepTheta {
        #[arg(long, value_delimiter = ',', required = true)]
        thetas: Vec<f64>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build training records; writes records.jsonl (run-log lines), frequency.json/.txt and stats.json.
    BuildDataset {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API until Ctrl-C.
    Serve {
        #[arg(long)]
        addr: Option<String>,
    },
    /// Write a generated corpus: a directory (qa.json + videos/<id>.json), or one file if --out ends in .json.
    GenCorpus {
        #[arg(long, default_value_t = 20)]
        videos: usize,
        #[arg(long, default_value_t = 5)]
        qa_per_video: usize,
        #[arg(long, default_value_t = 0.6)]
        easy_fraction: f64,
        #[arg(long, default_value_t = 60.0)]
        min_duration: f64,
        #[arg(long, default_value_t = 1800.0)]
        max_duration: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the report from a run log and compare it with the logged one.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            theta: self.theta,
            search: self.search.clone(),
            backend: self.backend,
            seed: self.seed,
            parallelism: self.parallelism,
        }
    }

    pub fn load_config(&self) -> anyhow::Result<Config> {
        let mut c = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        c.apply(&self.overrides())?;
        Ok(c)
    }
}

/// Corpus plus the items a manifest selects from it.
fn suite(config: &Config, manifest: Option<&Path>) -> anyhow::Result<(Arc<Corpus>, Vec<QAItem>)> {
    let m = match manifest {
        Some(p) => Manifest::load(p)?,
        None => Manifest::default(),
    };
    let corpus = match &m.corpus {
        Some(src) => {
            let mut src = src.clone();
            if let Some(s) = config.seed {
                src.seed = s;
            }
            src.load(None)?
        }
        None => config.load_corpus()?.context("no corpus configured: set [corpus] or give a manifest with one")?,
    };
    let items = m.select(&corpus)?;
    Ok((Arc::new(corpus), items))
}

fn engine_for(config: &Config, corpus: Option<Arc<Corpus>>) -> anyhow::Result<Engine> {
    Ok(config.build_engine(corpus)?)
}

fn append_log(config: &Config, entries: &[LogEntry]) -> anyhow::Result<()> {
    if let Some(p) = &config.run_log {
        RunLogWriter::append_to(p)?.append_all(entries)?;
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// One summary line, then for slow paths the program and its module steps.
pub fn format_run(r: &RunRecord) -> String {
    let conf = r.final_confidence.map_or("n/a".to_string(), |c| format!("{:.4}", c.value()));
    let answer = if r.final_answer.is_empty() { "<none>" } else { &r.final_answer };
    let mut out = format!("{}: {} (confidence {})\n", r.decision.path.as_str(), answer, conf);
    if let Some(f) = &r.fast {
        if r.decision.path.is_slow() {
            let _ = writeln!(
                out,
                "fast answer: {} (confidence {:.4}, theta {})",
                f.answer,
                f.confidence.value(),
                r.decision.theta
            );
        }
    }
    if let Some(e) = &r.fast_error {
        let _ = writeln!(out, "fast error: {e}");
    }
    if let Some(s) = &r.slow {
        let _ = writeln!(out, "trace:");
        for ev in &s.base_result.trace {
            let args: Vec<String> = ev
                .resolved_args
                .iter()
                .map(|(k, v)| match &v.value {
                    Some(j) if v.size <= 1 => format!("{k}={j}"),
                    _ => format!("{k}=<{} x{}>", v.kind, v.size),
                })
                .collect();
            let output = ev.output_summary.as_ref().map_or("failed".to_string(), |o| format!("{} x{}", o.kind, o.size));
            let _ = writeln!(out, "  [{}] {}({}) -> {}", ev.step_index, ev.module, args.join(", "), output);
        }
        if let Some(f) = &s.base_result.failure {
            let _ = writeln!(out, "  failed: {}", f.message);
        }
        if s.run_count > 0 {
            let _ = writeln!(out, "search: {} variant runs", s.run_count);
        }
    }
    if let Some(e) = &r.slow_error {
        let _ = writeln!(out, "slow error: {e}");
    }
    out
}

fn eval_to(
    config: &Config,
    engine: &Engine,
    items: &[QAItem],
    out_dir: &Path,
    strategy: Option<Strategy>,
) -> anyhow::Result<EvalReport> {
    let mut cc = config.controller_config();
    if let Some(s) = strategy {
        cc.strategy = s;
    }
    let (records, report) = evaluate(engine, items, &cc, config.parallelism);
    let mut entries: Vec<LogEntry> = records.into_iter().map(|r| LogEntry::Run(Box::new(r))).collect();
    entries.push(LogEntry::Report(Box::new(report.clone())));
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    RunLogWriter::create(out_dir.join("runs.jsonl"))?.append_all(&entries)?;
    write_file(&out_dir.join("report.json"), &pretty(&report))?;
    write_file(&out_dir.join("report.txt"), &report.to_table())?;
    append_log(config, &entries)?;
    Ok(report)
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    match &cli.command {
        Command::GenCorpus { videos, qa_per_video, easy_fraction, min_duration, max_duration, out: path } => {
            let spec = CorpusSpec::new(*videos, (*min_duration, *max_duration), *qa_per_video, *easy_fraction);
            let corpus = generate_corpus(cli.seed.unwrap_or(0), &spec)?;
            save_corpus(&corpus, path)?;
            writeln!(out, "wrote {} videos, {} items to {}", corpus.videos.len(), corpus.items.len(), path.display())?;
            return Ok(());
        }
        Command::Replay { log } => {
            let entries = read_log(log)?;
            let report = replay(&entries);
            write!(out, "{}", report.to_table())?;
            match last_report(&entries) {
                Some(logged) if logged == report => writeln!(out, "replay matches the logged report")?,
                Some(_) => bail!("replayed report differs from the logged report"),
                None => writeln!(out, "no logged report to compare")?,
            }
            return Ok(());
        }
        _ => {}
    }

    let config = cli.load_config()?;
    match &cli.command {
        Command::Run { video, question, choices, query_id, json } => {
            let corpus = config.load_corpus()?.map(Arc::new);
            let engine = engine_for(&config, corpus)?;
            let mut input = QueryInput::new(video, question, (!choices.is_empty()).then(|| choices.clone()));
            input.id = query_id.clone();
            let record = answer_query(&engine, &input, &config.controller_config())?;
            append_log(&config, &[LogEntry::Run(Box::new(record.clone()))])?;
            if *json {
                write!(out, "{}", pretty(&record))?;
            } else {
                write!(out, "{}", format_run(&record))?;
            }
        }
        Command::Eval { manifest, out: dir, strategy } => {
            let (corpus, items) = suite(&config, manifest.as_deref())?;
            let engine = engine_for(&config, Some(corpus))?;
            let report = eval_to(&config, &engine, &items, dir, *strategy)?;
            write!(out, "{}", report.to_table())?;
        }
        Command::SweepTheta { thetas, manifest, out: dir } => {
            if let Some(t) = thetas.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
                bail!("theta {t} outside (0, 1)");
            }
            let (corpus, items) = suite(&config, manifest.as_deref())?;
            let engine = engine_for(&config, Some(corpus))?;
            let mut points = Vec::new();
            for &theta in thetas {
                let mut cc = config.controller_config();
                cc.theta = theta;
                let (_, report) = evaluate(&engine, &items, &cc, config.parallelism);
                points.push(SweepPoint { theta, report });
            }
            write_file(&dir.join("sweep.json"), &pretty(&points))?;
            write_file(&dir.join("sweep.txt"), &sweep_table(&points))?;
            write!(out, "{}", sweep_table(&points))?;
        }
        Command::BuildDataset { manifest, out: dir } => {
            let (corpus, items) = suite(&config, manifest.as_deref())?;
            let engine = engine_for(&config, Some(corpus))?;
            let support = config.support_set(&engine.registry)?;
            let output = build_dataset(&items, &engine, &support, &config.dataset_config(), config.parallelism)?;
            let entries: Vec<LogEntry> =
                output.records.iter().map(|r| LogEntry::Training(Box::new(r.clone()))).collect();
            RunLogWriter::create(dir.join("records.jsonl"))?.append_all(&entries)?;
            write_file(&dir.join("frequency.json"), &pretty(&output.frequency))?;
            write_file(&dir.join("frequency.txt"), &output.frequency.to_table())?;
            write_file(&dir.join("stats.json"), &pretty(&output.stats))?;
            append_log(&config, &[LogEntry::Frequency(output.frequency.clone())])?;
            writeln!(out, "{} records ({} items) written to {}", output.records.len(), items.len(), dir.display())?;
            write!(out, "{}", output.frequency.to_table())?;
        }
        Command::Serve { addr } => {
            let corpus = config.load_corpus()?.map(Arc::new);
            let engine = Arc::new(engine_for(&config, corpus.clone())?);
            let addr: SocketAddr = addr.as_deref().unwrap_or(&config.service.addr).parse().context("--addr")?;
            let mut state =
                AppState::new(engine, config.controller_config(), config.service.workers, config.service.queue_depth)
                    .with_parallelism(config.parallelism);
            if let Some(c) = corpus {
                state = state.with_corpus(c);
            }
            if let Some(p) = &config.run_log {
                state = state.with_log(Arc::new(RunLogWriter::append_to(p)?));
            }
            run_until_ctrl_c(addr, Arc::new(state))?;
        }
        Command::GenCorpus { .. } | Command::Replay { .. } => unreachable!(),
    }
    Ok(())
}
