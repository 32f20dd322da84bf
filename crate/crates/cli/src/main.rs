use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use agentx::agent::{reward, QTable, RewardInputs, RewardParams};
use agentx::cascade::PatternTable;
use agentx::config::{ConfigError, ScenarioConfig};
use agentx::harness::{
    evaluate, read_trace, replay, run_greedy, run_random, summarize, train_agent, train_patterns, JsonLines,
    RunError, TraceError, TraceSink,
};
use agentx::par::Execution;

#[derive(Parser)]
#[command(name = "agentx", version, about = "Cloud-defense agent simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario config (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed; overrides the config's.
    #[arg(long)]
    seed: Option<u64>,
    /// Pattern table for the first cascade stage.
    #[arg(long)]
    patterns: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a Q-table and write it to --policy.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        episodes: u64,
        #[arg(long)]
        policy: PathBuf,
        /// Trace of one greedy run of the trained table.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Run one episode and print its metrics.
    Run {
        #[command(flatten)]
        common: Common,
        /// Q-table to run greedily; the random baseline when omitted.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Compare a trained table with the random policy over paired seeds.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: PathBuf,
        /// Number of evaluation seeds, counting up from --seed.
        #[arg(long, default_value_t = 30)]
        episodes: u64,
        /// Run replications one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Recompute metrics from a trace file.
    Replay { trace: PathBuf },
    /// Read {"params", "inputs"} JSON lines on stdin; print one reward per line.
    OracleReward,
    /// Build a pattern table from traces and write it to --policy.
    OfflineTrain {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        policy: PathBuf,
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
}

enum Failure {
    Config(anyhow::Error),
    Corrupt(anyhow::Error),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Corrupt(_) => 3,
            Failure::Other(_) => 1,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => Failure::Config(c.into()),
            RunError::Io(io) => Failure::Other(io.into()),
        }
    }
}

impl From<TraceError> for Failure {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::Corrupt { .. } => Failure::Corrupt(e.into()),
            TraceError::Io(_) => Failure::Other(e.into()),
        }
    }
}

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn load_config(common: &Common) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => ScenarioConfig::load(p).map_err(config_err)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn load_patterns(path: Option<&Path>) -> Result<PatternTable, Failure> {
    let Some(p) = path else { return Ok(PatternTable::default()) };
    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(config_err)?;
    PatternTable::from_text(&text).map_err(config_err)
}

fn load_table(path: &Path) -> Result<QTable, Failure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(config_err)?;
    QTable::from_text(&text).map_err(config_err)
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(Failure::Other)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).context("serializing output")?;
    println!("{text}");
    Ok(())
}

fn trace_sink(path: Option<&Path>) -> Result<Box<dyn TraceSink>, Failure> {
    Ok(match path {
        Some(p) => {
            let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            Box::new(JsonLines(BufWriter::new(f)))
        }
        None => Box::new(agentx::harness::NullSink),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleLine {
    params: RewardParams,
    inputs: RewardInputs,
}

fn oracle_reward() -> Result<(), Failure> {
    let stdin = io::stdin();
    let mut out = BufWriter::new(io::stdout().lock());
    for (i, line) in stdin.lock().lines().enumerate() {
        let line = line.context("reading stdin")?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: OracleLine =
            serde_json::from_str(&line).with_context(|| format!("line {}", i + 1)).map_err(config_err)?;
        let r = reward(&parsed.params, &parsed.inputs).with_context(|| format!("line {}", i + 1)).map_err(config_err)?;
        writeln!(out, "{}", serde_json::to_string(&r).context("formatting reward")?).context("writing stdout")?;
    }
    out.flush().context("writing stdout")?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Train { common, episodes, policy, trace_out } => {
            let cfg = load_config(&common)?;
            let patterns = load_patterns(common.patterns.as_deref())?;
            let seeds: Vec<u64> = (0..episodes).map(|i| cfg.seed.wrapping_add(i)).collect();
            let out = train_agent(&cfg, episodes, &seeds, &patterns)?;
            write_file(&policy, &out.table.to_text())?;
            if let Some(path) = trace_out {
                let mut sink = trace_sink(Some(&path))?;
                run_greedy(&cfg, cfg.seed, &out.table, &patterns, sink.as_mut())?;
            }
            print_json(&serde_json::json!({
                "episodes": episodes,
                "final_epsilon": out.epsilons.last(),
                "reward_curve": out.curve,
            }))
        }
        Cmd::Run { common, policy, trace_out } => {
            let cfg = load_config(&common)?;
            let patterns = load_patterns(common.patterns.as_deref())?;
            let mut sink = trace_sink(trace_out.as_deref())?;
            let report = match policy {
                Some(p) => run_greedy(&cfg, cfg.seed, &load_table(&p)?, &patterns, sink.as_mut())?,
                None => run_random(&cfg, cfg.seed, &patterns, sink.as_mut())?,
            };
            drop(sink);
            print_json(&report)
        }
        Cmd::Eval { common, policy, episodes, sequential } => {
            let cfg = load_config(&common)?;
            let patterns = load_patterns(common.patterns.as_deref())?;
            let table = load_table(&policy)?;
            let seeds: Vec<u64> = (0..episodes).map(|i| cfg.seed.wrapping_add(i)).collect();
            let exec = if sequential { Execution::Sequential } else { Execution::available() };
            let rows = evaluate(&cfg, &table, &patterns, &seeds, exec)?;
            print_json(&summarize(&rows))
        }
        Cmd::Replay { trace } => {
            let f = File::open(&trace).with_context(|| format!("opening {}", trace.display()))?;
            let records = read_trace(BufReader::new(f))?;
            print_json(&replay(&records)?)
        }
        Cmd::OracleReward => oracle_reward(),
        Cmd::OfflineTrain { config, policy, traces } => {
            let cfg = match config {
                Some(p) => ScenarioConfig::load(&p).map_err(|e: ConfigError| config_err(e))?,
                None => ScenarioConfig::default(),
            };
            let mut corpus = Vec::new();
            for path in &traces {
                let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
                corpus.push(read_trace(BufReader::new(f))?);
            }
            let table = train_patterns(&corpus, cfg.min_support).map_err(config_err)?;
            write_file(&policy, &table.to_text())?;
            print_json(&serde_json::json!({ "patterns": table.len() }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            let (Failure::Config(e) | Failure::Corrupt(e) | Failure::Other(e)) = f;
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
