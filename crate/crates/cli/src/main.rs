use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use infodemic_core::clock::{Clock, ManualClock, SystemClock};
use infodemic_core::llm::{CompletionBackend, HttpBackend, ReplayBackend, ReplayMode};
use infodemic_core::net::{FixtureTransport, Transport, UreqTransport};
use infodemic_core::pipeline::{BackendKind, FetchMode, Pipeline, RunConfig, RunReport, Stage};

#[derive(Parser)]
#[command(name = "infodemic", version, about = "Collect, summarize and chart health news")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "config/default.toml")]
    config: PathBuf,
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    backend: Option<Backend>,
    /// Recorded completions for the replay backend.
    #[arg(long, global = true)]
    replay: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_replay_mode)]
    replay_mode: Option<ReplayMode>,
    /// Overrides the LDA seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log filter, e.g. `info` or `infodemic_core=debug`.
    #[arg(long, global = true, default_value = "warn")]
    log: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Http,
    Replay,
}

fn parse_replay_mode(s: &str) -> Result<ReplayMode, String> {
    s.parse()
}

#[derive(Subcommand)]
enum Command {
    /// Let the agent plan and run the pipeline to answer a question.
    Agent {
        #[arg(long)]
        question: String,
    },
    /// Crawl the configured sources and store new articles.
    Ingest,
    /// Summarize stored articles.
    Summarize,
    /// Extract and resolve place names.
    Geoparse,
    /// Fit the topic model over the summaries.
    Lda,
    /// Render the map, monthly chart and streamgraphs.
    Plot,
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut config = RunConfig::load(&common.config).with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(d) = &common.data_dir {
        config.data_dir = d.clone();
    }
    if let Some(d) = &common.output_dir {
        config.output_dir = d.clone();
    }
    match common.backend {
        Some(Backend::Replay) => config.llm.backend = BackendKind::Replay,
        Some(Backend::Http) => config.llm.backend = BackendKind::Http,
        None => {}
    }
    if let Some(p) = &common.replay {
        config.llm.replay_path = Some(p.clone());
    }
    if let Some(m) = common.replay_mode {
        config.llm.replay_mode = m;
    }
    if let Some(seed) = common.seed {
        config.lda.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn build_clock(config: &RunConfig) -> Arc<dyn Clock> {
    match config.frozen_time {
        Some(t) => Arc::new(ManualClock::new(t)),
        None => Arc::new(SystemClock::new()),
    }
}

fn build_transport(config: &RunConfig) -> Result<Box<dyn Transport>> {
    Ok(match config.fetch.mode {
        FetchMode::Live => Box::new(UreqTransport::new(Duration::from_secs(config.fetch.timeout_secs))),
        FetchMode::Fixture => {
            let dir = config.fetch.fixture_dir.as_ref().expect("validated");
            Box::new(FixtureTransport::open(dir).with_context(|| format!("opening fixture site {}", dir.display()))?)
        }
    })
}

fn build_backend(config: &RunConfig, clock: Arc<dyn Clock>) -> Result<Box<dyn CompletionBackend>> {
    let llm = &config.llm;
    Ok(match llm.backend {
        BackendKind::Replay => {
            let path = llm.replay_path.as_ref().expect("validated");
            Box::new(ReplayBackend::load(path, llm.replay_mode).with_context(|| format!("loading {}", path.display()))?)
        }
        BackendKind::Http => {
            let endpoint = llm.endpoint_url.clone().expect("validated");
            let key = std::env::var(&llm.api_key_env).ok();
            if key.is_none() {
                eprintln!("warning: ${} is not set; requests go out without an API key", llm.api_key_env);
            }
            let transport = Arc::new(UreqTransport::new(Duration::from_secs(llm.timeout_secs)));
            Box::new(HttpBackend::new(endpoint, key, transport, clock))
        }
    })
}

fn print_report(report: &RunReport) {
    println!("mode: {}", report.mode);
    println!(
        "articles ingested {}, duplicates {}, fetch failures {}",
        report.articles_ingested, report.duplicates, report.fetch_failures
    );
    println!(
        "summarized {}, place mentions {}, undated excluded {}, llm calls {}",
        report.articles_summarized, report.mentions_found, report.undated_excluded, report.llm_calls
    );
    if let Some(reason) = report.terminated_reason {
        println!("agent stopped after {} steps: {reason:?}", report.agent_steps.unwrap_or(0));
    }
    if let Some(answer) = &report.final_answer {
        println!("final answer: {answer}");
    }
    for p in &report.outputs {
        println!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli.common)?;
    let clock = build_clock(&config);
    let transport = build_transport(&config)?;
    let backend = build_backend(&config, Arc::clone(&clock))?;
    let mut pipeline = Pipeline::new(config, backend.as_ref(), transport.as_ref(), clock.as_ref())?;
    let report = match cli.command {
        Command::Agent { question } => {
            if question.trim().is_empty() {
                bail!("--question must not be empty");
            }
            pipeline.cmd_agent(&question)?
        }
        Command::Ingest => pipeline.cmd_stage(Stage::Ingest)?,
        Command::Summarize => pipeline.cmd_stage(Stage::Summarize)?,
        Command::Geoparse => pipeline.cmd_stage(Stage::Geoparse)?,
        Command::Lda => pipeline.cmd_stage(Stage::Lda)?,
        Command::Plot => pipeline.cmd_stage(Stage::Plot)?,
    };
    print_report(&report);
    Ok(())
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::new(&cli.common.log))
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
