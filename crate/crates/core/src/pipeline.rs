//! Run configuration, the five pipeline stages and their agent tool wrappers.
//!
//! Layout of a data directory:
//!
//! | file                | written by  |
//! |---------------------|-------------|
//! | `articles.jsonl`    | ingest      |
//! | `summaries.jsonl`   | summarize   |
//! | `mentions.csv`      | geoparse    |
//! | `lda_model.json`    | lda         |
//! | `lda_corpus.json`   | lda         |
//!
//! Charts, their CSV sidecars, `topics.csv`, `transcript.jsonl` and
//! `run_report.json` go to the output directory.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::agent::{self, AgentConfig, AgentError, ToolRegistry, ToolSpec, TerminationReason};
use crate::clock::Clock;
use crate::geoparse::{self, Gazetteer, GeoparseError};
use crate::ingest::{self, ArticleStore, FetchStatus, Fetcher, IngestError, NewsSource};
use crate::llm::{CompletionBackend, CompletionRequest, LlmError, ReplayMode};
use crate::net::Transport;
use crate::summarize::{self, Prompts, SummarizeError, Summarizer, SummarizerConfig, SummaryStore};
use crate::topic_model::{preprocess, Corpus, LdaConfig, LdaError, LdaModel, RawDocument};
use crate::trends::{self, TrendError, TrendKind, VizConfig, Window, YearMonth};

pub const MENTIONS_FILE: &str = "mentions.csv";
pub const MODEL_FILE: &str = "lda_model.json";
pub const CORPUS_FILE: &str = "lda_corpus.json";
pub const ARTICLES_FILE: &str = "articles.jsonl";
pub const REPORT_FILE: &str = "run_report.json";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";

/// Tool names in registration order.
pub const TOOL_NAMES: [&str; 5] = [
    "search_and_save_news",
    "summarize_news",
    "extract_spatial_data",
    "extract_temporal_data",
    "visualize_results",
];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("missing upstream artifact: {0}")]
    MissingUpstream(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Summarize(#[from] SummarizeError),
    #[error(transparent)]
    Geoparse(#[from] GeoparseError),
    #[error(transparent)]
    Lda(#[from] LdaError),
    #[error(transparent)]
    Trend(#[from] TrendError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub backend: BackendKind,
    pub endpoint_url: Option<Url>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub replay_path: Option<PathBuf>,
    pub replay_mode: ReplayMode,
    pub timeout_secs: u64,
}

impl Default for LlmSection {
    fn default() -> Self {
        Self {
            backend: BackendKind::Http,
            endpoint_url: None,
            api_key_env: "OPENAI_API_KEY".into(),
            replay_path: None,
            replay_mode: ReplayMode::Keyed,
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FetchMode {
    Live,
    /// Serve pages from a mirrored directory (see `FixtureTransport`).
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FetchSection {
    pub mode: FetchMode,
    pub fixture_dir: Option<PathBuf>,
    pub timeout_secs: u64,
}

impl Default for FetchSection {
    fn default() -> Self {
        Self {
            mode: FetchMode::Live,
            fixture_dir: None,
            timeout_secs: 30,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptPaths {
    pub agent: Option<PathBuf>,
    pub map: Option<PathBuf>,
    pub reduce: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeoparseSection {
    /// Defaults to the bundled gazetteer.
    pub gazetteer: Option<PathBuf>,
    /// Defaults to the bundled stoplist.
    pub stoplist: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    pub start: YearMonth,
    pub end: YearMonth,
}

impl Default for WindowSection {
    fn default() -> Self {
        Self {
            start: YearMonth { year: 2022, month: 6 },
            end: YearMonth { year: 2023, month: 5 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub max_steps: usize,
    pub max_consecutive_parse_failures: usize,
    pub prompt_budget_tokens: usize,
    pub model: String,
    /// Subset of [`TOOL_NAMES`] to register.
    pub tools: Vec<String>,
}

impl Default for AgentSection {
    fn default() -> Self {
        let d = AgentConfig::default();
        Self {
            max_steps: d.max_steps,
            max_consecutive_parse_failures: d.max_consecutive_parse_failures,
            prompt_budget_tokens: d.prompt_budget_tokens,
            model: d.model,
            tools: TOOL_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Everything a run needs, read from a TOML file. Relative paths are
/// resolved against the directory holding that file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Freeze wall-clock time and skip real sleeps. Used for reproducible
    /// offline runs.
    #[serde(default)]
    pub frozen_time: Option<DateTime<Utc>>,
    #[serde(default)]
    pub llm: LlmSection,
    #[serde(default)]
    pub fetch: FetchSection,
    #[serde(default)]
    pub prompts: PromptPaths,
    #[serde(default)]
    pub summarizer: SummarizerConfig,
    #[serde(default)]
    pub geoparse: GeoparseSection,
    #[serde(default)]
    pub lda: LdaConfig,
    #[serde(default)]
    pub window: WindowSection,
    #[serde(default)]
    pub agent: AgentSection,
    #[serde(default)]
    pub viz: VizConfig,
    #[serde(default, rename = "source")]
    pub sources: Vec<NewsSource>,
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut config: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.resolve_paths(base_dir);
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(io_at(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        fix(&mut self.output_dir);
        for p in [
            &mut self.llm.replay_path,
            &mut self.fetch.fixture_dir,
            &mut self.prompts.agent,
            &mut self.prompts.map,
            &mut self.prompts.reduce,
            &mut self.geoparse.gazetteer,
            &mut self.geoparse.stoplist,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn window(&self) -> Result<Window, PipelineError> {
        Ok(Window::new(self.window.start, self.window.end)?)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        match self.llm.backend {
            BackendKind::Http if self.llm.endpoint_url.is_none() => return bad("llm.endpoint_url is required for the http backend".into()),
            BackendKind::Replay if self.llm.replay_path.is_none() => return bad("llm.replay_path is required for the replay backend".into()),
            _ => {}
        }
        if self.fetch.mode == FetchMode::Fixture && self.fetch.fixture_dir.is_none() {
            return bad("fetch.fixture_dir is required in fixture mode".into());
        }
        if self.sources.is_empty() {
            return bad("at least one [[source]] is required".into());
        }
        let mut ids = std::collections::HashSet::new();
        for s in &self.sources {
            s.validate()?;
            if !ids.insert(&s.id) {
                return bad(format!("duplicate source id `{}`", s.id));
            }
        }
        self.lda.validate()?;
        self.window()?;
        if self.agent.max_steps == 0 || self.agent.max_consecutive_parse_failures == 0 {
            return bad("agent.max_steps and agent.max_consecutive_parse_failures must be positive".into());
        }
        if self.agent.tools.is_empty() {
            return bad("agent.tools is empty; the agent needs at least one tool".into());
        }
        for t in &self.agent.tools {
            if !TOOL_NAMES.contains(&t.as_str()) {
                return bad(format!("agent.tools: unknown tool `{t}`"));
            }
        }
        Ok(())
    }

    pub fn agent_config(&self) -> Result<AgentConfig, PipelineError> {
        let mut config = AgentConfig {
            max_steps: self.agent.max_steps,
            max_consecutive_parse_failures: self.agent.max_consecutive_parse_failures,
            prompt_budget_tokens: self.agent.prompt_budget_tokens,
            model: self.agent.model.clone(),
            ..AgentConfig::default()
        };
        if let Some(path) = &self.prompts.agent {
            let text = fs::read_to_string(path).map_err(io_at(path))?;
            config.prompt_template = agent::PromptTemplate::new(text)?;
        }
        Ok(config)
    }

    pub fn summarizer_prompts(&self) -> Result<Prompts, PipelineError> {
        let mut prompts = Prompts::default();
        if let Some(p) = &self.prompts.map {
            prompts.map = summarize::PromptTemplate::load(p)?;
        }
        if let Some(p) = &self.prompts.reduce {
            prompts.reduce = summarize::PromptTemplate::load(p)?;
        }
        Ok(prompts)
    }

    pub fn gazetteer(&self) -> Result<Gazetteer, PipelineError> {
        let stoplist = match &self.geoparse.stoplist {
            Some(p) => fs::read_to_string(p).map_err(io_at(p))?,
            None => geoparse::BUNDLED_STOPLIST.to_string(),
        };
        let g = match &self.geoparse.gazetteer {
            Some(p) => Gazetteer::load(p)?,
            None => Gazetteer::parse(geoparse::BUNDLED_GAZETTEER)?,
        };
        Ok(g.with_stoplist(geoparse::parse_stoplist(&stoplist)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Summarize,
    Geoparse,
    Lda,
    Plot,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Ingest, Stage::Summarize, Stage::Geoparse, Stage::Lda, Stage::Plot];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Summarize => "summarize",
            Stage::Geoparse => "geoparse",
            Stage::Lda => "lda",
            Stage::Plot => "plot",
        }
    }

    /// The agent tool wrapping this stage.
    pub fn tool_name(self) -> &'static str {
        TOOL_NAMES[self as usize]
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// `agent` or the stage name.
    pub mode: String,
    pub stages_run: Vec<Stage>,
    pub articles_ingested: usize,
    pub duplicates: usize,
    pub fetch_failures: usize,
    pub articles_summarized: usize,
    pub mentions_found: usize,
    pub undated_excluded: usize,
    pub outside_window: usize,
    pub llm_calls: usize,
    pub outputs: Vec<PathBuf>,
    pub transcript_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminated_reason: Option<TerminationReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_steps: Option<usize>,
}

impl RunReport {
    fn add_output(&mut self, path: PathBuf) {
        if !self.outputs.contains(&path) {
            self.outputs.push(path);
        }
    }
}

/// Counts completions that pass request validation.
struct Counting<'a> {
    inner: &'a dyn CompletionBackend,
    calls: Arc<AtomicUsize>,
}

impl CompletionBackend for Counting<'_> {
    fn dispatch(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.dispatch(request)
    }
}

/// Runs stages against one data directory and accumulates a report.
pub struct Pipeline<'a> {
    config: RunConfig,
    llm: &'a dyn CompletionBackend,
    transport: &'a dyn Transport,
    clock: &'a dyn Clock,
    calls: Arc<AtomicUsize>,
    report: RunReport,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        config: RunConfig,
        llm: &'a dyn CompletionBackend,
        transport: &'a dyn Transport,
        clock: &'a dyn Clock,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        for dir in [&config.data_dir, &config.output_dir] {
            fs::create_dir_all(dir).map_err(io_at(dir))?;
        }
        Ok(Self {
            config,
            llm,
            transport,
            clock,
            calls: Arc::new(AtomicUsize::new(0)),
            report: RunReport::default(),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn report(&self) -> &RunReport {
        &self.report
    }

    fn backend(&self) -> Counting<'a> {
        Counting {
            inner: self.llm,
            calls: Arc::clone(&self.calls),
        }
    }

    fn data(&self, name: &str) -> PathBuf {
        self.config.data_dir.join(name)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    fn require(&self, name: &str, what: &str) -> Result<PathBuf, PipelineError> {
        let p = self.data(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(PipelineError::MissingUpstream(what.into()))
        }
    }

    /// Run one stage. Returns a short plain-text account of what happened,
    /// free of absolute paths, used as the agent observation.
    pub fn run_stage(&mut self, stage: Stage) -> Result<String, PipelineError> {
        tracing::info!(%stage, "running stage");
        let message = match stage {
            Stage::Ingest => self.ingest(),
            Stage::Summarize => self.summarize(),
            Stage::Geoparse => self.geoparse(),
            Stage::Lda => self.lda(),
            Stage::Plot => self.plot(),
        }?;
        self.report.stages_run.push(stage);
        self.report.llm_calls = self.calls.load(Ordering::SeqCst);
        Ok(message)
    }

    fn ingest(&mut self) -> Result<String, PipelineError> {
        let mut store = ArticleStore::open(&self.config.data_dir)?;
        let before = store.len();
        let mut fetcher = Fetcher::new(self.transport, self.clock);
        let mut tally: BTreeMap<FetchStatus, usize> = BTreeMap::new();
        for source in &self.config.sources {
            let (urls, index_failures) = ingest::discover_source(source, &mut fetcher);
            let records = ingest::fetch_and_store(source, &urls, &mut store, &mut fetcher)?;
            for r in index_failures.iter().chain(&records) {
                if r.status != FetchStatus::Ok {
                    tracing::warn!(url = %r.url, status = ?r.status, detail = %r.detail, "fetch did not store an article");
                }
                *tally.entry(r.status).or_default() += 1;
            }
        }
        let new = store.len() - before;
        let duplicates = tally.get(&FetchStatus::Duplicate).copied().unwrap_or(0);
        let failed: usize = tally
            .iter()
            .filter(|(s, _)| !matches!(s, FetchStatus::Ok | FetchStatus::Duplicate))
            .map(|(_, n)| n)
            .sum();
        self.report.articles_ingested += new;
        self.report.duplicates += duplicates;
        self.report.fetch_failures += failed;
        Ok(format!(
            "Searched {} news sources and saved {new} new articles ({duplicates} already saved, {failed} failed). The store now holds {} articles.",
            self.config.sources.len(),
            store.len()
        ))
    }

    fn load_articles(&self) -> Result<Vec<ingest::Article>, PipelineError> {
        self.require(ARTICLES_FILE, "articles")?;
        Ok(ArticleStore::read_all(&self.config.data_dir)?)
    }

    fn summarize(&mut self) -> Result<String, PipelineError> {
        let articles = self.load_articles()?;
        let llm = self.backend();
        let summarizer = Summarizer::new(&llm, self.config.summarizer.clone(), self.config.summarizer_prompts()?)?;
        let mut store = SummaryStore::open(&self.config.data_dir)?;
        let r = summarize::summarize_all(&summarizer, &articles, &mut store, self.clock)?;
        self.report.articles_summarized += r.summarized;
        Ok(format!(
            "Summarized {} articles using {} model calls; {} were already summarized and {} had no usable text.",
            r.summarized, r.llm_calls, r.skipped_existing, r.skipped_empty
        ))
    }

    fn geoparse(&mut self) -> Result<String, PipelineError> {
        let articles = self.load_articles()?;
        let gazetteer = self.config.gazetteer()?;
        let mentions = geoparse::geoparse_corpus(&articles, &gazetteer);
        geoparse::write_mentions_csv(&self.data(MENTIONS_FILE), &mentions)?;
        self.report.mentions_found = mentions.len();
        let places = trends::place_counts(&mentions);
        let with_places = mentions.iter().map(|m| &m.article_url).collect::<std::collections::HashSet<_>>().len();
        let top: Vec<String> = places.iter().take(5).map(|p| format!("{} ({})", p.name, p.count)).collect();
        let mut msg = format!(
            "Found {} place mentions of {} distinct places in {with_places} of {} articles.",
            mentions.len(),
            places.len(),
            articles.len()
        );
        if !top.is_empty() {
            msg.push_str(&format!(" Most mentioned: {}.", top.join(", ")));
        }
        Ok(msg)
    }

    fn lda(&mut self) -> Result<String, PipelineError> {
        let articles = self.load_articles()?;
        let summaries_path = self.require(SummaryStore::FILE_NAME, "summaries")?;
        let summaries: BTreeMap<String, String> = SummaryStore::read(&summaries_path)?
            .into_iter()
            .map(|s| (s.url, s.summary))
            .collect();
        let docs: Vec<RawDocument> = articles
            .iter()
            .filter_map(|a| {
                summaries
                    .get(a.url.as_str())
                    .map(|s| RawDocument::new(a.url.as_str(), a.published_at, s.as_str()))
            })
            .collect();
        let corpus = preprocess(&docs)?;
        let model = LdaModel::fit(&corpus, &self.config.lda)?;
        model.save_json(&self.data(MODEL_FILE))?;
        let corpus_path = self.data(CORPUS_FILE);
        let json = serde_json::to_vec(&corpus).map_err(std::io::Error::from).map_err(io_at(&corpus_path))?;
        fs::write(&corpus_path, json).map_err(io_at(&corpus_path))?;

        for (name, write) in [
            ("topics.csv", &(|m: &LdaModel, _: &Corpus, p: &Path| m.write_topics_csv(p)) as &dyn Fn(&LdaModel, &Corpus, &Path) -> Result<(), LdaError>),
            ("doc_topics.csv", &|m: &LdaModel, c: &Corpus, p: &Path| m.write_doc_topics_csv(c, p)),
        ] {
            let path = self.out(name);
            write(&model, &corpus, &path)?;
            self.report.add_output(path);
        }

        let monthly = trends::monthly_counts(articles.iter().map(|a| a.published_at), self.config.window()?);
        self.report.undated_excluded = monthly.undated;
        self.report.outside_window = monthly.outside_window;
        let months: Vec<String> = monthly.counts.iter().map(|c| format!("{} {}", c.month, c.count)).collect();
        let topics: Vec<String> = model
            .ranked_topics()
            .iter()
            .enumerate()
            .map(|(rank, &k)| {
                let words: Vec<String> = model.top_words(k, self.config.lda.top_n).into_iter().map(|(w, _)| w).collect();
                format!("topic {}: {}", rank + 1, words.join(", "))
            })
            .collect();
        Ok(format!(
            "{} of {} articles carry a publication date ({} undated, {} outside the window). Articles per month: {}. Fitted {} topics over {} summaries: {}.",
            articles.len() - monthly.undated,
            articles.len(),
            monthly.undated,
            monthly.outside_window,
            months.join(", "),
            model.topics(),
            corpus.len(),
            topics.join("; ")
        ))
    }

    fn plot(&mut self) -> Result<String, PipelineError> {
        let model_path = self.require(MODEL_FILE, "lda model")?;
        let corpus_path = self.require(CORPUS_FILE, "lda corpus")?;
        let mentions_path = self.require(MENTIONS_FILE, "place mentions")?;
        let articles = self.load_articles()?;
        let model = LdaModel::load_json(&model_path)?;
        let corpus: Corpus = {
            let bytes = fs::read(&corpus_path).map_err(io_at(&corpus_path))?;
            serde_json::from_slice(&bytes)
                .map_err(std::io::Error::from)
                .map_err(io_at(&corpus_path))?
        };
        corpus.validate()?;
        let mentions = geoparse::read_mentions_csv(&mentions_path)?;
        let window = self.config.window()?;
        let viz = self.config.viz.clone();

        let monthly = trends::monthly_counts(articles.iter().map(|a| a.published_at), window);
        self.report.undated_excluded = monthly.undated;
        self.report.outside_window = monthly.outside_window;

        let map = self.out("map.svg");
        trends::emit_map_scatter(&mentions, &map, &viz).map_err(io_at(&map))?;
        let bars = self.out("monthly.svg");
        trends::emit_monthly_bar(&monthly.counts, &bars, &viz).map_err(io_at(&bars))?;
        let mut written = vec![map, bars];
        for (kind, name) in [(TrendKind::Count, "topics_count.svg"), (TrendKind::Weight, "topics_weight.svg")] {
            let series = trends::keyword_trends(&model, &corpus, self.config.lda.top_n, kind, window);
            let path = self.out(name);
            trends::emit_streamgraph(&series, &path, &viz).map_err(io_at(&path))?;
            written.push(path);
        }
        let names: Vec<String> = written
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect();
        for svg in written {
            let csv = svg.with_extension("csv");
            self.report.add_output(svg);
            self.report.add_output(csv);
        }
        Ok(format!(
            "Drew {} charts ({}), each with a CSV of the plotted values. {} articles without a date were left out of the time charts.",
            names.len(),
            names.join(", "),
            monthly.undated
        ))
    }

    fn write_report(&mut self) -> Result<RunReport, PipelineError> {
        self.report.llm_calls = self.calls.load(Ordering::SeqCst);
        let path = self.out(REPORT_FILE);
        let json = serde_json::to_string_pretty(&self.report).map_err(std::io::Error::from).map_err(io_at(&path))?;
        fs::write(&path, json + "\n").map_err(io_at(&path))?;
        Ok(self.report.clone())
    }

    /// Run exactly one stage and write `run_report.json`.
    pub fn cmd_stage(&mut self, stage: Stage) -> Result<RunReport, PipelineError> {
        self.report.mode = stage.name().into();
        self.run_stage(stage)?;
        self.write_report()
    }

    /// Answer `question` with the agent loop over the configured tools, then
    /// write `transcript.jsonl` and `run_report.json`.
    ///
    /// Stage failures inside the loop become `ERROR:` observations; only
    /// configuration and report I/O failures are returned as errors.
    pub fn cmd_agent(&mut self, question: &str) -> Result<RunReport, PipelineError> {
        self.report.mode = "agent".into();
        let agent_config = self.config.agent_config()?;
        let enabled = self.config.agent.tools.clone();
        let llm = self.backend();
        let transcript = {
            let cell = RefCell::new(&mut *self);
            let mut registry = ToolRegistry::new();
            for stage in Stage::ALL {
                if !enabled.iter().any(|t| t == stage.tool_name()) {
                    continue;
                }
                let cell = &cell;
                registry.register(tool_spec(stage), move |_input: &str| -> anyhow::Result<String> {
                    Ok(cell.borrow_mut().run_stage(stage)?)
                })?;
            }
            agent::run_loop(&agent_config, &mut registry, &llm, question)?
        };
        let path = self.out(TRANSCRIPT_FILE);
        transcript.write_jsonl(&path)?;
        self.report.transcript_path = Some(path);
        self.report.terminated_reason = Some(transcript.terminated_reason);
        self.report.final_answer = transcript.final_answer.clone();
        self.report.agent_steps = Some(transcript.steps.len());
        self.write_report()
    }
}

/// Name, description and input hint for the tool wrapping `stage`.
pub fn tool_spec(stage: Stage) -> ToolSpec {
    let (description, input) = match stage {
        Stage::Ingest => (
            "Search the configured news websites for recent articles about Alzheimer's disease and save them locally.",
            "a short search topic (the configured sources are always crawled)",
        ),
        Stage::Summarize => (
            "Summarize every saved news article that has no summary yet.",
            "anything; the input is ignored",
        ),
        Stage::Geoparse => (
            "Find the places mentioned in the saved articles and look up their coordinates.",
            "anything; the input is ignored",
        ),
        Stage::Lda => (
            "Count articles per publication month and fit a topic model over the summaries.",
            "anything; the input is ignored",
        ),
        Stage::Plot => (
            "Draw the place map, the monthly article chart and the topic keyword streamgraphs.",
            "anything; the input is ignored",
        ),
    };
    ToolSpec::new(stage.tool_name(), description, input).expect("tool names are valid")
}

/// Registry of all five tools with handlers that only echo their name.
/// Useful for rendering prompts and recording scripts.
pub fn inert_registry<'a>() -> ToolRegistry<'a> {
    let mut registry = ToolRegistry::new();
    for stage in Stage::ALL {
        registry
            .register(tool_spec(stage), move |_: &str| -> anyhow::Result<String> { Ok(stage.tool_name().to_string()) })
            .expect("distinct names");
    }
    registry
}
