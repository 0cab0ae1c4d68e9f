//! The "summarize news" stage: token-budgeted chunking and map-reduce
//! summaries.

mod chunk;

pub use chunk::{chunk_text, ChunkPlan};

use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::ingest::Article;
use crate::llm::{estimate_tokens, CompletionBackend, CompletionRequest, LlmError, DEFAULT_BYTES_PER_TOKEN};

pub const DEFAULT_MAP_PROMPT: &str = include_str!("../../prompts/map.txt");
pub const DEFAULT_REDUCE_PROMPT: &str = include_str!("../../prompts/reduce.txt");
pub const MAX_REDUCE_DEPTH: u32 = 5;
const TEXT_SLOT: &str = "{text}";
const SUMMARY_SEPARATOR: &str = "\n\n";

#[derive(Debug, Error)]
pub enum SummarizeError {
    #[error("article {0} has no text")]
    EmptyDocument(String),
    #[error("invalid summarizer configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("summary store: {0}")]
    Io(#[from] std::io::Error),
    #[error("summary store line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
}

/// A prompt file with exactly one `{text}` slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate(String);

impl PromptTemplate {
    pub fn new(template: impl Into<String>) -> Result<Self, SummarizeError> {
        let template = template.into();
        if template.matches(TEXT_SLOT).count() != 1 {
            return Err(SummarizeError::InvalidConfig(format!(
                "prompt template must contain `{TEXT_SLOT}` exactly once"
            )));
        }
        Ok(Self(template))
    }

    pub fn load(path: &Path) -> Result<Self, SummarizeError> {
        Self::new(fs::read_to_string(path)?)
    }

    pub fn render(&self, text: &str) -> String {
        self.0.replacen(TEXT_SLOT, text, 1)
    }

    /// Token cost of everything but the slot.
    pub fn overhead_tokens(&self) -> usize {
        estimate_tokens(&self.0.replacen(TEXT_SLOT, "", 1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarizerConfig {
    pub budget_tokens: usize,
    pub overlap_tokens: usize,
    pub context_tokens: usize,
    pub response_reserve: usize,
    pub model: String,
    pub temperature: f64,
}

impl Default for SummarizerConfig {
    fn default() -> Self {
        Self {
            budget_tokens: 3000,
            overlap_tokens: 100,
            context_tokens: 4096,
            response_reserve: 512,
            model: "gpt-4".into(),
            temperature: 0.0,
        }
    }
}

impl SummarizerConfig {
    pub fn prompt_limit(&self) -> usize {
        self.context_tokens.saturating_sub(self.response_reserve)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompts {
    pub map: PromptTemplate,
    pub reduce: PromptTemplate,
}

impl Default for Prompts {
    fn default() -> Self {
        Self {
            map: PromptTemplate::new(DEFAULT_MAP_PROMPT).expect("shipped map prompt"),
            reduce: PromptTemplate::new(DEFAULT_REDUCE_PROMPT).expect("shipped reduce prompt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleSummary {
    pub url: String,
    pub chunk_summaries: Vec<String>,
    pub summary: String,
    pub model: String,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub llm_calls: usize,
    #[serde(default)]
    pub reduce_depth: u32,
}

/// Map-reduce summarizer bound to one backend and one set of prompts.
pub struct Summarizer<'a> {
    llm: &'a dyn CompletionBackend,
    config: SummarizerConfig,
    prompts: Prompts,
}

struct Run {
    calls: usize,
    depth: u32,
}

fn truncate_bytes(text: &str, max_bytes: usize) -> &str {
    if text.len() <= max_bytes {
        return text;
    }
    let mut cut = max_bytes;
    while !text.is_char_boundary(cut) {
        cut -= 1;
    }
    &text[..cut]
}

impl<'a> Summarizer<'a> {
    pub fn new(llm: &'a dyn CompletionBackend, config: SummarizerConfig, prompts: Prompts) -> Result<Self, SummarizeError> {
        if config.budget_tokens <= config.overlap_tokens {
            return Err(SummarizeError::InvalidConfig(format!(
                "budget_tokens {} must exceed overlap_tokens {}",
                config.budget_tokens, config.overlap_tokens
            )));
        }
        for (name, template) in [("map", &prompts.map), ("reduce", &prompts.reduce)] {
            let needed = template.overhead_tokens() + config.budget_tokens;
            if needed > config.prompt_limit() {
                return Err(SummarizeError::InvalidConfig(format!(
                    "{name} prompt needs up to {needed} tokens but only {} fit beside the response reserve",
                    config.prompt_limit()
                )));
            }
        }
        Ok(Self { llm, config, prompts })
    }

    pub fn config(&self) -> &SummarizerConfig {
        &self.config
    }

    fn complete(&self, template: &PromptTemplate, text: &str, run: &mut Run) -> Result<String, LlmError> {
        let prompt = template.render(text);
        debug_assert!(estimate_tokens(&prompt) <= self.config.prompt_limit());
        let mut request = CompletionRequest::user_prompt(self.config.model.clone(), prompt);
        request.temperature = self.config.temperature;
        run.calls += 1;
        Ok(self.llm.complete(&request)?.trim().to_string())
    }

    fn reduce(&self, summaries: &[String], run: &mut Run) -> Result<String, LlmError> {
        let budget = self.config.budget_tokens;
        let joined = summaries.join(SUMMARY_SEPARATOR);
        if estimate_tokens(&joined) <= budget {
            return self.complete(&self.prompts.reduce, &joined, run);
        }
        if run.depth >= MAX_REDUCE_DEPTH {
            tracing::warn!(depth = run.depth, "reduce depth cap reached; truncating partial summaries");
            let clipped = truncate_bytes(&joined, budget * DEFAULT_BYTES_PER_TOKEN);
            return self.complete(&self.prompts.reduce, clipped, run);
        }
        run.depth += 1;
        let plan = chunk_text(&joined, budget, 0);
        let partial = plan
            .texts(&joined)
            .into_iter()
            .map(|group| self.complete(&self.prompts.reduce, group, run))
            .collect::<Result<Vec<_>, _>>()?;
        self.reduce(&partial, run)
    }

    pub fn summarize_text(&self, url: &str, text: &str, created_at: DateTime<Utc>) -> Result<ArticleSummary, SummarizeError> {
        if text.trim().is_empty() {
            return Err(SummarizeError::EmptyDocument(url.to_string()));
        }
        let plan = chunk_text(text, self.config.budget_tokens, self.config.overlap_tokens);
        let mut run = Run { calls: 0, depth: 0 };
        let chunk_summaries = plan
            .texts(text)
            .into_iter()
            .map(|chunk| self.complete(&self.prompts.map, chunk, &mut run))
            .collect::<Result<Vec<_>, _>>()?;
        let summary = self.reduce(&chunk_summaries, &mut run)?;
        tracing::debug!(url, chunks = plan.len(), calls = run.calls, depth = run.depth, "summarized");
        Ok(ArticleSummary {
            url: url.to_string(),
            chunk_summaries,
            summary,
            model: self.config.model.clone(),
            created_at,
            llm_calls: run.calls,
            reduce_depth: run.depth,
        })
    }

    pub fn summarize_article(&self, article: &Article, clock: &dyn Clock) -> Result<ArticleSummary, SummarizeError> {
        self.summarize_text(article.url.as_str(), &article.text, clock.now_utc())
    }
}

/// Line-delimited summaries keyed by URL.
#[derive(Debug)]
pub struct SummaryStore {
    path: PathBuf,
    urls: HashSet<String>,
}

impl SummaryStore {
    pub const FILE_NAME: &'static str = "summaries.jsonl";

    pub fn open(dir: &Path) -> Result<Self, SummarizeError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(Self::FILE_NAME);
        let urls = Self::read(&path)?.into_iter().map(|s| s.url).collect();
        Ok(Self { path, urls })
    }

    pub fn read(path: &Path) -> Result<Vec<ArticleSummary>, SummarizeError> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let complete = match text.rfind('\n') {
            Some(i) => &text[..=i],
            None => "",
        };
        complete
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| SummarizeError::Corrupt {
                    line: i + 1,
                    reason: e.to_string(),
                })
            })
            .collect()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, url: &str) -> bool {
        self.urls.contains(url)
    }

    pub fn len(&self) -> usize {
        self.urls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.urls.is_empty()
    }

    pub fn append(&mut self, summary: &ArticleSummary) -> Result<(), SummarizeError> {
        let mut line = serde_json::to_string(summary).map_err(|e| SummarizeError::Corrupt {
            line: self.urls.len() + 1,
            reason: e.to_string(),
        })?;
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        f.write_all(line.as_bytes())?;
        self.urls.insert(summary.url.clone());
        Ok(())
    }

    pub fn load_all(&self) -> Result<Vec<ArticleSummary>, SummarizeError> {
        Self::read(&self.path)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummarizeReport {
    pub summarized: usize,
    pub skipped_existing: usize,
    pub skipped_empty: usize,
    pub llm_calls: usize,
}

/// Summarize every article not yet in the store. Backend failures abort the
/// batch; summaries written before the failure are kept.
pub fn summarize_all(
    summarizer: &Summarizer<'_>,
    articles: &[Article],
    store: &mut SummaryStore,
    clock: &dyn Clock,
) -> Result<SummarizeReport, SummarizeError> {
    let mut report = SummarizeReport::default();
    for article in articles {
        if store.contains(article.url.as_str()) {
            report.skipped_existing += 1;
            continue;
        }
        match summarizer.summarize_article(article, clock) {
            Ok(summary) => {
                report.llm_calls += summary.llm_calls;
                store.append(&summary)?;
                report.summarized += 1;
            }
            Err(SummarizeError::EmptyDocument(url)) => {
                tracing::warn!(%url, "skipping article without text");
                report.skipped_empty += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::llm::{RecordingBackend, ReplayBackend};
    use chrono::TimeZone;
    use std::sync::Mutex;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2023, 6, 1, 0, 0, 0).unwrap()
    }

    /// Echoes a fixed-size reply and remembers prompt sizes.
    struct Fixed {
        reply: String,
        prompt_tokens: Mutex<Vec<usize>>,
    }

    impl Fixed {
        fn new(reply_bytes: usize) -> Self {
            Self {
                reply: "s".repeat(reply_bytes),
                prompt_tokens: Mutex::new(Vec::new()),
            }
        }
    }

    impl CompletionBackend for Fixed {
        fn dispatch(&self, request: &CompletionRequest) -> Result<String, LlmError> {
            self.prompt_tokens.lock().unwrap().push(estimate_tokens(&request.prompt_text()));
            Ok(self.reply.clone())
        }
    }

    fn sentences(n: usize, bytes: usize) -> String {
        (0..n).map(|_| format!("{}. ", "w".repeat(bytes - 2))).collect()
    }

    fn small_config(budget: usize) -> SummarizerConfig {
        SummarizerConfig {
            budget_tokens: budget,
            overlap_tokens: 0,
            ..SummarizerConfig::default()
        }
    }

    #[test]
    fn one_chunk_article_costs_two_calls() {
        let llm = RecordingBackend::new(ReplayBackend::sequence(["chunk summary", "final summary"]));
        let s = Summarizer::new(&llm, SummarizerConfig::default(), Prompts::default()).unwrap();
        let out = s.summarize_text("u", "Memory clinics expanded. Waiting lists fell.", t0()).unwrap();
        assert_eq!(llm.calls(), 2);
        assert_eq!(out.chunk_summaries, ["chunk summary"]);
        assert_eq!(out.summary, "final summary");
        assert!(llm.requests()[0].prompt_text().contains("Memory clinics expanded."));
        assert!(llm.requests()[1].prompt_text().contains("chunk summary"));
    }

    #[test]
    fn four_chunk_article_costs_five_calls() {
        let llm = Fixed::new(30);
        let s = Summarizer::new(&llm, small_config(350), Prompts::default()).unwrap();
        let out = s.summarize_text("u", &sentences(10, 300), t0()).unwrap();
        assert_eq!(out.chunk_summaries.len(), 4);
        assert_eq!(out.llm_calls, 5);
        assert_eq!(out.reduce_depth, 0);
    }

    #[test]
    fn empty_text_makes_no_calls() {
        let llm = RecordingBackend::new(ReplayBackend::sequence(Vec::<String>::new()));
        let s = Summarizer::new(&llm, SummarizerConfig::default(), Prompts::default()).unwrap();
        assert!(matches!(s.summarize_text("u", "  \n", t0()), Err(SummarizeError::EmptyDocument(_))));
        assert_eq!(llm.calls(), 0);
    }

    #[test]
    fn long_partial_summaries_are_reduced_recursively() {
        // 20 chunks of ~100 tokens each summarized into ~60 tokens: joined
        // they exceed the 350 budget, so groups are combined first
        let llm = Fixed::new(180);
        let s = Summarizer::new(&llm, small_config(350), Prompts::default()).unwrap();
        let out = s.summarize_text("u", &sentences(60, 300), t0()).unwrap();
        assert_eq!(out.chunk_summaries.len(), 20);
        assert!(out.reduce_depth >= 1 && out.reduce_depth <= MAX_REDUCE_DEPTH);
        let limit = s.config().prompt_limit();
        assert!(llm.prompt_tokens.lock().unwrap().iter().all(|&t| t <= limit));
    }

    #[test]
    fn non_shrinking_reduce_stops_at_the_depth_cap() {
        // replies as large as the budget never shrink
        let llm = Fixed::new(340 * 3);
        let s = Summarizer::new(&llm, small_config(350), Prompts::default()).unwrap();
        let out = s.summarize_text("u", &sentences(8, 300), t0()).unwrap();
        assert_eq!(out.reduce_depth, MAX_REDUCE_DEPTH);
        assert!(llm.prompt_tokens.lock().unwrap().iter().all(|&t| t <= s.config().prompt_limit()));
    }

    #[test]
    fn budget_must_leave_room_for_the_template() {
        let llm = Fixed::new(1);
        let cfg = SummarizerConfig {
            budget_tokens: 3584,
            ..SummarizerConfig::default()
        };
        assert!(matches!(
            Summarizer::new(&llm, cfg, Prompts::default()),
            Err(SummarizeError::InvalidConfig(_))
        ));
        assert!(PromptTemplate::new("no slot").is_err());
    }

    #[test]
    fn replay_makes_summaries_deterministic() {
        let text = sentences(10, 300);
        let run = || {
            let script: Vec<String> = (0..5).map(|i| format!("part {i}")).collect();
            let llm = ReplayBackend::sequence(script);
            let s = Summarizer::new(&llm, small_config(350), Prompts::default()).unwrap();
            s.summarize_text("u", &text, t0()).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn store_skips_already_summarized_articles() {
        use crate::ingest::Article;
        let dir = tempfile::tempdir().unwrap();
        let article = |n: u32, text: &str| Article {
            url: url::Url::parse(&format!("https://x.org/{n}")).unwrap(),
            source_id: "x".into(),
            title: String::new(),
            raw_html: vec![],
            text: text.into(),
            published_at: None,
            fetched_at: t0(),
        };
        let articles = vec![article(1, "First story. Done."), article(2, ""), article(3, "Third story.")];
        let clock = ManualClock::new(t0());
        let llm = Fixed::new(10);
        let s = Summarizer::new(&llm, SummarizerConfig::default(), Prompts::default()).unwrap();

        let mut store = SummaryStore::open(dir.path()).unwrap();
        let first = summarize_all(&s, &articles, &mut store, &clock).unwrap();
        assert_eq!((first.summarized, first.skipped_empty, first.llm_calls), (2, 1, 4));

        let mut store = SummaryStore::open(dir.path()).unwrap();
        let second = summarize_all(&s, &articles, &mut store, &clock).unwrap();
        assert_eq!((second.summarized, second.skipped_existing), (0, 2));
        assert_eq!(store.load_all().unwrap().len(), 2);
    }
}
